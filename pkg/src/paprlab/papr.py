"""PAPR measurement, seeded Monte Carlo campaigns and empirical CCDFs."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import SystemLayout
from .waveform import SampledSignal, WaveformOptions, synthesize_frames

# Trials are always processed in blocks of this size, whatever the worker
# count, so every block is computed identically in any execution order.
CHUNK_TRIALS = 64

DEFAULT_GRID_DB = np.round(np.arange(4.0, 13.0 + 1e-9, 0.1), 10)

CURVE_KINDS = (
    "empirical",
    "proposed",
    "ochiai",
    "extreme_value",
    "power_weighted",
    "nyquist",
    "empirical_2p8",
)


@dataclass(frozen=True)
class PaprSample:
    gamma: float

    @property
    def gamma_db(self) -> float:
        return 10.0 * np.log10(self.gamma)


@dataclass
class CcdfCurve:
    gamma_db_grid: np.ndarray
    prob: np.ndarray
    kind: str
    trials: int | None = None

    def __post_init__(self):
        self.gamma_db_grid = np.asarray(self.gamma_db_grid, dtype=float)
        self.prob = np.asarray(self.prob, dtype=float)
        if self.kind not in CURVE_KINDS:
            raise ValueError(f"unknown curve kind {self.kind!r}")
        if self.gamma_db_grid.shape != self.prob.shape:
            raise ValueError("grid and probabilities differ in length")


@dataclass
class CampaignResult:
    """Per-trial statistics in trial-index order."""

    gamma: np.ndarray
    levels: np.ndarray = field(default_factory=lambda: np.empty(0))
    upcrossings: np.ndarray = field(default_factory=lambda: np.empty((0, 0), dtype=np.int64))
    mean_power: np.ndarray = field(default_factory=lambda: np.empty(0))


def _samples_of(frame) -> np.ndarray:
    return frame.samples if isinstance(frame, SampledSignal) else np.asarray(frame)


def measure_papr(frame, average_power: float = 1.0) -> PaprSample:
    """Peak instantaneous power over the whole frame (CP included) / average_power."""
    z = _samples_of(frame)
    if z.size == 0:
        raise ValueError("empty frame")
    if average_power == 0:
        raise ZeroDivisionError("average power is zero")
    peak = float(np.max(z.real**2 + z.imag**2))
    return PaprSample(peak / average_power)


def count_level_upcrossings(frame, level: float) -> int:
    """Number of m with |z[m]| < level <= |z[m+1]|."""
    if level <= 0:
        raise ValueError("level must be positive")
    env = np.abs(_samples_of(frame))
    return int(np.count_nonzero((env[:-1] < level) & (env[1:] >= level)))


def _upcrossings_batch(env: np.ndarray, levels: np.ndarray) -> np.ndarray:
    out = np.empty((env.shape[0], len(levels)), dtype=np.int64)
    for k, r in enumerate(levels):
        out[:, k] = np.count_nonzero((env[:, :-1] < r) & (env[:, 1:] >= r), axis=1)
    return out


def _chunk(args) -> CampaignResult:
    layout, seed, start, stop, options, oversample, levels = args
    z = synthesize_frames(layout, seed, range(start, stop), options, oversample)
    power = z.real**2 + z.imag**2
    gamma = power.max(axis=1)
    if len(levels):
        crossings = _upcrossings_batch(np.sqrt(power), levels)
    else:
        crossings = np.empty((stop - start, 0), dtype=np.int64)
    return CampaignResult(gamma, levels, crossings, power.mean(axis=1))


def resolve_workers(workers: int | None = None) -> int:
    """Explicit count, else PAPRLAB_THREADS (0 = auto), else 1."""
    if workers is None:
        env = os.environ.get("PAPRLAB_THREADS", "").strip()
        workers = int(env) if env else 1
    if workers <= 0:
        workers = os.cpu_count() or 1
    return workers


def run_campaign(
    layout: SystemLayout,
    trials: int,
    seed: int,
    *,
    options: WaveformOptions | None = None,
    oversample: int | None = None,
    levels=(),
    workers: int | None = None,
) -> CampaignResult:
    """Simulate ``trials`` frames; trial t uses the stream keyed by (seed, t)."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    levels = np.asarray(levels, dtype=float)
    tasks = [
        (layout, seed, s, min(s + CHUNK_TRIALS, trials), options, oversample, levels)
        for s in range(0, trials, CHUNK_TRIALS)
    ]
    n_workers = min(resolve_workers(workers), len(tasks))
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            parts = list(pool.map(_chunk, tasks))
    else:
        parts = [_chunk(t) for t in tasks]
    return CampaignResult(
        gamma=np.concatenate([p.gamma for p in parts]),
        levels=levels,
        upcrossings=np.concatenate([p.upcrossings for p in parts]),
        mean_power=np.concatenate([p.mean_power for p in parts]),
    )


def run_monte_carlo(
    layout: SystemLayout,
    trials: int,
    seed: int,
    *,
    options: WaveformOptions | None = None,
    oversample: int | None = None,
    workers: int | None = None,
) -> np.ndarray:
    """Linear PAPR of each trial (analytical P_av = 1), in trial-index order."""
    return run_campaign(layout, trials, seed, options=options, oversample=oversample, workers=workers).gamma


def _gamma_array(samples) -> np.ndarray:
    if len(samples) and isinstance(samples[0], PaprSample):
        return np.array([s.gamma for s in samples], dtype=float)
    return np.asarray(samples, dtype=float)


def empirical_ccdf(samples, gamma_db_grid=DEFAULT_GRID_DB) -> CcdfCurve:
    """Fraction of samples whose PAPR (dB) strictly exceeds each grid point."""
    g = _gamma_array(samples)
    if g.size == 0:
        raise ValueError("no samples")
    grid = np.asarray(gamma_db_grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly ascending")
    db = np.sort(10.0 * np.log10(g))
    above = db.size - np.searchsorted(db, grid, side="right")
    return CcdfCurve(grid, above / db.size, "empirical", trials=int(db.size))


def papr_at_probability(samples, prob: float) -> float:
    """PAPR level (dB) exceeded by a fraction ``prob`` of the samples."""
    db = 10.0 * np.log10(_gamma_array(samples))
    return float(np.quantile(db, 1.0 - prob))


def curve_crossing_db(curve: CcdfCurve, prob: float) -> float:
    """Grid position (dB) where a tabulated CCDF falls through ``prob``.

    Interpolates linearly in log10(prob) between neighbouring grid points;
    NaN when the curve never straddles ``prob``.
    """
    p = curve.prob
    idx = np.nonzero((p[:-1] >= prob) & (p[1:] < prob))[0]
    if idx.size == 0:
        return float("nan")
    k = idx[0]
    lo, hi = p[k], p[k + 1]
    if hi <= 0:
        return float(curve.gamma_db_grid[k + 1])
    t = (np.log10(lo) - np.log10(prob)) / (np.log10(lo) - np.log10(hi))
    return float(curve.gamma_db_grid[k] + t * (curve.gamma_db_grid[k + 1] - curve.gamma_db_grid[k]))
