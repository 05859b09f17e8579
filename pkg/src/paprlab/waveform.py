"""Oversampled complex-baseband synthesis of mixed-numerology LCM frames.

Sampling grid
-------------
All subbands share one clock.  With ``K = layout.grid_size`` (the smallest
integer >= B/f1 that every f_i/f1 numerator divides) the J-times oversampled
rate is ``Fs = J*K*f1``.  A subband-i symbol then has ``J*K/(f_i/f1)`` useful
samples, and a frame holds ``J*(K + round(cp*K))`` samples.  CP sample counts
are fixed at J=1 and scaled by J, so the J=1 sample instants are a subset of
every oversampled grid.

In synchronized mode the base CP budget ``round(cp*K)`` is split over the
``n_i`` symbols of subband i (remainder to the earliest symbols) so every
subband fills the frame exactly.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .config import ASYNCHRONOUS, SystemLayout

DUMP_MAGIC = b"MNPL"
DUMP_VERSION = 1
_DUMP_HEADER = struct.Struct("<4sIQd")


@dataclass(frozen=True)
class InfoSymbolBlock:
    symbols: np.ndarray
    constellation_order: int


@dataclass(frozen=True)
class SampledSignal:
    samples: np.ndarray
    sample_rate_hz: float
    duration_s: float
    layout: SystemLayout | None = None

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class FilterSpec:
    """Per-subband windowed-sinc lowpass, shifted to the subband centre.

    Passband width is ``B_i + transition_spacings * f_i``.
    """

    order: int = 512
    window: str = "hann"
    transition_spacings: float = 2.0


@dataclass(frozen=True)
class WaveformOptions:
    filter: FilterSpec | None = None
    window_rolloff: int = 0  # raised-cosine taper length at J=1, per symbol edge


# -- randomness ------------------------------------------------------------

def trial_stream(seed: int, trial: int) -> np.random.Generator:
    """Counter-based generator keyed injectively by (seed, trial)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(trial),))
    return np.random.Generator(np.random.Philox(ss))


def constellation(order: int) -> np.ndarray:
    """Square QAM points scaled to unit average power."""
    if order not in (4, 16, 64):
        raise ValueError(f"unsupported constellation order {order}")
    side = math.isqrt(order)
    levels = np.arange(-(side - 1), side, 2, dtype=float)
    pts = (levels[:, None] + 1j * levels[None, :]).ravel()
    return pts / np.sqrt(2.0 * (order - 1) / 3.0)


def draw_info_symbols(order: int, count: int, stream: np.random.Generator) -> InfoSymbolBlock:
    """i.i.d. uniform QAM symbols with E|A|^2 = 1.

    In-phase and quadrature levels are drawn independently, which keeps
    real and imaginary parts uncorrelated.
    """
    if order not in (4, 16, 64):
        raise ValueError(f"unsupported constellation order {order}")
    if count < 1:
        raise ValueError("count must be >= 1")
    side = math.isqrt(order)
    scale = np.sqrt(2.0 * (order - 1) / 3.0)
    idx = stream.integers(0, side, size=(2, count))
    levels = 2.0 * idx - (side - 1)
    return InfoSymbolBlock((levels[0] + 1j * levels[1]) / scale, order)


# -- per-subband synthesis -------------------------------------------------

def _offset_phase(layout: SystemLayout, i: int, cp: int, useful: int, oversample: int) -> np.ndarray:
    """exp(j 2 pi delta_i tau) over tau = (-cp .. useful-1) / Fs, reduced exactly."""
    off = layout.offset_units[i]
    period = off.denominator * oversample * layout.grid_size
    m = np.arange(-cp, useful, dtype=np.int64)
    turns = np.mod(off.numerator * m, period) / period
    return np.exp(2j * np.pi * turns)


def _useful_parts(layout: SystemLayout, i: int, symbols: np.ndarray, oversample: int) -> np.ndarray:
    """IFFT-synthesized useful parts; ``symbols`` has shape (..., N_i)."""
    n = layout.counts[i]
    size = layout.useful_samples(i, oversample)
    grid = np.zeros(symbols.shape[:-1] + (size,), dtype=complex)
    grid[..., :n] = symbols
    scale = size * np.sqrt(layout.powers[i] / n)
    return np.fft.ifft(grid, axis=-1) * scale


def _raised_cosine_edges(rolloff: int) -> np.ndarray:
    k = np.arange(1, rolloff + 1)
    return 0.5 * (1.0 - np.cos(np.pi * k / (rolloff + 1)))


def apply_edge_window(samples: np.ndarray, rolloff_samples: int, cp_samples: int | None = None) -> np.ndarray:
    """Raised-cosine taper over the first and last ``rolloff_samples`` of a symbol.

    Works along the last axis.  ``cp_samples`` (when given) bounds the taper:
    both edges together must fit inside the CP.
    """
    samples = np.asarray(samples)
    if rolloff_samples < 0:
        raise ValueError("rolloff must be non-negative")
    if cp_samples is not None and 2 * rolloff_samples > cp_samples:
        raise ValueError(f"rolloff {rolloff_samples} too long for CP of {cp_samples} samples")
    if 2 * rolloff_samples > samples.shape[-1]:
        raise ValueError("rolloff too long for symbol")
    if rolloff_samples == 0:
        return samples.copy()
    ramp = _raised_cosine_edges(rolloff_samples)
    out = samples.copy()
    out[..., :rolloff_samples] *= ramp
    out[..., -rolloff_samples:] *= ramp[::-1]
    return out


def _symbols_with_cp(
    layout: SystemLayout,
    i: int,
    symbols: np.ndarray,
    cps: list[int],
    oversample: int,
    rolloff: int = 0,
) -> np.ndarray:
    """Concatenate CP-extended symbols.  ``symbols``: (batch, nsym, N_i)."""
    useful = _useful_parts(layout, i, symbols, oversample)
    size = useful.shape[-1]
    pieces = []
    phases: dict[int, np.ndarray] = {}
    for u, cp in enumerate(cps):
        if cp not in phases:
            phases[cp] = _offset_phase(layout, i, cp, size, oversample)
        x = useful[:, u, :]
        sym = np.concatenate([x[:, size - cp:], x], axis=-1) * phases[cp] if cp else x * phases[cp]
        if rolloff:
            sym = apply_edge_window(sym, rolloff, cp)
        pieces.append(sym)
    return np.concatenate(pieces, axis=-1)


def synthesize_subband_symbol(
    i: int,
    layout: SystemLayout,
    block: InfoSymbolBlock | np.ndarray,
    oversample: int | None = None,
    cp_samples: int | None = None,
) -> SampledSignal:
    """One subband-i OFDM symbol including its CP.

    ``cp_samples`` is counted at J=1; by default ``round(cp_fraction * K/r_i)``.
    """
    j = layout.oversample if oversample is None else oversample
    if j < 1:
        raise ValueError("oversample must be >= 1")
    symbols = np.asarray(block.symbols if isinstance(block, InfoSymbolBlock) else block, dtype=complex)
    if symbols.shape != (layout.counts[i],):
        raise ValueError(f"expected {layout.counts[i]} symbols for subband {i}, got {symbols.shape}")
    base_useful = layout.useful_samples(i, 1)
    cp = round(layout.cp_fraction * base_useful) if cp_samples is None else cp_samples
    x = _symbols_with_cp(layout, i, symbols[None, None, :], [j * cp], j)[0]
    fs = layout.sample_rate_hz(j)
    return SampledSignal(x, fs, len(x) / fs, layout)


def _sync_cp_split(layout: SystemLayout, i: int) -> list[int]:
    n = int(layout.symbols_per_frame[i])
    q, rem = divmod(layout.cp_samples, n)
    return [q + (1 if u < rem else 0) for u in range(n)]


def _async_geometry(layout: SystemLayout, i: int) -> tuple[int, int, int]:
    """(cp, symbol length, symbols generated) at J=1 for an asynchronous subband."""
    useful = layout.useful_samples(i, 1)
    cp = round(layout.cp_fraction * useful)
    length = useful + cp
    frame = layout.frame_samples(1)
    return cp, length, -(-frame // length) + 1


def design_subband_filter(layout: SystemLayout, i: int, spec: FilterSpec, oversample: int | None = None) -> np.ndarray:
    """Complex taps: Hann-windowed sinc (unit DC gain) shifted to the subband centre."""
    j = layout.oversample if oversample is None else oversample
    fs = layout.sample_rate_hz(j)
    f1 = layout.base_spacing_hz
    width = (float(layout.bandwidth_units[i]) + spec.transition_spacings * float(layout.spacing_ratio[i])) * f1
    cutoff = min(width / 2.0, 0.5 * fs * (1 - 1e-9))
    taps = sps.firwin(spec.order + 1, cutoff, window=spec.window, fs=fs)
    centre = (float(layout.offset_units[i]) + float(layout.bandwidth_units[i]) / 2.0) * f1
    n = np.arange(spec.order + 1) - spec.order / 2.0
    return taps * np.exp(2j * np.pi * centre * n / fs)


def apply_subband_filter(samples: np.ndarray | SampledSignal, taps: np.ndarray) -> np.ndarray | SampledSignal:
    """Linear convolution cropped back to the input window (group delay removed)."""
    sig = samples.samples if isinstance(samples, SampledSignal) else np.asarray(samples)
    if len(taps) >= sig.shape[-1]:
        raise ValueError(f"filter of {len(taps)} taps is longer than the frame ({sig.shape[-1]} samples)")
    h = np.asarray(taps).reshape((1,) * (sig.ndim - 1) + (-1,))
    out = sps.fftconvolve(sig, h, mode="same", axes=-1)
    if isinstance(samples, SampledSignal):
        return SampledSignal(out, samples.sample_rate_hz, samples.duration_s, samples.layout)
    return out


# -- frames ---------------------------------------------------------------

def _draw_trial(layout: SystemLayout, stream: np.random.Generator, oversample: int):
    """Consume one trial's randomness: per subband (symbols, start offset)."""
    out = []
    for i, n in enumerate(layout.counts):
        if layout.mode == ASYNCHRONOUS:
            _, length, nsym = _async_geometry(layout, i)
        else:
            nsym, length = int(layout.symbols_per_frame[i]), 0
        block = draw_info_symbols(layout.spec.qam_order, nsym * n, stream)
        start = int(stream.integers(0, oversample * length)) if layout.mode == ASYNCHRONOUS else 0
        out.append((block.symbols.reshape(nsym, n), start))
    return out


def _subband_batch(
    layout: SystemLayout,
    i: int,
    symbols: np.ndarray,
    starts: np.ndarray,
    oversample: int,
    options: WaveformOptions,
) -> np.ndarray:
    frame = layout.frame_samples(oversample)
    if layout.mode == ASYNCHRONOUS:
        cp, _, nsym = _async_geometry(layout, i)
        cps = [oversample * cp] * nsym
    else:
        cps = [oversample * c for c in _sync_cp_split(layout, i)]
    x = _symbols_with_cp(layout, i, symbols, cps, oversample, oversample * options.window_rolloff)
    if options.filter is not None:
        x = apply_subband_filter(x, design_subband_filter(layout, i, options.filter, oversample))
    if layout.mode == ASYNCHRONOUS:
        idx = starts[:, None] + np.arange(frame)[None, :]
        return np.take_along_axis(x, idx, axis=-1)
    return x


def synthesize_subband_frames(
    layout: SystemLayout,
    seed: int,
    trials,
    options: WaveformOptions | None = None,
    oversample: int | None = None,
) -> list[np.ndarray]:
    """Per-subband frame contributions, each of shape (len(trials), frame_samples)."""
    j = layout.oversample if oversample is None else oversample
    options = options or WaveformOptions()
    draws = [_draw_trial(layout, trial_stream(seed, t), j) for t in trials]
    return _assemble(layout, draws, j, options)


def _assemble(layout, draws, oversample, options) -> list[np.ndarray]:
    parts = []
    for i in range(layout.num_subbands):
        symbols = np.stack([d[i][0] for d in draws])
        starts = np.array([d[i][1] for d in draws], dtype=np.int64)
        parts.append(_subband_batch(layout, i, symbols, starts, oversample, options))
    return parts


def synthesize_frames(
    layout: SystemLayout,
    seed: int,
    trials,
    options: WaveformOptions | None = None,
    oversample: int | None = None,
) -> np.ndarray:
    """Composite frames for the given trial indices, shape (len(trials), frame_samples)."""
    parts = synthesize_subband_frames(layout, seed, trials, options, oversample)
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    return total


def synthesize_lcm_frame(
    layout: SystemLayout,
    stream: np.random.Generator,
    options: WaveformOptions | None = None,
    oversample: int | None = None,
) -> SampledSignal:
    j = layout.oversample if oversample is None else oversample
    parts = _assemble(layout, [_draw_trial(layout, stream, j)], j, options or WaveformOptions())
    z = np.sum([p[0] for p in parts], axis=0)
    return SampledSignal(z, layout.sample_rate_hz(j), layout.frame_duration_s, layout)


# -- debug dumps ------------------------------------------------------------

def write_frame_dump(path: str | Path, frame: SampledSignal) -> None:
    """Little-endian: 'MNPL', u32 version, u64 count, f64 rate, then (re, im) f64 pairs."""
    z = np.asarray(frame.samples, dtype=np.complex128)
    header = _DUMP_HEADER.pack(DUMP_MAGIC, DUMP_VERSION, z.size, float(frame.sample_rate_hz))
    body = np.empty(2 * z.size, dtype="<f8")
    body[0::2] = z.real
    body[1::2] = z.imag
    Path(path).write_bytes(header + body.tobytes())


def read_frame_dump(path: str | Path) -> SampledSignal:
    raw = Path(path).read_bytes()
    if len(raw) < _DUMP_HEADER.size:
        raise ValueError("truncated frame dump")
    magic, version, count, rate = _DUMP_HEADER.unpack_from(raw)
    if magic != DUMP_MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != DUMP_VERSION:
        raise ValueError(f"unsupported dump version {version}")
    body = np.frombuffer(raw, dtype="<f8", offset=_DUMP_HEADER.size)
    if body.size != 2 * count:
        raise ValueError(f"expected {count} samples, found {body.size // 2}")
    z = body[0::2] + 1j * body[1::2]
    return SampledSignal(z, rate, count / rate if rate else 0.0)
