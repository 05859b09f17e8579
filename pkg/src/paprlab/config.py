"""System description for mixed-numerology OFDM frames.

Everything frequency-like is kept internally as an exact ``Fraction`` in
multiples of the base subcarrier spacing f1 and only converted to Hz at the
boundary, so subband offsets accumulate without floating drift.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence

SYNCHRONIZED = "synchronized"
ASYNCHRONOUS = "asynchronous"
MODES = (SYNCHRONIZED, ASYNCHRONOUS)
QAM_ORDERS = (4, 16, 64)

POWER_SUM_TOL = 1e-12


class ConfigError(ValueError):
    """Malformed or inconsistent configuration.

    ``key`` names the offending JSON path when the error comes from parsing.
    """

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


def as_fraction(value: Any) -> Fraction:
    """Exact rational from an int, float, Fraction or a string like ``"5/4"``.

    Floats go through their shortest repr so ``0.07`` becomes ``7/100``.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("boolean is not a number")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"non-finite value {value!r}")
        return Fraction(repr(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"cannot interpret {value!r} as a rational number")


def _is_power_of_two(r: Fraction) -> bool:
    return r.denominator == 1 and r.numerator >= 1 and (r.numerator & (r.numerator - 1)) == 0


@dataclass(frozen=True)
class NumerologySpec:
    spacing_ratio: Fraction  # f_i / f1
    cp_fraction: Fraction = Fraction(7, 100)  # T_CP,i / T_sys,i

    def __post_init__(self):
        object.__setattr__(self, "spacing_ratio", as_fraction(self.spacing_ratio))
        object.__setattr__(self, "cp_fraction", as_fraction(self.cp_fraction))


@dataclass(frozen=True)
class SubbandSpec:
    numerology: NumerologySpec
    subcarrier_count: int
    power: float
    guard_after: Fraction = Fraction(0)  # in multiples of f1

    def __post_init__(self):
        object.__setattr__(self, "guard_after", as_fraction(self.guard_after))


@dataclass(frozen=True)
class SystemSpec:
    base_spacing_hz: float
    subbands: tuple[SubbandSpec, ...]
    mode: str = SYNCHRONIZED
    qam_order: int = 16
    oversample: int = 8
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "subbands", tuple(self.subbands))

    def with_powers(self, powers: Sequence[float]) -> "SystemSpec":
        if len(powers) != len(self.subbands):
            raise ValueError("one power per subband required")
        subbands = tuple(replace(sb, power=float(p)) for sb, p in zip(self.subbands, powers))
        return replace(self, subbands=subbands)


def make_spec(
    counts: Sequence[int],
    ratios: Sequence[Any] | None = None,
    powers: Sequence[float] | None = None,
    guards: Sequence[Any] | Any = 20,
    *,
    cp_fraction: Any = Fraction(7, 100),
    base_spacing_hz: float = 15e3,
    mode: str = SYNCHRONIZED,
    qam_order: int = 16,
    oversample: int = 8,
    seed: int = 0,
) -> SystemSpec:
    """Shorthand constructor used by tests, experiments and the CLI defaults.

    ``guards`` is either one value applied between every pair of adjacent
    subbands or a per-gap sequence of length M-1.  Powers default to an even
    split.
    """
    m = len(counts)
    ratios = [1] * m if ratios is None else list(ratios)
    powers = [1.0 / m] * m if powers is None else list(powers)
    if isinstance(guards, (list, tuple)):
        gaps = list(guards)
        if len(gaps) != max(m - 1, 0):
            raise ValueError("guards must have one entry per gap (M-1)")
    else:
        gaps = [guards] * max(m - 1, 0)
    gaps = gaps + [0]
    subbands = tuple(
        SubbandSpec(NumerologySpec(ratios[i], cp_fraction), int(counts[i]), float(powers[i]), gaps[i])
        for i in range(m)
    )
    return SystemSpec(base_spacing_hz, subbands, mode, qam_order, oversample, seed)


def validate_spec(spec: SystemSpec) -> list[str]:
    """Return every violated invariant as a readable message; empty means valid."""
    problems: list[str] = []
    if not (isinstance(spec.base_spacing_hz, (int, float)) and spec.base_spacing_hz > 0):
        problems.append(f"base_spacing_hz must be positive, got {spec.base_spacing_hz!r}")
    if spec.mode not in MODES:
        problems.append(f"mode must be one of {MODES}, got {spec.mode!r}")
    if spec.qam_order not in QAM_ORDERS:
        problems.append(f"qam_order must be one of {QAM_ORDERS}, got {spec.qam_order!r}")
    if not (isinstance(spec.oversample, int) and spec.oversample >= 1):
        problems.append(f"oversample must be a positive integer, got {spec.oversample!r}")
    if not (isinstance(spec.seed, int) and 0 <= spec.seed < 2**64):
        problems.append(f"seed must be a 64-bit unsigned integer, got {spec.seed!r}")
    if not spec.subbands:
        problems.append("at least one subband is required")
        return problems

    for i, sb in enumerate(spec.subbands):
        r = sb.numerology.spacing_ratio
        if r <= 0:
            problems.append(f"subband {i}: spacing_ratio must be positive, got {r}")
        elif spec.mode == SYNCHRONIZED and not _is_power_of_two(r):
            problems.append(f"subband {i}: spacing_ratio {r} is not a power of two (synchronized mode)")
        cp = sb.numerology.cp_fraction
        if not (0 <= cp < 1):
            problems.append(f"subband {i}: cp_fraction must lie in [0, 1), got {cp}")
        if not (isinstance(sb.subcarrier_count, int) and sb.subcarrier_count >= 1):
            problems.append(f"subband {i}: subcarrier count must be >= 1, got {sb.subcarrier_count!r}")
        if not (math.isfinite(sb.power) and sb.power >= 0):
            problems.append(f"subband {i}: power must be non-negative, got {sb.power!r}")
        if sb.guard_after < 0:
            problems.append(f"subband {i}: guard_after must be non-negative, got {sb.guard_after}")

    ratios = [sb.numerology.spacing_ratio for sb in spec.subbands]
    if all(r > 0 for r in ratios) and min(ratios) != 1:
        problems.append(f"the smallest spacing_ratio must be 1 (f1 is the minimum spacing), got {min(ratios)}")
    cps = {sb.numerology.cp_fraction for sb in spec.subbands}
    if len(cps) > 1:
        problems.append(f"cp_fraction must be identical across subbands, got {sorted(map(float, cps))}")
    total = math.fsum(sb.power for sb in spec.subbands)
    if abs(total - 1.0) > POWER_SUM_TOL:
        problems.append(f"powers sum to {total:g} ≠ 1")
    return problems


@dataclass(frozen=True)
class SystemLayout:
    """Fully derived frame geometry.

    Unit conventions: ``*_units`` values are exact multiples of f1 (frequency)
    and ``grid_size`` counts base-rate samples per base useful symbol.
    """

    spec: SystemSpec
    spacing_ratio: tuple[Fraction, ...]
    counts: tuple[int, ...]
    powers: tuple[float, ...]
    bandwidth_units: tuple[Fraction, ...]
    offset_units: tuple[Fraction, ...]
    guard_units: tuple[Fraction, ...]
    total_bandwidth_units: Fraction
    cp_fraction: Fraction
    symbols_per_frame: tuple[Fraction, ...]  # n_i = T0 / T_i
    grid_size: int
    cp_samples: int  # base-rate CP samples of one base (f1) symbol

    # -- derived views -------------------------------------------------
    @property
    def num_subbands(self) -> int:
        return len(self.counts)

    @property
    def mode(self) -> str:
        return self.spec.mode

    @property
    def base_spacing_hz(self) -> float:
        return float(self.spec.base_spacing_hz)

    @property
    def oversample(self) -> int:
        return self.spec.oversample

    @property
    def spacing_hz(self) -> tuple[float, ...]:
        return tuple(float(r) * self.base_spacing_hz for r in self.spacing_ratio)

    @property
    def bandwidth_hz(self) -> tuple[float, ...]:
        return tuple(float(b) * self.base_spacing_hz for b in self.bandwidth_units)

    @property
    def offset_hz(self) -> tuple[float, ...]:
        return tuple(float(d) * self.base_spacing_hz for d in self.offset_units)

    @property
    def normalized_offset(self) -> tuple[Fraction, ...]:
        """d_i = delta_i / f_i."""
        return tuple(d / r for d, r in zip(self.offset_units, self.spacing_ratio))

    @property
    def total_bandwidth_hz(self) -> float:
        return float(self.total_bandwidth_units) * self.base_spacing_hz

    @property
    def mu(self) -> Fraction:
        """T0 / T_sys,1."""
        return 1 + self.cp_fraction

    @property
    def frame_duration_s(self) -> float:
        return float(self.mu) / self.base_spacing_hz

    @property
    def symbol_period_ratio(self) -> tuple[Fraction, ...]:
        """T_i / T0, e.g. (1, 4/5, 3/5) for spacings 5 f1 = 4 f2 = 3 f3."""
        return tuple(1 / n for n in self.symbols_per_frame)

    @property
    def total_subcarriers(self) -> int:
        return sum(self.counts)

    def useful_samples(self, i: int, oversample: int | None = None) -> int:
        """Samples in the useful (CP-free) part of one subband-i symbol."""
        j = self.oversample if oversample is None else oversample
        return j * int(self.grid_size / self.spacing_ratio[i])

    def frame_samples(self, oversample: int | None = None) -> int:
        """Frame length: J * (K + round(cp * K)), K = grid_size."""
        j = self.oversample if oversample is None else oversample
        return j * (self.grid_size + self.cp_samples)

    def sample_rate_hz(self, oversample: int | None = None) -> float:
        j = self.oversample if oversample is None else oversample
        return j * self.grid_size * self.base_spacing_hz

    def base_sample_interval_s(self) -> float:
        return 1.0 / self.sample_rate_hz(1)

    def with_powers(self, powers: Sequence[float]) -> "SystemLayout":
        return derive_layout(self.spec.with_powers(powers))


def _grid_size(total_units: Fraction, ratios: Sequence[Fraction]) -> int:
    """Smallest K >= B/f1 such that every f_i divides the sampling rate K*f1."""
    step = 1
    for r in ratios:
        step = math.lcm(step, r.numerator)
    k = math.ceil(total_units)
    return -(-k // step) * step


def derive_layout(spec: SystemSpec) -> SystemLayout:
    if not spec.base_spacing_hz or spec.base_spacing_hz <= 0:
        raise ConfigError("base spacing must be positive", key="base_spacing_hz")
    problems = validate_spec(spec)
    if problems:
        raise ConfigError("; ".join(problems))

    ratios = tuple(sb.numerology.spacing_ratio for sb in spec.subbands)
    counts = tuple(sb.subcarrier_count for sb in spec.subbands)
    bandwidths = tuple(n * r for n, r in zip(counts, ratios))
    guards = tuple(sb.guard_after for sb in spec.subbands[:-1]) + (Fraction(0),)
    offsets = []
    acc = Fraction(0)
    for b, g in zip(bandwidths, guards):
        offsets.append(acc)
        acc += b + g
    total = offsets[-1] + bandwidths[-1]
    cp = spec.subbands[0].numerology.cp_fraction
    # equal CP fractions make T0/T_i collapse to f_i/f1 in both modes
    symbols = ratios
    k = _grid_size(total, ratios)
    return SystemLayout(
        spec=spec,
        spacing_ratio=ratios,
        counts=counts,
        powers=tuple(float(sb.power) for sb in spec.subbands),
        bandwidth_units=bandwidths,
        offset_units=tuple(offsets),
        guard_units=guards[:-1],
        total_bandwidth_units=total,
        cp_fraction=cp,
        symbols_per_frame=symbols,
        grid_size=k,
        cp_samples=round(cp * k),
    )


# -- JSON ---------------------------------------------------------------

def _require(doc: dict, key: str, path: str):
    if key not in doc:
        raise ConfigError(f"missing required key '{path}{key}'", key=f"{path}{key}")
    return doc[key]


def spec_from_dict(doc: dict) -> SystemSpec:
    """Build a SystemSpec from the JSON document layout (see README)."""
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    default_cp = doc.get("cp_fraction", 0.07)
    raw_subbands = _require(doc, "subbands", "")
    if not isinstance(raw_subbands, list) or not raw_subbands:
        raise ConfigError("'subbands' must be a non-empty list", key="subbands")
    subbands = []
    for i, raw in enumerate(raw_subbands):
        path = f"subbands[{i}]."
        if not isinstance(raw, dict):
            raise ConfigError(f"{path[:-1]} must be an object", key=path[:-1])
        try:
            ratio = as_fraction(raw.get("spacing_ratio", 1))
        except (TypeError, ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"bad spacing_ratio: {exc}", key=path + "spacing_ratio") from exc
        try:
            cp = as_fraction(raw.get("cp_fraction", default_cp))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad cp_fraction: {exc}", key=path + "cp_fraction") from exc
        n = _require(raw, "n", path)
        if isinstance(n, bool) or not isinstance(n, int):
            raise ConfigError("subcarrier count must be an integer", key=path + "n")
        eta = _require(raw, "eta", path)
        if isinstance(eta, bool) or not isinstance(eta, (int, float)):
            raise ConfigError("eta must be a number", key=path + "eta")
        try:
            guard = as_fraction(raw.get("guard_after", 0))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad guard_after: {exc}", key=path + "guard_after") from exc
        subbands.append(SubbandSpec(NumerologySpec(ratio, cp), n, float(eta), guard))

    def typed(key, kind, default):
        value = doc.get(key, default)
        if isinstance(value, bool) or not isinstance(value, kind):
            raise ConfigError(f"'{key}' has the wrong type", key=key)
        return value

    spec = SystemSpec(
        base_spacing_hz=float(typed("base_spacing_hz", (int, float), 15e3)),
        subbands=tuple(subbands),
        mode=typed("mode", str, SYNCHRONIZED),
        qam_order=typed("qam_order", int, 16),
        oversample=typed("oversample", int, 8),
        seed=typed("seed", int, 0),
    )
    return spec


def _json_number(x: Fraction) -> Any:
    if x.denominator == 1:
        return x.numerator
    as_float = float(x)
    return as_float if as_fraction(as_float) == x else f"{x.numerator}/{x.denominator}"


def spec_to_dict(spec: SystemSpec) -> dict:
    return {
        "base_spacing_hz": spec.base_spacing_hz,
        "mode": spec.mode,
        "qam_order": spec.qam_order,
        "oversample": spec.oversample,
        "seed": spec.seed,
        "subbands": [
            {
                "spacing_ratio": _json_number(sb.numerology.spacing_ratio),
                "cp_fraction": _json_number(sb.numerology.cp_fraction),
                "n": sb.subcarrier_count,
                "eta": sb.power,
                "guard_after": _json_number(sb.guard_after),
            }
            for sb in spec.subbands
        ],
    }


def load_spec(path: str | Path) -> SystemSpec:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return spec_from_dict(doc)
