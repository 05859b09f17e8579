"""Closed-form PAPR distribution machinery.

Spectral moments are returned in rad/s and rad^2/s^2.  Internally they are
first evaluated exactly in units of f1 (as Fractions), which keeps the
variance ``lambda2 - lambda1**2`` free of cancellation error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import integrate

from .config import SystemLayout

# Analytical CCDFs are only meaningful above the stationary point of
# sqrt(g) * exp(-g).
VALIDITY_FLOOR = 0.5

BASELINE_KINDS = ("nyquist", "empirical_2p8", "ochiai", "extreme_value", "power_weighted")


class ConsistencyError(ArithmeticError):
    """Two routes to the same quantity disagree."""


@dataclass(frozen=True)
class SpectralMoments:
    alpha: np.ndarray
    beta: np.ndarray
    lambda1: float
    lambda2: float


@dataclass(frozen=True)
class LambdaFactor:
    lambda_cap: float
    provenance: str = "moment_form"
    expanded: float | None = None

    def __float__(self) -> float:
        return self.lambda_cap


# -- moments -----------------------------------------------------------------

def _unit_moments(layout: SystemLayout, i: int) -> tuple[Fraction, Fraction]:
    """alpha_i/(2 pi f1) and beta_i/(2 pi f1)^2, exact."""
    d = layout.offset_units[i]
    b = layout.bandwidth_units[i]
    return d + b / 2, d * d + d * b + b * b / 3


def subband_moments(layout: SystemLayout, i: int) -> tuple[float, float]:
    a, b = _unit_moments(layout, i)
    w = 2 * math.pi * layout.base_spacing_hz
    return float(a) * w, float(b) * w * w


def composite_moments(layout: SystemLayout) -> SpectralMoments:
    pairs = [subband_moments(layout, i) for i in range(layout.num_subbands)]
    alpha = np.array([p[0] for p in pairs])
    beta = np.array([p[1] for p in pairs])
    eta = np.asarray(layout.powers)
    return SpectralMoments(alpha, beta, float(eta @ alpha), float(eta @ beta))


def unit_moment_arrays(layout: SystemLayout) -> tuple[np.ndarray, np.ndarray]:
    """alpha and beta in units of 2 pi f1 and (2 pi f1)^2 as float arrays."""
    pairs = [_unit_moments(layout, i) for i in range(layout.num_subbands)]
    return np.array([float(p[0]) for p in pairs]), np.array([float(p[1]) for p in pairs])


def lambda_moment_form(layout: SystemLayout, powers=None) -> float:
    """(T0^2/pi)(sum beta eta - (sum alpha eta)^2); reduces to 4 pi mu^2 (...) in f1 units."""
    eta = layout.powers if powers is None else powers
    eta = [Fraction(float(e)) for e in eta]
    pairs = [_unit_moments(layout, i) for i in range(layout.num_subbands)]
    l1 = sum(e * a for e, (a, _) in zip(eta, pairs))
    l2 = sum(e * b for e, (_, b) in zip(eta, pairs))
    return 4 * math.pi * float(layout.mu**2 * (l2 - l1 * l1))


def lambda_expanded_form(layout: SystemLayout, powers=None) -> float:
    """Lambda from (mu, n_i, d_i, N_i, eta_i); cross sum taken over unordered pairs."""
    eta = layout.powers if powers is None else powers
    eta = [Fraction(float(e)) for e in eta]
    mu = layout.mu
    n = layout.symbols_per_frame
    d = layout.normalized_offset
    cnt = [Fraction(c) for c in layout.counts]
    m = layout.num_subbands
    diag = sum(
        n[i] ** 2
        * (eta[i] ** 2 * cnt[i] ** 2 / 3 + 4 * eta[i] * (1 - eta[i]) * (d[i] ** 2 + d[i] * cnt[i] + cnt[i] ** 2 / 3))
        for i in range(m)
    )
    cross = sum(
        n[l] * n[k] * eta[l] * eta[k] * (d[l] + cnt[l] / 2) * (d[k] + cnt[k] / 2)
        for l in range(m)
        for k in range(l + 1, m)
    )
    return math.pi * float(mu**2 * (diag - 8 * cross))


def lambda_factor(layout: SystemLayout, powers=None, rtol: float = 1e-8) -> LambdaFactor:
    """Moment-form Lambda, cross-checked against the expanded form."""
    primary = lambda_moment_form(layout, powers)
    other = lambda_expanded_form(layout, powers)
    scale = max(abs(primary), abs(other), 1e-300)
    if abs(primary - other) > rtol * scale:
        raise ConsistencyError(f"Lambda forms disagree: {primary!r} vs {other!r}")
    return LambdaFactor(primary, "moment_form", other)


def _as_lambda(source) -> float:
    if isinstance(source, SystemLayout):
        return lambda_factor(source).lambda_cap
    return float(source)


# -- level crossings and distributions -----------------------------------

def crossing_rate(r, layout) -> np.ndarray | float:
    """Mean envelope up-crossings of level r within one frame: sqrt(Lambda) r exp(-r^2)."""
    lam = _as_lambda(layout)
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("level must be non-negative")
    out = math.sqrt(lam) * r * np.exp(-r * r)
    return float(out) if out.ndim == 0 else out


def envelope_cdf(r, layout, rbar: float | None = None):
    """CDF of the frame's peak envelope.

    Default: exp(-sqrt(Lambda) r e^{-r^2}).  With ``rbar``, the finite
    reference-level form (1 - r e^{-r^2} / (rbar e^{-rbar^2}))^U(rbar).
    """
    lam = _as_lambda(layout)
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("r must be positive")
    g = r * np.exp(-r * r)
    if rbar is None:
        out = np.exp(-math.sqrt(lam) * g)
    else:
        if np.any(r <= rbar):
            raise ValueError("r must exceed the reference level")
        gbar = rbar * math.exp(-rbar * rbar)
        if gbar == 0:
            raise ZeroDivisionError("reference level gives rbar*exp(-rbar^2) = 0")
        u = math.sqrt(lam) * gbar
        out = np.power(1.0 - g / gbar, u)
    return float(out) if out.ndim == 0 else out


def ccdf_proposed(gamma, layout):
    """1 - exp(-sqrt(Lambda*gamma) e^{-gamma}); intended for gamma > 1/2."""
    lam = _as_lambda(layout)
    g = np.asarray(gamma, dtype=float)
    if np.any(g <= 0):
        raise ValueError("gamma must be positive")
    out = -np.expm1(-np.sqrt(lam * g) * np.exp(-g))
    return float(out) if out.ndim == 0 else out


def ccdf_baseline(kind: str, gamma, n: int | None = None, eps=None, p_av: float = 1.0):
    """Literature CCDFs for N subcarriers.

    ``power_weighted`` needs ``eps``: per-subcarrier powers on the index range
    -N/2 .. N/2 inclusive (N + 1 entries).
    """
    if kind not in BASELINE_KINDS:
        raise ValueError(f"unknown baseline kind {kind!r}")
    g = np.asarray(gamma, dtype=float)
    if n is None or n < 1:
        raise ValueError("baseline needs a positive subcarrier count n")
    if kind == "nyquist":
        out = -np.expm1(n * np.log1p(-np.exp(-g)))
    elif kind == "empirical_2p8":
        out = -np.expm1(2.8 * n * np.log1p(-np.exp(-g)))
    elif kind == "ochiai":
        out = -np.expm1(-n * np.exp(-g) * np.sqrt(math.pi / 3.0 * g))
    elif kind == "extreme_value":
        out = -np.expm1(-n * np.exp(-g) * math.sqrt(math.pi / 3.0 * math.log(n)))
    else:
        if eps is None:
            raise ValueError("power_weighted baseline requires eps")
        eps = np.asarray(eps, dtype=float)
        if eps.shape != (n + 1,):
            raise ValueError(f"eps must have N + 1 = {n + 1} entries, got {eps.shape}")
        k = np.arange(n + 1) - n / 2.0
        weight = float(np.sum(k * k * eps))
        out = -np.expm1(-2.0 * np.exp(-g) * np.sqrt(math.pi * g / (n * p_av) * weight))
    return float(out) if np.ndim(out) == 0 else out


def layout_power_profile(layout: SystemLayout) -> np.ndarray:
    """Per-subcarrier power for the power-weighted baseline on a mixed layout.

    Subcarriers are listed in frequency order on indices -N/2 .. N/2 - 1
    (N = sum N_i), each carrying N * eta_i / N_i so that an even split gives
    unit powers; the extra +N/2 slot is empty.
    """
    n = layout.total_subcarriers
    eps = np.zeros(n + 1)
    pos = 0
    for cnt, eta in zip(layout.counts, layout.powers):
        eps[pos:pos + cnt] = n * eta / cnt
        pos += cnt
    return eps


# -- mean envelope ------------------------------------------------------------

_ENVELOPE_UPPER = 6.0


def mean_envelope(layout) -> float:
    """E[r] = integral over [0, 6] of (1 - F(r)), F the reference-free peak CDF.

    The integrand climbs from 0 over a width ~1/sqrt(Lambda) at the origin and
    falls back near sqrt(ln sqrt(Lambda)); adaptive quadrature is given both
    spots as breakpoints.  The tail beyond r = 6 is below 1e-9 for any
    Lambda < 1e24 and is dropped.
    """
    lam = _as_lambda(layout)
    if not lam > 0:
        raise ValueError("Lambda must be positive")
    root = math.sqrt(lam)

    def tail(r):
        return -math.expm1(-root * r * math.exp(-r * r))

    points = [min(1.0 / root, 0.5), 1.0 / math.sqrt(2.0)]
    if root > 1.0:
        points.append(min(math.sqrt(math.log(root)), 5.0))
    points = sorted({p for p in points if 0.0 < p < _ENVELOPE_UPPER})
    value, err = integrate.quad(tail, 0.0, _ENVELOPE_UPPER, points=points, limit=500, epsabs=1e-13, epsrel=1e-11)
    if not math.isfinite(value) or err > 1e-8 * max(1.0, value):
        raise ArithmeticError(f"mean-envelope quadrature did not converge (error estimate {err:g})")
    return float(value)


# -- tabulation helpers used by the CLI ---------------------------------------

ANALYTIC_COLUMNS = ("proposed", "ochiai", "extreme_value", "power_weighted", "nyquist", "empirical_2p8")


def curve_function(kind: str, layout: SystemLayout):
    """gamma (linear) -> CCDF for one analytic curve; baselines use N = sum N_i."""
    n = layout.total_subcarriers
    if kind == "proposed":
        lam = lambda_factor(layout).lambda_cap
        return lambda g: ccdf_proposed(g, lam)
    if kind == "power_weighted":
        eps = layout_power_profile(layout)
        return lambda g: ccdf_baseline(kind, g, n=n, eps=eps)
    if kind in BASELINE_KINDS:
        return lambda g: ccdf_baseline(kind, g, n=n)
    raise ValueError(f"unknown analytic curve {kind!r}")


def analytic_curves(layout: SystemLayout, gamma_db_grid) -> dict[str, np.ndarray]:
    grid = np.asarray(gamma_db_grid, dtype=float)
    g = 10.0 ** (grid / 10.0)
    if np.any(g < VALIDITY_FLOOR):
        raise ValueError(f"grid extends below the validity floor gamma = {VALIDITY_FLOOR}")
    return {kind: np.asarray(curve_function(kind, layout)(g), dtype=float) for kind in ANALYTIC_COLUMNS}


def papr_at_ccdf_db(kind: str, layout: SystemLayout, prob: float, hi_db: float = 25.0) -> float:
    """dB level where an analytic curve equals ``prob`` (root search above the floor)."""
    from scipy.optimize import brentq

    fn = curve_function(kind, layout)
    lo_db = 10.0 * math.log10(VALIDITY_FLOOR) + 1e-9
    f = lambda x: float(fn(10.0 ** (x / 10.0))) - prob
    if f(lo_db) < 0 or f(hi_db) > 0:
        return float("nan")
    return float(brentq(f, lo_db, hi_db, xtol=1e-10))
