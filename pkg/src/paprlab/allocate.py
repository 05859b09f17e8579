"""Power allocation across subbands that maximizes Lambda (and so E[r]).

Maximizing Lambda(eta) on the simplex is the equality-constrained QP

    min 1/2 eta' P eta + q' eta,   P = 2 alpha alpha',  q = -beta,  1'eta = 1,

whose objective equals -(pi / T0^2) Lambda(eta).  P has rank one, so the
KKT matrix is invertible only for M = 2 (with alpha_1 != alpha_2).  For
M >= 3 the objective is flat along M - 2 feasible directions and only the
exhaustive simplex grid is offered.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import analytic
from .config import SystemLayout

GRID_BUDGET = 2_000_000


class SingularKKTError(np.linalg.LinAlgError):
    """KKT system has no unique solution; use grid_search_oracle instead."""


@dataclass(frozen=True)
class QpProblem:
    P: np.ndarray
    q: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    frame_duration_s: float

    def objective(self, eta) -> float:
        eta = np.asarray(eta, dtype=float)
        return float(0.5 * eta @ self.P @ eta + self.q @ eta)


@dataclass
class AllocationResult:
    eta_star: np.ndarray
    lambda_at_opt: float
    method: str
    boundary: bool = False
    diagnostics: dict = field(default_factory=dict)


def build_qp(layout: SystemLayout) -> QpProblem:
    if layout.num_subbands < 2:
        raise ValueError("power allocation needs at least two subbands")
    mom = analytic.composite_moments(layout)
    alpha, beta = mom.alpha, mom.beta
    return QpProblem(2.0 * np.outer(alpha, alpha), -beta, alpha, beta, layout.frame_duration_s)


def _lambda(layout: SystemLayout, eta) -> float:
    return analytic.lambda_moment_form(layout, eta)


def solve_closed_form_two(layout: SystemLayout) -> AllocationResult:
    """Stationary point of the two-subband problem, evaluated exactly."""
    if layout.num_subbands != 2:
        raise ValueError("closed form applies to exactly two subbands")
    (a1, b1), (a2, b2) = (analytic._unit_moments(layout, i) for i in range(2))
    if a1 == a2:
        raise ZeroDivisionError("alpha_1 == alpha_2: closed form is degenerate")
    denom = 2 * (a1 - a2) ** 2
    e1 = (b1 - b2 + 2 * a2 * a2 - 2 * a1 * a2) / denom
    e2 = (b2 - b1 + 2 * a1 * a1 - 2 * a1 * a2) / denom
    eta = np.array([float(e1), float(e2)])
    boundary = not (0 < e1 < 1 and 0 < e2 < 1)
    return AllocationResult(
        eta,
        _lambda(layout, eta),
        "closed_form",
        boundary,
        {"exact": (e1, e2), "simplex_residual": float(e1 + e2 - 1)},
    )


def kkt_system(qp: QpProblem) -> tuple[np.ndarray, np.ndarray]:
    m = len(qp.q)
    a = np.zeros((m + 1, m + 1))
    a[:m, :m] = qp.P
    a[:m, m] = 1.0
    a[m, :m] = 1.0
    rhs = np.concatenate([-qp.q, [1.0]])
    return a, rhs


def solve_kkt(qp: QpProblem) -> AllocationResult:
    """Dense solve of [[P, 1], [1', 0]] [eta; nu] = [-q; 1].

    P and q are rescaled by 1/max|P| before the solve (eta is invariant,
    nu scales back).
    """
    m = len(qp.q)
    a, rhs = kkt_system(qp)
    c = 1.0 / np.max(np.abs(qp.P))
    scaled = a.copy()
    scaled[:m, :m] *= c
    srhs = rhs.copy()
    srhs[:m] *= c
    rank = np.linalg.matrix_rank(scaled)
    if m != 2 or rank < m + 1:
        raise SingularKKTError(
            f"singular KKT system (M={m}, rank {rank} < {m + 1}); use grid_search_oracle"
        )
    sol = np.linalg.solve(scaled, srhs)
    eta, nu = sol[:m], sol[m] / c
    residual = float(np.max(np.abs(scaled @ sol - srhs)))
    lam = -qp.frame_duration_s**2 / math.pi * qp.objective(eta)
    return AllocationResult(
        eta,
        lam,
        "kkt",
        bool(np.any(eta <= 0) or np.any(eta >= 1)),
        {"nu": nu, "residual": residual, "rank": int(rank)},
    )


def _compositions(total: int, parts: int):
    """Non-negative integer vectors summing to ``total``, in lexicographic order."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def grid_size(m: int, step: float) -> int:
    n = int(round(1.0 / step))
    return math.comb(n + m - 1, m - 1)


def grid_search_oracle(layout: SystemLayout, step: float = 1e-3) -> AllocationResult:
    """Exhaustive maximization of Lambda on the simplex grid of resolution ``step``.

    Ties (within 1e-12 relative) go to the lexicographically smallest eta.
    """
    if not (0 < step <= 0.1):
        raise ValueError("step must lie in (0, 0.1]")
    m = layout.num_subbands
    n = int(round(1.0 / step))
    if abs(n * step - 1.0) > 1e-9:
        raise ValueError("1/step must be an integer")
    if m > 4 or grid_size(m, step) > GRID_BUDGET:
        raise ValueError(f"simplex grid for M={m} at step {step} exceeds the budget of {GRID_BUDGET} points")
    alpha, beta = analytic.unit_moment_arrays(layout)
    pts = np.array(list(_compositions(n, m)), dtype=float) / n
    lam = 4.0 * math.pi * float(layout.mu) ** 2 * (pts @ beta - (pts @ alpha) ** 2)
    best = lam.max()
    k = int(np.nonzero(lam >= best - 1e-12 * abs(best))[0][0])
    eta = pts[k]
    return AllocationResult(
        eta,
        float(lam[k]),
        "grid",
        bool(np.any(eta <= 0)),
        {"step": step, "points": int(len(pts)), "min_lambda": float(lam.min()), "argmin": pts[int(np.argmin(lam))]},
    )


@dataclass
class SweepRow:
    eta1: float
    lambda_cap: float
    mean_envelope: float
    mc_mean_papr_db: float | None = None


def sweep_mean_envelope(
    layout: SystemLayout,
    eta1_grid,
    *,
    mc_trials: int = 0,
    seed: int = 0,
    workers: int | None = None,
) -> list[SweepRow]:
    """Lambda and E[r] along eta = (eta1, 1 - eta1); optional Monte Carlo mean PAPR (dB)."""
    if layout.num_subbands != 2:
        raise ValueError("sweep is defined for two subbands")
    rows = []
    for e1 in eta1_grid:
        e1 = float(e1)
        if not 0 < e1 < 1:
            raise ValueError("eta1 grid must lie inside (0, 1)")
        lam = _lambda(layout, (e1, 1.0 - e1))
        row = SweepRow(e1, lam, analytic.mean_envelope(lam))
        if mc_trials:
            from .papr import run_monte_carlo

            gam = run_monte_carlo(layout.with_powers((e1, 1.0 - e1)), mc_trials, seed, workers=workers)
            row.mc_mean_papr_db = float(np.mean(10.0 * np.log10(gam)))
        rows.append(row)
    return rows
