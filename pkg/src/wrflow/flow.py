"""The alternating weighted residual flow and its dissipation ledger.

For an orthogonal projection ``P`` and a PSD operator ``R`` the residual map
is ``Phi_P(R) = R^{1/2} (I - P) R^{1/2}``.  Starting from ``R_0`` the flow
applies ``Phi_{P_B}`` on even steps and ``Phi_{P_A}`` on odd steps.  Each
step removes ``D_n = R_n^{1/2} P_n R_n^{1/2}``, so the removed terms
telescope to ``R_0 - R_final``.
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .errors import DimensionMismatch, LedgerMissing
from .psd import (
    CLIP_TOL,
    EPS,
    Projection,
    PsdOperator,
    psd_sqrt,
    spectral_decompose,
)

__all__ = [
    "FlowConfig",
    "StoppingRule",
    "FlowTrace",
    "EnergyReport",
    "residual_map",
    "dissipation_term",
    "step_projection",
    "run_flow",
    "energy_report",
    "fixed_point_residual",
    "support_residual",
]

SCHEDULE = "n even -> P_B, n odd -> P_A"


@dataclass(frozen=True)
class FlowConfig:
    """Stopping and recording options for :func:`run_flow`.

    The flow stops once ``||R_{n+1} - R_n||_F <= stop_tol * (1 + ||R_0||_F)``
    on two consecutive steps (one full B/A cycle) and the geometric tail
    estimated from the last two cycles is below the same threshold, or after
    ``max_iter`` steps.
    """

    stop_tol: float = 1e-12
    max_iter: int = 10000
    keep_iterates: bool = False
    ledger_enabled: bool = True

    def __post_init__(self):
        if not self.stop_tol > 0:
            raise ValueError("stop_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass(eq=False)
class FlowTrace:
    r0: PsdOperator
    iterate_count: int
    deltas: List[float]
    r_inf: PsdOperator
    converged: bool
    schedule: str = SCHEDULE
    dissipation: Optional[List[PsdOperator]] = None
    # ||(R_n - R_{n+1}) - D_n||_F per step, recorded with the ledger
    ledger_residuals: Optional[List[float]] = None
    # R_0, R_1, ..., R_final when keep_iterates is set
    iterates: Optional[List[PsdOperator]] = None

    @property
    def final_delta(self) -> float:
        return self.deltas[-1] if self.deltas else 0.0

    @property
    def ledger_enabled(self) -> bool:
        return self.dissipation is not None


@dataclass(eq=False)
class EnergyReport:
    partial_sum: np.ndarray
    residual_norm: float
    dissipated_trace: float
    surviving_trace: float
    max_step_residual: float = 0.0


class StoppingRule:
    """Convergence detector shared by the ambient and intrinsic flows.

    Small steps alone do not bound the distance to the limit: the flow can
    contract at a rate arbitrarily close to one.  Besides two consecutive
    deltas below ``threshold``, the rule requires the tail
    ``c * rho / (1 - rho)`` to be below ``threshold`` too, where ``c`` is the
    change over the last cycle and ``rho`` its ratio to the previous cycle.
    A cycle at the roundoff floor counts as converged whatever its ratio.
    """

    def __init__(self, threshold: float, noise: float):
        self.threshold = threshold
        self.noise = noise
        self.deltas: List[float] = []

    def update(self, delta: float) -> bool:
        d = self.deltas
        d.append(delta)
        if len(d) < 2 or max(d[-1], d[-2]) > self.threshold:
            return False
        cycle = d[-1] + d[-2]
        if cycle <= self.noise:
            return True
        if len(d) < 4:
            return False
        prev = d[-3] + d[-4]
        if prev <= 0 or cycle >= prev:
            return False
        rho = cycle / prev
        return cycle * rho / (1.0 - rho) <= self.threshold

    @classmethod
    def for_flow(cls, r0: PsdOperator, stop_tol: float) -> "StoppingRule":
        scale = 1.0 + r0.fro
        return cls(stop_tol * scale, 32.0 * EPS * r0.dim * scale)


def _check(r: PsdOperator, *projections: Projection):
    for p in projections:
        if p.dim != r.dim:
            raise DimensionMismatch(f"projection of dimension {p.dim} applied to operator of dimension {r.dim}")


def _split(r: PsdOperator, p: Projection):
    """Return ``(Phi_P(R), D)`` as symmetric arrays built from one square root.

    Both halves are formed as Gram products, so each is PSD up to roundoff
    and their sum reproduces ``R`` to the accuracy of the square root.
    """
    h = psd_sqrt(r).matrix
    kept = h - p.matrix @ h
    removed = p.matrix @ h
    return kept.T @ kept, removed.T @ removed


def residual_map(r: PsdOperator, p: Projection) -> PsdOperator:
    """``Phi_P(R) = R^{1/2} (I - P) R^{1/2}``."""
    _check(r, p)
    kept, _ = _split(r, p)
    return spectral_decompose(kept, CLIP_TOL)


def dissipation_term(r: PsdOperator, p: Projection) -> PsdOperator:
    """``D = R^{1/2} P R^{1/2}``, the part of ``R`` removed by :func:`residual_map`."""
    _check(r, p)
    _, removed = _split(r, p)
    return spectral_decompose(removed, CLIP_TOL)


def step_projection(n: int, pa: Projection, pb: Projection) -> Projection:
    if n < 0:
        raise ValueError("step index must be nonnegative")
    return pb if n % 2 == 0 else pa


def run_flow(r0: PsdOperator, pa: Projection, pb: Projection, cfg: FlowConfig = FlowConfig()) -> FlowTrace:
    """Iterate ``R_{n+1} = Phi_{P_n}(R_n)`` until the stopping rule fires.

    Running out of iterations is reported through ``converged=False``,
    never raised.
    """
    _check(r0, pa, pb)
    rule = StoppingRule.for_flow(r0, cfg.stop_tol)
    dissipation = [] if cfg.ledger_enabled else None
    ledger_residuals = [] if cfg.ledger_enabled else None
    iterates = [r0] if cfg.keep_iterates else None

    r = r0
    converged = False
    n = 0
    for n in range(cfg.max_iter):
        p = step_projection(n, pa, pb)
        kept, removed = _split(r, p)
        nxt = spectral_decompose(kept, CLIP_TOL)
        delta = float(np.linalg.norm(nxt.matrix - r.matrix))
        if cfg.ledger_enabled:
            d = spectral_decompose(removed, CLIP_TOL)
            dissipation.append(d)
            ledger_residuals.append(float(np.linalg.norm(r.matrix - nxt.matrix - d.matrix)))
        if cfg.keep_iterates:
            iterates.append(nxt)
        r = nxt
        if rule.update(delta):
            converged = True
            break

    return FlowTrace(
        r0=r0,
        iterate_count=n + 1,
        deltas=rule.deltas,
        r_inf=r,
        converged=converged,
        dissipation=dissipation,
        ledger_residuals=ledger_residuals,
        iterates=iterates,
    )


def energy_report(trace: FlowTrace) -> EnergyReport:
    """Balance ``R_0 = R_final + sum D_n`` for a recorded run."""
    if not trace.ledger_enabled:
        raise LedgerMissing("flow was run with ledger_enabled=False")
    total = np.zeros_like(trace.r0.matrix)
    for d in trace.dissipation:
        total = total + d.matrix
    residual = trace.r0.matrix - trace.r_inf.matrix - total
    return EnergyReport(
        partial_sum=total,
        residual_norm=float(np.linalg.norm(residual)),
        dissipated_trace=float(np.trace(total)),
        surviving_trace=float(np.trace(trace.r_inf.matrix)),
        max_step_residual=max(trace.ledger_residuals, default=0.0),
    )


def fixed_point_residual(r: PsdOperator, p: Projection) -> float:
    """``||Phi_P(R) - R||_F``; zero exactly at fixed points of ``Phi_P``."""
    return float(np.linalg.norm(residual_map(r, p).matrix - r.matrix))


def support_residual(r: PsdOperator, pa: Projection, pb: Projection) -> float:
    """``max(||P_A R||_F, ||P_B R||_F)``, zero iff ``ran R`` lies in both kernels."""
    _check(r, pa, pb)
    return max(float(np.linalg.norm(pa.matrix @ r.matrix)), float(np.linalg.norm(pb.matrix @ r.matrix)))
