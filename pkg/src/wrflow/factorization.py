"""Operator-range machinery.

Every ``0 <= R <= R_0`` factors as ``R = R_0^{1/2} T R_0^{1/2}`` with a unique
positive contraction ``T`` living on ``H_{R_0}`` (the closed range of
``R_0^{1/2}``).  Pulling the residual map back through this factorization
gives an intrinsic flow ``T_0 = I, T_{n+1} = Psi_{P_n}(T_n)``.  Its limit sits
below ``P_M``, and the defect ``G = P_M - T_inf`` accounts for the whole gap
between the flow limit and the shorted operator.

Intrinsic operators are stored as ambient ``d x d`` arrays supported in
``H_{R_0}``.
"""

from dataclasses import dataclass
from typing import List, NamedTuple, Optional

import numpy as np

from .errors import DimensionMismatch, OrderViolation
from .flow import FlowConfig, StoppingRule, residual_map, step_projection
from .psd import (
    RANK_TOL,
    Projection,
    PsdOperator,
    Subspace,
    _support_mask,
    commutator_norm,
    inv_sqrt_psd,
    kernel_intersection,
    loewner_leq,
    psd_sqrt,
    spectral_decompose,
    support_subspace,
)
from .shorting import shorted_schur, subspace_m

__all__ = [
    "DouglasFactor",
    "IntrinsicContraction",
    "IntrinsicFlow",
    "GapResult",
    "KernelComparison",
    "douglas_factor",
    "intrinsic_contraction",
    "psi_map",
    "run_intrinsic_flow",
    "gap",
    "commuting_shortcut",
    "kernel_comparison",
]

ORDER_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class DouglasFactor:
    x: np.ndarray
    norm_bound: float


@dataclass(frozen=True, eq=False)
class IntrinsicContraction:
    t: np.ndarray
    h_r0: Subspace

    @property
    def matrix(self) -> np.ndarray:
        return self.t


@dataclass(eq=False)
class IntrinsicFlow:
    """Result of :func:`run_intrinsic_flow`: the limit plus run metadata."""

    t_inf: IntrinsicContraction
    iterate_count: int
    deltas: List[float]
    converged: bool
    # R_0^{1/2} T_n R_0^{1/2} for n = 0..final, when keep_iterates is set
    images: Optional[List[np.ndarray]] = None


@dataclass(frozen=True, eq=False)
class GapResult:
    """Defect ``G = P_M - T_inf`` and gap ``S - R_inf`` as symmetric arrays.

    Both are PSD for a converged flow; ``g_margin`` and ``gap_margin`` hold
    their smallest eigenvalues so a run stopped short of its limit shows up
    as a negative margin instead of an exception.
    """

    g: np.ndarray
    gap_operator: np.ndarray
    localization_residual: float
    equality_flag: bool
    p_m: Projection
    g_margin: float
    gap_margin: float

    @property
    def g_spectrum(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.g)[::-1]


class KernelComparison(NamedTuple):
    holds: bool
    witness: Optional[np.ndarray]


def _sym(a):
    return (a + a.T) / 2


def _check_dims(*ops):
    dims = {op.dim for op in ops}
    if len(dims) != 1:
        raise DimensionMismatch(f"operands have dimensions {sorted(dims)}")


def _require_order(a, b, what):
    res = loewner_leq(a, b, ORDER_TOL)
    if not res.holds:
        raise OrderViolation(f"{what}: Loewner margin {res.margin:.3g}", res.margin)


def douglas_factor(a: PsdOperator, b: PsdOperator, rank_tol: float = RANK_TOL) -> DouglasFactor:
    """Contraction ``X`` with ``A^{1/2} = X B^{1/2}`` for ``0 <= A <= B``.

    ``X = A^{1/2} (B^{1/2})^+``, which vanishes on the orthogonal complement
    of ``H_B``.
    """
    _check_dims(a, b)
    _require_order(a, b, "douglas_factor requires a <= b")
    x = psd_sqrt(a).matrix @ inv_sqrt_psd(b, rank_tol)
    return DouglasFactor(x=x, norm_bound=float(np.linalg.norm(x, 2)))


def intrinsic_contraction(
    r: PsdOperator, r0: PsdOperator, rank_tol: float = RANK_TOL, check: bool = True
) -> IntrinsicContraction:
    """The unique ``0 <= T <= P_{H_{R_0}}`` with ``R = R_0^{1/2} T R_0^{1/2}``.

    Computed by sandwiching ``R`` between pseudoinverse square roots of
    ``R_0``; the result is compressed to ``H_{R_0}``.
    """
    _check_dims(r, r0)
    if check:
        _require_order(r, r0, "intrinsic_contraction requires r <= r0")
    h, q, inv_root = _support_frame(r0, rank_tol)
    # scale in the eigenframe of R_0 instead of forming (R_0^{1/2})^+ densely:
    # each entry of the core picks up only relative roundoff, while a dense
    # sandwich would spread an error of order eps * ||R|| / lambda_min over
    # the well-conditioned directions as well
    core = (q.T @ r.matrix @ q) * np.outer(inv_root, inv_root)
    return IntrinsicContraction(t=_sym(q @ core @ q.T), h_r0=h)


def _support_frame(r0: PsdOperator, rank_tol: float):
    h = support_subspace(r0, rank_tol)
    lam = r0.eigenvalues[: h.dim]
    return h, h.basis, 1.0 / np.sqrt(lam)


def _image(t: np.ndarray, r0: PsdOperator, rank_tol: float = RANK_TOL) -> np.ndarray:
    """``R_0^{1/2} t R_0^{1/2}`` computed in the eigenframe of ``R_0``."""
    _, q, inv_root = _support_frame(r0, rank_tol)
    root = 1.0 / inv_root
    return _sym(q @ ((q.T @ t @ q) * np.outer(root, root)) @ q.T)


def psi_map(t: IntrinsicContraction, p: Projection, r0: PsdOperator, rank_tol: float = RANK_TOL) -> IntrinsicContraction:
    """Intrinsic residual map, defined by ``Phi_P(R_0^{1/2} T R_0^{1/2}) = R_0^{1/2} Psi_P(T) R_0^{1/2}``."""
    if p.dim != r0.dim or t.t.shape[0] != r0.dim:
        raise DimensionMismatch("psi_map operands have inconsistent dimensions")
    r = spectral_decompose(_image(t.t, r0, rank_tol))
    return intrinsic_contraction(residual_map(r, p), r0, rank_tol, check=False)


def run_intrinsic_flow(
    r0: PsdOperator,
    pa: Projection,
    pb: Projection,
    cfg: FlowConfig = FlowConfig(),
    rank_tol: float = RANK_TOL,
) -> IntrinsicFlow:
    """Iterate ``T_{n+1} = Psi_{P_n}(T_n)`` from ``T_0 = P_{H_{R_0}}``.

    Uses the schedule of :func:`wrflow.flow.run_flow` and its stopping rule.
    The rule is applied to the ambient images ``R_0^{1/2} T_n R_0^{1/2}``:
    differences of ``T`` itself carry roundoff magnified by the condition
    number of ``R_0``.
    """
    _check_dims(r0, pa, pb)
    h = support_subspace(r0, rank_tol)
    t = IntrinsicContraction(t=_sym(h.basis @ h.basis.T), h_r0=h)
    image = _image(t.t, r0, rank_tol)
    rule = StoppingRule.for_flow(r0, cfg.stop_tol)
    images = [image] if cfg.keep_iterates else None

    converged = False
    n = 0
    for n in range(cfg.max_iter):
        p = step_projection(n, pa, pb)
        r = spectral_decompose(image)
        t = intrinsic_contraction(residual_map(r, p), r0, rank_tol, check=False)
        nxt = _image(t.t, r0, rank_tol)
        delta = float(np.linalg.norm(nxt - image))
        image = nxt
        if cfg.keep_iterates:
            images.append(image)
        if rule.update(delta):
            converged = True
            break

    return IntrinsicFlow(t_inf=t, iterate_count=n + 1, deltas=rule.deltas, converged=converged, images=images)


def gap(
    r0: PsdOperator,
    k: Subspace,
    t_inf: IntrinsicContraction,
    r_inf: PsdOperator,
    rank_tol: float = RANK_TOL,
) -> GapResult:
    """Defect ``G = P_M - T_inf`` and the gap ``S - R_inf`` it localizes.

    ``S`` comes from the Schur construction and ``R_inf`` from the ambient
    flow, so ``localization_residual = ||(S - R_inf) - R_0^{1/2} G R_0^{1/2}||_F``
    is a genuine cross-check between independent computations.
    """
    _check_dims(r0, r_inf)
    m = subspace_m(r0, k, rank_tol)
    p_m = m.projection()
    g = _sym(p_m.matrix - t_inf.t)
    s = shorted_schur(r0, k, rank_tol)
    gap_op = _sym(s.matrix - r_inf.matrix)
    residual = float(np.linalg.norm(gap_op - _image(g, r0, rank_tol)))
    return GapResult(
        g=g,
        gap_operator=gap_op,
        localization_residual=residual,
        equality_flag=bool(np.linalg.norm(g) <= 1e-8 * r0.dim),
        p_m=p_m,
        g_margin=float(np.linalg.eigvalsh(g)[0]),
        gap_margin=float(np.linalg.eigvalsh(gap_op)[0]),
    )


def commuting_shortcut(
    r0: PsdOperator, pa: Projection, pb: Projection, tol: float = 1e-10
) -> Optional[PsdOperator]:
    """``R_0 P_K`` when ``R_0``, ``P_A`` and ``P_B`` pairwise commute, else ``None``.

    In the commuting regime the flow stabilizes at this value after one
    cycle.
    """
    _check_dims(r0, pa, pb)
    bound = tol * (1.0 + r0.fro)
    pairs = [(r0, pa), (r0, pb), (pa, pb)]
    if any(commutator_norm(x, y) > bound for x, y in pairs):
        return None
    p_k = kernel_intersection(pa, pb).projection().matrix
    return spectral_decompose(_sym(r0.matrix @ p_k))


def kernel_comparison(s: PsdOperator, r_inf: PsdOperator, rank_tol: float = RANK_TOL) -> KernelComparison:
    """Check ``ker S ⊂ ker R_inf`` on the numerical kernel of ``S``.

    Returns the first kernel vector ``x`` of ``S`` with
    ``<x, R_inf x> > rank_tol * (1 + ||R_inf||_F)`` as a witness, if any.
    """
    _check_dims(s, r_inf)
    null = ~_support_mask(s, rank_tol)
    bound = rank_tol * (1.0 + r_inf.fro)
    for x in s.eigenvectors[:, null].T:
        if float(x @ r_inf.matrix @ x) > bound:
            return KernelComparison(False, x.copy())
    return KernelComparison(True, None)
