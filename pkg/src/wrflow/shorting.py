"""The shorted operator of a PSD operator to a subspace.

Two independent constructions are provided and cross-checked:

* :func:`shorted_schur` reads ``R_0`` in a frame adapted to ``K ⊕ K^⊥`` and
  takes the generalized Schur complement ``A - B C^+ B^T`` of the ``K^⊥`` block.
* :func:`shorted_intrinsic` works inside the range of ``R_0^{1/2}``: with
  ``M = {u : R_0^{1/2} u ∈ K}`` it forms ``R_0^{1/2} P_M R_0^{1/2}``.

:func:`variational_value` evaluates ``min_{y ⊥ K} <x+y, R_0 (x+y)>`` directly
for spot checks.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, MethodDisagreement, NotInK
from .psd import (
    RANK_TOL,
    Projection,
    PsdOperator,
    Subspace,
    orthonormal_span,
    pinv_psd,
    spectral_decompose,
    support_subspace,
)

__all__ = [
    "BlockDecomposition",
    "ShortedResult",
    "block_decompose",
    "shorted_schur",
    "subspace_m",
    "shorted_intrinsic",
    "variational_minimizer",
    "variational_value",
]

# a few orders above CLIP_TOL: a Schur complement of an ill-conditioned
# block carries more roundoff than a single eigendecomposition
_RESULT_CLIP = 1e-8
DISAGREEMENT_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class BlockDecomposition:
    k_basis: Subspace
    k_perp_basis: Subspace
    a_block: np.ndarray
    b_block: np.ndarray
    c_block: np.ndarray

    def frame(self) -> np.ndarray:
        return np.hstack([self.k_basis.basis, self.k_perp_basis.basis])

    def reassemble(self) -> np.ndarray:
        blocks = np.block([[self.a_block, self.b_block], [self.b_block.T, self.c_block]])
        f = self.frame()
        return f @ blocks @ f.T


@dataclass(frozen=True, eq=False)
class ShortedResult:
    s: PsdOperator
    m_subspace: Subspace
    p_m: Projection
    method_discrepancy: float
    s_schur: PsdOperator


def _check(r0: PsdOperator, k: Subspace):
    if k.ambient_dim != r0.dim:
        raise DimensionMismatch(f"subspace of R^{k.ambient_dim} used with operator of dimension {r0.dim}")


def block_decompose(r0: PsdOperator, k: Subspace) -> BlockDecomposition:
    """Blocks of ``R_0`` in an orthonormal frame whose leading columns span ``K``."""
    _check(r0, k)
    kb = k.basis
    kp = k.complement().basis
    r = r0.matrix
    a = kb.T @ r @ kb
    c = kp.T @ r @ kp
    return BlockDecomposition(
        k_basis=k,
        k_perp_basis=Subspace(r0.dim, kp),
        a_block=(a + a.T) / 2,
        b_block=kb.T @ r @ kp,
        c_block=(c + c.T) / 2,
    )


def _schur_block(blocks: BlockDecomposition, rank_tol: float) -> np.ndarray:
    a, b, c = blocks.a_block, blocks.b_block, blocks.c_block
    if c.size == 0 or a.size == 0:
        return a
    c_pinv = pinv_psd(spectral_decompose(c), rank_tol)
    return a - b @ c_pinv @ b.T


def shorted_schur(r0: PsdOperator, k: Subspace, rank_tol: float = RANK_TOL) -> PsdOperator:
    """Shorted operator as the generalized Schur complement, embedded back on ``K``."""
    blocks = block_decompose(r0, k)
    kb = k.basis
    s = kb @ _schur_block(blocks, rank_tol) @ kb.T
    return spectral_decompose(s, _RESULT_CLIP)


def subspace_m(r0: PsdOperator, k: Subspace, rank_tol: float = RANK_TOL) -> Subspace:
    """``M = {u in H_{R_0} : R_0^{1/2} u in K}`` as an orthonormal frame.

    ``R_0^{1/2}`` maps ``H_{R_0}`` bijectively onto itself, so ``M`` is the
    preimage of ``K ∩ H_{R_0}``.  That intersection is the null space of
    ``(I - P_K) B_H`` for an orthonormal frame ``B_H`` of ``H_{R_0}``.  Its
    singular values are sines of principal angles, so the threshold
    ``rank_tol`` is scale free.
    """
    _check(r0, k)
    h = support_subspace(r0, rank_tol)
    if h.dim == 0 or k.dim == 0:
        return Subspace.trivial(r0.dim)
    bh = h.basis
    off_k = bh - k.basis @ (k.basis.T @ bh)
    _, sv, vt = scipy.linalg.svd(off_k, full_matrices=True)
    sv = np.concatenate([sv, np.zeros(bh.shape[1] - sv.size)])
    z = vt[sv <= rank_tol].T
    if z.shape[1] == 0:
        return Subspace.trivial(r0.dim)
    # coordinates of K ∩ H in the eigenframe, then apply R_0^{-1/2} on H
    lam = r0.eigenvalues[: h.dim]
    pre = bh @ (z / np.sqrt(lam)[:, None])
    return orthonormal_span(pre.T, r0.dim)


def shorted_intrinsic(r0: PsdOperator, k: Subspace, rank_tol: float = RANK_TOL) -> ShortedResult:
    """Shorted operator as ``R_0^{1/2} P_M R_0^{1/2}``, cross-checked against the Schur path.

    Raises :class:`MethodDisagreement` if the two constructions differ by
    more than ``1e-6 * (1 + ||R_0||_F)``, which signals a rank decision
    too close to the threshold.
    """
    m = subspace_m(r0, k, rank_tol)
    p_m = m.projection()
    # R_0^{1/2} restricted to the frame of M, from the spectral data of R_0
    q, lam = r0.eigenvectors, r0.eigenvalues
    root_m = (q * np.sqrt(lam)) @ (q.T @ m.basis)
    s = spectral_decompose(root_m @ root_m.T, _RESULT_CLIP)
    s_schur = shorted_schur(r0, k, rank_tol)
    disc = float(np.linalg.norm(s.matrix - s_schur.matrix))
    if disc > DISAGREEMENT_TOL * (1.0 + r0.fro):
        raise MethodDisagreement(
            f"Schur and intrinsic shorted operators differ by {disc:.3g} in Frobenius norm", disc
        )
    return ShortedResult(s=s, m_subspace=m, p_m=p_m, method_discrepancy=disc, s_schur=s_schur)


def _coords_in_k(k: Subspace, x, tol: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (k.ambient_dim,):
        raise DimensionMismatch(f"vector of shape {x.shape} in R^{k.ambient_dim}")
    xi = k.basis.T @ x
    outside = float(np.linalg.norm(x - k.basis @ xi))
    if outside > tol * np.linalg.norm(x):
        raise NotInK(f"vector has a component of norm {outside:.3g} outside K")
    return xi


def variational_minimizer(r0: PsdOperator, k: Subspace, x, rank_tol: float = RANK_TOL, tol: float = 1e-10):
    """Closed-form minimizer ``y* ∈ K^⊥`` of ``<x+y, R_0 (x+y)>`` for ``x ∈ K``.

    Solves the normal equations ``C eta = -B^T xi`` with the pseudoinverse of
    the ``K^⊥`` block, so ``y* = -F C^+ B^T xi`` in the complement frame ``F``.
    """
    _check(r0, k)
    xi = _coords_in_k(k, x, tol)
    blocks = block_decompose(r0, k)
    kp = blocks.k_perp_basis.basis
    if kp.shape[1] == 0 or xi.size == 0:
        return np.zeros(r0.dim)
    c_pinv = pinv_psd(spectral_decompose(blocks.c_block), rank_tol)
    return -kp @ (c_pinv @ (blocks.b_block.T @ xi))


def variational_value(r0: PsdOperator, k: Subspace, x, rank_tol: float = RANK_TOL, tol: float = 1e-10) -> float:
    """``inf_{y ⊥ K} <x+y, R_0 (x+y)>`` for ``x`` in ``K``, evaluated at the exact minimizer.

    Raises :class:`NotInK` when ``x`` leaves ``K`` by more than ``tol * ||x||``.
    """
    x = np.asarray(x, dtype=float)
    z = x + variational_minimizer(r0, k, x, rank_tol, tol)
    return float(z @ r0.matrix @ z)
