"""Dense symmetric / positive semidefinite matrix algebra.

Everything downstream (the residual flow, shorting, the operator-range
factorizations) is built from the handful of primitives here: spectral
decomposition with controlled clipping, the PSD square root, a
rank-thresholded pseudoinverse, Loewner comparisons and a few subspace
constructions.

Matrices are plain ``numpy`` arrays.  A "symmetric matrix" is any square
finite float array; :func:`as_symmetric` validates and symmetrizes it and
returns a read-only copy.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NotProjection, NotPsd

__all__ = [
    "CLIP_TOL",
    "RANK_TOL",
    "PsdOperator",
    "Projection",
    "Subspace",
    "LoewnerResult",
    "as_symmetric",
    "spectral_decompose",
    "psd_sqrt",
    "pinv_psd",
    "loewner_leq",
    "as_projection",
    "proj_from_span",
    "kernel",
    "kernel_intersection",
    "commutator_norm",
    "support_projection",
]

CLIP_TOL = 1e-10
RANK_TOL = 1e-10

EPS = np.finfo(float).eps
TINY = np.finfo(float).tiny  # smallest normal double


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _mat(x):
    """Return the underlying array of a wrapper type, or the array itself."""
    return x.matrix if hasattr(x, "matrix") else np.asarray(x, dtype=float)


def _check_same_dim(*mats):
    shapes = {m.shape for m in mats}
    if len(shapes) != 1:
        raise DimensionMismatch(f"operand shapes differ: {sorted(shapes)}")


def as_symmetric(m) -> np.ndarray:
    """Validate a square finite matrix and return its symmetric part (read-only)."""
    a = np.asarray(_mat(m), dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] == 0:
        raise DimensionMismatch("dimension must be positive")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return _frozen((a + a.T) / 2)


def _symmetrize(a):
    return (a + a.T) / 2


@dataclass(frozen=True, eq=False)
class PsdOperator:
    """A symmetric matrix certified positive semidefinite.

    ``eigenvalues`` are sorted in descending order and already clipped at
    zero; ``eigenvectors`` holds the matching orthonormal columns.
    """

    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    clip_applied: bool = False

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def fro(self) -> float:
        return float(np.linalg.norm(self.matrix))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)

    def __repr__(self):
        return f"PsdOperator(dim={self.dim}, lambda_max={self.lambda_max:.6g})"


def _from_spectrum(eigenvalues, eigenvectors, clip_applied=False):
    """Assemble a PsdOperator from known (descending, nonnegative) spectral data."""
    q = eigenvectors
    m = _symmetrize((q * eigenvalues) @ q.T)
    return PsdOperator(_frozen(m), _frozen(eigenvalues), _frozen(q), clip_applied)


def spectral_decompose(m, clip_tol: float = CLIP_TOL) -> PsdOperator:
    """Diagonalize a symmetric matrix and certify it positive semidefinite.

    Eigenvalues in ``[-clip_tol * (1 + lambda_max), 0)`` are set to zero and
    flagged through ``clip_applied``; anything more negative raises
    :class:`NotPsd`.
    """
    a = as_symmetric(m)
    w, q = np.linalg.eigh(a)
    w, q = w[::-1], q[:, ::-1]
    lam_max = max(float(w[0]), 0.0)
    floor = -clip_tol * (1.0 + lam_max)
    if w[-1] < floor:
        raise NotPsd(
            f"matrix is not positive semidefinite: eigenvalue {w[-1]:.6g} < {floor:.3g}",
            min_eigenvalue=float(w[-1]),
        )
    clipped = bool(np.any(w < 0))
    w = np.where(w < 0, 0.0, w)
    return PsdOperator(a, _frozen(w), _frozen(q), clipped)


def _noise_floor(r: PsdOperator) -> float:
    # eigenvalues this small are indistinguishable from eigh/product roundoff
    return 8.0 * r.dim * EPS * r.lambda_max


def psd_sqrt(r: PsdOperator) -> PsdOperator:
    """Principal square root ``Q diag(sqrt(lambda)) Q^T``.

    Eigenvalues at the roundoff floor (``8 d eps lambda_max``) are treated as
    exact zeros. Their square roots are pure noise of order ``sqrt(eps)``,
    and the residual map would otherwise smear that noise across the
    null space of every rank-deficient iterate.
    """
    w = np.where(r.eigenvalues > _noise_floor(r), r.eigenvalues, 0.0)
    return _from_spectrum(np.sqrt(w), r.eigenvectors)


def _support_mask(r: PsdOperator, rank_tol: float) -> np.ndarray:
    # subnormal eigenvalues count as zero whatever lambda_max is: their
    # reciprocals overflow
    return (r.eigenvalues > rank_tol * r.lambda_max) & (r.eigenvalues >= TINY)


def pinv_psd(r: PsdOperator, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse of a PSD operator.

    Eigenvalues above ``rank_tol * lambda_max`` are inverted, the rest are
    treated as zero.  So are subnormal eigenvalues, whose reciprocals
    would overflow.
    """
    if rank_tol <= 0:
        raise ValueError("rank_tol must be positive")
    keep = _support_mask(r, rank_tol)
    q = r.eigenvectors[:, keep]
    return _frozen(_symmetrize((q / r.eigenvalues[keep]) @ q.T))


def inv_sqrt_psd(r: PsdOperator, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Pseudoinverse of ``r^{1/2}``, sharing the rank decision of :func:`pinv_psd`."""
    keep = _support_mask(r, rank_tol)
    q = r.eigenvectors[:, keep]
    return _frozen(_symmetrize((q / np.sqrt(r.eigenvalues[keep])) @ q.T))


class LoewnerResult(NamedTuple):
    holds: bool
    margin: float


def loewner_leq(a, b, tol: float = 1e-9) -> LoewnerResult:
    """Test ``a <= b`` in the Loewner order.

    ``margin`` is the smallest eigenvalue of ``b - a``; the inequality is
    accepted when ``margin >= -tol * (1 + ||b||_F)``.
    """
    a, b = _mat(a), _mat(b)
    _check_same_dim(a, b)
    diff = _symmetrize(b - a)
    margin = float(np.linalg.eigvalsh(diff)[0])
    return LoewnerResult(margin >= -tol * (1.0 + np.linalg.norm(b)), margin)


@dataclass(frozen=True, eq=False)
class Projection:
    """An orthogonal projection (symmetric idempotent)."""

    matrix: np.ndarray
    rank: int

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def complement(self) -> "Projection":
        return Projection(_frozen(np.eye(self.dim) - self.matrix), self.dim - self.rank)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)

    def __repr__(self):
        return f"Projection(dim={self.dim}, rank={self.rank})"

    @classmethod
    def zero(cls, dim: int) -> "Projection":
        return cls(_frozen(np.zeros((dim, dim))), 0)

    @classmethod
    def identity(cls, dim: int) -> "Projection":
        return cls(_frozen(np.eye(dim)), dim)


def as_projection(m, tol: float = 1e-10) -> Projection:
    """Validate ``m`` as an orthogonal projection.

    Raises :class:`NotProjection` when ``||P^2 - P||_F > tol * d`` or an
    eigenvalue is farther than ``tol`` from {0, 1}.
    """
    p = as_symmetric(m)
    d = p.shape[0]
    idem = float(np.linalg.norm(p @ p - p))
    if idem > tol * d:
        raise NotProjection(f"||P^2 - P||_F = {idem:.3g} exceeds {tol * d:.3g}")
    w = np.linalg.eigvalsh(p)
    off = np.minimum(np.abs(w), np.abs(w - 1.0))
    if off.max() > tol:
        bad = w[np.argmax(off)]
        raise NotProjection(f"eigenvalue {bad:.6g} is not within {tol:g} of 0 or 1")
    return Projection(p, int(np.sum(w > 0.5)))


@dataclass(frozen=True, eq=False)
class Subspace:
    """A subspace of R^d described by an orthonormal column frame (possibly empty)."""

    ambient_dim: int
    basis: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float)
        if b.size == 0:
            b = np.zeros((self.ambient_dim, 0))
        if b.ndim != 2 or b.shape[0] != self.ambient_dim:
            raise DimensionMismatch(f"basis shape {b.shape} does not match ambient dimension {self.ambient_dim}")
        object.__setattr__(self, "basis", _frozen(b))

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def projection(self) -> Projection:
        b = self.basis
        return Projection(_frozen(_symmetrize(b @ b.T)), self.dim)

    def complement(self) -> "Subspace":
        """Orthonormal frame of the orthogonal complement."""
        if self.dim == 0:
            return Subspace(self.ambient_dim, np.eye(self.ambient_dim))
        if self.dim == self.ambient_dim:
            return Subspace(self.ambient_dim, np.zeros((self.ambient_dim, 0)))
        return Subspace(self.ambient_dim, scipy.linalg.null_space(self.basis.T))

    def __repr__(self):
        return f"Subspace(ambient_dim={self.ambient_dim}, dim={self.dim})"

    @classmethod
    def full(cls, d: int) -> "Subspace":
        return cls(d, np.eye(d))

    @classmethod
    def trivial(cls, d: int) -> "Subspace":
        return cls(d, np.zeros((d, 0)))


def orthonormal_span(vectors, dim: int, rel_tol: float = 1e-12) -> Subspace:
    """Orthonormal frame for the span of ``vectors`` (rows or a d x k array).

    Uses QR with column pivoting and drops directions whose residual is
    below ``rel_tol`` times the largest column norm.
    """
    v = np.asarray(vectors, dtype=float)
    if v.size == 0:
        return Subspace.trivial(dim)
    if v.ndim == 1:
        v = v[None, :]
    if v.shape[1] != dim:
        raise DimensionMismatch(f"vectors have length {v.shape[1]}, expected {dim}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vectors have non-finite entries")
    q, r, _ = scipy.linalg.qr(v.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0:
        return Subspace.trivial(dim)
    rank = int(np.sum(diag > rel_tol * diag[0]))
    return Subspace(dim, q[:, :rank])


def proj_from_span(vectors: Sequence, dim: Optional[int] = None) -> Projection:
    """Orthogonal projection onto the span of a (possibly dependent) list of vectors.

    ``dim`` is required when ``vectors`` is empty.
    """
    if dim is None:
        if len(vectors) == 0:
            raise ValueError("dim is required for an empty vector list")
        dim = len(vectors[0])
    return orthonormal_span(vectors, dim).projection()


def _eigenspace(m, select) -> Subspace:
    w, q = np.linalg.eigh(_mat(m))
    return Subspace(q.shape[0], q[:, select(w)])


def kernel(p: Projection) -> Subspace:
    """Orthonormal basis of ``ker p`` (equivalently the range of ``I - p``)."""
    return _eigenspace(p.matrix, lambda w: w < 0.5)


def kernel_intersection(pa: Projection, pb: Projection, tol: float = RANK_TOL) -> Subspace:
    """``ker pa ∩ ker pb``, computed as the numerical kernel of the PSD sum ``pa + pb``."""
    _check_same_dim(pa.matrix, pb.matrix)
    return _eigenspace(pa.matrix + pb.matrix, lambda w: w <= tol)


def commutator_norm(a, b) -> float:
    """Frobenius norm of ``ab - ba``."""
    a, b = _mat(a), _mat(b)
    _check_same_dim(a, b)
    return float(np.linalg.norm(a @ b - b @ a))


def support_projection(r: PsdOperator, rank_tol: float = RANK_TOL) -> Projection:
    """Projection onto the span of eigenvectors with eigenvalue above ``rank_tol * lambda_max``."""
    q = r.eigenvectors[:, _support_mask(r, rank_tol)]
    return Projection(_frozen(_symmetrize(q @ q.T)), q.shape[1])


def support_subspace(r: PsdOperator, rank_tol: float = RANK_TOL) -> Subspace:
    return Subspace(r.dim, r.eigenvectors[:, _support_mask(r, rank_tol)])
