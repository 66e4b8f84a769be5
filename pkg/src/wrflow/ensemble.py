"""Reproducible random instances and the ensemble sweep.

Each trial draws from a Philox generator keyed by ``(seed, trial)``, so a
row depends only on ``(seed, dim, trial)`` and the sweep can be split
across processes without changing its output.

Distributions (a fixed convention):

* ``R_0 = A^T A`` with ``A`` a ``dim x dim`` standard Gaussian matrix;
* ``P_A``, ``P_B`` project onto the first ``r`` columns of an orthonormalized
  Gaussian frame, with ``r`` uniform on ``{0, ..., dim}``;
* in commuting mode all three share one random orthonormal eigenbasis,
  and each projection keeps a random subset of ``r`` eigenvectors.
"""

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Iterable, List, Tuple

import numpy as np

from .flow import FlowConfig
from .pipeline import check_invariants, compare
from .psd import Projection, PsdOperator, Subspace, spectral_decompose

__all__ = ["EnsembleRow", "trial_rng", "draw_instance", "ensemble_row", "run_ensemble", "format_rows"]


@dataclass
class EnsembleRow:
    seed: int
    dim: int
    trial: int
    comm_r0_pa: float
    comm_r0_pb: float
    comm_pa_pb: float
    iterations: int
    gap_fro: float
    dissipated_trace: float
    surviving_trace: float
    converged: bool
    violations: str = ""
    error: str = ""


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, trial], dtype=np.uint64)))


def _orthonormal_frame(rng, dim):
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    # fix column signs so the frame is a deterministic function of the draw
    return q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))


def _frame_projection(frame, cols) -> Projection:
    return Subspace(frame.shape[0], frame[:, cols]).projection()


def draw_instance(seed: int, trial: int, dim: int, commuting: bool = False) -> Tuple[PsdOperator, Projection, Projection]:
    """Draw ``(R_0, P_A, P_B)`` for one trial."""
    rng = trial_rng(seed, trial)
    a = rng.standard_normal((dim, dim))
    rank_a = int(rng.integers(0, dim + 1))
    rank_b = int(rng.integers(0, dim + 1))
    if not commuting:
        r0 = spectral_decompose(a.T @ a)
        pa = _frame_projection(_orthonormal_frame(rng, dim), slice(0, rank_a))
        pb = _frame_projection(_orthonormal_frame(rng, dim), slice(0, rank_b))
        return r0, pa, pb
    q = _orthonormal_frame(rng, dim)
    lam = np.linalg.eigvalsh(a.T @ a)
    r0 = spectral_decompose((q * lam) @ q.T)
    pa = _frame_projection(q, np.sort(rng.permutation(dim)[:rank_a]))
    pb = _frame_projection(q, np.sort(rng.permutation(dim)[:rank_b]))
    return r0, pa, pb


def ensemble_row(seed: int, dim: int, trial: int, commuting: bool = False, cfg: FlowConfig = FlowConfig()) -> EnsembleRow:
    """Run the full comparison on one trial; failures are recorded, not raised."""
    row = EnsembleRow(seed, dim, trial, *([float("nan")] * 3), 0, *([float("nan")] * 3), False)
    try:
        r0, pa, pb = draw_instance(seed, trial, dim, commuting)
        c = compare(r0, pa, pb, cfg)
    except Exception as exc:  # one bad trial must not abort the sweep
        row.error = f"{type(exc).__name__}: {exc}"
        return row
    row.comm_r0_pa = c.commutators["r0_pa"]
    row.comm_r0_pb = c.commutators["r0_pb"]
    row.comm_pa_pb = c.commutators["pa_pb"]
    row.iterations = c.trace.iterate_count
    row.gap_fro = c.gap_fro
    row.dissipated_trace = c.energy.dissipated_trace
    row.surviving_trace = c.energy.surviving_trace
    row.converged = c.trace.converged
    row.violations = ";".join(check_invariants(c))
    return row


def _row_task(args):
    return ensemble_row(*args)


def run_ensemble(
    seed: int, dim: int, count: int, jobs: int = 1, commuting: bool = False, cfg: FlowConfig = FlowConfig()
) -> List[EnsembleRow]:
    """All ``count`` rows in trial order; ``jobs > 1`` uses worker processes."""
    tasks = [(seed, dim, trial, commuting, cfg) for trial in range(count)]
    if jobs <= 1:
        return [_row_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_row_task, tasks))


def format_rows(rows: Iterable[EnsembleRow]) -> str:
    """CSV text: one header line, then one line per trial with 17-digit reals."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f.name for f in fields(EnsembleRow)])
    for row in rows:
        writer.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in asdict(row).values()])
    return buf.getvalue()
