"""Shared fixtures, random instances and hypothesis strategies."""

import numpy as np
import pytest
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from wrflow.psd import Projection, Subspace, spectral_decompose

# -- acceptance verdicts -----------------------------------------------------------
# Tests using the ``criterion`` fixture fill in a number, a title and a detail
# line; the verdicts are printed together at the end of the session.

_VERDICTS = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


@pytest.fixture
def criterion(request):
    info = {"number": 0, "title": request.node.name, "detail": ""}
    yield info
    rep = getattr(request.node, "rep_call", None)
    status = "PASS" if rep is not None and rep.passed else "FAIL"
    line = f"criterion {info['number']:>2} {status}: {info['title']} ({info['detail']})"
    _VERDICTS.append((info["number"], line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for _, line in sorted(_VERDICTS):
        terminalreporter.write_line(line)


# the worked 2x2 example: R_0 = [[5, 3], [3, 2]], P_A = |e1><e1|, P_B = 0
R0_EX = np.array([[5.0, 3.0], [3.0, 2.0]])
PA_EX = np.diag([1.0, 0.0])
S_EX = np.diag([0.0, 0.2])


@pytest.fixture
def example():
    return (
        spectral_decompose(R0_EX),
        Projection(np.diag([1.0, 0.0]), 1),
        Projection.zero(2),
    )


def random_psd(rng, dim, rank=None):
    """``A^T A`` with ``A`` a ``rank x dim`` Gaussian matrix."""
    a = rng.standard_normal((dim if rank is None else rank, dim))
    return spectral_decompose(a.T @ a)


def random_frame(rng, dim):
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q


def random_subspace(rng, dim, k):
    return Subspace(dim, random_frame(rng, dim)[:, :k])


def random_projection(rng, dim, rank):
    return random_subspace(rng, dim, rank).projection()


_entries = st.floats(-3.0, 3.0, allow_nan=False, allow_infinity=False, width=64)


@st.composite
def psd_matrices(draw, min_dim=1, max_dim=5, allow_singular=True):
    """``A^T A`` for an integer-rounded Gaussian-like ``A``, possibly rank deficient."""
    d = draw(st.integers(min_dim, max_dim))
    rows = draw(st.integers(1 if allow_singular else d, d))
    a = draw(hnp.arrays(np.float64, (rows, d), elements=_entries))
    return a.T @ a


@st.composite
def psd_with_projections(draw, max_dim=4):
    """``(R_0, P_A, P_B)`` with ``P_A``, ``P_B`` spanned by random frames."""
    r0 = draw(psd_matrices(2, max_dim))
    d = r0.shape[0]
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    ra = draw(st.integers(0, d))
    rb = draw(st.integers(0, d))
    return r0, random_projection(rng, d, ra), random_projection(rng, d, rb)
