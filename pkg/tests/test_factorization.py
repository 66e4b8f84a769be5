import numpy as np
import pytest
from hypothesis import given, settings
from numpy.testing import assert_allclose

from conftest import R0_EX, S_EX, psd_with_projections, random_psd
from wrflow.errors import DimensionMismatch, OrderViolation
from wrflow.factorization import (
    IntrinsicContraction,
    commuting_shortcut,
    douglas_factor,
    gap,
    intrinsic_contraction,
    kernel_comparison,
    psi_map,
    run_intrinsic_flow,
)
from wrflow.flow import FlowConfig, run_flow
from wrflow.psd import (
    Projection,
    Subspace,
    kernel_intersection,
    loewner_leq,
    psd_sqrt,
    spectral_decompose,
    support_subspace,
)
from wrflow.shorting import shorted_schur, subspace_m

K_EX = Subspace(2, np.array([[0.0], [1.0]]))
P_M_EX = np.array([[1.0, -2.0], [-2.0, 4.0]]) / 5


def _contraction(t, r0):
    h = support_subspace(r0)
    return IntrinsicContraction(t=np.asarray(t, dtype=float), h_r0=h)


# -- Douglas factor ------------------------------------------------------------

def test_douglas_examples(example):
    r0, _, _ = example
    f = douglas_factor(r0, r0)
    assert_allclose(f.x, np.eye(2), atol=1e-12)
    f = douglas_factor(spectral_decompose(np.zeros((2, 2))), r0)
    assert not f.x.any()
    r1 = spectral_decompose(np.ones((2, 2)))
    f = douglas_factor(r1, r0)
    assert f.norm_bound <= 1 + 1e-9
    assert np.linalg.norm(f.x @ psd_sqrt(r0).matrix - np.sqrt(2) * np.full((2, 2), 0.5)) <= 1e-9


def test_douglas_requires_order(example):
    r0, _, _ = example
    with pytest.raises(OrderViolation):
        douglas_factor(r0, spectral_decompose(np.ones((2, 2))))


def test_douglas_random_pairs():
    rng = np.random.default_rng(8)
    for d in range(1, 7):
        b = random_psd(rng, d, rank=max(1, d - 1))
        # A = B^{1/2} C B^{1/2} with 0 <= C <= I keeps 0 <= A <= B
        c = random_psd(rng, d).matrix
        c = c / np.linalg.eigvalsh(c)[-1]
        hb = psd_sqrt(b).matrix
        a = spectral_decompose(hb @ c @ hb)
        f = douglas_factor(a, b)
        assert f.norm_bound <= 1 + 1e-9
        assert np.linalg.norm(psd_sqrt(a).matrix - f.x @ hb) <= 1e-8 * (1 + b.fro)


# -- intrinsic contraction -------------------------------------------------------

def test_intrinsic_contraction_examples(example):
    r0, _, _ = example
    assert_allclose(intrinsic_contraction(r0, r0).t, np.eye(2), atol=1e-12)
    assert not intrinsic_contraction(spectral_decompose(np.zeros((2, 2))), r0).t.any()
    t = intrinsic_contraction(spectral_decompose(S_EX), r0).t
    assert_allclose(t, P_M_EX, atol=1e-12)
    assert_allclose(subspace_m(r0, K_EX).projection().matrix, P_M_EX, atol=1e-12)


def test_intrinsic_contraction_requires_order(example):
    r0, _, _ = example
    with pytest.raises(OrderViolation):
        intrinsic_contraction(spectral_decompose(2 * R0_EX), r0)


def test_intrinsic_contraction_singular_r0():
    rng = np.random.default_rng(9)
    r0 = random_psd(rng, 5, rank=3)
    hb = psd_sqrt(r0).matrix
    c = random_psd(rng, 5).matrix
    c = c / np.linalg.eigvalsh(c)[-1]
    r = spectral_decompose(hb @ c @ hb)
    ic = intrinsic_contraction(r, r0)
    ph = ic.h_r0.projection().matrix
    assert ic.h_r0.dim == 3
    assert np.linalg.norm(ic.t - ph @ ic.t @ ph) <= 1e-10
    assert loewner_leq(np.zeros((5, 5)), ic.t).holds
    assert loewner_leq(ic.t, ph).holds
    assert np.linalg.norm(hb @ ic.t @ hb - r.matrix) <= 1e-8 * (1 + r0.fro)
    # uniqueness: the Douglas route X^T X gives the same contraction on H_{R_0}
    x = douglas_factor(r, r0).x
    assert np.linalg.norm(ph @ (x.T @ x) @ ph - ic.t) <= 1e-8


# -- psi map and intrinsic flow --------------------------------------------------

def test_psi_map_examples(example):
    r0, pa, _ = example
    ident = _contraction(np.eye(2), r0)
    # (R_0^{1/2})^{-1} R_1 (R_0^{1/2})^{-1} with R_0^{-1/2} = [[1, -1], [-1, 2]]
    assert_allclose(psi_map(ident, pa, r0).t, np.diag([0.0, 1.0]), atol=1e-12)
    assert not psi_map(_contraction(np.zeros((2, 2)), r0), pa, r0).t.any()
    p_m = _contraction(P_M_EX, r0)
    assert_allclose(psi_map(p_m, pa, r0).t, P_M_EX, atol=1e-12)
    half = _contraction(0.5 * P_M_EX, r0)
    assert_allclose(psi_map(half, pa, r0).t, 0.5 * P_M_EX, atol=1e-12)


def test_psi_map_dimension_check(example):
    r0, _, _ = example
    with pytest.raises(DimensionMismatch):
        psi_map(_contraction(np.eye(2), r0), Projection.zero(3), r0)


def test_intrinsic_flow_example(example):
    flow = run_intrinsic_flow(*example)
    assert flow.converged
    assert np.linalg.norm(flow.t_inf.t) <= 1e-10


def test_intrinsic_flow_commuting_triple():
    r0 = spectral_decompose(np.diag([2.0, 3.0, 5.0]))
    pa = Projection(np.diag([1.0, 0, 0]), 1)
    pb = Projection(np.diag([0, 1.0, 0]), 1)
    flow = run_intrinsic_flow(r0, pa, pb)
    k = kernel_intersection(pa, pb)
    p_m = subspace_m(r0, k).projection().matrix
    assert_allclose(flow.t_inf.t, p_m, atol=1e-8)


def test_intrinsic_flow_r0_supported_in_k():
    r0 = spectral_decompose(np.diag([0.0, 3.0, 1.0]))
    pa = Projection(np.diag([1.0, 0, 0]), 1)
    flow = run_intrinsic_flow(r0, pa, Projection.zero(3))
    ph = support_subspace(r0).projection().matrix
    assert_allclose(flow.t_inf.t, ph, atol=1e-12)
    assert_allclose(subspace_m(r0, kernel_intersection(pa, Projection.zero(3))).projection().matrix, ph, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(psd_with_projections(max_dim=4))
def test_intrinsic_images_track_ambient_iterates(inst):
    r0m, pa, pb = inst
    r0 = spectral_decompose(r0m)
    cfg = FlowConfig(max_iter=40, keep_iterates=True)
    amb = run_flow(r0, pa, pb, cfg)
    intr = run_intrinsic_flow(r0, pa, pb, cfg)
    scale = 1 + r0.fro
    for a, b in zip(amb.iterates, intr.images):
        assert np.linalg.norm(a.matrix - b) <= 1e-7 * scale


# -- gap -----------------------------------------------------------------------

def test_gap_example(example):
    r0, pa, pb = example
    trace = run_flow(r0, pa, pb)
    t_inf = run_intrinsic_flow(r0, pa, pb).t_inf
    g = gap(r0, K_EX, t_inf, trace.r_inf)
    assert_allclose(g.g, P_M_EX, atol=1e-9)
    assert_allclose(g.gap_operator, S_EX, atol=1e-9)
    assert g.localization_residual <= 1e-9
    assert not g.equality_flag
    assert np.sum(g.g_spectrum > 0.5) == 1


def test_gap_commuting_triple():
    r0 = spectral_decompose(np.diag([2.0, 3.0, 5.0]))
    pa = Projection(np.diag([1.0, 0, 0]), 1)
    pb = Projection(np.diag([0, 1.0, 0]), 1)
    k = kernel_intersection(pa, pb)
    g = gap(r0, k, run_intrinsic_flow(r0, pa, pb).t_inf, run_flow(r0, pa, pb).r_inf)
    assert np.linalg.norm(g.g) <= 1e-8
    assert g.equality_flag


def test_gap_zero_operator():
    r0 = spectral_decompose(np.zeros((2, 2)))
    t = _contraction(np.zeros((2, 2)), r0)
    g = gap(r0, Subspace.full(2), t, r0)
    assert not g.g.any() and not g.gap_operator.any()
    assert g.localization_residual == 0.0
    assert g.equality_flag


# -- commuting shortcut and kernel comparison ------------------------------------

def test_commuting_shortcut_examples(example):
    r0 = spectral_decompose(np.diag([2.0, 3.0, 5.0]))
    pa = Projection(np.diag([1.0, 0, 0]), 1)
    pb = Projection(np.diag([0, 1.0, 0]), 1)
    assert_allclose(commuting_shortcut(r0, pa, pb).matrix, np.diag([0, 0, 5.0]))
    assert commuting_shortcut(*example) is None
    z = Projection.zero(3)
    assert_allclose(commuting_shortcut(r0, z, z).matrix, r0.matrix)


def test_kernel_comparison_examples():
    s = spectral_decompose(S_EX)
    assert kernel_comparison(s, spectral_decompose(np.zeros((2, 2)))).holds
    assert kernel_comparison(s, s).holds
    res = kernel_comparison(s, spectral_decompose(np.diag([1.0, 0.0])))
    assert not res.holds
    assert_allclose(np.abs(res.witness), [1, 0])


def test_shorted_dominates_limit_random():
    # R_n <= S only holds in the limit, so unconverged runs are skipped;
    # the flow may converge sublinearly (a lone rank-one P_A with P_B = 0
    # is the typical slow case)
    rng = np.random.default_rng(12)
    checked = 0
    for d in [2, 3, 4, 5] * 3:
        r0 = random_psd(rng, d)
        pa = Subspace(d, np.linalg.qr(rng.standard_normal((d, 1)))[0]).projection()
        pb = Subspace(d, np.linalg.qr(rng.standard_normal((d, 1)))[0]).projection()
        trace = run_flow(r0, pa, pb, FlowConfig(max_iter=3000))
        if not trace.converged:
            continue
        s = shorted_schur(r0, kernel_intersection(pa, pb))
        assert loewner_leq(trace.r_inf, s, 1e-8).holds
        checked += 1
    assert checked >= 6
