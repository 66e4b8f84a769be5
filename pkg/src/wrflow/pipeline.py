"""Run the flow, the shorting constructions and the gap analysis on one instance."""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .factorization import (
    GapResult,
    IntrinsicFlow,
    KernelComparison,
    commuting_shortcut,
    gap,
    intrinsic_contraction,
    kernel_comparison,
    run_intrinsic_flow,
)
from .flow import (
    EnergyReport,
    FlowConfig,
    FlowTrace,
    energy_report,
    fixed_point_residual,
    run_flow,
    support_residual,
)
from .psd import (
    Projection,
    PsdOperator,
    Subspace,
    commutator_norm,
    kernel_intersection,
    loewner_leq,
    psd_sqrt,
)
from .shorting import ShortedResult, shorted_intrinsic

__all__ = ["Tolerances", "Comparison", "compare", "check_invariants"]


@dataclass(frozen=True)
class Tolerances:
    """Acceptance thresholds applied by :func:`check_invariants`.

    Each bound is multiplied by ``1 + ||R_0||_F`` except where noted.
    """

    monotone: float = 1e-9
    support: float = 1e-6
    fixed_point: float = 1e-8
    ledger_step: float = 1e-10
    # also scaled by the iteration count
    ledger_total: float = 1e-9
    sandwich: float = 1e-8
    # contraction bound T_inf <= P_M, scaled by 1 + ||P_M||_F
    contraction: float = 1e-9
    localization: float = 1e-8
    equality: float = 1e-7
    method: float = 1e-8
    flow_agreement: float = 1e-7

    def as_dict(self) -> Dict[str, float]:
        return dict(self.__dict__)


@dataclass(eq=False)
class Comparison:
    r0: PsdOperator
    pa: Projection
    pb: Projection
    k: Subspace
    trace: FlowTrace
    energy: EnergyReport
    shorted: ShortedResult
    intrinsic: IntrinsicFlow
    gap: GapResult
    kernel: KernelComparison
    shortcut: Optional[PsdOperator]
    commutators: Dict[str, float] = field(default_factory=dict)

    @property
    def r_inf(self) -> PsdOperator:
        return self.trace.r_inf

    @property
    def s(self) -> PsdOperator:
        return self.shorted.s

    @property
    def gap_fro(self) -> float:
        return float(np.linalg.norm(self.shorted.s_schur.matrix - self.trace.r_inf.matrix))

    def flow_localization(self) -> float:
        """Localization residual with ``G = P_M - T_inf`` taken from the intrinsic flow."""
        root0 = psd_sqrt(self.r0).matrix
        g = self.gap.p_m.matrix - self.intrinsic.t_inf.t
        return float(np.linalg.norm(self.gap.gap_operator - root0 @ g @ root0))

    def flow_agreement(self) -> float:
        """``||R_0^{1/2} T_inf R_0^{1/2} - R_inf||_F`` between the intrinsic and ambient flows."""
        root0 = psd_sqrt(self.r0).matrix
        image = root0 @ self.intrinsic.t_inf.t @ root0
        return float(np.linalg.norm(image - self.trace.r_inf.matrix))


def compare(
    r0: PsdOperator,
    pa: Projection,
    pb: Projection,
    cfg: FlowConfig = FlowConfig(),
    shortcut_tol: float = 1e-10,
    trace: Optional[FlowTrace] = None,
) -> Comparison:
    """Flow, shorted operator, intrinsic flow and gap for one ``(R_0, P_A, P_B)``.

    ``trace`` may supply an ambient run already made with the ledger on.
    """
    if trace is None:
        cfg_ledger = FlowConfig(cfg.stop_tol, cfg.max_iter, cfg.keep_iterates, ledger_enabled=True)
        trace = run_flow(r0, pa, pb, cfg_ledger)
    elif trace.r0 is not r0 or not trace.ledger_enabled:
        raise ValueError("trace must come from a ledger-enabled run on the same r0")
    k = kernel_intersection(pa, pb)
    shorted = shorted_intrinsic(r0, k)
    intrinsic = run_intrinsic_flow(r0, pa, pb, cfg)
    # The gap identity is a statement about one limit, so G is built from the
    # contraction representing the ambient R_inf.  The independently iterated
    # T_inf is compared with it through flow_agreement at the end-to-end tier.
    t_limit = intrinsic_contraction(trace.r_inf, r0, check=False)
    g = gap(r0, k, t_limit, trace.r_inf)
    return Comparison(
        r0=r0,
        pa=pa,
        pb=pb,
        k=k,
        trace=trace,
        energy=energy_report(trace),
        shorted=shorted,
        intrinsic=intrinsic,
        gap=g,
        kernel=kernel_comparison(shorted.s, trace.r_inf),
        shortcut=commuting_shortcut(r0, pa, pb, shortcut_tol),
        commutators={
            "r0_pa": commutator_norm(r0, pa),
            "r0_pb": commutator_norm(r0, pb),
            "pa_pb": commutator_norm(pa, pb),
        },
    )


def check_invariants(c: Comparison, tol: Tolerances = Tolerances()) -> List[str]:
    """Names of the invariants violated by a comparison (empty when all hold).

    Properties of the limit itself (support, fixed point, the sandwich
    ``0 <= R_inf <= S <= R_0``, ``T_inf <= P_M``, kernel inclusion, the
    commuting shortcut) are only checked when the flow converged.  The
    ledger, method agreement, gap localization and equality-flag checks are
    identities that hold at every iterate and are always checked.
    """
    scale = 1.0 + c.r0.fro
    failed = []
    if c.energy.max_step_residual > tol.ledger_step * scale:
        failed.append("ledger_step")
    if c.energy.residual_norm > tol.ledger_total * scale * c.trace.iterate_count:
        failed.append("ledger_total")
    if c.shorted.method_discrepancy > tol.method * scale:
        failed.append("method_agreement")
    if c.gap.localization_residual > tol.localization * scale:
        failed.append("localization")
    if c.gap.equality_flag != (c.gap_fro <= tol.equality * scale):
        failed.append("equality_flag")
    if c.flow_agreement() > tol.flow_agreement * scale:
        failed.append("flow_agreement")
    if not c.trace.converged:
        return failed

    r_inf, s, r0 = c.r_inf.matrix, c.s.matrix, c.r0.matrix
    if support_residual(c.r_inf, c.pa, c.pb) > tol.support * scale:
        failed.append("support")
    if max(fixed_point_residual(c.r_inf, c.pa), fixed_point_residual(c.r_inf, c.pb)) > tol.fixed_point * scale:
        failed.append("fixed_point")
    zero = np.zeros_like(r0)
    for name, (a, b) in {
        "sandwich_r_inf_nonneg": (zero, r_inf),
        "sandwich_r_inf_le_s": (r_inf, s),
        "sandwich_s_le_r0": (s, r0),
    }.items():
        if loewner_leq(a, b).margin < -tol.sandwich * scale:
            failed.append(name)
    t = c.intrinsic.t_inf.t
    if not loewner_leq(np.zeros_like(t), t, tol.contraction).holds:
        failed.append("contraction_nonneg")
    if not loewner_leq(t, c.gap.p_m.matrix, tol.contraction).holds:
        failed.append("contraction_le_p_m")
    if not c.kernel.holds:
        failed.append("kernel_comparison")
    if c.shortcut is not None and np.linalg.norm(c.shortcut.matrix - r_inf) > tol.flow_agreement * scale:
        failed.append("commuting_shortcut")
    return failed
