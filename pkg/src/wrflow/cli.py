"""Command-line interface: ``wrflow {flow,short,compare,ensemble}``.

Exit codes: 0 success, 1 input error, 2 flow did not converge,
3 shorting methods disagree, 4 invariant violated.
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .ensemble import format_rows, run_ensemble
from .errors import IoError, MethodDisagreement, ValidationError, WRFlowError
from .flow import FlowConfig, energy_report, fixed_point_residual, run_flow, support_residual
from .formats import RunReport, emit_report, load_psd, resolve_projection, resolve_subspace
from .pipeline import Tolerances, check_invariants, compare
from .psd import CLIP_TOL, RANK_TOL, commutator_norm, kernel_intersection
from .shorting import shorted_intrinsic

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NONCONVERGED = 2
EXIT_DISAGREEMENT = 3
EXIT_INVARIANT = 4


class _Clock:
    """Collects wall-clock seconds per named phase."""

    def __init__(self):
        self.timings = {}
        self._t = time.perf_counter()

    def lap(self, name):
        now = time.perf_counter()
        self.timings[name] = now - self._t
        self._t = now


def _matrix(m):
    return np.asarray(m).tolist()


def _load_inputs(args):
    r0 = load_psd(args.r0)
    pa = resolve_projection(args.pa, r0.dim)
    pb = resolve_projection(args.pb, r0.dim)
    return r0, pa, pb


def _input_digest(r0, pa=None, pb=None, k=None):
    d = {
        "dim": r0.dim,
        "r0_fro": r0.fro,
        "r0_trace": float(np.trace(r0.matrix)),
        "r0_eigenvalues": r0.eigenvalues.tolist(),
    }
    if pa is not None:
        d["pa_rank"] = pa.rank
        d["pb_rank"] = pb.rank
        d["commutators"] = {
            "r0_pa": commutator_norm(r0, pa),
            "r0_pb": commutator_norm(r0, pb),
            "pa_pb": commutator_norm(pa, pb),
        }
    if k is not None:
        d["k_dim"] = k.dim
    return d


def _tolerances(cfg=None):
    t = {"clip_tol": CLIP_TOL, "rank_tol": RANK_TOL}
    if cfg is not None:
        t["stop_tol"] = cfg.stop_tol
        t["max_iter"] = cfg.max_iter
    t.update(Tolerances().as_dict())
    return t


def _flow_config(args):
    return FlowConfig(stop_tol=args.tol, max_iter=args.max_iter, ledger_enabled=args.ledger)


def _flow_results(trace, pa, pb):
    res = {
        "iterations": trace.iterate_count,
        "converged": trace.converged,
        "final_delta": trace.final_delta,
        "r_inf": _matrix(trace.r_inf),
        "fixed_point_residuals": {
            "a": fixed_point_residual(trace.r_inf, pa),
            "b": fixed_point_residual(trace.r_inf, pb),
        },
        "support_residual": support_residual(trace.r_inf, pa, pb),
    }
    if trace.ledger_enabled:
        energy = energy_report(trace)
        res["energy_residual"] = energy.residual_norm
        res["max_step_residual"] = energy.max_step_residual
        res["dissipated_trace"] = energy.dissipated_trace
        res["surviving_trace"] = energy.surviving_trace
    return res


def cmd_flow(args):
    """Run the alternating flow; returns ``(report, exit_code)``."""
    clock = _Clock()
    r0, pa, pb = _load_inputs(args)
    cfg = _flow_config(args)
    clock.lap("load")
    trace = run_flow(r0, pa, pb, cfg)
    clock.lap("flow")
    report = RunReport(
        command="flow",
        inputs=_input_digest(r0, pa, pb),
        tolerances=_tolerances(cfg),
        results=_flow_results(trace, pa, pb),
        timings=clock.timings,
    )
    return report, EXIT_OK if trace.converged else EXIT_NONCONVERGED


def cmd_short(args):
    """Shorted operator by both constructions; ``K`` from ``--k`` or from the projections."""
    clock = _Clock()
    r0 = load_psd(args.r0)
    if args.k is not None:
        k = resolve_subspace(args.k, r0.dim)
        pa = pb = None
    else:
        if args.pa is None or args.pb is None:
            raise ValidationError("short needs either --k or both --pa and --pb")
        pa = resolve_projection(args.pa, r0.dim)
        pb = resolve_projection(args.pb, r0.dim)
        k = kernel_intersection(pa, pb)
    clock.lap("load")
    shorted = shorted_intrinsic(r0, k)
    clock.lap("short")
    report = RunReport(
        command="short",
        inputs=_input_digest(r0, pa, pb, k),
        tolerances=_tolerances(),
        results={
            "s_short": _matrix(shorted.s),
            "s_schur": _matrix(shorted.s_schur),
            "m_dim": shorted.m_subspace.dim,
            "method_discrepancy": shorted.method_discrepancy,
        },
        timings=clock.timings,
    )
    return report, EXIT_OK


def cmd_compare(args):
    """Flow, shorting, intrinsic flow and gap analysis with invariant checks."""
    clock = _Clock()
    r0, pa, pb = _load_inputs(args)
    cfg = _flow_config(args)
    clock.lap("load")
    c = compare(r0, pa, pb, cfg)
    clock.lap("compare")
    violations = check_invariants(c)
    clock.lap("checks")

    res = _flow_results(c.trace, pa, pb)
    res.update(
        {
            "s_short": _matrix(c.s),
            "m_dim": c.shorted.m_subspace.dim,
            "method_discrepancy": c.shorted.method_discrepancy,
            "gap_fro": c.gap_fro,
            "g_spectrum": c.gap.g_spectrum.tolist(),
            "localization_residual": c.gap.localization_residual,
            "equality_flag": c.gap.equality_flag,
            "intrinsic_iterations": c.intrinsic.iterate_count,
            "intrinsic_converged": c.intrinsic.converged,
            "flow_agreement": c.flow_agreement(),
            "kernel_comparison": c.kernel.holds,
        }
    )
    if c.shortcut is not None:
        res["commuting_shortcut"] = _matrix(c.shortcut)
        res["shortcut_agreement"] = float(np.linalg.norm(c.shortcut.matrix - c.r_inf.matrix))
    res["violations"] = violations

    report = RunReport(
        command="compare",
        inputs=_input_digest(r0, pa, pb, c.k),
        tolerances=_tolerances(cfg),
        results=res,
        timings=clock.timings,
    )
    if violations:
        code = EXIT_INVARIANT
    elif not c.trace.converged:
        code = EXIT_NONCONVERGED
    else:
        code = EXIT_OK
    return report, code


def cmd_ensemble(args):
    """Random-instance sweep; returns ``(csv_text, exit_code)``."""
    if args.dim < 1 or args.count < 0 or args.jobs < 1:
        raise ValidationError("--dim and --jobs must be positive and --count nonnegative")
    cfg = FlowConfig(stop_tol=args.tol, max_iter=args.max_iter)
    rows = run_ensemble(args.seed, args.dim, args.count, args.jobs, args.commuting, cfg)
    bad = sum(1 for r in rows if r.violations or r.error)
    unconverged = sum(1 for r in rows if not r.converged)
    print(
        f"{len(rows)} trials: {unconverged} not converged, {bad} with violations or errors",
        file=sys.stderr,
    )
    return format_rows(rows), EXIT_INVARIANT if bad else EXIT_OK


class _Parser(argparse.ArgumentParser):
    """Usage errors are input errors: exit 1, keeping 2 for nonconvergence."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _add_flow_flags(p):
    p.add_argument("--r0", required=True, metavar="PATH", help="matrix file holding R_0")
    p.add_argument("--pa", required=True, metavar="SPEC", help="P_A: matrix file, span:v1;v2, zero or identity")
    p.add_argument("--pb", required=True, metavar="SPEC", help="P_B, same forms as --pa")
    p.add_argument("--tol", type=float, default=1e-12, help="relative stopping tolerance (default 1e-12)")
    p.add_argument("--max-iter", type=int, default=10000, help="iteration cap (default 10000)")
    p.add_argument("--ledger", action="store_true", help="record the dissipation ledger")
    p.add_argument("--out", default="-", metavar="PATH", help="report path (default stdout)")


def build_parser():
    parser = _Parser(
        prog="wrflow",
        description="Alternating weighted residual flows and shorted operators.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("flow", help="run the alternating residual flow")
    _add_flow_flags(p)
    p.add_argument("--no-timings", action="store_true", help="omit the timings section")
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("short", help="compute the shorted operator R_0|K")
    p.add_argument("--r0", required=True, metavar="PATH", help="matrix file holding R_0")
    p.add_argument("--pa", metavar="SPEC", help="P_A; K is then the common kernel of P_A and P_B")
    p.add_argument("--pb", metavar="SPEC", help="P_B, same forms as --pa")
    p.add_argument("--k", metavar="PATH", help="subspace file {dim, basis} or span:v1;v2")
    p.add_argument("--out", default="-", metavar="PATH", help="report path (default stdout)")
    p.add_argument("--no-timings", action="store_true", help="omit the timings section")
    p.set_defaults(func=cmd_short)

    p = sub.add_parser("compare", help="flow limit against the shorted operator")
    _add_flow_flags(p)
    p.add_argument("--no-timings", action="store_true", help="omit the timings section")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("ensemble", help="random-instance sweep written as CSV")
    p.add_argument("--dim", type=int, required=True, help="matrix dimension")
    p.add_argument("--count", type=int, required=True, help="number of trials")
    p.add_argument("--seed", type=int, required=True, help="ensemble seed; trial t uses the stream (seed, t)")
    p.add_argument("--out", default="-", metavar="PATH", help="CSV path (default stdout)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes; output does not depend on it")
    p.add_argument("--commuting", action="store_true", help="draw R_0, P_A, P_B with a shared eigenbasis")
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--max-iter", type=int, default=10000)
    p.set_defaults(func=cmd_ensemble)
    return parser


def _write_text(text, path):
    if path == "-":
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from exc


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        out, code = args.func(args)
        if isinstance(out, RunReport):
            emit_report(out, args.out, include_timings=not args.no_timings)
        else:
            _write_text(out, args.out)
    except MethodDisagreement as exc:
        print(f"wrflow: {exc}", file=sys.stderr)
        return EXIT_DISAGREEMENT
    except (WRFlowError, ValueError) as exc:
        print(f"wrflow: {exc}", file=sys.stderr)
        return EXIT_INPUT
    for v in getattr(out, "results", {}).get("violations", []):
        print(f"wrflow: invariant violated: {v}", file=sys.stderr)
    if code == EXIT_NONCONVERGED:
        print("wrflow: flow did not converge within --max-iter", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
