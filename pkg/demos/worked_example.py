"""Walk through the 2x2 example by hand, then let the library confirm it.

Run with ``python3 demos/worked_example.py``.
"""
import numpy as np

from wrflow.flow import FlowConfig, energy_report, residual_map, run_flow
from wrflow.pipeline import compare
from wrflow.psd import Projection, kernel_intersection, psd_sqrt, spectral_decompose
from wrflow.shorting import shorted_intrinsic, shorted_schur

np.set_printoptions(precision=6, suppress=True)

# R_0 = [[5, 3], [3, 2]] has the integer square root [[2, 1], [1, 1]].
r0 = spectral_decompose(np.array([[5.0, 3.0], [3.0, 2.0]]))
pa = Projection(np.diag([1.0, 0.0]), 1)  # projection onto e1
pb = Projection.zero(2)  # P_B = 0, so every B step leaves R alone
print("R_0^{1/2} =\n", psd_sqrt(r0).matrix)

# One A step: R_1 = R_0^{1/2} (I - P_A) R_0^{1/2} = [[1, 1], [1, 1]].
r1 = residual_map(r0, pa)
print("R_1 =\n", r1.matrix)

# R_1 has square root R_1 / sqrt(2), so each further A step halves it.
trace = run_flow(r0, pa, pb, FlowConfig(keep_iterates=True))
for n in (1, 2, 3, 10):
    print(f"R_{n} = 2^-{n - 1} R_1 :", np.allclose(trace.iterates[2 * n].matrix, 2.0 ** (1 - n) * r1.matrix))
print(f"stopped after {trace.iterate_count} steps, ||R_inf||_F = {np.linalg.norm(trace.r_inf.matrix):.2e}")

# The energy that left the system adds back up to R_0.
rep = energy_report(trace)
print(f"dissipated trace {rep.dissipated_trace:.12f} of {np.trace(r0.matrix):.0f}, ledger residual {rep.residual_norm:.1e}")

# The common kernel is span(e2), and shorting R_0 onto it keeps 1/(R_0^{-1})_22 = 1/5.
k = kernel_intersection(pa, pb)
res = shorted_intrinsic(r0, k)
print("S (intrinsic) =\n", res.s.matrix)
print("S (Schur)     =\n", shorted_schur(r0, k).matrix)
print("M is spanned by", res.m_subspace.basis.ravel())

# The flow dissipates everything, but S keeps 0.2: the flow undershoots the shorted operator.
c = compare(r0, pa, pb)
print(f"||S - R_inf||_F = {c.gap_fro:.12f}")
print("G = P_M - T_inf =\n", c.gap.g)
print("R_0^{1/2} G R_0^{1/2} =\n", c.gap.gap_operator)
print("equality flag:", c.gap.equality_flag)
