"""How often does the flow stop short of the shorted operator?

Draws a small ensemble of generic and commuting triples, tabulates the gap
and the iteration count, then looks at one slowly converging instance.
Run with ``python3 demos/gap_survey.py`` (under a minute).
"""
import numpy as np

from wrflow.ensemble import run_ensemble
from wrflow.flow import FlowConfig, run_flow
from wrflow.psd import Projection, Subspace, spectral_decompose

SEED = 7
DIM = 4
COUNT = 40
CFG = FlowConfig(max_iter=2000)  # a short cap keeps the demo quick

# %% generic versus commuting triples
for commuting in (False, True):
    rows = run_ensemble(SEED, DIM, COUNT, commuting=commuting, cfg=CFG)
    gaps = np.array([r.gap_fro for r in rows])
    iters = np.array([r.iterations for r in rows])
    conv = np.array([r.converged for r in rows])
    label = "commuting" if commuting else "generic"
    print(f"{label:>9}: gap > 1e-7 in {np.sum(gaps[conv] > 1e-7)}/{np.sum(conv)} converged trials, "
          f"max gap {gaps[conv].max():.3g}; "
          f"median iterations {int(np.median(iters))}, unconverged {np.sum(~conv)}")

# Commuting triples never show a gap.  Generic triples often do.  The size
# of the commutators is only loosely related to the gap, so the gap is
# measured here rather than predicted.
rows = run_ensemble(SEED, DIM, COUNT, cfg=CFG)
comm = np.array([max(r.comm_r0_pa, r.comm_r0_pb, r.comm_pa_pb) for r in rows])
gaps = np.array([r.gap_fro for r in rows])
print("rank correlation of largest commutator and gap:",
      f"{np.corrcoef(np.argsort(np.argsort(comm)), np.argsort(np.argsort(gaps)))[0, 1]:.2f}")

# %% a slow case
# A single rank-one P_A against a full-rank R_0 (with P_B = 0) loses energy
# along one direction per step, and the decrements shrink polynomially
# rather than geometrically.  P_B = 0 makes every B step a no-op, so only
# the A steps (odd indices) are shown.
rng = np.random.default_rng(3)
a = rng.standard_normal((DIM, DIM))
r0 = spectral_decompose(a.T @ a)
v = np.linalg.qr(rng.standard_normal((DIM, 1)))[0]
pa = Subspace(DIM, v).projection()
trace = run_flow(r0, pa, Projection.zero(DIM), FlowConfig(max_iter=4000))
a_steps = np.asarray(trace.deltas)[1::2]
for n in (1, 10, 100, 1000, 1999):
    print(f"A step {n:>4}: change {a_steps[n]:.3e}")
print("converged within 4000 steps:", trace.converged)
