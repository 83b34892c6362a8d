"""Solve one Garnet instance with the primal-dual method and plain value iteration.

    python demos/quickstart.py
"""

import math
import time

import numpy as np

from wdrmdp import AmbiguityConfig, GarnetConfig, SolverConfig, duality_gap, garnet, sample_kernels, solve, vi

S, A, N, nb = 10, 5, 5, 0.2
inst, y0 = garnet(GarnetConfig(S, A, nb, seed=1))
ks = sample_kernels(y0, N, seed=2)
cfg = AmbiguityConfig("l2", 2, math.sqrt(nb * A))
eps = 0.1

t0 = time.perf_counter()
res = solve(inst, ks, cfg, SolverConfig(gap_tol=eps))
t1 = time.perf_counter()
print(f"pda: {res.iterations} iterations in {res.epochs} epochs, {t1 - t0:.2f} s")
print(f"     worst-case cost {res.objective:.4f}, certified gap {res.report.gap:.4f}")

t0 = time.perf_counter()
base = vi(inst, ks, cfg, eps)
t1 = time.perf_counter()
rep = duality_gap(base.policy, base.kernel, inst, ks, cfg, eps / 20)
print(f"vi:  {base.iterations} sweeps, {t1 - t0:.2f} s")
print(f"     worst-case cost {rep.upper:.4f}, certified gap {rep.gap:.4f}")

print("largest policy difference:", np.abs(res.policy - base.policy).max().round(3))
