"""Wall time of the primal-dual solver as the number of samples grows.

    python demos/scaling.py [S] [A]
"""

import math
import statistics
import sys
import time

from wdrmdp import AmbiguityConfig, GarnetConfig, SolverConfig, garnet, sample_kernels, solve

S = int(sys.argv[1]) if len(sys.argv) > 1 else 10
A = int(sys.argv[2]) if len(sys.argv) > 2 else 5
cfg = AmbiguityConfig("l2", 2, math.sqrt(0.2 * A))

# compile the kernels outside the timed runs
inst, y0 = garnet(GarnetConfig(3, 2, seed=0))
solve(inst, sample_kernels(y0, 2), cfg, SolverConfig(gap_tol=1.0))

print(f"{'N':>4} {'median s':>9} {'iterations':>10}")
for N in (2, 5, 10, 20, 40):
    times, iters = [], []
    for seed in range(3):
        inst, y0 = garnet(GarnetConfig(S, A, seed=seed))
        ks = sample_kernels(y0, N, seed=seed + 100)
        t0 = time.perf_counter()
        res = solve(inst, ks, cfg, SolverConfig(gap_tol=0.1))
        times.append(time.perf_counter() - t0)
        iters.append(res.iterations)
    print(f"{N:>4} {statistics.median(times):>9.3f} {int(statistics.median(iters)):>10}")
