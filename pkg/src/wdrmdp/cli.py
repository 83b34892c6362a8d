"""Batch experiments: solvers over instance grids, one CSV row per run.

    wdrmdp --family garnet --grid-s 10 --grid-a 10 --grid-n 5,10 --reps 3 --out runs.csv
"""

import argparse
import csv
from dataclasses import dataclass, field
import logging
import math
import os
from pathlib import Path
import sys
import time

import numpy as np

from . import baselines
from .ambiguity import AmbiguityConfig
from .gap import duality_gap
from .instances import default_radius, make_instance
from .io import save_instance
from .pda import SolverConfig, solve

log = logging.getLogger(__name__)

SOLVERS = ("pda", "vi", "gsvi", "avi", "anderson")
FAMILIES = ("garnet", "machine", "forest")
COLUMNS = [
    "family", "S", "A", "N", "metric", "order", "theta", "solver", "seed",
    "status", "wall_ms", "iterations", "oracle_calls", "gap", "value",
]
NON_TIMING = [c for c in COLUMNS if c != "wall_ms"]

_BASELINES = {
    "vi": baselines.vi,
    "gsvi": baselines.gauss_seidel_vi,
    "avi": baselines.accelerated_vi,
    "anderson": baselines.anderson_vi,
}


@dataclass
class ExperimentPlan:
    family: str = "garnet"
    grid_s: list = field(default_factory=lambda: [10])
    grid_a: list = field(default_factory=lambda: [10])
    grid_n: list = field(default_factory=lambda: [5])
    metric: str = "l2"
    order: str = "2"
    theta: object = "auto"
    eps: float = 0.1
    solvers: list = field(default_factory=lambda: list(SOLVERS))
    reps: int = 5
    seed: int = 0
    discount: float = 0.8
    branching: float = 0.2
    max_epochs: int = 500
    dump: str = None
    trace: str = None  # directory for per-run trace CSVs
    jobs: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if not (self.grid_s and self.grid_a and self.grid_n):
            raise ValueError("size grids must be nonempty")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        bad = [s for s in self.solvers if s not in SOLVERS]
        if bad or not self.solvers:
            raise ValueError(f"unknown solvers {bad}; choose from {SOLVERS}")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.family == "forest" and any(a not in (2, 3) for a in self.grid_a):
            raise ValueError("forest instances have 2 actions (3 with the no-op action)")

    def actions(self):
        return [2] if self.family == "machine" else list(self.grid_a)

    def points(self):
        for S in self.grid_s:
            for A in self.actions():
                for N in self.grid_n:
                    yield S, A, N

    def radius(self, A):
        if str(self.theta).lower() == "auto":
            return default_radius(self.family, self.branching, A)
        return float(self.theta)


def _run_one(plan, S, A, N, seed, solver, inst, ks, cfg, trace_dir):
    row = {
        "family": plan.family, "S": S, "A": A, "N": N, "metric": cfg.metric,
        "order": cfg.order_label(), "theta": cfg.theta, "solver": solver, "seed": seed,
    }
    try:
        t0 = time.perf_counter()
        if solver == "pda":
            sc = SolverConfig(gap_tol=plan.eps, max_epochs=plan.max_epochs, seed=seed)
            res = solve(inst, ks, cfg, sc)
            wall = time.perf_counter() - t0
            gap = res.report.gap
            value = res.report.upper
            iters, calls = res.iterations, res.iterations * S
            status = "ok" if res.converged else "not_converged"
            records = [(r.epoch, r.iterations, r.wall_time, r.gap, r.value_change) for r in res.trace]
            header = ["epoch", "iterations", "wall_time", "gap", "value_change"]
        else:
            res = _BASELINES[solver](inst, ks, cfg, plan.eps)
            wall = time.perf_counter() - t0
            value = float(inst.p0 @ res.value)
            rep = duality_gap(res.policy, res.kernel, inst, ks, cfg, plan.eps / 20.0)
            gap = rep.gap
            iters, calls = res.iterations, res.oracle_calls
            status = "ok" if res.converged else "not_converged"
            records = res.trace
            header = ["iteration", "residual", "oracle_calls", "wall_time"]
        row.update(status=status, wall_ms=round(1000.0 * wall, 3), iterations=iters,
                   oracle_calls=calls, gap=gap, value=value)
        if trace_dir is not None:
            name = f"{plan.family}_S{S}_A{A}_N{N}_seed{seed}_{solver}.csv"
            with open(Path(trace_dir) / name, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(header)
                w.writerows(records)
    except Exception as exc:  # recorded, the plan goes on
        log.warning("run %s failed: %s", row, exc)
        row.update(status=f"error: {type(exc).__name__}: {exc}", wall_ms="", iterations="",
                   oracle_calls="", gap="", value="")
    return row


def _run_point(plan, S, A, N):
    rows = []
    for r in range(plan.reps):
        seed = plan.seed + r
        inst, y0, ks = make_instance(plan.family, S, A, N, seed, plan.branching, plan.discount)
        cfg = AmbiguityConfig(plan.metric, plan.order, plan.radius(A))
        if plan.dump is not None:
            save_instance(Path(plan.dump) / f"{plan.family}_S{S}_A{A}_N{N}_seed{seed}.json", inst, ks, cfg)
        for solver in plan.solvers:
            rows.append(_run_one(plan, S, A, N, seed, solver, inst, ks, cfg, plan.trace))
    return rows


def summarize(rows):
    """Mean rows per (grid point, solver) over the successful runs."""
    groups = {}
    for row in rows:
        if row["status"] != "ok":
            continue
        key = tuple(row[k] for k in ("family", "S", "A", "N", "metric", "order", "theta", "solver"))
        groups.setdefault(key, []).append(row)
    out = []
    for key, grp in groups.items():
        mean = dict(zip(("family", "S", "A", "N", "metric", "order", "theta", "solver"), key))
        mean.update(seed="", status="mean")
        for col in ("wall_ms", "iterations", "oracle_calls", "gap", "value"):
            mean[col] = float(np.mean([g[col] for g in grp]))
        out.append(mean)
    return out


def run_plan(plan):
    """Run every grid point, repetition and solver; returns run rows then mean rows."""
    for d in (plan.dump, plan.trace):
        if d is not None:
            os.makedirs(d, exist_ok=True)
    points = list(plan.points())
    if plan.jobs > 1 and len(points) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=plan.jobs) as pool:
            chunks = list(pool.map(_run_point, [plan] * len(points), *zip(*points)))
    else:
        chunks = [_run_point(plan, *p) for p in points]
    rows = [r for chunk in chunks for r in chunk]
    return rows + summarize(rows)


def write_csv(rows, fh):
    w = csv.DictWriter(fh, fieldnames=COLUMNS)
    w.writeheader()
    for row in rows:
        w.writerow(row)


def _int_list(text):
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}")
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError("grid values must be positive integers")
    return vals


def _theta(text):
    if text.lower() == "auto":
        return "auto"
    val = float(text)
    if not (val >= 0 and math.isfinite(val)):
        raise argparse.ArgumentTypeError("theta must be a nonnegative number or 'auto'")
    return val


def build_parser():
    p = argparse.ArgumentParser(prog="wdrmdp", description="Run robust MDP solvers over instance grids.")
    p.add_argument("--family", choices=FAMILIES, default="garnet")
    p.add_argument("--grid-s", type=_int_list, default=[10], help="comma list of state counts")
    p.add_argument("--grid-a", type=_int_list, default=[10], help="comma list of action counts")
    p.add_argument("--grid-n", type=_int_list, default=[5], help="comma list of sample counts")
    p.add_argument("--metric", choices=("l1", "l2", "linf"), default="l2")
    p.add_argument("--order", choices=("1", "2", "inf"), default="2")
    p.add_argument("--theta", type=_theta, default="auto", help="radius, or 'auto' for the family default")
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--discount", type=float, default=0.8)
    p.add_argument("--solvers", default=",".join(SOLVERS), help="comma list from " + ",".join(SOLVERS))
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.add_argument("--dump", help="directory for generated instance files")
    p.add_argument("--trace", nargs="?", const="traces", default=None,
                   help="write per-epoch / per-sweep traces into this directory")
    p.add_argument("--jobs", type=int, default=1, help="grid points run in parallel (timing stays per solve)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    threads = os.environ.get("WDRMDP_THREADS")
    if threads:
        import numba

        numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))
    try:
        plan = ExperimentPlan(
            family=args.family, grid_s=args.grid_s, grid_a=args.grid_a, grid_n=args.grid_n,
            metric=args.metric, order=args.order, theta=args.theta, eps=args.eps,
            solvers=[s.strip() for s in args.solvers.split(",") if s.strip()], reps=args.reps,
            seed=args.seed, discount=args.discount, dump=args.dump, trace=args.trace, jobs=args.jobs,
        )
        AmbiguityConfig(plan.metric, plan.order, 0.0)
    except ValueError as exc:
        print(f"wdrmdp: error: {exc}", file=sys.stderr)
        return 2
    rows = run_plan(plan)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_csv(rows, fh)
    else:
        write_csv(rows, sys.stdout)
    return 0 if all(r["status"] in ("ok", "mean") for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
