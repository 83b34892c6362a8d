"""Value-iteration baselines driven by the certified Bellman oracle.

All four methods start from ``v = 0`` and stop once
``||v - F(v)||_inf < eps (1 - lam) / (2 lam)`` (``rule="loose"`` switches
to the looser ``2 lam eps / (1 - lam)`` threshold).
"""

from dataclasses import dataclass, field
import csv
import logging
import math
import time

import numpy as np

from .pda import BellmanOracle

log = logging.getLogger(__name__)


@dataclass
class BaselineResult:
    value: np.ndarray
    policy: np.ndarray
    kernel: np.ndarray
    iterations: int
    oracle_calls: int
    converged: bool
    residuals: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    weight_sums: list = field(default_factory=list)

    def __iter__(self):
        # allows ``v, x, iters = vi(...)``
        return iter((self.value, self.policy, self.iterations))


def stopping_threshold(eps, discount, rule="standard"):
    """Residual level at which the value iteration stops."""
    if rule == "standard":
        return eps * (1.0 - discount) / (2.0 * discount)
    if rule == "loose":
        return 2.0 * discount * eps / (1.0 - discount)
    raise ValueError(f"unknown stopping rule {rule!r}")


def default_inner_tol(eps, discount):
    return eps * (1.0 - discount) / 20.0


def _max_iter(inst, eps):
    thr = eps * (1.0 - inst.discount) / 2.0
    scale = max(inst.cost_scale, 1e-300)
    return 10 * (math.ceil(math.log(thr / scale) / math.log(inst.discount)) + 10)


class _Run:
    """Shared bookkeeping: oracle, trace rows, residual history."""

    def __init__(self, inst, ks, cfg, eps, tol_inner, rule, max_iter):
        if eps <= 0:
            raise ValueError("eps must be positive")
        self.inst = inst
        self.tol_inner = default_inner_tol(eps, inst.discount) if tol_inner is None else tol_inner
        if self.tol_inner <= 0:
            raise ValueError("tol_inner must be positive")
        if self.tol_inner > eps * (1.0 - inst.discount) / 10.0 + 1e-15:
            log.warning("tol_inner %g exceeds eps (1 - lam) / 10", self.tol_inner)
        self.oracle = BellmanOracle(inst, ks, cfg, self.tol_inner)
        self.threshold = stopping_threshold(eps, inst.discount, rule)
        self.max_iter = _max_iter(inst, eps) if max_iter is None else max_iter
        self.start = time.perf_counter()
        self.residuals = []
        self.trace = []

    def record(self, it, res):
        self.residuals.append(res)
        self.trace.append((it, res, self.oracle.calls, time.perf_counter() - self.start))

    def result(self, v, it, converged, oracle=None):
        oracle = oracle or self.oracle
        calls = self.oracle.calls + (oracle.calls if oracle is not self.oracle else 0)
        return BaselineResult(
            value=v,
            policy=oracle.x.copy(),
            kernel=oracle.y.copy(),
            iterations=it,
            oracle_calls=calls,
            converged=converged,
            residuals=self.residuals,
            trace=self.trace,
        )


def vi(inst, ks, cfg, eps, tol_inner=None, rule="standard", max_iter=None):
    """Robust value iteration ``v <- F(v)``.

    Returns a ``BaselineResult``; it unpacks as ``(value, policy, iterations)``.
    """
    run = _Run(inst, ks, cfg, eps, tol_inner, rule, max_iter)
    v = np.zeros(inst.num_states)
    for it in range(1, run.max_iter + 1):
        fv = run.oracle(v)
        res = float(np.abs(fv - v).max())
        run.record(it, res)
        v = fv
        if res < run.threshold:
            return run.result(v, it, True)
    return run.result(v, run.max_iter, False)


def gauss_seidel_vi(inst, ks, cfg, eps, tol_inner=None, rule="standard", max_iter=None):
    """Value iteration with in-place, state-by-state updates (states in index order).

    Iteration ``t`` tests the synchronous residual ``||v - F(v)||`` at the
    current iterate, as ``vi`` does, and sweeps only if the test fails.
    """
    run = _Run(inst, ks, cfg, eps, tol_inner, rule, max_iter)
    S = inst.num_states
    v = np.zeros(S)
    check = BellmanOracle(inst, ks, cfg, run.tol_inner)
    for it in range(1, run.max_iter + 1):
        fv = check(v)
        res = float(np.abs(fv - v).max())
        run.record(it, res)
        if res < run.threshold:
            return run.result(fv, it, True, oracle=check)
        for s in range(S):
            v[s] = run.oracle(v, [s])[0]
    return run.result(v, run.max_iter, False, oracle=check)


def accelerated_vi(inst, ks, cfg, eps, tol_inner=None, rule="standard", max_iter=None, alpha=None, gamma=None):
    """Momentum value iteration.

    ``h_t = v_t + gamma (v_t - v_{t-1})``, ``v_{t+1} = h_t - alpha (h_t - F(h_t))``
    with ``alpha = 1/(1 + lam)`` and ``gamma = (1 - sqrt(1 - lam^2))/lam``.
    If the iterates blow up past ``10 max|c| / (1 - lam)`` the method falls
    back to plain value iteration from the last iterate.
    """
    run = _Run(inst, ks, cfg, eps, tol_inner, rule, max_iter)
    lam = inst.discount
    a, g = avi_steps(lam)
    a = a if alpha is None else alpha
    g = g if gamma is None else gamma
    bound = 10.0 * float(np.abs(inst.cost).max()) / (1.0 - lam)
    at_h = BellmanOracle(inst, ks, cfg, run.tol_inner)
    v_prev = np.zeros(inst.num_states)
    v = np.zeros(inst.num_states)
    fallback = False
    for it in range(1, run.max_iter + 1):
        fv = run.oracle(v)
        res = float(np.abs(fv - v).max())
        run.record(it, res)
        if res < run.threshold:
            out = run.result(fv, it, True)
            out.oracle_calls += at_h.calls
            return out
        if fallback:
            v_prev, v = v, fv
            continue
        h = v + g * (v - v_prev)
        fh = fv if g == 0.0 else at_h(h)
        v_new = h - a * (h - fh)
        if not np.all(np.isfinite(v_new)) or np.abs(v_new).max() > bound:
            log.warning("accelerated iteration left the bounded region; switching to plain steps")
            fallback = True
            v_new = fv
        v_prev, v = v, v_new
    out = run.result(v, run.max_iter, False)
    out.oracle_calls += at_h.calls
    return out


def avi_steps(discount):
    """Constant step sizes ``(alpha, gamma)`` of the accelerated iteration."""
    lam = discount
    return 1.0 / (1.0 + lam), (1.0 - math.sqrt(1.0 - lam * lam)) / lam


def anderson_weights(residuals, reg=1e-10):
    """Weights ``alpha`` minimizing ``|sum_i alpha_i r_i|_2`` with ``sum alpha = 1``.

    ``residuals`` has one residual per row.  The regularized normal
    equations ``(R R^T + reg I) z = 1`` are solved and ``z`` normalized.
    """
    R = np.atleast_2d(np.asarray(residuals, dtype=float))
    gram = R @ R.T
    gram += reg * max(1.0, float(np.trace(gram)) / len(gram)) * np.eye(len(gram))
    z = np.linalg.solve(gram, np.ones(len(gram)))
    return z / z.sum()


def anderson_vi(inst, ks, cfg, eps, tol_inner=None, m=5, rule="standard", max_iter=None, reg=1e-10):
    """Anderson-accelerated value iteration with memory ``m``.

    ``v^{t+1} = sum_i alpha_i F(v^{t-m+i})``; the step is rejected in favour
    of ``F(v^t)`` when it does not decrease the residual.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    run = _Run(inst, ks, cfg, eps, tol_inner, rule, max_iter)
    trial = BellmanOracle(inst, ks, cfg, run.tol_inner)
    v = np.zeros(inst.num_states)
    fv = run.oracle(v)
    vs, fs = [v], [fv]
    weight_sums = []
    for it in range(1, run.max_iter + 1):
        res = float(np.abs(fv - v).max())
        run.record(it, res)
        if res < run.threshold:
            out = run.result(fv, it, True)
            out.oracle_calls += trial.calls
            out.weight_sums = weight_sums
            return out
        R = np.array(fs) - np.array(vs)
        alpha = anderson_weights(R, reg)
        weight_sums.append(float(alpha.sum()))
        cand = alpha @ np.array(fs)
        f_cand = trial(cand)
        if np.abs(f_cand - cand).max() <= res:
            v, fv = cand, f_cand
            # keep the main oracle's warm start close to the accepted iterate
            run.oracle.x[:], run.oracle.y[:] = trial.x, trial.y
        else:
            v = fv
            fv = run.oracle(v)
        vs.append(v)
        fs.append(fv)
        vs, fs = vs[-(m + 1):], fs[-(m + 1):]
    out = run.result(v, run.max_iter, False)
    out.oracle_calls += trial.calls
    out.weight_sums = weight_sums
    return out


def write_trace(result, path):
    """Write the per-sweep trace (iteration, residual, oracle calls, wall time) as CSV."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "residual", "oracle_calls", "wall_time"])
        w.writerows(result.trace)
