"""Epoch-scheduled primal-dual solver and the certified Bellman oracle.

At every state the Bellman update is the bilinear saddle point

    min_{x_s in simplex}  max_{(y_i) in ambiguity set}
        sum_a x_sa (c_sa + discount * (1/N) sum_i <y_{i,s,a}, v>)

``solve`` interleaves blocks of primal-dual iterations on these games with
approximate value updates; ``BellmanOracle`` solves them to a certified
accuracy for fixed ``v``.
"""

from dataclasses import dataclass, field
import logging
import math
import time

import numpy as np

from .ambiguity import linear_max_batch
from .errors import ConfigurationError, NumericalError, StructuralError
from .gap import duality_gap
from .mdp import bilinear_value
from .prox import group_count, project_simplex, prox_y_batch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProximalSetup:
    """Step sizes and the constants of the Euclidean proximal setup."""

    tau: float
    sigma: float
    lipschitz: float
    norm: float  # the value-vector norm the steps were built from
    proxy: bool  # True when ``norm`` is the cost-scale stand-in for v = 0
    radius_x: float
    radius_y: float
    width_x: float
    width_y: float


def step_sizes(v, num_samples, num_actions, discount, scale=None):
    """Step sizes ``tau = 1/(sqrt(A) lam |v|)``, ``sigma = N sqrt(A)/(lam |v|)``.

    ``scale`` replaces ``|v|_2`` when ``v`` is zero; it defaults to 1.
    """
    N, A = int(num_samples), int(num_actions)
    if N < 1 or A < 1:
        raise StructuralError("need N >= 1 and A >= 1")
    norm = float(np.linalg.norm(np.asarray(v, dtype=float)))
    proxy = norm == 0.0
    if proxy:
        norm = float(scale) if scale else 1.0
        log.info("value vector is zero; step sizes use the scale proxy %g", norm)
    lam_v = discount * norm
    return ProximalSetup(
        tau=1.0 / (math.sqrt(A) * lam_v),
        sigma=N * math.sqrt(A) / lam_v,
        lipschitz=lam_v / math.sqrt(N),
        norm=norm,
        proxy=proxy,
        radius_x=1.0,
        radius_y=math.sqrt(N * A),
        width_x=1.0,
        width_y=float(N * A),
    )


def _scale_proxy(inst):
    """Stand-in for ``|v|_2`` when v = 0: the cost scale, or 1 for zero costs."""
    s = inst.cost_scale
    return s if s > 0 else 1.0


# --------------------------------------------------------------- iterations


def policy_gradient(inst, y, v):
    """``c'_sa = c_sa + lam (1/N) sum_i <y_{i,s,a}, v>`` for ``y`` of shape (S, N, A, S)."""
    return inst.cost + inst.discount * (y.mean(axis=1) @ v)


def kernel_gradient(x_new, x_old, v, num_samples, discount):
    """``h_{i,s,a,s'} = -(lam/N) (2 x^{t+1}_sa - x^t_sa) v_s'``, shape (S, 1, A, S)."""
    ext = 2.0 * x_new - x_old
    return (-(discount / num_samples) * ext)[:, None, :, None] * v[None, None, None, :]


def pda_iteration(x, y, v, inst, y_hat, cfg, setup, prox_tol=1e-10, gamma_cache=None):
    """One primal-dual step at every state in the batch.

    ``x`` is (G, A), ``y`` and ``y_hat`` are (G, N, A, S) and ``inst`` must
    carry the matching ``cost`` rows (use ``_Rows`` for subsets of states).
    """
    x_new = project_simplex(x - setup.tau * policy_gradient(inst, y, v))
    h = kernel_gradient(x_new, x, v, y.shape[1], inst.discount)
    h = np.broadcast_to(h, y.shape)
    y_new = prox_y_batch(h, y, y_hat, cfg, setup.sigma, prox_tol, gamma_cache)
    return x_new, y_new


def value_update(x_s, y_s, v, inst, s):
    """``F^{x,y}(v)_s`` with ``y_s`` the (A, S) averaged kernel rows at state ``s``."""
    return bilinear_value(x_s, y_s, inst.cost[s], v, inst.discount)


@dataclass(frozen=True)
class _Rows:
    """The part of an MdpInstance that the iteration reads, for a subset of states."""

    cost: np.ndarray
    discount: float


# ------------------------------------------------------- certified oracle


def static_bounds(x, y, c, v, y_hat, cfg, discount, tol):
    """Certified upper and lower bounds on the state games for fixed ``v``.

    ``upper`` is the worst case of ``x`` (exact linear maximization),
    ``lower`` the best pure response to the averaged kernel of ``y``.
    """
    N = y.shape[1]
    g = (discount / N) * x[:, None, :, None] * v[None, None, None, :]
    g = np.broadcast_to(g, y.shape)
    _, worst = linear_max_batch(g, y_hat, cfg, tol)
    upper = np.einsum("ga,ga->g", x, c) + worst
    lower = (c + discount * (y.mean(axis=1) @ v)).min(axis=1)
    return upper, lower


class BellmanOracle:
    """Certified evaluation of the robust Bellman operator with warm starts.

    Every call runs restarted primal-dual iterations on the requested states
    until the gap between an exact worst-case bound for the policy and an
    exact best-response bound for the kernel is at most ``tol``; the
    midpoint is returned, so the error is at most ``tol / 2``.  ``x`` and
    ``y`` hold the certifying pair and seed the next call.
    """

    def __init__(self, inst, ks, cfg, tol, max_iter=10**6, check_every=10, prox_tol=1e-10):
        if tol <= 0:
            raise ValueError("tol must be positive")
        if ks.num_states != inst.num_states or ks.num_actions != inst.num_actions:
            raise StructuralError("kernel set does not match the instance")
        self.inst, self.ks, self.cfg = inst, ks, cfg
        self.tol = float(tol)
        self.max_iter = int(max_iter)
        self.check_every = int(check_every)
        self.prox_tol = prox_tol
        S, A, N = inst.num_states, inst.num_actions, ks.num_samples
        self.x = np.full((S, A), 1.0 / A)
        self.y = np.array(ks.by_state)
        self.gamma = np.zeros((S, group_count(cfg, 1, N)))
        self.upper = np.full(S, np.inf)
        self.lower = np.full(S, -np.inf)
        self.calls = 0
        self.iterations = 0

    def __call__(self, v, states=None):
        """Return ``F(v)_s`` for ``states`` (default: all), each within ``tol/2``."""
        v = np.asarray(v, dtype=float)
        if v.shape != (self.inst.num_states,):
            raise StructuralError(f"v must have length {self.inst.num_states}")
        idx = np.arange(self.inst.num_states) if states is None else np.atleast_1d(states)
        self._solve(v, idx)
        self.calls += idx.size
        return 0.5 * (self.upper[idx] + self.lower[idx])

    def policy(self, states=None):
        return self.x if states is None else self.x[states]

    def _solve(self, v, idx):
        inst, cfg = self.inst, self.cfg
        lam = inst.discount
        # kernel rows sum to one, so F(v + m) = F(v) + lam m: solve at the centered
        # vector, whose norm measures the actual coupling
        shift = float(v.mean())
        v = v - shift
        setup = step_sizes(v, self.ks.num_samples, inst.num_actions, lam, _scale_proxy(inst))
        x = self.x[idx].copy()
        y = self.y[idx].copy()
        y_hat = self.ks.by_state[idx]
        c = inst.cost[idx]
        gam = self.gamma[idx].reshape(-1).copy()
        active = np.arange(idx.size)
        upper, lower = static_bounds(x, y, c, v, y_hat, cfg, lam, self.tol)
        gap = upper - lower
        # the certifying pair: policy of the best upper bound, kernel of the best lower bound
        bx, by = x.copy(), y.copy()
        # per-state averaging windows, reset at every restart
        sx, sy = np.zeros_like(x), np.zeros_like(y)
        wsum = np.zeros(idx.size)
        ref_gap = gap.copy()
        it = 0
        while True:
            active = np.nonzero(gap > self.tol)[0]
            if active.size == 0:
                break
            if it >= self.max_iter:
                raise NumericalError(
                    "certified Bellman update hit its iteration cap",
                    iterations=it,
                    gap=float(gap.max()),
                    tol=self.tol,
                )
            rows = _Rows(c[active], lam)
            xa, ya, ha = x[active], y[active], y_hat[active]
            ga = gam.reshape(idx.size, -1)[active].reshape(-1)
            sxa, sya = sx[active], sy[active]
            for _ in range(self.check_every):
                xa, ya = pda_iteration(xa, ya, v, rows, ha, cfg, setup, self.prox_tol, ga)
                sxa += xa
                sya += ya
            it += self.check_every
            wsum[active] += self.check_every
            gam.reshape(idx.size, -1)[active] = ga.reshape(active.size, -1)
            x[active], y[active] = xa, ya
            w = wsum[active]
            ax, ay = sxa / w[:, None], sya / w[:, None, None, None]
            up_avg, lo_avg = static_bounds(ax, ay, rows.cost, v, ha, cfg, lam, self.tol)
            up_last, lo_last = static_bounds(xa, ya, rows.cost, v, ha, cfg, lam, self.tol)
            for up, cand in ((up_avg, ax), (up_last, xa)):
                better = up < upper[active]
                upper[active[better]] = up[better]
                bx[active[better]] = cand[better]
            for lo, cand in ((lo_avg, ay), (lo_last, ya)):
                better = lo > lower[active]
                lower[active[better]] = lo[better]
                by[active[better]] = cand[better]
            gap[active] = upper[active] - lower[active]
            # restart a state from its average once the average's gap has halved
            avg_gap = up_avg - lo_avg
            restart = avg_gap <= 0.5 * ref_gap[active]
            keep = ~restart
            sx[active[keep]], sy[active[keep]] = sxa[keep], sya[keep]
            r = active[restart]
            x[r], y[r] = ax[restart], ay[restart]
            sx[r], sy[r], wsum[r] = 0.0, 0.0, 0.0
            ref_gap[r] = avg_gap[restart]
        self.x[idx], self.y[idx] = bx, by
        self.gamma[idx] = gam.reshape(idx.size, -1)
        self.upper[idx], self.lower[idx] = upper + lam * shift, lower + lam * shift
        self.iterations += it


def bellman_operator(v, inst, ks, cfg, tol, oracle=None):
    """``F(v)`` at every state within ``tol / 2``; reuse ``oracle`` for warm starts."""
    oracle = oracle or BellmanOracle(inst, ks, cfg, tol)
    return oracle(v)


def bellman_update_certified(v, s, inst, ks, cfg, tol, max_iter=10**6):
    """Certified ``F(v)_s`` together with the certifying policy row and kernel tuple."""
    oracle = BellmanOracle(inst, ks, cfg, tol, max_iter=max_iter)
    val = oracle(v, [s])[0]
    return float(val), oracle.x[s].copy(), oracle.y[s].copy()


# ------------------------------------------------------------ full solver


@dataclass(frozen=True)
class SolverConfig:
    """Settings of the epoch-scheduled primal-dual solver.

    ``max_iterations`` truncates the run after that many primal-dual steps
    (the last epoch may be cut short); ``init`` is ``"nominal"`` (uniform
    policy, nominal kernels) or ``"random"`` (seeded random feasible start).
    """

    epoch_exponent: int = 2
    weight_exponent: float = 1.0
    max_epochs: int = 200
    gap_tol: float = 0.1
    prox_tol: float = 1e-10
    seed: int = 0
    max_iterations: int = None
    init: str = "nominal"
    check_every: int = 1  # certify the gap every this many epochs

    def __post_init__(self):
        if self.epoch_exponent < 1 or int(self.epoch_exponent) != self.epoch_exponent:
            raise ConfigurationError("epoch_exponent must be a positive integer")
        if self.weight_exponent < 0:
            raise ConfigurationError("weight_exponent must be nonnegative")
        if self.max_epochs < 1:
            raise ConfigurationError("max_epochs must be positive")
        if not self.gap_tol > 0:
            raise ConfigurationError("gap_tol must be positive")
        if not 0 < self.prox_tol <= self.gap_tol / 10:
            raise ConfigurationError("prox_tol must lie in (0, gap_tol / 10]")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be positive")
        if self.init not in ("nominal", "random"):
            raise ConfigurationError(f"unknown init {self.init!r}")
        if self.check_every < 1:
            raise ConfigurationError("check_every must be positive")


@dataclass
class EpochRecord:
    epoch: int
    iterations: int
    wall_time: float
    gap: float
    value_change: float
    tau: float
    sigma: float
    norm: float


@dataclass
class SolveResult:
    """Output of ``solve``; ``value`` is the worst-case value vector of ``policy``."""

    policy: np.ndarray
    kernel: np.ndarray  # (S, N, A, S) averaged kernel tuples
    value: np.ndarray
    report: object
    converged: bool
    iterations: int
    epochs: int
    trace: list = field(default_factory=list)
    setups: list = field(default_factory=list)

    @property
    def objective(self):
        return self.report.upper


def _initial_point(inst, ks, cfg, sc):
    S, A, N = inst.num_states, inst.num_actions, ks.num_samples
    if sc.init == "nominal":
        return np.full((S, A), 1.0 / A), np.array(ks.by_state)
    rng = np.random.default_rng(sc.seed)
    x = rng.dirichlet(np.ones(A), size=S)
    # a random point of the ambiguity set: a random direction, projected
    y0 = np.array(ks.by_state)
    h = rng.normal(size=y0.shape)
    y = prox_y_batch(h, y0, ks.by_state, cfg, 1.0, sc.prox_tol)
    return x, y


def solve(inst, ks, cfg, sc=None, trace=None):
    """Primal-dual method with epochs for the robust MDP.

    Epoch ``l`` runs ``l**q`` primal-dual iterations at every state with
    step sizes built from ``v^l``; the ``t**w``-weighted average of the
    epoch's iterates gives ``v^{l+1}_s = F^{xbar, ybar}(v^l)_s``.  The
    returned pair is the weighted average over all iterations, and the run
    stops as soon as its certified duality gap is at most ``gap_tol / 2``.

    ``trace``, if given, is a list that receives one ``EpochRecord`` per epoch.
    """
    sc = sc or SolverConfig()
    if ks.num_states != inst.num_states or ks.num_actions != inst.num_actions:
        raise StructuralError("kernel set does not match the instance")
    S, A, N = inst.num_states, inst.num_actions, ks.num_samples
    lam = inst.discount
    target = sc.gap_tol / 2.0
    cert_tol = sc.gap_tol / 20.0
    x, y = _initial_point(inst, ks, cfg, sc)
    y_hat = ks.by_state
    gam = np.zeros(group_count(cfg, S, N))
    v = np.zeros(S)
    gx, gy, gw = np.zeros_like(x), np.zeros_like(y), 0.0
    t = 0
    start = time.perf_counter()
    records = [] if trace is None else trace
    setups = []
    report = None
    converged = False
    v_up = None
    epoch = 0
    for epoch in range(1, sc.max_epochs + 1):
        setup = step_sizes(v, N, A, lam, _scale_proxy(inst))
        setups.append(setup)
        length = epoch**sc.epoch_exponent
        if sc.max_iterations is not None:
            length = min(length, sc.max_iterations - t)
        ex, ey, ew = np.zeros_like(x), np.zeros_like(y), 0.0
        for _ in range(length):
            x, y = pda_iteration(x, y, v, inst, y_hat, cfg, setup, sc.prox_tol, gam)
            t += 1
            w = float(t) ** sc.weight_exponent
            ex += w * x
            ey += w * y
            ew += w
        gx += ex
        gy += ey
        gw += ew
        xbar, ybar = ex / ew, ey / ew
        v_new = np.einsum("sa,sa->s", xbar, inst.cost + lam * (ybar.mean(axis=1) @ v))
        dv = float(np.abs(v_new - v).max())
        v = v_new
        done_iters = sc.max_iterations is not None and t >= sc.max_iterations
        last = epoch == sc.max_epochs or done_iters
        gap = float("nan")
        if epoch % sc.check_every == 0 or last:
            report = duality_gap(gx / gw, gy / gw, inst, ks, cfg, cert_tol, v0_upper=v_up)
            v_up = report.v_upper
            gap = report.gap
            converged = gap <= target
        records.append(
            EpochRecord(epoch, t, time.perf_counter() - start, gap, dv, setup.tau, setup.sigma, setup.norm)
        )
        if converged or done_iters:
            break
    policy, kernel = gx / gw, gy / gw
    return SolveResult(
        policy=policy,
        kernel=kernel,
        value=report.v_upper,
        report=report,
        converged=converged,
        iterations=t,
        epochs=epoch,
        trace=records,
        setups=setups,
    )


def export_reformulation(inst, ks, cfg, v, s):
    """Text form of the single-state Bellman update as a convex program.

    Intended for cross-checking the certified oracle with an external
    conic or LP solver.  Variables are ``x[a]`` and ``y[i,a,j]``; the
    program is written as the min-max it is, together with its data.
    """
    v = np.asarray(v, dtype=float)
    N, A, S = ks.num_samples, inst.num_actions, inst.num_states
    y_hat = ks.at_state(s)
    lines = [
        f"# robust Bellman update at state {s}",
        f"# metric={cfg.metric} order={cfg.order_label()} theta={cfg.theta!r} discount={inst.discount!r}",
        "minimize over x in simplex(A):",
        "  maximize over y[i,a,:] in simplex(S), i<N, a<A:",
        "    sum_a x[a] * (c[a] + discount * (1/N) * sum_i sum_j y[i,a,j] * v[j])",
    ]
    if cfg.is_sup:
        lines.append(f"  subject to: d_{cfg.metric}(y[i], yhat[i]) <= theta for every i")
    else:
        lines.append(
            f"  subject to: (1/N) sum_i d_{cfg.metric}(y[i], yhat[i])^{cfg.order} <= theta^{cfg.order}"
        )
    lines.append("  where d acts on the flattened A x S block")
    lines.append(f"N {N}\nA {A}\nS {S}")
    lines.append("c " + " ".join(repr(float(z)) for z in inst.cost[s]))
    lines.append("v " + " ".join(repr(float(z)) for z in v))
    for i in range(N):
        for a in range(A):
            lines.append(f"yhat {i} {a} " + " ".join(repr(float(z)) for z in y_hat[i, a]))
    return "\n".join(lines) + "\n"


__all__ = [
    "BellmanOracle",
    "EpochRecord",
    "ProximalSetup",
    "SolveResult",
    "SolverConfig",
    "bellman_operator",
    "bellman_update_certified",
    "export_reformulation",
    "kernel_gradient",
    "pda_iteration",
    "policy_gradient",
    "solve",
    "static_bounds",
    "step_sizes",
    "value_update",
]
