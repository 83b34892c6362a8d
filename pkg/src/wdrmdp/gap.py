"""Duality-gap certificates for policy/kernel pairs.

``upper`` is the worst-case cost of the policy over the ambiguity set and
``lower`` the optimal cost against the averaged kernel; their difference
bounds the suboptimality of both players.
"""

from dataclasses import dataclass

import numpy as np

from .ambiguity import linear_max_batch
from .mdp import check_policy, iteration_cap, nominal_value_iteration
from .errors import StructuralError


@dataclass(frozen=True)
class GapReport:
    gap: float
    upper: float
    lower: float
    iterations_up: int
    iterations_low: int
    v_upper: np.ndarray
    v_lower: np.ndarray


def _fixed_point_tol(tol, discount):
    # stopping on |v' - v| <= this leaves at most tol/2 error in v'
    return tol * (1.0 - discount) / (2.0 * discount)


def robust_policy_operator(x, v, inst, ks, cfg, tol=1e-9):
    """``F^x(v)_s = sum_a x_sa c_sa + max_y discount sum_a x_sa (1/N) sum_i <y_{i,s,a}, v>``."""
    N = ks.num_samples
    g = (inst.discount / N) * x[:, None, :, None] * v[None, None, None, :]
    g = np.broadcast_to(g, ks.by_state.shape)
    _, worst = linear_max_batch(g, ks.by_state, cfg, tol)
    return np.einsum("sa,sa->s", x, inst.cost) + worst


def worst_case_value(x, inst, ks, cfg, tol=1e-6, v0=None, return_iterations=False):
    """Value vector of policy ``x`` against the worst admissible kernels.

    Fixed point of the contraction ``F^x``, accurate to ``tol`` in sup-norm.
    """
    x = check_policy(x, inst.num_states, inst.num_actions)
    if ks.num_states != inst.num_states or ks.num_actions != inst.num_actions:
        raise StructuralError("kernel set does not match the instance")
    stop = _fixed_point_tol(tol, inst.discount)
    v = np.zeros(inst.num_states) if v0 is None else np.array(v0, dtype=float)
    scale = max(inst.cost_scale, float(np.abs(v).max()))
    cap = 10 * iteration_cap(stop, inst.discount, scale)
    lm_tol = min(1e-9, stop)
    it = 0
    for it in range(1, cap + 1):
        v_new = robust_policy_operator(x, v, inst, ks, cfg, lm_tol)
        done = np.abs(v_new - v).max() <= stop
        v = v_new
        if done:
            break
    return (v, it) if return_iterations else v


def best_response_value(ybar, inst, tol=1e-6, v0=None, return_iterations=False):
    """Optimal value vector against the fixed kernel ``ybar`` (shape (S, A, S))."""
    stop = _fixed_point_tol(tol, inst.discount)
    v, _, it = nominal_value_iteration(inst, ybar, tol=stop, v0=v0, return_iterations=True)
    return (v, it) if return_iterations else v


def duality_gap(x, yit, inst, ks, cfg, tol=1e-6, v0_upper=None, v0_lower=None):
    """Certified duality gap of the pair ``(x, yit)``; ``yit`` has shape (S, N, A, S).

    Both value vectors are accurate to ``tol / 2``, so ``gap`` is within
    ``tol`` of the exact gap.
    """
    yit = np.asarray(yit, dtype=float)
    if yit.shape != ks.by_state.shape:
        raise StructuralError(f"kernel iterate must have shape {ks.by_state.shape}, got {yit.shape}")
    v_up, it_up = worst_case_value(x, inst, ks, cfg, tol, v0=v0_upper, return_iterations=True)
    ybar = yit.mean(axis=1)
    v_lo, it_lo = best_response_value(ybar, inst, tol, v0=v0_lower, return_iterations=True)
    upper = float(inst.p0 @ v_up)
    lower = float(inst.p0 @ v_lo)
    return GapReport(upper - lower, upper, lower, it_up, it_lo, v_up, v_lo)


def static_gap(x, yit, v, inst, ks, cfg, tol=1e-9):
    """Per-state gap of the Bellman games at a fixed reference value vector ``v``.

    ``max_{y'} F^{x,y'}(v)_s - min_{x'} F^{x',ybar}(v)_s`` for every state.
    """
    v = np.asarray(v, dtype=float)
    yit = np.asarray(yit, dtype=float)
    upper = robust_policy_operator(np.asarray(x, dtype=float), v, inst, ks, cfg, tol)
    lower = (inst.cost + inst.discount * (yit.mean(axis=1) @ v)).min(axis=1)
    return upper - lower
