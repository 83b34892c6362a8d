"""Problem data for discounted-cost MDPs and nominal dynamic programming.

Shapes used throughout the package:

* cost ``c``: ``(S, A)``
* policy ``x``: ``(S, A)``, each row in the simplex
* kernel ``y``: ``(S, A, S)``, ``y[s, a]`` is the next-state distribution
* value ``v``: ``(S,)``

Costs are minimized everywhere.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import StructuralError

ROW_ATOL = 1e-10


@dataclass(frozen=True)
class MdpInstance:
    """Costs, initial distribution and discount factor of a finite MDP."""

    cost: np.ndarray
    p0: np.ndarray
    discount: float

    def __post_init__(self):
        cost = np.array(self.cost, dtype=float)
        if cost.ndim != 2 or cost.shape[0] < 1 or cost.shape[1] < 1:
            raise StructuralError(f"cost must be a nonempty S x A matrix, got shape {cost.shape}")
        if not np.all(np.isfinite(cost)):
            raise StructuralError("cost entries must be finite")
        p0 = np.array(self.p0, dtype=float)
        if p0.shape != (cost.shape[0],):
            raise StructuralError(f"p0 must have length {cost.shape[0]}, got shape {p0.shape}")
        if np.any(p0 < 0) or abs(p0.sum() - 1.0) > 1e-12:
            raise StructuralError("p0 must be a probability vector")
        lam = float(self.discount)
        if not 0.0 < lam < 1.0:
            raise StructuralError(f"discount must lie in (0, 1), got {lam}")
        cost.setflags(write=False)
        p0.setflags(write=False)
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "discount", lam)

    @property
    def num_states(self):
        return self.cost.shape[0]

    @property
    def num_actions(self):
        return self.cost.shape[1]

    @property
    def cost_scale(self):
        """``max|c| / (1 - discount)``, a bound on any value vector."""
        return float(np.abs(self.cost).max()) / (1.0 - self.discount)


def check_kernel(y, num_states=None, num_actions=None, atol=ROW_ATOL):
    """Validate an ``(S, A, S)`` kernel and return it as a float array."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 3 or y.shape[0] != y.shape[2]:
        raise StructuralError(f"kernel must have shape (S, A, S), got {y.shape}")
    if num_states is not None and y.shape[0] != num_states:
        raise StructuralError(f"kernel has {y.shape[0]} states, expected {num_states}")
    if num_actions is not None and y.shape[1] != num_actions:
        raise StructuralError(f"kernel has {y.shape[1]} actions, expected {num_actions}")
    if np.any(y < -atol) or np.any(np.abs(y.sum(axis=-1) - 1.0) > atol):
        raise StructuralError("kernel rows must be probability vectors")
    return y


def check_policy(x, num_states=None, num_actions=None, atol=ROW_ATOL):
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise StructuralError(f"policy must be an S x A matrix, got shape {x.shape}")
    if num_states is not None and x.shape[0] != num_states:
        raise StructuralError(f"policy has {x.shape[0]} states, expected {num_states}")
    if num_actions is not None and x.shape[1] != num_actions:
        raise StructuralError(f"policy has {x.shape[1]} actions, expected {num_actions}")
    if np.any(x < -atol) or np.any(np.abs(x.sum(axis=-1) - 1.0) > atol):
        raise StructuralError("policy rows must be probability vectors")
    return x


def bilinear_value(x_s, y_s, c_s, v, discount):
    """Expected one-step cost plus discounted continuation at one state.

    Returns ``sum_a x_s[a] * (c_s[a] + discount * <y_s[a], v>)``.
    """
    x_s = np.asarray(x_s, dtype=float)
    y_s = np.asarray(y_s, dtype=float)
    c_s = np.asarray(c_s, dtype=float)
    v = np.asarray(v, dtype=float)
    if x_s.ndim != 1 or c_s.shape != x_s.shape or y_s.shape != (x_s.shape[0], v.shape[0]):
        raise StructuralError(
            f"incompatible shapes x_s={x_s.shape}, y_s={y_s.shape}, c_s={c_s.shape}, v={v.shape}"
        )
    return float(x_s @ (c_s + discount * (y_s @ v)))


def bilinear_values(x, y, inst, v):
    """``bilinear_value`` evaluated at every state; ``y`` is an ``(S, A, S)`` kernel."""
    q = inst.cost + inst.discount * (y @ v)
    return np.einsum("sa,sa->s", x, q)


def q_values(inst, y, v):
    """State-action costs ``c + discount * y v`` under a fixed kernel."""
    return inst.cost + inst.discount * (y @ v)


def iteration_cap(tol, discount, scale):
    """Number of contraction steps from zero that brings the error below ``tol``."""
    if scale <= 0.0:
        return 1
    return max(1, math.ceil(math.log(tol * (1.0 - discount) / scale) / math.log(discount))) + 1


def nominal_value_iteration(inst, y, tol=1e-8, v0=None, max_iter=None, return_iterations=False):
    """Value iteration for the non-robust MDP with kernel ``y``.

    Returns ``(v, policy)`` with ``||v - T(v)||_inf <= tol``; the policy is
    greedy with respect to ``v`` and deterministic (lowest action index on ties).
    """
    y = check_kernel(y, inst.num_states, inst.num_actions)
    if tol <= 0:
        raise ValueError("tol must be positive")
    v = np.zeros(inst.num_states) if v0 is None else np.array(v0, dtype=float)
    if max_iter is None:
        max_iter = 10 * iteration_cap(tol, inst.discount, max(inst.cost_scale, np.abs(v).max()))
    it = 0
    for it in range(1, max_iter + 1):
        v_new = q_values(inst, y, v).min(axis=1)
        done = np.abs(v_new - v).max() <= tol
        v = v_new
        if done:
            break
    actions = q_values(inst, y, v).argmin(axis=1)
    policy = np.zeros((inst.num_states, inst.num_actions))
    policy[np.arange(inst.num_states), actions] = 1.0
    if return_iterations:
        return v, policy, it
    return v, policy


def evaluate_policy(inst, x, y, tol=1e-10, v0=None):
    """Value vector of policy ``x`` under kernel ``y`` by fixed-point iteration."""
    x = check_policy(x, inst.num_states, inst.num_actions)
    y = check_kernel(y, inst.num_states, inst.num_actions)
    costs = np.einsum("sa,sa->s", x, inst.cost)
    trans = np.einsum("sa,sat->st", x, y)
    v = np.zeros(inst.num_states) if v0 is None else np.array(v0, dtype=float)
    scale = max(np.abs(costs).max() / (1.0 - inst.discount), np.abs(v).max())
    for _ in range(iteration_cap(tol, inst.discount, scale)):
        v_new = costs + inst.discount * (trans @ v)
        done = np.abs(v_new - v).max() <= tol * (1.0 - inst.discount)
        v = v_new
        if done:
            break
    return v


def policy_cost(inst, x, y, tol=1e-10):
    """Expected discounted cost ``<p0, v_x>`` of policy ``x`` under kernel ``y``."""
    return float(inst.p0 @ evaluate_policy(inst, x, y, tol))
