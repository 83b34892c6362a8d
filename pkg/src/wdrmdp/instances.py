"""Benchmark instances: Garnet MDPs, machine replacement, forest management.

Every generator returns ``(MdpInstance, kernel)`` with a nominal kernel of
shape ``(S, A, S)``; ``sample_kernels`` turns a nominal kernel into ``N``
perturbed observations.  States are 0-based here: state ``s`` of the usual
1-based description is index ``s - 1``.
"""

from dataclasses import dataclass
import math

import numpy as np

from .ambiguity import KernelSet
from .errors import StructuralError
from .mdp import MdpInstance

DEFAULT_DISCOUNT = 0.8


def _normalize_rows(y):
    y = np.maximum(y, 0.0)
    return y / y.sum(axis=-1, keepdims=True)


def _garnet_kernel(rng, S, A, k):
    """Random kernel with ``k`` successors per row; probabilities from sorted cut points."""
    y = np.zeros((S, A, S))
    for s in range(S):
        for a in range(A):
            succ = rng.choice(S, size=k, replace=False)
            cuts = np.sort(rng.random(k - 1))
            y[s, a, succ] = np.diff(np.concatenate(([0.0], cuts, [1.0])))
    return _normalize_rows(y)


@dataclass(frozen=True)
class GarnetConfig:
    S: int
    A: int
    branching: float = 0.2
    reward_range: tuple = (0.0, 10.0)
    seed: int = 0
    discount: float = DEFAULT_DISCOUNT

    def __post_init__(self):
        if self.S < 1 or self.A < 1:
            raise StructuralError("S and A must be positive")
        if not 0.0 < self.branching <= 1.0:
            raise StructuralError("branching must lie in (0, 1]")
        lo, hi = self.reward_range
        if lo > hi:
            raise StructuralError("reward_range must be (lo, hi) with lo <= hi")

    @property
    def successors(self):
        # guard against 0.2 * 5 = 1.0000000000000002 style round-up
        return max(1, min(self.S, math.ceil(self.branching * self.S - 1e-9)))


def garnet(cfg):
    """Random Garnet MDP: ``ceil(n_b S)`` successors per row, uniform costs, uniform p0."""
    rng = np.random.default_rng(cfg.seed)
    lo, hi = cfg.reward_range
    cost = rng.uniform(lo, hi, size=(cfg.S, cfg.A))
    y = _garnet_kernel(rng, cfg.S, cfg.A, cfg.successors)
    inst = MdpInstance(cost, np.full(cfg.S, 1.0 / cfg.S), cfg.discount)
    return inst, y


@dataclass(frozen=True)
class MachineParams:
    """Transition probabilities of the machine-replacement model.

    ``stay`` / ``advance``: no-repair from an operative state;
    ``repair_short`` / ``repair_long``: repair from an operative state,
    landing in the short (S-1) or long (S) repair state.
    """

    stay: float = 0.2
    advance: float = 0.8
    repair_short: float = 0.8
    repair_long: float = 0.2

    def __post_init__(self):
        for name in ("stay", "advance", "repair_short", "repair_long"):
            if getattr(self, name) < 0:
                raise StructuralError(f"{name} must be nonnegative")
        if abs(self.stay + self.advance - 1.0) > 1e-12 or abs(self.repair_short + self.repair_long - 1.0) > 1e-12:
            raise StructuralError("each transition split must sum to 1")


REPAIR, NO_REPAIR = 0, 1


def machine_replacement(S=10, params=None, discount=DEFAULT_DISCOUNT):
    """Machine replacement with ``S - 2`` condition states and two repair states.

    Actions: 0 = repair, 1 = no repair.  State costs (both actions) are 0
    on states 1..S-3, 20 on the worst condition S-2, 2 on the short repair
    state S-1 and 10 on the long repair state S.
    """
    if S < 4:
        raise StructuralError("machine replacement needs S >= 4")
    p = params or MachineParams()
    worst, short, long_ = S - 3, S - 2, S - 1  # 0-based indices of states S-2, S-1, S
    state_cost = np.zeros(S)
    state_cost[worst] = 20.0
    state_cost[short] = 2.0
    state_cost[long_] = 10.0
    cost = np.repeat(state_cost[:, None], 2, axis=1)
    y = np.zeros((S, 2, S))
    for s in range(worst + 1):
        if s < worst:
            y[s, NO_REPAIR, s] = p.stay
            y[s, NO_REPAIR, s + 1] = p.advance
        else:
            y[s, NO_REPAIR, s] = 1.0
        y[s, REPAIR, short] = p.repair_short
        y[s, REPAIR, long_] += p.repair_long
    for s in (short, long_):
        y[s, REPAIR, 0] = 1.0
        y[s, NO_REPAIR, s] = 1.0
    return MdpInstance(cost, np.full(S, 1.0 / S), discount), y


WAIT, CUT, NOOP = 0, 1, 2


def forest(S=10, p_fire=0.1, third_action=False, discount=DEFAULT_DISCOUNT):
    """Forest management with rewards turned into costs.

    Actions: 0 = wait, 1 = cut & sell, and with ``third_action`` a 2 = no-op
    that moves like wait but earns nothing.
    """
    if S < 2:
        raise StructuralError("forest needs S >= 2")
    if not 0.0 <= p_fire <= 1.0:
        raise StructuralError("p_fire must be a probability")
    A = 3 if third_action else 2
    y = np.zeros((S, A, S))
    cost = np.zeros((S, A))
    for s in range(S):
        y[s, WAIT, 0] += p_fire
        y[s, WAIT, min(s + 1, S - 1)] += 1.0 - p_fire
        y[s, CUT, 0] = 1.0
        if third_action:
            y[s, NOOP] = y[s, WAIT]
    cost[S - 1, WAIT] = -4.0
    cost[1 : S - 1, CUT] = -1.0
    cost[S - 1, CUT] = -2.0
    return MdpInstance(cost, np.full(S, 1.0 / S), discount), y


def sample_kernels(nominal, N, seed=0, weight=0.05, branching=0.05):
    """``N`` observed kernels ``0.95 * nominal + 0.05 * y_i`` with sparse Garnet ``y_i``."""
    nominal = np.asarray(nominal, dtype=float)
    if N < 1:
        raise StructuralError("N must be positive")
    S, A, _ = nominal.shape
    k = max(1, math.ceil(branching * S - 1e-9))
    rng = np.random.default_rng(seed)
    samples = np.empty((N, S, A, S))
    for i in range(N):
        pert = _garnet_kernel(rng, S, A, k)
        samples[i] = _normalize_rows((1.0 - weight) * nominal + weight * pert)
    return KernelSet(samples)


def default_radius(kind, branching=0.2, A=None):
    """Radius used in the experiments: 0.5 for machine/forest, ``sqrt(n_b A)`` for Garnet."""
    if kind in ("machine", "forest"):
        return 0.5
    if kind == "garnet":
        if A is None:
            raise ValueError("Garnet radius needs the number of actions")
        return math.sqrt(branching * A)
    raise ValueError(f"unknown instance family {kind!r}")


def make_instance(family, S, A=None, N=1, seed=0, branching=0.2, discount=DEFAULT_DISCOUNT):
    """Instance plus ``N`` sampled kernels for one of the three families."""
    if family == "garnet":
        inst, y0 = garnet(GarnetConfig(S, A, branching, seed=seed, discount=discount))
    elif family == "machine":
        inst, y0 = machine_replacement(S, discount=discount)
    elif family == "forest":
        inst, y0 = forest(S, third_action=A == 3, discount=discount)
    else:
        raise ValueError(f"unknown instance family {family!r}")
    return inst, y0, sample_kernels(y0, N, seed=seed + 7919)
