"""Wasserstein ambiguity sets over transition kernels.

For a state ``s`` with nominal samples ``yhat_1..yhat_N`` (each an ``A x S``
block) the feasible set of kernel tuples is

* order ``p < inf``:  ``(1/N) sum_i d(y_i, yhat_i)**p <= theta**p``
* order ``inf``:      ``d(y_i, yhat_i) <= theta`` for every ``i``

with every row of every ``y_i`` in the simplex.  The ground metric ``d``
acts on the flattened ``A x S`` block: ``l1`` sums absolute differences,
``l2`` is the Frobenius norm and ``linf`` the largest absolute entry.
"""

from dataclasses import dataclass
import math

import numpy as np

from . import _kernels as K
from .errors import ConfigurationError, NumericalError, StructuralError
from .mdp import check_kernel

METRICS = {"l1": K.L1, "l2": K.L2, "linf": K.LINF}
SUPPORTED = {("l2", 2), ("l1", 1), ("linf", 1), ("l2", math.inf), ("l1", math.inf), ("linf", math.inf)}

FLAT_TOL = 1e-14
ROOT_RTOL = 1e-10
ROOT_MAX_ITER = 80


def _parse_order(order):
    if isinstance(order, str):
        key = order.strip().lower()
        if key in ("inf", "infinity"):
            return math.inf
        try:
            order = float(key)
        except ValueError:
            raise ConfigurationError(f"unknown order {order!r}") from None
    order = float(order)
    if order == math.inf:
        return math.inf
    if order != int(order):
        raise ConfigurationError(f"unsupported order {order}")
    return int(order)


@dataclass(frozen=True)
class AmbiguityConfig:
    """Ground metric, Wasserstein order and radius of the ambiguity ball."""

    metric: str
    order: object
    theta: float

    def __post_init__(self):
        metric = str(self.metric).strip().lower()
        order = _parse_order(self.order)
        if (metric, order) not in SUPPORTED:
            raise ConfigurationError(
                f"unsupported (metric, order) pair ({self.metric!r}, {self.order!r}); "
                "choose one of l2/2, l1/1, linf/1, l2/inf, l1/inf, linf/inf"
            )
        theta = float(self.theta)
        if not (theta >= 0.0 and math.isfinite(theta)):
            raise ConfigurationError(f"radius must be finite and nonnegative, got {self.theta!r}")
        object.__setattr__(self, "metric", metric)
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "theta", theta)

    @property
    def metric_code(self):
        return METRICS[self.metric]

    @property
    def is_sup(self):
        """True for order infinity, where each sample carries its own ball."""
        return self.order == math.inf

    @property
    def budget(self):
        """Right-hand side of the ball constraint in the form checked internally.

        l2 constraints are kept squared (``theta**2``), all others linear.
        """
        return self.theta**2 if self.metric == "l2" else self.theta

    def order_label(self):
        return "inf" if self.is_sup else str(self.order)


class KernelSet:
    """The ``N`` nominal kernels ``yhat_i``, stored as ``samples[i, s, a, s']``."""

    def __init__(self, samples):
        samples = np.array(samples, dtype=float)
        if samples.ndim == 3:
            samples = samples[None]
        if samples.ndim != 4 or samples.shape[0] < 1:
            raise StructuralError(f"samples must have shape (N, S, A, S), got {samples.shape}")
        for y in samples:
            check_kernel(y)
        samples.setflags(write=False)
        self.samples = samples
        by_state = np.ascontiguousarray(samples.transpose(1, 0, 2, 3))
        by_state.setflags(write=False)
        self.by_state = by_state

    @property
    def num_samples(self):
        return self.samples.shape[0]

    @property
    def num_states(self):
        return self.samples.shape[1]

    @property
    def num_actions(self):
        return self.samples.shape[2]

    def mean(self):
        """Mean kernel ``(1/N) sum_i yhat_i`` with shape ``(S, A, S)``."""
        return self.samples.mean(axis=0)

    def at_state(self, s):
        """Samples at state ``s`` as an ``(N, A, S)`` array."""
        return self.by_state[s]

    def __repr__(self):
        N, S, A, _ = self.samples.shape
        return f"KernelSet(N={N}, S={S}, A={A})"


def distance(y, y_hat, metric):
    """Ground distance between blocks; reduces over the last two axes."""
    diff = np.abs(np.asarray(y, dtype=float) - np.asarray(y_hat, dtype=float))
    if metric == "l1":
        return diff.sum(axis=(-2, -1))
    if metric == "l2":
        return np.sqrt((diff**2).sum(axis=(-2, -1)))
    if metric == "linf":
        return diff.max(axis=(-2, -1))
    raise ConfigurationError(f"unknown metric {metric!r}")


def membership_residual(yt, y_hat, cfg):
    """Constraint violation of the tuple ``yt`` (shape ``(N, A, S)``) at one state.

    Zero means feasible.  Row-stochasticity is not part of the residual.
    """
    yt = np.asarray(yt, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if yt.shape != y_hat.shape or yt.ndim != 3:
        raise StructuralError(f"shape mismatch {yt.shape} vs {y_hat.shape}")
    d = distance(yt, y_hat, cfg.metric)
    if cfg.is_sup:
        return max(0.0, float(d.max()) - cfg.theta)
    return max(0.0, float(np.mean(d**cfg.order)) - cfg.theta**cfg.order)


def _as_groups(arr, cfg):
    """Reshape ``(G, N, A, S)`` blocks into the group layout of the kernels."""
    G, N, A, S = arr.shape
    if cfg.is_sup:
        return np.ascontiguousarray(arr.reshape(G * N, 1, A, S))
    return np.ascontiguousarray(arr)


def linear_max_batch(g, y_hat, cfg, tol=1e-9):
    """Maximize ``<g_s, y_s>`` over each state's ambiguity set.

    ``g`` and ``y_hat`` have shape ``(G, N, A, S)``.  Returns ``(y, values)``
    with ``y`` feasible and ``values`` of shape ``(G,)``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    g = np.asarray(g, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if g.shape != y_hat.shape or g.ndim != 4:
        raise StructuralError(f"shape mismatch {g.shape} vs {y_hat.shape}")
    G, N, A, S = g.shape
    gg = _as_groups(g, cfg)
    yh = _as_groups(y_hat, cfg)
    out = np.empty_like(yh)
    failures = 0
    if cfg.is_sup and cfg.metric == "linf":
        K.lmax_linf_fixed(gg, yh, cfg.theta, out)
    elif cfg.metric == "l1":
        K.lmax_l1_groups(gg, yh, cfg.budget, out, FLAT_TOL)
    else:
        failures = K.lmax_groups(
            cfg.metric_code, gg, yh, cfg.budget, ROOT_RTOL, ROOT_MAX_ITER, 1.0 / tol, out, FLAT_TOL
        )
    if failures:
        raise NumericalError(
            "multiplier search did not bracket the ball constraint",
            groups=failures,
            gamma_max=1.0 / tol,
            metric=cfg.metric,
            order=cfg.order_label(),
        )
    y = out.reshape(G, N, A, S)
    values = np.einsum("gnas,gnas->g", g, y)
    return y, values


def linear_max(g, y_hat, cfg, tol=1e-9):
    """Exact maximizer of ``sum_i <g_i, y_i>`` over the ambiguity set at one state.

    Parameters
    ----------
    g : array (N, A, S)
        Linear objective.
    y_hat : array (N, A, S)
        Nominal samples at the state, e.g. ``KernelSet.at_state(s)``.
    cfg : AmbiguityConfig
    tol : float
        Feasibility and optimality tolerance.

    Returns
    -------
    y : array (N, A, S)
        Feasible maximizer; rows of constant ``g`` are left at ``y_hat``.
    value : float
    """
    g = np.asarray(g, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if g.shape != y_hat.shape or g.ndim != 3:
        raise StructuralError(f"shape mismatch {g.shape} vs {y_hat.shape}")
    y, values = linear_max_batch(g[None], y_hat[None], cfg, tol)
    return y[0], float(values[0])
