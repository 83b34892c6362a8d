"""Euclidean proximal operators for both players.

The policy player moves on a product of simplices; the kernel player on
the ambiguity set of each state.  ``prox_y`` always minimizes

    sum_i <h_i, y_i> + 1/(2 sigma) ||y_i - y'_i||^2

over the feasible tuples, so callers put the sign of the bilinear coupling
into ``h``.
"""

import numpy as np

from . import _kernels as K
from .ambiguity import ROOT_MAX_ITER, ROOT_RTOL, _as_groups
from .errors import InfeasibleError, NumericalError, StructuralError

GAMMA_MAX = 1e15


def project_simplex(z):
    """Euclidean projection onto the probability simplex along the last axis."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 0:
        raise StructuralError("project_simplex needs at least one axis")
    if not np.all(np.isfinite(z)):
        raise ValueError("z must be finite")
    flat = np.ascontiguousarray(z.reshape(-1, z.shape[-1]))
    out = np.empty_like(flat)
    K.simplex_rows(flat, out)
    return out.reshape(z.shape)


def project_simplex_box(z, center, t):
    """Projection onto ``{y in simplex : |y - center| <= t}`` (last axis)."""
    z = np.asarray(z, dtype=float)
    center = np.asarray(center, dtype=float)
    if z.shape != center.shape or z.ndim == 0:
        raise StructuralError(f"shape mismatch {z.shape} vs {center.shape}")
    if t < 0:
        raise ValueError("t must be nonnegative")
    lo = np.maximum(0.0, center - t)
    hi = np.minimum(1.0, center + t)
    slack = 1e-12 * z.shape[-1]
    if np.any(lo.sum(axis=-1) > 1.0 + slack) or np.any(hi.sum(axis=-1) < 1.0 - slack):
        raise InfeasibleError("box does not intersect the simplex")
    n = z.shape[-1]
    flat = np.ascontiguousarray(z.reshape(-1, n))
    out = np.empty_like(flat)
    K.box_simplex_rows(
        flat, np.ascontiguousarray(lo.reshape(-1, n)), np.ascontiguousarray(hi.reshape(-1, n)), out
    )
    return out.reshape(z.shape)


def prox_x(g, x_prev, tau):
    """Policy step ``project_simplex(x_prev - tau * g)``, row-wise."""
    return project_simplex(np.asarray(x_prev, dtype=float) - tau * np.asarray(g, dtype=float))


def solve_alpha_sweep(h_row, y_prev_row, y_hat_row, gamma, sigma):
    """Row subproblem of the l1 prox for a fixed ball multiplier ``gamma``.

    Minimizes ``<h, y> + ||y - y'||^2/(2 sigma) + gamma ||y - yhat||_1`` over
    the simplex and returns ``(alpha, y)`` with ``alpha`` the multiplier of
    ``sum y = 1``.
    """
    if gamma < 0 or sigma <= 0:
        raise ValueError("need gamma >= 0 and sigma > 0")
    h_row = np.ascontiguousarray(h_row, dtype=float)
    y_prev_row = np.ascontiguousarray(y_prev_row, dtype=float)
    y_hat_row = np.ascontiguousarray(y_hat_row, dtype=float)
    out = np.empty_like(h_row)
    alpha = K.alpha_sweep_row(h_row, y_prev_row, y_hat_row, float(gamma), float(sigma), out)
    return float(alpha), out


def prox_y_batch(h, y_prev, y_hat, cfg, sigma, tol=1e-10, gamma_cache=None):
    """``prox_y`` for many states at once; arrays have shape ``(G, N, A, S)``.

    ``gamma_cache`` (one float per group, see ``group_count``) is read as a
    warm start for the multiplier searches and overwritten with the result.
    """
    h = np.asarray(h, dtype=float)
    y_prev = np.asarray(y_prev, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if not (h.shape == y_prev.shape == y_hat.shape) or h.ndim != 4:
        raise StructuralError(f"shape mismatch {h.shape}, {y_prev.shape}, {y_hat.shape}")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    G, N, A, S = h.shape
    hh = _as_groups(h, cfg)
    yp = _as_groups(y_prev, cfg)
    yh = _as_groups(y_hat, cfg)
    out = np.empty_like(yh)
    if cfg.is_sup and cfg.metric == "linf":
        K.linf_box_prox(hh, yp, yh, float(sigma), cfg.theta, out)
        return out.reshape(G, N, A, S)
    if gamma_cache is None:
        gamma_cache = np.zeros(hh.shape[0])
    elif gamma_cache.shape != (hh.shape[0],):
        raise StructuralError(f"gamma_cache must have length {hh.shape[0]}")
    rtol = min(ROOT_RTOL, tol)
    failures = K.prox_groups(
        cfg.metric_code, hh, yp, yh, float(sigma), cfg.budget, rtol, ROOT_MAX_ITER, GAMMA_MAX, out,
        gamma_cache,
    )
    if failures:
        raise NumericalError(
            "prox multiplier search did not bracket the ball constraint",
            groups=failures,
            sigma=sigma,
            metric=cfg.metric,
            order=cfg.order_label(),
        )
    return out.reshape(G, N, A, S)


def group_count(cfg, num_states, num_samples):
    """Number of independent ball constraints in a batch of states."""
    return num_states * num_samples if cfg.is_sup else num_states


def prox_y(h, y_prev, y_hat, cfg, sigma, tol=1e-10):
    """Kernel-player proximal step at a single state.

    Parameters
    ----------
    h : array (N, A, S)
        Linear term, sign included.
    y_prev : array (N, A, S)
        Previous iterate (rows in the simplex).
    y_hat : array (N, A, S)
        Nominal samples at the state.
    cfg : AmbiguityConfig
    sigma : float
        Step size.
    tol : float
        Relative tolerance of the multiplier search.
    """
    h = np.asarray(h, dtype=float)
    y_prev = np.asarray(y_prev, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if h.ndim != 3:
        raise StructuralError(f"h must have shape (N, A, S), got {h.shape}")
    return prox_y_batch(h[None], y_prev[None], y_hat[None], cfg, sigma, tol)[0]


def prox_objective(y, h, y_prev, sigma):
    """Objective minimized by ``prox_y``."""
    return float(np.sum(h * y) + np.sum((y - y_prev) ** 2) / (2.0 * sigma))
