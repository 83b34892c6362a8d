import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import GEOMETRIES, cfg_of, geometry_id
import oracles
from wdrmdp import prox as prox_mod
from wdrmdp.ambiguity import AmbiguityConfig, membership_residual
from wdrmdp.errors import InfeasibleError, NumericalError
from wdrmdp.prox import (
    project_simplex,
    project_simplex_box,
    prox_objective,
    prox_x,
    prox_y,
    prox_y_batch,
    solve_alpha_sweep,
)

seeds = st.integers(0, 2**32 - 1)
geoms = st.sampled_from(GEOMETRIES)
vectors = st.lists(st.floats(-5, 5), min_size=1, max_size=4)


# simplex -------------------------------------------------------------------


def test_simplex_examples():
    assert np.allclose(project_simplex([2.0, 0.0]), [1, 0])
    assert np.allclose(project_simplex([1.2, -0.2]), [1, 0])
    assert np.allclose(project_simplex([0.7, 0.5]), [0.6, 0.4], atol=1e-15)
    z = np.array([0.2, 0.3, 0.5])
    assert np.allclose(project_simplex(z), z, atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(vectors)
def test_simplex_matches_enumeration(z):
    z = np.array(z)
    x = project_simplex(z)
    assert np.allclose(x, oracles.simplex_by_enumeration(z), atol=1e-12)
    assert x.min() >= 0 and abs(x.sum() - 1) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(vectors)
def test_simplex_kkt_and_order(z):
    z = np.array(z)
    x = project_simplex(z)
    support = x > 0
    shift = (z - x)[support]
    assert np.ptp(shift) <= 1e-12
    assert np.all(z[~support] <= shift[0] + 1e-12)
    i, j = np.meshgrid(range(z.size), range(z.size))
    assert np.all(x[i][z[i] >= z[j]] >= x[j][z[i] >= z[j]] - 1e-15)


@settings(max_examples=100, deadline=None)
@given(vectors)
def test_simplex_idempotent(z):
    x = project_simplex(np.array(z))
    assert np.allclose(project_simplex(x), x, atol=1e-15)


def test_simplex_batches_rows(rng):
    z = rng.normal(size=(3, 4, 5))
    out = project_simplex(z)
    for idx in np.ndindex(3, 4):
        assert np.allclose(out[idx], oracles.simplex_by_enumeration(z[idx]), atol=1e-12)


def test_simplex_rejects_nonfinite():
    with pytest.raises(ValueError):
        project_simplex([np.nan, 1.0])


# box-constrained simplex ---------------------------------------------------


def test_box_inactive_and_tight(rng):
    z = rng.normal(size=4)
    center = rng.dirichlet(np.ones(4))
    assert np.allclose(project_simplex_box(z, center, 1.0), project_simplex(z), atol=1e-12)
    assert np.allclose(project_simplex_box(z, center, 0.0), center, atol=1e-15)


def test_box_matches_enumeration():
    rng = np.random.default_rng(4)
    center, t = np.full(3, 1 / 3), 0.2
    for _ in range(100):
        z = rng.normal(size=3)
        y = project_simplex_box(z, center, t)
        ref = oracles.box_simplex_by_enumeration(z, np.maximum(center - t, 0), np.minimum(center + t, 1))
        assert np.allclose(y, ref, atol=1e-8)


@settings(max_examples=100, deadline=None)
@given(seeds, st.floats(0, 1))
def test_box_kkt(seed, t):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=4)
    center = rng.dirichlet(np.ones(4))
    y = project_simplex_box(z, center, t)
    lo, hi = np.maximum(center - t, 0), np.minimum(center + t, 1)
    assert abs(y.sum() - 1) <= 1e-9
    assert np.all(y >= lo - 1e-12) and np.all(y <= hi + 1e-12)
    # free coordinates share one shift; clipped ones point the right way
    shift = z - y
    free = (y > lo + 1e-12) & (y < hi - 1e-12)
    if free.any():
        a = shift[free].mean()
        assert np.abs(shift[free] - a).max() <= 1e-9
        assert np.all(shift[(y <= lo + 1e-12) & ~free] <= a + 1e-9)
        assert np.all(shift[(y >= hi - 1e-12) & ~free] >= a - 1e-9)


def test_box_infeasible():
    with pytest.raises(InfeasibleError):
        project_simplex_box(np.zeros(3), np.full(3, 0.1), 0.1)


# prox_x --------------------------------------------------------------------


def test_prox_x_zero_gradient(rng):
    x = rng.dirichlet(np.ones(4))
    assert np.allclose(prox_x(np.zeros(4), x, 3.0), x, atol=1e-15)


def test_prox_x_large_step():
    assert np.allclose(prox_x([1.0, -1.0], [0.5, 0.5], 1e6), [0, 1])


def test_prox_x_grid_oracle():
    rng = np.random.default_rng(8)
    step = 1e-3
    p = np.arange(0, 1 + step / 2, step)
    a, b = np.meshgrid(p, p, indexing="ij")
    ok = a + b <= 1 + 1e-12
    grid = np.stack([a[ok], b[ok], np.maximum(1 - a[ok] - b[ok], 0)], axis=1)
    for _ in range(3):
        g, x0, tau = rng.normal(size=3), rng.dirichlet(np.ones(3)), rng.uniform(0.1, 2)
        obj = grid @ g + ((grid - x0) ** 2).sum(axis=1) / (2 * tau)
        assert np.abs(prox_x(g, x0, tau) - grid[obj.argmin()]).max() <= 2e-3


# alpha sweep ---------------------------------------------------------------


def _alpha_dual_oracle(h, yp, yhat, gamma, sigma):
    """Row minimizer by golden-section search on the concave dual in alpha."""

    def y_of(alpha):
        # convex in each coordinate: soft-threshold around yhat, then clip at zero
        z = yp - sigma * (h - alpha) - yhat
        return np.maximum(yhat + np.sign(z) * np.maximum(np.abs(z) - sigma * gamma, 0.0), 0.0)

    def dual(alpha):
        y = y_of(alpha)
        return np.sum(h * y + (y - yp) ** 2 / (2 * sigma) + gamma * np.abs(y - yhat)) - alpha * (y.sum() - 1)

    lo, hi = -1e3, 1e3
    inv = (math.sqrt(5) - 1) / 2
    c, d = hi - inv * (hi - lo), lo + inv * (hi - lo)
    while hi - lo > 1e-12:
        if dual(c) > dual(d):
            hi, d = d, c
            c = hi - inv * (hi - lo)
        else:
            lo, c = c, d
            d = lo + inv * (hi - lo)
    return y_of(0.5 * (lo + hi))


def test_alpha_sweep_reduces_to_simplex(rng):
    h, yp, yhat = rng.normal(size=5), rng.dirichlet(np.ones(5)), rng.dirichlet(np.ones(5))
    _, y = solve_alpha_sweep(h, yp, yhat, 0.0, 0.7)
    assert np.allclose(y, project_simplex(yp - 0.7 * h), atol=1e-10)


@pytest.mark.parametrize("gamma", [0.0, 0.3, 5.0])
def test_alpha_sweep_stationary_center(gamma, rng):
    yhat = rng.dirichlet(np.ones(4))
    _, y = solve_alpha_sweep(np.zeros(4), yhat, yhat, gamma, 1.0)
    assert np.allclose(y, yhat, atol=1e-12)


def test_alpha_sweep_dual_oracle():
    rng = np.random.default_rng(9)
    for _ in range(50):
        h, yp, yhat = rng.normal(size=3), rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3))
        gamma, sigma = rng.uniform(0, 2), rng.uniform(0.1, 3)
        _, y = solve_alpha_sweep(h, yp, yhat, gamma, sigma)
        assert abs(y.sum() - 1) <= 1e-9
        assert np.allclose(y, _alpha_dual_oracle(h, yp, yhat, gamma, sigma), atol=1e-8)


def test_alpha_sweep_rejects_bad_args():
    with pytest.raises(ValueError):
        solve_alpha_sweep(np.zeros(2), [0.5, 0.5], [0.5, 0.5], -1.0, 1.0)


# prox_y --------------------------------------------------------------------


@pytest.mark.parametrize("g", GEOMETRIES, ids=geometry_id)
def test_prox_y_center_stationary(g, rng):
    y_hat = rng.dirichlet(np.ones(3), size=(2, 2))
    y = prox_y(np.zeros_like(y_hat), y_hat, y_hat, cfg_of(g, 0.3), 1.0)
    assert np.allclose(y, y_hat, atol=1e-12)


def test_prox_y_inactive_ball_all_geometries(rng):
    y_hat = rng.dirichlet(np.ones(3), size=(2, 2))
    y_prev = rng.dirichlet(np.ones(3), size=(2, 2))
    h = rng.normal(size=y_hat.shape)
    ref = project_simplex(y_prev - 0.5 * h)
    for g in GEOMETRIES:
        theta = 10.0 if g[0] != "linf" else 1.0
        assert np.allclose(prox_y(h, y_prev, y_hat, cfg_of(g, theta), 0.5), ref, atol=1e-10), g


@pytest.mark.parametrize("g", GEOMETRIES, ids=geometry_id)
def test_prox_y_projected_gradient_oracle(g):
    rng = np.random.default_rng(20 + GEOMETRIES.index(g))
    cfg = cfg_of(g, 0.3)
    for _ in range(5):
        y_hat = rng.dirichlet(np.ones(3), size=(2, 2))
        y_prev = rng.dirichlet(np.ones(3), size=(2, 2))
        h = rng.normal(size=y_hat.shape)
        y = prox_y(h, y_prev, y_hat, cfg, 1.0)
        ref = oracles.prox_oracle(h, y_prev, y_hat, g[0], g[1], 0.3, 1.0)
        assert prox_objective(y, h, y_prev, 1.0) <= prox_objective(ref, h, y_prev, 1.0) + 1e-4
        assert membership_residual(y, y_hat, cfg) <= 1e-10
        assert np.abs(y.sum(axis=-1) - 1).max() <= 1e-10


@pytest.mark.parametrize("g", GEOMETRIES, ids=geometry_id)
def test_prox_y_zero_radius_exact(g, rng):
    y_hat = rng.dirichlet(np.ones(4), size=(3, 2))
    h = rng.normal(size=y_hat.shape)
    y = prox_y(h, rng.dirichlet(np.ones(4), size=(3, 2)), y_hat, cfg_of(g, 0.0), 2.0)
    assert np.array_equal(y, y_hat)


@settings(max_examples=25, deadline=None)
@given(seeds, geoms)
def test_prox_y_nonexpansive(seed, g):
    rng = np.random.default_rng(seed)
    cfg = cfg_of(g, 0.2)
    y_hat = rng.dirichlet(np.ones(3), size=(2, 2))
    h = rng.normal(size=y_hat.shape)
    u, w = rng.dirichlet(np.ones(3), size=(2, 2, 2))
    pu, pw = prox_y(h, u, y_hat, cfg, 1.0), prox_y(h, w, y_hat, cfg, 1.0)
    assert np.linalg.norm(pu - pw) <= np.linalg.norm(u - w) + 1e-8


@settings(max_examples=25, deadline=None)
@given(seeds, geoms, st.sampled_from([0.1, 1.0, 10.0]))
def test_prox_y_optimality_against_oracle(seed, g, sigma):
    rng = np.random.default_rng(seed)
    N, A, S = rng.integers(1, 4), rng.integers(1, 4), rng.integers(2, 5)
    theta = float(rng.choice([0.05, 0.3, 1.0]))
    cfg = cfg_of(g, theta)
    y_hat = rng.dirichlet(np.ones(S), size=(N, A))
    y_prev = rng.dirichlet(np.ones(S), size=(N, A))
    h = rng.normal(size=y_hat.shape)
    y = prox_y(h, y_prev, y_hat, cfg, sigma)
    ref = oracles.prox_oracle(h, y_prev, y_hat, g[0], g[1], theta, sigma)
    assert prox_objective(y, h, y_prev, sigma) <= prox_objective(ref, h, y_prev, sigma) + 1e-4
    # the returned point is feasible, so it cannot beat the exact projection by much
    assert prox_objective(y, h, y_prev, sigma) >= prox_objective(ref, h, y_prev, sigma) - 1e-6


@settings(max_examples=25, deadline=None)
@given(seeds, geoms)
def test_prox_y_projected_gradient_vanishes(seed, g):
    # optimality: no feasible direction decreases the objective to first order,
    # checked through a short projected-gradient step computed by the oracle
    rng = np.random.default_rng(seed)
    cfg = cfg_of(g, 0.25)
    y_hat = rng.dirichlet(np.ones(3), size=(2, 2))
    y_prev = rng.dirichlet(np.ones(3), size=(2, 2))
    h = rng.normal(size=y_hat.shape)
    sigma = 1.0
    y = prox_y(h, y_prev, y_hat, cfg, sigma)
    grad = h + (y - y_prev) / sigma
    step = 1e-2
    moved = oracles.prox_oracle(np.zeros_like(h), y - step * grad, y_hat, g[0], g[1], 0.25, 1.0)
    assert np.linalg.norm(moved - y) / step <= 1e-5


def test_prox_y_batch_gamma_cache(rng):
    cfg = AmbiguityConfig("l2", 2, 0.1)
    y_hat = rng.dirichlet(np.ones(3), size=(4, 2, 2))
    h = rng.normal(size=y_hat.shape) * 5
    cache = np.zeros(4)
    y1 = prox_y_batch(h, y_hat, y_hat, cfg, 1.0, gamma_cache=cache)
    assert np.all(cache > 0)
    y2 = prox_y_batch(h, y_hat, y_hat, cfg, 1.0, gamma_cache=cache)
    assert np.allclose(y1, y2, atol=1e-9)


def test_prox_y_failure_reports_numerical_error(rng, monkeypatch):
    monkeypatch.setattr(prox_mod, "GAMMA_MAX", 1e-6)
    y_hat = rng.dirichlet(np.ones(3), size=(2, 2))
    h = rng.normal(size=y_hat.shape) * 100
    with pytest.raises(NumericalError) as err:
        prox_y(h, y_hat, y_hat, AmbiguityConfig("l2", 2, 1e-3), 1.0)
    assert err.value.diagnostics["metric"] == "l2"
