"""Slow, independent reference computations for the test-suite.

Nothing here calls into the package's kernels; everything is plain numpy.
"""

import itertools
import math

import numpy as np


# ------------------------------------------------------------ projections


def simplex_by_enumeration(z):
    """Simplex projection by enumerating every support set (n <= 6)."""
    z = np.asarray(z, dtype=float)
    n = z.size
    best, best_d = None, np.inf
    for k in range(1, n + 1):
        for supp in itertools.combinations(range(n), k):
            idx = list(supp)
            shift = (z[idx].sum() - 1.0) / k
            x = np.zeros(n)
            x[idx] = z[idx] - shift
            if np.all(x >= -1e-15):
                d = np.sum((x - z) ** 2)
                if d < best_d:
                    best, best_d = np.maximum(x, 0.0), d
    return best


def box_simplex_by_enumeration(z, lo, hi):
    """Box-constrained simplex projection by enumerating clip patterns."""
    z = np.asarray(z, dtype=float)
    n = z.size
    best, best_d = None, np.inf
    for pattern in itertools.product((0, 1, 2), repeat=n):  # 0 = lo, 1 = free, 2 = hi
        x = np.where(np.array(pattern) == 0, lo, hi).astype(float)
        free = [j for j in range(n) if pattern[j] == 1]
        fixed = sum(x[j] for j in range(n) if pattern[j] != 1)
        if free:
            shift = (z[free].sum() + fixed - 1.0) / len(free)
            x[free] = z[free] - shift
        elif abs(fixed - 1.0) > 1e-12:
            continue
        if np.all(x >= lo - 1e-12) and np.all(x <= hi + 1e-12) and abs(x.sum() - 1) < 1e-10:
            d = np.sum((x - z) ** 2)
            if d < best_d:
                best, best_d = x, d
    return best


def _simplex_sorted(z):
    """Row-wise simplex projection (sort and threshold) along the last axis."""
    z = np.asarray(z, dtype=float)
    flat = z.reshape(-1, z.shape[-1])
    u = -np.sort(-flat, axis=1)
    css = np.cumsum(u, axis=1)
    k = np.arange(1, flat.shape[1] + 1)
    rho = (u - (css - 1) / k > 0).sum(axis=1)
    shift = (css[np.arange(flat.shape[0]), rho - 1] - 1) / rho
    return np.maximum(flat - shift[:, None], 0.0).reshape(z.shape)


def _project_l1_ball(x, r):
    a = np.abs(x).ravel()
    if a.sum() <= r:
        return x.copy()
    if r <= 0:
        return np.zeros_like(x)
    w = _simplex_sorted(a / r) * r
    return np.sign(x) * w.reshape(x.shape)


def _project_l2_ball(x, r):
    n = np.linalg.norm(x)
    return x.copy() if n <= r else x * (r / n)


def _project_l1inf_ball(x, r):
    """Projection onto {sum_i max_j |x_ij| <= r}; rows indexed by the first axis."""
    a = np.abs(x.reshape(x.shape[0], -1))
    if a.max(axis=1).sum() <= r:
        return x.copy()
    if r <= 0:
        return np.zeros_like(x)

    u = -np.sort(-a, axis=1)
    css = np.cumsum(u, axis=1)
    k = np.arange(1, a.shape[1] + 1)

    def caps(mu):
        # t solving sum_j (a_ij - t)_+ = mu, clipped at zero
        return np.maximum(((css - mu) / k).max(axis=1), 0.0)

    lo, hi = 0.0, a.sum(axis=1).max()
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if caps(mid).sum() > r:
            lo = mid
        else:
            hi = mid
    t = caps(hi)
    out = np.minimum(a, t[:, None]) * np.sign(x.reshape(a.shape))
    return out.reshape(x.shape)


def ball_projector(metric, order, theta, y_hat):
    """Projection onto the ambiguity constraint alone (no simplex rows)."""
    N = y_hat.shape[0]

    if order == math.inf:
        def proj(y):
            d = y - y_hat
            out = np.empty_like(d)
            for i in range(N):
                if metric == "l2":
                    out[i] = _project_l2_ball(d[i], theta)
                elif metric == "l1":
                    out[i] = _project_l1_ball(d[i], theta)
                else:
                    out[i] = np.clip(d[i], -theta, theta)
            return y_hat + out
    elif metric == "l2":
        def proj(y):
            return y_hat + _project_l2_ball(y - y_hat, theta * math.sqrt(N))
    elif metric == "l1":
        def proj(y):
            return y_hat + _project_l1_ball(y - y_hat, N * theta)
    else:
        def proj(y):
            return y_hat + _project_l1inf_ball(y - y_hat, N * theta)
    return proj


def dykstra(point, proj_a, proj_b, max_iter=200000, stall=1e-13):
    """Dykstra's alternating projection onto the intersection of two convex sets."""
    x = point.copy()
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    for _ in range(max_iter):
        y = proj_a(x + p)
        p = x + p - y
        x_new = proj_b(y + q)
        q = y + q - x_new
        if np.abs(x_new - x).max() < stall and np.abs(x_new - y).max() < stall:
            x = x_new
            break
        x = x_new
    return proj_a(x)


def prox_oracle(h, y_prev, y_hat, metric, order, theta, sigma):
    """Minimizer of <h, y> + ||y - y'||^2/(2 sigma) over the ambiguity set.

    The objective is a scaled distance to ``y' - sigma h``, so the minimizer
    is the Euclidean projection of that point onto (simplex rows) x (ball),
    computed by Dykstra's algorithm.
    """
    target = y_prev - sigma * h
    ball = ball_projector(metric, order, theta, y_hat)

    return dykstra(target, _simplex_sorted, ball)


# ------------------------------------------------------------- MDP oracles


def brute_force_fixed_point(inst, y, iters=1_000_000, tol=0.0):
    """Nominal Bellman fixed point by plain iteration (optionally truncated at ``tol``)."""
    v = np.zeros(inst.num_states)
    for _ in range(iters):
        v_new = (inst.cost + inst.discount * (y @ v)).min(axis=1)
        if np.abs(v_new - v).max() <= tol:
            return v_new
        v = v_new
    return v


def monte_carlo_cost(inst, x, y, trajectories, horizon, rng):
    """Discounted cost of ``x`` under ``y`` by simulation; returns (mean, stderr)."""
    S, A = inst.cost.shape
    states = rng.choice(S, size=trajectories, p=inst.p0)
    total = np.zeros(trajectories)
    disc = 1.0
    cum_x = np.cumsum(x, axis=1)
    cum_y = np.cumsum(y, axis=2)
    for _ in range(horizon):
        u = rng.random(trajectories)
        acts = np.minimum((u[:, None] > cum_x[states]).sum(axis=1), A - 1)
        total += disc * inst.cost[states, acts]
        u = rng.random(trajectories)
        states = np.minimum((u[:, None] > cum_y[states, acts]).sum(axis=1), S - 1)
        disc *= inst.discount
    return total.mean(), total.std(ddof=1) / math.sqrt(trajectories)


def _sample_grid(y_hat_i, metric, step):
    """Grid of first coordinates for one sample (S = 2) with distances to the center."""
    A = y_hat_i.shape[0]
    q = np.round(np.arange(0.0, 1.0 + step / 2, step), 12)
    pts = np.array(list(itertools.product(q, repeat=A)))
    diff = np.abs(pts - y_hat_i[None, :, 0])
    if metric == "l1":
        d = 2.0 * diff.sum(axis=1)
    elif metric == "l2":
        d = math.sqrt(2.0) * np.sqrt((diff**2).sum(axis=1))
    else:
        d = diff.max(axis=1)
    return pts, d


def grid_kernel_max(weights, y_hat, v, metric, order, theta, step=0.01):
    """max over gridded feasible tuples of sum_a w_a (1/N) sum_i <y_ia, v>, S = 2, N <= 2.

    ``weights`` has shape ``(P, A)``: one maximization per row.
    """
    weights = np.atleast_2d(weights)
    N = y_hat.shape[0]
    slack = 1e-12
    parts = []
    for i in range(N):
        pts, d = _sample_grid(y_hat[i], metric, step)
        cont = (pts * v[0] + (1.0 - pts) * v[1]) / N  # (M, A)
        parts.append((d, weights @ cont.T))  # (P, M)
    if order == math.inf or N == 1:
        total = 0.0
        for d, lin in parts:
            ok = d <= theta + slack
            total = total + lin[:, ok].max(axis=1)
        return total
    (d1, l1), (d2, l2) = parts
    d1p, d2p = d1**order, d2**order
    order1 = np.argsort(d1p, kind="stable")
    d1s = d1p[order1]
    best1 = np.maximum.accumulate(l1[:, order1], axis=1)
    room = N * theta**order - d2p + slack
    idx = np.searchsorted(d1s, room, side="right") - 1
    ok = idx >= 0
    cand = best1[:, idx[ok]] + l2[:, ok]
    return cand.max(axis=1)


def grid_bellman_value(c_s, y_hat, v, discount, metric, order, theta, step=0.01):
    """min over a grid of Delta(2) of the worst case over gridded kernels (A = S = 2)."""
    ps = np.arange(0.0, 1.0 + step / 2, step)
    x = np.stack([ps, 1.0 - ps], axis=1)
    vals = x @ c_s + discount * grid_kernel_max(x, y_hat, v, metric, order, theta, step)
    return float(vals.min())


# ------------------------------------------------------- linear maximization


def lp_linear_max(g, y_hat, metric, order, theta):
    """max <g, y> over the ambiguity set as a linear program (l1 and l-inf metrics)."""
    from scipy.optimize import linprog

    N, A, S = y_hat.shape
    n = N * A * S
    naux = n if metric == "l1" else N
    owner = np.repeat(np.arange(N), A * S)
    eye = np.eye(n)
    if metric == "l1":
        link = -np.eye(n)
    else:
        link = np.zeros((n, N))
        link[np.arange(n), owner] = -1.0
    A_ub = [np.hstack([eye, link]), np.hstack([-eye, link])]
    b_ub = [y_hat.ravel(), -y_hat.ravel()]
    if order == math.inf:
        if metric == "l1":
            per = np.zeros((N, naux))
            per[owner, np.arange(n)] = 1.0
            A_ub.append(np.hstack([np.zeros((N, n)), per]))
            b_ub.append(np.full(N, theta))
        bounds_aux = (0, theta) if metric == "linf" else (0, None)
    else:
        A_ub.append(np.hstack([np.zeros((1, n)), np.full((1, naux), 1.0 / N)]))
        b_ub.append([theta])
        bounds_aux = (0, None)
    rows = np.zeros((N * A, n + naux))
    for r in range(N * A):
        rows[r, r * S:(r + 1) * S] = 1.0
    res = linprog(
        np.concatenate([-g.ravel(), np.zeros(naux)]),
        A_ub=np.vstack(A_ub), b_ub=np.concatenate(b_ub),
        A_eq=rows, b_eq=np.ones(N * A),
        bounds=[(0, None)] * n + [bounds_aux] * naux, method="highs",
    )
    assert res.status == 0, res.message
    return -res.fun


def nlp_linear_max(g, y_hat, order, theta):
    """max <g, y> over the l2 ambiguity set by SLSQP on the smooth convex program."""
    from scipy.optimize import minimize

    N, A, S = y_hat.shape
    shape = y_hat.shape

    def ball(y):
        d2 = ((y.reshape(shape) - y_hat) ** 2).sum(axis=(1, 2))
        return theta**2 - d2 if order == math.inf else np.atleast_1d(theta**2 - d2.mean())

    cons = [
        {"type": "eq", "fun": lambda y: y.reshape(N * A, S).sum(axis=1) - 1.0},
        {"type": "ineq", "fun": ball},
    ]
    res = minimize(lambda y: -np.dot(g.ravel(), y), y_hat.ravel(), jac=lambda y: -g.ravel(),
                   bounds=[(0, 1)] * y_hat.size, constraints=cons, method="SLSQP",
                   options={"ftol": 1e-13, "maxiter": 2000})
    y = res.x.reshape(shape)
    assert res.success, res.message
    assert np.all(ball(res.x) >= -1e-9)
    return float(np.sum(g * y))
