"""Compiled per-row kernels behind ``prox`` and ``ambiguity``.

Arrays handed to the group routines have shape ``(G, M, A, S)``: ``G``
independent groups (one per state, or one per sample for type-infinity
balls), each holding ``M`` members that share one ball constraint
``mean_m d(y_m, yhat_m)**p <= budget``.

Metric codes: 0 = l2 (squared, p = 2), 1 = l1, 2 = linf.
"""

import numpy as np
from numba import njit

L2, L1, LINF = 0, 1, 2

# exit codes of the multiplier searches
OK, NO_BRACKET = 0, 1


@njit(cache=True)
def simplex_row(z, out):
    n = z.shape[0]
    u = np.sort(z)
    css = 0.0
    theta = 0.0
    for k in range(n):
        uk = u[n - 1 - k]
        css += uk
        t = (css - 1.0) / (k + 1)
        if uk > t:
            theta = t
    for j in range(n):
        d = z[j] - theta
        out[j] = d if d > 0.0 else 0.0


@njit(cache=True)
def simplex_rows(z, out):
    for r in range(z.shape[0]):
        simplex_row(z[r], out[r])


@njit(cache=True)
def box_simplex_row(z, lo, hi, out):
    """Project ``z`` onto ``{y : sum y = 1, lo <= y <= hi}``.

    Returns the shift ``kappa`` with ``out = clip(z - kappa, lo, hi)``; the
    caller checks ``sum(lo) <= 1 <= sum(hi)``.
    """
    n = z.shape[0]
    pos = np.empty(2 * n)
    dlt = np.empty(2 * n)
    f = 0.0
    for j in range(n):
        pos[j] = z[j] - hi[j]
        dlt[j] = -1.0
        pos[n + j] = z[j] - lo[j]
        dlt[n + j] = 1.0
        f += hi[j]
    order = np.argsort(pos)
    prev = pos[order[0]]
    kappa = prev
    if f > 1.0:
        slope = 0.0
        found = False
        for k in range(2 * n):
            p = pos[order[k]]
            nf = f + slope * (p - prev)
            if nf <= 1.0 and slope < 0.0:
                kappa = prev + (f - 1.0) / (-slope)
                found = True
                break
            f = nf
            prev = p
            slope += dlt[order[k]]
        if not found:
            kappa = prev
    for j in range(n):
        d = z[j] - kappa
        if d < lo[j]:
            d = lo[j]
        if d > hi[j]:
            d = hi[j]
        out[j] = d
    return kappa


@njit(cache=True)
def box_simplex_rows(z, lo, hi, out):
    for r in range(z.shape[0]):
        box_simplex_row(z[r], lo[r], hi[r], out[r])


@njit(cache=True)
def alpha_sweep_row(h, yp, yhat, gamma, sigma, out):
    """Solve the l1-penalized row subproblem for its simplex multiplier.

    Row solution for a multiplier ``alpha``::

        y(alpha) = max(0, yhat + soft(yp - sigma*(h + alpha) - yhat, sigma*gamma))

    ``sum y(alpha)`` is continuous and nonincreasing; it is swept over the
    3S breakpoints in decreasing ``alpha`` and interpolated where it reaches 1.
    """
    n = h.shape[0]
    pos = np.empty(3 * n)
    dlt = np.empty(3 * n)
    for j in range(n):
        base = (yp[j] - yhat[j]) / sigma - h[j]
        pos[3 * j] = yp[j] / sigma - h[j] + gamma  # leaves zero
        dlt[3 * j] = sigma
        pos[3 * j + 1] = base + gamma  # reaches yhat, flat
        dlt[3 * j + 1] = -sigma
        pos[3 * j + 2] = base - gamma  # rises above yhat
        dlt[3 * j + 2] = sigma
    order = np.argsort(-pos)
    total = 0.0
    rate = 0.0
    prev = pos[order[0]]
    alpha = prev
    found = False
    for k in range(3 * n):
        p = pos[order[k]]
        nt = total + rate * (prev - p)
        if nt >= 1.0 and rate > 0.0:
            alpha = p + (nt - 1.0) / rate
            found = True
            break
        total = nt
        prev = p
        rate += dlt[order[k]]
    if not found:
        alpha = prev - (1.0 - total) / rate
    thr = sigma * gamma
    for j in range(n):
        w = yp[j] - sigma * (h[j] + alpha) - yhat[j]
        if w > thr:
            val = yhat[j] + w - thr
        elif w < -thr:
            val = yhat[j] + w + thr
            if val < 0.0:
                val = 0.0
        else:
            val = yhat[j]
        out[j] = val
    return alpha


@njit(cache=True)
def _group_cons(metric, y, yhat):
    """Mean over members of d(y_m, yhat_m) (squared for l2)."""
    M, A, S = y.shape
    tot = 0.0
    for m in range(M):
        acc = 0.0
        for a in range(A):
            for j in range(S):
                d = abs(y[m, a, j] - yhat[m, a, j])
                if metric == L2:
                    acc += d * d
                elif metric == L1:
                    acc += d
                elif d > acc:
                    acc = d
        tot += acc
    return tot / M


# ---------------------------------------------------------------- prox


@njit(cache=True)
def _linf_prox_slope(z, yhat, t, sigma, buf, lo, hi):
    """Derivative in t of sum_a min_{y_a in simplex, |y_a - yhat_a| <= t} |y_a - z_a|^2/(2 sigma)."""
    A, S = z.shape
    slope = 0.0
    for a in range(A):
        for j in range(S):
            lo[j] = max(0.0, yhat[a, j] - t)
            hi[j] = min(1.0, yhat[a, j] + t)
        kappa = box_simplex_row(z[a], lo, hi, buf)
        for j in range(S):
            free = z[a, j] - kappa
            if free > hi[j] and yhat[a, j] + t < 1.0:
                slope -= (free - hi[j]) / sigma
            elif free < lo[j] and yhat[a, j] - t > 0.0:
                slope -= (lo[j] - free) / sigma
    return slope


@njit(cache=True)
def _linf_prox_member(z, yhat, sigma, gamma, out):
    A, S = z.shape
    if gamma == 0.0:
        for a in range(A):
            simplex_row(z[a], out[a])
        return
    buf = np.empty(S)
    lo = np.empty(S)
    hi = np.empty(S)
    t_lo, t_hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (t_lo + t_hi)
        if _linf_prox_slope(z, yhat, mid, sigma, buf, lo, hi) + gamma >= 0.0:
            t_hi = mid
        else:
            t_lo = mid
        if t_hi - t_lo <= 1e-14:
            break
    for a in range(A):
        for j in range(S):
            lo[j] = max(0.0, yhat[a, j] - t_hi)
            hi[j] = min(1.0, yhat[a, j] + t_hi)
        box_simplex_row(z[a], lo, hi, out[a])


@njit(cache=True)
def _prox_eval(metric, h, yp, yhat, sigma, gamma, out):
    """Minimize the Lagrangian of one group for multiplier gamma; return the constraint value."""
    M, A, S = h.shape
    if metric == L2:
        c = sigma / (1.0 + sigma * gamma)
        buf = np.empty(S)
        for m in range(M):
            for a in range(A):
                for j in range(S):
                    buf[j] = c * (yp[m, a, j] / sigma + gamma * yhat[m, a, j] - h[m, a, j])
                simplex_row(buf, out[m, a])
    elif metric == L1:
        for m in range(M):
            for a in range(A):
                alpha_sweep_row(h[m, a], yp[m, a], yhat[m, a], gamma, sigma, out[m, a])
    else:
        z = np.empty((A, S))
        for m in range(M):
            for a in range(A):
                for j in range(S):
                    z[a, j] = yp[m, a, j] - sigma * h[m, a, j]
            _linf_prox_member(z, yhat[m], sigma, gamma, out[m])
    return _group_cons(metric, out, yhat)


@njit(cache=True)
def prox_groups(metric, h, yp, yhat, sigma, budget, rtol, max_iter, gamma_max, out, gammas):
    """Ball-constrained prox for every group, by a multiplier search per group.

    ``gammas`` carries warm-start guesses in and the final multipliers out.
    Returns the number of groups whose multiplier could not be bracketed.
    """
    G = h.shape[0]
    failures = 0
    for g in range(G):
        if budget <= 0.0:
            out[g, :, :, :] = yhat[g]
            continue
        f_lo = _prox_eval(metric, h[g], yp[g], yhat[g], sigma, 0.0, out[g]) - budget
        if f_lo <= 0.0:
            gammas[g] = 0.0
            continue
        lo = 0.0
        hi = gammas[g] if gammas[g] > 0.0 else 1.0
        f_hi = _prox_eval(metric, h[g], yp[g], yhat[g], sigma, hi, out[g]) - budget
        while f_hi > 0.0:
            lo, f_lo = hi, f_hi
            hi *= 2.0
            if hi > gamma_max:
                break
            f_hi = _prox_eval(metric, h[g], yp[g], yhat[g], sigma, hi, out[g]) - budget
        if f_hi > 0.0:
            failures += 1
            gammas[g] = hi
            continue
        at_hi = True
        side = 0
        for _ in range(max_iter):
            if hi - lo <= rtol * (1.0 + hi) or -f_hi <= 1e-13 * (1.0 + budget):
                break
            m = (lo * f_hi - hi * f_lo) / (f_hi - f_lo)
            if not (lo < m < hi):
                m = 0.5 * (lo + hi)
            fm = _prox_eval(metric, h[g], yp[g], yhat[g], sigma, m, out[g]) - budget
            if fm > 0.0:
                lo, f_lo = m, fm
                at_hi = False
                if side == -1:
                    f_hi *= 0.5
                side = -1
            else:
                hi, f_hi = m, fm
                at_hi = True
                if side == 1:
                    f_lo *= 0.5
                side = 1
        if not at_hi:
            _prox_eval(metric, h[g], yp[g], yhat[g], sigma, hi, out[g])
        gammas[g] = hi
    return failures


@njit(cache=True)
def linf_box_prox(h, yp, yhat, sigma, t, out):
    """Prox under a hard per-sample l-inf bound ``t`` (type-infinity ball)."""
    G, M, A, S = h.shape
    z = np.empty(S)
    lo = np.empty(S)
    hi = np.empty(S)
    for g in range(G):
        for m in range(M):
            for a in range(A):
                for j in range(S):
                    z[j] = yp[g, m, a, j] - sigma * h[g, m, a, j]
                    lo[j] = max(0.0, yhat[g, m, a, j] - t)
                    hi[j] = min(1.0, yhat[g, m, a, j] + t)
                box_simplex_row(z, lo, hi, out[g, m, a])


# ------------------------------------------------------ linear maximization


@njit(cache=True)
def _argmax_row(g, flat_tol):
    """Index of the largest entry (lowest on ties), or -1 for a constant row."""
    k = 0
    gmin = g[0]
    for j in range(1, g.shape[0]):
        if g[j] > g[k]:
            k = j
        if g[j] < gmin:
            gmin = g[j]
    if g[k] - gmin <= flat_tol:
        return -1
    return k


@njit(cache=True)
def _vertex_fill(g, yhat, out, flat_tol):
    M, A, S = g.shape
    for m in range(M):
        for a in range(A):
            k = _argmax_row(g[m, a], flat_tol)
            if k < 0:
                out[m, a, :] = yhat[m, a]
            else:
                out[m, a, :] = 0.0
                out[m, a, k] = 1.0


@njit(cache=True)
def greedy_box_row(g, yhat, t, out):
    """Maximize <g, y> over the simplex intersected with |y - yhat| <= t.

    Mass moves from the lowest-g donors to the highest-g recipients while
    the exchange is strictly profitable.
    """
    S = g.shape[0]
    for j in range(S):
        out[j] = yhat[j]
    order = np.argsort(g, kind="mergesort")
    top = S - 1
    bot = 0
    while bot < top:
        k = order[top]
        j = order[bot]
        if g[k] <= g[j]:
            break
        room = min(1.0, yhat[k] + t) - out[k]
        avail = out[j] - max(0.0, yhat[j] - t)
        if room <= 0.0:
            top -= 1
            continue
        if avail <= 0.0:
            bot += 1
            continue
        mv = min(room, avail)
        out[k] += mv
        out[j] -= mv
        if room <= avail:
            top -= 1
        if avail <= room:
            bot += 1


@njit(cache=True)
def _linf_member_value(g, yhat, t, out):
    A = g.shape[0]
    val = 0.0
    for a in range(A):
        greedy_box_row(g[a], yhat[a], t, out[a])
        val += np.dot(g[a], out[a])
    return val


@njit(cache=True)
def _linf_lmax_member(g, yhat, gamma, out):
    if gamma == 0.0:
        _linf_member_value(g, yhat, 1.0, out)
        return
    invphi = 0.6180339887498949
    a, b = 0.0, 1.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = _linf_member_value(g, yhat, c, out) - gamma * c
    fd = _linf_member_value(g, yhat, d, out) - gamma * d
    for _ in range(80):
        if b - a <= 1e-13:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = _linf_member_value(g, yhat, c, out) - gamma * c
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = _linf_member_value(g, yhat, d, out) - gamma * d
    # compare against the endpoints: the maximizer of a concave PWL function may sit there
    t_best = 0.5 * (a + b)
    f_best = _linf_member_value(g, yhat, t_best, out) - gamma * t_best
    f0 = _linf_member_value(g, yhat, 0.0, out)
    if f0 > f_best:
        t_best, f_best = 0.0, f0
    f1 = _linf_member_value(g, yhat, 1.0, out) - gamma
    if f1 > f_best:
        t_best = 1.0
    _linf_member_value(g, yhat, t_best, out)


@njit(cache=True)
def _face_fill(g, yhat, out, flat_tol):
    """Limit of the l2-regularized maximizer as the multiplier goes to 0.

    The point of the maximizing face (the argmax coordinates, ties included)
    closest to ``yhat``: the projection of ``yhat`` restricted to the face.
    """
    M, A, S = g.shape
    idx = np.empty(S, dtype=np.int64)
    for m in range(M):
        for a in range(A):
            k = _argmax_row(g[m, a], flat_tol)
            if k < 0:
                out[m, a, :] = yhat[m, a]
                continue
            n = 0
            for j in range(S):
                if g[m, a, j] >= g[m, a, k] - flat_tol:
                    idx[n] = j
                    n += 1
            out[m, a, :] = 0.0
            if n == 1:
                out[m, a, k] = 1.0
                continue
            buf = np.empty(n)
            res = np.empty(n)
            for t in range(n):
                buf[t] = yhat[m, a, idx[t]]
            simplex_row(buf, res)
            for t in range(n):
                out[m, a, idx[t]] = res[t]


@njit(cache=True)
def _lmax_eval(metric, g, yhat, gamma, out, flat_tol):
    M, A, S = g.shape
    if gamma == 0.0 and metric == L2:
        _face_fill(g, yhat, out, flat_tol)
    elif gamma == 0.0:
        _vertex_fill(g, yhat, out, flat_tol)
    elif metric == L2:
        buf = np.empty(S)
        for m in range(M):
            for a in range(A):
                if _argmax_row(g[m, a], flat_tol) < 0:
                    out[m, a, :] = yhat[m, a]
                    continue
                for j in range(S):
                    buf[j] = yhat[m, a, j] + g[m, a, j] / (2.0 * gamma)
                simplex_row(buf, out[m, a])
    else:
        for m in range(M):
            _linf_lmax_member(g[m], yhat[m], gamma, out[m])
    return _group_cons(metric, out, yhat)


@njit(cache=True)
def lmax_groups(metric, g, yhat, budget, rtol, max_iter, gamma_max, out, flat_tol):
    """Maximize <g, y> over each group's ball (l2 squared or mean l-inf).

    Multiplier search (Illinois for l2, bisection for l-inf), then the
    feasible and infeasible endpoint solutions are mixed so that the
    budget is used up.
    """
    G, M, A, S = g.shape
    failures = 0
    y_lo = np.empty((M, A, S))
    mix = np.empty((M, A, S))
    for gi in range(G):
        if budget <= 0.0:
            out[gi, :, :, :] = yhat[gi]
            continue
        if _lmax_eval(metric, g[gi], yhat[gi], 0.0, out[gi], flat_tol) <= budget:
            continue
        y_lo[:, :, :] = out[gi]
        lo = 0.0
        hi = 1.0
        if metric == L2:
            # projecting yhat + g / (2 gamma) moves at most the centered g / (2 gamma),
            # so this gamma is always feasible
            ss = 0.0
            for m_ in range(M):
                for a in range(A):
                    gb = g[gi, m_, a].mean()
                    for j in range(S):
                        ss += (g[gi, m_, a, j] - gb) ** 2
            if ss > 0.0:
                hi = np.sqrt(ss / (4.0 * M * budget)) * (1.0 + 1e-12)
        c_hi = _lmax_eval(metric, g[gi], yhat[gi], hi, out[gi], flat_tol)
        while c_hi > budget:
            lo = hi
            y_lo[:, :, :] = out[gi]
            hi *= 2.0
            if hi > gamma_max:
                break
            c_hi = _lmax_eval(metric, g[gi], yhat[gi], hi, out[gi], flat_tol)
        if c_hi > budget:
            failures += 1
            continue
        y_hi = out[gi].copy()
        # l-inf: the gamma -> 0 limit may be feasible while the chosen vertex
        # is not; a feasible y(gamma) is within gamma * M * budget of the
        # optimum, so a tiny feasible gamma is accepted.  For l2 the limit is
        # exact and an infeasible gamma > 0 always exists.
        for _ in range(200):
            if lo > 0.0:
                break
            m = 0.5 * hi
            if _lmax_eval(metric, g[gi], yhat[gi], m, mix, flat_tol) > budget:
                lo = m
                y_lo[:, :, :] = mix
            else:
                hi = m
                y_hi[:, :, :] = mix
        if lo == 0.0:
            if metric == L2:
                failures += 1
            else:
                out[gi, :, :, :] = y_hi
            continue
        if metric == L2:
            # Illinois in u = 1/gamma, where the distance is close to linear
            sb = np.sqrt(budget)
            u_lo, u_hi = 1.0 / hi, 1.0 / lo
            f_lo = np.sqrt(_group_cons(metric, y_hi, yhat[gi])) - sb
            f_hi = np.sqrt(_group_cons(metric, y_lo, yhat[gi])) - sb
            side = 0
            for _ in range(max_iter):
                if u_hi - u_lo <= rtol * u_hi or -f_lo <= 1e-13 * (1.0 + sb):
                    break
                u = (u_lo * f_hi - u_hi * f_lo) / (f_hi - f_lo)
                if not (u_lo < u < u_hi):
                    u = 0.5 * (u_lo + u_hi)
                fm = np.sqrt(_lmax_eval(metric, g[gi], yhat[gi], 1.0 / u, mix, flat_tol)) - sb
                if fm > 0.0:
                    u_hi, f_hi = u, fm
                    y_lo[:, :, :] = mix
                    if side == 1:
                        f_lo *= 0.5
                    side = 1
                else:
                    u_lo, f_lo = u, fm
                    y_hi[:, :, :] = mix
                    if side == -1:
                        f_hi *= 0.5
                    side = -1
        else:
            for _ in range(max_iter):
                if hi - lo <= rtol * (1.0 + hi):
                    break
                m = 0.5 * (lo + hi)
                if _lmax_eval(metric, g[gi], yhat[gi], m, mix, flat_tol) > budget:
                    lo = m
                    y_lo[:, :, :] = mix
                else:
                    hi = m
                    y_hi[:, :, :] = mix
        # largest feasible step from y_hi toward y_lo
        b_lo, b_hi = 0.0, 1.0
        mix[:, :, :] = y_lo
        if _group_cons(metric, mix, yhat[gi]) <= budget:
            b_lo = 1.0
        elif metric == L2:
            # the constraint is a quadratic in the mixing weight
            qa, qb, qc = 0.0, 0.0, 0.0
            for m_ in range(M):
                for a in range(A):
                    for j in range(S):
                        dh = y_hi[m_, a, j] - yhat[gi, m_, a, j]
                        dd = y_lo[m_, a, j] - y_hi[m_, a, j]
                        qa += dd * dd
                        qb += 2.0 * dh * dd
                        qc += dh * dh
            qc -= M * budget
            disc = max(qb * qb - 4.0 * qa * qc, 0.0)
            b_lo = 2.0 * (-qc) / (qb + np.sqrt(disc)) if qb + np.sqrt(disc) > 0.0 else 0.0
            b_lo = min(max(b_lo * (1.0 - 1e-12), 0.0), 1.0)
        else:
            for _ in range(60):
                b = 0.5 * (b_lo + b_hi)
                for m_ in range(M):
                    for a in range(A):
                        for j in range(S):
                            mix[m_, a, j] = (1.0 - b) * y_hi[m_, a, j] + b * y_lo[m_, a, j]
                if _group_cons(metric, mix, yhat[gi]) <= budget:
                    b_lo = b
                else:
                    b_hi = b
        for m_ in range(M):
            for a in range(A):
                for j in range(S):
                    out[gi, m_, a, j] = (1.0 - b_lo) * y_hi[m_, a, j] + b_lo * y_lo[m_, a, j]
    return failures


@njit(cache=True)
def lmax_l1_groups(g, yhat, budget, out, flat_tol):
    """Exact maximization of <g, y> under mean_m ||y_m - yhat_m||_1 <= budget.

    Every unit of mass moved from a donor coordinate to its row's argmax
    costs 2/M of budget, so the optimum is a fractional knapsack over
    donors ordered by gain.
    """
    G, M, A, S = g.shape
    n_items = M * A * S
    rate = np.empty(n_items)
    cap = np.empty(n_items)
    dst = np.empty(n_items, dtype=np.int64)
    for gi in range(G):
        out[gi, :, :, :] = yhat[gi]
        if budget <= 0.0:
            continue
        n = 0
        for m in range(M):
            for a in range(A):
                k = _argmax_row(g[gi, m, a], flat_tol)
                if k < 0:
                    continue
                for j in range(S):
                    gain = g[gi, m, a, k] - g[gi, m, a, j]
                    if j != k and gain > 0.0 and yhat[gi, m, a, j] > 0.0:
                        rate[n] = -gain
                        cap[n] = yhat[gi, m, a, j]
                        dst[n] = (m * A + a) * S * S + k * S + j
                        n += 1
        if n == 0:
            continue
        order = np.argsort(rate[:n], kind="mergesort")
        mass = 0.5 * M * budget
        for q in range(n):
            if mass <= 0.0:
                break
            idx = order[q]
            code = dst[idx]
            row = code // (S * S)
            k = (code // S) % S
            j = code % S
            m = row // A
            a = row % A
            take = min(cap[idx], mass)
            out[gi, m, a, j] -= take
            out[gi, m, a, k] += take
            mass -= take


@njit(cache=True)
def lmax_linf_fixed(g, yhat, t, out):
    """Maximize <g, y> with every member inside its own l-inf ball of radius t."""
    G, M, A, S = g.shape
    for gi in range(G):
        for m in range(M):
            for a in range(A):
                greedy_box_row(g[gi, m, a], yhat[gi, m, a], t, out[gi, m, a])
