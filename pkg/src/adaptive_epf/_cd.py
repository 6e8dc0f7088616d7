"""Numba kernels for the un-normalised LASSO objective

    ||y - X theta||^2 + lam * ||theta||_1

written in terms of the Gram matrix ``G = X'X`` and ``c = X'y``. Both
solvers keep ``g = c - G theta``; optimality reads ``2 g_j = lam * sign(theta_j)``
on the support and ``|2 g_j| <= lam`` elsewhere.

Coordinate descent alone can crawl for thousands of sweeps at small
penalties on badly conditioned designs (more columns than rows, strongly
correlated lags). Whole grids are therefore traced with the exact
piecewise-linear homotopy, and a single fit restarts from the homotopy
solution after ``stall`` unproductive sweeps. Coordinate sweeps always have
the last word, so the step-size stopping rule decides convergence.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _soft(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@njit(cache=True)
def _sweep(G, g, theta, half_lam, coords, n_coords):
    """One pass of exact coordinate minimisation; returns the largest |step|."""
    max_step = 0.0
    for k in range(n_coords):
        j = coords[k]
        gjj = G[j, j]
        if gjj <= 0.0:
            new = 0.0
        else:
            new = _soft(g[j] + gjj * theta[j], half_lam) / gjj
        step = new - theta[j]
        if step != 0.0:
            theta[j] = new
            for i in range(G.shape[0]):
                g[i] -= G[j, i] * step
            a = abs(step)
            if a > max_step:
                max_step = a
    return max_step


@njit(cache=True)
def kkt_violation(g, theta, lam):
    """Largest violation of the optimality conditions, in units of ``2 X'r``."""
    worst = 0.0
    for j in range(theta.shape[0]):
        if theta[j] == 0.0:
            v = abs(2.0 * g[j]) - lam
        elif theta[j] > 0.0:
            v = abs(2.0 * g[j] - lam)
        else:
            v = abs(2.0 * g[j] + lam)
        if v > worst:
            worst = v
    return worst


@njit(cache=True)
def _chol_add(R, m, G, active, j):
    """Append column ``j`` to the Cholesky factor ``R`` (``G_AA = R'R``) of size
    ``m``. Returns False, leaving ``R`` untouched, if ``G_AA`` would become singular."""
    for a in range(m):
        acc = G[active[a], j]
        for b in range(a):
            acc -= R[b, a] * R[b, m]
        R[a, m] = acc / R[a, a]
    rho2 = G[j, j]
    for a in range(m):
        rho2 -= R[a, m] * R[a, m]
    if rho2 <= 1e-10 * G[j, j] or rho2 <= 0.0:
        return False
    R[m, m] = np.sqrt(rho2)
    return True


@njit(cache=True)
def _chol_remove(R, m, k):
    """Drop position ``k`` from a Cholesky factor of size ``m`` (Givens restore)."""
    for col in range(k, m - 1):
        for row in range(col + 2):
            R[row, col] = R[row, col + 1]
    for i in range(k, m - 1):
        x = R[i, i]
        y = R[i + 1, i]
        r = np.sqrt(x * x + y * y)
        cs = x / r
        sn = y / r
        for col in range(i, m - 1):
            u = R[i, col]
            w = R[i + 1, col]
            R[i, col] = cs * u + sn * w
            R[i + 1, col] = -sn * u + cs * w
        R[i + 1, i] = 0.0
    for col in range(m):
        R[m - 1, col] = 0.0


@njit(cache=True)
def _chol_solve(R, m, rhs, out):
    for a in range(m):  # R' z = rhs
        acc = rhs[a]
        for b in range(a):
            acc -= R[b, a] * out[b]
        out[a] = acc / R[a, a]
    for a in range(m - 1, -1, -1):  # R x = z
        acc = out[a]
        for b in range(a + 1, m):
            acc -= R[a, b] * out[b]
        out[a] = acc / R[a, a]


@njit(cache=True)
def homotopy(G, c, lambdas):
    """Exact LASSO solutions at each of ``lambdas`` (non-increasing).

    Follows the piecewise-linear path down from ``lam_max = max |2c|``: on a
    fixed support with signs ``s`` the solution moves as
    ``d theta_A / d(-lam) = G_AA^{-1} s / 2`` until a variable enters or
    leaves. ``G_AA`` is kept as an updated Cholesky factor. A variable whose
    entry would make ``G_AA`` singular is left out; it stays tied at
    ``|2 g_j| = lam``.
    """
    p = c.shape[0]
    n_out = lambdas.shape[0]
    out = np.zeros((n_out, p))
    theta = np.zeros(p)
    g = c.copy()
    lam = 0.0
    for j in range(p):
        if abs(2.0 * c[j]) > lam:
            lam = abs(2.0 * c[j])
    k = 0
    while k < n_out and lambdas[k] >= lam:
        k += 1
    if k == n_out or lam == 0.0:
        return out

    active = np.empty(p, dtype=np.int64)
    signs = np.empty(p)
    in_active = np.zeros(p, dtype=np.bool_)
    excluded = np.zeros(p, dtype=np.bool_)
    R = np.zeros((p, p))
    rhs = np.empty(p)
    direction = np.empty(p)
    slope = np.empty(p)
    m = 0
    just_left = -1
    eps = 1e-13 * lam
    it = 0
    for _ in range(50 * p + 4 * n_out):
        if k >= n_out:
            break
        if m == 0:
            # (re)start from the largest remaining correlation
            best = -1
            for j in range(p):
                if not excluded[j] and (best < 0 or abs(g[j]) > abs(g[best])):
                    best = j
            if best < 0 or abs(2.0 * g[best]) < lam - eps or G[best, best] <= 0.0:
                break
            R[0, 0] = np.sqrt(G[best, best])
            active[0] = best
            signs[0] = 1.0 if g[best] > 0 else -1.0
            in_active[best] = True
            m = 1
        for a in range(m):
            rhs[a] = 0.5 * signs[a]
        _chol_solve(R, m, rhs, direction)
        ok = True
        for a in range(m):
            if not np.isfinite(direction[a]) or abs(direction[a]) > 1e12:
                ok = False
        if not ok:
            # the newest variable made the support (nearly) singular
            m -= 1
            j = active[m]
            in_active[j] = False
            excluded[j] = True
            theta[j] = 0.0
            for col in range(m + 1):
                R[col, m] = 0.0
                R[m, col] = 0.0
            continue

        slope[:] = 0.0  # G[:, A] @ direction
        for a in range(m):
            col = active[a]
            d = direction[a]
            for i in range(p):
                slope[i] += G[col, i] * d

        step = lam - lambdas[k]
        event = 0
        who = -1
        for j in range(p):
            if in_active[j] or excluded[j]:
                continue
            for sgn in (1.0, -1.0):
                den = slope[j] - 0.5 * sgn
                if den == 0.0:
                    continue
                delta = (g[j] - 0.5 * sgn * lam) / den
                if j == just_left and delta <= eps:
                    continue
                if 0.0 < delta < step:
                    step = delta
                    event = 1
                    who = j
        for a in range(m):
            d = direction[a]
            if d == 0.0:
                continue
            delta = -theta[active[a]] / d
            if 0.0 < delta < step:
                step = delta
                event = 2
                who = a

        for a in range(m):
            theta[active[a]] += step * direction[a]
        lam -= step
        it += 1
        if it % 32 == 0:
            # refresh the gradient from scratch so drift stays out of the events
            for i in range(p):
                acc = c[i]
                for a in range(m):
                    acc -= G[active[a], i] * theta[active[a]]
                g[i] = acc
        else:
            for i in range(p):
                g[i] -= step * slope[i]

        if event == 0:
            while k < n_out and lambdas[k] >= lam:
                out[k] = theta
                k += 1
        elif event == 1:
            if _chol_add(R, m, G, active, who):
                active[m] = who
                signs[m] = 1.0 if g[who] > 0 else -1.0
                in_active[who] = True
                m += 1
            else:
                excluded[who] = True
            just_left = -1
        else:
            j = active[who]
            theta[j] = 0.0
            in_active[j] = False
            _chol_remove(R, m, who)
            for a in range(who, m - 1):
                active[a] = active[a + 1]
                signs[a] = signs[a + 1]
            m -= 1
            just_left = j
    while k < n_out:
        out[k] = theta
        k += 1
    return out


@njit(cache=True)
def _cd_sweeps(G, g, theta, lam, tol, max_sweeps, kkt_tol, sweeps):
    p = G.shape[0]
    half_lam = 0.5 * lam
    everything = np.arange(p)
    active = np.empty(p, dtype=np.int64)
    while sweeps < max_sweeps:
        step = _sweep(G, g, theta, half_lam, everything, p)
        sweeps += 1
        if step < tol and kkt_violation(g, theta, lam) <= kkt_tol:
            return sweeps, True
        n_active = 0
        for j in range(p):
            if theta[j] != 0.0:
                active[n_active] = j
                n_active += 1
        while sweeps < max_sweeps:
            step = _sweep(G, g, theta, half_lam, active, n_active)
            sweeps += 1
            if step < tol:
                break
    return sweeps, False


@njit(cache=True)
def cd_gram(G, c, lam, theta, tol, max_sweeps, kkt_tol, stall):
    """Solve in place starting from ``theta``. Returns the number of sweeps used.

    Full sweeps alternate with sweeps over the current support. Convergence
    is declared after a full sweep whose largest coordinate step is below
    ``tol`` and whose KKT violation is at most ``kkt_tol``. ``stall <= 0``
    disables the homotopy restart.
    """
    g = c - G @ theta
    budget = max_sweeps if stall <= 0 else min(stall, max_sweeps)
    sweeps, done = _cd_sweeps(G, g, theta, lam, tol, budget, kkt_tol, 0)
    if done or sweeps >= max_sweeps:
        return sweeps
    lams = np.empty(1)
    lams[0] = lam
    exact = homotopy(G, c, lams)[0]
    for j in range(theta.shape[0]):
        theta[j] = exact[j]
    g = c - G @ theta
    sweeps, done = _cd_sweeps(G, g, theta, lam, tol, max_sweeps, kkt_tol, sweeps)
    return sweeps


@njit(cache=True)
def cd_path(G, c, lambdas, tol, max_sweeps, kkt_tol, stall):
    """Solutions along ``lambdas`` (non-increasing).

    With ``stall > 0`` the homotopy gives every grid point in one pass and
    coordinate sweeps then confirm each solution under the usual stopping
    rule. ``stall <= 0`` runs plain warm-started coordinate descent.
    """
    p = G.shape[0]
    n = lambdas.shape[0]
    if stall > 0:
        out = homotopy(G, c, lambdas)
        for k in range(n):
            theta = out[k]
            g = c - G @ theta
            _cd_sweeps(G, g, theta, lambdas[k], tol, max_sweeps, kkt_tol, 0)
        return out
    out = np.zeros((n, p))
    theta = np.zeros(p)
    for k in range(n):
        g = c - G @ theta
        _cd_sweeps(G, g, theta, lambdas[k], tol, max_sweeps, kkt_tol, 0)
        out[k] = theta
    return out
