"""Loop-form kernels compiled with numba.

Every function here has a vectorized twin in ``_numpy`` with the same
signature and the same results; ``cpopt.kernels`` picks one at import time.
"""
import numpy as np

from .._accel import njit


# ---------------------------------------------------------------------------
# Mann-Whitney change-point statistics
# ---------------------------------------------------------------------------

@njit
def midranks(x):
    n = x.shape[0]
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(n)
    tie_term = 0.0
    i = 0
    while i < n:
        j = i
        while j + 1 < n and x[order[j + 1]] == x[order[i]]:
            j += 1
        r = 0.5 * (i + j) + 1.0
        for q in range(i, j + 1):
            ranks[order[q]] = r
        t = j - i + 1
        tie_term += t * t * t - t
        i = j + 1
    return ranks, tie_term


@njit
def mw_profile(x, kmin, kmax):
    """Normalized |U - mu| / sigma for every split k in [kmin, kmax]."""
    n = x.shape[0]
    ranks, tie_term = midranks(x)
    out = np.zeros(kmax - kmin + 1)
    tie_adj = (n + 1.0) - tie_term / (n * (n - 1.0))
    w = 0.0
    for k in range(1, kmax + 1):
        w += ranks[k - 1]
        if k < kmin:
            continue
        m = n - k
        var = k * m / 12.0 * tie_adj
        if var > 1e-12:
            u = w - k * (k + 1) / 2.0
            out[k - kmin] = abs(u - k * m / 2.0) / np.sqrt(var)
    return out


@njit
def mw_scan(x, kmin, kmax):
    prof = mw_profile(x, kmin, kmax)
    best = 0
    for i in range(1, prof.shape[0]):
        if prof[i] > prof[best]:
            best = i
    return prof[best], kmin + best


@njit
def mw_scan_batch(X, kmin, kmax):
    reps = X.shape[0]
    out = np.empty(reps)
    for r in range(reps):
        out[r] = mw_scan(X[r], kmin, kmax)[0]
    return out


@njit
def _stream_step(seg, m, U, tie_term, kmin, rmin):
    """Append seg[m] to a window of length m and rescan it.

    Returns (tie_term, D, argmax k) for the new window of length m + 1, with
    k restricted to [kmin, m + 1 - rmin]; D is 0 when no split is admissible.
    """
    xm = seg[m]
    length = m + 1
    kmax = length - rmin
    U[m] = 0.0
    c = 0.0
    e = 0
    best = 0.0
    best_k = kmin
    for i in range(m):
        v = seg[i]
        if v > xm:
            c += 1.0
        elif v == xm:
            c += 0.5
            e += 1
        k = i + 1
        U[k] += c
        if k >= kmin and k <= kmax:
            kk = k * (length - k)
            dev = U[k] - 0.5 * kk
            r = dev * dev / kk
            if r > best:
                best = r
                best_k = k
    tie_term += 3.0 * e * (e + 1)
    if length < 2:
        return tie_term, 0.0, best_k
    adj = (length + 1.0) - tie_term / (length * (length - 1.0))
    if adj <= 1e-12:
        return tie_term, 0.0, best_k
    return tie_term, np.sqrt(12.0 * best / adj), best_k


@njit
def stream_stats(X, kmin, rmin):
    """D_m of the growing window x[0:m] for m = 1..H, per row of X.

    Entries with m < kmin + rmin (no admissible split) are -inf.
    """
    reps, H = X.shape
    out = np.full((reps, H), -np.inf)
    U = np.zeros(H + 1)
    for r in range(reps):
        seg = X[r]
        tie_term = 0.0
        for m in range(H):
            tie_term, d, _ = _stream_step(seg, m, U, tie_term, kmin, rmin)
            if m + 1 >= kmin + rmin:
                out[r, m] = d
    return out


@njit
def sequential_scan(x, h, kmin, rmin):
    """Streaming detection with restart after each alarm.

    ``h[m]`` is the threshold for a window of length m; lengths beyond
    ``len(h) - 1`` reuse the last entry. Returns (alarm_times, locations,
    statistics) as arrays; locations are split points into ``x``.
    """
    n = x.shape[0]
    H = h.shape[0] - 1
    times = np.empty(n, dtype=np.int64)
    locs = np.empty(n, dtype=np.int64)
    stats = np.empty(n)
    count = 0
    U = np.zeros(n + 1)
    start = 0
    while start < n:
        seg = x[start:]
        tie_term = 0.0
        found = False
        for m in range(n - start):
            tie_term, d, k = _stream_step(seg, m, U, tie_term, kmin, rmin)
            length = m + 1
            if length < kmin + rmin:
                continue
            hm = h[length] if length <= H else h[H]
            if d > hm:
                times[count] = start + m
                locs[count] = start + k
                stats[count] = d
                count += 1
                start = start + k
                found = True
                break
        if not found:
            break
    return times[:count], locs[:count], stats[:count]



# ---------------------------------------------------------------------------
# Box-constrained simplex grid search
# ---------------------------------------------------------------------------

@njit
def _better(val, ssq, best_val, best_ssq, rtol):
    if best_val == -np.inf:
        return val > -np.inf
    tol = rtol * max(1.0, abs(best_val))
    if val > best_val + tol:
        return True
    if val >= best_val - tol and ssq < best_ssq - 0.5:
        return True
    return False


@njit
def grid_search(R, A, rf, lo, hi, N, rtol, balance):
    """Exhaustive search over integer compositions c of N with lo <= c <= hi.

    Weights are c / N. Maximizes (w.R - rf) / (w' A w); near-ties (relative
    ``rtol``) go to the smaller sum of squares when ``balance`` is 1, then to
    the lexicographically first composition. Returns (best_c, best_value,
    evaluations).
    """
    n = R.shape[0]
    best_c = np.full(n, -1, dtype=np.int64)
    best_val = -np.inf
    best_ssq = np.inf
    evals = 0
    inv_n = 1.0 / N
    if n == 1:
        best_c[0] = N
        q = A[0, 0]
        if q > 0:
            best_val = (R[0] - rf) / q
        evals = 1
        return best_c, best_val, evals

    # suffix bounds on what coordinates i.. can absorb
    smin = np.zeros(n + 1, dtype=np.int64)
    smax = np.zeros(n + 1, dtype=np.int64)
    for i in range(n - 1, -1, -1):
        smin[i] = smin[i + 1] + lo[i]
        smax[i] = smax[i + 1] + hi[i]
    if smin[0] > N or smax[0] < N:
        return best_c, best_val, evals

    c = np.zeros(n, dtype=np.int64)
    # per-level state: g[lvl] = A @ c[:lvl] (as floats), q[lvl] = c'Ac over
    # the first lvl coords, num/ssq partial sums, remaining budget
    g = np.zeros((n, n))
    qp = np.zeros(n)
    num = np.zeros(n)
    ssq = np.zeros(n)
    rem = np.zeros(n, dtype=np.int64)
    rem[0] = N
    a = n - 2
    b = n - 1

    lvl = 0
    c[0] = max(lo[0], rem[0] - smax[1]) - 1
    while lvl >= 0:
        c[lvl] += 1
        upper = min(hi[lvl], rem[lvl] - smin[lvl + 1])
        if c[lvl] > upper:
            lvl -= 1
            continue
        if lvl < a:
            v = float(c[lvl])
            nxt = lvl + 1
            for j in range(n):
                g[nxt, j] = g[lvl, j] + v * A[j, lvl]
            qp[nxt] = qp[lvl] + 2.0 * v * g[lvl, lvl] + A[lvl, lvl] * v * v
            num[nxt] = num[lvl] + v * R[lvl]
            ssq[nxt] = ssq[lvl] + v * v
            rem[nxt] = rem[lvl] - c[lvl]
            lvl = nxt
            c[lvl] = max(lo[lvl], rem[lvl] - smax[lvl + 1]) - 1
            continue
        # innermost: coordinate a varies, b is determined
        ca = float(c[a])
        cb = float(rem[a] - c[a])
        q = (qp[a] + 2.0 * ca * g[a, a] + A[a, a] * ca * ca
             + 2.0 * cb * (g[a, b] + A[b, a] * ca) + A[b, b] * cb * cb)
        evals += 1
        if q <= 0.0:
            continue
        val = (inv_n * (num[a] + ca * R[a] + cb * R[b]) - rf) / (q * inv_n * inv_n)
        s = balance * (ssq[a] + ca * ca + cb * cb)
        if _better(val, s, best_val, best_ssq, rtol):
            best_val = val
            best_ssq = s
            for j in range(a + 1):
                best_c[j] = c[j]
            best_c[b] = rem[a] - c[a]
    return best_c, best_val, evals


# ---------------------------------------------------------------------------
# GJR-GARCH recursion with level shifts
# ---------------------------------------------------------------------------

@njit
def garch_path(z, level, phi, omega, alpha, beta, gamma, sigma2_0):
    """x_t = level_t + y_t, y_t = phi*y_{t-1} + e_t, e_t = sigma_t*z_t."""
    n = z.shape[0]
    x = np.empty(n)
    s2 = np.empty(n)
    y_prev = 0.0
    e_prev = 0.0
    s2_prev = sigma2_0
    for t in range(n):
        if t == 0:
            s = sigma2_0
        else:
            s = omega + alpha * e_prev * e_prev + beta * s2_prev
            if e_prev < 0.0:
                s += gamma * e_prev * e_prev
        e = np.sqrt(s) * z[t]
        y = phi * y_prev + e
        x[t] = level[t] + y
        s2[t] = s
        y_prev = y
        e_prev = e
        s2_prev = s
    return x, s2
