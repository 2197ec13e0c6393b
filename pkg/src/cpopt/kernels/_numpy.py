"""Vectorized numpy versions of the kernels in ``_numba``.

Used when numba is disabled or unavailable. Signatures and results match the
compiled versions; the loop structure differs (work is batched across rows
or grid blocks instead of scalar loops).
"""
import numpy as np
from scipy.stats import rankdata


def midranks(x):
    x = np.asarray(x, dtype=float)
    ranks = rankdata(x, method="average")
    _, counts = np.unique(x, return_counts=True)
    counts = counts.astype(float)
    return ranks, float(np.sum(counts**3 - counts))


def mw_profile(x, kmin, kmax):
    n = x.shape[0]
    ranks, tie_term = midranks(x)
    k = np.arange(kmin, kmax + 1, dtype=float)
    w = np.cumsum(ranks)[kmin - 1:kmax]
    m = n - k
    var = k * m / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)))
    u = w - k * (k + 1) / 2.0
    out = np.zeros_like(k)
    ok = var > 1e-12
    out[ok] = np.abs(u[ok] - k[ok] * m[ok] / 2.0) / np.sqrt(var[ok])
    return out


def mw_scan(x, kmin, kmax):
    prof = mw_profile(x, kmin, kmax)
    i = int(np.argmax(prof))
    return prof[i], kmin + i


def _tie_terms(X):
    s = np.sort(X, axis=1)
    out = np.zeros(X.shape[0])
    rows = np.flatnonzero(np.any(s[:, 1:] == s[:, :-1], axis=1))
    for r in rows:
        _, c = np.unique(s[r], return_counts=True)
        c = c.astype(float)
        out[r] = np.sum(c**3 - c)
    return out


def mw_scan_batch(X, kmin, kmax):
    X = np.asarray(X, dtype=float)
    reps, n = X.shape
    ranks = rankdata(X, method="average", axis=1)
    tie = _tie_terms(X)
    k = np.arange(kmin, kmax + 1, dtype=float)
    w = np.cumsum(ranks, axis=1)[:, kmin - 1:kmax]
    m = n - k
    var = (k * m / 12.0)[None, :] * ((n + 1.0) - tie / (n * (n - 1.0)))[:, None]
    dev = np.abs(w - (k * (k + 1) / 2.0 + k * m / 2.0)[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = np.where(var > 1e-12, dev / np.sqrt(np.where(var > 0, var, 1.0)), 0.0)
    return stat.max(axis=1)


def _window_stats(U, length, tie_term, kmin, rmin):
    """Row-wise max of the normalized statistic over k in [kmin, length-rmin].

    Returns (max, argmax k); argmax ties go to the smallest k.
    """
    k = np.arange(kmin, length - rmin + 1, dtype=float)
    kk = k * (length - k)
    dev = U[:, kmin:length - rmin + 1] - 0.5 * kk
    r = dev * dev / kk
    i = np.argmax(r, axis=1)
    best = r[np.arange(r.shape[0]), i]
    adj = (length + 1.0) - np.asarray(tie_term, dtype=float) / (length * (length - 1.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(adj > 1e-12, np.sqrt(12.0 * best / np.where(adj > 0, adj, 1.0)), 0.0)
    return d, kmin + i


def _advance(X, m, U, tie):
    """Append column m of X to every window (rows)."""
    xm = X[:, m:m + 1]
    prev = X[:, :m]
    eq = prev == xm
    U[:, 1:m + 1] += np.cumsum((prev > xm) + 0.5 * eq, axis=1)
    e = eq.sum(axis=1)
    tie += 3.0 * e * (e + 1)


def stream_stats(X, kmin, rmin):
    X = np.asarray(X, dtype=float)
    reps, H = X.shape
    out = np.full((reps, H), -np.inf)
    U = np.zeros((reps, H + 1))
    tie = np.zeros(reps)
    for m in range(H):
        _advance(X, m, U, tie)
        length = m + 1
        if length >= kmin + rmin:
            out[:, m] = _window_stats(U, length, tie, kmin, rmin)[0]
    return out


def sequential_scan(x, h, kmin, rmin):
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    H = h.shape[0] - 1
    times, locs, stats = [], [], []
    start = 0
    while start < n:
        seg = x[None, start:]
        U = np.zeros((1, n - start + 1))
        tie = np.zeros(1)
        found = False
        for m in range(n - start):
            _advance(seg, m, U, tie)
            length = m + 1
            if length < kmin + rmin:
                continue
            d, k = _window_stats(U, length, tie, kmin, rmin)
            hm = h[length] if length <= H else h[H]
            if d[0] > hm:
                times.append(start + m)
                locs.append(start + int(k[0]))
                stats.append(float(d[0]))
                start = start + int(k[0])
                found = True
                break
        if not found:
            break
    return (np.array(times, dtype=np.int64), np.array(locs, dtype=np.int64),
            np.array(stats, dtype=float))


# ---------------------------------------------------------------------------
# grid search
# ---------------------------------------------------------------------------

def _suffix_bounds(lo, hi):
    smin = np.concatenate([np.cumsum(lo[::-1])[::-1], [0]])
    smax = np.concatenate([np.cumsum(hi[::-1])[::-1], [0]])
    return smin, smax


def count_table(lo, hi, N):
    """cnt[i][s] = number of ways coordinates i.. can sum to s (exact ints)."""
    n = len(lo)
    cnt = [[0] * (N + 1) for _ in range(n + 1)]
    cnt[n][0] = 1
    for i in range(n - 1, -1, -1):
        pre = [0]
        for v in cnt[i + 1]:
            pre.append(pre[-1] + v)
        for s in range(N + 1):
            a, b = int(lo[i]), min(int(hi[i]), s)
            if a <= b:
                cnt[i][s] = pre[s - a + 1] - pre[s - b]
    return cnt


def _expand(prefix, start, rem, lo, hi, smin, smax):
    """All completions of ``prefix`` (coords < start fixed), lexicographic."""
    n = lo.shape[0]
    rows = np.array([prefix], dtype=np.int64).reshape(1, start)
    r = np.array([rem], dtype=np.int64)
    for j in range(start, n - 1):
        low = np.maximum(lo[j], r - smax[j + 1])
        up = np.minimum(hi[j], r - smin[j + 1])
        counts = np.maximum(up - low + 1, 0)
        total = int(counts.sum())
        offs = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        vals = np.repeat(low, counts) + offs
        rows = np.column_stack([np.repeat(rows, counts, axis=0), vals])
        r = np.repeat(r, counts) - vals
    return np.column_stack([rows, r])


def _blocks(lo, hi, N, block):
    """Yield composition blocks in global lexicographic order."""
    n = lo.shape[0]
    smin, smax = _suffix_bounds(lo, hi)
    cnt = count_table(lo, hi, N)

    def rec(prefix, i, rem):
        if i == n - 1 or cnt[i][rem] <= block:
            yield _expand(prefix, i, rem, lo, hi, smin, smax)
            return
        low = max(lo[i], rem - smax[i + 1])
        up = min(hi[i], rem - smin[i + 1])
        for v in range(low, up + 1):
            yield from rec(prefix + [v], i + 1, rem - v)

    yield from rec([], 0, N)


def _better(val, ssq, best_val, best_ssq, rtol):
    if best_val == -np.inf:
        return val > -np.inf
    tol = rtol * max(1.0, abs(best_val))
    if val > best_val + tol:
        return True
    return val >= best_val - tol and ssq < best_ssq - 0.5


def grid_search(R, A, rf, lo, hi, N, rtol, balance, block=1 << 18):
    n = R.shape[0]
    lo = np.asarray(lo, dtype=np.int64)
    hi = np.asarray(hi, dtype=np.int64)
    best_c = np.full(n, -1, dtype=np.int64)
    if lo.sum() > N or hi.sum() < N:
        return best_c, -np.inf, 0
    if n == 1:
        best_c[0] = N
        q = A[0, 0]
        return best_c, ((R[0] - rf) / q if q > 0 else -np.inf), 1

    best_val, best_ssq, evals = -np.inf, np.inf, 0
    for C in _blocks(lo, hi, N, block):
        evals += C.shape[0]
        W = C.astype(float)
        q = np.einsum("ij,jk,ik->i", W, A, W)
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.where(q > 0, (W @ R / N - rf) / (q / N**2), -np.inf)
        ssq = balance * np.einsum("ij,ij->i", W, W)
        top = vals.max()
        if top == -np.inf:
            continue
        tol = rtol * max(1.0, abs(top))
        cand = np.flatnonzero(vals >= top - tol)
        i = cand[np.argmin(ssq[cand])]
        if _better(vals[i], ssq[i], best_val, best_ssq, rtol):
            best_val, best_ssq = vals[i], ssq[i]
            best_c = C[i].copy()
    return best_c, best_val, evals


def garch_path(z, level, phi, omega, alpha, beta, gamma, sigma2_0):
    n = z.shape[0]
    x = np.empty(n)
    s2 = np.empty(n)
    y_prev = e_prev = 0.0
    s = sigma2_0
    for t in range(n):
        if t > 0:
            s = omega + alpha * e_prev * e_prev + beta * s
            if e_prev < 0.0:
                s += gamma * e_prev * e_prev
        e = np.sqrt(s) * z[t]
        y_prev = phi * y_prev + e
        x[t] = level[t] + y_prev
        s2[t] = s
        e_prev = e
    return x, s2
