"""Compiled inner loops.

Kernels reach this module as numba-compiled scalar functions ``f(x, y)``;
each distinct ``f`` specialises the loops once per process.

Accumulation scheme (fixed, because tests compare results bitwise): points
are consumed in index order.  For each new point ``j`` the row
``sum_{i<j} f(x[i], x[j])`` is summed over ascending ``i`` into four
interleaved Neumaier lanes (lane ``i mod 4``); the lanes are closed as
``((a0 + c0) + (a1 + c1)) + ((a2 + c2) + (a3 + c3))``.  Row totals enter a
running Neumaier accumulator and the reported prefix sum is ``s + c``.
"""

import numba as nb
import numpy as np

ACCUMULATION_SCHEME = "column-major rows, 4-lane Neumaier per row, Neumaier across rows"


@nb.njit(nogil=True, inline="always")
def _two_sum(s, v):
    t = s + v
    if abs(s) >= abs(v):
        e = (s - t) + v
    else:
        e = (v - t) + s
    return t, e


@nb.njit(nogil=True)
def _row_sum(f, x, j):
    xj = x[j]
    a0 = 0.0
    a1 = 0.0
    a2 = 0.0
    a3 = 0.0
    c0 = 0.0
    c1 = 0.0
    c2 = 0.0
    c3 = 0.0
    i = 0
    while i + 4 <= j:
        a0, e = _two_sum(a0, f(x[i], xj))
        c0 += e
        a1, e = _two_sum(a1, f(x[i + 1], xj))
        c1 += e
        a2, e = _two_sum(a2, f(x[i + 2], xj))
        c2 += e
        a3, e = _two_sum(a3, f(x[i + 3], xj))
        c3 += e
        i += 4
    while i < j:
        a0, e = _two_sum(a0, f(x[i], xj))
        c0 += e
        i += 1
    return ((a0 + c0) + (a1 + c1)) + ((a2 + c2) + (a3 + c3))


@nb.njit(nogil=True)
def prefix_pair_sums(f, x, checkpoints):
    """``S_n = sum_{i<j<=n} f(x_i, x_j)`` at each (ascending, 1-based) checkpoint."""
    out = np.empty(checkpoints.shape[0])
    if checkpoints.shape[0] == 0:
        return out
    n_max = checkpoints[-1]
    s = 0.0
    cs = 0.0
    k = 0
    # n = 1 has an empty pair sum
    while k < checkpoints.shape[0] and checkpoints[k] <= 1:
        out[k] = 0.0
        k += 1
    for j in range(1, n_max):
        r = _row_sum(f, x, j)
        s, e = _two_sum(s, r)
        cs += e
        n = j + 1
        while k < checkpoints.shape[0] and checkpoints[k] == n:
            out[k] = s + cs
            k += 1
    return out


@nb.njit(nogil=True)
def apply_pairwise(f, x, y):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        out[i] = f(x[i], y[i])
    return out


@nb.njit(nogil=True)
def apply_unary(g, x):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        out[i] = g(x[i])
    return out


@nb.njit(nogil=True)
def kernel_matrix(f, u):
    m = u.shape[0]
    out = np.empty((m, m))
    for i in range(m):
        for j in range(m):
            out[i, j] = f(u[i], u[j])
    return out


# -- pairwise sums of a sorted sample -------------------------------------


@nb.njit(nogil=True, cache=True)
def count_pair_sums_le(xs, s):
    """Number of pairs ``i < j`` with ``xs[i] + xs[j] <= s`` (``xs`` ascending)."""
    n = xs.shape[0]
    i = 0
    j = n - 1
    c = 0
    while i < j:
        if xs[i] + xs[j] <= s:
            c += j - i
            i += 1
        else:
            j -= 1
    return c


@nb.njit(nogil=True, cache=True)
def _collect_band(xs, lo, hi, size):
    """All pair sums in ``(lo, hi]``, ``size`` of them."""
    n = xs.shape[0]
    out = np.empty(size)
    k = 0
    # for fixed i the admissible j form a contiguous run; both ends move left as i grows
    jl = n - 1
    jh = n - 1
    for i in range(n - 1):
        if jh < i + 1:
            break
        while jh > i and xs[i] + xs[jh] > hi:
            jh -= 1
        while jl > i and xs[i] + xs[jl] > lo:
            jl -= 1
        # sums for j in (jl, jh] lie in (lo, hi]
        start = max(jl + 1, i + 1)
        for j in range(start, jh + 1):
            out[k] = xs[i] + xs[j]
            k += 1
    return out[:k]


@nb.njit(nogil=True, cache=True)
def select_pair_sum(xs, rank):
    """Exact ``rank``-th smallest (1-based) of ``xs[i] + xs[j]``, ``i < j``.

    Bisection on the value axis with O(n) counting, then exact selection
    among the at most ``n`` sums left in the final bracket.  If the bracket
    shrinks to adjacent doubles every remaining sum equals the upper end.
    """
    n = xs.shape[0]
    lo = xs[0] + xs[1]
    c_lo = count_pair_sums_le(xs, lo)
    if rank <= c_lo:
        return lo
    hi = xs[n - 2] + xs[n - 1]
    c_hi = n * (n - 1) // 2
    while c_hi - c_lo > n:
        mid = lo + 0.5 * (hi - lo)
        if not (lo < mid < hi):
            return hi
        c = count_pair_sums_le(xs, mid)
        if c >= rank:
            hi = mid
            c_hi = c
        else:
            lo = mid
            c_lo = c
    band = _collect_band(xs, lo, hi, c_hi - c_lo)
    band.sort()
    return band[rank - c_lo - 1]
