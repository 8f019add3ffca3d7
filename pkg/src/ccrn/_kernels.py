"""Compiled inner loop for the discretized policy searches.

Each call walks a contiguous range of policy combinations (mixed-radix
numbers over the decision variables), locates each combination's operating
point on the ``mu_p`` grid and keeps the best SU service rate.  The chain
built here mirrors :func:`ccrn.markov.build_transition_matrix`; tests check
the two agree.

Every transition probability is either ``rho * x`` (PU busy) or
``(1 - rho) * y`` (PU idle), so the two parts are built once per
combination and blended per grid point.  Stationary vectors come from GTH
state reduction (no subtractions, no pivoting), with pivoted elimination as
the fallback when a reduction step finds no mass (transient or disconnected
states).

See :func:`ccrn.general.fixed_point_mu_p` for the operating-point rules.
The fast crossing search assumes the non-negative gaps ``mu_p_bar - mu_p``
form at most one block of the grid and that the gap is hump-shaped around
it; the tests check it against ``full_scan=True``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

SINGULAR_PIVOT = 1e-12


def decode(index: int, n_vars: int, d_num: int) -> np.ndarray:
    """Digits of combination ``index``; variable 0 is the most significant."""
    digits = np.zeros(max(n_vars, 1), dtype=np.int64)
    for k in range(n_vars - 1, -1, -1):
        digits[k] = index % d_num
        index //= d_num
    return digits


@njit(cache=True)
def _fill_parts(busy, idle, a, b, delta, f_sd, gain):
    """Off-diagonal transition mass with the ``rho`` / ``1 - rho`` factor removed."""
    M1, N1 = a.shape
    M = M1 - 1
    busy[:, :] = 0.0
    idle[:, :] = 0.0
    for i in range(M1):
        up = i + 1 if i < M else M
        for j in range(N1):
            s = i * N1 + j
            admit = gain * a[i, j]
            relay_ok = f_sd * (1.0 - b[i, j])
            if admit > 0.0:
                busy[s, up * N1 + j + 1] += delta * admit
                busy[s, i * N1 + j + 1] += (1.0 - delta) * admit
            if up != i:
                busy[s, up * N1 + j] += delta * (1.0 - admit)
            if relay_ok > 0.0:
                idle[s, i * N1 + j - 1] += delta * relay_ok
                if i > 0:
                    idle[s, (i - 1) * N1 + j - 1] += (1.0 - delta) * relay_ok
            if i > 0:
                idle[s, (i - 1) * N1 + j] += (1.0 - delta) * (1.0 - relay_ok)


@njit(cache=True, inline="always")
def _gth(P, x):
    """Stationary vector by state reduction; False if a reduction step has no mass."""
    S = P.shape[0]
    for n in range(S - 1, 0, -1):
        total = 0.0
        for j in range(n):
            total += P[n, j]
        if total <= 0.0:
            return False
        for i in range(n):
            P[i, n] /= total
        for i in range(n):
            f = P[i, n]
            if f != 0.0:
                for j in range(n):
                    P[i, j] += f * P[n, j]
    x[0] = 1.0
    norm = 1.0
    for n in range(1, S):
        acc = 0.0
        for i in range(n):
            acc += x[i] * P[i, n]
        x[n] = acc
        norm += acc
    for n in range(S):
        x[n] /= norm
    return True


@njit(cache=True)
def _eliminate(P, A, x):
    """Balance equations (last one -> normalization) by pivoted elimination.

    ``P`` holds the off-diagonal transitions.  Returns False if singular
    (several closed classes).
    """
    S = P.shape[0]
    for r in range(S):
        for c in range(S):
            A[r, c] = P[c, r]
    for s in range(S):
        out = 0.0
        for c in range(S):
            if c != s:
                out += P[s, c]
        A[s, s] = -out
    for c in range(S):
        A[S - 1, c] = 1.0
    for r in range(S):
        x[r] = 0.0
    x[S - 1] = 1.0
    for col in range(S):
        piv = col
        best = abs(A[col, col])
        for r in range(col + 1, S):
            v = abs(A[r, col])
            if v > best:
                best = v
                piv = r
        if best < SINGULAR_PIVOT:
            return False
        if piv != col:
            for c in range(col, S):
                tmp = A[col, c]
                A[col, c] = A[piv, c]
                A[piv, c] = tmp
            tmp = x[col]
            x[col] = x[piv]
            x[piv] = tmp
        inv = 1.0 / A[col, col]
        for r in range(col + 1, S):
            f = A[r, col] * inv
            if f != 0.0:
                for c in range(col + 1, S):
                    A[r, c] -= f * A[col, c]
                x[r] -= f * x[col]
    for r in range(S - 1, -1, -1):
        acc = x[r]
        for c in range(r + 1, S):
            acc -= A[r, c] * x[c]
        x[r] = acc / A[r, r]
    total = 0.0
    for r in range(S):
        if x[r] < 0.0:
            x[r] = 0.0
        total += x[r]
    for r in range(S):
        x[r] /= total
    return True


@njit(cache=True, inline="always")
def _blend(P, busy, idle, rho):
    S = P.shape[0]
    for r in range(S):
        for c in range(S):
            P[r, c] = rho * busy[r, c] + (1.0 - rho) * idle[r, c]


@njit(cache=True, inline="always")
def _evaluate(ws, rho, f_pd, out):
    """``(mu_p_bar, energy-weighted selection mass)`` at ``rho`` into ``out``."""
    P, busy, idle, A, x, w_admit, w_energy = ws
    _blend(P, busy, idle, rho)
    if not _gth(P, x):
        _blend(P, busy, idle, rho)
        if not _eliminate(P, A, x):
            return False
    admitted = 0.0
    energy = 0.0
    for s in range(P.shape[0]):
        admitted += w_admit[s] * x[s]
        energy += w_energy[s] * x[s]
    out[0] = f_pd + admitted
    out[1] = energy
    return True


@njit(cache=True, inline="always")
def _probe(k, ws, memo, stamp, lam, grid, f_pd):
    """Gap ``mu_p_bar - mu_p`` at grid point ``k``, evaluated once per combination."""
    seen, gaps, mubars, energies, out, solves = memo
    if seen[k] != stamp:
        solves[0] += 1
        if _evaluate(ws, lam / grid[k], f_pd, out):
            mubars[k] = out[0]
            energies[k] = out[1]
            gaps[k] = out[0] - grid[k]
        else:
            mubars[k] = np.nan
            energies[k] = np.nan
            gaps[k] = np.nan
        seen[k] = stamp
    return gaps[k]


@njit(cache=True)
def _pick(low, K, gaps):
    """Grid point of the downward crossing whose last non-negative gap is at ``low``."""
    if low < 0:
        return -1
    if low == K - 1 or abs(gaps[low]) <= abs(gaps[low + 1]):
        return low
    return low + 1


@njit(cache=True)
def _bisect(low, high, ws, memo, stamp, lam, grid, f_pd):
    """Last non-negative index given ``gap[low] >= 0`` and ``gap[high] < 0`` (or ``high == K``)."""
    while high - low > 1:
        mid = (low + high) // 2
        if _probe(mid, ws, memo, stamp, lam, grid, f_pd) >= 0.0:
            low = mid
        else:
            high = mid
    return low


@njit(cache=True)
def _gallop_up(low, ws, memo, stamp, lam, grid, f_pd):
    """From a non-negative ``low``, step right with doubling strides to the first negative."""
    K = grid.shape[0]
    step = 1
    while low + step < K:
        kk = low + step
        if _probe(kk, ws, memo, stamp, lam, grid, f_pd) >= 0.0:
            low = kk
            step *= 2
        else:
            return _bisect(low, kk, ws, memo, stamp, lam, grid, f_pd)
    return _bisect(low, K, ws, memo, stamp, lam, grid, f_pd)


@njit(cache=True)
def _peak(L, c, R, ws, memo, stamp, lam, grid, f_pd):
    """Integer peak search on ``L < c < R`` with ``gap[c] >= gap[L], gap[R]``.

    Returns ``(k, right)`` with ``gap[k] >= 0`` and a known negative index
    ``right > k``, or ``(-1, -1)`` if the local peak is negative.
    """
    gaps = memo[1]
    while R - L > 2:
        if c - L > R - c:
            m = (L + c) // 2
        else:
            m = (c + R) // 2
        gm = _probe(m, ws, memo, stamp, lam, grid, f_pd)
        if gm >= 0.0:
            return m, R
        if gm > gaps[c]:
            if m < c:
                R = c
            else:
                L = c
            c = m
        elif m < c:
            L = m
        else:
            R = m
    return -1, -1


@njit(cache=True)
def _seek(p, c, ws, memo, stamp, lam, grid, f_pd):
    """Walk from ``p`` through ``c`` (both negative, gap rising) toward a non-negative point.

    Steps follow the secant prediction of the zero, capped at twice the
    previous step, so a hump is approached rather than jumped.  When the gap
    stops rising the local peak is searched.  Returns ``(k, right)`` as in
    :func:`_peak`, with ``right = K`` when no negative index to the right of
    ``k`` is known.
    """
    K = grid.shape[0]
    gaps = memo[1]
    direction = 1 if c > p else -1
    last = 1
    while True:
        gp, gc = gaps[p], gaps[c]
        rise = (gc - gp) / abs(c - p)
        want = 2 * last if rise <= 0.0 else int(np.ceil(-gc / rise))
        step = max(1, min(2 * last, want))
        n = c + direction * step
        if n < 0:
            n = 0
        elif n > K - 1:
            n = K - 1
        if n == c:
            return -1, -1
        gn = _probe(n, ws, memo, stamp, lam, grid, f_pd)
        if gn >= 0.0:
            return n, (c if direction < 0 else K)
        if gn > gc:
            last = abs(n - c)
            p, c = c, n
            continue
        if direction > 0:
            return _peak(p, c, n, ws, memo, stamp, lam, grid, f_pd)
        return _peak(n, c, p, ws, memo, stamp, lam, grid, f_pd)


@njit(cache=True)
def _last_nonnegative(k0, ws, memo, stamp, lam, grid, f_pd):
    """Last grid index with a non-negative gap; -1 if none, -2 if the chain is degenerate.

    Assumes the non-negative gaps form one block.  The probe pair at the
    warm start ``k0`` tells which way the gap rises; in the usual case the
    pair already straddles the crossing or one secant step reaches it.
    """
    K = grid.shape[0]
    if K == 1:
        g = _probe(0, ws, memo, stamp, lam, grid, f_pd)
        if np.isnan(g):
            return -2
        return 0 if g >= 0.0 else -1
    k0 = min(max(k0, 0), K - 2)
    g0 = _probe(k0, ws, memo, stamp, lam, grid, f_pd)
    if np.isnan(g0):
        return -2
    g1 = _probe(k0 + 1, ws, memo, stamp, lam, grid, f_pd)
    if g0 >= 0.0 and g1 < 0.0:
        return k0

    if g1 >= 0.0:
        low = k0 + 1
        if g0 >= 0.0 and g1 < g0:
            t = min(max(k0 + int(np.floor(g0 / (g0 - g1))), low), K - 2)
            if t > low:
                if _probe(t, ws, memo, stamp, lam, grid, f_pd) >= 0.0:
                    if _probe(t + 1, ws, memo, stamp, lam, grid, f_pd) < 0.0:
                        return t
                    low = t
                else:
                    return _bisect(low, t, ws, memo, stamp, lam, grid, f_pd)
        return _gallop_up(low, ws, memo, stamp, lam, grid, f_pd)

    if g1 > g0:
        seed, right = _seek(k0, k0 + 1, ws, memo, stamp, lam, grid, f_pd)
    else:
        seed, right = _seek(k0 + 1, k0, ws, memo, stamp, lam, grid, f_pd)
    if seed < 0:
        # The walk settled on a negative interior peak; a block may still
        # touch either end of the grid.
        if _probe(K - 1, ws, memo, stamp, lam, grid, f_pd) >= 0.0:
            return K - 1
        if not _probe(0, ws, memo, stamp, lam, grid, f_pd) >= 0.0:
            return -1
        seen, gaps = memo[0], memo[1]
        right = K - 1
        for k in range(1, K - 1):
            if seen[k] == stamp and not gaps[k] >= 0.0:
                right = k
                break
        return _bisect(0, right, ws, memo, stamp, lam, grid, f_pd)
    if right >= K:
        return _gallop_up(seed, ws, memo, stamp, lam, grid, f_pd)
    return _bisect(seed, right, ws, memo, stamp, lam, grid, f_pd)


@njit(cache=True)
def search_policies(f_pd, f_ps, f_sd, delta, a_var, b_var, values, lam, grid, lo, hi,
                    argmin=False, full_scan=False):
    """Best ``(mu_s, mu_p, index, solves)`` over combinations ``lo <= index < hi``.

    See :func:`_search_core` for the operating-point rules.
    """
    return _search_core(f_pd, f_ps, f_sd, delta, a_var, b_var, values, lam, grid, lo, hi,
                        argmin, full_scan, np.empty((0, 2)))


@njit(cache=True)
def operating_points(f_pd, f_ps, f_sd, delta, a_var, b_var, values, lam, grid, lo, hi,
                     argmin=False, full_scan=False):
    """Per-combination ``(mu_p, mu_s)`` rows for ``lo <= index < hi`` (NaN when unstable)."""
    trace = np.full((hi - lo, 2), np.nan)
    _search_core(f_pd, f_ps, f_sd, delta, a_var, b_var, values, lam, grid, lo, hi,
                 argmin, full_scan, trace)
    return trace


@njit(cache=True)
def _search_core(f_pd, f_ps, f_sd, delta, a_var, b_var, values, lam, grid, lo, hi,
                 argmin, full_scan, trace):
    """Best ``(mu_s, mu_p, index, solves)`` over combinations ``lo <= index < hi``.

    ``index`` is -1 when no combination in range keeps ``Q_p`` stable;
    ``solves`` counts stationary-vector solves (a cost diagnostic).

    By default a combination's operating point is its stable crossing: the
    last grid step where ``mu_p_bar - mu_p`` turns from non-negative to
    negative, taking whichever side has the smaller gap.  The fast path
    brackets it starting from the previous combination's answer;
    ``full_scan`` checks every grid point instead.  ``argmin`` selects the
    grid point with the smallest gap anywhere (always a full scan).
    """
    M1, N1 = a_var.shape
    S = M1 * N1
    gain = (1.0 - f_pd) * f_ps
    d_num = values.shape[0]
    n_vars = 0
    for i in range(M1):
        for j in range(N1):
            n_vars = max(n_vars, a_var[i, j] + 1, b_var[i, j] + 1)
    K = grid.shape[0]

    a = np.zeros((M1, N1))
    b = np.ones((M1, N1))
    w_admit = np.empty(S)
    w_energy = np.empty(S)
    busy = np.empty((S, S))
    idle = np.empty((S, S))
    ws = (np.empty((S, S)), busy, idle, np.empty((S, S)), np.empty(S), w_admit, w_energy)
    out = np.empty(2)
    solves = np.zeros(1, dtype=np.int64)
    memo = (np.zeros(K, dtype=np.int64), np.empty(K), np.empty(K), np.empty(K), out, solves)
    gaps, mubars, energies = memo[1], memo[2], memo[3]
    stamp = 0

    digits = np.zeros(max(n_vars, 1), dtype=np.int64)
    rem = lo
    for k in range(n_vars - 1, -1, -1):
        digits[k] = rem % d_num
        rem //= d_num

    best_mu_s = -1.0
    best_mu_p = 0.0
    best_index = -1
    k_prev = K // 2

    prune = lam > 0.0 and not argmin and not full_scan
    for index in range(lo, hi):
        a_max = 0.0
        for i in range(M1):
            for j in range(N1):
                if a_var[i, j] >= 0:
                    a[i, j] = values[digits[a_var[i, j]]]
                if b_var[i, j] >= 0:
                    b[i, j] = values[digits[b_var[i, j]]]
                s = i * N1 + j
                w_admit[s] = gain * a[i, j]
                w_energy[s] = (delta if i == 0 else 1.0) * b[i, j]
                a_max = max(a_max, a[i, j])

        chosen = -1
        chosen_mubar = 0.0
        chosen_energy = 0.0
        if prune and f_pd + gain * a_max < grid[0]:
            # mu_p_bar <= f_pd + gain * max(a) lies below the whole grid.
            pass
        elif lam == 0.0:
            # rho = 0 at every grid point: one solve, nearest grid point wins.
            _fill_parts(busy, idle, a, b, delta, f_sd, gain)
            solves[0] += 1
            if _evaluate(ws, 0.0, f_pd, out):
                gap_best = np.inf
                for k in range(K):
                    gap = abs(out[0] - grid[k])
                    if gap < gap_best:
                        gap_best = gap
                        chosen = k
                chosen_mubar = out[0]
                chosen_energy = out[1]
        else:
            _fill_parts(busy, idle, a, b, delta, f_sd, gain)
            stamp += 1
            if argmin:
                for k in range(K):
                    g = _probe(k, ws, memo, stamp, lam, grid, f_pd)
                    if not np.isnan(g) and (chosen < 0 or abs(g) < abs(gaps[chosen])):
                        chosen = k
            elif full_scan:
                low = -1
                for k in range(K):
                    g = _probe(k, ws, memo, stamp, lam, grid, f_pd)
                    if np.isnan(g):
                        break
                    if g >= 0.0 and (k == K - 1 or _probe(k + 1, ws, memo, stamp, lam, grid, f_pd) < 0.0):
                        low = k
                chosen = _pick(low, K, gaps)
            else:
                low = _last_nonnegative(min(k_prev, K - 1), ws, memo, stamp, lam, grid, f_pd)
                chosen = _pick(low, K, gaps)
                if chosen >= 0:
                    k_prev = chosen
            if chosen >= 0:
                chosen_mubar = mubars[chosen]
                chosen_energy = energies[chosen]

        if chosen >= 0 and chosen_mubar > lam:
            mu_p = grid[chosen]
            mu_s = (1.0 - lam / mu_p) * f_sd * chosen_energy
            if trace.shape[0] > 0:
                trace[index - lo, 0] = mu_p
                trace[index - lo, 1] = mu_s
            if mu_s > best_mu_s or (mu_s == best_mu_s and mu_p < best_mu_p):
                best_mu_s = mu_s
                best_mu_p = mu_p
                best_index = index

        k = n_vars - 1
        while k >= 0:
            digits[k] += 1
            if digits[k] < d_num:
                break
            digits[k] = 0
            k -= 1

    if best_index < 0:
        return 0.0, 0.0, -1, solves[0]
    return best_mu_s, best_mu_p, best_index, solves[0]
