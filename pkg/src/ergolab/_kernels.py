"""Compiled inner loops: greedy separated sets and the cylinder-cover recursion."""
import numpy as np
from numba import njit


@njit(cache=True)
def _pair_dist(orb, a, b, periodic0, periodic1):
    # d_n distance: max over times and coordinates
    best = 0.0
    T, _, D = orb.shape
    for t in range(T):
        for c in range(D):
            d = abs(orb[t, a, c] - orb[t, b, c])
            per = periodic0 if c == 0 else periodic1
            if per:
                d = d - np.floor(d)
                d = min(d, 1.0 - d)
            if d > best:
                best = d
    return best


@njit(cache=True)
def greedy_separated(orb, eps, lo0, span0, lo1, span1, periodic0, periodic1):
    """Indices of a greedy eps-separated subset in index order.

    ``orb`` has shape (n + 1, M, D) with D in {1, 2}.  Selected points are
    hashed by their time-0 cell (width >= eps), so only the neighbouring
    cells need to be scanned.
    """
    T, M, D = orb.shape
    n0 = max(1, int(np.floor(span0 / eps)))
    n1 = 1
    if D == 2:
        n1 = max(1, int(np.floor(span1 / eps)))
    w0 = span0 / n0
    w1 = span1 / n1
    head = np.full(n0 * n1, -1, dtype=np.int64)
    link = np.full(M, -1, dtype=np.int64)
    chosen = np.empty(M, dtype=np.int64)
    count = 0
    for i in range(M):
        c0 = int(np.floor((orb[0, i, 0] - lo0) / w0))
        c0 = min(max(c0, 0), n0 - 1)
        c1 = 0
        if D == 2:
            c1 = int(np.floor((orb[0, i, 1] - lo1) / w1))
            c1 = min(max(c1, 0), n1 - 1)
        ok = True
        # scan neighbour cells; grids under 3 cells per axis are scanned whole
        m0 = 3 if n0 >= 3 else n0
        m1 = 3 if n1 >= 3 else n1
        for t0 in range(m0):
            if not ok:
                break
            q0 = c0 - 1 + t0 if n0 >= 3 else t0
            if q0 < 0 or q0 >= n0:
                if not periodic0:
                    continue
                q0 = q0 % n0
            for t1 in range(m1):
                q1 = c1 - 1 + t1 if n1 >= 3 else t1
                if q1 < 0 or q1 >= n1:
                    if not periodic1:
                        continue
                    q1 = q1 % n1
                j = head[q0 * n1 + q1]
                while j >= 0:
                    if _pair_dist(orb, i, j, periodic0, periodic1) < eps:
                        ok = False
                        break
                    j = link[j]
                if not ok:
                    break
        if ok:
            cell = c0 * n1 + c1
            link[i] = head[cell]
            head[cell] = i
            chosen[count] = i
            count += 1
    return chosen[:count]


@njit(cache=True)
def _lse_min(vals):
    m = vals.max()
    if m == -np.inf:
        return m
    s = 0.0
    for v in vals:
        s += np.exp(v - m)
    return m + np.log(s)


@njit(cache=True)
def cover_recursion(phi, tail, k, allowed, gamma, top, bottom, first_choice):
    """Fold the renormalized log-cost from level ``top`` up to ``bottom``.

    States are the last L-1 symbols of a word (base-k index, K = k^(L-1));
    ``phi[s * k + a]`` is the potential on the window (s, a) and ``tail[s]``
    the sup over free continuations of the window terms not yet counted.
    With hbar = tail at level ``top``, each level applies

        hbar(s) <- LSE_a(phi(s a) + hbar(s')) - gamma

    followed by min(tail(s), .) when the level is >= ``first_choice``.
    """
    K = tail.shape[0]
    h = tail.copy()
    nxt = np.empty(K)
    buf = np.empty(k)
    for level in range(top - 1, bottom - 1, -1):
        for s in range(K):
            cnt = 0
            for a in range(k):
                if allowed[a]:
                    buf[cnt] = phi[s * k + a] + h[(s * k + a) % K]
                    cnt += 1
            v = _lse_min(buf[:cnt]) - gamma
            if level >= first_choice and tail[s] < v:
                v = tail[s]
            nxt[s] = v
        h, nxt = nxt, h
    return h
