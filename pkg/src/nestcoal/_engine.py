"""Numba-compiled hot loops: Kingman descent sampling and the Gillespie engine.

Everything here takes an explicit ``np.random.Generator``; callers own the
stream.  The Gillespie engine keeps per-species pair-merge rates C(n,2) as
exact int64 in a Fenwick tree, so the total rate never accumulates float
drift and rate-proportional selection is O(log S).
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def descend_count(n, t, rng):
    """Block count of a Kingman n-coalescent at time t.

    Accumulates independent Exp(C(l,2)) holding times downward from n;
    level 1 is absorbing.
    """
    l = n
    acc = 0.0
    while l >= 2:
        acc += rng.exponential(2.0 / (l * (l - 1.0)))
        if acc > t:
            break
        l -= 1
    return l


@njit(cache=True, nogil=True)
def kingman_exp_batch(j, c, size, rng):
    """size samples of K_j(Y) with Y ~ Exp(c), as int64."""
    out = np.empty(size, dtype=np.int64)
    for k in range(size):
        y = rng.exponential(1.0 / c)
        out[k] = descend_count(j, y, rng)
    return out


@njit(cache=True, nogil=True)
def _fenwick_set(tree, rates, size, pos, newrate):
    # point assignment at 0-based pos; returns the delta applied
    delta = newrate - rates[pos]
    rates[pos] = newrate
    i = pos + 1
    while i <= size:
        tree[i] += delta
        i += i & (-i)
    return delta


@njit(cache=True, nogil=True)
def _fenwick_find(tree, size, log2size, target):
    # smallest 0-based pos with prefix sum > target
    pos = 0
    rem = target
    bit = 1 << log2size
    while bit > 0:
        nxt = pos + bit
        if nxt <= size and tree[nxt] <= rem:
            pos = nxt
            rem -= tree[nxt]
        bit >>= 1
    return pos


@njit(cache=True, nogil=True)
def run_until_species(counts0, c, m, rng):
    """Gillespie to the merger that would drop the species count from m to m-1.

    Returns (counts of the m survivors just before that merger, event time).
    The dying/absorbing species are not applied; the returned array is the
    pre-merger state.  Positions in the returned array are an arbitrary but
    deterministic arrangement of the surviving species.
    """
    S = counts0.size
    counts = counts0.copy()
    size = S
    log2size = 0
    while (1 << (log2size + 1)) <= size:
        log2size += 1
    tree = np.zeros(size + 1, dtype=np.int64)
    rates = np.zeros(size, dtype=np.int64)
    r_lin = np.int64(0)
    for k in range(S):
        r_lin += _fenwick_set(tree, rates, size, k, counts[k] * (counts[k] - 1) // 2)
    t = 0.0
    while True:
        lam = r_lin + S * c
        t += rng.exponential(1.0 / lam)
        if r_lin == 0 or rng.random() * lam < S * c:
            if S == m:
                return counts[:S].copy(), t
            dying = rng.integers(0, S)
            absorb = rng.integers(0, S - 1)
            if absorb >= dying:
                absorb += 1
            merged = counts[dying] + counts[absorb]
            counts[absorb] = merged
            r_lin += _fenwick_set(tree, rates, size, absorb,
                                  merged * (merged - 1) // 2)
            last = S - 1
            if dying != last:
                counts[dying] = counts[last]
                r_lin += _fenwick_set(tree, rates, size, dying, rates[last])
            counts[last] = 0
            r_lin += _fenwick_set(tree, rates, size, last, 0)
            S -= 1
        else:
            target = rng.integers(0, r_lin)
            k = _fenwick_find(tree, size, log2size, target)
            n = counts[k]
            counts[k] = n - 1
            r_lin += _fenwick_set(tree, rates, size, k, (n - 1) * (n - 2) // 2)
