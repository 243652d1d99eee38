"""Compiled batch fusion used by the Monte Carlo simulator.

The decision is the same as ``fusion.fuse`` (exact argmax over all 2^T
sequences, ties within TIE_TOL, lexicographically smallest winner, full tie
count), but candidates are enumerated up to column symmetry. Report columns whose
patterns are equal or bitwise complementary form a class with a canonical
pattern p; a column "agrees" when s_j is 1 on a p-column or 0 on a
complemented column. Node i's match count within a class is g when p_i = 1
and M - g otherwise, where g is the number of agreeing columns among the
class's M columns, so a score depends only on the vector of per-class g.
One score is computed per g vector; tie counts are weighted by the
C(M, g) arrangements and the winner is the smallest arrangement among tied
g vectors.
"""

import math

import numpy as np
from numba import njit

from .fusion import TIE_TOL

INDEPENDENT, FIXED_K, GENERAL = 0, 1, 2

_BINOM = np.array([[math.comb(a, b) for b in range(65)] for a in range(65)], dtype=np.float64)
# scaled-linear DP results below this are recomputed in the log domain
_UNDERFLOW = 1e-280


@njit(cache=True)
def _log_dp(m, k, honest, byz):
    e = np.full(k + 1, -np.inf)
    e[0] = 0.0
    for i in range(m.size):
        h = honest[m[i]]
        b = byz[m[i]]
        for j in range(min(i + 1, k), 0, -1):
            x = e[j] + h
            y = e[j - 1] + b
            hi = max(x, y)
            if hi == -np.inf:
                e[j] = -np.inf
            else:
                e[j] = hi + np.log1p(np.exp(min(x, y) - hi))
        e[0] = e[0] + h
    return e[k]


@njit(cache=True)
def _score(kind, m, table, k, honest, byz, scale, hs, bs, states, logp, e, terms):
    n = m.size
    if kind == INDEPENDENT:
        acc = 0.0
        for i in range(n):
            acc += table[m[i]]
        return acc
    if kind == FIXED_K:
        logscale = 0.0
        for i in range(n):
            logscale += scale[m[i]]
        if logscale == -np.inf:
            return -np.inf
        e[0] = 1.0
        for j in range(1, k + 1):
            e[j] = 0.0
        for i in range(n):
            h = hs[m[i]]
            b = bs[m[i]]
            for j in range(min(i + 1, k), 0, -1):
                e[j] = e[j] * h + e[j - 1] * b
            e[0] *= h
        if e[k] > _UNDERFLOW:
            return logscale + np.log(e[k])
        return _log_dp(m, k, honest, byz)
    # GENERAL
    hi = -np.inf
    for a in range(states.shape[0]):
        acc = logp[a]
        for i in range(n):
            acc += byz[m[i]] if states[a, i] else honest[m[i]]
        terms[a] = acc
        if acc > hi:
            hi = acc
    if hi == -np.inf:
        return -np.inf
    s = 0.0
    for a in range(states.shape[0]):
        s += np.exp(terms[a] - hi)
    return hi + np.log(s)


@njit(cache=True)
def _fuse_batch(bits, kind, table, k, honest, byz, states, logp, tol, binom):
    trials, n, T = bits.shape
    scale = np.empty(T + 1)
    hs = np.empty(T + 1)
    bs = np.empty(T + 1)
    for q in range(T + 1):
        c = max(honest[q], byz[q])
        scale[q] = c
        if c == -np.inf:
            hs[q] = 0.0
            bs[q] = 0.0
        else:
            hs[q] = np.exp(honest[q] - c)
            bs[q] = np.exp(byz[q] - c)

    out = np.empty(trials, dtype=np.uint64)
    ties_out = np.empty(trials, dtype=np.int64)
    scores = np.empty(min(1 << T, 1 << 16))
    e = np.empty(k + 1)
    terms = np.empty(states.shape[0])
    m = np.empty(n, dtype=np.int64)
    cls = np.empty(T, dtype=np.int64)
    rep = np.empty(T, dtype=np.int64)
    mult = np.empty(T, dtype=np.int64)
    x = np.empty(T, dtype=np.int64)
    orient = np.empty(T, dtype=np.int64)

    for t in range(trials):
        # group columns that are equal or complementary
        ncls = 0
        for j in range(T):
            found = -1
            for c in range(ncls):
                rj = rep[c]
                same = True
                for i in range(n):
                    if bits[t, i, j] != bits[t, i, rj]:
                        same = False
                        break
                if same:
                    found = c
                    orient[j] = 1
                    break
                comp = True
                for i in range(n):
                    if bits[t, i, j] == bits[t, i, rj]:
                        comp = False
                        break
                if comp:
                    found = c
                    orient[j] = 0
                    break
            if found < 0:
                rep[ncls] = j
                mult[ncls] = 0
                found = ncls
                ncls += 1
                orient[j] = 1
            cls[j] = found
            mult[found] += 1

        nconf = 1
        for c in range(ncls):
            nconf *= mult[c] + 1

        # start from g = 0 in every class
        for i in range(n):
            z = 0
            for c in range(ncls):
                if bits[t, i, rep[c]] == 0:
                    z += mult[c]
            m[i] = z
        for c in range(ncls):
            x[c] = 0

        if nconf > scores.size:
            scores = np.empty(nconf)
        for idx in range(nconf):
            scores[idx] = _score(kind, m, table, k, honest, byz, scale, hs, bs, states, logp, e, terms)
            if idx == nconf - 1:
                break
            d = 0
            while x[d] == mult[d]:
                rj = rep[d]
                for i in range(n):
                    if bits[t, i, rj]:
                        m[i] -= mult[d]
                    else:
                        m[i] += mult[d]
                x[d] = 0
                d += 1
            x[d] += 1
            rj = rep[d]
            for i in range(n):
                if bits[t, i, rj]:
                    m[i] += 1
                else:
                    m[i] -= 1

        best = -np.inf
        for idx in range(nconf):
            if scores[idx] > best:
                best = scores[idx]

        winner = np.uint64(0)
        have = False
        ties = 0.0
        for idx in range(nconf):
            if scores[idx] < best - tol:
                continue
            rem = idx
            for c in range(ncls):
                x[c] = rem % (mult[c] + 1)
                rem //= mult[c] + 1
            w = 1.0
            for c in range(ncls):
                w *= binom[mult[c], x[c]]
            ties += w
            # smallest arrangement: per class, greedily put 0 first while g stays reachable
            seq = np.uint64(0)
            for c in range(ncls):
                need = x[c]
                left = mult[c]
                for j in range(T):
                    if cls[j] != c:
                        continue
                    if orient[j] == 1:
                        if need > left - 1:
                            seq |= np.uint64(1) << np.uint64(T - 1 - j)
                            need -= 1
                    elif need >= 1:
                        need -= 1
                    else:
                        seq |= np.uint64(1) << np.uint64(T - 1 - j)
                    left -= 1
            if not have or seq < winner:
                winner = seq
                have = True
        out[t] = winner
        ties_out[t] = np.int64(ties)
    return out, ties_out


_EMPTY_STATES = np.zeros((1, 1), dtype=np.uint8)
_EMPTY = np.zeros(1)


def fuse_batch(bits, kind, *, honest, byz, table=None, k=0, states=None, logp=None):
    """Fuse a (trials, n, T) uint8 report array; returns (packed winners, tie counts).

    ``honest`` and ``byz`` are the per-match-count node log likelihoods (length T + 1).
    """
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    if len(honest) != bits.shape[2] + 1 or len(byz) != bits.shape[2] + 1:
        raise ValueError("likelihood tables must have length T + 1")
    f = lambda a: _EMPTY if a is None else np.asarray(a, dtype=np.float64)
    return _fuse_batch(bits, int(kind), f(table), int(k), f(honest), f(byz),
                       _EMPTY_STATES if states is None else np.ascontiguousarray(states, dtype=np.uint8),
                       f(logp), TIE_TOL, _BINOM)
