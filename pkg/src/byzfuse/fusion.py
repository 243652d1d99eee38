"""Optimum fusion rules over a window of reports, plus the majority baseline.

All scores are natural-log likelihoods of the reports given a candidate state
sequence, with factors that do not depend on the sequence dropped (the
uniform state prior and, for the fixed-count rule, the 1/C(n, k) prior).
Scores are therefore comparable only within one rule.
"""

from __future__ import annotations

import numpy as np

from .model import (
    ChannelParams,
    DomainError,
    Explicit,
    FixedKRule,
    FusionDecision,
    General,
    IndependentRule,
    InfeasibleInstance,
    ReportMatrix,
    StateSequence,
    as_sequence,
)

MAX_T = 30
TIE_TOL = 1e-9

_CHUNK_BITS = 16
_CACHE_BITS = 22


def safe_log(x):
    """log with log(0) = -inf and no warnings."""
    with np.errstate(divide="ignore"):
        return np.log(x)


def xlogy(count, p):
    """count * log(p), taking 0 * log(0) as 0."""
    count = np.asarray(count, dtype=float)
    return np.where(count == 0, 0.0, count * safe_log(np.where(count == 0, 1.0, p)))


def count_matches(row, s) -> int:
    """Number of positions where ``row`` and ``s`` agree."""
    row = np.asarray(row)
    s = as_sequence(s).bits if not isinstance(s, np.ndarray) else s
    if row.shape != np.shape(s):
        raise DomainError(f"length mismatch: row has {row.size} bits, sequence has {np.size(s)}")
    return int(row.size - np.count_nonzero(row != s))


def node_log_likelihood(n_eq, T: int, p: float):
    """log[(1 - p)^n_eq * p^(T - n_eq)] for a node reporting through a BSC(p)."""
    n_eq = np.asarray(n_eq)
    if np.any(n_eq < 0) or np.any(n_eq > T):
        raise DomainError(f"n_eq must lie in [0, {T}]")
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p must lie in [0, 1], got {p}")
    out = xlogy(n_eq, 1.0 - p) + xlogy(T - n_eq, p)
    return float(out) if out.ndim == 0 else out


def _tables(T: int, ch: ChannelParams) -> tuple[np.ndarray, np.ndarray]:
    m = np.arange(T + 1)
    return node_log_likelihood(m, T, ch.epsilon), node_log_likelihood(m, T, ch.delta)


def independent_table(T: int, alpha: float, ch: ChannelParams) -> np.ndarray:
    """Per-node log factor, indexed by match count, for the independent-states rule."""
    honest, byz = _tables(T, ch)
    return np.logaddexp(safe_log(1.0 - alpha) + honest, safe_log(alpha) + byz)


def _check_dims(r: ReportMatrix, s: StateSequence) -> None:
    if r.T != s.T:
        raise DomainError(f"report window T={r.T} does not match sequence length {s.T}")


# --- vectorized scorers over many candidate sequences --------------------------
# Each takes a (n, m) array of match counts (node x candidate) and returns (m,) scores.


def _matches(r: ReportMatrix, candidates: np.ndarray) -> np.ndarray:
    diff = r.rows[:, None] ^ candidates[None, :].astype(np.uint64)
    return r.T - np.bitwise_count(diff).astype(np.int64)


# Exchangeable rules sort match counts over nodes first, so the floating-point
# result depends only on the multiset of counts and row order cannot change it.


def _score_independent_counts(n_eq, T, alpha, ch):
    return independent_table(T, alpha, ch)[np.sort(n_eq, axis=0)].sum(axis=0)


def _score_fixed_k_counts(n_eq, T, k, ch):
    honest, byz = _tables(T, ch)
    n_eq = np.sort(n_eq, axis=0)
    n = n_eq.shape[0]
    e = np.full((k + 1,) + n_eq.shape[1:], -np.inf)
    e[0] = 0.0
    # two-branch recurrence: e_j <- e_j * h_i + e_{j-1} * b_i, no division by h_i
    for i in range(n):
        h = honest[n_eq[i]]
        b = byz[n_eq[i]]
        for j in range(min(i + 1, k), 0, -1):
            e[j] = np.logaddexp(e[j] + h, e[j - 1] + b)
        e[0] = e[0] + h
    return e[k]


def _score_general_counts(n_eq, T, prior: Explicit, ch):
    honest, byz = _tables(T, ch)
    lh = honest[n_eq]
    lb = byz[n_eq]
    total = np.full(n_eq.shape[1:], -np.inf)
    for a, p in prior.entries:
        if p == 0.0:
            continue
        mask = a.bits.astype(bool)[:, None]
        term = np.where(mask, lb, lh).sum(axis=0) + np.log(p)
        total = np.logaddexp(total, term)
    return total


def _rule_scorer(rule, r: ReportMatrix, ch: ChannelParams):
    if isinstance(rule, General):
        prior = rule.prior.to_explicit(r.n)
        return lambda n_eq: _score_general_counts(n_eq, r.T, prior, ch)
    if isinstance(rule, IndependentRule):
        if rule.alpha is None:
            raise DomainError("independent rule needs an explicit alpha")
        table = independent_table(r.T, rule.alpha, ch)
        return lambda n_eq: table[np.sort(n_eq, axis=0)].sum(axis=0)
    if isinstance(rule, FixedKRule):
        if rule.k is None:
            raise DomainError("fixed-k rule needs an explicit k")
        if rule.k > r.n:
            raise DomainError(f"k={rule.k} exceeds node count n={r.n}")
        return lambda n_eq: _score_fixed_k_counts(n_eq, r.T, rule.k, ch)
    raise DomainError(f"not an optimum fusion rule: {rule!r}")


# --- single-sequence scores ----------------------------------------------------


def _single(r, s):
    s = as_sequence(s)
    _check_dims(r, s)
    return _matches(r, np.array([s.packed], dtype=np.uint64))


def score_general(r: ReportMatrix, s, prior: Explicit, ch: ChannelParams) -> float:
    """log sum_a P(r | a, s) P(a) under an explicit prior table."""
    if not isinstance(prior, Explicit):
        raise DomainError("score_general expects an Explicit prior")
    prior.to_explicit(r.n)
    return float(_score_general_counts(_single(r, s), r.T, prior, ch)[0])


def score_independent(r: ReportMatrix, s, alpha: float, ch: ChannelParams) -> float:
    rule = IndependentRule(alpha)
    return float(_score_independent_counts(_single(r, s), r.T, rule.alpha, ch)[0])


def score_fixed_k(r: ReportMatrix, s, k: int, ch: ChannelParams) -> float:
    """log of the sum over all k-subsets of Byzantine nodes, in O(n k).

    The 1/C(n, k) prior weight is omitted.
    """
    if int(k) != k or not 0 <= k <= r.n:
        raise DomainError(f"k must be an integer in [0, {r.n}], got {k!r}")
    return float(_score_fixed_k_counts(_single(r, s), r.T, int(k), ch)[0])


# --- argmax over all sequences ---------------------------------------------------


def _candidate_chunks(T: int):
    total = 1 << T
    step = min(total, 1 << _CHUNK_BITS)
    for start in range(0, total, step):
        yield np.arange(start, start + step, dtype=np.uint64)


def fuse(r: ReportMatrix, rule, ch: ChannelParams) -> FusionDecision:
    """Exact MAP sequence under ``rule``, by scoring all 2^T candidates.

    Scores within TIE_TOL of the maximum count as ties; the winner is the
    lexicographically smallest tied sequence.
    """
    if r.T > MAX_T:
        raise InfeasibleInstance(f"T={r.T} exceeds the enumeration bound {MAX_T}")
    scorer = _rule_scorer(rule, r, ch)

    cache = [] if r.T <= _CACHE_BITS else None
    best = -np.inf
    for cand in _candidate_chunks(r.T):
        scores = scorer(_matches(r, cand))
        if cache is not None:
            cache.append(scores)
        best = max(best, float(scores.max()))

    chunks = cache if cache is not None else (scorer(_matches(r, c)) for c in _candidate_chunks(r.T))
    winner, ties, offset = None, 0, 0
    for scores in chunks:
        tied = np.flatnonzero(scores >= best - TIE_TOL)
        if tied.size and winner is None:
            winner = offset + int(tied[0])
        ties += tied.size
        offset += scores.size
    return FusionDecision(StateSequence.from_packed(winner, r.T), best, ties)


def majority_from_coins(bits: np.ndarray, coins: np.ndarray) -> np.ndarray:
    """Column majority of a (..., n, T) bit array; tied columns take ``coins < 0.5``."""
    n = bits.shape[-2]
    ones = bits.sum(axis=-2, dtype=np.int64)
    out = (2 * ones > n).astype(np.uint8)
    tied = 2 * ones == n
    out[tied] = (np.asarray(coins)[tied] < 0.5).astype(np.uint8)
    return out


def majority_fuse(r: ReportMatrix, rng: np.random.Generator) -> StateSequence:
    """Per-slot majority vote; exact ties are settled by a fair coin from ``rng``.

    One coin is drawn per slot whether or not it is needed, so the number of
    draws depends only on T.
    """
    coins = rng.random(r.T)
    return StateSequence(majority_from_coins(r.bits, coins))
