"""Exact error probabilities of fusion rules on tiny networks, by full enumeration.

Every (true sequence, report matrix) pair is visited. Report likelihoods are
computed in the linear domain straight from the channel model, independently
of the log-domain scorers in ``fusion``; only the argmax/tie logic is shared
in spirit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fusion import TIE_TOL, safe_log
from .model import (
    ChannelParams,
    DomainError,
    Explicit,
    FixedCount,
    FixedKRule,
    General,
    Independent,
    IndependentRule,
    InfeasibleInstance,
    MajorityRule,
    bind_rule,
)

MAX_NT = 16
MAX_T = 8
_CELLS = 1 << 22


@dataclass(frozen=True)
class ExactResult:
    per_state_error: float
    sequence_error: float
    enumerated_outcomes: int


def _node_factors(T: int, p: float) -> np.ndarray:
    return np.array([(1.0 - p) ** m * p ** (T - m) for m in range(T + 1)])


def report_likelihood(matches: np.ndarray, T: int, ch: ChannelParams, prior) -> np.ndarray:
    """P(r | s) from a (..., n, S) array of per-node match counts; returns (..., S)."""
    h = _node_factors(T, ch.epsilon)[matches]
    b = _node_factors(T, ch.delta)[matches]
    n = matches.shape[-2]
    if isinstance(prior, Independent):
        return ((1.0 - prior.alpha) * h + prior.alpha * b).prod(axis=-2)
    if isinstance(prior, FixedCount):
        prior.check(n)
        # coefficient of x^k in prod_i (h_i + b_i x)
        coef = [np.ones(h.shape[:-2] + h.shape[-1:])] + [np.zeros(h.shape[:-2] + h.shape[-1:])] * prior.k
        for i in range(n):
            hi, bi = h[..., i, :], b[..., i, :]
            coef = [coef[0] * hi] + [coef[j] * hi + coef[j - 1] * bi for j in range(1, prior.k + 1)]
        return coef[prior.k] / math.comb(n, prior.k)
    if isinstance(prior, Explicit):
        prior.to_explicit(n)
        total = np.zeros(h.shape[:-2] + h.shape[-1:])
        for a, p in prior.entries:
            mask = a.bits.astype(bool)[:, None]
            total = total + p * np.where(mask, b, h).prod(axis=-2)
        return total
    raise DomainError(f"unsupported prior {prior!r}")


def _rule_prior(rule, n: int):
    if isinstance(rule, IndependentRule):
        return Independent(rule.alpha)
    if isinstance(rule, FixedKRule):
        return FixedCount(rule.k)
    if isinstance(rule, General):
        return rule.prior.to_explicit(n)
    raise DomainError(f"unsupported rule {rule!r}")


def _popcount(x: np.ndarray) -> np.ndarray:
    return np.bitwise_count(x.astype(np.uint64)).astype(np.int64)


def _check(n: int, T: int, tie_mode: str) -> None:
    if n < 1 or T < 1:
        raise DomainError("n and T must be positive")
    if n * T > MAX_NT or T > MAX_T:
        raise InfeasibleInstance(f"exact enumeration needs n*T <= {MAX_NT} and T <= {MAX_T}, got n={n}, T={T}")
    if tie_mode not in ("average", "lexicographic"):
        raise DomainError(f"unknown tie mode {tie_mode!r}")


def conditional_error(n: int, T: int, ch: ChannelParams, node_prior, rule,
                      tie_mode: str = "average") -> tuple[np.ndarray, np.ndarray]:
    """Per-state and sequence error conditioned on each true sequence (index = packed s)."""
    _check(n, T, tie_mode)
    rule = bind_rule(rule, n, node_prior)

    S = 1 << T
    seqs = np.arange(S, dtype=np.uint64)
    seq_bits = ((seqs[:, None] >> np.arange(T - 1, -1, -1, dtype=np.uint64)) & np.uint64(1)).astype(np.int64)
    hamming = _popcount(seqs[:, None] ^ seqs[None, :])  # [decided, true]
    row_mask = np.uint64((1 << T) - 1)
    node_shift = np.array([T * (n - 1 - i) for i in range(n)], dtype=np.uint64)

    n_reports = 1 << (n * T)
    step = max(1, min(n_reports, _CELLS // (n * S)))
    state_err, seq_err = [], []
    for start in range(0, n_reports, step):
        codes = np.arange(start, min(start + step, n_reports), dtype=np.uint64)
        rows = (codes[:, None] >> node_shift[None, :]) & row_mask  # (R, n)
        matches = T - _popcount(rows[:, :, None] ^ seqs[None, None, :])  # (R, n, S)
        lik = report_likelihood(matches, T, ch, node_prior)  # (R, S) indexed by true s

        if isinstance(rule, MajorityRule):
            slot_shift = np.arange(T - 1, -1, -1, dtype=np.uint64)
            ones = ((rows[:, :, None] >> slot_shift) & np.uint64(1)).astype(np.int64).sum(axis=1)  # (R, T)
            vote = np.where(2 * ones > n, 1.0, np.where(2 * ones < n, 0.0, 0.5))
            # per-slot error probability against each true sequence: (R, S, T)
            slot_err = np.abs(vote[:, None, :] - seq_bits[None, :, :])
            ps = slot_err.mean(axis=2)
            sq = 1.0 - np.prod(1.0 - slot_err, axis=2)
        else:
            with np.errstate(divide="ignore"):
                scores = safe_log(report_likelihood(matches, T, ch, _rule_prior(rule, n)))
            best = scores.max(axis=1, keepdims=True)
            tied = scores >= best - TIE_TOL  # (R, S) over decided sequences
            if tie_mode == "average":
                w = tied / tied.sum(axis=1, keepdims=True)
                ps = (w @ hamming) / T
                sq = 1.0 - w
            else:
                pick = tied.argmax(axis=1)
                ps = hamming[pick] / T
                sq = (pick[:, None] != seqs[None, :].astype(np.int64)).astype(float)
        state_err.append((lik * ps).sum(axis=0))
        seq_err.append((lik * sq).sum(axis=0))

    fold = lambda parts: np.array([math.fsum(col) for col in np.array(parts).T])
    return fold(state_err), fold(seq_err)


def exact_error(n: int, T: int, ch: ChannelParams, node_prior, rule, tie_mode: str = "average") -> ExactResult:
    """Exact per-state and sequence error of ``rule`` under the generating model.

    Ties between optimum-rule candidates are resolved by ``tie_mode``:
    ``"average"`` charges the mean error over all tied sequences,
    ``"lexicographic"`` charges the error of the sequence ``fusion.fuse``
    would return. Majority ties always cost half an error per tied slot
    (the expectation over the fair coin).
    """
    ps, sq = conditional_error(n, T, ch, node_prior, rule, tie_mode)
    return ExactResult(
        per_state_error=math.fsum(ps) / len(ps),
        sequence_error=math.fsum(sq) / len(sq),
        enumerated_outcomes=(1 << T) * (1 << (n * T)),
    )


def total_probability(n: int, T: int, ch: ChannelParams, node_prior) -> np.ndarray:
    """sum_r P(r | s) for every s; all ones for a well-formed model."""
    S = 1 << T
    seqs = np.arange(S, dtype=np.uint64)
    codes = np.arange(1 << (n * T), dtype=np.uint64)
    shift = np.array([T * (n - 1 - i) for i in range(n)], dtype=np.uint64)
    rows = (codes[:, None] >> shift[None, :]) & np.uint64((1 << T) - 1)
    matches = T - _popcount(rows[:, :, None] ^ seqs[None, None, :])
    return report_likelihood(matches, T, ch, node_prior).sum(axis=0)
