import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from byzfuse import (
    ChannelParams,
    DomainError,
    Explicit,
    FixedCount,
    FixedKRule,
    General,
    Independent,
    IndependentRule,
    NodeStateVector,
    ReportMatrix,
    StateSequence,
    count_matches,
    fuse,
    majority_fuse,
    node_log_likelihood,
    score_fixed_k,
    score_general,
    score_independent,
)
from byzfuse.model import InfeasibleInstance, unpack_bits


# --- strategies -------------------------------------------------------------------

probs = st.sampled_from([0.0, 0.05, 0.1, 0.25, 0.4, 0.5])
pmals = st.sampled_from([0.0, 0.3, 0.5, 0.8, 1.0]) | st.floats(0, 1)
# explicit prior tables hold linear probabilities, so keep alpha^n clear of underflow
alphas = st.sampled_from([0.0, 0.5, 1.0]) | st.floats(1e-6, 1 - 1e-6)


@st.composite
def instances(draw, max_n=8, max_t=6):
    n = draw(st.integers(1, max_n))
    T = draw(st.integers(1, max_t))
    bits = np.array(draw(st.lists(st.integers(0, 1), min_size=n * T, max_size=n * T)), dtype=np.uint8)
    s = draw(st.integers(0, 2**T - 1))
    ch = ChannelParams(draw(st.floats(0, 0.5) | probs), draw(pmals))
    return ReportMatrix(bits.reshape(n, T)), StateSequence.from_packed(s, T), ch


# --- independent oracles ----------------------------------------------------------


def brute_fixed_k(r, s, k, ch):
    """Explicit log-sum-exp over all k-subsets."""
    m = [count_matches(r.row(i), s) for i in range(r.n)]
    h = [node_log_likelihood(mi, r.T, ch.epsilon) for mi in m]
    b = [node_log_likelihood(mi, r.T, ch.delta) for mi in m]
    terms = [sum(b[i] if i in subset else h[i] for i in range(r.n))
             for subset in itertools.combinations(range(r.n), k)]
    top = max(terms)
    if top == -math.inf:
        return top
    return top + math.log(math.fsum(math.exp(t - top) for t in terms))


def fraction_independent(bits, s, alpha, eps, delta):
    T = len(s)
    out = Fraction(1)
    for row in bits:
        m = sum(int(a == b) for a, b in zip(row, s))
        out *= (1 - alpha) * (1 - eps) ** m * eps ** (T - m) + alpha * (1 - delta) ** m * delta ** (T - m)
    return out


# --- score_general ------------------------------------------------------------------


def test_score_general_point_mass_is_sum_of_honest_terms():
    r = ReportMatrix.parse("0110;1100;0111")
    s = StateSequence.parse("0110")
    ch = ChannelParams(0.1, 0.8)
    prior = Explicit.point_mass(NodeStateVector.parse("000"))
    expected = sum(node_log_likelihood(count_matches(r.row(i), s), 4, 0.1) for i in range(3))
    assert score_general(r, s, prior, ch) == pytest.approx(expected, abs=1e-12)


def test_score_general_hand_enumeration():
    # a=00: .9*.1, a=01: .9*.9, a=10: .1*.1, a=11: .1*.9, each with prior 1/4
    r = ReportMatrix.parse("0;1")
    prior = Explicit(tuple((NodeStateVector.parse(a), 0.25) for a in ("00", "01", "10", "11")))
    got = score_general(r, "0", prior, ChannelParams(0.1, 1.0))
    assert got == pytest.approx(math.log(0.25 * (0.9 * 0.1 + 0.9 * 0.9 + 0.1 * 0.1 + 0.1 * 0.9)), abs=1e-12)


def test_score_general_matches_independent_n2():
    r = ReportMatrix.parse("01;11")
    ch = ChannelParams(0.1, 0.7)
    for s in ("00", "01", "10", "11"):
        assert score_general(r, s, Independent(0.3).to_explicit(2), ch) == pytest.approx(
            score_independent(r, s, 0.3, ch), abs=1e-10)


def test_score_general_errors():
    r = ReportMatrix.parse("01;11")
    ch = ChannelParams(0.1, 0.7)
    with pytest.raises(DomainError):
        score_general(r, "01", Independent(0.3), ch)
    with pytest.raises(DomainError):
        score_general(r, "01", Independent(0.3).to_explicit(3), ch)
    with pytest.raises(DomainError):
        score_general(r, "011", Independent(0.3).to_explicit(2), ch)


# --- score_independent --------------------------------------------------------------


def test_score_independent_single_slot():
    r = ReportMatrix.parse("0")
    assert score_independent(r, "0", 0.5, ChannelParams(0.1, 1.0)) == pytest.approx(math.log(0.5), abs=1e-15)


def test_score_independent_alpha_zero_reduces_to_honest_product():
    r = ReportMatrix.parse("0110;1101;0001")
    ch = ChannelParams(0.2, 0.9)
    for v in range(16):
        s = StateSequence.from_packed(v, 4)
        expected = sum(node_log_likelihood(count_matches(r.row(i), s), 4, 0.2) for i in range(3))
        assert score_independent(r, s, 0.0, ch) == pytest.approx(expected, abs=1e-12)


def test_score_independent_exact_rational():
    bits = [[0, 1], [0, 1], [1, 0]]
    r = ReportMatrix(np.array(bits))
    ch = ChannelParams(0.1, 1.0)
    for v in range(4):
        s = tuple(unpack_bits(v, 2))
        exact = fraction_independent(bits, s, Fraction(2, 5), Fraction(1, 10), Fraction(9, 10))
        assert score_independent(r, StateSequence(s), 0.4, ch) == pytest.approx(math.log(exact), abs=1e-12)


# --- score_fixed_k --------------------------------------------------------------------


def test_fixed_k_zero_is_all_honest():
    r = ReportMatrix.parse("0110;1101;0001")
    ch = ChannelParams(0.1, 0.8)
    assert score_fixed_k(r, "0101", 0, ch) == pytest.approx(score_independent(r, "0101", 0.0, ch), abs=1e-12)


def test_fixed_k_all_byzantine():
    r = ReportMatrix.parse("0110;1101;0001")
    ch = ChannelParams(0.1, 0.8)
    s = StateSequence.parse("0101")
    expected = sum(node_log_likelihood(count_matches(r.row(i), s), 4, ch.delta) for i in range(3))
    assert score_fixed_k(r, s, 3, ch) == pytest.approx(expected, abs=1e-12)


def test_fixed_k_two_nodes_one_byzantine():
    r = ReportMatrix.parse("011;110")
    ch = ChannelParams(0.1, 0.8)
    s = StateSequence.parse("010")
    h = [math.exp(node_log_likelihood(count_matches(r.row(i), s), 3, ch.epsilon)) for i in range(2)]
    b = [math.exp(node_log_likelihood(count_matches(r.row(i), s), 3, ch.delta)) for i in range(2)]
    assert score_fixed_k(r, s, 1, ch) == pytest.approx(math.log(b[0] * h[1] + b[1] * h[0]), abs=1e-12)


def test_fixed_k_matches_subset_enumeration_n6():
    rng = np.random.default_rng(20)
    r = ReportMatrix(rng.integers(0, 2, size=(6, 4)))
    s = StateSequence(rng.integers(0, 2, size=4))
    ch = ChannelParams(0.1, 0.8)
    got = score_fixed_k(r, s, 3, ch)
    assert got == pytest.approx(brute_fixed_k(r, s, 3, ch), rel=1e-10)


def test_fixed_k_degenerate_honest_factor():
    # eps = 0 makes every mismatching honest node impossible; no NaN may appear
    r = ReportMatrix.parse("0000;1111;0101")
    ch = ChannelParams(0.0, 1.0)
    assert score_fixed_k(r, "0000", 1, ch) == -math.inf
    assert score_fixed_k(r, "0000", 2, ch) == -math.inf
    assert score_fixed_k(r, "0000", 3, ch) == -math.inf
    r2 = ReportMatrix.parse("0000;1111;1111")
    assert score_fixed_k(r2, "0000", 2, ch) == pytest.approx(0.0)
    assert score_fixed_k(r2, "0000", 1, ch) == -math.inf


def test_fixed_k_range():
    r = ReportMatrix.parse("01;10")
    with pytest.raises(DomainError):
        score_fixed_k(r, "01", 3, ChannelParams(0.1, 1.0))
    with pytest.raises(DomainError):
        score_fixed_k(r, "01", -1, ChannelParams(0.1, 1.0))


# --- properties ---------------------------------------------------------------------------


@settings(max_examples=200, deadline=None)
@given(instances(max_n=8), st.data())
def test_fixed_k_dp_equals_enumeration(inst, data):
    r, s, ch = inst
    k = data.draw(st.integers(0, r.n))
    got, want = score_fixed_k(r, s, k, ch), brute_fixed_k(r, s, k, ch)
    if math.isinf(want):
        assert got == want
    else:
        assert got == pytest.approx(want, rel=1e-10, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(instances(max_n=6), alphas)
def test_general_equals_independent(inst, alpha):
    r, s, ch = inst
    want = score_independent(r, s, alpha, ch)
    got = score_general(r, s, Independent(alpha).to_explicit(r.n), ch)
    if math.isinf(want):
        assert got == want
    else:
        assert got == pytest.approx(want, abs=1e-10)


@settings(max_examples=200, deadline=None)
@given(instances(), st.floats(0, 1), st.data())
def test_complement_symmetry(inst, alpha, data):
    r, s, ch = inst
    k = data.draw(st.integers(0, r.n))
    prior = Independent(alpha).to_explicit(r.n) if r.n <= 6 else Explicit.point_mass(np.zeros(r.n))
    assert score_independent(r, s, alpha, ch) == score_independent(~r, ~s, alpha, ch)
    assert score_fixed_k(r, s, k, ch) == score_fixed_k(~r, ~s, k, ch)
    assert score_general(r, s, prior, ch) == score_general(~r, ~s, prior, ch)


@settings(max_examples=200, deadline=None)
@given(instances(), st.floats(0, 1), st.data())
def test_row_permutation_invariance(inst, alpha, data):
    r, s, ch = inst
    k = data.draw(st.integers(0, r.n))
    perm = data.draw(st.permutations(range(r.n)))
    rp = ReportMatrix(r.bits[list(perm)])
    assert score_independent(r, s, alpha, ch) == score_independent(rp, s, alpha, ch)
    assert score_fixed_k(r, s, k, ch) == score_fixed_k(rp, s, k, ch)


@settings(max_examples=100, deadline=None)
@given(instances(max_n=7, max_t=5), st.floats(0, 1), st.data())
def test_fuse_complement(inst, alpha, data):
    r, _, ch = inst
    k = data.draw(st.integers(0, r.n))
    for rule in (IndependentRule(alpha), FixedKRule(k)):
        d, dc = fuse(r, rule, ch), fuse(~r, rule, ch)
        assert d.tie_count == dc.tie_count
        assert d.score == dc.score
        if d.tie_count == 1:
            assert dc.sequence == ~d.sequence


# --- fuse ----------------------------------------------------------------------------------


def test_fuse_hand_example():
    bits = [[0, 1], [0, 1], [1, 0]]
    exact = {v: fraction_independent(bits, tuple(unpack_bits(v, 2)), Fraction(2, 5), Fraction(1, 10),
                                     Fraction(9, 10)) for v in range(4)}
    best = max(exact, key=exact.get)
    assert best == 0b01
    d = fuse(ReportMatrix(np.array(bits)), IndependentRule(0.4), ChannelParams(0.1, 1.0))
    assert d.sequence == StateSequence.parse("01")
    assert d.tie_count == 1
    assert d.score == pytest.approx(math.log(exact[best]), abs=1e-12)


def test_fuse_unanimous_reports():
    v = StateSequence.parse("1011001")
    r = ReportMatrix(np.tile(v.bits, (5, 1)))
    assert fuse(r, IndependentRule(0.3), ChannelParams(0.1, 1.0)).sequence == v


def test_fuse_alpha_zero_is_majority():
    rng = np.random.default_rng(3)
    checked = 0
    while checked < 100:
        n, T = int(rng.choice([3, 5, 7])), int(rng.integers(1, 7))
        r = ReportMatrix(rng.integers(0, 2, size=(n, T)))
        d = fuse(r, IndependentRule(0.0), ChannelParams(float(rng.uniform(0.01, 0.49)), 1.0))
        assert d.sequence.bits.tolist() == (2 * r.bits.sum(axis=0) > n).astype(int).tolist()
        checked += 1


def test_fuse_uninformative_channel_all_tie():
    r = ReportMatrix.parse("0110;1011;0001")
    ch = ChannelParams(0.5, 0.3)
    for rule in (IndependentRule(0.4), FixedKRule(1), General(Independent(0.4).to_explicit(3))):
        d = fuse(r, rule, ch)
        assert d.tie_count == 16
        assert d.sequence == StateSequence.parse("0000")


def test_fuse_tie_break_is_lexicographic():
    # two honest nodes disagreeing in every slot: every sequence ties
    r = ReportMatrix.parse("010;101")
    d = fuse(r, IndependentRule(0.0), ChannelParams(0.1, 0.0))
    assert d.tie_count == 8 and d.sequence == StateSequence.parse("000")
    # one disagreeing slot: two tied sequences, the one with 0 in that slot wins
    r = ReportMatrix.parse("110;100")
    d = fuse(r, IndependentRule(0.0), ChannelParams(0.1, 0.0))
    assert d.tie_count == 2 and d.sequence == StateSequence.parse("100")


def test_fuse_general_equals_special_rules():
    rng = np.random.default_rng(11)
    ch = ChannelParams(0.1, 0.8)
    for _ in range(20):
        r = ReportMatrix(rng.integers(0, 2, size=(4, 5)))
        a = fuse(r, IndependentRule(0.25), ch)
        b = fuse(r, General(Independent(0.25).to_explicit(4)), ch)
        assert a.sequence == b.sequence and a.tie_count == b.tie_count
        c = fuse(r, FixedKRule(2), ch)
        d = fuse(r, General(FixedCount(2).to_explicit(4)), ch)
        assert c.sequence == d.sequence and c.tie_count == d.tie_count
        assert d.score == pytest.approx(c.score - math.log(6), abs=1e-10)


def test_fuse_enumeration_bound():
    r = ReportMatrix(np.zeros((1, 31), dtype=np.uint8))
    with pytest.raises(InfeasibleInstance):
        fuse(r, IndependentRule(0.1), ChannelParams(0.1, 1.0))


def test_fuse_large_window():
    # T = 23 exercises the uncached two-pass scan
    v = StateSequence(np.random.default_rng(0).integers(0, 2, size=23))
    r = ReportMatrix(np.tile(v.bits, (3, 1)))
    d = fuse(r, IndependentRule(0.2), ChannelParams(0.1, 1.0))
    assert d.sequence == v and d.tie_count == 1


# --- majority ------------------------------------------------------------------------------


def test_majority_strict():
    r = ReportMatrix(np.array([[1, 0], [1, 0], [0, 0], [0, 1]])[:3])
    assert majority_fuse(r, np.random.default_rng(0)) == StateSequence.parse("10")
    r = ReportMatrix(np.array([[0], [0], [0], [1]]))
    assert majority_fuse(r, np.random.default_rng(0)) == StateSequence.parse("0")


def test_majority_tie_coin_is_fair():
    r = ReportMatrix.parse("0;1")
    draws = 100_000
    ones = sum(int(majority_fuse(r, np.random.default_rng([9, i])).bits[0]) for i in range(draws))
    assert abs(ones / draws - 0.5) < 0.01
    outcomes = {majority_fuse(r, np.random.default_rng(seed)).bits[0] for seed in range(20)}
    assert outcomes == {0, 1}
