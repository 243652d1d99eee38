"""Domain types: report matrices, state/node vectors, channel and prior models.

Bit vectors are packed into integers with element 0 as the most significant
bit, so integer order over packed sequences is lexicographic order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence, Union

import numpy as np


class DomainError(ValueError):
    """An argument lies outside its documented domain."""


class InfeasibleInstance(DomainError):
    """The instance exceeds an enumeration bound."""


def _check_prob(name: str, value: float, upper: float = 1.0) -> float:
    value = float(value)
    if not (0.0 <= value <= upper) or math.isnan(value):
        raise DomainError(f"{name} must lie in [0, {upper}], got {value!r}")
    return value


def _as_bits(values, length: int | None = None) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise DomainError(f"expected a 1-d bit vector, got shape {arr.shape}")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise DomainError("bit vectors may only hold 0 and 1")
    if length is not None and arr.size != length:
        raise DomainError(f"expected length {length}, got {arr.size}")
    out = arr.astype(np.uint8)
    out.setflags(write=False)
    return out


def pack_bits(bits) -> int:
    """Pack a bit vector into an int, element 0 most significant."""
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    return value


def unpack_bits(value: int, length: int) -> np.ndarray:
    shifts = np.arange(length - 1, -1, -1, dtype=np.uint64)
    return ((np.uint64(value) >> shifts) & np.uint64(1)).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class _BitVector:
    bits: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bits", _as_bits(self.bits))

    def __len__(self) -> int:
        return int(self.bits.size)

    def __eq__(self, other) -> bool:
        return type(other) is type(self) and np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash((type(self).__name__, self.bits.tobytes()))

    def __invert__(self):
        return type(self)(1 - self.bits)

    @property
    def packed(self) -> int:
        return pack_bits(self.bits)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({''.join(map(str, self.bits))!r})"


class StateSequence(_BitVector):
    """A candidate or true system trajectory s^T."""

    @property
    def T(self) -> int:
        return len(self)

    @classmethod
    def from_packed(cls, value: int, T: int) -> "StateSequence":
        return cls(unpack_bits(value, T))

    @classmethod
    def parse(cls, text: str) -> "StateSequence":
        return cls([int(c) for c in text])


class NodeStateVector(_BitVector):
    """Node states a^n; bit i is 1 when node i is Byzantine."""

    @property
    def n(self) -> int:
        return len(self)

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    @classmethod
    def parse(cls, text: str) -> "NodeStateVector":
        return cls([int(c) for c in text])


@dataclass(frozen=True, eq=False)
class ReportMatrix:
    """The n x T matrix of binary reports received by the fusion center."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DomainError(f"report matrix must be n x T with n, T >= 1, got shape {arr.shape}")
        if not np.isin(arr, (0, 1)).all():
            raise DomainError("reports may only hold 0 and 1")
        arr = arr.astype(np.uint8)
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    @classmethod
    def parse(cls, text: str) -> "ReportMatrix":
        """Build from rows separated by ';', e.g. ``"01;01;10"``."""
        rows = [r.strip() for r in text.split(";") if r.strip()]
        return cls(np.array([[int(c) for c in r] for r in rows]))

    @property
    def n(self) -> int:
        return self.bits.shape[0]

    @property
    def T(self) -> int:
        return self.bits.shape[1]

    @property
    def rows(self) -> np.ndarray:
        """Rows packed into uint64 words (requires T <= 64)."""
        if self.T > 64:
            raise DomainError("packed rows require T <= 64")
        weights = np.uint64(1) << np.arange(self.T - 1, -1, -1, dtype=np.uint64)
        return (self.bits.astype(np.uint64) * weights).sum(axis=1, dtype=np.uint64)

    def row(self, i: int) -> np.ndarray:
        return self.bits[i]

    def __invert__(self) -> "ReportMatrix":
        return ReportMatrix(1 - self.bits)

    def __eq__(self, other) -> bool:
        return isinstance(other, ReportMatrix) and np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash((self.bits.shape, self.bits.tobytes()))


def derive_delta(epsilon: float, p_mal: float) -> float:
    """Probability that a Byzantine node's report disagrees with the true state."""
    epsilon = _check_prob("epsilon", epsilon, 0.5)
    p_mal = _check_prob("p_mal", p_mal)
    return epsilon * (1.0 - p_mal) + (1.0 - epsilon) * p_mal


@dataclass(frozen=True)
class ChannelParams:
    """Crossover probabilities of the honest and Byzantine report channels.

    ``epsilon`` is accepted in [0, 0.5]; 0.5 is the uninformative corner case.
    ``delta`` is always derived and cannot be set.
    """

    epsilon: float
    p_mal: float

    def __post_init__(self):
        object.__setattr__(self, "epsilon", _check_prob("epsilon", self.epsilon, 0.5))
        object.__setattr__(self, "p_mal", _check_prob("p_mal", self.p_mal))

    @property
    def delta(self) -> float:
        return derive_delta(self.epsilon, self.p_mal)


# --- priors over node states -------------------------------------------------


@dataclass(frozen=True)
class Independent:
    """Each node is Byzantine independently with probability ``alpha``."""

    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", _check_prob("alpha", self.alpha))

    def to_explicit(self, n: int) -> "Explicit":
        entries = []
        for code in range(2**n):
            a = NodeStateVector(unpack_bits(code, n))
            k = a.count
            entries.append((a, self.alpha**k * (1.0 - self.alpha) ** (n - k)))
        return Explicit(tuple(entries), tol=1e-9)


@dataclass(frozen=True)
class FixedCount:
    """Exactly ``k`` Byzantine nodes, uniform over all k-subsets."""

    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 0:
            raise DomainError(f"k must be a nonnegative integer, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))

    def check(self, n: int) -> None:
        if self.k > n:
            raise DomainError(f"k={self.k} exceeds node count n={n}")

    def to_explicit(self, n: int) -> "Explicit":
        self.check(n)
        p = 1.0 / math.comb(n, self.k)
        entries = []
        for subset in combinations(range(n), self.k):
            bits = np.zeros(n, dtype=np.uint8)
            bits[list(subset)] = 1
            entries.append((NodeStateVector(bits), p))
        return Explicit(tuple(entries))


@dataclass(frozen=True)
class Explicit:
    """An explicit table of (node-state vector, probability) entries."""

    entries: tuple
    tol: float = field(default=1e-9, compare=False)

    def __post_init__(self):
        entries = tuple((a if isinstance(a, NodeStateVector) else NodeStateVector(a), float(p))
                        for a, p in self.entries)
        if not entries:
            raise DomainError("explicit prior needs at least one entry")
        if any(p < 0 or math.isnan(p) for _, p in entries):
            raise DomainError("explicit prior probabilities must be nonnegative")
        total = math.fsum(p for _, p in entries)
        if abs(total - 1.0) > self.tol:
            raise DomainError(f"explicit prior probabilities sum to {total}, not 1")
        if len({len(a) for a, _ in entries}) != 1:
            raise DomainError("explicit prior entries have differing lengths")
        object.__setattr__(self, "entries", entries)

    @property
    def n(self) -> int:
        return len(self.entries[0][0])

    @classmethod
    def point_mass(cls, a) -> "Explicit":
        return cls(((a, 1.0),))

    def to_explicit(self, n: int) -> "Explicit":
        if n != self.n:
            raise DomainError(f"prior is over {self.n} nodes, reports have {n}")
        return self


PriorModel = Union[Independent, FixedCount, Explicit]


# --- fusion rules --------------------------------------------------------------


@dataclass(frozen=True)
class General:
    """Optimum rule under an arbitrary prior over node states."""

    prior: Explicit

    name = "general"


@dataclass(frozen=True)
class IndependentRule:
    """Optimum rule assuming independent Bernoulli(alpha) node states.

    ``alpha=None`` means "take alpha from the generating prior" in the simulator.
    """

    alpha: float | None = None

    name = "independent"

    def __post_init__(self):
        if self.alpha is not None:
            object.__setattr__(self, "alpha", _check_prob("alpha", self.alpha))


@dataclass(frozen=True)
class FixedKRule:
    """Optimum rule assuming exactly k Byzantines (``k=None``: matched to the prior)."""

    k: int | None = None

    name = "fixed_k"

    def __post_init__(self):
        if self.k is not None and (int(self.k) != self.k or self.k < 0):
            raise DomainError(f"k must be a nonnegative integer, got {self.k!r}")


@dataclass(frozen=True)
class MajorityRule:
    """Per-slot majority vote with fair-coin tie breaks."""

    name = "majority"


FusionRule = Union[General, IndependentRule, FixedKRule, MajorityRule]


def bind_rule(rule, n: int, prior):
    """Fill a rule's unset parameter from the node-state prior of an n-node network.

    An unset alpha becomes the prior's Byzantine fraction; an unset k becomes
    the prior's count, or round(alpha * n) under an independent prior.
    """
    if isinstance(rule, IndependentRule) and rule.alpha is None:
        if isinstance(prior, Independent):
            return IndependentRule(prior.alpha)
        if isinstance(prior, FixedCount):
            return IndependentRule(prior.k / n)
        raise DomainError("independent rule needs alpha when the prior is explicit")
    if isinstance(rule, FixedKRule):
        k = rule.k
        if k is None:
            if isinstance(prior, FixedCount):
                k = prior.k
            elif isinstance(prior, Independent):
                k = int(round(prior.alpha * n))
            else:
                raise DomainError("fixed-k rule needs k when the prior is explicit")
        if k > n:
            raise DomainError(f"k={k} exceeds node count n={n}")
        return FixedKRule(int(k))
    if isinstance(rule, General):
        rule.prior.to_explicit(n)
    return rule


@dataclass(frozen=True)
class FusionDecision:
    sequence: StateSequence
    score: float
    tie_count: int

    def __post_init__(self):
        if self.tie_count < 1:
            raise ValueError("tie_count must be at least 1")


def as_sequence(s: Sequence[int] | StateSequence | str) -> StateSequence:
    if isinstance(s, StateSequence):
        return s
    if isinstance(s, str):
        return StateSequence.parse(s)
    return StateSequence(s)
