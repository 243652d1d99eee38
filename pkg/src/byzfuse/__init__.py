"""Optimum decision fusion for sensor networks with Byzantine nodes."""

from .fusion import (
    MAX_T,
    TIE_TOL,
    count_matches,
    fuse,
    majority_fuse,
    node_log_likelihood,
    score_fixed_k,
    score_general,
    score_independent,
)
from .model import (
    ChannelParams,
    DomainError,
    Explicit,
    FixedCount,
    FixedKRule,
    FusionDecision,
    General,
    Independent,
    IndependentRule,
    MajorityRule,
    NodeStateVector,
    ReportMatrix,
    StateSequence,
    derive_delta,
)

__all__ = [
    "MAX_T",
    "TIE_TOL",
    "ChannelParams",
    "DomainError",
    "Explicit",
    "FixedCount",
    "FixedKRule",
    "FusionDecision",
    "General",
    "Independent",
    "IndependentRule",
    "MajorityRule",
    "NodeStateVector",
    "ReportMatrix",
    "StateSequence",
    "count_matches",
    "derive_delta",
    "fuse",
    "majority_fuse",
    "node_log_likelihood",
    "score_fixed_k",
    "score_general",
    "score_independent",
]
