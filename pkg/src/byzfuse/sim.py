"""Monte Carlo estimation of fusion error rates, parameter sweeps, attacker best response.

Randomness is derived per trial from ``(master_seed, trial_index)`` through
numpy's SeedSequence, so results do not depend on how trials are split
across worker processes. Each trial draws one fixed-width block of uniforms
laid out as

    [state bits (T) | node draws (n) | local errors (n*T) | flips (n*T) | tie coins (T)]

and every Bernoulli event is a threshold on its own uniform. The block does
not depend on epsilon, p_mal, alpha or k, so sweeps over those parameters
reuse the same random numbers at every grid point.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .fusion import MAX_T, independent_table, majority_from_coins, node_log_likelihood
from .model import (
    ChannelParams,
    DomainError,
    Explicit,
    FixedCount,
    FixedKRule,
    General,
    InfeasibleInstance,
    Independent,
    IndependentRule,
    MajorityRule,
    NodeStateVector,
    ReportMatrix,
    StateSequence,
    bind_rule,
)

CHUNK = 2048


@dataclass(frozen=True)
class ScenarioConfig:
    n: int
    T: int
    epsilon: float
    p_mal: float
    node_prior: Independent | FixedCount | Explicit
    rules: tuple = (IndependentRule(),)
    trials: int = 100_000
    master_seed: int = 0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n!r}")
        if int(self.T) != self.T or self.T < 1:
            raise DomainError(f"T must be a positive integer, got {self.T!r}")
        if int(self.trials) != self.trials or self.trials < 1:
            raise DomainError(f"trials must be a positive integer, got {self.trials!r}")
        if not 0 <= int(self.master_seed) < 2**64:
            raise DomainError("master_seed must be a 64-bit unsigned integer")
        ChannelParams(self.epsilon, self.p_mal)
        if isinstance(self.node_prior, FixedCount):
            self.node_prior.check(self.n)
        elif isinstance(self.node_prior, Explicit):
            self.node_prior.to_explicit(self.n)
        elif not isinstance(self.node_prior, Independent):
            raise DomainError(f"unsupported node prior {self.node_prior!r}")
        rules = tuple(self.rules)
        if not rules:
            raise DomainError("at least one fusion rule is required")
        labels = [rule_label(r) for r in rules]
        if len(set(labels)) != len(labels):
            raise DomainError(f"duplicate rules in {labels}")
        object.__setattr__(self, "rules", rules)

    @property
    def channel(self) -> ChannelParams:
        return ChannelParams(self.epsilon, self.p_mal)

    @property
    def block_width(self) -> int:
        return 2 * self.T + self.n + 2 * self.n * self.T


@dataclass(frozen=True)
class ErrorEstimate:
    per_state_error: float
    sequence_error: float
    stderr_per_state: float
    trials: int
    mismatches: int = field(default=0, compare=False)
    tie_trials: int = field(default=0, compare=False)


def rule_label(rule) -> str:
    return rule.name


def resolve_rule(rule, cfg: ScenarioConfig):
    """Fill a rule's unset parameter from the generating prior."""
    return bind_rule(rule, cfg.n, cfg.node_prior)


# --- trial generation ------------------------------------------------------------


def trial_uniforms(cfg: ScenarioConfig, start: int, count: int) -> np.ndarray:
    width = cfg.block_width
    out = np.empty((count, width))
    seed = int(cfg.master_seed)
    for row, idx in enumerate(range(start, start + count)):
        out[row] = np.random.default_rng([seed, idx]).random(width)
    return out


def _node_states(cfg: ScenarioConfig, v: np.ndarray) -> np.ndarray:
    prior = cfg.node_prior
    if isinstance(prior, Independent):
        return (v < prior.alpha).astype(np.uint8)
    if isinstance(prior, FixedCount):
        # the k smallest of n iid uniforms form a uniform random k-subset
        a = np.zeros(v.shape, dtype=np.uint8)
        order = np.argsort(v, axis=1, kind="stable")[:, : prior.k]
        np.put_along_axis(a, order, 1, axis=1)
        return a
    cum = np.cumsum([p for _, p in prior.entries])
    table = np.array([e.bits for e, _ in prior.entries], dtype=np.uint8)
    pick = np.minimum(np.searchsorted(cum, v[:, 0] * cum[-1], side="right"), len(cum) - 1)
    return table[pick]


def materialize(cfg: ScenarioConfig, u: np.ndarray):
    """Turn uniform blocks into (states, node states, reports, tie coins)."""
    n, T = cfg.n, cfg.T
    count = u.shape[0]
    o = 0
    s = (u[:, o : o + T] < 0.5).astype(np.uint8)
    o += T
    a = _node_states(cfg, u[:, o : o + n])
    o += n
    err = (u[:, o : o + n * T] < cfg.epsilon).reshape(count, n, T)
    o += n * T
    flip = (u[:, o : o + n * T] < cfg.p_mal).reshape(count, n, T)
    o += n * T
    coins = u[:, o : o + T]
    local = s[:, None, :] ^ err.astype(np.uint8)
    reports = local ^ (flip & a[:, :, None].astype(bool)).astype(np.uint8)
    return s, a, reports, coins


def generate_trial(cfg: ScenarioConfig, trial_index: int):
    """Draw (true states, node states, reports) for one trial."""
    s, a, r, _ = materialize(cfg, trial_uniforms(cfg, trial_index, 1))
    return StateSequence(s[0]), NodeStateVector(a[0]), ReportMatrix(r[0])


# --- estimation ------------------------------------------------------------------


def decide(rule, cfg: ScenarioConfig, reports: np.ndarray, coins: np.ndarray):
    """Fused decisions for a (trials, n, T) report array; returns (decision bits, tie counts)."""
    T = cfg.T
    if isinstance(rule, MajorityRule):
        return majority_from_coins(reports, coins), np.ones(len(reports), dtype=np.int64)
    if T > MAX_T:
        raise InfeasibleInstance(f"T={T} exceeds the enumeration bound {MAX_T}")
    ch = cfg.channel
    m = np.arange(T + 1)
    honest = node_log_likelihood(m, T, ch.epsilon)
    byz = node_log_likelihood(m, T, ch.delta)
    if isinstance(rule, IndependentRule):
        packed, ties = _kernels.fuse_batch(reports, _kernels.INDEPENDENT, honest=honest, byz=byz,
                                           table=independent_table(T, rule.alpha, ch))
    elif isinstance(rule, FixedKRule):
        packed, ties = _kernels.fuse_batch(reports, _kernels.FIXED_K, honest=honest, byz=byz, k=rule.k)
    elif isinstance(rule, General):
        prior = rule.prior.to_explicit(cfg.n)
        keep = [(a.bits, p) for a, p in prior.entries if p > 0]
        packed, ties = _kernels.fuse_batch(reports, _kernels.GENERAL, honest=honest, byz=byz,
                                           states=np.array([b for b, _ in keep]),
                                           logp=np.log([p for _, p in keep]))
    else:
        raise DomainError(f"unknown rule {rule!r}")
    shifts = np.arange(T - 1, -1, -1, dtype=np.uint64)
    dec = ((packed[:, None] >> shifts) & np.uint64(1)).astype(np.uint8)
    return dec, ties


def _run_chunk(cfg: ScenarioConfig, start: int, count: int):
    u = trial_uniforms(cfg, start, count)
    s, _, reports, coins = materialize(cfg, u)
    out = {}
    for rule in cfg.rules:
        concrete = resolve_rule(rule, cfg)
        dec, ties = decide(concrete, cfg, reports, coins)
        wrong = (dec != s).sum(axis=1)
        out[rule_label(rule)] = (int(wrong.sum()), int(np.count_nonzero(wrong)), int(np.count_nonzero(ties > 1)))
    return out


def _chunks(trials: int):
    return [(start, min(CHUNK, trials - start)) for start in range(0, trials, CHUNK)]


def _map_chunks(cfg: ScenarioConfig, workers: int):
    chunks = _chunks(cfg.trials)
    if workers <= 1 or len(chunks) == 1:
        return [_run_chunk(cfg, s, c) for s, c in chunks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_chunk, [cfg] * len(chunks), *zip(*chunks)))


def estimate_error(cfg: ScenarioConfig, workers: int = 1) -> dict[str, ErrorEstimate]:
    """Monte Carlo error rates of every rule in ``cfg``.

    The per-state standard error treats the T slots of a trial as independent
    draws, which understates it somewhat (slots share the node states).
    """
    for rule in cfg.rules:
        resolve_rule(rule, cfg)
    totals = {rule_label(r): [0, 0, 0] for r in cfg.rules}
    for part in _map_chunks(cfg, workers):
        for label, counts in part.items():
            for i, v in enumerate(counts):
                totals[label][i] += v
    slots = cfg.T * cfg.trials
    result = {}
    for label, (wrong, seq_wrong, tie_trials) in totals.items():
        p = wrong / slots
        result[label] = ErrorEstimate(
            per_state_error=p,
            sequence_error=seq_wrong / cfg.trials,
            stderr_per_state=math.sqrt(p * (1.0 - p) / slots),
            trials=cfg.trials,
            mismatches=wrong,
            tie_trials=tie_trials,
        )
    return result


@dataclass(frozen=True)
class SweepRow:
    value: float
    rule: str
    estimate: ErrorEstimate


def with_axis(cfg: ScenarioConfig, axis: str, value: float) -> ScenarioConfig:
    if axis == "p_mal":
        return replace(cfg, p_mal=value)
    if axis == "alpha":
        if not isinstance(cfg.node_prior, Independent):
            raise DomainError("an alpha sweep needs an independent node prior")
        return replace(cfg, node_prior=Independent(value))
    raise DomainError(f"unknown sweep axis {axis!r}")


def sweep(cfg: ScenarioConfig, axis: str, values, workers: int = 1) -> list[SweepRow]:
    """Estimate every rule at each grid value; all points share trial seeds."""
    values = [float(v) for v in values]
    if not values:
        raise DomainError("sweep grid is empty")
    points = [with_axis(cfg, axis, v) for v in values]
    rows = []
    for v, point in zip(values, points):
        for label, est in estimate_error(point, workers).items():
            rows.append(SweepRow(v, label, est))
    return rows


@dataclass(frozen=True)
class BestResponse:
    p_mal: float
    ambiguous: bool
    runner_up: float | None
    margin_sigmas: float
    table: list


def best_response(cfg: ScenarioConfig, p_mal_grid, rule=None, workers: int = 1,
                  table: list | None = None) -> BestResponse:
    """Flipping probability on the grid that maximizes the rule's per-state error.

    The winner is flagged ambiguous when another grid point lies within three
    combined standard errors, sqrt(se_best^2 + se_other^2), of it. A
    precomputed sweep ``table`` may be passed to skip the simulation.
    """
    grid = [float(v) for v in p_mal_grid]
    if not grid:
        raise DomainError("p_mal grid is empty")
    if rule is None:
        rule = next((r for r in cfg.rules if not isinstance(r, MajorityRule)), cfg.rules[0])
    label = rule if isinstance(rule, str) else rule_label(rule)
    if table is None:
        table = sweep(cfg, "p_mal", grid, workers)
    points = {row.value: row.estimate for row in table if row.rule == label}
    missing = [v for v in grid if v not in points]
    if missing:
        raise DomainError(f"no estimate for {label} at p_mal={missing}")
    best = max(grid, key=lambda v: points[v].per_state_error)
    top = points[best]
    runner, margin = None, math.inf
    for v in grid:
        if v == best:
            continue
        other = points[v]
        se = math.hypot(top.stderr_per_state, other.stderr_per_state)
        gap = top.per_state_error - other.per_state_error
        sig = gap / se if se > 0 else (math.inf if gap > 0 else 0.0)
        if sig < margin:
            runner, margin = v, sig
    return BestResponse(best, margin <= 3.0, runner, margin, table)
