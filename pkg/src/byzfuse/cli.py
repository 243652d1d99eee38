"""``byzfuse`` command line: simulate, sweep, exact and table runs with CSV/JSON output."""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass

from . import presets
from .exact import exact_error
from .model import (
    DomainError,
    FixedCount,
    FixedKRule,
    Independent,
    IndependentRule,
    InfeasibleInstance,
    MajorityRule,
)
from .sim import ScenarioConfig, estimate_error, rule_label, sweep

COLUMNS = ("axis_value", "rule", "per_state_error", "sequence_error", "stderr", "trials", "seed")
COMMANDS = ("simulate", "sweep", "exact", "table")
EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE = 0, 2, 3


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunSpec:
    command: str
    scenario: ScenarioConfig
    sweep_axis: str | None = None
    grid: tuple | None = None
    preset_name: str | None = None
    output_path: str | None = None
    output_format: str = "csv"
    workers: int = 1
    tie_mode: str = "average"


# --- parsing ---------------------------------------------------------------------


def parse_rule(text: str):
    name, _, arg = text.strip().partition(":")
    try:
        if name == "independent":
            return IndependentRule(float(arg) if arg else None)
        if name == "fixed_k":
            return FixedKRule(int(arg) if arg else None)
        if name == "majority" and not arg:
            return MajorityRule()
    except ValueError as exc:
        raise ConfigError(f"rules: bad parameter in {text!r}: {exc}") from None
    raise ConfigError(f"rules: unknown rule {text!r} (use independent[:alpha], fixed_k[:k], majority)")


def _rule_to_text(rule) -> str:
    if isinstance(rule, IndependentRule) and rule.alpha is not None:
        return f"independent:{rule.alpha!r}"
    if isinstance(rule, FixedKRule) and rule.k is not None:
        return f"fixed_k:{rule.k}"
    return rule_label(rule)


def _prior_to_dict(prior) -> dict:
    if isinstance(prior, Independent):
        return {"type": "independent", "alpha": prior.alpha}
    return {"type": "fixed_count", "k": prior.k}


def _prior_from_dict(d) -> object:
    if not isinstance(d, dict) or "type" not in d:
        raise ConfigError("scenario.prior: expected an object with a 'type' field")
    try:
        if d["type"] == "independent":
            return Independent(d["alpha"])
        if d["type"] == "fixed_count":
            return FixedCount(d["k"])
    except KeyError as exc:
        raise ConfigError(f"scenario.prior.{exc.args[0]}: missing") from None
    raise ConfigError(f"scenario.prior.type: unknown prior type {d['type']!r}")


def _number_list(text: str, field: str) -> tuple:
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"{field}: expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise ConfigError(f"{field}: grid is empty")
    return values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="byzfuse", description=__doc__)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON run specification; flags override its fields")
    p.add_argument("--preset", help=f"one of: {', '.join(presets.PRESETS)}")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--rules", help="comma list of independent[:alpha], fixed_k[:k], majority")
    p.add_argument("--n", type=int)
    p.add_argument("--t", type=int, dest="T")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--pmal", type=float)
    p.add_argument("--alpha", type=float, help="independent node states with this Byzantine probability")
    p.add_argument("--k", type=int, help="exactly k Byzantine nodes")
    p.add_argument("--axis", choices=("p_mal", "alpha"), help="sweep axis")
    p.add_argument("--grid", help="comma list of sweep values")
    p.add_argument("--workers", type=int, help="worker processes for Monte Carlo trials")
    p.add_argument("--tie-mode", choices=("average", "lexicographic"), help="tie handling for exact")
    return p


def resolve(args: argparse.Namespace) -> RunSpec:
    """Merge preset, config file and flags (in increasing precedence) into a RunSpec."""
    cfg: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config: cannot read {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config: expected a JSON object")
    sc = dict(cfg.get("scenario") or {})

    preset_name = args.preset or cfg.get("preset")
    preset = None
    if preset_name is not None:
        try:
            preset = presets.get(preset_name)
        except KeyError as exc:
            raise ConfigError(f"preset: {exc.args[0]}") from None
    base = preset.scenario if preset else None

    def pick(flag, key, default=None, source=sc):
        if flag is not None:
            return flag
        if key in source:
            return source[key]
        if base is not None and hasattr(base, key):
            return getattr(base, key)
        return default

    n = pick(args.n, "n")
    T = pick(args.T, "T")
    for field, value in (("n", n), ("T", T)):
        if value is None:
            raise ConfigError(f"{field}: required (give --{field.lower()} or a preset)")

    if args.alpha is not None and args.k is not None:
        raise ConfigError("alpha/k: give at most one of --alpha and --k")
    if args.alpha is not None:
        prior = Independent(args.alpha)
    elif args.k is not None:
        prior = FixedCount(args.k)
    elif "prior" in sc:
        prior = _prior_from_dict(sc["prior"])
    elif base is not None:
        prior = base.node_prior
    else:
        raise ConfigError("prior: required (give --alpha, --k or a preset)")

    if args.rules is not None:
        rules = tuple(parse_rule(t) for t in args.rules.split(",") if t.strip())
    elif "rules" in sc:
        rules = tuple(parse_rule(t) for t in sc["rules"])
    elif base is not None:
        rules = base.rules
    else:
        rules = (FixedKRule() if isinstance(prior, FixedCount) else IndependentRule(), MajorityRule())

    scenario = ScenarioConfig(
        n=n,
        T=T,
        epsilon=pick(args.epsilon, "epsilon", presets.EPSILON),
        p_mal=pick(args.pmal, "p_mal", 1.0),
        node_prior=prior,
        rules=rules,
        trials=pick(args.trials, "trials", presets.DEFAULT_TRIALS),
        master_seed=pick(args.seed, "master_seed", 0),
    )

    axis = args.axis or cfg.get("sweep_axis") or (preset.axis if preset else None)
    if args.grid is not None:
        grid = _number_list(args.grid, "grid")
    elif cfg.get("grid") is not None:
        grid = tuple(float(v) for v in cfg["grid"])
    else:
        grid = preset.grid if preset else None

    spec = RunSpec(
        command=args.command,
        scenario=scenario,
        sweep_axis=axis,
        grid=grid,
        preset_name=preset_name,
        output_path=args.out or cfg.get("output_path"),
        output_format=args.format or cfg.get("output_format", "csv"),
        workers=args.workers if args.workers is not None else cfg.get("workers", 1),
        tie_mode=args.tie_mode or cfg.get("tie_mode", "average"),
    )
    validate(spec)
    return spec


def validate(spec: RunSpec) -> None:
    if spec.command not in COMMANDS:
        raise ConfigError(f"command: unknown command {spec.command!r}")
    if spec.output_format not in ("csv", "json"):
        raise ConfigError(f"output_format: must be csv or json, got {spec.output_format!r}")
    if not isinstance(spec.workers, int) or spec.workers < 1:
        raise ConfigError(f"workers: must be a positive integer, got {spec.workers!r}")
    if spec.tie_mode not in ("average", "lexicographic"):
        raise ConfigError(f"tie_mode: must be average or lexicographic, got {spec.tie_mode!r}")
    if spec.command == "table" and spec.preset_name is None:
        raise ConfigError("preset: the table command needs --preset")
    if spec.command in ("sweep", "table"):
        if spec.sweep_axis not in ("p_mal", "alpha"):
            raise ConfigError(f"sweep_axis: must be p_mal or alpha, got {spec.sweep_axis!r}")
        if not spec.grid:
            raise ConfigError("grid: sweep grid is empty")
        if any(not 0.0 <= v <= 1.0 for v in spec.grid):
            raise ConfigError("grid: values must lie in [0, 1]")
        if spec.sweep_axis == "alpha" and not isinstance(spec.scenario.node_prior, Independent):
            raise ConfigError("sweep_axis: an alpha sweep needs independent node states (--alpha)")


# --- execution ---------------------------------------------------------------------


def _row(value, rule, per_state, seq, stderr, trials, seed) -> dict:
    return {"axis_value": value, "rule": rule, "per_state_error": per_state, "sequence_error": seq,
            "stderr": stderr, "trials": trials, "seed": seed}


def execute(spec: RunSpec) -> list[dict]:
    sc = spec.scenario
    seed = sc.master_seed
    if spec.command == "simulate":
        return [_row(None, label, e.per_state_error, e.sequence_error, e.stderr_per_state, e.trials, seed)
                for label, e in estimate_error(sc, spec.workers).items()]
    if spec.command in ("sweep", "table"):
        return [_row(r.value, r.rule, r.estimate.per_state_error, r.estimate.sequence_error,
                     r.estimate.stderr_per_state, r.estimate.trials, seed)
                for r in sweep(sc, spec.sweep_axis, spec.grid, spec.workers)]
    rows = []
    for rule in sc.rules:
        res = exact_error(sc.n, sc.T, sc.channel, sc.node_prior, rule, tie_mode=spec.tie_mode)
        rows.append(_row(None, rule_label(rule), res.per_state_error, res.sequence_error, 0.0,
                         res.enumerated_outcomes, seed))
    return rows


def spec_to_dict(spec: RunSpec) -> dict:
    """Echo of the resolved spec; excludes settings that cannot change results."""
    sc = spec.scenario
    return {
        "command": spec.command,
        "preset": spec.preset_name,
        "scenario": {
            "n": sc.n, "T": sc.T, "epsilon": sc.epsilon, "p_mal": sc.p_mal,
            "prior": _prior_to_dict(sc.node_prior),
            "rules": [_rule_to_text(r) for r in sc.rules],
            "trials": sc.trials, "master_seed": sc.master_seed,
        },
        "sweep_axis": spec.sweep_axis if spec.command in ("sweep", "table") else None,
        "grid": list(spec.grid) if spec.command in ("sweep", "table") else None,
        "tie_mode": spec.tie_mode if spec.command == "exact" else None,
    }


def render(spec: RunSpec, rows: list[dict]) -> str:
    if spec.output_format == "json":
        return json.dumps({"spec": spec_to_dict(spec), "rows": rows}, indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for row in rows:
        w.writerow(["" if row[c] is None else (repr(row[c]) if isinstance(row[c], float) else row[c])
                    for c in COLUMNS])
    return buf.getvalue()


def write_atomic(path: str, text: str) -> None:
    """Write to a temporary sibling file, then rename over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".byzfuse-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run(spec: RunSpec) -> int:
    rows = execute(spec)
    text = render(spec, rows)
    if spec.output_path:
        write_atomic(spec.output_path, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = resolve(args)
        if spec.output_path:
            out_dir = os.path.dirname(os.path.abspath(spec.output_path))
            if not os.access(out_dir, os.W_OK):
                raise ConfigError(f"output_path: directory {out_dir} is not writable")
        return run(spec)
    except InfeasibleInstance as exc:
        print(f"byzfuse: infeasible instance: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, DomainError, ValueError, TypeError, KeyError) as exc:
        print(f"byzfuse: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
