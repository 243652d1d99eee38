"""Named scenarios for the reference error tables and figure settings.

Table presets sweep the flipping probability over the table columns; the
``reference`` mapping holds the expected per-state error at each column.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import FixedCount, FixedKRule, Independent, IndependentRule, MajorityRule
from .sim import ScenarioConfig

PMAL_GRID = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
ALPHA_GRID = (0.40, 0.42, 0.44, 0.46, 0.48, 0.49)
EPSILON = 0.1
DEFAULT_TRIALS = 100_000


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    scenario: ScenarioConfig
    axis: str
    grid: tuple
    reference: dict = field(default_factory=dict)

    @property
    def optimum_rule(self) -> str:
        return self.scenario.rules[0].name


def _table_row(name, n, T, alpha, k, values, fixed):
    prior = FixedCount(k) if fixed else Independent(alpha)
    rule = FixedKRule() if fixed else IndependentRule()
    setting = f"n={n}, {'k=' + str(k) if fixed else 'alpha=' + str(alpha)}, T={T}"
    return Preset(
        name=name,
        description=f"per-state error vs p_mal, {'fixed count' if fixed else 'independent'} node states, {setting}",
        scenario=ScenarioConfig(n=n, T=T, epsilon=EPSILON, p_mal=1.0, node_prior=prior, rules=(rule,),
                                trials=DEFAULT_TRIALS),
        axis="p_mal",
        grid=PMAL_GRID,
        reference=dict(zip(PMAL_GRID, values)),
    )


_ROWS = [
    # n, T, alpha, k, independent-states values, fixed-count values
    (16, 4, 0.4375, 7, (0.0131, 0.0221, 0.0374, 0.0777, 0.1853, 0.3162),
     (0.0045, 0.0054, 0.0042, 0.0067, 0.0190, 0.0357)),
    (11, 9, 0.4545, 5, (0.0217, 0.0278, 0.0302, 0.0444, 0.1320, 0.3708),
     (0.0093, 0.0090, 0.0058, 0.0043, 0.0048, 0.0046)),
    (10, 10, 0.4, 4, (0.0176, 0.0211, 0.0200, 0.0311, 0.1003, 0.2663),
     (0.0101, 0.0079, 0.0060, 0.0038, 0.0023, 0.0011)),
    (5, 15, 0.4, 2, (0.0814, 0.0951, 0.0919, 0.0869, 0.1640, 0.3189),
     (0.0339, 0.0301, 0.0297, 0.0294, 0.0177, 0.0087)),
]

PRESETS: dict[str, Preset] = {}
for _i, (_n, _T, _alpha, _k, _indep, _fixed) in enumerate(_ROWS, start=1):
    PRESETS[f"table1-row{_i}"] = _table_row(f"table1-row{_i}", _n, _T, _alpha, _k, _indep, fixed=False)
    PRESETS[f"table2-row{_i}"] = _table_row(f"table2-row{_i}", _n, _T, _alpha, _k, _fixed, fixed=True)

PRESETS["fig2"] = Preset(
    name="fig2",
    description="per-state error vs alpha, independent node states, n=100, T=4, p_mal=1",
    scenario=ScenarioConfig(n=100, T=4, epsilon=EPSILON, p_mal=1.0, node_prior=Independent(0.4),
                            rules=(IndependentRule(), MajorityRule()), trials=DEFAULT_TRIALS),
    axis="alpha",
    grid=ALPHA_GRID,
)
PRESETS["fig3"] = Preset(
    name="fig3",
    description="per-state error vs p_mal, independent node states, n=10, alpha=0.4, T=4",
    scenario=ScenarioConfig(n=10, T=4, epsilon=EPSILON, p_mal=1.0, node_prior=Independent(0.4),
                            rules=(IndependentRule(), MajorityRule()), trials=DEFAULT_TRIALS),
    axis="p_mal",
    grid=PMAL_GRID,
)
PRESETS["fig4"] = Preset(
    name="fig4",
    description="per-state error vs p_mal, fixed count k=4, n=10, T=4",
    scenario=ScenarioConfig(n=10, T=4, epsilon=EPSILON, p_mal=1.0, node_prior=FixedCount(4),
                            rules=(FixedKRule(), IndependentRule(), MajorityRule()), trials=DEFAULT_TRIALS),
    axis="p_mal",
    grid=PMAL_GRID,
)


def get(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; known: {', '.join(PRESETS)}") from None
