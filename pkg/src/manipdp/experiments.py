"""Named scenario presets, policy-table runners, and threshold sweeps.

Reproduces the regime studies: four spoofing (MDP) columns, four pinging
(POMDP) columns, the three-strategy profitability comparison, and grid+
bisection sweeps that locate the critical fine or cost at which manipulation
drops out of every optimal-action set.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from importlib import resources

from manipdp import backtest as bt
from manipdp.grid import ACTIONS, Scenario, build_mdp, build_pomdp
from manipdp.mdp import extract_policy_set, q_values, value_iteration
from manipdp.pomdp import (
    alpha_value_iteration,
    belief_grid_value_iteration,
    policy_at_observation,
    policy_from_grid,
)

SPOOF_SIDE_ALIAS = {a.value: a.spoof_side_symbol for a in ACTIONS}

MDP_STATE_ROWS = ("x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8")
OBSERVATION_ROWS = ("y1", "y2", "y3", "y4", "y5")


@dataclass(frozen=True)
class ScenarioPreset:
    name: str
    scenario: Scenario


def _build_presets() -> dict[str, ScenarioPreset]:
    base = Scenario()
    entries = {
        "mdp_baseline": base,
        "mdp_fines": base.with_manipulation_cost(-4.53),
        "mdp_uncertain_50": base.replace(toggle_probability=0.5),
        "mdp_uncertain_10": base.replace(toggle_probability=0.1),
        "pomdp_baseline": base,
        "pomdp_costs": base.with_manipulation_cost(-4.91),
        "pomdp_uncertain_50": base.replace(toggle_probability=0.5),
        "pomdp_uncertain_10": base.replace(toggle_probability=0.1),
    }
    return {name: ScenarioPreset(name, sc) for name, sc in entries.items()}


PRESETS = _build_presets()


def preset_scenario(name: str) -> Scenario:
    try:
        return PRESETS[name].scenario
    except KeyError:
        raise KeyError(
            f"unknown preset {name!r}; choose from {', '.join(PRESETS)}"
        ) from None


def _format_cell(actions, aliases: bool) -> str:
    if aliases:
        return ", ".join(f"{a} ({SPOOF_SIDE_ALIAS[a]})" for a in actions)
    return ", ".join(actions)


@dataclass(frozen=True)
class PolicyTable:
    """Optimal-action sets laid out rows (states/observations) x regimes."""

    row_title: str
    rows: tuple[str, ...]
    columns: tuple[str, ...]
    cells: dict[tuple[str, str], tuple[str, ...]]

    def cell(self, row: str, column: str) -> tuple[str, ...]:
        return self.cells[(row, column)]

    def to_markdown(self, aliases: bool = True) -> str:
        head = f"| {self.row_title} | " + " | ".join(self.columns) + " |"
        sep = "|" + "---|" * (len(self.columns) + 1)
        lines = [head, sep]
        for row in self.rows:
            cells = [
                _format_cell(self.cells[(row, col)], aliases) for col in self.columns
            ]
            lines.append(f"| {row} | " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([self.row_title, *self.columns])
        for row in self.rows:
            writer.writerow(
                [row, *("|".join(self.cells[(row, col)]) for col in self.columns)]
            )
        return buf.getvalue()

    def to_json(self) -> str:
        payload = {
            "rows": list(self.rows),
            "columns": list(self.columns),
            "cells": [
                [list(self.cells[(row, col)]) for col in self.columns]
                for row in self.rows
            ],
        }
        return json.dumps(payload, indent=2) + "\n"


MDP_TABLE_COLUMNS = ("mdp_baseline", "mdp_fines", "mdp_uncertain_50", "mdp_uncertain_10")
POMDP_TABLE_COLUMNS = (
    "pomdp_baseline",
    "pomdp_costs",
    "pomdp_uncertain_50",
    "pomdp_uncertain_10",
)


def mdp_policy(scenario: Scenario, tie_tolerance: float = 1e-6):
    mdp = build_mdp(scenario)
    values = value_iteration(mdp)
    return extract_policy_set(mdp, q_values(mdp, values), tie_tolerance)


def pomdp_policy(scenario: Scenario, tie_tolerance: float = 1e-6):
    pomdp = build_pomdp(scenario)
    alphas = alpha_value_iteration(pomdp)
    return policy_at_observation(pomdp, alphas, tie_tolerance)


def run_table2(tie_tolerance: float = 1e-6) -> PolicyTable:
    """Optimal spoofing-model actions per state under the four regimes."""
    cells = {}
    for column in MDP_TABLE_COLUMNS:
        policy = mdp_policy(preset_scenario(column), tie_tolerance)
        for row in MDP_STATE_ROWS:
            cells[(row, column)] = policy[row]
    return PolicyTable("State", MDP_STATE_ROWS, MDP_TABLE_COLUMNS, cells)


def run_table3(tie_tolerance: float = 1e-6) -> PolicyTable:
    """Optimal pinging-model actions per observation under the four regimes."""
    cells = {}
    for column in POMDP_TABLE_COLUMNS:
        policy = pomdp_policy(preset_scenario(column), tie_tolerance)
        for row in OBSERVATION_ROWS:
            cells[(row, column)] = policy[row]
    return PolicyTable("Observation", OBSERVATION_ROWS, POMDP_TABLE_COLUMNS, cells)


@dataclass(frozen=True)
class SummaryTable:
    """Numeric table with fixed float formatting for reproducible output."""

    columns: tuple[str, ...]
    rows: tuple[tuple, ...]

    def _formatted(self):
        return [
            [x if isinstance(x, str) else f"{x:.6f}" for x in row] for row in self.rows
        ]

    def to_markdown(self) -> str:
        lines = ["| " + " | ".join(self.columns) + " |"]
        lines.append("|" + "---|" * len(self.columns))
        for row in self._formatted():
            lines.append("| " + " | ".join(row) + " |")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        writer.writerows(self._formatted())
        return buf.getvalue()

    def to_json(self) -> str:
        payload = {
            "columns": list(self.columns),
            "rows": self._formatted(),
        }
        return json.dumps(payload, indent=2) + "\n"


def bundled_price_series() -> bt.PriceSeries:
    """The packaged 93-row bull-market sample."""
    ref = resources.files("manipdp").joinpath("data/bull_sample.csv")
    with resources.as_file(ref) as path:
        return bt.load_price_csv(path)


def run_table1(series_list=None, specs=None) -> SummaryTable:
    """Average profit percentage and dispersion per strategy.

    Runs the three strategies on each series independently and aggregates;
    with a single series the standard deviation is zero.
    """
    if series_list is None:
        series_list = [bundled_price_series()]
    series_list = list(series_list)
    if not series_list:
        raise ValueError("need at least one price series")
    specs = specs if specs is not None else bt.default_specs()
    reports = []
    for series in series_list:
        initial = bt.default_portfolio(series)
        for spec in specs.values():
            reports.append(bt.run_strategy(series, spec, initial))
    stats = bt.summarize_runs(reports)
    order = [k.value for k in bt.StrategyKind if k.value in stats]
    rows = tuple((name, stats[name][0], stats[name][1]) for name in order)
    return SummaryTable(("strategy", "avg_profit_pct", "std_dev"), rows)


SWEEP_PARAMETERS = ("manip_cost", "toggle_probability")
SWEEP_MODELS = ("mdp", "pomdp")


@dataclass(frozen=True)
class SweepResult:
    model_kind: str
    parameter: str
    grid_values: tuple[float, ...]
    manip_counts: tuple[int, ...]
    found: bool
    bracket: tuple[float, float] | None
    threshold: float | None
    note: str

    def to_json(self) -> str:
        payload = {
            "model_kind": self.model_kind,
            "parameter": self.parameter,
            "grid_values": list(self.grid_values),
            "manip_counts": list(self.manip_counts),
            "found": self.found,
            "bracket": list(self.bracket) if self.bracket else None,
            "threshold": self.threshold,
            "note": self.note,
        }
        return json.dumps(payload, indent=2) + "\n"


def _is_manipulative(action_label: str) -> bool:
    return action_label.startswith("M")


def _manip_count(policy) -> int:
    return sum(
        1 for actions in policy.values() if any(map(_is_manipulative, actions))
    )


def _scenario_at(base: Scenario, parameter: str, value: float) -> Scenario:
    if parameter == "manip_cost":
        return base.with_manipulation_cost(-abs(value))
    return base.replace(toggle_probability=value)


def critical_threshold_sweep(
    model_kind: str = "mdp",
    parameter: str = "manip_cost",
    lo: float = 1.0,
    hi: float = 5.0,
    tolerance: float = 1e-4,
    grid_step: float = 0.1,
    tie_tolerance: float = 1e-6,
    base_scenario: Scenario | None = None,
    grid_resolution: int = 101,
) -> SweepResult:
    """Locate where manipulation leaves every optimal-action set.

    Scans the parameter grid, then bisects the first present-to-absent flip
    down to `tolerance`. The returned threshold is the bracket midpoint; when
    the predicate never flips the result reports no threshold in range.
    """
    if model_kind not in SWEEP_MODELS:
        raise ValueError(f"model_kind must be one of {SWEEP_MODELS}")
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(f"parameter must be one of {SWEEP_PARAMETERS}")
    if not lo < hi:
        raise ValueError("need lo < hi")
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    base = base_scenario if base_scenario is not None else Scenario()

    def count_at(value: float) -> int:
        scenario = _scenario_at(base, parameter, value)
        if model_kind == "mdp":
            return _manip_count(mdp_policy(scenario, tie_tolerance))
        pomdp = build_pomdp(scenario)
        grid = belief_grid_value_iteration(pomdp, grid_resolution)
        return _manip_count(policy_from_grid(pomdp, grid, tie_tolerance))

    grid_values = []
    value = lo
    while value < hi - 1e-12:
        grid_values.append(round(value, 12))
        value += grid_step
    grid_values.append(hi)
    counts = [count_at(v) for v in grid_values]

    flip = None
    for i in range(len(grid_values) - 1):
        if counts[i] > 0 and counts[i + 1] == 0:
            flip = i
            break
    if flip is None:
        if all(c > 0 for c in counts):
            note = "no threshold in range: manipulation stays optimal on the whole grid"
        else:
            note = "no threshold in range: manipulation already absent at the low end"
        return SweepResult(
            model_kind,
            parameter,
            tuple(grid_values),
            tuple(counts),
            False,
            None,
            None,
            note,
        )

    present, absent = grid_values[flip], grid_values[flip + 1]
    while absent - present > tolerance:
        mid = 0.5 * (present + absent)
        if count_at(mid) > 0:
            present = mid
        else:
            absent = mid
    return SweepResult(
        model_kind,
        parameter,
        tuple(grid_values),
        tuple(counts),
        True,
        (present, absent),
        0.5 * (present + absent),
        "",
    )
