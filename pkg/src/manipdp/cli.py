"""Command-line entry point.

Every subcommand writes one deterministic document to stdout (or --out):
markdown by default, CSV or JSON on request. Domain failures exit 1 with a
one-line diagnostic on stderr; usage failures exit 2.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from manipdp import __version__
from manipdp import backtest as bt
from manipdp import experiments as ex
from manipdp.grid import Scenario, build_mdp, build_pomdp
from manipdp.mdp import (
    extract_policy_set,
    greedy_trajectory,
    q_values,
    value_iteration,
)
from manipdp.pomdp import (
    alpha_value_iteration,
    canonical_belief,
    policy_at_observation,
    value_of_belief,
)

FORMATS = ("markdown", "csv", "json")


class CliError(Exception):
    """Domain-level failure surfaced as a one-line diagnostic."""


def _resolve_scenario(arg: str | None, default_preset: str) -> Scenario:
    if arg is None:
        return ex.preset_scenario(default_preset)
    if arg in ex.PRESETS:
        return ex.preset_scenario(arg)
    path = Path(arg)
    if path.exists():
        return Scenario.from_file(path)
    raise CliError(
        f"scenario {arg!r} is neither a preset ({', '.join(ex.PRESETS)}) "
        "nor a readable file"
    )


def _emit(table, fmt: str) -> str:
    if fmt == "markdown":
        return table.to_markdown()
    if fmt == "csv":
        return table.to_csv()
    return table.to_json()


def _cmd_solve_mdp(args) -> str:
    scenario = _resolve_scenario(args.scenario, "mdp_baseline")
    mdp = build_mdp(scenario)
    values = value_iteration(mdp)
    policy = extract_policy_set(mdp, q_values(mdp, values), args.tie_tolerance)
    rows = tuple(
        (label, float(values[mdp.state_index(label)]), "|".join(policy[label]))
        for label in mdp.state_labels
        if not mdp.terminal[mdp.state_index(label)]
    )
    table = ex.SummaryTable(("state", "value", "optimal_actions"), rows)
    return _emit(table, args.format)


def _cmd_solve_pomdp(args) -> str:
    scenario = _resolve_scenario(args.scenario, "pomdp_baseline")
    pomdp = build_pomdp(scenario)
    alphas = alpha_value_iteration(pomdp)
    policy = policy_at_observation(pomdp, alphas, args.tie_tolerance)
    rows = tuple(
        (
            label,
            value_of_belief(alphas, canonical_belief(pomdp, label)),
            "|".join(policy[label]),
        )
        for label in policy
    )
    table = ex.SummaryTable(("observation", "value", "optimal_actions"), rows)
    return _emit(table, args.format)


def _cmd_table1(args) -> str:
    if args.prices:
        series = [bt.load_price_csv(p) for p in args.prices]
    else:
        series = None
    return _emit(ex.run_table1(series), args.format)


def _cmd_table2(args) -> str:
    return _emit(ex.run_table2(args.tie_tolerance), args.format)


def _cmd_table3(args) -> str:
    return _emit(ex.run_table3(args.tie_tolerance), args.format)


def _parse_range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(part) for part in text.split(":"))
    except ValueError:
        raise CliError(f"--range must look like lo:hi, got {text!r}") from None
    return lo, hi


def _cmd_sweep(args) -> str:
    lo, hi = _parse_range(args.range)
    result = ex.critical_threshold_sweep(
        model_kind=args.model,
        parameter=args.param,
        lo=lo,
        hi=hi,
        tolerance=args.tolerance,
        tie_tolerance=args.tie_tolerance,
    )
    if args.format == "json":
        return result.to_json()
    grid = ex.SummaryTable(
        ("parameter_value", "manip_count"),
        tuple(
            (float(v), str(c)) for v, c in zip(result.grid_values, result.manip_counts)
        ),
    )
    summary_rows = [
        ("model_kind", result.model_kind),
        ("parameter", result.parameter),
        ("found", str(result.found)),
    ]
    if result.found:
        summary_rows += [
            ("bracket_lo", float(result.bracket[0])),
            ("bracket_hi", float(result.bracket[1])),
            ("threshold", float(result.threshold)),
        ]
    else:
        summary_rows.append(("note", result.note))
    summary = ex.SummaryTable(("field", "value"), tuple(summary_rows))
    if args.format == "csv":
        return summary.to_csv()
    return grid.to_markdown() + "\n" + summary.to_markdown()


def _cmd_backtest(args) -> str:
    if args.prices:
        series = bt.load_price_csv(args.prices)
    else:
        series = ex.bundled_price_series()
    rows = []
    reports = []
    for spec in bt.default_specs().values():
        report = bt.run_strategy(series, spec, bt.default_portfolio(series))
        reports.append(report)
        rows.append(
            (
                report.strategy,
                report.growth,
                report.total_fees,
                report.net_profit,
                report.profit_pct,
            )
        )
    if args.format == "json":
        import json

        return (
            json.dumps([r.to_dict() for r in reports], indent=2) + "\n"
        )
    table = ex.SummaryTable(
        ("strategy", "growth", "total_fees", "net_profit", "profit_pct"), tuple(rows)
    )
    return _emit(table, args.format)


def _cmd_trajectory(args) -> str:
    scenario = _resolve_scenario(args.scenario, "mdp_baseline")
    mdp = build_mdp(scenario)
    values = value_iteration(mdp)
    policy = extract_policy_set(mdp, q_values(mdp, values), args.tie_tolerance)
    if args.start not in mdp.state_labels:
        raise CliError(f"unknown start state {args.start!r}")
    try:
        trajectory = greedy_trajectory(mdp, policy, args.start)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    rows = []
    for step, action in enumerate(trajectory.actions):
        rows.append((str(step), trajectory.states[step], action, ""))
    if trajectory.reached_terminal:
        status = f"terminal in {trajectory.steps} steps"
    else:
        status = "cycle: " + "->".join(trajectory.cycle)
    rows.append((str(trajectory.steps), trajectory.states[-1], "", status))
    table = ex.SummaryTable(("step", "state", "action", "status"), tuple(rows))
    return _emit(table, args.format)


_HANDLERS = {
    "solve-mdp": _cmd_solve_mdp,
    "solve-pomdp": _cmd_solve_pomdp,
    "table1": _cmd_table1,
    "table2": _cmd_table2,
    "table3": _cmd_table3,
    "sweep": _cmd_sweep,
    "backtest": _cmd_backtest,
    "trajectory": _cmd_trajectory,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="manipdp",
        description="Growth-grid manipulation models: solvers, tables, sweeps, backtests.",
    )
    parser.add_argument("--version", action="version", version=f"manipdp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        p.add_argument(
            "--format", choices=FORMATS, default="markdown", help="output format"
        )
        p.add_argument("--out", default=None, help="write output to this path")
        p.add_argument("--tie-tolerance", type=float, default=1e-6, dest="tie_tolerance")
        p.add_argument(
            "--seed", type=int, default=0, help="reserved for stochastic rollouts"
        )
        if scenario:
            p.add_argument(
                "--scenario",
                default=None,
                help="preset name or scenario JSON file (partial overrides allowed)",
            )

    common(sub.add_parser("solve-mdp", help="solve one spoofing-model scenario"))
    common(sub.add_parser("solve-pomdp", help="solve one pinging-model scenario"))

    p1 = sub.add_parser("table1", help="strategy profitability summary")
    common(p1, scenario=False)
    p1.add_argument("--prices", action="append", default=None, help="price CSV path")

    common(sub.add_parser("table2", help="spoofing-model policy table"), scenario=False)
    common(sub.add_parser("table3", help="pinging-model policy table"), scenario=False)

    ps = sub.add_parser("sweep", help="locate the critical manipulation threshold")
    common(ps, scenario=False)
    ps.add_argument("--model", choices=ex.SWEEP_MODELS, default="mdp")
    ps.add_argument("--param", choices=ex.SWEEP_PARAMETERS, default="manip_cost")
    ps.add_argument("--range", default="1:5", help="lo:hi parameter interval")
    ps.add_argument("--tolerance", type=float, default=1e-4, help="bracket width")

    pb = sub.add_parser("backtest", help="run the three strategies on a price series")
    common(pb, scenario=False)
    pb.add_argument("--prices", default=None, help="price CSV path (default: bundled)")

    pt = sub.add_parser("trajectory", help="greedy rollout from a start state")
    common(pt)
    pt.add_argument("--start", required=True, help="start state label, e.g. x2")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        output = _HANDLERS[args.command](args)
    except (CliError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.out:
        try:
            Path(args.out).write_text(output, encoding="utf-8")
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
    else:
        sys.stdout.write(output)
    return 0


if __name__ == "__main__":
    sys.exit(main())
