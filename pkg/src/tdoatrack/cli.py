"""Command-line front end.

Subcommands:
  simulate   one round per requested filter; writes trajectory and
             per-step estimate CSV traces
  compare    Monte Carlo experiment for all four filters on paired seeds;
             prints and writes a (filter, mean, variance) table
  sweep      repeat an experiment while varying one parameter; writes a
             long-format CSV plus a summary table
  validate   parse a scenario, check every invariant, echo the resolved
             configuration

Exit codes: 0 success, 1 configuration error, 2 runtime degeneracy when
``--strict`` is set. Output files embed the config hash and master seed
in header comments and are byte-identical across reruns; an optional
timestamp header is off by default. ``TDOATRACK_OUT`` sets the default
output directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .filters import FILTER_KINDS
from .harness import (
    RmseReport,
    RoundResult,
    SWEEP_PARAMETERS,
    derive_round_seed,
    run_experiment,
    run_round,
    sweep,
)
from .mobility import generate_trajectory
from .scenario import (
    ScenarioConfig,
    ScenarioError,
    apply_overrides,
    config_hash,
    load_scenario,
    resolved_items,
)

_ENV_OUT = "TDOATRACK_OUT"


def _default_out() -> str:
    return os.environ.get(_ENV_OUT, "tdoatrack-out")


def _add_common(parser: argparse.ArgumentParser, *, rounds: bool = True) -> None:
    parser.add_argument("scenario", help="scenario file path or bundled scenario name")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a scenario key (repeatable)")
    parser.add_argument("--seed", type=int, default=None, help="override the master seed")
    if rounds:
        parser.add_argument("--rounds", type=int, default=None,
                            help="override the number of Monte Carlo rounds")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--strict", action="store_true",
                        help="exit with status 2 if any filter update degenerates")
    parser.add_argument("--timestamp", action="store_true",
                        help="include a timestamp header in output files")
    parser.add_argument("--parallel", type=int, default=1, metavar="K",
                        help="run rounds across K worker processes")


def _load_config(args, *, with_rounds: bool = True) -> ScenarioConfig:
    config = load_scenario(args.scenario)
    if args.overrides:
        config = apply_overrides(config, args.overrides)
    replacements = {}
    if args.seed is not None:
        replacements["seed"] = args.seed
    if with_rounds and getattr(args, "rounds", None) is not None:
        replacements["rounds"] = args.rounds
    if replacements:
        config = dataclasses.replace(config, **replacements)
        config.validate()
    else:
        config.validate()
    return config


def _header_lines(config: ScenarioConfig, args, extra: dict | None = None) -> list[str]:
    lines = [
        f"# config_hash: {config_hash(config)}",
        f"# seed: {config.seed}",
    ]
    for item in args.overrides:
        lines.append(f"# override: {item}")
    if extra:
        lines.extend(f"# {key}: {value}" for key, value in extra.items())
    if args.timestamp:
        lines.append(f"# timestamp: {time.strftime('%Y-%m-%dT%H:%M:%S%z')}")
    return lines


def _out_dir(args) -> Path:
    out = Path(args.out if args.out is not None else _default_out())
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fmt_opt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    return repr(float(value))


def _write_trace(path: Path, header: list[str], result: RoundResult) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for line in header:
            f.write(line + "\n")
        f.write("step,true_x,true_y,est_x,est_y,err,n_eff,resampled\n")
        for rec in result.trace:
            f.write(
                f"{rec.step},{rec.true_x!r},{rec.true_y!r},{rec.est_x!r},"
                f"{rec.est_y!r},{rec.err!r},{_fmt_opt(rec.n_eff)},"
                f"{_fmt_opt(rec.resampled)}\n"
            )


def _write_rounds(path: Path, header: list[str], report: RmseReport,
                  master_seed: int) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for line in header:
            f.write(line + "\n")
        f.write("round,seed,rmse\n")
        for idx, rmse in enumerate(report.rmse_per_round):
            f.write(f"{idx},{derive_round_seed(master_seed, idx)},{rmse!r}\n")


def _comparison_table(reports: list[RmseReport]) -> str:
    lines = [
        f"{'filter':<10}{'mean':>12}{'variance':>12}{'rounds':>8}"
        f"{'ci95_low':>12}{'ci95_high':>12}"
    ]
    for rep in reports:
        low, high = rep.confidence_interval()
        flag = " (single round)" if rep.degenerate_variance else ""
        lines.append(
            f"{rep.filter_kind:<10}{rep.mean:>12.4f}{rep.variance:>12.4f}"
            f"{rep.rounds:>8}{low:>12.4f}{high:>12.4f}{flag}"
        )
    return "\n".join(lines)


def cmd_simulate(args) -> int:
    config = _load_config(args, with_rounds=False)
    kinds = args.filter if args.filter else [config.filter_kind]
    out = _out_dir(args)
    round_seed = derive_round_seed(config.seed, 0)

    anchors = config.build_anchors()
    mobility = config.build_mobility(anchors)
    trajectory_rng = np.random.default_rng(
        np.random.SeedSequence(round_seed).spawn(3)[0]
    )
    trajectory = generate_trajectory(mobility, trajectory_rng)
    traj_path = out / "trajectory.csv"
    with open(traj_path, "w", encoding="utf-8") as f:
        for line in _header_lines(config, args, {"round_seed": round_seed}):
            f.write(line + "\n")
        trajectory.to_csv(f)

    degenerate = 0
    written = [traj_path]
    for kind in kinds:
        result = run_round(config, kind, round_seed)
        degenerate += result.degenerate_steps
        path = out / f"estimates_{kind}.csv"
        _write_trace(
            path,
            _header_lines(config, args, {"filter": kind, "round_seed": round_seed}),
            result,
        )
        written.append(path)
    for path in written:
        print(f"wrote {path}")
    if args.strict and degenerate:
        print(f"strict mode: {degenerate} degenerate filter update(s)", file=sys.stderr)
        return 2
    return 0


def cmd_compare(args) -> int:
    config = _load_config(args)
    out = _out_dir(args)
    reports = [
        run_experiment(config, kind, parallelism=args.parallel)
        for kind in FILTER_KINDS
    ]
    table = _comparison_table(reports)
    print(table)

    header = _header_lines(config, args, {"rounds": config.rounds})
    csv_path = out / "comparison.csv"
    with open(csv_path, "w", encoding="utf-8") as f:
        for line in header:
            f.write(line + "\n")
        f.write("filter,mean,variance,rounds,ci95_low,ci95_high\n")
        for rep in reports:
            low, high = rep.confidence_interval()
            f.write(
                f"{rep.filter_kind},{rep.mean!r},{rep.variance!r},{rep.rounds},"
                f"{low!r},{high!r}\n"
            )
    json_path = out / "comparison.json"
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump({rep.filter_kind: rep.to_dict() for rep in reports}, f, indent=2,
                  sort_keys=True)
        f.write("\n")
    for rep in reports:
        _write_rounds(
            out / f"rounds_{rep.filter_kind}.csv",
            _header_lines(config, args, {"filter": rep.filter_kind}),
            rep,
            config.seed,
        )
    print(f"wrote {csv_path}")
    print(f"wrote {json_path}")
    degenerate = sum(rep.degenerate_steps for rep in reports)
    if args.strict and degenerate:
        print(f"strict mode: {degenerate} degenerate filter update(s)", file=sys.stderr)
        return 2
    return 0


def cmd_sweep(args) -> int:
    config = _load_config(args)
    if not args.values.strip():
        print("error: --values list is empty", file=sys.stderr)
        return 1
    try:
        values = [int(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        print(f"error: bad --values entry: {exc}", file=sys.stderr)
        return 1
    if not values:
        print("error: --values list is empty", file=sys.stderr)
        return 1
    out = _out_dir(args)
    reports = sweep(config, args.param, values, parallelism=args.parallel)

    lines = [f"{'value':>8}{'mean':>12}{'variance':>12}{'rounds':>8}"]
    for value, rep in zip(values, reports):
        lines.append(f"{value:>8}{rep.mean:>12.4f}{rep.variance:>12.4f}{rep.rounds:>8}")
    print("\n".join(lines))

    header = _header_lines(config, args, {"parameter": args.param})
    long_path = out / f"sweep_{args.param}.csv"
    with open(long_path, "w", encoding="utf-8") as f:
        for line in header:
            f.write(line + "\n")
        f.write("parameter_value,round,rmse\n")
        for value, rep in zip(values, reports):
            for idx, rmse in enumerate(rep.rmse_per_round):
                f.write(f"{value},{idx},{rmse!r}\n")
    summary_path = out / f"sweep_{args.param}_summary.csv"
    with open(summary_path, "w", encoding="utf-8") as f:
        for line in header:
            f.write(line + "\n")
        f.write("parameter_value,mean,variance,rounds\n")
        for value, rep in zip(values, reports):
            f.write(f"{value},{rep.mean!r},{rep.variance!r},{rep.rounds}\n")
    print(f"wrote {long_path}")
    print(f"wrote {summary_path}")
    degenerate = sum(rep.degenerate_steps for rep in reports)
    if args.strict and degenerate:
        print(f"strict mode: {degenerate} degenerate filter update(s)", file=sys.stderr)
        return 2
    return 0


def cmd_validate(args) -> int:
    config = _load_config(args)
    print(f"scenario OK (config_hash {config_hash(config)})")
    for key, value in resolved_items(config):
        print(f"{key} = {value}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tdoatrack",
        description="Simulate and benchmark moving-node TDOA localization filters.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run one round and write trace files")
    _add_common(p_sim, rounds=False)
    p_sim.add_argument("--filter", action="append", choices=FILTER_KINDS,
                       help="filter kind to trace (repeatable; default: scenario's)")
    p_sim.set_defaults(func=cmd_simulate)

    p_cmp = sub.add_parser("compare", help="Monte Carlo comparison of all filters")
    _add_common(p_cmp)
    p_cmp.set_defaults(func=cmd_compare)

    p_swp = sub.add_parser("sweep", help="vary one parameter across an experiment")
    _add_common(p_swp)
    p_swp.add_argument("--param", required=True,
                       help=f"parameter to vary: {', '.join(sorted(SWEEP_PARAMETERS))}")
    p_swp.add_argument("--values", required=True,
                       help="comma-separated list of integer values")
    p_swp.set_defaults(func=cmd_sweep)

    p_val = sub.add_parser("validate", help="check a scenario and echo the resolved config")
    p_val.add_argument("scenario", help="scenario file path or bundled scenario name")
    p_val.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE")
    p_val.add_argument("--seed", type=int, default=None)
    p_val.add_argument("--rounds", type=int, default=None)
    p_val.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
