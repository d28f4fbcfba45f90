"""Command line entry point: ``neorl {run,sweep,compare,replay}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from neorl import harness, ovf
from neorl.harness import ExperimentConfig, emit_csv

log = logging.getLogger("neorl")


def _layers(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.replace(" ", "").split(",") if x)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML file with [environment], [agent], [experiment]")
    p.add_argument("--seed", type=int, help="base seed; run i uses seed+i")
    p.add_argument("--runs", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--layers", type=_layers, help="resolutions, e.g. 3,7,23")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: ./out)")
    p.add_argument("--workers", type=int, default=1, help="parallel processes for independent runs")
    p.add_argument("--no-plot", action="store_true", help="skip the PNG figures")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="neorl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one experiment (possibly several seeded runs)")
    _common(p)
    p.add_argument("--mode", choices=harness.MODES)
    p.add_argument("--snapshot", type=Path, help="write the bank of the last run here")

    p = sub.add_parser("sweep", help="mono-resolution agents, one per layer, plus Brownian control")
    _common(p)
    p.add_argument("--no-control", action="store_true", help="skip the Brownian control")

    p = sub.add_parser("compare", help="multi-resolution agent vs its mono-resolution parts")
    _common(p)

    p = sub.add_parser("replay", help="continue an agent from a bank snapshot")
    _common(p)
    p.add_argument("--snapshot", type=Path, required=True)
    p.add_argument("--frozen", action="store_true", help="do not update the bank while replaying")
    p.add_argument("--save-snapshot", type=Path, help="write the bank after the replay")
    return parser


def _config(args) -> ExperimentConfig:
    config = harness.load_config(args.config) if args.config else ExperimentConfig(runs=1)
    return harness.with_overrides(
        config, base_seed=args.seed, runs=args.runs, steps=args.steps, layers=args.layers,
        epsilon=args.epsilon, mode=getattr(args, "mode", None))


def _write_experiment(config: ExperimentConfig, records, curve, out: Path) -> None:
    label = config.label()
    emit_csv(records, out / f"{label}_runs.csv")
    emit_csv(curve, out / f"{label}_mean.csv")
    emit_csv(curve.cumulative(), out / f"{label}_accumulated.csv")


def _summary_line(curve: harness.AggregateCurve, tail: int) -> str:
    tail = min(tail, len(curve))
    final = float(np.sum(curve.mean))
    rate = float(np.mean(curve.mean[-tail:]))
    return f"{curve.label:>16s}  final={final:10.2f}  rate_last{tail}={rate:.5f}"


def cmd_run(args) -> int:
    config = _config(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    if args.snapshot and config.mode == "neorl":
        records = []
        bank = None
        for i in range(config.runs):
            rec, bank = harness.run_agent(config, config.base_seed + i)
            records.append(rec)
        curve = harness.aggregate(records, label=config.label())
        ovf.save(bank, args.snapshot)
    else:
        records, curve = harness.run_experiment(config, workers=args.workers)
    _write_experiment(config, records, curve, out)
    if not args.no_plot:
        from neorl.plotting import plot_accumulated
        plot_accumulated([curve], out / f"{config.label()}_accumulated.png")
    print(_summary_line(curve, 10_000))
    return 0


def cmd_sweep(args) -> int:
    base = _config(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    curves = []
    configs = [replace(base, layers=(n,), mode="neorl") for n in base.layers]
    if not args.no_control:
        configs.append(replace(base, mode="brownian", epsilon=1.0))
    for config in configs:
        records, curve = harness.run_experiment(config, workers=args.workers)
        _write_experiment(config, records, curve, out)
        curves.append(curve)
        print(_summary_line(curve, 10_000), flush=True)
    if not args.no_plot:
        from neorl.plotting import plot_accumulated
        plot_accumulated(curves, out / "sweep_accumulated.png", title="mono-resolution agents")
    return 0


def cmd_compare(args) -> int:
    base = _config(args)
    if len(base.layers) < 2:
        raise SystemExit("compare needs at least two layers, e.g. --layers 3,7,23")
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    window = base.smoothing_window
    mono = []
    for n in base.layers:
        config = replace(base, layers=(n,), mode="neorl")
        records, curve = harness.run_experiment(config, workers=args.workers)
        _write_experiment(config, records, curve, out)
        emit_csv(curve.smoothed(window), out / f"{config.label()}_smoothed.csv")
        mono.append(curve)
    multi_cfg = replace(base, mode="neorl")
    records, multi = harness.run_experiment(multi_cfg, workers=args.workers)
    _write_experiment(multi_cfg, records, multi, out)
    emit_csv(multi.smoothed(window), out / f"{multi_cfg.label()}_smoothed.csv")
    parts = harness.sum_of_parts(mono)
    emit_csv(parts, out / "sum_of_parts_mean.csv")
    emit_csv(parts.smoothed(window), out / "sum_of_parts_smoothed.csv")

    tail = min(10_000, base.steps)
    for curve in [*mono, parts, multi]:
        print(_summary_line(curve, tail))
    for curve in mono:
        denom = float(np.mean(curve.mean[-tail:]))
        if denom > 0:
            print(f"{'ratio':>16s}  {multi.label}/{curve.label} = {float(np.mean(multi.mean[-tail:])) / denom:.3f}")
    if not args.no_plot:
        from neorl.plotting import plot_reward_rate
        plot_reward_rate([*mono, multi, parts], out / "compare_reward.png", window=window,
                         title="multi-resolution vs mono-resolution agents")
    return 0


def cmd_replay(args) -> int:
    bank = ovf.load(args.snapshot)
    config = replace(_config(args), layers=bank.stack.resolutions, learner=bank.params, mode="neorl")
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(config.runs):
        rec, bank = harness.run_agent(config, config.base_seed + i, bank=bank, learn=not args.frozen)
        records.append(rec)
    curve = harness.aggregate(records, label=config.label())
    label = f"replay_{config.label()}"
    emit_csv(records, out / f"{label}_runs.csv")
    emit_csv(curve, out / f"{label}_mean.csv")
    if args.save_snapshot:
        ovf.save(bank, args.save_snapshot)
    if not args.no_plot:
        from neorl.plotting import plot_accumulated
        plot_accumulated([replace(curve, label=label)], out / f"{label}_accumulated.png")
    print(_summary_line(curve, 10_000))
    return 0


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "compare": cmd_compare, "replay": cmd_replay}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValueError, harness.HarnessIOError) as exc:
        print(f"neorl: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
