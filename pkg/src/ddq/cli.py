"""``ddq`` command line: run one experiment, write its CSV and a JSON sidecar.

Exit codes: 0 success, 1 experiment failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from . import config as cfgmod
from .simulator import experiments as ex

COMMANDS = ("gradient-demo", "query-sweep", "threshold-sweep", "recall", "train-toy", "eval")
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunConfig:
    command: str
    output: Path
    seeds: List[int]
    config: Dict = field(repr=False, default_factory=dict)
    config_path: Optional[Path] = None
    overrides: List[str] = field(default_factory=list)

    @property
    def sidecar(self) -> Path:
        side = self.output.with_suffix(".json")
        return side if side != self.output else self.output.with_name(self.output.name + ".config.json")


def parse_seeds(text: str) -> List[int]:
    """``"0-9"``, ``"1,5,7"`` or a mix such as ``"0-3,10"``."""
    seeds = []
    try:
        for part in text.split(","):
            part = part.strip()
            lo, dash, hi = part.partition("-")
            if dash and lo:
                a, b = int(lo), int(hi)
                if b < a:
                    raise ValueError
                seeds.extend(range(a, b + 1))
            else:
                seeds.append(int(part))
    except ValueError:
        raise UsageError(f"malformed seed list '{text}'") from None
    if not seeds:
        raise UsageError("seed list is empty")
    return seeds


def _build_parser():
    p = _Parser(prog="ddq", description="Dense distinct query experiments on a synthetic crowd simulator.")
    p.add_argument("command", help=f"one of: {', '.join(COMMANDS)}")
    p.add_argument("--config", type=Path, help="JSON config file (a previous sidecar works too)")
    p.add_argument("--preset", default=None, help=f"built-in config: {', '.join(cfgmod.PRESETS)}")
    p.add_argument("--out", type=Path, help="CSV output path (default: <command>.csv)")
    p.add_argument("--seeds", help="seed list, e.g. 0-9 or 1,4,7 (overrides the config)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value by dotted key; repeatable")
    return p


def parse_args(argv) -> RunConfig:
    """Validated RunConfig; raises UsageError naming the offending token."""
    args = _build_parser().parse_args(list(argv))
    if args.command not in COMMANDS:
        raise UsageError(f"unknown command '{args.command}' (choose from {', '.join(COMMANDS)})")
    if args.config is not None and args.preset is not None:
        raise UsageError("--config and --preset are mutually exclusive")
    try:
        if args.config is not None:
            if not args.config.is_file():
                raise UsageError(f"config file not found: {args.config}")
            cfg = cfgmod.load(args.config)
        else:
            cfg = cfgmod.preset(args.preset or "crowd")
        cfg = cfgmod.apply_overrides(cfg, args.overrides)
    except cfgmod.ConfigError as e:
        raise UsageError(str(e)) from None
    if args.seeds is not None:
        cfg["seeds"] = parse_seeds(args.seeds)
    scene_file = cfg["eval"]["scene_file"]
    if args.command == "eval" and scene_file and not Path(scene_file).is_file():
        raise UsageError(f"scene file not found: {scene_file}")
    out = args.out if args.out is not None else Path(f"{args.command}.csv")
    return RunConfig(args.command, out, list(cfg["seeds"]), cfg, args.config, list(args.overrides))


def _thresh(v):
    return ex.parse_threshold(v)


def build_report(rc: RunConfig) -> ex.ExperimentReport:
    cfg = rc.config
    scene = cfgmod.scene_config(cfg)
    noise = cfgmod.noise_model(cfg)
    pyr = cfgmod.pyramid_config(cfg)
    train = cfgmod.train_config(cfg)
    cost = cfgmod.cost_weights(cfg)
    dqs, topk = _thresh(cfg["dqs"]["thresh"]), cfg["dqs"]["topk"]
    seeds = rc.seeds
    if rc.command == "gradient-demo":
        return ex.run_gradient_demo(cfg["gradient"]["p_grid"])
    if rc.command == "query-sweep":
        return ex.run_query_sweep(scene, seeds, cfg["sweep"]["query_counts"], dqs, train, noise, pyr, cost)
    if rc.command == "threshold-sweep":
        return ex.run_threshold_sweep(scene, seeds, cfg["sweep"]["thresholds"], topk, train, noise, pyr, cost)
    if rc.command == "recall":
        return ex.run_recall_study(scene, seeds, dqs, topk, cfg["recall"]["sparse_n"], cfg["recall"]["ks"],
                                   train.n_scenes, noise, pyr)
    if rc.command == "train-toy":
        return ex.run_toy_training(scene, seeds, cfg["train"]["with_dqs"], dqs, train, noise, pyr, cost)
    return ex.run_eval(scene, seeds, dqs, topk, cfg["recall"]["ks"], train.n_scenes, noise, pyr,
                       cfg["eval"]["scene_file"])


def run(rc: RunConfig) -> int:
    try:
        report = build_report(rc)
    except Exception as e:  # surfaced, never swallowed
        print(f"ddq: {rc.command} failed: {type(e).__module__}.{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAIL
    try:
        report.write_csv(rc.output)
        for name, sub in report.extra.items():
            sub.write_csv(rc.output.with_name(f"{rc.output.stem}.{name}.csv"))
        rc.sidecar.write_text(cfgmod.dump(rc.config))
    except OSError as e:
        print(f"ddq: cannot write output: {e}", file=sys.stderr)
        return EXIT_FAIL
    print(f"wrote {rc.output} ({len(report.rows)} rows; {report.notes[0]})")
    return EXIT_OK


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        rc = parse_args(argv)
    except UsageError as e:
        _build_parser().print_usage(sys.stderr)
        print(f"ddq: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    return run(rc)


if __name__ == "__main__":
    sys.exit(main())
