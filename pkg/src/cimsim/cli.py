"""Command-line interface.

Usage: ``cimsim <subcommand> --config PATH --seed N [--out DIR]``.

Exit codes: 0 success, 2 configuration error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config
from .pipeline import STAGES, run_pipeline


def _base_parser(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", default=None, help="experiment config file")
    sub.add_argument("--seed", type=int, default=None, help="override run.seed")
    sub.add_argument("--out", default=None, help="override run.output_dir")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cimsim", description=__doc__)
    subs = p.add_subparsers(dest="command", required=True)

    for name in STAGES:
        sub = subs.add_parser(name, help=f"run the {name} stage")
        _base_parser(sub)
        if name == "calibrate":
            sub.add_argument("--scope", choices=("global", "module", "adc"), default=None)
            sub.add_argument("--vectors", type=int, default=None)
        if name == "extract-eb":
            sub.add_argument("--scope", choices=("module", "adc"), default=None)
            sub.add_argument("--vectors", type=int, default=None, choices=(256, 512))

    pipe = subs.add_parser("pipeline", help="run the configured stage list")
    _base_parser(pipe)

    plot = subs.add_parser("emit-plot", help="emit plot CSV + PNG from an artifact")
    plot.add_argument("artifact", help="stage artifact (CSV or JSON)")
    plot.add_argument("--kind", required=True, choices=("heatmap", "histogram", "trajectory", "ebmap"))
    plot.add_argument("--out", default=".", help="output directory")
    plot.add_argument("--stem", default=None, help="output file stem")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "emit-plot":
        from .plotdata import PlotKindError, emit_plotdata

        try:
            csv_path, png_path = emit_plotdata(args.artifact, args.kind, args.out, args.stem)
        except (PlotKindError, FileNotFoundError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print(csv_path)
        print(png_path)
        return 0

    overrides: dict = {}
    if args.seed is not None:
        overrides.setdefault("run", {})["seed"] = args.seed
    if args.out is not None:
        overrides.setdefault("run", {})["output_dir"] = args.out
    if getattr(args, "scope", None):
        overrides.setdefault("run", {})["scope"] = args.scope
    if getattr(args, "vectors", None):
        overrides.setdefault("run", {})["vectors"] = args.vectors

    try:
        cfg = load_config(args.config, overrides)
        if args.command != "pipeline":
            cfg.pipeline = (args.command,)
        run_pipeline(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # stage boundary: any failure is exit code 3
        print(f"stage failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
