"""Command line entry point: ``ssclab {train,generate,analyze,report,all}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .harness import STAGES, ConfigError, latest_run_dir, load_config, run_stages, start_run


def parse_cell(text: str) -> tuple[float, int]:
    try:
        parts = dict(p.split("=", 1) for p in text.split(","))
        return float(parts["gamma"]), int(parts["n"])
    except (KeyError, ValueError):
        raise argparse.ArgumentTypeError("expected --cell gamma=<v>,n=<v>") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ssclab", description=__doc__)
    p.add_argument("command", choices=[*STAGES, "all"])
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--out", type=Path, help="base directory for run-NNN folders (default: config 'out')")
    p.add_argument("--run", type=Path, help="existing run directory (generate/analyze/report; default: latest)")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--cell", type=parse_cell, help="only this grid cell, e.g. gamma=0.7,n=4")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.seed = args.seed
    out = args.out or Path(cfg.out)

    if args.command in ("train", "all"):
        run = start_run(cfg, out)
        stages = STAGES if args.command == "all" else ("train",)
    else:
        run = args.run or latest_run_dir(out)
        stages = (args.command,)
    status = run_stages(cfg, run, stages, args.cell)
    print(json.dumps({"run": str(run), "ok": status["ok"]}))
    return 0 if status["ok"] else 1


if __name__ == "__main__":
    sys.exit(main())
