"""Command-line entry point: ``cfbench make-data|train|eval|report --config C``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from cfbench.errors import CFBenchError, ConfigError
from cfbench.harness import pipeline
from cfbench.harness.config import AXES, load_config
from cfbench.harness.report import emit_report
from cfbench.metrics import ModelMetrics

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cfbench", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="benchmark config JSON")
        sp.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="dotted-path override, repeatable")
        return sp

    add("make-data", "render the phantom dataset")
    sp = add("train", "train one model")
    sp.add_argument("--family", required=True, help="model name from the config")
    sp = add("eval", "evaluate one model on one axis")
    sp.add_argument("--family", required=True)
    sp.add_argument("--axis", required=True, choices=AXES)
    sp = add("report", "run every stage (cached) and write report files")
    sp.add_argument("--family", action="append", default=None,
                    help="restrict to these models (repeatable)")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "make-data":
            ws = pipeline.prepare_data(cfg)
            print(json.dumps({"train": len(ws.train), "test": len(ws.test),
                              "cohort_b": len(ws.cohort_b)}))
            return EXIT_OK
        if args.command in ("train", "eval"):
            entry = cfg.entry(args.family)
            ws = pipeline.prepare_data(cfg)
            ckpt = pipeline.train_stage(cfg, ws, entry)
            if args.command == "train":
                print(json.dumps({"model": entry.name, "weights_sha256": ckpt.weights_hash,
                                  "final": ckpt.summary()}))
                return EXIT_OK
            metrics = ModelMetrics()
            pipeline.eval_axis(cfg, ws, entry, ckpt, args.axis, metrics)
            print(json.dumps(metrics.to_json(), indent=2, sort_keys=True))
            return EXIT_OK
        report = pipeline.run_benchmark(cfg, families=args.family)
        files = emit_report(report, Path(cfg.output_dir) / "report")
        print(json.dumps({k: str(v) for k, v in files.items()}))
        if report.errors:
            for k, v in sorted(report.errors.items()):
                print(f"stage failed: {k}: {v}", file=sys.stderr)
            return EXIT_STAGE
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CFBenchError, ValueError, OSError) as exc:
        print(f"stage failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
