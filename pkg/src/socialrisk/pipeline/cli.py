"""Command-line front end.

One subcommand per stage plus `pipeline` (everything in order) and
`compare-feature-sets`. Exit codes: 0 success, 2 configuration problems
(bad YAML, unknown keys, bad values), 3 stage failures (missing or
mismatched artifacts, degenerate data).
"""

import argparse
import sys
import time

from .. import __version__
from ..errors import ConfigError, SocialriskError
from . import stages
from .config import load_config
from .report import write_report

PIPELINE_ORDER = (
    "generate",
    "link",
    "preprocess",
    "sample",
    "train",
    "evaluate",
    "explain",
    "causal",
    "fairness",
    "mitigate",
)


def _run_stage(name, config, out_dir, in_dir):
    runner = {
        "generate": lambda: stages.run_generate(config, out_dir),
        "link": lambda: stages.run_link(config, out_dir, in_dir),
        "preprocess": lambda: stages.run_preprocess(config, out_dir, in_dir),
        "sample": lambda: stages.run_sample(config, out_dir, in_dir),
        "train": lambda: stages.run_train(config, out_dir, in_dir),
        "evaluate": lambda: stages.run_evaluate(config, out_dir, in_dir),
        "explain": lambda: stages.run_explain(config, out_dir, in_dir),
        "causal": lambda: stages.run_causal(config, out_dir, in_dir),
        "fairness": lambda: stages.run_fairness(config, out_dir, in_dir),
        "mitigate": lambda: stages.run_mitigate(config, out_dir, in_dir),
    }[name]
    start = time.perf_counter()
    files = runner()
    elapsed = time.perf_counter() - start
    print(f"stage {name}: ok ({elapsed:.2f}s, {len(files)} file(s)) -> {out_dir}")
    return elapsed


def build_parser():
    parser = argparse.ArgumentParser(
        prog="socialrisk",
        description="Synthetic-cohort risk modeling pipeline",
    )
    parser.add_argument("--version", action="version", version=f"socialrisk {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = list(PIPELINE_ORDER) + ["report", "pipeline", "compare-feature-sets"]
    for name in commands:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML configuration file")
        p.add_argument("--out", help="output directory (overrides out_dir in the config)")
        p.add_argument(
            "--stage-input",
            help="directory holding upstream stage artifacts (defaults to --out)",
        )
        p.add_argument("--seed", type=int, help="override the global seed")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, seed_override=args.seed)
        out_dir = args.out or config.out_dir
        if not out_dir:
            raise ConfigError(
                "no output directory: pass --out or set out_dir in the config"
            )
        in_dir = args.stage_input or out_dir

        if args.command == "pipeline":
            timings = {}
            for name in PIPELINE_ORDER:
                timings[name] = _run_stage(name, config, out_dir, out_dir)
            start = time.perf_counter()
            report_path, report = write_report(config, out_dir, out_dir, timings=timings)
            print(f"stage report: ok ({time.perf_counter() - start:.2f}s)")
            print(f"report: {report_path}")
            print(f"results hash: {report['results_hash']}")
        elif args.command == "report":
            report_path, report = write_report(config, out_dir, in_dir)
            print(f"report: {report_path}")
            print(f"results hash: {report['results_hash']}")
        elif args.command == "compare-feature-sets":
            aurocs = stages.compare_feature_sets(config, out_dir, in_dir)
            for (fs, model), value in sorted(aurocs.items()):
                print(f"{fs:>12s}  {model:>6s}  AUROC {value:.4f}")
        else:
            _run_stage(args.command, config, out_dir, in_dir)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SocialriskError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
