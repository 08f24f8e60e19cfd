"""Command-line entry point.

    dynoplan run --config exp.yaml [--seed N] [--episodes N] [--out DIR]
    dynoplan gen-demos --config exp.yaml [--count N] [--out DIR]
    dynoplan fit goal DEMOS [--config exp.yaml] [--out DIR]
    dynoplan fit gmm DEMOS [--config exp.yaml] [--out DIR]
    dynoplan regions MODEL DEMOS [--out DIR]

Exit status is 0 on success, 1 for usage or configuration errors and 2 when
a pipeline stage fails. Artifacts written before a failure are kept.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from dynoplan import harness
from dynoplan.config import ExperimentConfig, load_config, with_overrides
from dynoplan.errors import ConfigError, DynoPlanError
from dynoplan.regions import GaussianMixtureRegions
from dynoplan.trajectory import read_trajectories, write_trajectories

log = logging.getLogger("dynoplan")

EXIT_OK, EXIT_USAGE, EXIT_PIPELINE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _config_args(p: argparse.ArgumentParser, required: bool = False):
    p.add_argument("--config", type=Path, required=required, help="experiment config (YAML)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", type=Path, help="output directory (default: the config's output_dir)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dynoplan", description="Model-predictive option planning experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a configured experiment")
    _config_args(run, required=True)
    run.add_argument("--episodes", type=int, help="override the episode count")
    run.add_argument("--jobs", type=int, default=1, help="episodes run concurrently (results unchanged)")

    gen = sub.add_parser("gen-demos", help="write scripted demonstrations")
    _config_args(gen, required=True)
    gen.add_argument("--count", type=int, help="number of demonstrations")

    fit = sub.add_parser("fit", help="fit a goal heuristic or safety regions")
    fit_sub = fit.add_subparsers(dest="model", required=True, parser_class=_Parser)
    for name, text in (("goal", "fit the goal heuristic"), ("gmm", "fit Gaussian-mixture regions")):
        p = fit_sub.add_parser(name, help=text)
        p.add_argument("demos", type=Path, help="demonstrations, one record per line")
        _config_args(p)

    reg = sub.add_parser("regions", help="report fitted regions on labelled states")
    reg.add_argument("model", type=Path, help="fitted regions file")
    reg.add_argument("demos", type=Path, help="labelled (held-out) demonstrations")
    reg.add_argument("--out", type=Path, default=Path("."), help="output directory")
    return parser


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    return with_overrides(cfg, seed=args.seed, episodes=getattr(args, "episodes", None))


def _out(args, cfg: ExperimentConfig) -> Path:
    return args.out if args.out is not None else Path(cfg.output_dir)


def _read_demos(path: Path):
    demos = read_trajectories(path)
    if not demos:
        raise DynoPlanError(f"{path}: no demonstrations")
    return demos


def cmd_run(args) -> int:
    cfg = _load(args)
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    out = _out(args, cfg)
    summary = harness.run_experiment(cfg, out, jobs=args.jobs)
    for key, value in summary.rows():
        print(f"{key}\t{value}")
    return EXIT_OK


def cmd_gen_demos(args) -> int:
    cfg = _load(args)
    if args.count is not None and args.count < 1:
        raise UsageError("--count must be >= 1")
    demos = harness.make_demos(cfg, count=args.count)
    out = _out(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectories(out / "demos.jsonl", demos)
    print(f"wrote {len(demos)} demonstrations to {out / 'demos.jsonl'}")
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _load(args)
    demos = _read_demos(args.demos)
    out = _out(args, cfg)
    if args.model == "goal":
        harness.fit_goal_command(demos, cfg, out)
        print(f"wrote {out / 'goal.json'} and {out / 'goal_report.tsv'}")
    else:
        harness.fit_gmm_command(demos, cfg, out)
        print(f"wrote {out / 'regions.json'} and {out / 'gmm_report.tsv'}")
    return EXIT_OK


def cmd_regions(args) -> int:
    regions = GaussianMixtureRegions.load(args.model)
    demos = _read_demos(args.demos)
    stats = harness.regions_command(regions, demos, args.out)
    print(f"accuracy\t{stats['accuracy']:.6g}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "gen-demos": cmd_gen_demos, "fit": cmd_fit, "regions": cmd_regions}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.verb](args)
    except (UsageError, ConfigError) as exc:
        print(f"dynoplan: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DynoPlanError, OSError, ValueError) as exc:
        log.debug("pipeline failure", exc_info=True)
        print(f"dynoplan: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
