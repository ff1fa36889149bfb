"""Command line front end.

Subcommands mirror the stages of an experiment: generate a dataset, fit the
forecaster, run the coordinated policy, score the fixed baselines, sweep
seeds, and pretty-print a finished run directory. Exit codes: 0 on success,
2 for configuration problems, 3 for runtime failures.
"""

from __future__ import annotations

import argparse
import sys

from .harness import (
    ConfigError,
    load_config,
    render_report,
    run_experiment,
    run_sweep,
    write_baseline_artifacts,
    write_dataset_artifacts,
    write_forecaster_artifacts,
    write_report_artifacts,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="flexcluster",
        description="Coordinated thermal-storage control on synthetic building clusters.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def with_common(name: str, help_text: str, seed: bool = False):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument(
            "--config",
            metavar="TOML",
            help="experiment config file (defaults apply when omitted)",
        )
        sp.add_argument(
            "--out", metavar="DIR", required=True, help="output directory"
        )
        if seed:
            sp.add_argument(
                "--seed", type=int, default=0, help="run seed (default 0)"
            )
        return sp

    with_common("gen-data", "write a synthetic cluster dataset")
    with_common("train-forecaster", "fit the demand forecaster and score it")
    with_common("run", "train the coordination policy over the test epoch", seed=True)
    with_common("baselines", "score the rule-based and no-storage policies")
    sweep = with_common("sweep", "repeat the experiment across seeds")
    sweep.add_argument(
        "--seeds",
        type=int,
        nargs="+",
        default=[0, 1, 2],
        help="run seeds (default: 0 1 2)",
    )
    sweep.add_argument(
        "--workers",
        type=int,
        default=1,
        help="parallel seed cells (default 1, sequential)",
    )

    rep = sub.add_parser("report", help="summarize a finished run directory")
    rep.add_argument("--out", metavar="DIR", required=True, help="run directory")
    return p


def _dispatch(args: argparse.Namespace) -> None:
    if args.command == "report":
        write_report_artifacts(args.out)
        print(render_report(args.out), end="")
        return
    cfg = load_config(args.config)
    if args.command == "gen-data":
        target = write_dataset_artifacts(cfg, args.out)
        print(f"wrote {cfg.dataset.n_buildings} buildings to {target}")
    elif args.command == "train-forecaster":
        summary = write_forecaster_artifacts(cfg, args.out)
        print(
            f"forecaster MAPE {summary['model_mape_pct']:.2f}% "
            f"vs persistence {summary['persistence_mape_pct']:.2f}% "
            f"(artifacts in {args.out})"
        )
    elif args.command == "run":
        result = run_experiment(cfg, args.seed, args.out)
        print(
            f"total cost {result.report.total_cost:.4f} vs RBC=1, "
            f"{result.solver_failures} solver failures, "
            f"{result.runtime_s:.0f}s (artifacts in {args.out})"
        )
    elif args.command == "baselines":
        payload = write_baseline_artifacts(cfg, args.out)
        print(
            f"rbc total {payload['rbc']['total_cost']:.4f}, "
            f"no_storage total {payload['no_storage']['total_cost']:.4f} "
            f"(artifacts in {args.out})"
        )
    elif args.command == "sweep":
        summary = run_sweep(cfg, args.seeds, args.out, workers=args.workers)
        print(
            f"total cost over seeds {summary['seeds']}: "
            f"{summary['mean_total_cost']:.4f} +/- {summary['std_total_cost']:.4f} "
            f"(artifacts in {args.out})"
        )
    else:  # pragma: no cover - argparse enforces the choices
        raise RuntimeError(f"unhandled command {args.command!r}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports, not raises
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
