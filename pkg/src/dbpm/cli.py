"""Command line entry point: ``dbpm run | verify | solve-reference | gen-data``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, dump_config, load_config, with_overrides

log = logging.getLogger("dbpm")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.add_argument("--threads", type=int, default=1, help="worker threads across seeds (output is unaffected)")
    p.add_argument("--output-dir", default=None, help="override output.dir")
    p.add_argument("--dry-run", action="store_true", help="validate and print the plan, do not compute")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dbpm", description="Distributed block proximal method simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")
    _common(p)
    p = sub.add_parser("verify", help="run a property suite")
    p.add_argument("suite", choices=("consensus", "prox", "equivalence", "bounds", "all"))
    p.add_argument("--full", action="store_true", help="use the full acceptance sizes")
    _common(p)
    p = sub.add_parser("solve-reference", help="compute or load the cached reference optimum")
    p.add_argument("config")
    _common(p)
    p = sub.add_parser("gen-data", help="write the configured dataset (and network weights) as CSV")
    p.add_argument("config")
    _common(p)
    return parser


def _load(args):
    cfg = load_config(args.config)
    return with_overrides(cfg, seed=args.seed, output_dir=args.output_dir)


def cmd_run(args) -> int:
    from .experiment import plan, run_experiment

    cfg = _load(args)
    if args.dry_run:
        print(dump_config(cfg), end="")
        print(json.dumps({**plan(cfg), "output_dir": cfg.output.dir}, indent=2, sort_keys=True))
        return 0
    result = run_experiment(cfg, threads=args.threads)
    s = result.summary
    print(f"reference f* = {s['reference']['f']:.10g}")
    for B, row in s["blocks"].items():
        print(f"B={B:>3}  rounds={row['rounds']:>7}  plateau cost error={row['plateau_cost_error']:.4e}  "
              f"consensus={row['final_consensus_mean']:.3e}  step-bound violations={row['step_bound_violations']}")
    print(f"artifacts written to {result.output_dir}")
    return 0


def cmd_verify(args) -> int:
    from .verify import SUITES, run_suite

    if args.dry_run:
        names = SUITES if args.suite == "all" else (args.suite,)
        print("would run suites: " + ", ".join(names) + (" (full sizes)" if args.full else ""))
        return 0
    reports = run_suite(args.suite, full=args.full)
    failed = []
    for rep in reports:
        for line in rep.lines():
            print(line)
        failed += [f"{rep.suite}.{c.name}" for c in rep.failed()]
    if failed:
        print("FAILED: " + ", ".join(failed))
        return 1
    print(f"all {sum(len(r.checks) for r in reports)} checks passed")
    return 0


def cmd_solve_reference(args) -> int:
    from .experiment import build_oracle, reference_key, solve_reference

    cfg = _load(args)
    cache = Path(cfg.output.dir) / "reference"
    if args.dry_run:
        print(f"would solve {cfg.problem.kind} with {cfg.metrics.reference_iterations} iterations into {cache}")
        return 0
    oracle = build_oracle(cfg)
    sol = solve_reference(cfg, oracle, cache)
    print(json.dumps({"key": reference_key(cfg, oracle), "f": sol.f, "tolerance": sol.tolerance,
                      "iterations": sol.iterations, "step_scale": sol.step_scale}, indent=2, sort_keys=True))
    return 0


def cmd_gen_data(args) -> int:
    from .experiment import build_dataset, build_network
    from .graph import save_weights_csv
    from .problems import save_dataset_csv

    cfg = _load(args)
    out = Path(cfg.output.dir)
    targets = []
    if cfg.problem.kind == "logistic_l1" and not cfg.problem.dataset:
        targets.append(out / "dataset.csv")
    if not cfg.network.weights_file:
        targets.append(out / "weights.csv")
    if args.dry_run:
        print("would write: " + (", ".join(map(str, targets)) or "nothing (inputs come from files)"))
        return 0
    out.mkdir(parents=True, exist_ok=True)
    if out / "dataset.csv" in targets:
        save_dataset_csv(build_dataset(cfg), out / "dataset.csv")
    if out / "weights.csv" in targets:
        save_weights_csv(build_network(cfg), out / "weights.csv")
    for t in targets:
        print(f"wrote {t}")
    return 0


COMMANDS = {"run": cmd_run, "verify": cmd_verify, "solve-reference": cmd_solve_reference, "gen-data": cmd_gen_data}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
