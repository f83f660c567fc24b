"""Command-line interface: ``run``, ``regret`` and ``selftest``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness, selftest
from .acqopt import METHODS
from .problems import REGISTRY

# CLI flag -> AcqOptimizerConfig field
ACQ_FLAGS = {"mc_samples": "mc_samples", "tau": "tau", "lr": "learning_rate"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixedbo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run BO replications and export results")
    run.add_argument("--config", help="JSON file with ExperimentConfig fields; flags override it")
    run.add_argument("--problem", choices=sorted(REGISTRY))
    run.add_argument("--method", choices=METHODS)
    run.add_argument("--acqf", choices=("ei", "cei", "ucb"))
    run.add_argument("--iters", type=int)
    run.add_argument("--reps", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--n-init", type=int)
    run.add_argument("--mc-samples", type=int)
    run.add_argument("--tau", type=float)
    run.add_argument("--lr", type=float)
    run.add_argument("--tr", choices=("on", "off"))
    run.add_argument("--out")
    run.add_argument("--no-timing", action="store_true", help="write zero wall times (reproducible CSV)")

    reg = sub.add_parser("regret", help="summarize log regret of exported runs")
    reg.add_argument("--in", dest="inp", required=True, help="directory holding records.jsonl")
    reg.add_argument("--pool", action="store_true", help="use the best value across all runs as f*")

    st = sub.add_parser("selftest", help="run fast invariant checks")
    st.add_argument("--seed", type=int, default=0)
    return parser


def config_from_args(args) -> harness.ExperimentConfig:
    base = {}
    if args.config:
        base = json.loads(Path(args.config).read_text())
    fields = {"problem": args.problem, "method": args.method, "acqf": args.acqf, "n_iterations": args.iters,
              "replications": args.reps, "seed": args.seed, "n_init": args.n_init, "out_dir": args.out}
    base.update({k: v for k, v in fields.items() if v is not None})
    if args.tr is not None:
        base["tr"] = args.tr == "on"
    if args.no_timing:
        base["record_time"] = False
    acq = dict(base.get("acq", {}))
    for flag, name in ACQ_FLAGS.items():
        value = getattr(args, flag)
        if value is not None:
            acq[name] = value
    base["acq"] = acq
    if "problem" not in base:
        raise SystemExit("run: --problem (or a config file with 'problem') is required")
    return harness.ExperimentConfig.from_dict(base)


def cmd_run(args) -> int:
    cfg = config_from_args(args)
    records = harness.run_experiment(cfg)
    out = Path(cfg.out_dir or "results")
    paths = harness.export(records, out, problem_seed=cfg.problem_seed)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    finals = [r.incumbents[-1] for r in records]
    print(f"{cfg.label} on {cfg.problem}: final incumbent mean {np.nanmean(finals):.6g} over {len(records)} runs")
    print(f"wrote {paths['csv']} and {paths['jsonl']}")
    return 0


def cmd_regret(args) -> int:
    path = Path(args.inp) / "records.jsonl"
    records = harness.load_records(path)
    series = harness.regret_by_record(records, pool=args.pool)
    groups = {}
    for r, s in zip(records, series):
        groups.setdefault((r.problem, r.method), []).append(s)
    print("problem,method,replications,final_mean,final_lower,final_upper")
    for (prob, method), ss in sorted(groups.items()):
        finals = np.array([s[-1] for s in ss])
        if len(finals) >= 2:
            agg = harness.aggregate([[f] for f in finals])
            lo, hi = agg["lower"][0], agg["upper"][0]
        else:
            lo = hi = finals[0]
        print(f"{prob},{method},{len(finals)},{finals.mean():.6f},{lo:.6f},{hi:.6f}")
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    if args.command == "regret":
        return cmd_regret(args)
    return 0 if selftest.run(args.seed) else 1


if __name__ == "__main__":
    sys.exit(main())
