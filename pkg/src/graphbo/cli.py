"""Command-line entry point: ``graphbo {run,baseline,phase,ablate,stats}``.

Relative output directories are resolved against ``$GRAPHBO_OUTPUT_ROOT``
when it is set. Exit status is 0 on success, 1 for a bad command line or
config and 2 when the run itself fails.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bench import ExperimentConfig, aggregate_and_export, run
from .bench.runner import build_problem
from .errors import GraphBOError, InputError
from .graph_core import ObservationSet
from .plotting import plot_grid, plot_phase
from .sampling import (PhaseConfig, observation_stats, recovery_phase_experiment,
                       success_rates)

logger = logging.getLogger("graphbo")

OUTPUT_ROOT_ENV = "GRAPHBO_OUTPUT_ROOT"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def output_dir(path) -> Path:
    p = Path(path)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    return p if p.is_absolute() or not root else Path(root) / p


def _add_experiment_args(p):
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--seed", type=int, action="append", help="seed (repeatable)")
    p.add_argument("--seeds", type=_int_list, help="comma-separated seeds")
    p.add_argument("--T", type=int, help="BO iterations")
    p.add_argument("--N0", type=int, help="initial random nodes")
    p.add_argument("--out", help="output directory")
    p.add_argument("--n", type=int, help="graph size")


def _add_method_args(p):
    p.add_argument("--kernel", choices=("polynomial", "matern", "rbf"))
    p.add_argument("--d1", type=int)
    p.add_argument("--d2", type=int)
    p.add_argument("--ei-convention", choices=("paper", "max"))
    p.add_argument("--noiseless", action="store_true", help="fix the GP noise at 0")
    p.add_argument("--edge-budget", type=int, help="edges sampled per iteration (Q)")
    p.add_argument("--balance-fraction", type=float, help="share of Q spent on seed expansion")
    p.add_argument("--explore-prob", type=float, help="probability the seed is the queried node")
    p.add_argument("--sampler", choices=("balanced", "uniform"))
    p.add_argument("--baselines", default="", help="comma-separated baselines to run alongside")


def build_parser():
    parser = _Parser(prog="graphbo", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run graph BO from a config")
    _add_experiment_args(p)
    _add_method_args(p)

    p = sub.add_parser("baseline", help="run one baseline from a config")
    _add_experiment_args(p)
    p.add_argument("--method", required=True, choices=("random", "local", "bfs", "dfs"))

    p = sub.add_parser("phase", help="recovery success rate against |Omega|")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--rank", type=int, default=3)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--sizes", type=_int_list,
                   help="|Omega| grid (default: r*n up to 8*r*n*ln(n)^2)")
    p.add_argument("--sampler", choices=("uniform", "balanced"), default="uniform")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="phase")

    p = sub.add_parser("ablate", help="final gap over a (d1, d2) grid")
    _add_experiment_args(p)
    p.add_argument("--d1", type=_int_list, default=[20, 50, 100])
    p.add_argument("--d2", type=_int_list, default=[5, 10, 50])
    p.add_argument("--ei-convention", choices=("paper", "max"))
    p.add_argument("--edge-budget", type=int)

    p = sub.add_parser("stats", help="observation-pattern statistics of a saved Omega")
    p.add_argument("obs", help="observation file written by ObservationSet.save")
    p.add_argument("--n", type=int)
    p.add_argument("--weighted", action="store_true")
    return parser


def load_config(args, method=None) -> ExperimentConfig:
    data = {}
    if args.config:
        data = ExperimentConfig.load(args.config).to_dict()
    graph = data.setdefault("graph", {})
    meth = data.setdefault("method", {})
    if getattr(args, "n", None):
        graph["n"] = args.n
        graph.pop("blocks", None) if graph.get("type", "sbm") == "sbm" else None
    for key in ("T", "N0"):
        if getattr(args, key, None) is not None:
            data[key] = getattr(args, key)
    seeds = list(args.seeds or []) + list(args.seed or [])
    if seeds:
        data["seeds"] = seeds
    if getattr(args, "out", None):
        data["output_dir"] = args.out
    if method:
        meth["name"] = method
    for flag, key in (("kernel", "kernel"), ("d1", "d1"), ("d2", "d2"),
                      ("ei_convention", "ei_convention")):
        if isinstance(getattr(args, flag, None), (str, int)):
            meth[key] = getattr(args, flag)
    if getattr(args, "noiseless", False):
        meth["noiseless"] = True
    sampler = meth.setdefault("sampler", {})
    for flag, key in (("edge_budget", "budget"), ("balance_fraction", "balance_fraction"),
                      ("explore_prob", "explore_prob"), ("sampler", "kind")):
        if getattr(args, flag, None) is not None:
            sampler[key] = getattr(args, flag)
    return ExperimentConfig.from_dict(data)


def _run_all(cfg, methods):
    traces = []
    for seed in cfg.seeds:
        problem = build_problem(cfg, seed)
        for name in methods:
            c = replace(cfg, method=replace(cfg.method, name=name))
            tr = run(c, seed, problem)
            logger.info("%s seed %d: final regret %.4g%s", name, seed, tr.final_regret,
                        f" ({tr.error})" if tr.error else "")
            traces.append(tr)
    return traces


def cmd_run(args, method=None):
    cfg = load_config(args, method)
    methods = [cfg.method.name]
    for b in (getattr(args, "baselines", "") or "").split(","):
        if b.strip():
            if b.strip() not in ("random", "local", "bfs", "dfs"):
                raise InputError(f"unknown baseline {b!r}")
            methods.append(b.strip())
    out = output_dir(cfg.output_dir)
    traces = _run_all(cfg, methods)
    os.makedirs(out, exist_ok=True)
    cfg.dump(out / "config.json")
    paths = aggregate_and_export(traces, out)
    for tr in traces:
        print(f"{tr.method}\tseed={tr.seed}\tfinal_regret={tr.final_regret:.6g}"
              + (f"\terror={tr.error}" if tr.error else ""))
    print(f"wrote {paths['aggregate']}")
    return 2 if any(tr.error for tr in traces) else 0


def cmd_phase(args):
    n, r = args.n, args.rank
    if args.sizes:
        sizes = args.sizes
    else:
        top = min(math.ceil(8 * r * n * math.log(n) ** 2), n * (n - 1) // 2)
        sizes = sorted({int(x) for x in np.geomspace(r * n, top, 6)})
    phase = PhaseConfig() if args.epochs is None else PhaseConfig(epochs=args.epochs)
    out = output_dir(args.out)
    os.makedirs(out, exist_ok=True)
    rows = recovery_phase_experiment(r, n, sizes, args.trials, args.sampler, phase,
                                     rng_seed=args.seed, out_csv=out / "phase.csv")
    rates = success_rates(rows)
    plot_phase(rates, out / "phase.svg", title=f"n={n}, rank {r}")
    for size in sorted(rates):
        print(f"|Omega|={size}\tsuccess={rates[size]:.2f}")
    return 0


def cmd_ablate(args):
    cfg = load_config(args)
    out = output_dir(cfg.output_dir)
    os.makedirs(out, exist_ok=True)
    grid = np.zeros((len(args.d1), len(args.d2)))
    rows = []
    problems = {seed: build_problem(cfg, seed) for seed in cfg.seeds}
    for i, d1 in enumerate(args.d1):
        for j, d2 in enumerate(args.d2):
            c = replace(cfg, method=replace(cfg.method, name="ours", d1=d1, d2=d2))
            finals = [run(c, seed, problems[seed]).final_regret for seed in cfg.seeds]
            grid[i, j] = float(np.mean(finals))
            rows.append((d1, d2, grid[i, j]))
            print(f"d1={d1}\td2={d2}\tmean_final_gap={grid[i, j]:.6g}")
    with open(out / "ablation.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["d1", "d2", "mean_final_gap"])
        for d1, d2, g in rows:
            w.writerow([d1, d2, repr(float(g))])
    plot_grid(grid, args.d1, args.d2, out / "ablation.svg", xlabel="d2", ylabel="d1",
              title="mean final gap")
    return 0


def cmd_stats(args):
    obs = ObservationSet.load(args.obs, n=args.n)
    st = observation_stats(obs, weighted=args.weighted)
    for key, value in st.as_dict().items():
        print(f"{key}\t{value}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "baseline":
            return cmd_run(args, method=args.method)
        if args.command == "phase":
            return cmd_phase(args)
        if args.command == "ablate":
            return cmd_ablate(args)
        return cmd_stats(args)
    except InputError as exc:
        print(f"graphbo: config error: {exc}", file=sys.stderr)
        return 1
    except (GraphBOError, OSError, FloatingPointError) as exc:
        print(f"graphbo: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
