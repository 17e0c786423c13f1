"""Command-line interface: ``unifl <command> [flags]``.

Every command writes a JSON report (to ``--out`` or stdout). Reports carry a
digest of the full configuration so runs can be matched up later. Exit codes:
0 on success, 2 for usage or input errors, 3 when a post-run invariant check
fails.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import datasets, mpnn, oracle
from .errors import UniflError
from .expectation import METRICS, expected_cost
from .instance import GeneratorConfig, generate_geometric, load_instance, save_instance
from .radius import compute_radii
from .sampling import (DEFAULT_MAX_ROUNDS, OpeningProbabilities, eval_solution, grid_search_c,
                       log_grid, monte_carlo_expected_cost, probs_simple, run_recursion)

EXIT_OK, EXIT_USAGE, EXIT_CHECK = 0, 2, 3
TOL = 1e-9


class CliError(Exception):
    pass


@dataclass
class RunReport:
    instance_id: str
    algo: str
    params_digest: str
    open_cost: float
    connection_cost: float
    total: float
    samples: int
    std_error: float
    wall_time_ms: float
    seed: int
    ratio_vs: str | None = None
    ratio: float | None = None
    extra: dict = field(default_factory=dict)

    def check(self):
        if abs(self.total - (self.open_cost + self.connection_cost)) > TOL * max(1.0, self.total):
            return "total differs from open + connection"
        if self.ratio_vs == "exact" and self.ratio is not None and self.ratio < 1 - TOL:
            return "ratio against the exact optimum is below 1"
        return None


# --- helpers -----------------------------------------------------------------------


def config_digest(args):
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out", "csv")}
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _load(path):
    try:
        return load_instance(path)
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror or exc}") from exc
    except UniflError as exc:
        raise CliError(f"{path}: {exc}") from exc


def _emit(args, payload):
    payload = {"command": args.command, "config_digest": config_digest(args), **payload}
    text = json.dumps(payload, indent=2, default=_jsonable)
    if getattr(args, "out", None):
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _write_csv(path, rows):
    keys = [k for k in rows[0] if not isinstance(rows[0][k], (dict, list))]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)


def _reference(instance, kind):
    """(kind actually used, reference total) or (None, None)."""
    if kind == "none":
        return None, None
    if kind == "exact" or (kind == "auto" and instance.n <= oracle.EXACT_LIMIT):
        return "exact", oracle.exact_opt(instance).opt_value
    return "greedy", oracle.greedy_upper_bound(instance).total


def _probabilities(instance, algo, c, params):
    if algo == "mpnn":
        return mpnn.forward(params, instance)[0]
    return probs_simple(instance, compute_radii(instance), c)


def _run_recursive(instance, c, samples, seed, max_rounds, recompute):
    radii = compute_radii(instance)
    sols = [run_recursion(instance, radii, c, max_rounds, seed, s, recompute)
            for s in range(samples)]
    for sol in sols:
        eval_solution(instance, sol)
    totals = np.array([s.total for s in sols])
    se = float(totals.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
    return (float(np.mean([s.open_cost for s in sols])),
            float(np.mean([s.connection_cost for s in sols])), float(totals.mean()), se, sols)


def evaluate(instance, algo, c=None, params=None, samples=1000, seed=0,
             max_rounds=DEFAULT_MAX_ROUNDS, recompute_radii=False, ratio_vs="auto"):
    """One RunReport for ``instance`` using Monte Carlo sampling."""
    start = time.perf_counter()
    extra = {}
    if algo == "recursive":
        op, con, total, se, sols = _run_recursive(instance, c, samples, seed, max_rounds,
                                                  recompute_radii)
        extra["mean_rounds"] = float(np.mean([s.rounds for s in sols]))
        extra["mean_forced_opens"] = float(np.mean([s.forced_opens for s in sols]))
    else:
        probs = _probabilities(instance, algo, c, params)
        total, se, op, con = monte_carlo_expected_cost(instance, probs, samples, seed,
                                                       return_parts=True)
        extra["expected_total"] = expected_cost(instance, probs).total
    wall = (time.perf_counter() - start) * 1000.0
    kind, ref = _reference(instance, ratio_vs)
    return RunReport(instance.id, algo, params.digest() if params is not None else "", op, con,
                     op + con, samples, se, wall, seed, kind,
                     (op + con) / ref if ref else None, extra)


# --- commands ----------------------------------------------------------------------


def cmd_gen(args):
    if args.components is None and args.scale is None:
        cfg = datasets.geo_config(args.n, args.dim, args.seed, component_std=args.std)
    else:
        cfg = GeneratorConfig(args.n, args.dim, args.components or datasets.REF_COMPONENTS,
                              args.std, args.scale or datasets.REF_SCALE, args.seed)
    inst = generate_geometric(cfg)
    save_instance(inst, args.instance_out)
    _emit(args, {"path": args.instance_out, "config": asdict(cfg), "n": inst.n,
                 "undirected_edges": len(inst.edge_list()), "mean_degree": inst.mean_degree()})
    return EXIT_OK


def cmd_gen_dataset(args):
    index = datasets.write_dataset(args.dir, args.count, args.n, args.dim, args.seed)
    _emit(args, {"dir": args.dir, "splits": {k: len(v) for k, v in index["splits"].items()}})
    return EXIT_OK


def cmd_calibrate(args):
    cfg = GeneratorConfig(args.n, args.dim, args.components, args.std, args.scale, args.seed)
    _emit(args, {"config": asdict(cfg), **datasets.calibrate(cfg, args.repeats)})
    return EXIT_OK


def cmd_radii(args):
    inst = _load(args.instance)
    r = compute_radii(inst).r
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(r.tolist(), fh)
    else:
        print(json.dumps(r.tolist()))
    return EXIT_OK


def cmd_solve(args):
    inst = _load(args.instance)
    params = _load_params(args.params) if args.algo == "mpnn" else None
    if args.algo == "mpnn" and params is None:
        raise CliError("--algo mpnn requires --params")
    c = args.c if args.c is not None else (6.0 if args.algo == "recursive" else 2.0)
    report = evaluate(inst, args.algo, c, params, args.samples, args.seed, args.max_rounds,
                      args.recompute_radii, args.ratio_vs)
    payload = asdict(report)
    payload["c"] = c if args.algo != "mpnn" else None
    if args.dump_samples and args.algo == "recursive":
        payload["sample_totals"] = [s.total for s in _run_recursive(
            inst, c, args.samples, args.seed, args.max_rounds, args.recompute_radii)[4]]
    _emit(args, payload)
    if args.csv:
        _write_csv(args.csv, [payload])
    problem = report.check()
    if problem:
        print(f"unifl: check failed: {problem}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def _load_params(path):
    if path is None:
        return None
    try:
        return mpnn.MpnnParams.load(path)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"{path}: {exc}") from exc


def _split(root, name):
    try:
        return datasets.load_split(root, name)
    except OSError as exc:
        raise CliError(f"{root}: {exc.strerror or exc}") from exc


def _train_model(train, val, args, log=None):
    c = args.c if args.c is not None else grid_search_c(train, "simple", seed=args.seed)
    n_hint = max(2, int(round(np.median([inst.n for inst in train]))))
    init = mpnn.algorithmic_init(mpnn.uniform_discretization(args.k), c, n_hint,
                                 hidden=args.hidden, aggregation=args.aggregation,
                                 layers=args.layers, seed=args.seed)
    cfg = mpnn.TrainConfig(lr=args.lr, steps=args.steps, batch_size=args.batch_size,
                           seed=args.seed, optimizer=args.optimizer,
                           early_stop_patience=args.patience, metric=args.metric)
    return c, mpnn.train(init, train, val, cfg, log=log)


def cmd_train(args):
    train, val = _split(args.data, "train"), _split(args.data, "val")
    if not train:
        raise CliError(f"{args.data}: empty training split")
    log = None
    if args.verbose:
        def log(epoch, tr, va):
            print(f"epoch {epoch} train {tr:.6f} val {va:.6f}", file=sys.stderr)
    c, result = _train_model(train, val, args, log)
    result.params.save(args.params_out)
    _emit(args, {"params": args.params_out, "init_c": c, "params_digest": result.params.digest(),
                 "best_epoch": result.best_epoch, "epochs_run": len(result.train_loss),
                 "train_loss": result.train_loss, "val_loss": result.val_loss})
    return EXIT_OK


def cmd_eval(args):
    inst = _load(args.instance)
    if args.probs:
        with open(args.probs, encoding="utf-8") as fh:
            probs = OpeningProbabilities(np.asarray(json.load(fh), dtype=float), "manual")
    elif args.params:
        probs = mpnn.forward(_load_params(args.params), inst)[0]
    else:
        probs = probs_simple(inst, compute_radii(inst), args.c)
    breakdown = expected_cost(inst, probs, args.metric)
    _emit(args, {"instance_id": inst.id, "metric": args.metric, **breakdown.as_dict()})
    return EXIT_OK


def cmd_exact(args):
    inst = _load(args.instance)
    start = time.perf_counter()
    res = oracle.exact_opt(inst, args.limit)
    sol = oracle.solution_from_facilities(inst, res.opt_facilities)
    _emit(args, {"instance_id": inst.id, "total": res.opt_value, "open_cost": sol.open_cost,
                 "connection_cost": sol.connection_cost, "facilities": sorted(res.opt_facilities),
                 "explored": res.explored,
                 "wall_time_ms": (time.perf_counter() - start) * 1000.0})
    if abs(sol.total - res.opt_value) > TOL:
        return EXIT_CHECK
    return EXIT_OK


def cmd_tune(args):
    if args.data:
        instances = _split(args.data, args.split)
    else:
        instances = [_load(p) for p in args.instance]
    if not instances:
        raise CliError("no instances to tune on")
    grid = log_grid(args.grid_lo, args.grid_hi, args.grid_n)
    best, curve = grid_search_c(instances, args.algo, grid, args.samples, args.seed,
                                args.max_rounds, return_curve=True)
    _emit(args, {"algo": args.algo, "best_c": best, "instances": len(instances),
                 "grid": grid.tolist(), "curve": curve.tolist()})
    return EXIT_OK


def cmd_export_ilp(args):
    inst = _load(args.instance)
    try:
        oracle.export_ilp(inst, args.lp_out)
    except OSError as exc:
        raise CliError(f"{args.lp_out}: {exc.strerror or exc}") from exc
    print(json.dumps({"command": args.command, "path": args.lp_out, "binaries":
                      inst.n + inst.nnz}))
    return EXIT_OK


def cmd_bench(args):
    """Tune both baselines, train the network, then compare all three on the test split."""
    train, val, test = (_split(args.dir, s) for s in datasets.SPLITS)
    if not train or not test:
        raise CliError(f"{args.dir}: need nonempty train and test splits")
    timings = {}
    start = time.perf_counter()
    c_simple = grid_search_c(train, "simple", seed=args.seed)
    timings["tune_simple_s"] = time.perf_counter() - start
    start = time.perf_counter()
    c_rec = grid_search_c(train[:args.recursive_tune_instances], "recursive",
                          log_grid(args.grid_lo, args.grid_hi, args.recursive_grid_n),
                          args.recursive_tune_samples, args.seed)
    timings["tune_recursive_s"] = time.perf_counter() - start
    start = time.perf_counter()
    args.c = c_simple
    _, result = _train_model(train, val or train, args)
    timings["train_s"] = time.perf_counter() - start

    candidates = [("SimpleUniformFL", "simple", c_simple, None),
                  ("RecursiveUniformFL", "recursive", c_rec, None),
                  ("MPNN", "mpnn", None, result.params)]
    rows = []
    for name, algo, c, params in candidates:
        reports = [evaluate(inst, algo, c, params, args.samples, args.seed + i,
                            ratio_vs=args.ratio_vs) for i, inst in enumerate(test)]
        ratios = [r.ratio for r in reports if r.ratio is not None]
        rows.append({"candidate": name, "c": c,
                     "open": float(np.mean([r.open_cost for r in reports])),
                     "connection": float(np.mean([r.connection_cost for r in reports])),
                     "total": float(np.mean([r.total for r in reports])),
                     "timing_ms": float(np.mean([r.wall_time_ms for r in reports])),
                     "ratio": float(np.mean(ratios)) if ratios else None,
                     "ratio_vs": reports[0].ratio_vs})
    if args.csv:
        _write_csv(args.csv, rows)
    _emit(args, {"dir": args.dir, "test_instances": len(test), "rows": rows,
                 "params_digest": result.params.digest(), "timings": timings})
    return EXIT_OK


# --- parser ------------------------------------------------------------------------


def _add_train_flags(p):
    p.add_argument("--k", type=int, default=32, help="number of discretization bins")
    p.add_argument("--c", type=float, default=None,
                   help="initialization constant (default: tuned on the training split)")
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--aggregation", choices=mpnn.AGGREGATIONS, default="sum")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--steps", type=int, default=1000, help="maximum epochs")
    p.add_argument("--patience", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--optimizer", choices=mpnn.OPTIMIZERS, default="adaptive-moment")
    p.add_argument("--metric", choices=METRICS, default="linear")
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(prog="unifl", description="Uniform facility location toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a Gaussian-mixture geometric instance")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--components", type=int, default=None,
                   help="mixture components (default: n/10, density-matched box)")
    p.add_argument("--std", type=float, default=datasets.REF_STD)
    p.add_argument("--scale", type=float, default=None, help="side of the centroid box")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", dest="instance_out", required=True)
    p.add_argument("--report", dest="out", default=None)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("gen-dataset", help="write a train/val/test dataset directory")
    p.add_argument("--dir", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("calibrate", help="report the mean degree of a generator configuration")
    p.add_argument("--n", type=int, default=datasets.REF_POINTS)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--components", type=int, default=datasets.REF_COMPONENTS)
    p.add_argument("--std", type=float, default=datasets.REF_STD)
    p.add_argument("--scale", type=float, default=datasets.REF_SCALE)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("radii", help="per-vertex radii as a JSON array")
    p.add_argument("--in", dest="instance", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_radii)

    p = sub.add_parser("solve", help="run an algorithm with Monte Carlo sampling")
    p.add_argument("--in", dest="instance", required=True)
    p.add_argument("--algo", choices=("simple", "recursive", "mpnn"), default="simple")
    p.add_argument("--c", type=float, default=None, help="default 2 (simple) or 6 (recursive)")
    p.add_argument("--params", default=None, help="parameter file for --algo mpnn")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-rounds", type=int, default=DEFAULT_MAX_ROUNDS)
    p.add_argument("--recompute-radii", action="store_true")
    p.add_argument("--ratio-vs", choices=("auto", "exact", "greedy", "none"), default="auto")
    p.add_argument("--dump-samples", action="store_true")
    p.add_argument("--csv", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("train", help="train the network on a dataset directory")
    p.add_argument("--data", required=True)
    _add_train_flags(p)
    p.add_argument("--out", dest="params_out", required=True)
    p.add_argument("--report", dest="out", default=None)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="closed-form expected cost breakdown")
    p.add_argument("--in", dest="instance", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--probs", default=None, help="JSON array of probabilities")
    group.add_argument("--params", default=None)
    p.add_argument("--c", type=float, default=2.0, help="simple rule constant if no probs/params")
    p.add_argument("--metric", choices=METRICS, default="linear")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("exact", help="exhaustive optimum for small instances")
    p.add_argument("--in", dest="instance", required=True)
    p.add_argument("--limit", type=int, default=oracle.EXACT_LIMIT)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("tune", help="log-spaced grid search for c")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", default=None)
    src.add_argument("--in", dest="instance", nargs="+", default=None)
    p.add_argument("--split", default="train")
    p.add_argument("--algo", choices=("simple", "recursive"), default="simple")
    p.add_argument("--grid-lo", type=float, default=1e-3)
    p.add_argument("--grid-hi", type=float, default=10.0)
    p.add_argument("--grid-n", type=int, default=100)
    p.add_argument("--samples", type=int, default=None,
                   help="Monte Carlo samples (default: closed form for simple, 100 for recursive)")
    p.add_argument("--max-rounds", type=int, default=DEFAULT_MAX_ROUNDS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("export-ilp", help="write the integer program in CPLEX LP format")
    p.add_argument("--in", dest="instance", required=True)
    p.add_argument("--out", dest="lp_out", required=True)
    p.set_defaults(func=cmd_export_ilp)

    p = sub.add_parser("bench", help="tune, train and compare all candidates on a dataset")
    p.add_argument("--dir", required=True)
    _add_train_flags(p)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--grid-lo", type=float, default=1e-3)
    p.add_argument("--grid-hi", type=float, default=10.0)
    p.add_argument("--recursive-grid-n", type=int, default=25)
    p.add_argument("--recursive-tune-samples", type=int, default=5)
    p.add_argument("--recursive-tune-instances", type=int, default=20)
    p.add_argument("--ratio-vs", choices=("auto", "exact", "greedy", "none"), default="auto")
    p.add_argument("--csv", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)
    return parser


def _thread_limit():
    value = os.environ.get("UNIFL_THREADS")
    if not value:
        return None
    try:
        limit = int(value)
    except ValueError:
        raise CliError(f"UNIFL_THREADS must be a positive integer, got {value!r}") from None
    if limit < 1:
        raise CliError(f"UNIFL_THREADS must be a positive integer, got {value!r}")
    return limit


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        limit = _thread_limit()
        if limit is None:
            return args.func(args)
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=limit):
            return args.func(args)
    except (CliError, UniflError) as exc:
        print(f"unifl {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
