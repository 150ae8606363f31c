"""Command-line entry point: generate, train, evaluate, hpsearch, benchmark.

Every subcommand writes the exact run configuration it used into its output
directory, exits nonzero with a JSON error object on stderr when something
goes wrong, and keeps all delimited outputs plain CSV/JSON.  The train and
benchmark paths additionally render diagnostic figures next to those files.
"""

from __future__ import annotations

import argparse
import csv
import json
import re
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import graph, hpsearch, linear, metrics, post, report, simul
from .optim import TrainConfig, train

__all__ = ["main", "RunConfig"]

METHODS = ("mlp", "mlp++", "linear")

TRAJECTORY_FIELDS = ("iteration", "subproblem", "lambda", "mu", "h",
                     "train_objective", "heldout_objective", "edges")


class CliError(Exception):
    """User-facing error; rendered as JSON on stderr with exit code 2."""


@dataclass
class RunConfig:
    """Full audit record of one CLI invocation."""

    command: str
    method: str = "mlp"
    data: str | None = None
    true_graph: str | None = None
    out: str | None = None
    seed: int = 0
    train: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def save(self, out_dir: Path) -> None:
        with open(out_dir / "run_config.json", "w") as fh:
            json.dump(asdict(self), fh, indent=2, default=_json_default)
            fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _out_dir(path_str: str) -> Path:
    out = Path(path_str)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sanitize_meta(meta: dict) -> dict:
    """Generation metadata without the bulky per-sample draws."""
    clean = {}
    for key, val in meta.items():
        if key in ("f", "noise"):
            continue
        if isinstance(val, dict):
            clean[key] = {str(k): _json_default(v) if isinstance(v, np.ndarray)
                          else float(v) if isinstance(v, (np.floating, float))
                          else v for k, v in val.items()}
        else:
            clean[key] = val
    return clean


def _load_dataset(args, config: TrainConfig) -> simul.Dataset:
    x = np.loadtxt(args.data, delimiter=",", ndmin=2)
    rng = np.random.default_rng(config.seed)
    return simul.split_and_standardize(x, config.train_fraction,
                                       config.standardize, rng)


def _train_config_from_args(args) -> TrainConfig:
    config = TrainConfig()
    overrides = {}
    for f in fields(TrainConfig):
        if hasattr(args, f.name) and getattr(args, f.name) is not None:
            overrides[f.name] = getattr(args, f.name)
    if getattr(args, "no_standardize", False):
        overrides["standardize"] = False
    config = replace(config, **overrides)
    # a config file, when given, wins over command-line flags
    if getattr(args, "config", None):
        with open(args.config) as fh:
            file_cfg = json.load(fh)
        known = {f.name for f in fields(TrainConfig)}
        unknown = set(file_cfg) - known - {"method", "l1_coeff", "final_threshold"}
        if unknown:
            raise CliError(f"unknown config keys: {sorted(unknown)}")
        config = replace(config, **{k: v for k, v in file_cfg.items() if k in known})
    if getattr(args, "method", None) == "mlp++":
        config = replace(config, head="mean-logvar")
    return config


def _write_trajectory(rows: list[dict], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRAJECTORY_FIELDS)
        writer.writeheader()
        writer.writerows(rows)


def cmd_generate(args) -> int:
    out = _out_dir(args.out)
    rng = np.random.default_rng(args.seed)
    if args.graph == "er":
        g = graph.sample_er(args.nodes, args.edges, rng)
    elif args.graph == "sf":
        g = graph.sample_sf(args.nodes, max(1, int(round(args.edges / args.nodes))), rng)
    else:
        raise CliError(f"unknown graph type {args.graph!r}")
    x, meta = simul.generate(args.scheme, g, args.samples, rng)
    np.savetxt(out / "data.csv", x, delimiter=",", fmt="%.10g")
    graph.save_edge_list(g, out / "graph.txt")
    sidecar = {
        "scheme": args.scheme,
        "seed": args.seed,
        "nodes": args.nodes,
        "edges_drawn": g.num_edges,
        "graph_file": "graph.txt",
        "hyperparameters": _sanitize_meta(meta),
    }
    with open(out / "metadata.json", "w") as fh:
        json.dump(sidecar, fh, indent=2, default=_json_default)
        fh.write("\n")
    RunConfig(command="generate", out=args.out, seed=args.seed,
              extra={"scheme": args.scheme, "graph": args.graph,
                     "nodes": args.nodes, "edges": args.edges,
                     "samples": args.samples}).save(out)
    print(json.dumps({"out": str(out), "edges": g.num_edges}))
    return 0


def cmd_train(args) -> int:
    out = _out_dir(args.out)
    config = _train_config_from_args(args)
    if args.method not in METHODS:
        raise CliError(f"unknown method {args.method!r}; choose from {METHODS}")
    dataset = _load_dataset(args, config)
    true_g = graph.load_graph(args.true) if args.true else None

    if args.method == "linear":
        result = linear.train_linear(dataset, config,
                                     l1_coeff=args.l1,
                                     final_threshold=args.final_threshold)
        est = result.dag
        prune_report = None
        np.savetxt(out / "coefficients.csv", result.model.u, delimiter=",")
    else:
        result = train(dataset, config, log_adjacency=args.log_adjacency)
        est = post.jacobian_threshold(result.stack, dataset)
        est, prune_report = post.prune(est, dataset, cutoff=config.prune_cutoff)
        from .mlp import save_stack

        save_stack(result.stack, out / "checkpoint.npz")
        if result.adjacency_log:
            report.plot_adjacency_entries(
                result.adjacency_log,
                true_g.adj if true_g is not None else None,
                out / "adjacency.png")

    graph.save_edge_list(est, out / "estimate.txt")
    _write_trajectory(result.trajectory, out / "trajectory.csv")
    report.plot_trajectory(result.trajectory, out / "trajectory.png")
    if prune_report is not None:
        with open(out / "prune_report.json", "w") as fh:
            json.dump(prune_report, fh, indent=2, default=_json_default)
            fh.write("\n")
    run = RunConfig(command="train", method=args.method, data=args.data,
                    true_graph=args.true, out=args.out, seed=config.seed,
                    train=config.to_dict())
    if args.method == "linear":
        run.extra = {"l1": args.l1, "final_threshold": args.final_threshold}
    run.save(out)
    print(json.dumps({"out": str(out), "edges": est.num_edges,
                      "converged": result.converged}))
    return 0


def _load_estimate(args, true_g: graph.Dag) -> graph.Dag:
    if args.est == "random":
        rng = np.random.default_rng(args.seed)
        e = args.est_edges if args.est_edges is not None else true_g.num_edges
        return graph.sample_er(true_g.d, e, rng)
    return graph.load_graph(args.est)


def cmd_evaluate(args) -> int:
    true_g = graph.load_graph(args.true)
    est_g = _load_estimate(args, true_g)
    wanted = tuple(args.metrics.split(","))
    bad = set(wanted) - {"shd", "shdc", "sid"}
    if bad:
        raise CliError(f"unknown metrics: {sorted(bad)}")
    rep = metrics.evaluate(true_g, est_g, metrics=wanted,
                           provenance={"true": args.true, "est": args.est,
                                       "seed": args.seed})
    payload = rep.to_dict()
    print(json.dumps(payload, indent=2))
    if args.out:
        out = _out_dir(args.out)
        with open(out / "metrics.json", "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
        RunConfig(command="evaluate", true_graph=args.true, out=args.out,
                  seed=args.seed, extra={"est": args.est,
                                         "metrics": args.metrics}).save(out)
    return 0


def cmd_hpsearch(args) -> int:
    out = _out_dir(args.out)
    config = _train_config_from_args(args)
    dataset = _load_dataset(args, config)
    result = hpsearch.run_search(dataset, hpsearch.NN_SEARCH_SPACE, args.trials,
                                 base_config=config, base_seed=args.seed)
    with open(out / "trials.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=("trial", "config", "score",
                                                "status", "wall_time"))
        writer.writeheader()
        writer.writerows(r.to_row() for r in result.trials)
    with open(out / "best_config.json", "w") as fh:
        json.dump(result.best.config.to_dict(), fh, indent=2)
        fh.write("\n")
    if result.best.dag is not None:
        graph.save_edge_list(result.best.dag, out / "best_estimate.txt")
    RunConfig(command="hpsearch", method=args.method, data=args.data,
              out=args.out, seed=args.seed, train=config.to_dict(),
              extra={"trials": args.trials}).save(out)
    print(json.dumps({"out": str(out), "best_trial": result.best.trial,
                      "best_score": result.best.score}))
    return 0


SUITE_RE = re.compile(r"^(er|sf)(\d+)-d(\d+)$")


def _parse_suite(suite: str) -> tuple[str, int, int]:
    m = SUITE_RE.match(suite)
    if not m:
        raise CliError(f"suite {suite!r} does not match '(er|sf)<k>-d<nodes>'")
    kind, k, d = m.group(1), int(m.group(2)), int(m.group(3))
    return kind, k, d


def cmd_benchmark(args) -> int:
    out = _out_dir(args.out)
    kind, k, d = _parse_suite(args.suite)
    edges = k * d
    config = _train_config_from_args(args)
    per_seed: list[dict] = []
    failures: list[dict] = []
    for s in range(args.seeds):
        seed = args.seed + s
        seed_dir = _out_dir(str(out / f"seed{seed}"))
        try:
            rng = np.random.default_rng(seed)
            g = (graph.sample_er(d, edges, rng) if kind == "er"
                 else graph.sample_sf(d, k, rng))
            x, _ = simul.generate(args.scheme, g, args.samples, rng)
            dataset = simul.split_and_standardize(
                x, config.train_fraction, config.standardize,
                np.random.default_rng(seed))
            cfg = replace(config, seed=seed)
            if args.method == "linear":
                est = linear.train_linear(dataset, cfg, l1_coeff=args.l1,
                                          final_threshold=args.final_threshold).dag
            else:
                result = train(dataset, cfg)
                est = post.jacobian_threshold(result.stack, dataset)
                est, _ = post.prune(est, dataset, cutoff=cfg.prune_cutoff)
            rep = metrics.evaluate(g, est, provenance={"seed": seed})
            row = rep.to_dict()
            row["seed"] = seed
            per_seed.append(row)
            graph.save_edge_list(g, seed_dir / "graph.txt")
            graph.save_edge_list(est, seed_dir / "estimate.txt")
            with open(seed_dir / "metrics.json", "w") as fh:
                json.dump(row, fh, indent=2)
                fh.write("\n")
        except Exception as exc:  # noqa: BLE001 - per-seed isolation
            failures.append({"seed": seed, "error": str(exc)})
    if not per_seed:
        raise CliError(f"all {args.seeds} seeds failed: {failures}")
    metric_names = ("shd", "shd_c", "sid")
    aggregate = {
        "suite": args.suite,
        "scheme": args.scheme,
        "method": args.method,
        "seeds": [row["seed"] for row in per_seed],
        "failures": failures,
        "mean": {m: float(np.mean([r[m] for r in per_seed])) for m in metric_names},
        "std": {m: float(np.std([r[m] for r in per_seed])) for m in metric_names},
        "per_seed": per_seed,
    }
    with open(out / "aggregate.json", "w") as fh:
        json.dump(aggregate, fh, indent=2)
        fh.write("\n")
    report.plot_benchmark(per_seed, metric_names, out / "benchmark.png")
    RunConfig(command="benchmark", method=args.method, out=args.out,
              seed=args.seed, train=config.to_dict(),
              extra={"suite": args.suite, "scheme": args.scheme,
                     "samples": args.samples, "seeds": args.seeds}).save(out)
    print(json.dumps({"out": str(out), "mean": aggregate["mean"],
                      "std": aggregate["std"], "failures": len(failures)}))
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=METHODS, default="mlp")
    p.add_argument("--config", help="JSON config file; wins over flags")
    p.add_argument("--lr-first", dest="lr_first", type=float)
    p.add_argument("--lr-other", dest="lr_other", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--hidden-layers", dest="hidden_layers", type=int)
    p.add_argument("--hidden-units", dest="hidden_units", type=int)
    p.add_argument("--edge-threshold", dest="edge_threshold", type=float)
    p.add_argument("--eval-every", dest="eval_every", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--h-tol", dest="h_tol", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--pns", dest="pns", action="store_true", default=None)
    p.add_argument("--no-pns", dest="pns", action="store_false")
    p.add_argument("--pns-threshold", dest="pns_threshold", type=float)
    p.add_argument("--prune-cutoff", dest="prune_cutoff", type=float)
    p.add_argument("--l1", type=float, default=linear.DEFAULT_L1)
    p.add_argument("--final-threshold", type=float,
                   default=linear.DEFAULT_FINAL_THRESHOLD)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nndag",
                     description="Learn a DAG over observed variables with "
                                 "neural-network likelihoods under an "
                                 "acyclicity constraint.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate a dataset from a random DAG")
    p.add_argument("--scheme", choices=sorted(simul.SCHEMES), required=True)
    p.add_argument("--graph", choices=("er", "sf"), default="er")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--edges", type=int, required=True)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="fit a graph estimate to a CSV dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--true", help="ground-truth graph, used only for figures")
    p.add_argument("--out", required=True)
    p.add_argument("--log-adjacency", action="store_true",
                   help="record the weighted adjacency per evaluation point")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score an estimate against a truth")
    p.add_argument("--true", required=True)
    p.add_argument("--est", required=True,
                   help="estimate graph file, or 'random' for an ER baseline")
    p.add_argument("--metrics", default="shd,shdc,sid")
    p.add_argument("--est-edges", dest="est_edges", type=int,
                   help="edge count for the random baseline (default: truth's)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("hpsearch", help="random hyperparameter search")
    p.add_argument("--data", required=True)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_hpsearch)

    p = sub.add_parser("benchmark", help="generate+train+evaluate over seeds")
    p.add_argument("--suite", required=True, help="for example er1-d10")
    p.add_argument("--scheme", choices=sorted(simul.SCHEMES), default="gauss-anm")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_benchmark)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(json.dumps({"error": "usage", "message": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - uniform machine-parseable errors
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
