"""Command-line interface.

Subcommands:
  bench          Monte Carlo AUC benchmark of one algorithm on a dataset.
  train          Fit one model on a seeded labeled/unlabeled split and save it.
  predict        Score a dataset with a saved model (CSV).
  hist           Score histogram of a saved model on a dataset (CSV + figure).
  wilson-report  Per-node bound report for a single tree (CSV + figure).

The MUFFLE_SEED environment variable, when set, overrides --seed (so a whole
scripted session can be re-seeded without touching its commands).  Usage
errors exit with status 2, data and algorithm errors with status 1.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from muffle.baselines import adaboost, logistic_fit, rf_baseline
from muffle.bench import (ALGORITHMS, BenchConfig, DataFormatError, load_dataset,
                          monte_carlo, results_document, score_histogram,
                          split_protocol, write_histogram_csv, write_results_json)
from muffle.boosters import marvin
from muffle.data import LabeledSet
from muffle.estimation import (WilsonParams, alpha_grid, estimate_b, mow_rows,
                               write_mow_csv)
from muffle.hedgemower import HedgeMowerConfig, _member_stats, run_hedgemower
from muffle.optimize import write_trajectory_csv
from muffle.persist import load_model, save_model
from muffle.predictors import EnsemblePredictor, LinearPredictor
from muffle.trees import TreeMember, build_prediction_matrix, extract_specialists, fit_tree

MARVIN_VARIANTS = {"marvin": "plain", "marvin-c": "tc", "marvin-d": "trees"}
HEDGEMOWER_VARIANTS = {"hedgemower": "full", "hedgemower-1": "roots"}


def _default_seed() -> int:
    return int(os.environ.get("MUFFLE_SEED", "0"))


def _dataset_args(p: argparse.ArgumentParser):
    p.add_argument("data", nargs="?", default=None,
                   help="dataset file (CSV with header, or sparse "
                        "'label idx:val ...' rows)")
    p.add_argument("--data", dest="data_opt", default=None, metavar="FILE",
                   help="dataset file (alternative to the positional form)")
    p.add_argument("--format", choices=("auto", "csv", "libsvm"), default="auto",
                   help="input format; auto picks csv for .csv files")
    p.add_argument("--label-column", default="label",
                   help="label column name for CSV input")
    p.add_argument("--positive-class", default=None,
                   help="label value mapped to +1 (everything else becomes -1)")


def _fit_args(p: argparse.ArgumentParser):
    p.add_argument("--algo", required=True, choices=sorted(ALGORITHMS),
                   help="algorithm to run")
    p.add_argument("--labeled", required=True, type=int, metavar="M",
                   help="number of examples that keep their labels")
    p.add_argument("--iterations", type=int, default=100,
                   help="boosting rounds, or trees for forest algorithms")
    p.add_argument("--alpha", type=float, default=None,
                   help="bound failure probability (default: grid pick by M)")
    p.add_argument("--learner", choices=("tree", "stump"), default="tree",
                   help="base learner for boosting algorithms")
    p.add_argument("--depth-limit", type=int, default=None,
                   help="maximum tree depth (default: unlimited)")
    p.add_argument("--batch-size", type=int, default=None,
                   help="stream unlabeled data in batches of this size")
    p.add_argument("--stride", type=int, default=100,
                   help="optimizer steps between streaming batch refreshes")
    p.add_argument("--single-replacement", action="store_true",
                   help="refresh one random batch slot at a time")


def _seed_arg(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=_default_seed(),
                   help="master seed (the MUFFLE_SEED env var overrides this)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="muffle",
        description="Semi-supervised ensembles that hedge on examples "
                    "they cannot call.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench", help="Monte Carlo AUC benchmark")
    _dataset_args(p)
    _fit_args(p)
    _seed_arg(p)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   help="worker processes for trials")
    p.add_argument("--output", default=None, metavar="JSON",
                   help="write results document here")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("train", help="fit one model and save it as JSON")
    _dataset_args(p)
    _fit_args(p)
    _seed_arg(p)
    p.add_argument("--output", required=True, metavar="JSON",
                   help="model file to write")
    p.add_argument("--trajectory", default=None, metavar="CSV",
                   help="write the slack trajectory here")
    p.add_argument("--mow-report", default=None, metavar="CSV",
                   help="write the per-node pruning report here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score a dataset with a saved model")
    p.add_argument("model", help="model JSON file")
    _dataset_args(p)
    p.add_argument("--output", default="-", metavar="CSV",
                   help="scores file ('-' for stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("hist", help="score histogram for a saved model")
    p.add_argument("model", help="model JSON file")
    _dataset_args(p)
    p.add_argument("--bins", type=int, default=60,
                   help="approximate bin count")
    p.add_argument("--output", required=True, metavar="CSV")
    p.add_argument("--figure", default=None, metavar="SVG",
                   help="also render the histogram here")
    p.set_defaults(func=cmd_hist)

    p = sub.add_parser("wilson-report",
                       help="per-node bound report for one tree")
    _dataset_args(p)
    _seed_arg(p)
    p.add_argument("--labeled", required=True, type=int, metavar="M")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--depth-limit", type=int, default=None)
    p.add_argument("--output", required=True, metavar="CSV")
    p.add_argument("--figure", default=None, metavar="SVG",
                   help="also render the report here")
    p.set_defaults(func=cmd_wilson_report)

    return parser


def _data_path(parser, args):
    if args.data is not None and args.data_opt is not None:
        parser.error("give the dataset either positionally or via --data, not both")
    if args.data is None and args.data_opt is None:
        parser.error("a dataset file is required (positional or --data)")
    return args.data if args.data is not None else args.data_opt


def _load(args):
    return load_dataset(args.data, fmt=args.format,
                        positive_class=args.positive_class,
                        label_column=args.label_column)


def _wilson(args) -> WilsonParams:
    a = args.alpha if args.alpha is not None else alpha_grid(args.labeled)[0]
    return WilsonParams(a)


def _model_dim(pred):
    if isinstance(pred, LinearPredictor):
        return pred.weights.shape[0]
    if pred.members:
        return pred.members[0].tree.n_features
    return None


def _conform(x, dim):
    """Right-pad sparse data with zero columns up to the model's width."""
    if dim is None or x.shape[1] == dim:
        return x
    if x.shape[1] < dim:
        return np.hstack([x, np.zeros((x.shape[0], dim - x.shape[1]))])
    raise DataFormatError(
        f"model expects {dim} features, data has {x.shape[1]}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_bench(args) -> int:
    dataset = _load(args)
    cfg = BenchConfig(
        dataset=dataset, algorithm=args.algo, m=args.labeled,
        trials=args.trials, seed=args.seed, iterations=args.iterations,
        alpha=args.alpha, learner=args.learner, depth_limit=args.depth_limit,
        batch_size=args.batch_size, stride=args.stride,
        single_replacement=args.single_replacement, jobs=args.jobs)
    result = monte_carlo(cfg)
    nodes = "-"
    if result.total_nodes:
        nodes = (f"{np.mean(result.kept_nodes):.1f}/"
                 f"{np.mean(result.total_nodes):.1f}")
    print(f"{'algorithm':<14} {'auc (95% CI)':<20} kept/total nodes")
    print(f"{result.algorithm:<14} "
          f"{result.mean:.4f} ± {result.half_width:.4f}      {nodes}")
    print(f"{cfg.trials} trials in {result.wall_time:.1f}s", file=sys.stderr)
    if args.output:
        write_results_json(args.output, results_document(cfg, result))
    return 0


def _fit_one(args, L, U, seed):
    """Fit args.algo on one split; returns (predictor, trajectory, mow)."""
    name = args.algo
    if name in MARVIN_VARIANTS:
        res = marvin(L, U, T=args.iterations, variant=MARVIN_VARIANTS[name],
                     learner=args.learner, wilson=_wilson(args), seed=seed,
                     batch_size=args.batch_size, stride=args.stride,
                     single_replacement=args.single_replacement,
                     depth_limit=args.depth_limit)
        return res.predictor, res.trajectory, res.mow
    if name in HEDGEMOWER_VARIANTS:
        cfg = HedgeMowerConfig(p=args.iterations, alpha=_wilson(args).alpha,
                               variant=HEDGEMOWER_VARIANTS[name],
                               depth_limit=args.depth_limit,
                               batch_size=args.batch_size, stride=args.stride,
                               single_replacement=args.single_replacement)
        res = run_hedgemower(L, U, cfg, seed=seed)
        if res.abstaining:
            print("warning: every node was mowed; the model abstains "
                  "(score 0 everywhere)", file=sys.stderr)
        return res.predictor, res.trajectory, res.mow
    if name == "rf":
        return rf_baseline(L, p=args.iterations, seed=seed,
                           depth_limit=args.depth_limit), [], []
    if name == "adaboost":
        res = adaboost(L, T=args.iterations, learner=args.learner,
                       depth_limit=args.depth_limit)
        return res.predictor, [], []
    if name == "logreg":
        return logistic_fit(L), [], []
    raise ValueError(f"unknown algorithm {name!r}")


def cmd_train(args) -> int:
    dataset = _load(args)
    split = split_protocol(dataset, args.labeled, args.seed)
    pred, trajectory, mow = _fit_one(args, split.labeled, split.unlabeled,
                                     args.seed)
    save_model(pred, args.output, algorithm=args.algo)
    if args.trajectory is not None:
        write_trajectory_csv(trajectory, args.trajectory)
    if args.mow_report is not None:
        write_mow_csv(mow, args.mow_report)
    if isinstance(pred, EnsemblePredictor):
        tail = f"{len(pred.members)} members"
        if trajectory:
            tail += f", final slack {trajectory[-1][1]:.4f}"
    else:
        tail = "linear model"
    print(f"{args.algo}: {tail} -> {args.output}")
    return 0


def cmd_predict(args) -> int:
    pred = load_model(args.model)
    dataset = _load(args)
    x = _conform(dataset.x, _model_dim(pred))
    scores = pred.predict(x)
    labels = pred.hard_labels(x)
    out = sys.stdout if args.output == "-" else open(args.output, "w", newline="")
    try:
        w = csv.writer(out)
        w.writerow(["index", "score", "label"])
        for i, (s, lab) in enumerate(zip(scores, labels)):
            w.writerow([i, repr(float(s)), int(lab)])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_hist(args) -> int:
    pred = load_model(args.model)
    dataset = _load(args)
    x = _conform(dataset.x, _model_dim(pred))
    hist = score_histogram(pred, x, bins=args.bins)
    write_histogram_csv(hist, args.output)
    if args.figure is not None:
        from muffle.figures import save_histogram_figure
        save_histogram_figure(hist, args.figure)
    scores = pred.raw_scores(x)
    inside = float(np.mean(np.abs(scores) <= 1.0)) if scores.size else 0.0
    print(f"{inside:.1%} of scores inside [-1, 1]")
    return 0


def cmd_wilson_report(args) -> int:
    dataset = _load(args)
    split = split_protocol(dataset, args.labeled, args.seed)
    L = split.labeled
    params = _wilson(args)

    # Same partition the ensemble builders use: a quarter grows the tree,
    # the rest measures its nodes.
    m1 = max(1, L.m // 4)
    perm = np.random.default_rng(args.seed).permutation(L.m)
    grow, measure = perm[:m1], perm[m1:]
    tree = fit_tree(L.x[grow], L.y[grow], depth_limit=args.depth_limit)
    members = extract_specialists(tree) or [TreeMember(tree)]
    L_est = (LabeledSet(L.x[measure], L.y[measure]) if measure.size
             else LabeledSet(np.zeros((0, L.dim)), np.zeros(0)))
    _, n_awake = build_prediction_matrix(members, split.unlabeled.x)
    stats = _member_stats(members, L_est, n_awake, split.unlabeled.n)
    b = np.array([estimate_b(st, params) for st in stats])
    kept = b > 0.0
    rows = mow_rows(stats, b, kept, params,
                    tree_ids=[m.tree_index for m in members],
                    node_ids=[m.node_id for m in members])
    write_mow_csv(rows, args.output)
    if args.figure is not None:
        from muffle.figures import save_mow_figure
        save_mow_figure(rows, args.figure, m_total=L_est.m)
    print(f"{int(kept.sum())}/{len(rows)} nodes kept at alpha={params.alpha}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if hasattr(args, "data"):
        args.data = _data_path(parser, args)
    if hasattr(args, "seed") and "MUFFLE_SEED" in os.environ:
        args.seed = int(os.environ["MUFFLE_SEED"])  # env wins over the flag
    try:
        return args.func(args)
    except BrokenPipeError:
        return 1
    except Exception as exc:  # data/model/algorithm problems all exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
