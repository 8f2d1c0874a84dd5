"""Benchmark harness: data loading, split protocol, AUC, Monte Carlo trials.

A trial hides all labels outside a random labeled subset of size m, runs one
algorithm on (labeled, unlabeled-features), and scores the resulting ranking
against the hidden labels with the rank-sum AUC.  Trial seeds are derived
from the master seed, so runs are reproducible regardless of how trials are
scheduled across processes.
"""

from __future__ import annotations

import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy.stats import t as student_t

from muffle.baselines import adaboost, logistic_fit, rf_baseline
from muffle.boosters import marvin
from muffle.data import LabeledSet, UnlabeledSet, minibatch_stream  # noqa: F401  (re-export)
from muffle.estimation import WilsonParams, alpha_grid
from muffle.hedgemower import HedgeMowerConfig, run_hedgemower

RESULTS_SCHEMA = 1


@dataclass(frozen=True)
class RawDataset:
    """A fully labeled dataset as read from disk."""

    x: np.ndarray
    y: np.ndarray
    name: str = "data"

    @property
    def size(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]


class DataFormatError(ValueError):
    pass


def _check_label_token(token, where):
    """Reject a numeric label outside {0, 1, -1} right where it appears."""
    try:
        val = float(token)
    except ValueError:
        raise DataFormatError(
            f"{where}: non-numeric label {token!r} needs --positive-class") from None
    if val not in (-1.0, 0.0, 1.0):
        raise DataFormatError(
            f"{where}: label {token!r} is not in {{0,1}} or {{-1,+1}}; "
            "pass --positive-class to binarize")


def _map_labels(raw_labels, positive_class, where):
    """Map arbitrary label tokens to +-1.

    Without positive_class only the alphabets {0, 1} and {-1, +1} are
    accepted; with it, equality to the positive class is +1 and everything
    else is -1 (one against the rest).
    """
    if positive_class is not None:
        try:
            target = float(positive_class)
            vals = np.array([float(v) for v in raw_labels])
            return np.where(vals == target, 1.0, -1.0)
        except ValueError:
            return np.where(np.array(raw_labels, dtype=object) == positive_class, 1.0, -1.0)
    try:
        vals = np.array([float(v) for v in raw_labels])
    except ValueError as exc:
        raise DataFormatError(
            f"{where}: non-numeric labels need --positive-class ({exc})") from None
    alphabet = set(np.unique(vals).tolist())
    if alphabet <= {0.0, 1.0}:
        return np.where(vals == 1.0, 1.0, -1.0)
    if alphabet <= {-1.0, 1.0}:
        return vals
    raise DataFormatError(
        f"{where}: label alphabet {sorted(alphabet)} is not binary; "
        "pass --positive-class to map one label against the rest")


def load_libsvm(path, positive_class=None) -> RawDataset:
    """Sparse 'label idx:val idx:val ...' rows with 1-based feature indices.

    Unseen indices are zero; the dimension is the largest index in the file.
    Malformed lines raise with their line number.
    """
    labels: list[str] = []
    rows: list[list[tuple[int, float]]] = []
    max_idx = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if positive_class is None:
                _check_label_token(parts[0], f"{path}:{lineno}")
            labels.append(parts[0])
            entries = []
            for tok in parts[1:]:
                try:
                    idx_s, val_s = tok.split(":", 1)
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError:
                    raise DataFormatError(
                        f"{path}:{lineno}: malformed feature token {tok!r}") from None
                if idx < 1:
                    raise DataFormatError(
                        f"{path}:{lineno}: feature indices are 1-based, got {idx}")
                entries.append((idx, val))
                max_idx = max(max_idx, idx)
            rows.append(entries)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    x = np.zeros((len(rows), max(max_idx, 1)))
    for i, entries in enumerate(rows):
        for idx, val in entries:
            x[i, idx - 1] = val
    y = _map_labels(labels, positive_class, path)
    return RawDataset(x=x, y=y, name=path)


def load_csv(path, label_column="label", positive_class=None) -> RawDataset:
    """Headered CSV with one label column; all other columns are features."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        if label_column not in header:
            raise DataFormatError(
                f"{path}: no column named {label_column!r} in header {header}")
        label_at = header.index(label_column)
        labels: list[str] = []
        feats: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(
                    f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            if positive_class is None:
                _check_label_token(row[label_at], f"{path}:{lineno}")
            labels.append(row[label_at])
            vals = []
            for j, cell in enumerate(row):
                if j == label_at:
                    continue
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataFormatError(
                        f"{path}:{lineno}: column {header[j]!r}: "
                        f"non-numeric feature {cell!r}") from None
            feats.append(vals)
    if not feats:
        raise DataFormatError(f"{path}: no data rows")
    y = _map_labels(labels, positive_class, path)
    return RawDataset(x=np.array(feats), y=y, name=path)


def load_dataset(path, fmt="auto", positive_class=None, label_column="label") -> RawDataset:
    if fmt == "auto":
        fmt = "csv" if str(path).endswith(".csv") else "libsvm"
    if fmt == "csv":
        return load_csv(path, label_column=label_column, positive_class=positive_class)
    if fmt == "libsvm":
        return load_libsvm(path, positive_class=positive_class)
    raise DataFormatError(f"unknown format {fmt!r}")


@dataclass(frozen=True)
class TrialSplit:
    """Labeled subset, unlabeled features, and the held-back truth.

    The hidden labels live only here; no algorithm entry point accepts them.
    """

    labeled: LabeledSet
    unlabeled: UnlabeledSet
    hidden_labels: np.ndarray
    seed: int


def split_protocol(dataset: RawDataset, m: int, seed: int) -> TrialSplit:
    """Uniform m-subset gets labels; the complement becomes unlabeled."""
    if not 1 <= m < dataset.size:
        raise ValueError(
            f"labeled size must be in [1, {dataset.size - 1}], got {m}")
    perm = np.random.default_rng(seed).permutation(dataset.size)
    lab, unl = perm[:m], perm[m:]
    return TrialSplit(
        labeled=LabeledSet(dataset.x[lab], dataset.y[lab]),
        unlabeled=UnlabeledSet(dataset.x[unl]),
        hidden_labels=dataset.y[unl],
        seed=seed,
    )


def tied_ranks(values) -> np.ndarray:
    """1-based ranks with ties sharing their average rank (O(k log k))."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.shape[0])
    sv = values[order]
    i = 0
    while i < sv.shape[0]:
        j = i
        while j + 1 < sv.shape[0] and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc(scores, labels) -> float:
    """Rank-sum AUC with ties counted half."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=np.float64).ravel()
    if scores.shape != labels.shape:
        raise ValueError(f"{scores.shape[0]} scores but {labels.shape[0]} labels")
    pos = labels > 0
    n_pos = int(pos.sum())
    n_neg = labels.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    r = tied_ranks(scores)
    return float((r[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


# ---------------------------------------------------------------------------
# Monte Carlo benchmark


@dataclass(frozen=True)
class BenchConfig:
    dataset: RawDataset
    algorithm: str
    m: int
    trials: int = 20
    seed: int = 0
    iterations: int = 100  # boosting rounds, or trees for forest algorithms
    alpha: float | None = None  # None picks the first grid entry for m
    learner: str = "tree"
    depth_limit: int | None = None
    batch_size: int | None = None
    stride: int = 100
    single_replacement: bool = False
    jobs: int = 1

    def wilson(self) -> WilsonParams:
        a = self.alpha if self.alpha is not None else alpha_grid(self.m)[0]
        return WilsonParams(a)


def _run_marvin(L, U, cfg: BenchConfig, seed, variant):
    res = marvin(L, U, T=cfg.iterations, variant=variant, learner=cfg.learner,
                 wilson=cfg.wilson(), seed=seed, batch_size=cfg.batch_size,
                 stride=cfg.stride, single_replacement=cfg.single_replacement,
                 depth_limit=cfg.depth_limit)
    extras = {}
    if variant == "trees":
        kept_specialists = sum(r.kept for r in res.mow)
        rounds = len(res.members) - kept_specialists
        extras = {"kept_nodes": len(res.members),
                  "total_nodes": rounds + len(res.mow)}
    return res.predictor.raw_scores(U.x), extras


def _run_hedgemower(L, U, cfg: BenchConfig, seed, variant):
    hm = HedgeMowerConfig(p=cfg.iterations, alpha=cfg.wilson().alpha,
                          variant=variant, depth_limit=cfg.depth_limit,
                          batch_size=cfg.batch_size, stride=cfg.stride,
                          single_replacement=cfg.single_replacement)
    res = run_hedgemower(L, U, hm, seed=seed)
    return res.predictor.raw_scores(U.x), {"kept_nodes": res.kept,
                                           "total_nodes": res.total}


def _run_rf(L, U, cfg: BenchConfig, seed):
    return rf_baseline(L, p=cfg.iterations, seed=seed,
                       depth_limit=cfg.depth_limit).raw_scores(U.x), {}


def _run_adaboost(L, U, cfg: BenchConfig, seed):
    res = adaboost(L, T=cfg.iterations, learner=cfg.learner,
                   depth_limit=cfg.depth_limit)
    return res.predictor.raw_scores(U.x), {}


def _run_logreg(L, U, cfg: BenchConfig, seed):
    return logistic_fit(L).raw_scores(U.x), {}


ALGORITHMS = {
    "marvin": partial(_run_marvin, variant="plain"),
    "marvin-c": partial(_run_marvin, variant="tc"),
    "marvin-d": partial(_run_marvin, variant="trees"),
    "hedgemower": partial(_run_hedgemower, variant="full"),
    "hedgemower-1": partial(_run_hedgemower, variant="roots"),
    "rf": _run_rf,
    "adaboost": _run_adaboost,
    "logreg": _run_logreg,
}


class TrialError(RuntimeError):
    """A trial failed; carries the trial index for reproduction."""

    def __init__(self, trial, cause):
        super().__init__(f"trial {trial} failed: {cause}")
        self.trial = trial


def trial_seeds(master_seed: int, trial: int) -> tuple[int, int]:
    split_ss, algo_ss = np.random.SeedSequence([master_seed, trial]).spawn(2)
    return int(split_ss.generate_state(1)[0]), int(algo_ss.generate_state(1)[0])


def run_trial(cfg: BenchConfig, trial: int):
    """One seeded split + fit + AUC; returns (auc, extras)."""
    try:
        runner = ALGORITHMS[cfg.algorithm]
    except KeyError:
        raise ValueError(f"unknown algorithm {cfg.algorithm!r}; "
                         f"choices: {sorted(ALGORITHMS)}") from None
    split_seed, algo_seed = trial_seeds(cfg.seed, trial)
    split = split_protocol(cfg.dataset, cfg.m, split_seed)
    try:
        scores, extras = runner(split.labeled, split.unlabeled, cfg, algo_seed)
        return auc(scores, split.hidden_labels), extras
    except Exception as exc:
        raise TrialError(trial, exc) from exc


@dataclass
class TrialResult:
    algorithm: str
    aucs: list[float]
    mean: float
    half_width: float
    wall_time: float
    kept_nodes: list = field(default_factory=list)
    total_nodes: list = field(default_factory=list)


def confidence_half_width(values, level: float = 0.95) -> float:
    """Student-t half width of the mean's confidence interval."""
    values = np.asarray(values, dtype=np.float64)
    k = values.shape[0]
    if k < 2:
        return 0.0
    q = float(student_t.ppf(0.5 + level / 2.0, k - 1))
    return float(q * values.std(ddof=1) / np.sqrt(k))


def monte_carlo(cfg: BenchConfig, log=None) -> TrialResult:
    """Run cfg.trials seeded trials (optionally across processes) and
    aggregate AUCs into a mean with a 95% confidence half-width."""
    if cfg.algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {cfg.algorithm!r}; "
                         f"choices: {sorted(ALGORITHMS)}")
    if cfg.trials < 1:
        raise ValueError("need at least one trial")
    log = log if log is not None else (lambda msg: print(msg, file=sys.stderr))
    started = time.perf_counter()
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            outcomes = list(pool.map(partial(run_trial, cfg), range(cfg.trials)))
        for i, (value, _) in enumerate(outcomes):
            log(f"trial {i}: {cfg.algorithm} auc={value:.4f}")
    else:
        outcomes = []
        for i in range(cfg.trials):
            outcomes.append(run_trial(cfg, i))
            log(f"trial {i}: {cfg.algorithm} auc={outcomes[-1][0]:.4f}")
    wall = time.perf_counter() - started
    aucs = [value for value, _ in outcomes]
    kept = [ex["kept_nodes"] for _, ex in outcomes if "kept_nodes" in ex]
    total = [ex["total_nodes"] for _, ex in outcomes if "total_nodes" in ex]
    return TrialResult(
        algorithm=cfg.algorithm,
        aucs=aucs,
        mean=float(np.mean(aucs)),
        half_width=confidence_half_width(aucs),
        wall_time=wall,
        kept_nodes=kept,
        total_nodes=total,
    )


def results_document(cfg: BenchConfig, result: TrialResult) -> dict:
    """Results JSON payload.  Wall time is deliberately left out so that
    identical seeds give byte-identical files."""
    return {
        "schema": RESULTS_SCHEMA,
        "config": {
            "dataset": cfg.dataset.name,
            "algorithm": cfg.algorithm,
            "m": cfg.m,
            "trials": cfg.trials,
            "seed": cfg.seed,
            "iterations": cfg.iterations,
            "alpha": cfg.wilson().alpha,
            "learner": cfg.learner,
            "depth_limit": cfg.depth_limit,
            "batch_size": cfg.batch_size,
            "stride": cfg.stride,
            "single_replacement": cfg.single_replacement,
        },
        "results": [{
            "algorithm": result.algorithm,
            "aucs": result.aucs,
            "mean": result.mean,
            "half_width": result.half_width,
            "kept_nodes": result.kept_nodes,
            "total_nodes": result.total_nodes,
        }],
    }


def write_results_json(path, document: dict):
    with open(path, "w") as fh:
        json.dump(document, fh, sort_keys=True, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Score histogram


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray


def score_histogram(predictor, X, bins: int = 60) -> Histogram:
    """Histogram of raw (unclipped) scores on a symmetric range.

    Bin edges are j/q for integer j, so -1 and +1 are always edges exactly;
    `bins` sets the approximate total bin count.  Counts always sum to the
    number of examples.
    """
    if bins < 2:
        raise ValueError("need at least two bins")
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("cannot histogram an empty example set")
    s = np.asarray(predictor.raw_scores(X), dtype=np.float64)
    top = float(np.abs(s).max()) if s.size else 0.0
    reach = max(1.0, top)
    q = max(1, round(bins / (2.0 * reach)))
    half = int(np.ceil(reach * q))
    if half / q < top:
        half += 1
    edges = np.arange(-half, half + 1, dtype=np.float64) / q
    counts, _ = np.histogram(s, bins=edges)
    return Histogram(edges=edges, counts=counts)


def write_histogram_csv(hist: Histogram, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_left", "bin_right", "count"])
        for left, right, count in zip(hist.edges[:-1], hist.edges[1:], hist.counts):
            w.writerow([repr(float(left)), repr(float(right)), int(count)])
