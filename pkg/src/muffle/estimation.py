"""Upper confidence bounds on member error rates and the correlation vector b.

A member that errs on a fraction p of the labeled data it wakes up on has
label correlation 1 - 2p there.  Replacing p by a one-sided upper confidence
bound p_u gives a high-probability lower bound c_l = 1 - 2 p_u, which is then
scaled by the member's awake fraction on the unlabeled data.  The Wilson
interval is used because the plain Wald interval collapses at small counts
(p_hat = 0 gives a zero-width Wald interval no matter how few examples were
seen).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri


def normal_quantile(q: float) -> float:
    """Inverse standard normal CDF."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile must be in (0, 1), got {q}")
    return float(ndtri(q))


def wald_upper(p_hat, n, alpha):
    """Wald upper bound p_hat + z * sqrt(p_hat (1 - p_hat) / n), capped at 1."""
    p_hat = np.asarray(p_hat, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    if np.any(n < 1):
        raise ValueError("need at least one observation")
    z = normal_quantile(1.0 - alpha)
    out = np.minimum(1.0, p_hat + z * np.sqrt(p_hat * (1.0 - p_hat) / n))
    return float(out) if out.ndim == 0 else out


def wilson_upper(p_hat, n, alpha):
    """Wilson upper bound, capped at 1.  Accepts scalars or arrays.

    With z the (1 - alpha) normal quantile:

        center = (p_hat + z^2 / 2n) / (1 + z^2 / n)
        spread = sqrt(p_hat (1 - p_hat) / n + z^2 / 4n^2) / (1 + z^2 / n)
        upper  = center + z * spread
    """
    p_hat = np.asarray(p_hat, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    if np.any(n < 1):
        raise ValueError("need at least one observation")
    z = normal_quantile(1.0 - alpha)
    denom = 1.0 + z * z / n
    center = (p_hat + z * z / (2.0 * n)) / denom
    spread = np.sqrt(p_hat * (1.0 - p_hat) / n + z * z / (4.0 * n * n)) / denom
    out = np.minimum(1.0, center + z * spread)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class WilsonParams:
    """Failure probability for the one-sided interval, with its z cached."""

    alpha: float = 0.01
    z: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 0.5:
            raise ValueError(f"alpha must be in (0, 0.5), got {self.alpha}")
        object.__setattr__(self, "z", normal_quantile(1.0 - self.alpha))


def alpha_grid(m: int) -> tuple[float, ...]:
    """Default failure-probability sweep by labeled-set size."""
    if m >= 100_000:
        return (0.001,)
    if m >= 10_000:
        return (0.001, 0.005)
    if m >= 1_000:
        return (0.01,)
    return (0.003, 0.01, 0.03, 0.1)


@dataclass(frozen=True)
class MemberStats:
    """Counts backing one member's correlation bound.

    m_awake / errors are measured on the labeled estimation set (awake rows
    only); n_awake / n_total on the unlabeled set the member will be scored
    on.  An always-awake member has m_awake = m and n_awake = n_total.
    """

    m_awake: int
    errors: int
    n_awake: int
    n_total: int


def estimate_b(stats: MemberStats, params: WilsonParams) -> float:
    """Lower bound b_i on a member's unlabeled label correlation.

    b_i = (n_awake / n_total) * (1 - 2 * wilson_upper(errors / m_awake)).
    A member never awake on labeled data gets the sentinel -1: no evidence,
    so it must be pruned.
    """
    if stats.n_total < 1:
        raise ValueError("need at least one unlabeled example")
    if stats.m_awake == 0:
        return -1.0
    p_hat = stats.errors / stats.m_awake
    c_lower = 1.0 - 2.0 * wilson_upper(p_hat, stats.m_awake, params.alpha)
    return float(stats.n_awake / stats.n_total * c_lower)


def prune_members(members: list, b) -> tuple[list, np.ndarray, np.ndarray]:
    """Keep members with strictly positive bounds.

    Returns (surviving members, their b entries, boolean kept mask over the
    input order).
    """
    b = np.asarray(b, dtype=np.float64).ravel()
    if len(members) != b.shape[0]:
        raise ValueError(f"{len(members)} members but {b.shape[0]} bounds")
    kept = b > 0.0
    survivors = [m for m, k in zip(members, kept) if k]
    return survivors, b[kept], kept


@dataclass(frozen=True)
class MowRow:
    """One line of the mow report: who survived the pruning and why."""

    member: int
    tree: int
    node: int
    m_awake: int
    p_hat: float
    wald_upper: float
    wilson_upper: float
    b: float
    kept: bool


def mow_rows(stats_list, b, kept, params: WilsonParams, tree_ids=None, node_ids=None):
    """Assemble report rows from per-member stats and pruning outcome."""
    rows = []
    for i, (st, bi, ki) in enumerate(zip(stats_list, b, kept)):
        if st.m_awake > 0:
            p_hat = st.errors / st.m_awake
            wald = wald_upper(p_hat, st.m_awake, params.alpha)
            wilson = wilson_upper(p_hat, st.m_awake, params.alpha)
        else:
            p_hat, wald, wilson = float("nan"), float("nan"), float("nan")
        rows.append(MowRow(
            member=i,
            tree=-1 if tree_ids is None else int(tree_ids[i]),
            node=-1 if node_ids is None else int(node_ids[i]),
            m_awake=st.m_awake,
            p_hat=float(p_hat),
            wald_upper=float(wald),
            wilson_upper=float(wilson),
            b=float(bi),
            kept=bool(ki),
        ))
    return rows


MOW_HEADER = ["member", "tree", "node", "m_awake", "p_hat",
              "wald_upper", "wilson_upper", "b", "kept"]


def write_mow_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MOW_HEADER)
        for r in rows:
            w.writerow([r.member, r.tree, r.node, r.m_awake,
                        repr(r.p_hat), repr(r.wald_upper), repr(r.wilson_upper),
                        repr(r.b), int(r.kept)])
