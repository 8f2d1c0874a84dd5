"""Slack minimization and an exact oracle for tiny aggregation games.

The slack is convex and piecewise linear in the weights, so descent uses
subgradient directions with a golden-section line search; every bracket
contains step 0 and a step is only accepted when the canonically re-evaluated
slack strictly decreases, making the recorded trajectory non-increasing with
no tolerance.  When the subgradient direction stalls at a kink, a polish pass
tries coordinate and random directions, and finally the minimum-norm element
of the subdifferential plus the orthant's normal cone: a nonzero residual
there is a guaranteed strict-descent direction, and a vanishing one certifies
constrained global optimality, so convergence is declared on evidence rather
than exhaustion.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.optimize import lsq_linear

from muffle.core import slack, slack_subgradient

INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class LineSearchSpec:
    tolerance: float = 1e-6
    max_expansions: int = 10
    bracket_end: float = 4.0


class _Memo:
    """Scalar-function cache; repeated abscissae are served from the table."""

    def __init__(self, f):
        self._f = f
        self.table: dict[float, float] = {}

    @property
    def evaluations(self) -> int:
        return len(self.table)

    def __call__(self, x: float) -> float:
        v = self.table.get(x)
        if v is None:
            v = self._f(x)
            self.table[x] = v
        return v


def golden_section(f, a: float, c: float, tolerance: float = 1e-6) -> float:
    """Golden-section minimum of a unimodal f on [a, c].

    The returned abscissa is within `tolerance` of the true minimizer and f
    is evaluated O(log((c - a) / tolerance)) times, with a memo table so no
    abscissa is ever evaluated twice.
    """
    if not c > a:
        raise ValueError(f"need c > a, got [{a}, {c}]")
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    mf = f if isinstance(f, _Memo) else _Memo(f)
    x1 = c - (c - a) * INVPHI
    x2 = a + (c - a) * INVPHI
    f1, f2 = mf(x1), mf(x2)
    while (c - a) > tolerance:
        if f1 <= f2:
            c, x2, f2 = x2, x1, f1
            x1 = c - (c - a) * INVPHI
            f1 = mf(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + (c - a) * INVPHI
            f2 = mf(x2)
    return 0.5 * (a + c)


def line_search(sigma, direction, b, F, spec: LineSearchSpec = LineSearchSpec()) -> float:
    """Step s >= 0 minimizing phi(s) = gamma(proj(sigma + s * direction)).

    proj clamps to the nonnegative orthant.  The path bends wherever a
    positive coordinate reaches zero, and past the first bend phi is no
    longer the restriction of a convex function to a line, so the search is
    confined to [0, first bend]: there phi is convex, hence unimodal, and
    golden section is exact.  Descent across faces happens over successive
    calls.  The bracket upper end doubles (within the bend) while phi keeps
    decreasing, at most spec.max_expansions times.  Since 0 is always in the
    bracket the slack cannot increase; 0.0 is returned when no strictly
    better step exists.
    """
    sigma = np.asarray(sigma, dtype=np.float64).ravel()
    direction = np.asarray(direction, dtype=np.float64).ravel().copy()
    b = np.asarray(b, dtype=np.float64).ravel()
    F = np.asarray(F, dtype=np.float64)
    # pushing a zero coordinate negative is a no-op after projection
    direction[(sigma <= 0.0) & (direction < 0.0)] = 0.0
    if not np.any(direction):
        return 0.0
    falling = direction < 0.0
    bend = np.inf
    if falling.any():
        bend = float(np.min(sigma[falling] / -direction[falling]))
        if bend <= 0.0:
            return 0.0
    base = F.T @ sigma
    drift = F.T @ direction

    def phi(s: float) -> float:
        w = sigma + s * direction
        neg = w < 0
        scores = base + s * drift
        if neg.any():  # only reachable by rounding exactly at the bend
            scores = scores - F[neg].T @ w[neg]
            w = np.maximum(w, 0.0)
        return float(-np.dot(b, w) + np.maximum(1.0, np.abs(scores)).mean())

    mphi = _Memo(phi)
    at_zero = mphi(0.0)
    c = min(spec.bracket_end, bend)
    for _ in range(spec.max_expansions):
        grown = min(2.0 * c, bend)
        if grown <= c or not mphi(grown) < mphi(c):
            break
        c = grown
    s = golden_section(mphi, 0.0, c, spec.tolerance)
    if not mphi(s) < at_zero:
        # the minimizer may sit exactly on the bend (or bracket) boundary
        s = c
    return s if mphi(s) < at_zero else 0.0


@dataclass
class DescentResult:
    sigma: np.ndarray
    gamma: float
    # rows of (iteration, slack value, count of scores with |s| >= 1)
    trajectory: list[tuple[int, float, int]] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def _active_count(sigma, F) -> int:
    if F.shape[0] == 0:
        return 0
    return int(np.count_nonzero(np.abs(F.T @ sigma) >= 1.0))


def _try_direction(sigma, gamma, direction, b, F, spec):
    step = line_search(sigma, direction, b, F, spec)
    if step > 0.0:
        cand = np.maximum(sigma + step * direction, 0.0)
        # a step onto the bend leaves rounding dust on the clamped coordinate
        cand[cand < 1e-12] = 0.0
        cand_gamma = slack(cand, b, F)
        if cand_gamma < gamma:
            return cand, cand_gamma
    return None


def _steepest_direction(sigma, b, F, kink_tol: float = 1e-5):
    """Minus the min-norm element of (subdifferential + orthant normal cone).

    Scores parked within kink_tol of +-1 contribute a whole slope interval,
    and coordinates at zero admit any nonpositive normal component; the
    min-norm residual r over those degrees of freedom is found by
    bound-constrained least squares.  For any subgradient g, <g, -r> <=
    -|r|^2, so a nonzero r yields a strict-descent direction inside the
    orthant, while |r| ~ 0 is a certificate that sigma is a constrained
    global minimizer of the convex slack.  Returns (direction, |r|).
    """
    n = F.shape[1]
    s = F.T @ sigma
    on_upper = np.abs(s - 1.0) <= kink_tol
    on_lower = np.abs(s + 1.0) <= kink_tol
    kink = on_upper | on_lower
    fixed = np.where(~kink, (s > 1.0) * 1.0 - (s < -1.0) * 1.0, 0.0)
    g0 = -b + (F * fixed).sum(axis=1) / n
    active = np.flatnonzero(sigma <= 0.0)
    cols = []
    lower_bounds = []
    upper_bounds = []
    if kink.any():
        t = np.where(on_upper[kink], 1.0, -1.0)
        cols.append(F[:, kink] * t / n)
        lower_bounds += [0.0] * int(kink.sum())
        upper_bounds += [1.0] * int(kink.sum())
    if active.size:
        E = np.zeros((sigma.shape[0], active.size))
        E[active, np.arange(active.size)] = 1.0
        cols.append(E)
        lower_bounds += [-np.inf] * active.size
        upper_bounds += [0.0] * active.size
    if cols:
        A = np.hstack(cols)
        fit = lsq_linear(A, -g0, bounds=(np.array(lower_bounds),
                                         np.array(upper_bounds)),
                         method="bvls")
        r = g0 + A @ fit.x
    else:
        r = g0
    d = -r
    # movement out of the orthant is blocked; clip rounding residue
    d[active[d[active] < 0.0]] = 0.0
    return d, float(np.linalg.norm(r))


def minimize_slack(b, F, sigma0=None, budget: int = 500,
                   spec: LineSearchSpec = LineSearchSpec(), seed: int = 0,
                   refresh=None, stride: int = 100) -> DescentResult:
    """Projected subgradient descent on the slack, warm-started at sigma0.

    Each iteration line-searches along minus the subgradient and accepts the
    step only if the re-evaluated slack strictly drops, so the recorded
    trajectory is exactly non-increasing.  On a stall, coordinate and seeded
    random directions are probed; if none improves, the descent stops early.

    `refresh`, when given, is called every `stride` iterations and must
    return a fresh (b, F) pair computed on a new unlabeled minibatch; the
    trajectory is then only locally monotone because the objective itself
    moves.
    """
    b = np.asarray(b, dtype=np.float64).ravel()
    F = np.asarray(F, dtype=np.float64)
    p = F.shape[0]
    sigma = np.zeros(p) if sigma0 is None else np.array(sigma0, dtype=np.float64).ravel()
    if sigma.shape[0] != p:
        raise ValueError(f"sigma0 has {sigma.shape[0]} entries for {p} members")
    if np.any(sigma < 0):
        raise ValueError("weights must be nonnegative")
    gamma = slack(sigma, b, F)
    traj = [(0, gamma, _active_count(sigma, F))]
    if p == 0 or budget <= 0:
        return DescentResult(sigma=sigma, gamma=gamma, trajectory=traj,
                             iterations=0, converged=True)

    rng = np.random.default_rng(seed)
    converged = False
    steepest_budget = [25]  # least-squares probes allowed per descent
    it = 0
    for it in range(1, budget + 1):
        if refresh is not None and it > 1 and (it - 1) % stride == 0:
            b, F = refresh()
            b = np.asarray(b, dtype=np.float64).ravel()
            F = np.asarray(F, dtype=np.float64)
            gamma = slack(sigma, b, F)
        g = slack_subgradient(sigma, b, F)
        moved = _try_direction(sigma, gamma, -g, b, F, spec)
        if moved is None:
            moved = _polish(sigma, gamma, b, F, spec, rng, steepest_budget)
        if moved is None:
            traj.append((it, gamma, _active_count(sigma, F)))
            converged = True
            break
        sigma, gamma = moved
        traj.append((it, gamma, _active_count(sigma, F)))
    return DescentResult(sigma=sigma, gamma=gamma, trajectory=traj,
                         iterations=it, converged=converged)


def _polish(sigma, gamma, b, F, spec, rng, steepest_budget):
    """Probe coordinates, random directions, then the min-norm residual."""
    p = sigma.shape[0]
    for i in range(p):
        e = np.zeros(p)
        e[i] = 1.0
        moved = _try_direction(sigma, gamma, e, b, F, spec)
        if moved is not None:
            return moved
        if sigma[i] > 0:
            moved = _try_direction(sigma, gamma, -e, b, F, spec)
            if moved is not None:
                return moved
    for _ in range(max(4, p)):
        d = rng.standard_normal(p)
        norm = np.linalg.norm(d)
        if norm == 0:
            continue
        moved = _try_direction(sigma, gamma, d / norm, b, F, spec)
        if moved is not None:
            return moved
    if steepest_budget[0] > 0:
        steepest_budget[0] -= 1
        d, residual = _steepest_direction(sigma, b, F)
        if residual > 1e-7 and np.linalg.norm(d) > 0:
            return _try_direction(sigma, gamma, d / np.linalg.norm(d), b, F,
                                  spec)
    return None


def total_correct(b, F, sigma, budget: int = 100, **kwargs) -> DescentResult:
    """Re-minimize the slack over the whole current ensemble (warm start)."""
    return minimize_slack(b, F, sigma0=sigma, budget=budget, **kwargs)


def subgradient_box(sigma, b, F, kink_tol: float = 1e-4):
    """Per-coordinate interval hull of the slack subdifferential at sigma.

    Scores within kink_tol of +-1 are treated as sitting on the kink, where
    the potential's slope spans [0, 1] (or [-1, 0]).  Returns (lo, hi) arrays;
    a point is certified optimal when 0 fits in every interval of a positive
    coordinate and hi >= 0 for coordinates at the boundary.
    """
    sigma = np.asarray(sigma, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    F = np.asarray(F, dtype=np.float64)
    n = F.shape[1]
    s = F.T @ sigma
    slope_lo = (s > 1.0 + kink_tol) * 1.0 + (s < -(1.0 - kink_tol)) * -1.0
    slope_hi = (s > 1.0 - kink_tol) * 1.0 + (s < -(1.0 + kink_tol)) * -1.0
    a = F * slope_lo
    bb = F * slope_hi
    lo = -b + np.minimum(a, bb).sum(axis=1) / n
    hi = -b + np.maximum(a, bb).sum(axis=1) / n
    return lo, hi


def certificate_violation(sigma, b, F, kink_tol: float = 1e-4) -> float:
    """Largest violation of the first-order optimality conditions at sigma."""
    sigma = np.asarray(sigma, dtype=np.float64).ravel()
    if sigma.size == 0:
        return 0.0
    lo, hi = subgradient_box(sigma, b, F, kink_tol)
    interior = sigma > 0
    viol = np.maximum(-hi, 0.0)  # every coordinate needs hi >= 0
    viol[interior] = np.maximum(viol[interior], np.maximum(lo[interior], 0.0))
    return float(viol.max())


def write_trajectory_csv(trajectory, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "gamma", "active_margins"])
        for it, gamma, active in trajectory:
            w.writerow([it, repr(float(gamma)), active])


# ---------------------------------------------------------------------------
# Exact oracle for tiny games, independent of the descent path above.


class InfeasibleGameError(ValueError):
    """No labeling in the box satisfies all correlation constraints."""


@dataclass(frozen=True)
class GameSolution:
    value: float
    g: np.ndarray


def polytope_vertices(b, F, feas_tol: float = 1e-9) -> np.ndarray:
    """Vertices of {z in [-1,1]^n : (1/n) F z >= b} by active-set enumeration."""
    F = np.asarray(F, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).ravel()
    p, n = F.shape
    A = np.vstack([np.eye(n), -np.eye(n), -F])
    c = np.concatenate([np.ones(n), np.ones(n), -n * b])
    found = []
    for subset in combinations(range(A.shape[0]), n):
        rows = list(subset)
        try:
            z = np.linalg.solve(A[rows], c[rows])
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(z)) and np.all(A @ z <= c + feas_tol):
            found.append(z)
    if not found:
        raise InfeasibleGameError(
            "correlation constraints admit no labeling in [-1, 1]^n")
    return np.unique(np.round(np.array(found), 9), axis=0)


def _grid_points(pts, n):
    mesh = np.meshgrid(*([pts] * n), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def solve_game_exact(b, F, seed: int = 0) -> GameSolution:
    """Minimax value of the tiny prediction game, solved directly.

    The adversary's best response for a fixed predictor g is a linear program
    over a box-with-halfspaces polytope, solved exactly by enumerating its
    vertices.  The outer minimization over g in [-1,1]^n is convex and is
    done by a coarse full grid, cyclic per-coordinate fine grids (1/50) with
    golden-section refinement, then seeded random-direction line searches.
    Intended for n <= 6 columns and at most 3 members.
    """
    F = np.asarray(F, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).ravel()
    p, n = F.shape
    if n > 6 or p > 3:
        raise ValueError("exact solver is limited to n <= 6 columns, p <= 3 members")
    V = polytope_vertices(b, F)

    def value_at(g):
        return 0.5 - float((V @ g).min()) / (2.0 * n)

    # coarse full grid
    grid = _grid_points(np.linspace(-1.0, 1.0, 9), n)
    best_g, best_f = None, np.inf
    for start in range(0, grid.shape[0], 50_000):
        block = grid[start:start + 50_000]
        vals = 0.5 - (block @ V.T).min(axis=1) / (2.0 * n)
        j = int(np.argmin(vals))
        if vals[j] < best_f:
            best_f, best_g = float(vals[j]), block[j].copy()
    g = best_g

    # cyclic coordinate descent: fine grid then golden-section refinement
    fine = np.linspace(-1.0, 1.0, 101)
    while True:
        improved = False
        for j in range(n):
            partial = V @ g - V[:, j] * g[j]
            vals = 0.5 - (partial[:, None] + V[:, j][:, None] * fine[None, :]).min(axis=0) / (2.0 * n)
            k = int(np.argmin(vals))
            t_best, f_best = float(fine[k]), float(vals[k])

            def along(t):
                return 0.5 - float((partial + V[:, j] * t).min()) / (2.0 * n)

            lo, hi = float(fine[max(k - 1, 0)]), float(fine[min(k + 1, fine.size - 1)])
            if hi > lo:
                t_ref = golden_section(along, lo, hi, tolerance=1e-7)
                f_ref = along(t_ref)
                if f_ref < f_best:
                    t_best, f_best = t_ref, f_ref
            if f_best < value_at(g) - 1e-13:
                g = g.copy()
                g[j] = t_best
                improved = True
        if not improved:
            break

    # random-direction polish within the box
    rng = np.random.default_rng(seed)
    current = value_at(g)
    misses = 0
    while misses < 2 * n + 8:
        d = rng.standard_normal(n)
        d /= np.linalg.norm(d)
        with np.errstate(divide="ignore"):
            upper = np.where(d > 0, (1.0 - g) / d, np.inf)
            lower = np.where(d < 0, (-1.0 - g) / d, np.inf)
        span = float(np.minimum(upper, lower).min())
        if span <= 1e-9:
            misses += 1
            continue

        def along_d(s):
            return 0.5 - float((V @ np.clip(g + s * d, -1.0, 1.0)).min()) / (2.0 * n)

        s_star = golden_section(along_d, 0.0, span, tolerance=1e-7)
        if along_d(s_star) < current - 1e-12:
            g = np.clip(g + s_star * d, -1.0, 1.0)
            current = value_at(g)
            misses = 0
        else:
            misses += 1
    return GameSolution(value=current, g=g)
