"""Adaptive stratified Monte Carlo on the unit hypercube.

Strata are axis-aligned boxes. Each iteration allocates a batch of samples
by the hybrid rule (a convex combination of proportional and
variance-optimal allocation), evaluates them, and then bisects the one
stratum/coordinate pair that most reduces ``sum_S p_S * sigma_S``.
"""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

SCHEMA_VERSION = 1


class EvaluationError(RuntimeError):
    """The integrand failed; ``point`` holds the offending input."""

    def __init__(self, point, cause):
        super().__init__(f"integrand failed at {np.asarray(point).tolist()}: {cause!r}")
        self.point = np.asarray(point)


@dataclass
class Stratum:
    lower: np.ndarray
    upper: np.ndarray
    points: np.ndarray = None  # (n_samples, dim)
    values: np.ndarray = None

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if np.any(self.lower < 0) or np.any(self.upper > 1) or np.any(self.lower >= self.upper):
            raise ValueError("stratum bounds must satisfy 0 <= low < high <= 1")
        if self.points is None:
            self.points = np.empty((0, self.lower.size))
            self.values = np.empty(0)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def p(self) -> float:
        return float(np.prod(self.upper - self.lower))

    @property
    def n_samples(self) -> int:
        return self.values.size

    @property
    def mean(self) -> float:
        if self.n_samples == 0:
            raise ValueError("mean of an empty stratum")
        return float(self.values.mean())

    @property
    def m2(self) -> float:
        """Sum of squared deviations from the stratum mean."""
        return float(np.sum((self.values - self.values.mean()) ** 2)) if self.n_samples else 0.0

    @property
    def sigma(self) -> float:
        """Sample standard deviation; needs at least two samples."""
        if self.n_samples < 2:
            raise ValueError("sigma needs at least two samples")
        return math.sqrt(self.m2 / (self.n_samples - 1))

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        inside = np.all((x >= self.lower) & (x < self.upper), axis=1)
        # the closed upper face of the unit cube belongs to the boundary stratum
        at_top = np.all((x >= self.lower) & ((x < self.upper) | (self.upper == 1.0) & (x <= 1.0)), axis=1)
        return inside | at_top

    def add(self, points, values) -> None:
        self.points = np.vstack([self.points, np.atleast_2d(points)])
        self.values = np.concatenate([self.values, np.atleast_1d(values)])

    def split(self, coord: int) -> tuple["Stratum", "Stratum"]:
        mid = 0.5 * (self.lower[coord] + self.upper[coord])
        up_lo, lo_hi = self.upper.copy(), self.lower.copy()
        up_lo[coord] = mid
        lo_hi[coord] = mid
        left, right = Stratum(self.lower.copy(), up_lo), Stratum(lo_hi, self.upper.copy())
        mask = self.points[:, coord] < mid
        left.add(self.points[mask], self.values[mask])
        right.add(self.points[~mask], self.values[~mask])
        return left, right

    def to_dict(self) -> dict:
        d = {"lower": self.lower.tolist(), "upper": self.upper.tolist(), "p": self.p,
             "n_samples": self.n_samples}
        if self.n_samples:
            d["mean"] = self.mean
        if self.n_samples >= 2:
            d["sigma"] = self.sigma
        return d


@dataclass
class Stratification:
    strata: list
    alpha: float = 0.5
    batch: int = 50

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        if self.batch < 1:
            raise ValueError("batch must be positive")

    @classmethod
    def unit(cls, dim: int, alpha: float = 0.5, batch: int = 50) -> "Stratification":
        return cls([Stratum(np.zeros(dim), np.ones(dim))], alpha, batch)

    @property
    def dim(self) -> int:
        return self.strata[0].dim

    @property
    def n_total(self) -> int:
        return sum(s.n_samples for s in self.strata)

    def probabilities(self) -> np.ndarray:
        return np.array([s.p for s in self.strata])

    def check_partition(self, tol: float = 1e-12) -> None:
        if abs(self.probabilities().sum() - 1.0) > tol:
            raise ValueError("stratum probabilities do not sum to one")
        for i, a in enumerate(self.strata):
            for b in self.strata[i + 1:]:
                overlap = np.minimum(a.upper, b.upper) - np.maximum(a.lower, b.lower)
                if np.all(overlap > 0):
                    raise ValueError("strata overlap")

    def snapshot(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "alpha": self.alpha, "batch": self.batch,
                "strata": [s.to_dict() for s in self.strata]}


# -- allocation -------------------------------------------------------------

def largest_remainder(targets, total: int, priority=None) -> np.ndarray:
    """Integer counts summing to ``total`` that round real ``targets``.

    Leftover units go to the largest fractional parts; ties go to the larger
    ``priority`` (default: the larger target), then to the lower index.
    """
    targets = np.asarray(targets, dtype=float)
    base = np.floor(targets + 1e-12).astype(int)
    left = int(total - base.sum())
    if left < 0:
        raise ValueError("targets exceed total")
    rem = np.round(targets - base, 12)
    pri = targets if priority is None else np.asarray(priority, dtype=float)
    order = sorted(range(targets.size), key=lambda i: (-rem[i], -pri[i], i))
    for i in order[:left]:
        base[i] += 1
    return base


def _proportional(p, n, subset=None) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    w = p if subset is None else np.where(subset, p, 0.0)
    return largest_remainder(n * w / w.sum(), n)


def allocate_hybrid(s: Stratification, n_new: int) -> np.ndarray:
    """Counts per stratum for the next ``n_new`` samples.

    Strata with fewer than two samples are topped up to two first; when
    ``n_new`` cannot cover that, the batch goes proportionally to those
    strata alone. Strata whose spread is not yet estimable take their
    proportional share of the remainder; the rest is split by
    ``(1 - alpha) * p_S + alpha * p_S sigma_S / sum(p sigma)``.
    """
    if n_new < 0:
        raise ValueError("n_new must be non-negative")
    p = s.probabilities()
    n_have = np.array([st.n_samples for st in s.strata])
    seed = np.maximum(0, 2 - n_have)
    if seed.sum() > n_new:
        return _proportional(p, n_new, subset=seed > 0) if n_new else np.zeros(p.size, int)
    rest = n_new - int(seed.sum())
    known = n_have >= 2
    sig = np.array([st.sigma if k else 0.0 for st, k in zip(s.strata, known)])
    target = np.zeros(p.size)
    target[~known] = rest * p[~known]
    share = rest * p[known].sum()
    if known.any() and share > 0:
        pk = p[known]
        prop = pk / pk.sum()
        ps = pk * sig[known]
        opt = ps / ps.sum() if ps.sum() > 0 else prop
        target[known] = share * ((1 - s.alpha) * prop + s.alpha * opt)
    return seed + largest_remainder(target, rest)


# -- estimators -------------------------------------------------------------

def estimate(s: Stratification) -> float:
    """Stratified mean ``sum_S p_S * mean_S``."""
    total = 0.0
    for i, st in enumerate(s.strata):
        if st.n_samples == 0:
            raise ValueError(f"stratum {i} has no samples")
        total += st.p * st.mean
    return total


def estimator_variance(s: Stratification, n_total: int | None = None) -> float:
    """Nominal variance of the hybrid estimator for ``n_total`` samples.

    ``(1/N) sum_S p_S sigma_S^2 / (1 + alpha (sigma_S / sum_T p_T sigma_T - 1))``,
    exact when allocation follows the hybrid rule with the true spreads.
    """
    n_total = s.n_total if n_total is None else n_total
    if n_total <= 0:
        raise ValueError("n_total must be positive")
    for i, st in enumerate(s.strata):
        if st.n_samples < 2:
            raise ValueError(f"stratum {i} has fewer than two samples")
    return hybrid_variance(s.probabilities(), np.array([st.sigma for st in s.strata]), s.alpha, n_total)


def hybrid_variance(p, sigma, alpha: float, n_total: int) -> float:
    p, sigma = np.asarray(p, dtype=float), np.asarray(sigma, dtype=float)
    norm = float(np.sum(p * sigma))
    if norm == 0:
        return 0.0
    sbar = sigma / norm
    return float(np.sum(p * sigma ** 2 / (1 + alpha * (sbar - 1))) / n_total)


def stratified_variance(s: Stratification) -> float:
    """Plug-in variance ``sum_S p_S^2 sigma_S^2 / N_S`` for the realised allocation."""
    return float(sum(st.p ** 2 * st.sigma ** 2 / st.n_samples for st in s.strata))


# -- adaptation -------------------------------------------------------------

def split_scores(s: Stratification) -> list[tuple[float, int, int]]:
    """``(score, stratum, coordinate)`` for every admissible midpoint bisection."""
    out = []
    for i, st in enumerate(s.strata):
        if st.n_samples < 4:
            continue
        parent = st.p * st.sigma
        for c in range(st.dim):
            left, right = st.split(c)
            if left.n_samples < 2 or right.n_samples < 2:
                continue
            out.append((parent - left.p * left.sigma - right.p * right.sigma, i, c))
    return out


def adapt(s: Stratification) -> tuple[Stratification, tuple | None]:
    """Execute the best bisection if it lowers ``sum p sigma``; returns (stratification, split)."""
    best = None
    for score, i, c in split_scores(s):
        if score > 1e-14 and (best is None or score > best[0]):
            best = (score, i, c)
    if best is None:
        return s, None
    _, i, c = best
    left, right = s.strata[i].split(c)
    strata = s.strata[:i] + [left, right] + s.strata[i + 1:]
    return Stratification(strata, s.alpha, s.batch), (i, c)


# -- drivers ----------------------------------------------------------------

def worker_count() -> int:
    env = os.environ.get("FAULTFLOW_THREADS")
    if env:
        return max(1, int(env))
    return max(1, min(8, os.cpu_count() or 1))


def evaluate_points(f: Callable, points: np.ndarray, workers: int | None = None,
                    vectorized: bool = False) -> np.ndarray:
    """Evaluate ``f`` row-wise; results keep the input order regardless of workers."""
    if points.shape[0] == 0:
        return np.empty(0)
    if vectorized:
        return np.asarray(f(points), dtype=float).reshape(points.shape[0])

    def one(x):
        try:
            return float(f(x))
        except Exception as exc:  # attach the failing point
            raise EvaluationError(x, exc) from exc

    workers = worker_count() if workers is None else workers
    if workers <= 1 or points.shape[0] == 1:
        return np.array([one(x) for x in points])
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return np.array(list(pool.map(one, points)))


@dataclass
class EstimatorResult:
    method: str
    estimate: float
    variance: float  # nominal (hybrid formula) for adss, sigma^2/N for smc
    n_evals: int
    stratification: Stratification
    log_iteration: np.ndarray
    log_stratum: np.ndarray
    log_points: np.ndarray
    log_values: np.ndarray
    splits: list = field(default_factory=list)

    @property
    def stratified_variance(self) -> float:
        return stratified_variance(self.stratification)

    def write_log(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "stratum_id"] + [f"u{j}" for j in range(self.log_points.shape[1])]
                       + ["q_value"])
            for k in range(self.log_values.size):
                w.writerow([int(self.log_iteration[k]), int(self.log_stratum[k])]
                           + [repr(float(v)) for v in self.log_points[k]] + [repr(float(self.log_values[k]))])

    def write_snapshot(self, path) -> None:
        snap = self.stratification.snapshot()
        snap.update({"method": self.method, "estimate": self.estimate, "variance": self.variance,
                     "n_evals": self.n_evals, "splits": [list(x) for x in self.splits]})
        Path(path).write_text(json.dumps(snap, indent=2))


def run_adaptive(f: Callable, dim: int, budget: int, alpha: float = 0.5, batch: int = 50, seed=0,
                 adapt_strata: bool = True, workers: int | None = None, vectorized: bool = False,
                 stratification: Stratification | None = None) -> EstimatorResult:
    """Adaptive stratified sampling with hybrid allocation.

    All points of an iteration are drawn before any evaluation, so results
    depend only on ``seed``. No split follows the final batch.
    """
    if budget < batch:
        raise ValueError("budget must be at least one batch")
    rng = np.random.default_rng(seed)
    s = stratification or Stratification.unit(dim, alpha, batch)
    s = Stratification(list(s.strata), alpha, batch)
    logs_it, logs_st, logs_pt, logs_q = [], [], [], []
    splits = []
    used, it = 0, 0
    while used < budget:
        m = min(batch, budget - used)
        counts = allocate_hybrid(s, m)
        pts, owner = [], []
        for i, (st, c) in enumerate(zip(s.strata, counts)):
            if c:
                pts.append(rng.uniform(st.lower, st.upper, size=(c, dim)))
                owner.append(np.full(c, i))
        pts = np.vstack(pts)
        owner = np.concatenate(owner)
        q = evaluate_points(f, pts, workers, vectorized)
        for i in range(len(s.strata)):
            sel = owner == i
            if sel.any():
                s.strata[i].add(pts[sel], q[sel])
        logs_it.append(np.full(m, it))
        logs_st.append(owner)
        logs_pt.append(pts)
        logs_q.append(q)
        used += m
        it += 1
        if adapt_strata and used < budget:
            s, done = adapt(s)
            if done is not None:
                splits.append((it, *done))
    var = estimator_variance(s, used) if all(st.n_samples >= 2 for st in s.strata) else float("nan")
    return EstimatorResult("adss", estimate(s), var, used, s, np.concatenate(logs_it),
                           np.concatenate(logs_st), np.vstack(logs_pt), np.concatenate(logs_q), splits)


def run_smc(f: Callable, dim: int, budget: int, seed=0, workers: int | None = None,
            vectorized: bool = False) -> EstimatorResult:
    """Plain Monte Carlo: sample mean and ``sigma^2 / N``."""
    if budget < 1:
        raise ValueError("budget must be positive")
    rng = np.random.default_rng(seed)
    pts = rng.uniform(size=(budget, dim))
    q = evaluate_points(f, pts, workers, vectorized)
    s = Stratification.unit(dim, 0.0, budget)
    s.strata[0].add(pts, q)
    var = float(q.var(ddof=1) / budget) if budget > 1 else float("nan")
    return EstimatorResult("smc", float(q.mean()), var, budget, s, np.zeros(budget, int),
                           np.zeros(budget, int), pts, q)


@dataclass
class SpeedupResult:
    speedup: float
    var_mc: float
    var_adss: float
    estimates: np.ndarray
    smc: EstimatorResult
    runs: list

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "speedup": self.speedup, "var_mc": self.var_mc,
                "var_adss": self.var_adss, "adss_estimates": self.estimates.tolist(),
                "adss_mean": float(self.estimates.mean()), "smc_estimate": self.smc.estimate,
                "repeats": int(self.estimates.size)}


def measure_speedup(f: Callable, dim: int, budget: int, repeats: int = 20, seed=0, alpha: float = 0.5,
                    batch: int = 50, adapt_strata: bool = True, workers: int | None = None,
                    vectorized: bool = False) -> SpeedupResult:
    """Ratio of the Monte Carlo variance ``sigma^2/N`` to the spread of repeated adaptive estimates."""
    if repeats < 20:
        raise ValueError("at least 20 repeats are needed for a variance estimate")
    seqs = np.random.SeedSequence(seed).spawn(repeats + 1)
    smc = run_smc(f, dim, budget, seqs[0], workers, vectorized)
    runs = [run_adaptive(f, dim, budget, alpha, batch, sq, adapt_strata, workers, vectorized) for sq in seqs[1:]]
    est = np.array([r.estimate for r in runs])
    var_adss = float(est.var(ddof=1))
    speedup = smc.variance / var_adss if var_adss > 0 else math.inf
    return SpeedupResult(speedup, smc.variance, var_adss, est, smc, runs)
