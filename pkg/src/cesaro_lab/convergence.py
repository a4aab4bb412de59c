"""Desk-scale experiments for mean convergence of maximal partial normed sums.

For 0 < p < 1 and a family whose p-th power norms are Cesaro uniformly
integrable, E[(M_n / |n|^(1/p))^p] must vanish along growing boxes, with the
explicit envelope eps + a^p / |n|^(1-p) once (eps, a) certify the tails. For
pairwise independent centered fields with finite second moments the centered
maximum obeys E[max ||S_k||] / |n| <= 2 a C log(2 n_1)...log(2 n_d) / |n|^(1/2)
with C the fourth-moment-free maximal constant, which is never pinned to a
number here: only the observed ratio is reported.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import distributions as dist
from .distributions import DistributionSpec
from .lattice import MultiIndex, prefix_table

MIN_TREND_POINTS = 4


def _pmap(fn: Callable, items: Sequence, threads: int) -> list:
    """Ordered map; results are reduced in schedule order regardless of threads."""
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class BoundParams:
    eps: float
    a: float
    C: Optional[float] = None


@dataclass(frozen=True)
class ExperimentConfig:
    spec: DistributionSpec
    p: float
    n_schedule: tuple[MultiIndex, ...]
    reps: int
    seed: int
    center: bool = False
    bound_params: Optional[BoundParams] = None

    def __post_init__(self):
        sched = tuple(self.n_schedule)
        if not sched:
            raise ValueError("n_schedule must be nonempty")
        d = sched[0].d
        if any(n.d != d for n in sched):
            raise ValueError("all schedule boxes must share one dimension d")
        sizes = [n.size for n in sched]
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError("schedule |n| must be strictly increasing")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if not (0 < self.p <= 1):
            raise ValueError("p must lie in (0, 1]")
        object.__setattr__(self, "n_schedule", sched)


@dataclass(frozen=True)
class SeriesPoint:
    n: MultiIndex
    size: int
    moment: float
    stderr: float
    bound: Optional[float] = None
    bound_pass: Optional[bool] = None


@dataclass(frozen=True)
class ConvergenceSeries:
    mode: str  # "lp" | "l1"
    p: float
    reps: int
    seed: int
    center: bool
    centering: Optional[str]  # None | "analytic" | "plugin"
    pairwise_warning: bool
    low_reps: bool
    spec_json: dict
    points: tuple[SeriesPoint, ...]

    def to_csv_text(self) -> str:
        lines = ["d,n_coords,size,moment,stderr,bound,pass"]
        for pt in self.points:
            bound = "" if pt.bound is None else repr(pt.bound)
            ok = "" if pt.bound_pass is None else str(pt.bound_pass).lower()
            lines.append(
                f"{pt.n.d},{pt.n},{pt.size},{pt.moment!r},{pt.stderr!r},{bound},{ok}"
            )
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "p": self.p,
            "reps": self.reps,
            "seed": self.seed,
            "center": self.center,
            "centering": self.centering,
            "pairwise_warning": self.pairwise_warning,
            "low_reps": self.low_reps,
            "spec": self.spec_json,
            "points": [
                {
                    "n": str(pt.n),
                    "size": pt.size,
                    "moment": pt.moment,
                    "stderr": pt.stderr,
                    "bound": pt.bound,
                    "bound_pass": pt.bound_pass,
                }
                for pt in self.points
            ],
        }


def bound_eq23(eps: float, a: float, p: float, n: MultiIndex) -> float:
    """Envelope for the lp moment: eps + a^p / |n|^(1-p)."""
    if eps <= 0:
        raise ValueError("eps must be > 0")
    if a <= 0:
        raise ValueError("a must be > 0")
    if not (0 < p < 1):
        raise ValueError("p must lie in (0, 1)")
    return eps + a**p / n.size ** (1.0 - p)


def bound_eq27(a: float, C: float, n: MultiIndex) -> float:
    """Envelope for the centered l1 moment:
    2 a C log(2 n_1) ... log(2 n_d) / |n|^(1/2), natural logs."""
    if a <= 0:
        raise ValueError("a must be > 0")
    if C <= 0:
        raise ValueError("C must be > 0")
    logs = 1.0
    for c in n.coords:
        logs *= math.log(2.0 * c)
    return 2.0 * a * C * logs / math.sqrt(n.size)


def _max_partial_norms(batch: np.ndarray, d: int) -> np.ndarray:
    """max_k ||S_k|| per replication for a batch shaped (reps, *box, D)."""
    S = prefix_table(batch, range(1, 1 + d))
    norms = np.sqrt((S * S).sum(axis=-1))
    return norms.max(axis=tuple(range(1, 1 + d)))


def _mean_se(vals: np.ndarray) -> tuple[float, float]:
    reps = vals.shape[0]
    m = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
    return m, se


def run_lp_experiment(cfg: ExperimentConfig, threads: int = 1) -> ConvergenceSeries:
    """Moments E[(M_n / |n|^(1/p))^p] along the schedule, 0 < p < 1, uncentered."""
    if not (0 < cfg.p < 1):
        raise ValueError("lp mode needs 0 < p < 1")
    if cfg.center:
        raise ValueError("lp mode is uncentered; use run_l1_experiment to center")

    def point(n: MultiIndex) -> SeriesPoint:
        batch = dist.sample_batch(cfg.spec, n, cfg.seed, cfg.reps)
        M = _max_partial_norms(batch, n.d)
        vals = (M / n.size ** (1.0 / cfg.p)) ** cfg.p
        moment, se = _mean_se(vals)
        bound = bound_pass = None
        if cfg.bound_params is not None:
            bound = bound_eq23(cfg.bound_params.eps, cfg.bound_params.a, cfg.p, n)
            bound_pass = moment <= bound + 3.0 * se
        return SeriesPoint(n, n.size, moment, se, bound, bound_pass)

    points = _pmap(point, cfg.n_schedule, threads)
    return ConvergenceSeries(
        mode="lp",
        p=cfg.p,
        reps=cfg.reps,
        seed=cfg.seed,
        center=False,
        centering=None,
        pairwise_warning=False,
        low_reps=cfg.reps < 30,
        spec_json=cfg.spec.to_json(),
        points=tuple(points),
    )


def run_l1_experiment(cfg: ExperimentConfig, threads: int = 1) -> ConvergenceSeries:
    """Centered moments E[max_k ||S_k - E S_k||] / |n| along the schedule.

    Centers with the family's analytic means when available, otherwise with
    the plug-in per-cell grand mean across replications; a family without the
    pairwise independence flag yields a warning in the series, not an error.
    """
    if cfg.p != 1.0:
        raise ValueError("l1 mode fixes p = 1")
    if not cfg.center:
        raise ValueError("l1 mode centers; set center=True")
    pairwise_warning = not dist.pairwise_independent(cfg.spec)
    centering_used: list[str] = []

    def point(n: MultiIndex) -> SeriesPoint:
        batch = dist.sample_batch(cfg.spec, n, cfg.seed, cfg.reps)
        means = dist.mean_vector_field(cfg.spec, n)
        if means is not None:
            centered = batch - means[np.newaxis]
            centering_used.append("analytic")
        else:
            centered = batch - batch.mean(axis=0, keepdims=True)
            centering_used.append("plugin")
        M = _max_partial_norms(centered, n.d)
        vals = M / n.size
        moment, se = _mean_se(vals)
        bound = bound_pass = None
        if cfg.bound_params is not None:
            if cfg.bound_params.C is None:
                raise ValueError("l1 bound needs C in bound_params")
            bound = bound_eq27(cfg.bound_params.a, cfg.bound_params.C, n)
            bound_pass = moment <= bound + 3.0 * se
        return SeriesPoint(n, n.size, moment, se, bound, bound_pass)

    points = _pmap(point, cfg.n_schedule, threads)
    return ConvergenceSeries(
        mode="l1",
        p=1.0,
        reps=cfg.reps,
        seed=cfg.seed,
        center=True,
        centering=centering_used[0] if centering_used else None,
        pairwise_warning=pairwise_warning,
        low_reps=cfg.reps < 30,
        spec_json=cfg.spec.to_json(),
        points=tuple(points),
    )


@dataclass(frozen=True)
class MoriczPoint:
    n: MultiIndex
    numerator: float
    num_stderr: float
    denominator: float
    ratio: float


def moricz_ratio(
    spec: DistributionSpec,
    n_schedule: Sequence[MultiIndex],
    reps: int = 500,
    seed: int = 0,
    threads: int = 1,
) -> list[MoriczPoint]:
    """Observed E[max_k ||S_k||^2] against log^2(2 n_1)...log^2(2 n_d) sum E||X_i||^2.

    Requires a zero-mean, pairwise independent family with closed-form finite
    second moments; the maximal constant is whatever the data shows.
    """
    if not dist.zero_mean(spec):
        raise ValueError("moricz_ratio needs a zero-mean family")
    if not dist.pairwise_independent(spec):
        raise ValueError("moricz_ratio needs a pairwise independent family")
    sched = list(n_schedule)
    if not sched:
        raise ValueError("n_schedule must be nonempty")

    def point(n: MultiIndex) -> MoriczPoint:
        sm = dist.second_moment_field(spec, n)
        if sm is None:
            raise ValueError("moricz_ratio needs closed-form second moments")
        total = float(sm.sum())
        if not math.isfinite(total) or total <= 0:
            raise ValueError("second moments must be finite and not all zero")
        batch = dist.sample_batch(spec, n, seed, reps)
        M = _max_partial_norms(batch, n.d)
        num, se = _mean_se(M * M)
        logs = 1.0
        for c in n.coords:
            logs *= math.log(2.0 * c) ** 2
        den = logs * total
        return MoriczPoint(n, num, se, den, num / den)

    return _pmap(point, sched, threads)


@dataclass(frozen=True)
class TrendVerdict:
    passed: bool
    halving_ok: bool
    slope_ok: bool
    slope: float
    first_moment: float
    last_moment: float

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "halving_ok": self.halving_ok,
            "slope_ok": self.slope_ok,
            "slope": self.slope,
            "first_moment": self.first_moment,
            "last_moment": self.last_moment,
        }


def trend_test(series: ConvergenceSeries) -> TrendVerdict:
    """Decreasing-trend gate: the last moment (plus noise) must fall below half
    the first (minus noise), and log-moment vs log-size must slope downward."""
    pts = series.points
    if len(pts) < MIN_TREND_POINTS:
        raise ValueError(f"trend test needs at least {MIN_TREND_POINTS} schedule points")
    first, last = pts[0], pts[-1]
    halving = (last.moment + 2.0 * last.stderr) < (first.moment - 2.0 * first.stderr) / 2.0
    moments = np.array([pt.moment for pt in pts])
    sizes = np.array([pt.size for pt in pts], dtype=np.float64)
    if np.all(moments > 0):
        slope = float(np.polyfit(np.log(sizes), np.log(moments), 1)[0])
        slope_ok = slope < 0
    else:
        slope = math.nan
        slope_ok = False
    return TrendVerdict(
        passed=halving and slope_ok,
        halving_ok=halving,
        slope_ok=slope_ok,
        slope=slope,
        first_moment=first.moment,
        last_moment=last.moment,
    )


@dataclass(frozen=True)
class BoundReport:
    all_pass: bool
    margins: tuple[float, ...]

    def to_json(self) -> dict:
        return {"all_pass": self.all_pass, "margins": list(self.margins)}


def bound_domination_check(series: ConvergenceSeries) -> BoundReport:
    """Every observed moment must sit at or below its envelope within 3 stderr."""
    if any(pt.bound is None for pt in series.points):
        raise ValueError("series has no bound column; rerun with bound_params")
    margins = tuple(pt.bound + 3.0 * pt.stderr - pt.moment for pt in series.points)
    return BoundReport(all_pass=all(m >= 0 for m in margins), margins=margins)
