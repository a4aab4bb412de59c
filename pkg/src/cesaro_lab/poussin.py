"""Constructive de La Vallee Poussin criterion for Cesaro uniform integrability.

From a CUI family one extracts integer tail levels N_1 < N_2 < ... with
tail sup at N_j below 2^-j, counts u_n = card{j : N_j < n}, and integrates
the step function with those slopes into a convex piecewise-linear phi with
phi(t)/t nondecreasing and unbounded. The family's Cesaro-averaged
E(phi(||X_i||)) then stays at or below 1, and conversely a slope level a
with phi(a)/a >= (K+1)/eps pushes the tail sup at a below eps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import distributions as dist
from .cui import _aggregate_sup, _resolve_schedule, cesaro_tail_sup
from .distributions import DistributionSpec
from .errors import HorizonTooSmallError, PhiDomainError
from .lattice import MultiIndex, schedule_averages

DEFAULT_SEARCH_CAP = 64


@dataclass(frozen=True, eq=False)
class PhiFunction:
    """Convex piecewise-linear phi(t) = integral_0^t g, where g equals u[k]
    on [k, k+1); phi(0) = 0 and the domain is [0, n_max]."""

    u: np.ndarray  # integer slopes, u[k] is the slope on [k, k+1)
    prefix: np.ndarray  # prefix[k] = phi(k), exact integers

    def __init__(self, u):
        raw = np.asarray(u)
        if raw.ndim != 1 or raw.size == 0:
            raise ValueError("u must be a nonempty 1-d integer list")
        arr = raw.astype(np.int64)
        if not np.array_equal(arr, raw):
            raise ValueError("slope counts must be integers")
        if np.any(arr < 0):
            raise ValueError("slope counts must be >= 0")
        if np.any(np.diff(arr) < 0):
            raise ValueError("slope counts must be nondecreasing")
        arr.flags.writeable = False
        prefix = np.concatenate([[0], np.cumsum(arr)])
        prefix.flags.writeable = False
        object.__setattr__(self, "u", arr)
        object.__setattr__(self, "prefix", prefix)

    @property
    def n_max(self) -> int:
        return int(self.u.size)

    def to_json(self) -> dict:
        return {"u": [int(v) for v in self.u]}

    @classmethod
    def from_json(cls, obj) -> "PhiFunction":
        if "u" not in obj:
            raise ValueError("phi serialization must contain 'u'")
        return cls(obj["u"])


def u_from_thresholds(thresholds: Sequence[int], n_max: int) -> np.ndarray:
    """Slope counts u_n = card{j >= 1 : N_j < n} for n = 1..n_max."""
    N = np.asarray(list(thresholds), dtype=np.int64)
    if N.size == 0:
        raise ValueError("need at least one threshold")
    if np.any(N < 1):
        raise ValueError("thresholds must be positive integers")
    if np.any(np.diff(N) <= 0):
        raise ValueError("thresholds must be strictly increasing")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    n = np.arange(1, n_max + 1)
    return np.searchsorted(N, n, side="left").astype(np.int64)


def phi_eval(phi: PhiFunction, t: float) -> float:
    """phi(t) for t in [0, n_max]: on [n-1, n) this is
    sum_{i<n} u_i + (t - n + 1) u_n, continuous across pieces."""
    t = float(t)
    if not (0.0 <= t <= phi.n_max):
        raise PhiDomainError(f"t={t} outside domain [0, {phi.n_max}]")
    if t == phi.n_max:
        return float(phi.prefix[-1])
    k = int(math.floor(t))
    return float(phi.prefix[k] + (t - k) * phi.u[k])


def phi_eval_many(phi: PhiFunction, ts: np.ndarray) -> np.ndarray:
    ts = np.asarray(ts, dtype=np.float64)
    if ts.size and (ts.min() < 0.0 or ts.max() > phi.n_max):
        raise PhiDomainError(
            f"values outside domain [0, {phi.n_max}] (max seen: {ts.max()!r}); enlarge n_max"
        )
    k = np.minimum(np.floor(ts).astype(np.int64), phi.n_max - 1)
    return phi.prefix[k] + (ts - k) * phi.u[k]


@dataclass(frozen=True)
class PhiPropertyReport:
    zero_at_zero: bool
    slopes_nondecreasing: bool
    ratio_nondecreasing: bool
    growth_attained: bool
    end_ratio: float
    growth_floor: float

    @property
    def all_pass(self) -> bool:
        return (
            self.zero_at_zero
            and self.slopes_nondecreasing
            and self.ratio_nondecreasing
            and self.growth_attained
        )


def verify_phi_properties(
    phi: PhiFunction,
    grid: Optional[np.ndarray] = None,
    growth_floor: float = 0.1,
) -> PhiPropertyReport:
    """Check phi(0)=0, convexity via nondecreasing slopes, monotone phi(t)/t
    along the grid, and that the end ratio clears a configured growth floor
    (a finite-domain stand-in for phi(t)/t -> infinity)."""
    if grid is None:
        grid = np.arange(1, phi.n_max + 1, dtype=np.float64)
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0 or np.any(grid <= 0):
        raise ValueError("grid must be nonempty and positive")
    ratios = phi_eval_many(phi, grid) / grid
    slack = 1e-12 * np.maximum(1.0, np.abs(ratios[:-1]))
    return PhiPropertyReport(
        zero_at_zero=phi_eval(phi, 0.0) == 0.0,
        slopes_nondecreasing=bool(np.all(np.diff(phi.u) >= 0)),
        ratio_nondecreasing=bool(np.all(np.diff(ratios) >= -slack)),
        growth_attained=bool(ratios[-1] >= growth_floor),
        end_ratio=float(ratios[-1]),
        growth_floor=growth_floor,
    )


def thresholds_from_cui(
    spec: DistributionSpec,
    horizon: MultiIndex,
    p: float = 1.0,
    schedule: Optional[Sequence[MultiIndex]] = None,
    reps: int = 200,
    seed: int = 0,
    j_max: int = 8,
    search_cap: int = DEFAULT_SEARCH_CAP,
) -> tuple[int, ...]:
    """Minimal strictly increasing integer levels N_j with tail sup
    (indicator ||X|| >= N_j) at or below 2^-j, searched up to `search_cap`.

    The cap is part of the verdict: a family whose tails do not decay on this
    horizon runs past it and raises HorizonTooSmallError.
    """
    if j_max < 1:
        raise ValueError("j_max must be >= 1")
    if search_cap < 1:
        raise ValueError("search_cap must be >= 1")
    sched = _resolve_schedule(horizon, schedule)

    def sup_at(level: int) -> float:
        est = cesaro_tail_sup(spec, p, float(level), horizon, sched, reps, seed, ge=True)
        return est.upper()

    out: list[int] = []
    prev = 0
    for j in range(1, j_max + 1):
        target = 2.0**-j
        lo, hi = prev + 1, search_cap
        if lo > hi or sup_at(hi) > target:
            raise HorizonTooSmallError(
                f"no tail level <= {search_cap} reaches 2^-{j} on horizon {horizon}; "
                "the family's Cesaro tails do not decay within the disclosed cap"
            )
        while lo < hi:
            mid = (lo + hi) // 2
            if sup_at(mid) <= target:
                hi = mid
            else:
                lo = mid + 1
        out.append(lo)
        prev = lo
    return tuple(out)


@dataclass(frozen=True)
class PoussinConstruction:
    thresholds: tuple[int, ...]
    phi: PhiFunction
    n_max: int
    calibration_max_norm: float


def build_phi_from_cui(
    spec: DistributionSpec,
    horizon: MultiIndex,
    p: float = 1.0,
    schedule: Optional[Sequence[MultiIndex]] = None,
    reps: int = 200,
    seed: int = 0,
    j_max: int = 8,
    search_cap: int = DEFAULT_SEARCH_CAP,
    n_max: Optional[int] = None,
) -> PoussinConstruction:
    """End-to-end construction: tail levels -> slope counts -> phi.

    n_max defaults to max(ceil(4 * calibration max norm), 2 * N_jmax, 64) so
    both the family's norms and the useful slope range stay inside the domain.
    """
    thresholds = thresholds_from_cui(
        spec, horizon, p, schedule, reps, seed, j_max, search_cap
    )
    bound = dist.norm_bound(spec, horizon)
    if bound is None:
        calib = float(dist.norm_batch(spec, horizon, seed, max(reps, 1)).max())
    else:
        calib = float(bound)
    if n_max is None:
        n_max = max(math.ceil(4 * calib), 2 * max(thresholds), 64)
    if n_max < max(thresholds):
        raise ValueError(f"n_max={n_max} does not cover the largest threshold {max(thresholds)}")
    u = u_from_thresholds(thresholds, n_max)
    return PoussinConstruction(
        thresholds=tuple(int(v) for v in thresholds),
        phi=PhiFunction(u),
        n_max=int(n_max),
        calibration_max_norm=calib,
    )


@dataclass(frozen=True)
class MomentEstimate:
    value: float
    stderr: float
    mode: str
    argmax_box: MultiIndex


def poussin_moment_check(
    spec: DistributionSpec,
    phi: PhiFunction,
    horizon: MultiIndex,
    schedule: Optional[Sequence[MultiIndex]] = None,
    reps: int = 200,
    seed: int = 0,
) -> MomentEstimate:
    """Schedule sup of Cesaro-averaged E(phi(||X_i||)).

    Exact for deterministic-value families; Monte Carlo otherwise. Any norm
    beyond phi's domain raises PhiDomainError (enlarge n_max).
    """
    sched = _resolve_schedule(horizon, schedule)
    fam = dist.get_family(spec.family)
    if isinstance(fam, dist._DeterministicFamily):
        vals = np.abs(fam.cell_values(spec, horizon))
        fld = phi_eval_many(phi, vals)
        avgs = schedule_averages(fld, sched)
        j = int(np.argmax(avgs))
        return MomentEstimate(float(avgs[j]), 0.0, "analytic", sched[j])
    norms = dist.norm_batch(spec, horizon, seed, reps)
    fld = phi_eval_many(phi, norms)
    value, se, box = _aggregate_sup(schedule_averages(fld, sched), sched)
    return MomentEstimate(value, se, "empirical", box)


@dataclass(frozen=True)
class ForwardCheck:
    eps: float
    K: float
    level: int
    ratio: float
    tail_sup: float
    tail_stderr: float
    passed: bool


def poussin_forward_check(
    spec: DistributionSpec,
    phi: PhiFunction,
    eps_list: Sequence[float],
    horizon: MultiIndex,
    schedule: Optional[Sequence[MultiIndex]] = None,
    reps: int = 200,
    seed: int = 0,
) -> list[ForwardCheck]:
    """Forward direction: with K the phi-moment sup, the first integer level a
    where phi(a)/a >= (K+1)/eps must push the tail sup at a below eps."""
    if not eps_list:
        raise ValueError("eps_list must be nonempty")
    sched = _resolve_schedule(horizon, schedule)
    mom = poussin_moment_check(spec, phi, horizon, sched, reps, seed)
    K = mom.value + 2.0 * mom.stderr
    levels = np.arange(1, phi.n_max + 1, dtype=np.float64)
    ratios = phi.prefix[1:] / levels
    out = []
    for eps in eps_list:
        if eps <= 0:
            raise ValueError("eps must be > 0")
        target = (K + 1.0) / eps
        hits = np.nonzero(ratios >= target)[0]
        if hits.size == 0:
            raise PhiDomainError(
                f"phi(t)/t never reaches {target!r} within [1, {phi.n_max}]; "
                "enlarge n_max or deepen the threshold list"
            )
        a = int(hits[0] + 1)
        tail = cesaro_tail_sup(spec, 1.0, float(a), horizon, sched, reps, seed, ge=False)
        out.append(
            ForwardCheck(
                eps=float(eps),
                K=K,
                level=a,
                ratio=float(ratios[a - 1]),
                tail_sup=tail.value,
                tail_stderr=tail.stderr,
                passed=tail.upper() < eps,
            )
        )
    return out
