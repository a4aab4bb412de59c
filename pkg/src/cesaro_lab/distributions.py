"""Named generative families of lattice vector arrays.

Each family documents its dependence structure and whether the p-th power
norms are Cesaro uniformly integrable; closed-form moments are exposed where
the family admits them. Samplers are pure functions of (spec, box, seed):
cell i draws from a counter-based stream keyed by (seed, i), so enlarging a
box never changes previously generated cells.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import rng
from .errors import NoClosedFormError
from .lattice import LatticeSample, MultiIndex

MOMENT_MODES = ("analytic", "empirical")


@dataclass(frozen=True)
class DistributionSpec:
    """Declarative description of one generative family instance."""

    family: str
    params: Mapping[str, float] = field(default_factory=dict)
    dim_D: int = 8
    moment_mode: str = "analytic"

    def __post_init__(self):
        fam = get_family(self.family)
        object.__setattr__(self, "params", dict(self.params))
        if int(self.dim_D) < 1:
            raise ValueError("dim_D must be >= 1")
        object.__setattr__(self, "dim_D", int(self.dim_D))
        if self.moment_mode not in MOMENT_MODES:
            raise ValueError(f"moment_mode must be one of {MOMENT_MODES}")
        fam.validate(self)

    def param(self, name: str) -> float:
        fam = get_family(self.family)
        return self.params.get(name, fam.defaults[name])

    def to_json(self) -> dict:
        return {
            "family": self.family,
            "params": dict(self.params),
            "dim_D": self.dim_D,
            "moment_mode": self.moment_mode,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "DistributionSpec":
        extra = set(obj) - {"family", "params", "dim_D", "moment_mode"}
        if extra:
            raise ValueError(f"unknown spec fields: {sorted(extra)}")
        if "family" not in obj:
            raise ValueError("spec is missing 'family'")
        return cls(
            family=obj["family"],
            params=obj.get("params", {}),
            dim_D=obj.get("dim_D", 8),
            moment_mode=obj.get("moment_mode", "analytic"),
        )

    @classmethod
    def from_json_str(cls, text: str) -> "DistributionSpec":
        return cls.from_json(json.loads(text))


def _coord_grids(box: MultiIndex) -> list[np.ndarray]:
    """Sparse coordinate grids with a leading replication axis slot."""
    d = box.d
    grids = []
    for k, c in enumerate(box.coords):
        shape = (1,) * (k + 1) + (c,) + (1,) * (d - 1 - k)
        grids.append(np.arange(1, c + 1, dtype=np.uint64).reshape(shape))
    return grids


def _radial(vals: np.ndarray, D: int) -> np.ndarray:
    out = np.zeros(vals.shape + (D,), dtype=np.float64)
    out[..., 0] = vals
    return out


class Family:
    """Base for family implementations; closed forms default to unavailable."""

    name: str = ""
    max_d: int | None = None
    pairwise_independent: bool = True
    defaults: dict[str, float] = {}

    def validate(self, spec: DistributionSpec) -> None:
        unknown = set(spec.params) - set(self.defaults)
        if unknown:
            raise ValueError(f"unknown params for family {self.name}: {sorted(unknown)}")

    def check_box(self, box: MultiIndex) -> None:
        if self.max_d is not None and box.d > self.max_d:
            raise ValueError(f"family {self.name} is defined for d <= {self.max_d}")

    def zero_mean(self, spec: DistributionSpec) -> bool:
        return False

    def is_cui(self, spec: DistributionSpec, p: float) -> bool:
        raise NotImplementedError

    def norm_bound(self, spec: DistributionSpec, horizon: MultiIndex) -> float | None:
        """Almost-sure upper bound on cell norms over the box, if one exists."""
        return None

    # --- sampling -------------------------------------------------------
    def vectors(self, spec, box: MultiIndex, starts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def norm_values(self, spec, box: MultiIndex, starts: np.ndarray) -> np.ndarray:
        v = self.vectors(spec, box, starts)
        return np.sqrt((v * v).sum(axis=-1))

    # --- closed forms ---------------------------------------------------
    def tail_mean_field(self, spec, p, a, box: MultiIndex, ge: bool = False) -> np.ndarray:
        raise NoClosedFormError(f"family {self.name} has no closed-form tail means")

    def event_prob_field(self, spec, t, box: MultiIndex, ge: bool = True) -> np.ndarray:
        raise NoClosedFormError(f"family {self.name} has no closed-form tail probabilities")

    def mean_vector_field(self, spec, box: MultiIndex) -> np.ndarray | None:
        return None

    def second_moment_field(self, spec, box: MultiIndex) -> np.ndarray | None:
        return None


class _DeterministicFamily(Family):
    """Families whose cells are fixed vectors (value times first basis vector)."""

    def cell_values(self, spec, box: MultiIndex) -> np.ndarray:
        raise NotImplementedError

    def vectors(self, spec, box, starts):
        vals = self.cell_values(spec, box)
        reps = starts.shape[0]
        return np.broadcast_to(_radial(vals, spec.dim_D), (reps,) + vals.shape + (spec.dim_D,)).copy()

    def norm_values(self, spec, box, starts):
        vals = np.abs(self.cell_values(spec, box))
        return np.broadcast_to(vals, (starts.shape[0],) + vals.shape).copy()

    def tail_mean_field(self, spec, p, a, box, ge=False):
        v = np.abs(self.cell_values(spec, box))
        mask = (v >= a) if ge else (v > a)
        return np.where(mask, v**p, 0.0)

    def event_prob_field(self, spec, t, box, ge=True):
        v = np.abs(self.cell_values(spec, box))
        mask = (v >= t) if ge else (v > t)
        return mask.astype(np.float64)

    def mean_vector_field(self, spec, box):
        return _radial(self.cell_values(spec, box), spec.dim_D)

    def second_moment_field(self, spec, box):
        v = self.cell_values(spec, box)
        return v * v

    def norm_bound(self, spec, horizon):
        return float(np.abs(self.cell_values(spec, horizon)).max())


class ConstantFamily(_DeterministicFamily):
    name = "constant"
    defaults = {"c": 1.0}

    def cell_values(self, spec, box):
        return np.full(box.coords, float(spec.param("c")))

    def zero_mean(self, spec):
        return float(spec.param("c")) == 0.0

    def is_cui(self, spec, p):
        return True


class SpikedCuiFamily(_DeterministicFamily):
    """d=1 array that is Cesaro-UI but not plain-UI: cells vanish except at
    indices gap_base**k, where the norm is sqrt(index)."""

    name = "spiked_cui"
    max_d = 1
    defaults = {"gap_base": 2.0, "bulk": 0.0}

    def validate(self, spec):
        super().validate(spec)
        g = spec.param("gap_base")
        if g != int(g) or int(g) < 2:
            raise ValueError("gap_base must be an integer >= 2")
        if spec.param("bulk") < 0:
            raise ValueError("bulk must be >= 0")

    def cell_values(self, spec, box):
        self.check_box(box)
        n = box.coords[0]
        g = int(spec.param("gap_base"))
        vals = np.full(n, float(spec.param("bulk")))
        s = 1
        while s <= n:
            vals[s - 1] = math.sqrt(s)
            s *= g
        return vals

    def zero_mean(self, spec):
        return False

    def is_cui(self, spec, p):
        # spike p-norms grow like g**(kp/2) against box size g**k, so the
        # Cesaro tail sup vanishes for every p < 2.
        return 0 < p < 2


class GrowingNonCuiFamily(_DeterministicFamily):
    """d=1 deterministic norms i**exponent; Cesaro tail averages diverge."""

    name = "growing_non_cui"
    max_d = 1
    defaults = {"exponent": 0.5}

    def validate(self, spec):
        super().validate(spec)
        if spec.param("exponent") <= 0:
            raise ValueError("exponent must be > 0")

    def cell_values(self, spec, box):
        self.check_box(box)
        n = box.coords[0]
        return np.arange(1, n + 1, dtype=np.float64) ** float(spec.param("exponent"))

    def is_cui(self, spec, p):
        return False


class ParetoRadialFamily(Family):
    """iid cells: norm ~ Pareto(alpha) on [1, inf), direction = first basis vector."""

    name = "pareto_radial"
    defaults = {"alpha": 3.0}

    def validate(self, spec):
        super().validate(spec)
        if spec.param("alpha") <= 0:
            raise ValueError("alpha must be > 0")

    def is_cui(self, spec, p):
        return spec.param("alpha") > p

    def norm_values(self, spec, box, starts):
        keys = rng.cell_keys(starts, _coord_grids(box))
        u = rng.uniform_open01(rng.substream(keys, 0))
        return u ** (-1.0 / float(spec.param("alpha")))

    def vectors(self, spec, box, starts):
        return _radial(self.norm_values(spec, box, starts), spec.dim_D)

    def tail_mean_field(self, spec, p, a, box, ge=False):
        # E(X^p 1(X > a)) = alpha/(alpha-p) * max(a,1)^(p-alpha); continuous,
        # so the >= variant coincides.
        alpha = float(spec.param("alpha"))
        if alpha <= p:
            return np.full(box.coords, np.inf)
        level = max(float(a), 1.0)
        val = alpha / (alpha - p) * level ** (p - alpha)
        return np.full(box.coords, val)

    def event_prob_field(self, spec, t, box, ge=True):
        alpha = float(spec.param("alpha"))
        val = 1.0 if t <= 1.0 else float(t) ** (-alpha)
        return np.full(box.coords, val)

    def mean_vector_field(self, spec, box):
        alpha = float(spec.param("alpha"))
        if alpha <= 1.0:
            return None
        return _radial(np.full(box.coords, alpha / (alpha - 1.0)), spec.dim_D)

    def second_moment_field(self, spec, box):
        alpha = float(spec.param("alpha"))
        if alpha <= 2.0:
            return np.full(box.coords, np.inf)
        return np.full(box.coords, alpha / (alpha - 2.0))


class IidGaussianFamily(Family):
    """iid cells with D independent N(0, sigma^2) coefficients."""

    name = "iid_gaussian"
    defaults = {"sigma": 1.0}

    def validate(self, spec):
        super().validate(spec)
        if spec.param("sigma") <= 0:
            raise ValueError("sigma must be > 0")

    def zero_mean(self, spec):
        return True

    def is_cui(self, spec, p):
        # identically distributed with finite moments, hence uniformly
        # integrable, hence Cesaro-UI.
        return True

    def vectors(self, spec, box, starts):
        keys = rng.cell_keys(starts, _coord_grids(box))
        return float(spec.param("sigma")) * rng.normals(keys, spec.dim_D)

    def mean_vector_field(self, spec, box):
        return np.zeros(box.coords + (spec.dim_D,))

    def second_moment_field(self, spec, box):
        s = float(spec.param("sigma"))
        return np.full(box.coords, spec.dim_D * s * s)


class IidRademacherFamily(Family):
    """iid signs: cells are +-1 times the first basis vector."""

    name = "iid_rademacher"
    defaults: dict[str, float] = {}

    def zero_mean(self, spec):
        return True

    def is_cui(self, spec, p):
        return True

    def norm_bound(self, spec, horizon):
        return 1.0

    def norm_values(self, spec, box, starts):
        keys = rng.cell_keys(starts, _coord_grids(box))
        return np.broadcast_to(1.0, keys.shape).copy()

    def vectors(self, spec, box, starts):
        keys = rng.cell_keys(starts, _coord_grids(box))
        return _radial(rng.signs(rng.substream(keys, 0)), spec.dim_D)

    def mean_vector_field(self, spec, box):
        return np.zeros(box.coords + (spec.dim_D,))

    def second_moment_field(self, spec, box):
        return np.ones(box.coords)


def subset_products(bits: np.ndarray) -> np.ndarray:
    """Products of signs over every nonempty subset, in mask order 1..2^m-1.

    bits has shape (..., m); the result has shape (..., 2^m - 1), and entry
    mask-1 is the product of bits[t] over the set bits t of `mask`.
    """
    m = bits.shape[-1]
    L = 2**m - 1
    out = np.ones(bits.shape[:-1] + (L,), dtype=np.float64)
    masks = np.arange(1, L + 1)
    for t in range(m):
        sel = ((masks >> t) & 1) == 1
        out[..., sel] *= bits[..., t : t + 1]
    return out


class PairwiseRademacherFamily(Family):
    """Pairwise- but not mutually-independent signs (d=1).

    Each block of 2^m - 1 consecutive cells carries the subset products of m
    fresh independent signs; blocks are mutually independent, so the whole
    array stays pairwise independent with zero mean and unit norms.
    """

    name = "pairwise_rademacher"
    max_d = 1
    defaults = {"m": 4.0}

    def validate(self, spec):
        super().validate(spec)
        m = spec.param("m")
        if m != int(m) or not (2 <= int(m) <= 20):
            raise ValueError("m must be an integer in [2, 20]")

    def zero_mean(self, spec):
        return True

    def is_cui(self, spec, p):
        return True

    def norm_bound(self, spec, horizon):
        return 1.0

    def _signs(self, spec, box, starts):
        self.check_box(box)
        m = int(spec.param("m"))
        L = 2**m - 1
        n = box.coords[0]
        q = np.arange(n)
        block = (q // L).astype(np.uint64)
        mask_idx = q % L  # 0-based subset mask index
        n_blocks = int(block[-1]) + 1
        block_keys = rng.cell_keys(starts, [np.arange(n_blocks, dtype=np.uint64).reshape(1, -1)])
        bits = np.stack(
            [rng.signs(rng.substream(block_keys, t)) for t in range(m)], axis=-1
        )  # (R, n_blocks, m)
        table = subset_products(bits)  # (R, n_blocks, L)
        return table[:, block.astype(np.int64), mask_idx]

    def norm_values(self, spec, box, starts):
        self.check_box(box)
        return np.broadcast_to(1.0, (starts.shape[0], box.coords[0])).copy()

    def vectors(self, spec, box, starts):
        return _radial(self._signs(spec, box, starts), spec.dim_D)

    def mean_vector_field(self, spec, box):
        self.check_box(box)
        return np.zeros(box.coords + (spec.dim_D,))

    def second_moment_field(self, spec, box):
        return np.ones(box.coords)


_FAMILY_LIST = [
    IidGaussianFamily(),
    ParetoRadialFamily(),
    SpikedCuiFamily(),
    GrowingNonCuiFamily(),
    PairwiseRademacherFamily(),
    ConstantFamily(),
    IidRademacherFamily(),
]
FAMILIES: dict[str, Family] = {f.name: f for f in _FAMILY_LIST}


def get_family(name: str) -> Family:
    try:
        return FAMILIES[name]
    except KeyError:
        raise ValueError(
            f"unknown family {name!r}; known: {sorted(FAMILIES)}"
        ) from None


def _rep_starts(seed: int, reps: int, d: int) -> np.ndarray:
    starts = np.array(
        [rng.as_seed(rng.derive_seed(seed, r)) for r in range(reps)], dtype=np.uint64
    )
    return starts.reshape((reps,) + (1,) * d)


def sample_array(spec: DistributionSpec, n: MultiIndex, seed: int = 0) -> LatticeSample:
    """One realized array over the box [1, n], cells keyed by (seed, i)."""
    fam = get_family(spec.family)
    fam.check_box(n)
    starts = np.array([rng.as_seed(seed)], dtype=np.uint64).reshape((1,) + (1,) * n.d)
    vals = fam.vectors(spec, n, starts)[0]
    return LatticeSample(n, vals)


def sample_batch(spec: DistributionSpec, n: MultiIndex, seed: int, reps: int) -> np.ndarray:
    """`reps` independent arrays, shape (reps,) + n.coords + (D,).

    Replication r uses the derived seed derive_seed(seed, r), so row r equals
    sample_array(spec, n, derive_seed(seed, r)).values.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    fam = get_family(spec.family)
    fam.check_box(n)
    return fam.vectors(spec, n, _rep_starts(seed, reps, n.d))


def norm_batch(spec: DistributionSpec, n: MultiIndex, seed: int, reps: int) -> np.ndarray:
    """Realized cell norms, shape (reps,) + n.coords."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    fam = get_family(spec.family)
    fam.check_box(n)
    return fam.norm_values(spec, n, _rep_starts(seed, reps, n.d))


def pairwise_rademacher_array(m: int, seed: int = 0) -> np.ndarray:
    """The 2^m - 1 subset products of m independent signs, in layout order.

    Matches the first block of the pairwise_rademacher family: cell i of a
    d=1 sample holds entry i-1 of this array (for i <= 2^m - 1).
    """
    if m != int(m) or not (2 <= int(m) <= 20):
        raise ValueError("m must be an integer in [2, 20]")
    spec = DistributionSpec("pairwise_rademacher", {"m": int(m)}, dim_D=1)
    fam = get_family("pairwise_rademacher")
    starts = np.array([rng.as_seed(seed)], dtype=np.uint64).reshape((1, 1))
    return fam._signs(spec, MultiIndex((2**m - 1,)), starts)[0]


def tail_mean_field(spec, p, a, box: MultiIndex, ge: bool = False) -> np.ndarray:
    """Per-cell E(||X_i||^p 1(||X_i|| > a)) (or >=) over the box; closed form only."""
    if p <= 0:
        raise ValueError("p must be > 0")
    if a < 0:
        raise ValueError("a must be >= 0")
    if spec.moment_mode != "analytic":
        raise NoClosedFormError("spec requests empirical moments")
    fam = get_family(spec.family)
    fam.check_box(box)
    return fam.tail_mean_field(spec, p, a, box, ge=ge)


def analytic_tail_mean(spec, p: float, a: float, i: MultiIndex, ge: bool = False) -> float:
    """Closed-form E(||X_i||^p 1(||X_i|| > a)) for a single cell i."""
    fld = tail_mean_field(spec, p, a, i, ge=ge)
    return float(fld[tuple(c - 1 for c in i.coords)])


def event_prob_field(spec, t, box: MultiIndex, ge: bool = True) -> np.ndarray:
    if spec.moment_mode != "analytic":
        raise NoClosedFormError("spec requests empirical moments")
    fam = get_family(spec.family)
    fam.check_box(box)
    return fam.event_prob_field(spec, t, box, ge=ge)


def mean_vector_field(spec, box: MultiIndex) -> np.ndarray | None:
    fam = get_family(spec.family)
    fam.check_box(box)
    return fam.mean_vector_field(spec, box)


def second_moment_field(spec, box: MultiIndex) -> np.ndarray | None:
    fam = get_family(spec.family)
    fam.check_box(box)
    return fam.second_moment_field(spec, box)


def is_cui(spec, p: float) -> bool:
    return get_family(spec.family).is_cui(spec, p)


def pairwise_independent(spec) -> bool:
    return get_family(spec.family).pairwise_independent


def zero_mean(spec) -> bool:
    return get_family(spec.family).zero_mean(spec)


def norm_bound(spec, horizon: MultiIndex) -> float | None:
    return get_family(spec.family).norm_bound(spec, horizon)
