"""Vector arithmetic in a finite truncation R^D of a real separable Hilbert space."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class HVector:
    """A vector of D real coefficients under the Euclidean inner product."""

    coeffs: np.ndarray

    def __post_init__(self):
        arr = np.array(self.coeffs, dtype=np.float64, copy=True)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("coeffs must be a nonempty 1-d real array")
        if not np.all(np.isfinite(arr)):
            raise ValueError("coeffs must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "coeffs", arr)

    @property
    def dim(self) -> int:
        return self.coeffs.shape[0]


def zero(dim: int) -> HVector:
    if dim < 1:
        raise ValueError("dim must be >= 1")
    return HVector(np.zeros(dim))


def _check_dims(u: HVector, v: HVector) -> None:
    if u.dim != v.dim:
        raise ValueError(f"dimension mismatch: {u.dim} != {v.dim}")


def add(u: HVector, v: HVector) -> HVector:
    _check_dims(u, v)
    return HVector(u.coeffs + v.coeffs)


def scale(c: float, v: HVector) -> HVector:
    return HVector(float(c) * v.coeffs)


def inner(u: HVector, v: HVector) -> float:
    _check_dims(u, v)
    return float(np.dot(u.coeffs, v.coeffs))


def norm(v: HVector) -> float:
    # scale by the largest coefficient so subnormal inputs don't underflow
    # to an exact zero (the norm must vanish only at the zero vector)
    peak = float(np.abs(v.coeffs).max())
    if peak == 0.0:
        return 0.0
    scaled = v.coeffs / peak
    return peak * float(np.sqrt(np.dot(scaled, scaled)))
