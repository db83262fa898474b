"""Dense vector primitives shared by every module.

p-norms over the extended range p in [1, inf], gradient clipping, the
normalized fast Walsh-Hadamard transform, and Euclidean-ball projection.
The transform convention is the symmetric one,

    fwht(x) = (1/sqrt(d)) * H_d @ x,      H_d[i, j] = (-1)^popcount(i & j),

which is an involution (H_d @ H_d = d * I) and an isometry of the l2 norm.
All arithmetic is float64; the two tolerance constants used throughout the
package live here: EXACT_TOL for closed-form identities and ROUNDTRIP_TOL for
transform roundtrips.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ValidationError

# Closed-form identities (enumerated expectations, norm formulas) must hold to
# this relative tolerance; transform roundtrips to the looser one.
EXACT_TOL = 1e-12
ROUNDTRIP_TOL = 1e-10


def as_vector(x) -> np.ndarray:
    """Validate and convert to a finite float64 1-D array of length >= 1."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise ValidationError(f"expected a 1-D vector of length >= 1, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValidationError("vector entries must be finite (no NaN/Inf)")
    return v


def p_norm(x, p: float) -> float:
    """The lp norm for p in [1, inf]; p=inf returns max_j |x_j|."""
    v = as_vector(x)
    if not p >= 1.0:
        raise ValidationError(f"p must lie in [1, inf], got {p!r}")
    if math.isinf(p):
        return float(np.max(np.abs(v)))
    if p == 1.0:
        return float(np.sum(np.abs(v)))
    if p == 2.0:
        return float(np.linalg.norm(v))
    return float(np.sum(np.abs(v) ** p) ** (1.0 / p))


@dataclass(frozen=True)
class BallSpec:
    """An lp ball: exponent p in [1, inf], radius a > 0, ambient dimension d."""

    p: float
    radius: float
    dim: int

    def __post_init__(self) -> None:
        if not self.p >= 1.0:
            raise ValidationError(f"ball exponent must lie in [1, inf], got {self.p!r}")
        if not self.radius > 0.0:
            raise ValidationError(f"ball radius must be positive, got {self.radius!r}")
        if not (isinstance(self.dim, (int, np.integer)) and self.dim >= 1):
            raise ValidationError(f"ball dimension must be a positive integer, got {self.dim!r}")

    def contains(self, x, tol: float = EXACT_TOL) -> bool:
        return p_norm(x, self.p) <= self.radius * (1.0 + tol)


def clip(g, p: float, C: float) -> np.ndarray:
    """Rescale g so its lp norm is at most C: g / max{1, ||g||_p / C}.

    Inside-ball inputs (including the zero vector) are returned unchanged.
    """
    v = as_vector(g)
    if not C > 0.0:
        raise ValidationError(f"clip radius must be positive, got {C!r}")
    return v / max(1.0, p_norm(v, p) / C)


def _fwht_rows_inplace(mat: np.ndarray) -> np.ndarray:
    """Unnormalized in-place Walsh-Hadamard butterfly along the last axis."""
    rows, d = mat.shape
    h = 1
    while h < d:
        w = mat.reshape(rows, -1, 2, h)
        top = w[:, :, 0, :] + w[:, :, 1, :]
        bot = w[:, :, 0, :] - w[:, :, 1, :]
        w[:, :, 0, :] = top
        w[:, :, 1, :] = bot
        h *= 2
    return mat


def fwht_normalized(x) -> np.ndarray:
    """(1/sqrt(d)) * H_d @ x via the O(d log d) butterfly; d must be a power of 2."""
    v = as_vector(x).copy()
    d = v.size
    if d & (d - 1):
        raise DimensionError(f"transform dimension must be a power of two, got {d}")
    _fwht_rows_inplace(v.reshape(1, d))
    return v / math.sqrt(d)


def fwht_normalized_rows(mat) -> np.ndarray:
    """Row-wise normalized transform for 2-D float arrays (batch helper)."""
    m = np.array(mat, dtype=np.float64)
    if m.ndim != 2 or m.shape[1] < 1:
        raise ValidationError(f"expected a 2-D array, got shape {m.shape}")
    d = m.shape[1]
    if d & (d - 1):
        raise DimensionError(f"transform dimension must be a power of two, got {d}")
    _fwht_rows_inplace(m)
    return m / math.sqrt(d)


def project_l2_ball(theta, center, radius: float) -> np.ndarray:
    """Euclidean projection onto {v : ||v - center||_2 <= radius}; idempotent."""
    v = as_vector(theta)
    c = as_vector(center)
    if v.size != c.size:
        raise ValidationError("point and center must share a dimension")
    if not radius > 0.0:
        raise ValidationError(f"projection radius must be positive, got {radius!r}")
    diff = v - c
    nrm = float(np.linalg.norm(diff))
    if nrm <= radius:
        return v.copy()
    return c + diff * (radius / nrm)
