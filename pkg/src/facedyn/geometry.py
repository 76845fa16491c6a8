"""Geometry of rank-2 PSD matrices represented by their m x 2 factors.

An m x m Gram matrix of rank <= 2 is represented implicitly by a factor
F (m x 2); two factors related by a proper planar rotation describe the
same Gram matrix.  All operations below work directly on factors, so no
m x m matrix is ever materialized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class DimensionMismatchError(ValueError):
    """Raised when two factors do not share the same row count."""


@dataclass(frozen=True)
class Rotation2:
    """A proper planar rotation (determinant +1)."""

    angle: float

    @property
    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        return np.array([[c, -s], [s, c]])


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != 2 or b.shape[1] != 2:
        raise DimensionMismatchError(
            f"factors must be m x 2, got {a.shape} and {b.shape}"
        )
    if a.shape[0] != b.shape[0]:
        raise DimensionMismatchError(
            f"factor row counts differ: {a.shape[0]} vs {b.shape[0]}"
        )


def optimal_rotation(a: np.ndarray, b: np.ndarray) -> Rotation2:
    """Rotation Q minimizing ||a Q - b||_F over proper rotations.

    With a^T b = [[p, q], [r, s]] the closed form is
    theta = atan2(r - q, p + s).  When both arguments of atan2 vanish
    every rotation is optimal; the identity is returned for determinism.
    """
    _check_pair(a, b)
    m = a.T @ b
    num = m[1, 0] - m[0, 1]
    den = m[0, 0] + m[1, 1]
    if num == 0.0 and den == 0.0:
        return Rotation2(0.0)
    return Rotation2(math.atan2(num, den))


def distance_squared(a: np.ndarray, b: np.ndarray) -> float:
    """Squared quotient distance between the Gram classes of two factors.

    Equals ||a||_F^2 + ||b||_F^2 - 2 sqrt((p+s)^2 + (r-q)^2) with
    a^T b = [[p, q], [r, s]], i.e. min_Q ||b Q - a||_F^2 over proper
    rotations.  Evaluated as the aligned residual norm, which avoids the
    catastrophic cancellation of the trace form when the factors are
    nearly equivalent.
    """
    _check_pair(a, b)
    q = optimal_rotation(b, a)
    r = b @ q.matrix - a
    return float(np.sum(r * r))


def distance(a: np.ndarray, b: np.ndarray) -> float:
    """Quotient distance (square root of :func:`distance_squared`)."""
    return math.sqrt(distance_squared(a, b))


def log_map(base: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Tangent vector at ``base`` pointing to ``target`` (horizontal lift).

    Aligns ``target`` to ``base`` with the optimal rotation, then takes the
    factor-space difference, so ||log_map(base, target)||_F equals
    distance(base, target).
    """
    _check_pair(base, target)
    q = optimal_rotation(target, base)
    return target @ q.matrix - base


def exp_map(base: np.ndarray, v: np.ndarray, t: float = 1.0) -> np.ndarray:
    """Factor-space retraction: straight line base + t v."""
    _check_pair(base, v)
    return base + t * v


def weighted_mean(p: np.ndarray, q: np.ndarray, w: float) -> np.ndarray:
    """Point at fraction ``w`` along the path from ``p`` to ``q``."""
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"weight must lie in [0, 1], got {w}")
    return exp_map(p, log_map(p, q), w)


def product_distance(per_region_d2) -> float:
    """Product-manifold distance from per-region squared distances."""
    vals = np.asarray(per_region_d2, dtype=float)
    if np.any(vals < 0):
        raise ValueError("squared distances must be non-negative")
    return math.sqrt(float(vals.sum()))
