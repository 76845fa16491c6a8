"""Global alignment similarities between factor trajectories.

The local kernel is k = k~ / (1 - k~) with k~ = 0.5 exp(-D / sigma^2),
which keeps the induced sequence kernel positive semi-definite.  The
alignment score sums the product of local kernels over every monotone
alignment path via a quadratic dynamic program, run in the log domain to
survive long sequences.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from .trajectory import Trajectory


@dataclass
class SimilarityMatrix:
    """Symmetric alignment-kernel matrix over an ordered id list."""

    ids: list
    values: np.ndarray
    region: str
    sigma: float

    def submatrix(self, row_ids, col_ids=None) -> np.ndarray:
        if col_ids is None:
            col_ids = row_ids
        pos = {sid: i for i, sid in enumerate(self.ids)}
        ri = [pos[s] for s in row_ids]
        ci = [pos[s] for s in col_ids]
        return self.values[np.ix_(ri, ci)]


def _factor_cross_terms(pa: np.ndarray, pb: np.ndarray):
    """Pairwise sqrt((p+s)^2 + (r-q)^2) terms and squared norms.

    With M = Fa^T Fb, the trace p+s is the flattened dot product and the
    antisymmetric part r-q is the dot product against the 90-degree
    rotated factor, so both reduce to matrix products.
    """
    ta, tb = pa.shape[0], pb.shape[0]
    fa = pa.reshape(ta, -1)
    fb = pb.reshape(tb, -1)
    rot = np.empty_like(pb)
    rot[..., 0] = -pb[..., 1]
    rot[..., 1] = pb[..., 0]
    apd = fa @ fb.T
    cmb = fa @ rot.reshape(tb, -1).T
    cross = np.sqrt(apd * apd + cmb * cmb)
    na = np.sum(fa * fa, axis=1)
    nb = np.sum(fb * fb, axis=1)
    return cross, na, nb


def pairwise_squared_distances(a: Trajectory, b: Trajectory) -> np.ndarray:
    """tau_a x tau_b matrix of squared quotient distances."""
    if a.m != b.m or a.region != b.region:
        raise ValueError(
            f"incompatible trajectories: ({a.region}, m={a.m}) vs "
            f"({b.region}, m={b.m})"
        )
    cross, na, nb = _factor_cross_terms(a.points, b.points)
    d2 = na[:, None] + nb[None, :] - 2.0 * cross
    return np.maximum(d2, 0.0)


def pairwise_distance_matrix(a, b, mode: str = "squared") -> np.ndarray:
    """Frame-to-frame distance matrix between two trajectories.

    ``a`` and ``b`` are single trajectories, or (for product-manifold
    runs) equal-length lists of per-region trajectories whose squared
    distances are summed before the mode is applied.
    """
    if isinstance(a, Trajectory):
        d2 = pairwise_squared_distances(a, b)
    else:
        if len(a) != len(b) or len(a) == 0:
            raise ValueError("product mode needs matching per-region lists")
        d2 = sum(pairwise_squared_distances(ra, rb) for ra, rb in zip(a, b))
    if mode == "squared":
        return d2
    if mode == "metric":
        return np.sqrt(d2)
    raise ValueError(f"unknown distance mode {mode!r}")


def local_kernel(d: np.ndarray, sigma: float) -> np.ndarray:
    """Elementwise k = k~ / (1 - k~), k~ = 0.5 exp(-d / sigma^2)."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if sigma > 1:
        warnings.warn(f"sigma={sigma} above the reference range (0, 1]")
    kt = 0.5 * np.exp(-np.asarray(d, dtype=float) / (sigma * sigma))
    return kt / (1.0 - kt)


def _log_local_kernel(d: np.ndarray, sigma: float) -> np.ndarray:
    """log of local_kernel, computed stably for large distances."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    e = -np.asarray(d, dtype=float) / (sigma * sigma)
    # log(0.5 e^e / (1 - 0.5 e^e)) = e - log 2 - log1p(-0.5 e^e)
    return e - math.log(2.0) - np.log1p(-0.5 * np.exp(e))


@njit(cache=True)
def _gak_log_dp(logk: np.ndarray) -> float:  # pragma: no cover - jit
    t1, t2 = logk.shape
    prev = np.full(t2 + 1, -np.inf)
    prev[0] = 0.0
    cur = np.empty(t2 + 1)
    for i in range(1, t1 + 1):
        cur[0] = -np.inf
        for j in range(1, t2 + 1):
            a, b, c = prev[j - 1], prev[j], cur[j - 1]
            hi = max(a, max(b, c))
            if hi == -np.inf:
                acc = -np.inf
            else:
                acc = hi + np.log(
                    np.exp(a - hi) + np.exp(b - hi) + np.exp(c - hi)
                )
            cur[j] = acc + logk[i - 1, j - 1]
        prev, cur = cur, prev
    return prev[t2]


def gak_log_similarity(a, b, sigma: float, mode: str = "squared") -> float:
    """log of the alignment similarity (safe for long sequences)."""
    d = pairwise_distance_matrix(a, b, mode=mode)
    if d.shape[0] == 0 or d.shape[1] == 0:
        raise ValueError("empty trajectory")
    return float(_gak_log_dp(_log_local_kernel(d, sigma)))


def gak_similarity(a, b, sigma: float, mode: str = "squared") -> float:
    """Alignment similarity between two trajectories."""
    return math.exp(gak_log_similarity(a, b, sigma, mode=mode))


def build_similarity_matrix(
    trajs, sigma: float, mode: str = "squared", region: str | None = None
) -> SimilarityMatrix:
    """All-pairs alignment kernel for one region (or per-region lists).

    Entries are computed for i <= j and mirrored, so the result does not
    depend on any execution order.
    """
    n = len(trajs)
    if n == 0:
        raise ValueError("no trajectories")
    if isinstance(trajs[0], Trajectory):
        regions = {t.region for t in trajs}
        if len(regions) > 1:
            raise ValueError(f"mixed regions in one kernel: {sorted(regions)}")
        region = region or trajs[0].region
        ids = [t.sequence_id for t in trajs]
    else:
        region = region or "product"
        ids = [t[0].sequence_id for t in trajs]
    logv = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            logv[i, j] = gak_log_similarity(trajs[i], trajs[j], sigma, mode=mode)
            logv[j, i] = logv[i, j]
    return SimilarityMatrix(ids=ids, values=np.exp(logv), region=region, sigma=sigma)


def normalize_kernel(k: np.ndarray) -> np.ndarray:
    """Cosine normalization K_ij / sqrt(K_ii K_jj); preserves PSD."""
    k = np.asarray(k, dtype=float)
    diag = np.diag(k)
    if np.any(diag <= 0):
        raise ValueError("kernel diagonal must be strictly positive")
    d = 1.0 / np.sqrt(diag)
    return k * d[:, None] * d[None, :]


def check_psd(k: np.ndarray, rel_tol: float = 1e-8) -> bool:
    """True when the minimum eigenvalue is above -rel_tol * max eigenvalue."""
    eig = np.linalg.eigvalsh(np.asarray(k, dtype=float))
    return bool(eig[0] >= -rel_tol * max(eig[-1], 0.0) - 1e-300)
