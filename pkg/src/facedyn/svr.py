"""Epsilon-insensitive support vector regression on precomputed kernels.

Trains the standard dual
    max_beta  -1/2 beta^T K beta - eps sum|beta_i| + y^T beta
    s.t.      sum beta_i = 0,  |beta_i| <= C
with pairwise coordinate (SMO-style) updates on the maximal
KKT-violating pair.  Prediction is the affine form sum beta_i k(x, x_i) + b.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


@dataclass
class SvrModel:
    """Trained regressor: dual coefficients over the training ids plus bias."""

    training_ids: list
    beta: np.ndarray
    bias: float
    C: float
    epsilon: float
    region: str = ""
    converged: bool = True
    n_iter: int = 0
    kernel_hash: str = ""


def _prepare_kernel(k: np.ndarray, psd_tol: float = 1e-6) -> np.ndarray:
    """Symmetrize and, for small eigenvalue deficits, shift the diagonal."""
    k = np.asarray(k, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ValueError(f"kernel must be square, got {k.shape}")
    k = 0.5 * (k + k.T)
    eig = np.linalg.eigvalsh(k)
    lo, hi = eig[0], max(eig[-1], 0.0)
    if lo < -psd_tol * max(hi, 1.0):
        raise ValueError(
            f"kernel is not PSD within tolerance (min eig {lo:.3e}, max {hi:.3e})"
        )
    if lo < 0.0:
        k = k + (-lo) * np.eye(k.shape[0])
    return k


def _up_down_derivatives(g: np.ndarray, beta: np.ndarray, eps: float):
    """Directional dual derivatives used for pair selection and the bias.

    up[i] is the objective gain rate for increasing beta_i, down[i] the
    rate whose decrease is blocked at optimality; optimal iff
    max(up | beta<C) <= min(down | beta>-C).
    """
    up = np.where(beta >= 0, g - eps, g + eps)
    down = np.where(beta <= 0, g + eps, g - eps)
    return up, down


def dual_objective(k: np.ndarray, y: np.ndarray, beta: np.ndarray, eps: float) -> float:
    return float(
        -0.5 * beta @ (k @ beta) - eps * np.abs(beta).sum() + y @ beta
    )


def _best_pair_step(bi, bj, gi, gj, eta, eps, C):
    """Optimal t for beta_i += t, beta_j -= t on a piecewise quadratic.

    The |beta| terms introduce breakpoints at t = -bi and t = bj; the gain
    on each piece is quadratic, so candidates are the piece optima and the
    breakpoints, intersected with the box.
    """
    t_lo = max(-C - bi, bj - C)
    t_hi = min(C - bi, bj + C)
    if t_lo >= t_hi:
        return 0.0

    def gain(t):
        return (
            t * (gi - gj)
            - 0.5 * eta * t * t
            - eps * (abs(bi + t) - abs(bi))
            - eps * (abs(bj - t) - abs(bj))
        )

    cands = [t_lo, t_hi]
    for bp in (-bi, bj):
        if t_lo < bp < t_hi:
            cands.append(bp)
    # piece optima: slope = gi - gj - eta t - eps (si - sj) = 0 with
    # si = sign(bi + t), sj = sign(bj - t) constant on the piece
    if eta > 0:
        breaks = sorted({t_lo, t_hi, *[b for b in (-bi, bj) if t_lo < b < t_hi]})
        for a, b in zip(breaks[:-1], breaks[1:]):
            mid = 0.5 * (a + b)
            si = 1.0 if bi + mid >= 0 else -1.0
            sj = 1.0 if bj - mid <= 0 else -1.0  # d|bj - t|/dt = -sign(bj - t)
            t_star = (gi - gj - eps * (si + sj)) / eta
            if a <= t_star <= b:
                cands.append(t_star)
    best_t, best_g = 0.0, 0.0
    for t in cands:
        gn = gain(t)
        if gn > best_g + 1e-300:
            best_t, best_g = t, gn
    return best_t


def train(
    k_train: np.ndarray,
    y: np.ndarray,
    C: float = 1.0,
    epsilon: float = 0.1,
    tol: float = 1e-3,
    max_iter: int = 100_000,
    training_ids=None,
    region: str = "",
) -> SvrModel:
    """Fit an epsilon-SVR from a precomputed PSD kernel and targets."""
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("labels must be finite")
    k = _prepare_kernel(k_train)
    n = k.shape[0]
    if y.shape != (n,):
        raise ValueError(f"label count {y.shape} does not match kernel {k.shape}")
    if C <= 0 or epsilon < 0:
        raise ValueError("need C > 0 and epsilon >= 0")
    if training_ids is None:
        training_ids = list(range(n))

    beta = np.zeros(n)
    g = y.copy()  # g_i = y_i - (K beta)_i
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        up, down = _up_down_derivatives(g, beta, epsilon)
        up_mask = beta < C
        down_mask = beta > -C
        i = int(np.argmax(np.where(up_mask, up, -np.inf)))
        j = int(np.argmin(np.where(down_mask, down, np.inf)))
        if up[i] - down[j] < tol:
            converged = True
            break
        eta = k[i, i] + k[j, j] - 2.0 * k[i, j]
        t = _best_pair_step(beta[i], beta[j], g[i], g[j], eta, epsilon, C)
        if t == 0.0:
            # numerically stuck on the selected pair; treat as converged
            converged = up[i] - down[j] < max(tol, 1e-10)
            break
        beta[i] += t
        beta[j] -= t
        g -= t * (k[:, i] - k[:, j])
    if not converged:
        warnings.warn(
            f"SVR did not reach tol={tol} within {max_iter} iterations"
        )

    bias = _compute_bias(g, beta, epsilon, C)
    return SvrModel(
        training_ids=list(training_ids),
        beta=beta,
        bias=bias,
        C=C,
        epsilon=epsilon,
        region=region,
        converged=converged,
        n_iter=it,
    )


def _compute_bias(g, beta, eps, C) -> float:
    """Average over interior support vectors; else KKT-interval midpoint."""
    interior = (np.abs(beta) > 1e-9 * C) & (np.abs(beta) < C * (1 - 1e-9))
    if np.any(interior):
        vals = g[interior] - eps * np.sign(beta[interior])
        return float(vals.mean())
    up, down = _up_down_derivatives(g, beta, eps)
    up_feas = up[beta < C]
    down_feas = down[beta > -C]
    lo = up_feas.max() if up_feas.size else down_feas.min()
    hi = down_feas.min() if down_feas.size else up_feas.max()
    return float(0.5 * (lo + hi))


def predict(model: SvrModel, k_row: np.ndarray) -> float:
    """y_hat = sum_i beta_i k_row[i] + b for one test sample."""
    k_row = np.asarray(k_row, dtype=float)
    if k_row.shape != model.beta.shape:
        raise ValueError(
            f"kernel row length {k_row.shape} does not match "
            f"{len(model.training_ids)} training samples"
        )
    return float(model.beta @ k_row + model.bias)


def predict_many(model: SvrModel, k_rows: np.ndarray) -> np.ndarray:
    """Vectorized predict over rows of a (n_test, n_train) kernel block."""
    k_rows = np.asarray(k_rows, dtype=float)
    return k_rows @ model.beta + model.bias


def clamp_prediction(y_hat: float, lo: float, hi: float) -> float:
    """Clip a prediction to the label range."""
    if lo > hi:
        raise ValueError(f"invalid label range [{lo}, {hi}]")
    return float(min(max(y_hat, lo), hi))
