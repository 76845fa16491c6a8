"""Blended cubic Bezier smoothing of factor trajectories.

Each anchor data point d_a carries one cubic fitted in its own tangent
space to the local window {d_{a-1}, d_a, d_{a+1}, d_{a+2}} (clamped at
the ends), in local time u = t - a.  The fit trades data proximity
(weight lam) against mean squared acceleration.  A segment [i, i+1]
blends the two anchor cubics: De Casteljau at u = s in the tangent space
of d_i and at u = s - 1 in the tangent space of d_{i+1}, retract both,
then take the weighted mean with weight s = t - i.  Sharing one cubic
per anchor between its two segments makes the blended curve continuous
at the knots by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import exp_map, log_map, weighted_mean
from .trajectory import Trajectory

# Window sample times relative to the anchor; clamping at the ends
# repeats the terminal data point but keeps the four distinct times.
_WINDOW_S = np.array([-1.0, 0.0, 1.0, 2.0])


def _bernstein_matrix(s: np.ndarray) -> np.ndarray:
    """Rows of cubic Bernstein values B_k(s_j); valid for any real s."""
    s = np.asarray(s, dtype=float)
    return np.stack(
        [(1 - s) ** 3, 3 * s * (1 - s) ** 2, 3 * s**2 * (1 - s), s**3],
        axis=-1,
    )


def _acceleration_quadform() -> np.ndarray:
    """4x4 matrix R with P:R:P = integral_0^1 ||beta''(s)||^2 ds.

    beta''(s) = 6[(1-s) u + s v], u = P0 - 2 P1 + P2, v = P1 - 2 P2 + P3,
    so the integral is 12 (||u||^2 + u.v + ||v||^2).
    """
    a = np.array([1.0, -2.0, 1.0, 0.0])
    b = np.array([0.0, 1.0, -2.0, 1.0])
    return 12.0 * (
        np.outer(a, a) + np.outer(b, b) + 0.5 * (np.outer(a, b) + np.outer(b, a))
    )


_R_ACCEL = _acceleration_quadform()
_B_WINDOW = _bernstein_matrix(_WINDOW_S)


def _decasteljau(ctrl: np.ndarray, s: float) -> np.ndarray:
    """Evaluate a cubic from its 4 control points (flat tangent space)."""
    pts = ctrl.copy()
    for level in range(3):
        pts = (1.0 - s) * pts[:-1] + s * pts[1:]
    return pts[0]


@dataclass
class FittedCurve:
    """Smoothed curve over [0, tau] attached to its source trajectory."""

    trajectory: Trajectory
    lam: float | None  # None means no fitting (piecewise geodesic)
    ctrl_left: np.ndarray  # (tau, 4, m, 2) control points in tangent at d_i
    ctrl_right: np.ndarray  # (tau, 4, m, 2) control points in tangent at d_{i+1}

    @property
    def tau(self) -> int:
        return len(self.trajectory) - 1


def _fit_anchor_controls(window: np.ndarray, anchor: np.ndarray, lam: float):
    """Least-squares cubic control points in the tangent space at ``anchor``.

    Solves (lam B^T B + R) P = lam B^T X where X stacks the lifted window
    points and R penalizes squared acceleration.
    """
    x = np.stack([log_map(anchor, w) for w in window])  # (4, m, 2)
    m2 = x.shape[1] * x.shape[2]
    xf = x.reshape(4, m2)
    lhs = lam * (_B_WINDOW.T @ _B_WINDOW) + _R_ACCEL
    rhs = lam * (_B_WINDOW.T @ xf)
    p = np.linalg.solve(lhs, rhs)
    return p.reshape(4, x.shape[1], x.shape[2])


def fit(traj: Trajectory, lam: float | None) -> FittedCurve:
    """Fit the blended curve; ``lam=None`` gives the geodesic interpolant."""
    tau = len(traj) - 1
    if tau < 1:
        raise ValueError("need at least 2 trajectory points to fit a curve")
    if lam is not None and lam <= 0:
        raise ValueError(f"lam must be positive, got {lam}")
    pts = traj.points
    m = traj.m
    k = np.arange(4)[:, None, None] / 3.0
    if lam is None:
        ctrl_left = np.empty((tau, 4, m, 2))
        ctrl_right = np.empty((tau, 4, m, 2))
        for i in range(tau):
            ctrl_left[i] = k * log_map(pts[i], pts[i + 1])
            ctrl_right[i] = -k * log_map(pts[i + 1], pts[i])
        return FittedCurve(traj, lam, ctrl_left, ctrl_right)
    anchor_ctrl = np.empty((tau + 1, 4, m, 2))
    for a in range(tau + 1):
        widx = np.clip([a - 1, a, a + 1, a + 2], 0, tau)
        anchor_ctrl[a] = _fit_anchor_controls(pts[widx], pts[a], lam)
    return FittedCurve(traj, lam, anchor_ctrl[:-1], anchor_ctrl[1:])


def evaluate(curve: FittedCurve, t: float) -> np.ndarray:
    """Factor at parameter t in [0, tau].

    The left anchor's cubic is evaluated at local time s, the right
    anchor's at s - 1 (De Casteljau extrapolates cubics outside [0, 1]
    exactly), and the two retracted points are blended with weight s.
    """
    tau = curve.tau
    if not 0.0 <= t <= tau:
        raise ValueError(f"t={t} outside curve domain [0, {tau}]")
    i = min(int(np.floor(t)), tau - 1)
    s = t - i
    pts = curve.trajectory.points
    p_left = exp_map(pts[i], _decasteljau(curve.ctrl_left[i], s))
    p_right = exp_map(pts[i + 1], _decasteljau(curve.ctrl_right[i], s - 1.0))
    return weighted_mean(p_left, p_right, s)


def resample(curve: FittedCurve) -> Trajectory:
    """Evaluate at the original integer parameters; same length and shape."""
    traj = curve.trajectory
    points = np.stack([evaluate(curve, float(t)) for t in range(len(traj))])
    return Trajectory(
        sequence_id=traj.sequence_id,
        subject_id=traj.subject_id,
        label=traj.label,
        region=traj.region,
        points=points,
        times=traj.times.copy(),
    )


def smooth(traj: Trajectory, lam: float | None) -> Trajectory:
    """fit + resample; identity (up to representatives) when lam is None."""
    if len(traj) < 2:
        return traj
    return resample(fit(traj, lam))
