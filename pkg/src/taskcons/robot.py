"""Planar two-link arm moving in a horizontal plane.

Every function broadcasts over leading axes, so ``q`` may be a single
joint vector of shape ``(2,)`` or a stack ``(n, 2)`` holding one row per
robot.  Matrices come back with shape ``(..., 2, 2)``.

Kinematic parameters are ``theta = [l1, l2]`` (link lengths) and dynamic
parameters are ``vartheta = [a1, a2, a3]`` with

    M(q) = [[a1 + 2 a2 cos q2, a3 + a2 cos q2],
            [a3 + a2 cos q2,   a3           ]]
"""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RobotParams:
    """True parameters of one arm."""

    theta: tuple = (2.0, 3.0)
    vartheta: tuple = (4.0, 1.0, 1.5)

    def problems(self, grid=361):
        """Return a list of violated invariants (empty when valid)."""
        out = []
        th = np.asarray(self.theta, dtype=float)
        vt = np.asarray(self.vartheta, dtype=float)
        if th.shape != (2,) or not np.all(np.isfinite(th)):
            out.append("theta must be 2 finite numbers")
        elif np.any(th <= 0):
            out.append("theta: link lengths must be positive")
        if vt.shape != (3,) or not np.all(np.isfinite(vt)):
            out.append("vartheta must be 3 finite numbers")
        elif not inertia_is_uniformly_pd(vt, grid):
            out.append("vartheta: inertia matrix not positive definite on the q2 grid")
        return out


def inertia_is_uniformly_pd(vartheta, grid=361):
    a1, a2, a3 = np.asarray(vartheta, dtype=float)
    c = np.cos(np.linspace(-np.pi, np.pi, grid))
    c = np.concatenate([c, [-1.0, 1.0]])
    return bool(a3 > 0 and np.all(a3 * (a1 + 2 * a2 * c) - (a3 + a2 * c) ** 2 > 0))


def _trig(q):
    q1 = q[..., 0]
    q12 = q1 + q[..., 1]
    return np.sin(q1), np.cos(q1), np.sin(q12), np.cos(q12)


def _mat(a, b, c, d):
    return np.stack([np.stack([a, b], -1), np.stack([c, d], -1)], -2)


def forward_kinematics(theta, q):
    theta = np.asarray(theta, dtype=float)
    q = np.asarray(q, dtype=float)
    s1, c1, s12, c12 = _trig(q)
    l1, l2 = theta[..., 0], theta[..., 1]
    return np.stack([l1 * c1 + l2 * c12, l1 * s1 + l2 * s12], -1)


def jacobian(theta, q):
    theta = np.asarray(theta, dtype=float)
    q = np.asarray(q, dtype=float)
    s1, c1, s12, c12 = _trig(q)
    l1, l2 = theta[..., 0], theta[..., 1]
    return _mat(-l1 * s1 - l2 * s12, -l2 * s12, l1 * c1 + l2 * c12, l2 * c12)


def jacobian_rate(theta, q, qdot, theta_dot):
    """Time derivative of ``jacobian(theta, q)`` when both arguments move."""
    s1, c1, s12, c12 = _trig(q)
    l1, l2 = theta[..., 0], theta[..., 1]
    dl1, dl2 = theta_dot[..., 0], theta_dot[..., 1]
    w1 = qdot[..., 0]
    w12 = w1 + qdot[..., 1]
    j12 = -l2 * c12 * w12 - dl2 * s12
    j22 = -l2 * s12 * w12 + dl2 * c12
    return _mat(
        -l1 * c1 * w1 - dl1 * s1 + j12,
        j12,
        -l1 * s1 * w1 + dl1 * c1 + j22,
        j22,
    )


def kinematic_regressor(q, xi):
    """Z(q, xi) with Z(q, xi) @ theta == jacobian(theta, q) @ xi."""
    q = np.asarray(q, dtype=float)
    xi = np.asarray(xi, dtype=float)
    s1, c1, s12, c12 = _trig(q)
    x1 = xi[..., 0]
    x12 = x1 + xi[..., 1]
    return _mat(-s1 * x1, -s12 * x12, c1 * x1, c12 * x12)


def inertia(vartheta, q):
    vartheta = np.asarray(vartheta, dtype=float)
    c2 = np.cos(np.asarray(q, dtype=float)[..., 1])
    a1, a2, a3 = vartheta[..., 0], vartheta[..., 1], vartheta[..., 2]
    off = a3 + a2 * c2
    return _mat(a1 + 2 * a2 * c2, off, off, a3 + 0 * c2)


def coriolis(vartheta, q, qdot):
    """Coriolis/centrifugal matrix chosen so that dM/dt - 2C is skew."""
    vartheta = np.asarray(vartheta, dtype=float)
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    h = vartheta[..., 1] * np.sin(q[..., 1])
    w1, w2 = qdot[..., 0], qdot[..., 1]
    return _mat(-h * w2, -h * (w1 + w2), h * w1, 0 * h)


def gravity(vartheta, q):
    # horizontal plane
    return np.zeros(np.broadcast_shapes(np.shape(q), np.shape(vartheta)[:-1] + (2,)))


def dynamic_regressor(q, qdot, zeta, zeta_dot):
    """Y with Y @ vartheta == M zeta_dot + C zeta + g."""
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    zeta_dot = np.asarray(zeta_dot, dtype=float)
    s2, c2 = np.sin(q[..., 1]), np.cos(q[..., 1])
    w1, w2 = qdot[..., 0], qdot[..., 1]
    z1, z2 = zeta[..., 0], zeta[..., 1]
    a1, a2 = zeta_dot[..., 0], zeta_dot[..., 1]
    zero = 0 * (a1 + c2 + w1 + z1)
    row1 = np.stack(
        [a1 + zero, 2 * c2 * a1 + c2 * a2 - s2 * w2 * z1 - s2 * (w1 + w2) * z2, a2 + zero], -1
    )
    row2 = np.stack([zero, c2 * a1 + s2 * w1 * z1, a1 + a2 + zero], -1)
    return np.stack([row1, row2], -2)


def matvec(A, v):
    return np.einsum("...ij,...j->...i", A, v)


def solve2(A, b):
    """Solve batched 2x2 systems by Cramer's rule; returns (x, det)."""
    a, bb, c, d = A[..., 0, 0], A[..., 0, 1], A[..., 1, 0], A[..., 1, 1]
    det = a * d - bb * c
    x0 = (d * b[..., 0] - bb * b[..., 1]) / det
    x1 = (a * b[..., 1] - c * b[..., 0]) / det
    return np.stack([x0, x1], -1), det


def inverse_kinematics(theta, x, elbow=1.0):
    """Joint angles reaching ``x``; ``elbow`` picks the sign of q2."""
    l1, l2 = float(theta[0]), float(theta[1])
    px, py = float(x[0]), float(x[1])
    c2 = (px * px + py * py - l1 * l1 - l2 * l2) / (2 * l1 * l2)
    if abs(c2) > 1:
        raise ValueError(f"point {x} outside the reachable annulus")
    q2 = np.sign(elbow) * np.arccos(c2)
    q1 = np.arctan2(py, px) - np.arctan2(l2 * np.sin(q2), l1 + l2 * np.cos(q2))
    return np.array([q1, q2])
