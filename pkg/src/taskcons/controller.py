"""Observer-based adaptive task-space consensus controller.

All functions broadcast over a leading agent axis: pass one agent's
vectors (shape ``(2,)``) or a stack ``(n, 2)``.  The controller never reads
true parameters; it sees a ``Measurement`` (possibly noisy ``q``,
``qdot``, ``x``) plus its own internal state.

The coupling argument is the weighted disagreement with delayed
neighbors, ``sum_j w_ij (x_o,i - x_o,j(t - T_ij))``; ``coupling`` builds it
from NeighborSample objects, the simulator builds it from a DelayBank.
"""
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import robot

STATE_LAYOUT = (
    ("q", 2),
    ("qdot", 2),
    ("x_o", 2),
    ("I_s", 2),  # integral of s*_o
    ("I_x", 2),  # integral of x_o - x
    ("theta_hat", 2),
    ("vartheta_hat", 3),
    ("I_v", 2),  # integral of qdot_r - qdot, PI servo only
    ("I_js", 1),  # integral of |J s|^2, for the observer Lyapunov diagnostic
)
SLICES = {}
_start = 0
for _name, _size in STATE_LAYOUT:
    SLICES[_name] = slice(_start, _start + _size)
    _start += _size
STATE_DIM = _start


class AgentState:
    """Named views into an augmented state array of shape ``(..., STATE_DIM)``."""

    def __init__(self, y=None, **fields):
        if y is None:
            lead = np.shape(fields.get("q", np.zeros(2)))[:-1]
            y = np.zeros(lead + (STATE_DIM,))
            for name, value in fields.items():
                y[..., SLICES[name]] = value
        self.y = y

    def __getattr__(self, name):
        if name in SLICES:
            return self.y[..., SLICES[name]]
        raise AttributeError(name)

    def copy(self):
        return AgentState(self.y.copy())

    def replace(self, **fields):
        y = self.y.copy()
        for name, value in fields.items():
            y[..., SLICES[name]] = value
        return AgentState(y)


class Measurement(NamedTuple):
    q: np.ndarray
    qdot: np.ndarray
    x: np.ndarray


class SingularEstimatedJacobian(RuntimeError):
    def __init__(self, det, agents, t=None):
        self.det = det
        self.agents = agents
        self.t = t
        super().__init__(
            f"estimated Jacobian near singular for agent(s) {agents}: det={det}"
            + ("" if t is None else f" at t={t:.6g}")
        )


def _eye(k, v):
    a = np.asarray(v, dtype=float)
    return a * np.eye(k) if a.ndim == 0 else a


def _spd(A):
    A = np.asarray(A, dtype=float)
    return bool(np.allclose(A, A.T, rtol=0, atol=1e-12) and np.all(np.linalg.eigvalsh(A) > 0))


@dataclass
class ControllerGains:
    alpha: float = 10.0
    beta: float = 10.0
    lam: float = 25.0
    K: np.ndarray = field(default_factory=lambda: 30.0 * np.eye(2))
    Gamma: np.ndarray = field(default_factory=lambda: 10.0 * np.eye(3))
    Lambda: np.ndarray = field(default_factory=lambda: 10.0 * np.eye(2))
    theta_lo: float = 0.5
    theta_hi: float = 5.0
    eps_det: float = 1e-3

    def __post_init__(self):
        self.K = _eye(2, self.K)
        self.Gamma = _eye(3, self.Gamma)
        self.Lambda = _eye(2, self.Lambda)

    def problems(self):
        out = []
        if not self.alpha >= 0:
            out.append("alpha must be >= 0")
        if not self.beta > 0:
            out.append("beta must be > 0")
        if not self.lam >= 0:
            out.append("lam must be >= 0")
        for name, k in (("K", 2), ("Gamma", 3), ("Lambda", 2)):
            A = getattr(self, name)
            if A.shape != (k, k) or not _spd(A):
                out.append(f"{name} must be a symmetric positive definite {k}x{k} matrix")
        if not 0 < self.theta_lo < self.theta_hi:
            out.append("projection bounds need 0 < theta_lo < theta_hi")
        if not self.eps_det > 0:
            out.append("eps_det must be > 0")
        return out


@dataclass
class PIGains:
    KP: np.ndarray = field(default_factory=lambda: 60.0 * np.eye(2))
    KI: np.ndarray = field(default_factory=lambda: 10.0 * np.eye(2))

    def __post_init__(self):
        self.KP = _eye(2, self.KP)
        self.KI = _eye(2, self.KI)


@dataclass
class Stimulus:
    """Task-space PD pull on one robot, switched on at ``t_on``."""

    agent: int = 0
    t_on: float = 10.0
    Kd: float = 15.0
    Kp: float = 30.0
    x_h: tuple = (2.6, 0.9)

    def active(self, t, side="right"):
        return t > self.t_on or (t == self.t_on and side != "left")


def coupling(x_o, neighbors):
    """sum_j w_ij (x_o - x_o,j(t - T_ij)) from (w, NeighborSample) pairs."""
    x_o = np.asarray(x_o, dtype=float)
    out = np.zeros_like(x_o)
    for w, ns in neighbors:
        out += w * (x_o - ns.x_o_delayed)
    return out


def coupling_rate(xdot_o, neighbors):
    xdot_o = np.asarray(xdot_o, dtype=float)
    out = np.zeros_like(xdot_o)
    for w, ns in neighbors:
        out += w * (xdot_o - ns.xdot_o_delayed)
    return out


def s_star(state, x, gains):
    """Algebraic form -alpha I_s - beta (x_o - x) - lambda I_x."""
    return -gains.alpha * state.I_s - gains.beta * (state.x_o - x) - gains.lam * state.I_x


def estimated_jacobian(state, q, gains, t=None):
    Jh = robot.jacobian(state.theta_hat, q)
    det = Jh[..., 0, 0] * Jh[..., 1, 1] - Jh[..., 0, 1] * Jh[..., 1, 0]
    bad = np.abs(det) < gains.eps_det
    if np.any(bad):
        raise SingularEstimatedJacobian(det, np.flatnonzero(np.atleast_1d(bad)).tolist(), t)
    return Jh


def reference_velocity(state, q, coup, gains, Jh=None):
    """Returns (qdot_r, u) with u = -coupling - alpha I_s and qdot_r = Jh^-1 u."""
    u = -coup - gains.alpha * state.I_s
    if Jh is None:
        Jh = estimated_jacobian(state, q, gains)
    qdot_r, _ = robot.solve2(Jh, u)
    return qdot_r, u


def observer_rhs(state, meas, coup, gains):
    # deliberately independent of meas.qdot
    return -coup - gains.alpha * state.I_s - gains.beta * (state.x_o - meas.x) - gains.lam * state.I_x


def project_rate(theta_hat, rate, lo, hi):
    """Zero each rate component that would push theta_hat out of [lo, hi]."""
    out = (theta_hat >= hi) & (rate > 0) | (theta_hat <= lo) & (rate < 0)
    return np.where(out, 0.0, rate)


def adaptation_kinematics(state, meas, qdot_r, gains):
    Z = robot.kinematic_regressor(meas.q, qdot_r)
    raw = -robot.matvec(gains.Lambda, robot.matvec(np.swapaxes(Z, -1, -2), state.x_o - meas.x))
    return project_rate(state.theta_hat, raw, gains.theta_lo, gains.theta_hi)


def reference_acceleration(state, meas, coup_rate, qdot_r, theta_hat_dot, gains, Jh=None):
    """d/dt of qdot_r: Jh^-1 (udot - dJh/dt qdot_r)."""
    udot = -coup_rate - gains.alpha * s_star(state, meas.x, gains)
    if Jh is None:
        Jh = estimated_jacobian(state, meas.q, gains)
    Jh_dot = robot.jacobian_rate(state.theta_hat, meas.q, meas.qdot, theta_hat_dot)
    qddot_r, _ = robot.solve2(Jh, udot - robot.matvec(Jh_dot, qdot_r))
    return qddot_r


def torque_dynamic(state, meas, qdot_r, qddot_r, gains, Y=None):
    if Y is None:
        Y = robot.dynamic_regressor(meas.q, meas.qdot, qdot_r, qddot_r)
    s = meas.qdot - qdot_r
    return -robot.matvec(gains.K, s) + robot.matvec(Y, state.vartheta_hat)


def adaptation_dynamics(state, meas, qdot_r, qddot_r, gains, Y=None):
    if Y is None:
        Y = robot.dynamic_regressor(meas.q, meas.qdot, qdot_r, qddot_r)
    s = meas.qdot - qdot_r
    return -robot.matvec(gains.Gamma, robot.matvec(np.swapaxes(Y, -1, -2), s))


def torque_pi_servo(state, meas, qdot_r, pi):
    return robot.matvec(pi.KP, qdot_r - meas.qdot) + robot.matvec(pi.KI, state.I_v)


def external_stimulus_pd(t, q, qdot, theta, stim, side="right"):
    """J^T (-Kd xdot - Kp (x - x_h)) using the true kinematics, zero before t_on."""
    q = np.asarray(q, dtype=float)
    if not stim.active(t, side):
        return np.zeros_like(q)
    J = robot.jacobian(theta, q)
    x = robot.forward_kinematics(theta, q)
    xdot = robot.matvec(J, qdot)
    f = -stim.Kd * xdot - stim.Kp * (x - np.asarray(stim.x_h, dtype=float))
    return robot.matvec(np.swapaxes(J, -1, -2), f)


def teleop_pd_torques(q1, qdot1, q2, qdot2, KD, KP, tau_h):
    """Two-arm PD coupling; the operator torque acts on arm 1."""
    KD, KP = _eye(2, KD), _eye(2, KP)
    spring = robot.matvec(KP, np.asarray(q1) - np.asarray(q2))
    tau1 = -robot.matvec(KD, qdot1) - spring + tau_h
    tau2 = -robot.matvec(KD, qdot2) + spring
    return tau1, tau2


def dynamic_lyapunov(q, qdot, qdot_r, vartheta_hat, vartheta, gains):
    """V = 1/2 s^T M s + 1/2 dv^T Gamma^-1 dv, with true M and s = qdot - qdot_r."""
    s = qdot - qdot_r
    M = robot.inertia(vartheta, q)
    dv = vartheta_hat - vartheta
    Gi = np.linalg.inv(gains.Gamma)
    return 0.5 * np.einsum("...i,...i->...", s, robot.matvec(M, s)) + 0.5 * np.einsum(
        "...i,...i->...", dv, robot.matvec(Gi, dv)
    )


def observer_lyapunov(dx_o, I_x, theta_hat, theta, I_js, l_M, gains):
    """Quasi-Lyapunov V* with the unknown bound l_M supplied by the caller.

    Pass the run's final accumulated ``I_js`` as ``l_M``; V* is then
    defined up to that constant and its monotonicity is unaffected.
    """
    dth = theta_hat - theta
    Li = np.linalg.inv(gains.Lambda)
    return (
        0.5 * np.einsum("...i,...i->...", dx_o, dx_o)
        + 0.5 * gains.lam * np.einsum("...i,...i->...", I_x, I_x)
        + (l_M - I_js) / (2 * gains.beta)
        + 0.5 * np.einsum("...i,...i->...", dth, robot.matvec(Li, dth))
    )
