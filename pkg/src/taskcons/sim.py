"""Fixed-step integration of the networked closed loop.

Each robot carries the augmented state of ``controller.STATE_LAYOUT``.
All agents are stacked into one ``(n, STATE_DIM)`` array and advanced
together by classical RK4 (or explicit Euler).  Delayed neighbor data come
from a ``DelayBank`` that stores, at every grid time, each agent's
observer position, its rate and the rate's derivative.

Within a step ``[t, t + dt]`` the first stage reads right-hand limits and
the last stage left-hand limits of delayed signals, so switch-on events at
grid times (neighbor data appearing at ``t = T``, the stimulus at
``t_on``) fall exactly on step boundaries.

The consensus modes evaluate their right-hand side with a compiled
per-agent kernel by default; ``backend="numpy"`` uses the reference
implementation assembled from the controller functions.
"""
from dataclasses import dataclass

import numpy as np

from . import _kernel
from . import controller as ctl
from . import robot
from .controller import SLICES, STATE_DIM, AgentState, Measurement
from .network import DelayBank

Q, QD, XO, IS, IX, TH, VTH, IV, IJS = (
    SLICES[k] for k in ("q", "qdot", "x_o", "I_s", "I_x", "theta_hat", "vartheta_hat", "I_v", "I_js")
)
BLOWUP = 1e6


class SimulationError(RuntimeError):
    def __init__(self, msg, t=None):
        self.t = t
        super().__init__(msg if t is None else f"{msg} (t={t:.6g})")


class NumericalBlowup(SimulationError):
    pass


def draw_noise(shape, spec, rng):
    """Zero-mean Gaussian offsets for (q, qdot, x); None when noise is off."""
    if not spec.enabled:
        return None
    return (
        rng.normal(0.0, spec.q, shape) if spec.q > 0 else np.zeros(shape),
        rng.normal(0.0, spec.qdot, shape) if spec.qdot > 0 else np.zeros(shape),
        rng.normal(0.0, spec.x, shape) if spec.x > 0 else np.zeros(shape),
    )


def apply_measurement_noise(q, qdot, x, spec, rng):
    """Noisy controller view of the true (q, qdot, x)."""
    off = draw_noise(np.shape(q), spec, rng)
    if off is None:
        return Measurement(q, qdot, x)
    return Measurement(q + off[0], qdot + off[1], x + off[2])


@dataclass
class Trace:
    """Uniformly sampled run record; arrays are indexed [step, agent, ...]."""

    t: np.ndarray
    state: np.ndarray
    x: np.ndarray
    xdot: np.ndarray
    s: np.ndarray
    s_star: np.ndarray
    qdot_r: np.ndarray
    tau: np.ndarray
    tau_h: np.ndarray
    V: np.ndarray
    Vstar: np.ndarray
    config: object = None

    def __len__(self):
        return len(self.t)

    def field(self, name):
        return self.state[..., SLICES[name]]

    @property
    def q(self):
        return self.field("q")

    @property
    def qdot(self):
        return self.field("qdot")

    @property
    def x_o(self):
        return self.field("x_o")

    @property
    def dx_o(self):
        return self.x_o - self.x

    @property
    def theta_hat(self):
        return self.field("theta_hat")

    @property
    def vartheta_hat(self):
        return self.field("vartheta_hat")


class Simulator:
    """Fixed-step driver; ``backend`` picks the compiled or the numpy right-hand side."""

    def __init__(self, config, backend="compiled"):
        if backend not in ("compiled", "numpy"):
            raise ValueError(f"unknown backend {backend!r}")
        bad = config.problems()
        if bad:
            raise ValueError("invalid scenario: " + "; ".join(bad))
        self.cfg = config
        self.n = config.n
        self.dt = float(config.dt)
        self.n_steps = config.n_steps
        self.theta = np.array([r.params.theta for r in config.robots], dtype=float)
        self.vartheta = np.array([r.params.vartheta for r in config.robots], dtype=float)
        self.gains = config.gains
        self.mode = config.mode
        self.stim = config.stimulus
        self.bank = DelayBank(config.graph, self.dt, self.n_steps + 1, config.interpolation)
        self.deg = self.bank.in_degree()[:, None]
        self.rng = np.random.default_rng(config.seed)
        self.noise = None
        if self.mode == "teleop-pd":
            self.tau_h_teleop = np.asarray(config.teleop.tau_h, dtype=float)
        if self.stim is not None:
            self._x_h = np.asarray(self.stim.x_h, dtype=float)
        self.backend = "numpy" if self.mode == "teleop-pd" else backend
        if self.backend == "compiled":
            self._p = _kernel.pack_params(self.gains, config.pi, self.stim)
            self._mode_code = _kernel.MODE_DYNAMIC if self.mode == "dynamic" else _kernel.MODE_PI
            self._zero_noise = np.zeros((self.n, 6))

    def initial_state(self):
        cfg = self.cfg
        y = np.zeros((self.n, STATE_DIM))
        y[:, Q] = [r.q0 for r in cfg.robots]
        y[:, QD] = [r.qdot0 for r in cfg.robots]
        y[:, XO] = cfg.initial_x_o()
        y[:, TH] = [r.theta_hat0 for r in cfg.robots]
        y[:, VTH] = [r.vartheta_hat0 for r in cfg.robots]
        return y

    def measure(self, q, qdot, x):
        if self.noise is None:
            return Measurement(q, qdot, x)
        nq, nqd, nx = self.noise
        return Measurement(q + nq, qdot + nqd, x + nx)

    def _stimulus(self, t, side, q, qdot):
        tau_h = np.zeros((self.n, 2))
        st = self.stim
        if self._stim_on(t, side):
            i = st.agent
            J = robot.jacobian(self.theta[i], q[i])
            x = robot.forward_kinematics(self.theta[i], q[i])
            f = -st.Kd * (J @ qdot[i]) - st.Kp * (x - self._x_h)
            tau_h[i] = J.T @ f
        return tau_h

    def _plant(self, q, qdot, torque):
        M = robot.inertia(self.vartheta, q)
        C = robot.coriolis(self.vartheta, q, qdot)
        qddot, _ = robot.solve2(M, torque - robot.matvec(C, qdot))
        return qddot

    def _stim_on(self, t, side):
        st = self.stim
        if st is None:
            return False
        eps = 1e-9 * self.dt
        return t > st.t_on + eps or (abs(t - st.t_on) <= eps and side != "left")

    def closed_loop_rhs(self, t, y, side="right"):
        """Time derivative of the stacked state plus auxiliary signals."""
        if self.backend == "numpy":
            return self.closed_loop_rhs_numpy(t, y, side)
        b = self.bank
        noise = self._zero_noise if self.noise is None else np.concatenate(self.noise, axis=1)
        dy = np.empty_like(y)
        aux = np.empty((self.n, _kernel.N_AUX))
        status, agent, det = _kernel.consensus_rhs(
            float(t), side == "left", y, noise, self.theta, self.vartheta, self._p, self._mode_code,
            -1 if self.stim is None else int(self.stim.agent), self._stim_on(t, side),
            b.recv, b.src, b.w, b.T, b.dt, b.x, b.xd, b.xdd, b.xd_left, b.xdd_left, b.count,
            b.interpolation == "hermite", dy, aux,
        )
        if status == _kernel.ERR_SINGULAR:
            raise ctl.SingularEstimatedJacobian(det, [int(agent)], t)
        if status == _kernel.ERR_HISTORY:
            raise LookupError(f"delayed data requested beyond the stored history at t={t}")
        keys = ("x", "xdot", "qdot_r", "s_star", "tau", "tau_h", "xo_dot", "xo_ddot")
        return dy, {k: aux[:, 2 * m:2 * m + 2] for m, k in enumerate(keys)}

    def closed_loop_rhs_numpy(self, t, y, side="right"):
        """Reference right-hand side built from the controller functions."""
        if self.mode == "teleop-pd":
            return self._teleop_rhs(t, y)
        g = self.gains
        st = AgentState(y)
        q, qdot = y[:, Q], y[:, QD]
        x_true = robot.forward_kinematics(self.theta, q)
        meas = self.measure(q, qdot, x_true)
        x_o = y[:, XO]
        query = self.bank.query(t, side)
        coup = self.deg * x_o - self.bank.aggregate(query.positions(x_o))
        try:
            Jh = ctl.estimated_jacobian(st, meas.q, g, t)
        except ctl.SingularEstimatedJacobian as e:
            e.t = t
            raise
        qdot_r, u = ctl.reference_velocity(st, meas.q, coup, g, Jh=Jh)
        dx_o = x_o - meas.x
        xo_dot = u - g.beta * dx_o - g.lam * y[:, IX]
        s_star = -g.alpha * y[:, IS] - g.beta * dx_o - g.lam * y[:, IX]
        th_dot = ctl.adaptation_kinematics(st, meas, qdot_r, g)
        coup_rate = self.deg * xo_dot - self.bank.aggregate(query.rates(xo_dot))
        udot = -coup_rate - g.alpha * s_star

        dy = np.zeros_like(y)
        if self.mode == "dynamic":
            Jh_dot = robot.jacobian_rate(y[:, TH], meas.q, meas.qdot, th_dot)
            qddot_r, _ = robot.solve2(Jh, udot - robot.matvec(Jh_dot, qdot_r))
            Y = robot.dynamic_regressor(meas.q, meas.qdot, qdot_r, qddot_r)
            tau = ctl.torque_dynamic(st, meas, qdot_r, qddot_r, g, Y=Y)
            dy[:, VTH] = ctl.adaptation_dynamics(st, meas, qdot_r, qddot_r, g, Y=Y)
        else:
            tau = ctl.torque_pi_servo(st, meas, qdot_r, self.cfg.pi)
            dy[:, IV] = qdot_r - meas.qdot
        tau_h = self._stimulus(t, side, q, qdot)
        J = robot.jacobian(self.theta, q)
        xdot = robot.matvec(J, qdot)
        Js = robot.matvec(J, qdot - qdot_r)

        dy[:, Q] = qdot
        dy[:, QD] = self._plant(q, qdot, tau + tau_h)
        dy[:, XO] = xo_dot
        dy[:, IS] = s_star
        dy[:, IX] = dx_o
        dy[:, TH] = th_dot
        dy[:, IJS] = np.sum(Js * Js, axis=1, keepdims=True)
        xo_ddot = udot - g.beta * (xo_dot - xdot) - g.lam * dx_o
        aux = dict(x=x_true, xdot=xdot, qdot_r=qdot_r, s_star=s_star, tau=tau, tau_h=tau_h,
                   xo_dot=xo_dot, xo_ddot=xo_ddot)
        return dy, aux

    def _teleop_rhs(self, t, y):
        tc = self.cfg.teleop
        q, qdot = y[:, Q], y[:, QD]
        tau1, tau2 = ctl.teleop_pd_torques(q[0], qdot[0], q[1], qdot[1], tc.KD, tc.KP, self.tau_h_teleop)
        tau = np.stack([tau1, tau2])
        tau_h = np.zeros((2, 2))
        tau_h[0] = self.tau_h_teleop
        dy = np.zeros_like(y)
        dy[:, Q] = qdot
        dy[:, QD] = self._plant(q, qdot, tau)
        x = robot.forward_kinematics(self.theta, q)
        xdot = robot.matvec(robot.jacobian(self.theta, q), qdot)
        zero = np.zeros((self.n, 2))
        aux = dict(x=x, xdot=xdot, qdot_r=zero, s_star=zero, tau=tau - tau_h, tau_h=tau_h,
                   xo_dot=zero, xo_ddot=zero)
        return dy, aux

    def _check(self, y, t):
        bad = ~np.isfinite(y) | (np.abs(y) > BLOWUP)
        if np.any(bad):
            i, k = map(int, np.argwhere(bad)[0])
            name = next(nm for nm, sl in SLICES.items() if sl.start <= k < sl.stop)
            raise NumericalBlowup(f"numerical blow-up in {name} of agent {i}: value {y[i, k]!r}", t)

    def _push(self, y, aux, aux_left):
        self.bank.push(y[:, XO], aux["xo_dot"], aux["xo_ddot"], aux_left["xo_dot"], aux_left["xo_ddot"])

    def _needs_left(self, t):
        if self.noise is not None or self.mode == "teleop-pd":
            return False
        if self.stim is not None and abs(t - self.stim.t_on) <= 1e-9 * self.dt:
            return True
        return self.bank.has_jump(t)

    def step(self, t, y, k1):
        """Advance ``y`` from ``t`` to ``t + dt`` given the right-hand RHS ``k1`` at ``t``."""
        h = self.dt
        if self.cfg.integrator == "euler":
            y1 = y + h * k1
        else:
            k2, _ = self.closed_loop_rhs(t + h / 2, y + (h / 2) * k1, "mid")
            k3, _ = self.closed_loop_rhs(t + h / 2, y + (h / 2) * k2, "mid")
            k4, _ = self.closed_loop_rhs(t + h, y + h * k3, "left")
            y1 = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        np.clip(y1[:, TH], self.gains.theta_lo, self.gains.theta_hi, out=y1[:, TH])
        return y1

    def run(self):
        N = self.n_steps
        n = self.n
        ts = np.arange(N + 1) * self.dt
        states = np.empty((N + 1, n, STATE_DIM))
        rec = {k: np.empty((N + 1, n, 2)) for k in ("x", "xdot", "s_star", "qdot_r", "tau", "tau_h")}

        y = self.initial_state()
        self.noise = draw_noise((n, 2), self.cfg.noise, self.rng)
        t = 0.0
        try:
            dy, aux = self.closed_loop_rhs(0.0, y, "right")
            self._push(y, aux, aux)
            for k in range(N + 1):
                states[k] = y
                for key, arr in rec.items():
                    arr[k] = aux[key]
                if k == N:
                    break
                t = ts[k]
                y = self.step(t, y, dy)
                t = ts[k + 1]
                self._check(y, t)
                if self.noise is not None:
                    self.noise = draw_noise((n, 2), self.cfg.noise, self.rng)
                dy, aux = self.closed_loop_rhs(t, y, "right")
                aux_left = self.closed_loop_rhs(t, y, "left")[1] if self._needs_left(t) else aux
                self._push(y, aux, aux_left)
        except ctl.SingularEstimatedJacobian as e:
            raise SimulationError(str(e), t) from e
        except NumericalBlowup:
            raise
        except FloatingPointError as e:
            raise NumericalBlowup(f"floating point error: {e}", t) from e
        return self._trace(ts, states, rec)

    def _trace(self, ts, states, rec):
        q, qdot = states[..., Q], states[..., QD]
        s = qdot - rec["qdot_r"]
        g = self.gains
        if self.mode == "teleop-pd":
            M = robot.inertia(self.vartheta, q)
            ke = 0.5 * np.einsum("...i,...i->...", qdot, robot.matvec(M, qdot))
            dq = q[:, 0] - q[:, 1]
            pe = 0.25 * np.einsum("...i,...i->...", dq, robot.matvec(self.cfg.teleop.KP, dq))
            V = ke + pe[:, None]
            Vstar = np.zeros_like(V)
        else:
            V = ctl.dynamic_lyapunov(q, qdot, rec["qdot_r"], states[..., VTH], self.vartheta, g)
            I_js = states[..., IJS][..., 0]
            Vstar = ctl.observer_lyapunov(
                states[..., XO] - rec["x"], states[..., IX], states[..., TH], self.theta, I_js, I_js[-1], g
            )
        return Trace(t=ts, state=states, s=s, V=V, Vstar=Vstar, config=self.cfg, **rec)


def run_scenario(config, backend="compiled"):
    return Simulator(config, backend).run()
