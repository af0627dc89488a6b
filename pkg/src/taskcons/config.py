"""Declarative scenario description, JSON round-trip, and invariant checks."""
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import graph as graphs
from . import robot
from .controller import ControllerGains, PIGains, Stimulus

MODES = ("dynamic", "kinematic-pi", "teleop-pd")
INTEGRATORS = ("rk4", "euler")


class ConfigError(ValueError):
    def __init__(self, field, msg):
        self.field = field
        super().__init__(f"config field `{field}`: {msg}")


@dataclass
class RobotSpec:
    params: robot.RobotParams
    q0: tuple
    qdot0: tuple = (0.0, 0.0)
    theta_hat0: tuple = (2.0, 3.0)
    vartheta_hat0: tuple = (0.0, 0.0, 0.0)


@dataclass
class NoiseSpec:
    q: float = 0.0
    qdot: float = 0.0
    x: float = 0.0

    @property
    def enabled(self):
        return self.q > 0 or self.qdot > 0 or self.x > 0


@dataclass
class TeleopSpec:
    KD: np.ndarray = field(default_factory=lambda: 5.0 * np.eye(2))
    KP: np.ndarray = field(default_factory=lambda: 20.0 * np.eye(2))
    tau_h: tuple = (0.5, 0.2)


@dataclass
class ScenarioConfig:
    graph: graphs.DirectedGraph
    robots: list
    dt: float
    t_end: float
    gains: ControllerGains = field(default_factory=ControllerGains)
    mode: str = "dynamic"
    pi: PIGains = field(default_factory=PIGains)
    teleop: TeleopSpec = field(default_factory=TeleopSpec)
    observer_offset: float = 0.02
    x_o0: list = None
    stimulus: Stimulus = None
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    integrator: str = "rk4"
    interpolation: str = "hermite"
    seed: int = 0

    @property
    def n(self):
        return self.graph.n

    @property
    def n_steps(self):
        return int(math.floor(self.t_end / self.dt + 1e-9))

    def initial_x_o(self):
        if self.x_o0 is not None:
            return np.array(self.x_o0, dtype=float)
        return np.array(
            [robot.forward_kinematics(r.params.theta, r.q0) + self.observer_offset for r in self.robots]
        )

    def with_(self, **changes):
        return replace(self, **changes)

    def problems(self):
        """Every violated invariant, as human-readable strings."""
        out = []
        if not self.dt > 0:
            out.append("dt must be > 0")
        if not self.t_end >= self.dt:
            out.append("t_end must be >= dt")
        if self.mode not in MODES:
            out.append(f"mode must be one of {MODES}")
        if self.integrator not in INTEGRATORS:
            out.append(f"integrator must be one of {INTEGRATORS}")
        if self.interpolation not in ("hermite", "linear"):
            out.append("interpolation must be hermite or linear")
        if len(self.robots) != self.n:
            out.append(f"graph has {self.n} agents but {len(self.robots)} robots are listed")
        if not graphs.has_spanning_tree(self.graph):
            out.append("graph has no directed spanning tree")
        T = self.graph.delays[self.graph.weights > 0]
        if self.dt > 0 and np.any((T > 0) & (T < self.dt * (1 - 1e-9))):
            out.append("delays must be 0 or at least dt")
        for name in ("q", "qdot", "x"):
            if not getattr(self.noise, name) >= 0:
                out.append(f"noise.{name} must be >= 0")
        out += self.gains.problems()
        for i, r in enumerate(self.robots):
            out += [f"robots[{i}].{p}" for p in r.params.problems()]
            th = np.asarray(r.theta_hat0, dtype=float)
            if np.any(th < self.gains.theta_lo) or np.any(th > self.gains.theta_hi):
                out.append(f"robots[{i}].theta_hat0 outside projection bounds")
            J = robot.jacobian(th, np.asarray(r.q0, dtype=float))
            if abs(np.linalg.det(J)) < self.gains.eps_det:
                out.append(f"robots[{i}]: estimated Jacobian singular at q0")
        if self.mode == "teleop-pd":
            if self.n != 2:
                out.append("teleop-pd needs exactly 2 robots")
            for name in ("KD", "KP"):
                A = np.asarray(getattr(self.teleop, name))
                if A.shape != (2, 2) or np.any(A != np.diag(np.diag(A))) or np.any(np.diag(A) <= 0):
                    out.append(f"teleop.{name} must be diagonal positive definite")
        for name in ("KP", "KI"):
            A = np.asarray(getattr(self.pi, name))
            if A.shape != (2, 2) or np.any(np.linalg.eigvalsh((A + A.T) / 2) < 0):
                out.append(f"pi.{name} must be a positive semidefinite 2x2 matrix")
        if self.stimulus is not None and not 0 <= self.stimulus.agent < self.n:
            out.append("stimulus.agent out of range")
        return out

    def predicted_consensus_value(self):
        return graphs.predicted_consensus_value(self.graph, self.initial_x_o())

    def to_dict(self):
        def arr(a):
            return np.asarray(a, dtype=float).tolist()

        g = self.gains
        return {
            "dt": self.dt,
            "t_end": self.t_end,
            "mode": self.mode,
            "integrator": self.integrator,
            "interpolation": self.interpolation,
            "seed": self.seed,
            "graph": {"weights": arr(self.graph.weights), "delays": arr(self.graph.delays)},
            "robots": [
                {
                    "theta": arr(r.params.theta),
                    "vartheta": arr(r.params.vartheta),
                    "q0": arr(r.q0),
                    "qdot0": arr(r.qdot0),
                    "theta_hat0": arr(r.theta_hat0),
                    "vartheta_hat0": arr(r.vartheta_hat0),
                }
                for r in self.robots
            ],
            "gains": {
                "alpha": g.alpha, "beta": g.beta, "lam": g.lam,
                "K": arr(g.K), "Gamma": arr(g.Gamma), "Lambda": arr(g.Lambda),
                "theta_lo": g.theta_lo, "theta_hi": g.theta_hi, "eps_det": g.eps_det,
            },
            "observer": {"offset": self.observer_offset}
            if self.x_o0 is None
            else {"x_o0": arr(self.x_o0)},
            "pi": {"KP": arr(self.pi.KP), "KI": arr(self.pi.KI)},
            "teleop": {"KD": arr(self.teleop.KD), "KP": arr(self.teleop.KP), "tau_h": arr(self.teleop.tau_h)},
            "stimulus": None
            if self.stimulus is None
            else {
                "agent": self.stimulus.agent, "t_on": self.stimulus.t_on, "Kd": self.stimulus.Kd,
                "Kp": self.stimulus.Kp, "x_h": arr(self.stimulus.x_h),
            },
            "noise": {"q": self.noise.q, "qdot": self.noise.qdot, "x": self.noise.x},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d):
        return _parse(d)

    @classmethod
    def from_json(cls, text):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError("<document>", f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}")
        return _parse(d)


def load(path):
    with open(path) as f:
        return ScenarioConfig.from_json(f.read())


def _req(d, key, where):
    if not isinstance(d, dict) or key not in d:
        raise ConfigError(where + key, "missing required field")
    return d[key]


def _num(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(where, f"expected a number, got {v!r}")
    return float(v)


def _vec(v, k, where):
    try:
        a = np.array(v, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(where, f"expected {k} numbers, got {v!r}")
    if a.shape != (k,):
        raise ConfigError(where, f"expected {k} numbers, got shape {a.shape}")
    return tuple(a.tolist())


def _mat(v, k, where):
    try:
        a = np.array(v, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(where, f"expected a number or {k}x{k} matrix, got {v!r}")
    if a.ndim == 0:
        return float(a) * np.eye(k)
    if a.ndim == 1 and a.shape == (k,):
        return np.diag(a)
    if a.shape != (k, k):
        raise ConfigError(where, f"expected a number or {k}x{k} matrix, got shape {a.shape}")
    return a


def _parse(d):
    if not isinstance(d, dict):
        raise ConfigError("<document>", "top level must be an object")
    dt = _num(_req(d, "dt", ""), "dt")
    t_end = _num(_req(d, "t_end", ""), "t_end")
    gd = _req(d, "graph", "")
    try:
        g = graphs.DirectedGraph(np.array(_req(gd, "weights", "graph."), dtype=float), gd.get("delays", 0.0))
    except (graphs.GraphError, TypeError, ValueError) as e:
        raise ConfigError("graph", str(e))
    robots = []
    rl = _req(d, "robots", "")
    if not isinstance(rl, list):
        raise ConfigError("robots", "expected a list")
    for i, r in enumerate(rl):
        w = f"robots[{i}]."
        params = robot.RobotParams(
            _vec(r.get("theta", (2.0, 3.0)), 2, w + "theta"),
            _vec(r.get("vartheta", (4.0, 1.0, 1.5)), 3, w + "vartheta"),
        )
        robots.append(
            RobotSpec(
                params,
                _vec(_req(r, "q0", w), 2, w + "q0"),
                _vec(r.get("qdot0", (0.0, 0.0)), 2, w + "qdot0"),
                _vec(r.get("theta_hat0", params.theta), 2, w + "theta_hat0"),
                _vec(r.get("vartheta_hat0", (0.0, 0.0, 0.0)), 3, w + "vartheta_hat0"),
            )
        )
    gn = d.get("gains", {}) or {}
    base = ControllerGains()
    gains = ControllerGains(
        alpha=_num(gn.get("alpha", base.alpha), "gains.alpha"),
        beta=_num(gn.get("beta", base.beta), "gains.beta"),
        lam=_num(gn.get("lam", base.lam), "gains.lam"),
        K=_mat(gn.get("K", base.K), 2, "gains.K"),
        Gamma=_mat(gn.get("Gamma", base.Gamma), 3, "gains.Gamma"),
        Lambda=_mat(gn.get("Lambda", base.Lambda), 2, "gains.Lambda"),
        theta_lo=_num(gn.get("theta_lo", base.theta_lo), "gains.theta_lo"),
        theta_hi=_num(gn.get("theta_hi", base.theta_hi), "gains.theta_hi"),
        eps_det=_num(gn.get("eps_det", base.eps_det), "gains.eps_det"),
    )
    obs = d.get("observer", {}) or {}
    x_o0 = None
    if "x_o0" in obs:
        x_o0 = np.array(obs["x_o0"], dtype=float)
        if x_o0.shape != (g.n, 2):
            raise ConfigError("observer.x_o0", f"expected {g.n}x2 array")
        x_o0 = x_o0.tolist()
    pd_ = d.get("pi", {}) or {}
    pi = PIGains(_mat(pd_.get("KP", 60.0), 2, "pi.KP"), _mat(pd_.get("KI", 10.0), 2, "pi.KI"))
    td = d.get("teleop", {}) or {}
    tdef = TeleopSpec()
    teleop = TeleopSpec(
        _mat(td.get("KD", tdef.KD), 2, "teleop.KD"),
        _mat(td.get("KP", tdef.KP), 2, "teleop.KP"),
        _vec(td.get("tau_h", tdef.tau_h), 2, "teleop.tau_h"),
    )
    sd = d.get("stimulus")
    stim = None
    if sd is not None:
        sdef = Stimulus()
        stim = Stimulus(
            agent=int(sd.get("agent", sdef.agent)),
            t_on=_num(sd.get("t_on", sdef.t_on), "stimulus.t_on"),
            Kd=_num(sd.get("Kd", sdef.Kd), "stimulus.Kd"),
            Kp=_num(sd.get("Kp", sdef.Kp), "stimulus.Kp"),
            x_h=_vec(sd.get("x_h", sdef.x_h), 2, "stimulus.x_h"),
        )
    nd = d.get("noise", {}) or {}
    noise = NoiseSpec(
        _num(nd.get("q", 0.0), "noise.q"), _num(nd.get("qdot", 0.0), "noise.qdot"), _num(nd.get("x", 0.0), "noise.x")
    )
    seed = d.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("seed", "expected an integer")
    return ScenarioConfig(
        graph=g,
        robots=robots,
        dt=dt,
        t_end=t_end,
        gains=gains,
        mode=str(d.get("mode", "dynamic")),
        pi=pi,
        teleop=teleop,
        observer_offset=_num(obs.get("offset", 0.02), "observer.offset"),
        x_o0=x_o0,
        stimulus=stim,
        noise=noise,
        integrator=str(d.get("integrator", "rk4")),
        interpolation=str(d.get("interpolation", "hermite")),
        seed=seed,
    )
