"""Constant-delay communication channels carrying (x_o, xdot_o) samples.

Before a channel has data for ``t - T`` (in particular for ``0 <= t < T``)
the receiver sees the zero vector, flagged invalid.

Signals may jump at sample times (a neighbor's own delayed input switching
on).  Each sample therefore keeps the rate's right-hand value and, when it
differs, the left-hand value; queries pick a side so that a fixed-step
integrator evaluating at the end of a step sees the limit from inside the
step.
"""
import bisect
from dataclasses import dataclass

import numpy as np


class NonMonotoneTime(ValueError):
    pass


@dataclass(frozen=True)
class NeighborSample:
    x_o_delayed: np.ndarray
    xdot_o_delayed: np.ndarray
    valid: bool

    @classmethod
    def invalid(cls, dim=2):
        return cls(np.zeros(dim), np.zeros(dim), False)


def hermite_weights(u):
    u2 = u * u
    u3 = u2 * u
    return 2 * u3 - 3 * u2 + 1, u3 - 2 * u2 + u, -2 * u3 + 3 * u2, u3 - u2


class DelayChannel:
    """One directed edge with a constant delay.

    ``interpolation="linear"`` interpolates both payloads linearly.
    ``"hermite"`` uses cubic Hermite interpolation with the stored
    derivatives (``xdot_o`` for positions, ``xddot_o`` for rates when
    pushed), which keeps a fourth-order integrator fourth order.
    """

    def __init__(self, delay, interpolation="linear", dt_hint=None):
        if delay < 0:
            raise ValueError("delay must be nonnegative")
        if interpolation not in ("linear", "hermite"):
            raise ValueError(f"unknown interpolation {interpolation!r}")
        self.delay = float(delay)
        self.interpolation = interpolation
        self.dt_hint = dt_hint
        self.times = []
        self._x = []
        self._xd = []
        self._xdd = []
        self._xd_left = []
        self._xdd_left = []
        self.first_time = None

    def __len__(self):
        return len(self.times)

    def push(self, t, x_o, xdot_o, xddot_o=None, xdot_left=None, xddot_left=None):
        t = float(t)
        if self.times and t <= self.times[-1]:
            raise NonMonotoneTime(f"push at t={t} after t={self.times[-1]}")
        xd = np.array(xdot_o, dtype=float)
        xdd = None if xddot_o is None else np.array(xddot_o, dtype=float)
        self.times.append(t)
        self._x.append(np.array(x_o, dtype=float))
        self._xd.append(xd)
        self._xdd.append(xdd)
        self._xd_left.append(xd if xdot_left is None else np.array(xdot_left, dtype=float))
        self._xdd_left.append(xdd if xddot_left is None else np.array(xddot_left, dtype=float))
        if self.first_time is None:
            self.first_time = t
        if self.dt_hint is not None:
            self._drop_before(t - self.delay - 2 * self.dt_hint)
        return self

    def _drop_before(self, t_old):
        # keep one sample at or before t_old so interpolation stays bracketed
        k = bisect.bisect_right(self.times, t_old) - 1
        if k > 0:
            for buf in (self.times, self._x, self._xd, self._xdd, self._xd_left, self._xdd_left):
                del buf[:k]

    def sample(self, t, side="right"):
        tau = float(t) - self.delay
        dim = self._x[0].shape[0] if self._x else 2
        # snap to a stored timestamp within round-off (t - T rarely lands exactly)
        snap = 1e-12 * max(1.0, abs(tau))
        if not self.times or tau < self.first_time - snap:
            return NeighborSample.invalid(dim)
        if abs(tau - self.first_time) <= snap and side == "left":
            return NeighborSample.invalid(dim)
        if tau > self.times[-1] + snap:
            raise LookupError(f"no data yet for t - T = {tau} (last sample {self.times[-1]})")
        if tau < self.times[0] - snap:
            raise LookupError(f"sample for t - T = {tau} was dropped")
        k = bisect.bisect_left(self.times, tau)
        if k > 0 and tau - self.times[k - 1] <= snap:
            k -= 1
        if k < len(self.times) and abs(self.times[k] - tau) <= snap:
            if side == "left":
                return NeighborSample(self._x[k].copy(), self._xd_left[k].copy(), True)
            return NeighborSample(self._x[k].copy(), self._xd[k].copy(), True)
        k0 = k - 1
        t0, t1 = self.times[k0], self.times[k0 + 1]
        h = t1 - t0
        u = (tau - t0) / h
        x0, x1 = self._x[k0], self._x[k0 + 1]
        v0, v1 = self._xd[k0], self._xd_left[k0 + 1]
        if self.interpolation == "linear":
            return NeighborSample(x0 + u * (x1 - x0), v0 + u * (v1 - v0), True)
        h00, h10, h01, h11 = hermite_weights(u)
        x = h00 * x0 + h10 * h * v0 + h01 * x1 + h11 * h * v1
        a0, a1 = self._xdd[k0], self._xdd_left[k0 + 1]
        if a0 is None or a1 is None:
            v = v0 + u * (v1 - v0)
        else:
            v = h00 * v0 + h10 * h * a0 + h01 * v1 + h11 * h * a1
        return NeighborSample(x, v, True)


class EdgeQuery:
    """Per-edge lookup positions for one (t, side) pair; see DelayBank.query."""

    def __init__(self, bank, k0, u, valid, live):
        self.bank = bank
        self.k0 = k0
        self.k1 = np.minimum(k0 + 1, max(bank.count - 1, 0))
        self.valid = valid
        self.live = live
        h = bank.dt
        if bank.interpolation == "hermite":
            h00, h10, h01, h11 = hermite_weights(u)
        else:
            h00, h10, h01, h11 = 1 - u, 0 * u, u, 0 * u
        mask = valid & ~live
        self._w = [(c * mask)[:, None] for c in (h00, h10 * h, h01, h11 * h)]

    def _blend(self, a0, d0, a1, d1):
        w00, w10, w01, w11 = self._w
        src = self.bank.src
        return w00 * a0[self.k0, src] + w10 * d0[self.k0, src] + w01 * a1[self.k1, src] + w11 * d1[self.k1, src]

    def positions(self, live_x_o):
        b = self.bank
        out = self._blend(b.x, b.xd, b.x, b.xd_left)
        if b.has_live:
            out = np.where(self.live[:, None], live_x_o[b.src], out)
        return out

    def rates(self, live_xdot_o):
        b = self.bank
        if b.interpolation == "hermite":
            out = self._blend(b.xd, b.xdd, b.xd_left, b.xdd_left)
        else:
            w00, _, w01, _ = self._w
            out = w00 * b.xd[self.k0, b.src] + w01 * b.xd_left[self.k1, b.src]
        if b.has_live:
            out = np.where(self.live[:, None], live_xdot_o[b.src], out)
        return out


class DelayBank:
    """Every edge of a graph on a uniform sample grid ``t_k = k * dt``.

    Histories are stored once per source agent; edges read them at their
    own delay.  Zero-delay edges read the caller's live values instead.
    The semantics match a set of per-edge DelayChannel objects.
    """

    def __init__(self, graph, dt, n_samples, interpolation="hermite", dim=2):
        edges = graph.edges()
        self.n = graph.n
        self.dt = float(dt)
        self.interpolation = interpolation
        self.recv = np.array([e[0] for e in edges], dtype=int)
        self.src = np.array([e[1] for e in edges], dtype=int)
        self.w = np.array([e[2] for e in edges], dtype=float)
        self.T = np.array([e[3] for e in edges], dtype=float)
        self.live_edges = self.T == 0
        self._spread = np.zeros((self.n, len(edges)))
        self._spread[self.recv, np.arange(len(edges))] = self.w
        self.has_live = bool(np.any(self.live_edges))
        bad = (self.T > 0) & (self.T < self.dt * (1 - 1e-9))
        if np.any(bad):
            raise ValueError("nonzero delays must be at least one step (dt)")
        shape = (n_samples, self.n, dim)
        self.x = np.zeros(shape)
        self.xd = np.zeros(shape)
        self.xdd = np.zeros(shape)
        self.xd_left = np.zeros(shape)
        self.xdd_left = np.zeros(shape)
        self.jump = np.zeros((n_samples, self.n), dtype=bool)
        self.count = 0

    def push(self, x_o, xd, xdd, xd_left=None, xdd_left=None):
        k = self.count
        self.x[k] = x_o
        self.xd[k] = xd
        self.xdd[k] = xdd
        self.xd_left[k] = xd if xd_left is None else xd_left
        self.xdd_left[k] = xdd if xdd_left is None else xdd_left
        if k > 0:
            self.jump[k] = np.any(self.xd_left[k] != self.xd[k], -1) | np.any(self.xdd_left[k] != self.xdd[k], -1)
        self.count += 1

    def _locate(self, t, side):
        tau = t - self.T
        s = tau / self.dt
        kr = np.rint(s)
        exact = np.abs(s - kr) <= 1e-9 * np.maximum(1.0, np.abs(s))
        k0 = np.where(exact, kr - (side == "left"), np.floor(s))
        u = np.where(exact, 1.0 if side == "left" else 0.0, s - np.floor(s))
        return k0.astype(int), u, exact, kr.astype(int)

    def query(self, t, side="right"):
        k0, u, _, _ = self._locate(t, side)
        valid = (k0 >= 0) | self.live_edges
        needs_next = valid & ~self.live_edges & (u > 0)
        if np.any(needs_next & (k0 + 1 >= self.count)) or np.any(valid & ~self.live_edges & (k0 >= self.count)):
            raise LookupError(f"delayed data requested beyond the stored history at t={t}")
        return EdgeQuery(self, np.maximum(k0, 0), u, valid, self.live_edges)

    def has_jump(self, t):
        """True when some edge's left and right values differ at time t."""
        if len(self.T) == 0:
            return False
        _, _, exact, kr = self._locate(t, "right")
        hit = exact & ~self.live_edges & (kr >= 0)
        if not np.any(hit):
            return False
        if np.any(hit & (kr == 0)):
            return True
        kk = np.clip(kr, 0, max(self.count - 1, 0))
        return bool(np.any(hit & (kr < self.count) & self.jump[kk, self.src]))

    def aggregate(self, values):
        """Sum of ``w_e * values_e`` onto each receiver."""
        return self._spread @ values

    def in_degree(self):
        return self._spread.sum(axis=1)
