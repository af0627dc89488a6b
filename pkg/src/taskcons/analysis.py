"""Post-hoc metrics: consensus errors, equilibrium extraction, sweeps.

Sweep rows are plain dicts so they can go straight into a CSV writer.  A
row whose run fails keeps its key, NaN metrics and an ``error`` message.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import graph as graphs
from .controller import ControllerGains, PIGains, Stimulus
from .config import TeleopSpec
from .sim import SimulationError, run_scenario

TAIL = 0.05


def max_pairwise_error(x):
    """max_{i,j} |x_i - x_j| per sample for x of shape (T, n, 2)."""
    x = np.asarray(x, dtype=float)
    diff = x[:, :, None, :] - x[:, None, :, :]
    return np.sqrt((diff ** 2).sum(-1)).max(axis=(1, 2))


def tail_mean(a, frac=TAIL):
    """Mean over the trailing fraction of samples (at least one)."""
    a = np.asarray(a, dtype=float)
    k = max(1, int(round(frac * len(a))))
    return a[-k:].mean(axis=0)


def settling_time(t, err, tol):
    """First time after which ``err`` stays below ``tol``; None if it never does."""
    above = np.flatnonzero(np.asarray(err) >= tol)
    if len(above) == 0:
        return float(t[0])
    if above[-1] == len(err) - 1:
        return None
    return float(t[above[-1] + 1])


@dataclass
class ConsensusReport:
    t: np.ndarray
    max_pairwise: np.ndarray
    gamma_mean: np.ndarray
    plain_mean: np.ndarray
    dx_o_norm: np.ndarray
    final: np.ndarray  # gamma-weighted, trailing-window mean
    final_plain: np.ndarray
    predicted: Optional[np.ndarray]
    tol: float
    settling_time: Optional[float]

    @property
    def settled(self):
        return self.settling_time is not None

    def scalars(self):
        pred = self.predicted if self.predicted is not None else np.full(2, np.nan)
        return {
            "settled": self.settled,
            "settling_time": np.nan if self.settling_time is None else self.settling_time,
            "tol": self.tol,
            "final_x": self.final[0],
            "final_y": self.final[1],
            "final_mean_x": self.final_plain[0],
            "final_mean_y": self.final_plain[1],
            "predicted_x": pred[0],
            "predicted_y": pred[1],
            "max_pairwise_end": self.max_pairwise[-1],
            "max_dx_o_end": self.dx_o_norm[-1].max(),
        }


def consensus_report(trace, graph=None, tol=1e-3):
    cfg = trace.config
    if graph is None:
        graph = cfg.graph
    gamma = graphs.left_eigenvector_gamma(graph)
    x = trace.x
    gm = np.einsum("k,tkd->td", gamma, x)
    pm = x.mean(axis=1)
    err = max_pairwise_error(x)
    pred = None
    if cfg is not None and cfg.mode != "teleop-pd":
        pred = graphs.predicted_consensus_value(graph, trace.x_o[0])
    return ConsensusReport(
        t=trace.t,
        max_pairwise=err,
        gamma_mean=gm,
        plain_mean=pm,
        dx_o_norm=np.linalg.norm(trace.dx_o, axis=-1),
        final=tail_mean(gm),
        final_plain=tail_mean(pm),
        predicted=pred,
        tol=tol,
        settling_time=settling_time(trace.t, err, tol),
    )


def _run_row(job):
    key, cfg, tol = job
    row = dict(key)
    try:
        rep = consensus_report(run_scenario(cfg), tol=tol)
    except (SimulationError, LookupError, ValueError) as e:
        row.update(final_x=np.nan, final_mean_x=np.nan, offset=np.nan, settling_time=np.nan, error=str(e))
        return row
    x_h = cfg.stimulus.x_h[0] if cfg.stimulus is not None else np.nan
    row.update(
        final_x=rep.final[0],
        final_y=rep.final[1],
        final_mean_x=rep.final_plain[0],
        final_mean_y=rep.final_plain[1],
        offset=abs(rep.final_plain[0] - x_h),
        settling_time=np.nan if rep.settling_time is None else rep.settling_time,
        error="",
    )
    return row


def _map(fn, jobs, n_jobs):
    if n_jobs is None or n_jobs <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as ex:
        return list(ex.map(fn, jobs))


def manipulability_sweep(base, alphas, stimulus=Stimulus(), tol=1e-2, jobs=1):
    """One run per alpha; ``offset`` is |final mean X - x_h,X| (NaN without stimulus)."""
    work = []
    for a in alphas:
        g = base.gains
        gains = ControllerGains(a, g.beta, g.lam, g.K, g.Gamma, g.Lambda, g.theta_lo, g.theta_hi, g.eps_det)
        work.append(({"alpha": float(a)}, base.with_(gains=gains, stimulus=stimulus), tol))
    return _map(_run_row, work, jobs)


def pi_integral_sweep(base, KI_values, tol=1e-2, jobs=1):
    """Kinematic-mode runs differing only in the servo's integral gain."""
    work = []
    for ki in KI_values:
        cfg = base.with_(mode="kinematic-pi", pi=PIGains(base.pi.KP, ki))
        work.append(({"KI": float(np.mean(np.diag(np.atleast_2d(cfg.pi.KI))))}, cfg, tol))
    return _map(_run_row, work, jobs)


def _damping_row(job):
    scale, cfg, t_probe = job
    try:
        tr = run_scenario(cfg.with_(t_end=t_probe))
    except (SimulationError, ValueError) as e:
        return {"kd_scale": scale, "displacement": np.nan, "error": str(e)}
    qc = tr.q.mean(axis=1)
    return {"kd_scale": scale, "displacement": float(np.linalg.norm(qc[-1] - qc[0])), "error": ""}


def damping_sweep_teleop(base, scales, t_probe=10.0, tau_h=None, jobs=1):
    """Midpoint displacement |q_c(t_probe) - q_c(0)| per damping scale, q_c = (q1 + q2)/2."""
    tc = base.teleop
    tau = tc.tau_h if tau_h is None else tau_h
    work = [
        (float(s), base.with_(teleop=TeleopSpec(KD=s * np.asarray(tc.KD), KP=tc.KP, tau_h=tau)), t_probe)
        for s in scales
    ]
    return _map(_damping_row, work, jobs)
