"""Command-line entry point: ``taskcons run`` and ``taskcons validate``."""
import argparse
import csv
import os
import sys

import numpy as np

from . import analysis, presets
from .config import ConfigError, load
from .sim import SimulationError, Simulator

AGENT_COLUMNS = (
    ("q", 2), ("qdot", 2), ("x", 2), ("x_o", 2), ("dx_o", 2),
    ("theta_hat", 2), ("vartheta_hat", 3), ("tau", 2), ("V", 1), ("Vstar", 1),
)


def trace_header(n):
    cols = ["t"]
    for i in range(n):
        for name, size in AGENT_COLUMNS:
            cols += [f"a{i}_{name}"] if size == 1 else [f"a{i}_{name}{k + 1}" for k in range(size)]
    return cols


def trace_table(tr):
    """(T, 1 + 19 n) array in ``trace_header`` order."""
    T, n = tr.q.shape[:2]
    per = [tr.q, tr.qdot, tr.x, tr.x_o, tr.dx_o, tr.theta_hat, tr.vartheta_hat, tr.tau,
           tr.V[..., None], tr.Vstar[..., None]]
    agents = np.concatenate(per, axis=-1).reshape(T, -1)
    return np.column_stack([tr.t, agents])


def write_trace(path, tr):
    header = trace_header(tr.q.shape[1])
    np.savetxt(path, trace_table(tr), delimiter=",", header=",".join(header), comments="", fmt="%.10g")


def write_rows(path, rows):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def resolve(target):
    if target in presets.PRESETS:
        return presets.get(target)
    if os.path.exists(target):
        return load(target)
    raise ConfigError("<target>", f"{target!r} is neither a preset ({', '.join(presets.PRESETS)}) nor a file")


def cmd_run(args):
    cfg = resolve(args.target)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.dt is not None:
        changes["dt"] = args.dt
    if args.t_end is not None:
        changes["t_end"] = args.t_end
    if args.integrator is not None:
        changes["integrator"] = args.integrator
    if changes:
        cfg = cfg.with_(**changes)
    bad = cfg.problems()
    if bad:
        for b in bad:
            print(f"invalid: {b}", file=sys.stderr)
        return 2
    os.makedirs(args.out, exist_ok=True)
    tr = Simulator(cfg).run()
    write_trace(os.path.join(args.out, "trace.csv"), tr)
    rep = analysis.consensus_report(tr, tol=args.tol)
    write_rows(os.path.join(args.out, "report.csv"), [rep.scalars()])
    with open(os.path.join(args.out, "config.json"), "w") as f:
        f.write(cfg.to_json())
    sweep = presets.SWEEPS.get(args.target)
    if sweep is not None and sweep["kind"] == "damping":
        rows = analysis.damping_sweep_teleop(cfg, sweep["scales"], sweep["t_probe"], jobs=args.jobs)
        write_rows(os.path.join(args.out, "sweep.csv"), rows)
        failed = [r for r in rows if r["error"]]
        if failed:
            print(f"sweep row failed: {failed[0]['error']}", file=sys.stderr)
            return 1
    s = rep.scalars()
    print(f"wrote {args.out}: settled={s['settled']} final=[{s['final_x']:.6f}, {s['final_y']:.6f}]")
    return 0


def cmd_validate(args):
    cfg = resolve(args.path)
    bad = cfg.problems()
    if bad:
        for b in bad:
            print(f"violation: {b}")
        return 1
    print("ok")
    if cfg.mode != "teleop-pd":
        v = cfg.predicted_consensus_value()
        print(f"predicted consensus value: [{v[0]:.10g}, {v[1]:.10g}]")
    if args.emit:
        print(cfg.to_json())
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="taskcons", description="Networked robot task-space consensus simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a preset or a JSON scenario file")
    r.add_argument("target", help="preset name or config path")
    r.add_argument("--out", default="out")
    r.add_argument("--seed", type=int)
    r.add_argument("--dt", type=float)
    r.add_argument("--t-end", type=float)
    r.add_argument("--integrator", choices=["rk4", "euler"])
    r.add_argument("--jobs", type=int, default=1, help="parallel sweep rows")
    r.add_argument("--tol", type=float, default=1e-3, help="settling tolerance for report.csv")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="check a scenario without running it")
    v.add_argument("path", help="config path or preset name")
    v.add_argument("--emit", action="store_true", help="echo the parsed config as JSON")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except SimulationError as e:
        print(f"run failed: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
