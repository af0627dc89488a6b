"""Step-size self-convergence of the fixed-step integrator.

Compares final states of 1 s runs at dt, dt/2, dt/4 for the delayed ring
and its zero-delay twin, per state field.  The delayed run starts with
neighbor data prefilled by zero, which makes the first half second a stiff
transient and inflates the error constant.
"""
import argparse

import numpy as np

from taskcons import presets, sim
from taskcons.controller import SLICES


def study(cfg, dts):
    finals = [sim.run_scenario(cfg.with_(dt=h)).state[-1] for h in dts]
    diffs = [np.abs(a - b) for a, b in zip(finals, finals[1:])]
    return diffs


def main():
    ap = argparse.ArgumentParser(description="RK4 self-convergence table")
    ap.add_argument("--dt", type=float, default=0.005)
    ap.add_argument("--t-end", type=float, default=1.0)
    args = ap.parse_args()
    dts = [args.dt, args.dt / 2, args.dt / 4]
    for label, delay in (("delayed ring, T = 0.5 s", 0.5), ("zero delay", 0.0)):
        cfg = presets.delayed_consensus(delay=delay).with_(t_end=args.t_end)
        d1, d2 = study(cfg, dts)
        print(f"\n{label}: max |y(dt) - y(dt/2)| = {d1.max():.3e}, order {np.log2(d1.max() / d2.max()):.2f}")
        for name, sl in SLICES.items():
            a, b = d1[:, sl].max(), d2[:, sl].max()
            if a > 0:
                print(f"  {name:>13s}  {a:.3e}  order {np.log2(a / b):.2f}")


if __name__ == "__main__":
    main()
