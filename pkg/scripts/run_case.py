"""Run one or more built-in cases and print a convergence table.

    python3 scripts/run_case.py case2 case3 --t-final 60 --out-dir runs/
"""
import argparse
import time
from pathlib import Path

import numpy as np

from flexform.scenarios import BUILTINS, builtin
from flexform.sim import run, save_trajectory


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("cases", nargs="*", default=["case2", "case3"], choices=BUILTINS)
    ap.add_argument("--t-final", type=float, default=60.0)
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--hold", default="stage", choices=["stage", "zoh"])
    ap.add_argument("--out-dir", type=Path, default=None)
    args = ap.parse_args()

    print(f"{'case':6} {'wall s':>7} {'max|e|':>9} {'|qdot|':>9} {'max|q_pas|':>10} {'U0':>9} {'U_end':>9} {'conv t':>7}")
    for name in args.cases:
        sc = builtin(name, dt=args.dt, t_final=args.t_final)
        t0 = time.perf_counter()
        rec = run(sc, hold=args.hold)
        wall = time.perf_counter() - t0
        passive = [abs(rec.q[-1, i, c.actuation.passive_index]) for i, c in enumerate(sc.manipulators) if c.actuation.passive_index is not None]
        conv = "-" if rec.converged_at is None else f"{rec.converged_at:.2f}"
        print(
            f"{name:6} {wall:7.1f} {np.max(np.abs(rec.edge_err[-1])):9.2e} {np.linalg.norm(rec.qdot[-1]):9.2e} "
            f"{max(passive, default=0.0):10.2e} {rec.U[0]:9.3e} {rec.U[-1]:9.3e} {conv:>7}"
        )
        if args.out_dir is not None:
            args.out_dir.mkdir(parents=True, exist_ok=True)
            save_trajectory(rec, args.out_dir / f"{name}.csv")


if __name__ == "__main__":
    main()
