"""Multi-start reachable-shape study over the four built-in cases.

Prints the counting prediction next to what the solver found and, with
--out-dir, writes one projection CSV per case (virtual tip of --vertex).
"""
import argparse
import time
from pathlib import Path

from flexform.dynamics import ActuationType
from flexform.scenarios import BUILTINS, builtin
from flexform.shapes import classify_cardinality, solve_shapes, write_projection_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--starts", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tol", type=float, default=1e-8)
    ap.add_argument("--method", choices=["distance", "displacement"], default=None)
    ap.add_argument("--vertex", type=int, default=1)
    ap.add_argument("--out-dir", type=Path, default=None)
    args = ap.parse_args()

    print(f"{'case':6} {'acts':12} {'pred':13} {'found':>6} {'nullity':10} {'class':13} {'s':>6}")
    for name in BUILTINS:
        sc = builtin(name)
        method = args.method or sc.method
        acts = [c.actuation for c in sc.manipulators]
        pred = classify_cardinality(*(acts.count(a) for a in ActuationType), method)
        t0 = time.perf_counter()
        sol = solve_shapes(method, sc.manipulators, sc.framework, n_starts=args.starts, seed=args.seed, tol=args.tol)
        wall = time.perf_counter() - t0
        nul = ",".join(str(v) for v in sorted({s.nullity for s in sol.solutions})) or "-"
        label = ",".join(a.name for a in acts)
        print(f"{name:6} {label:12} {pred.prediction.name:13} {len(sol):6d} {nul:10} {sol.classification.name:13} {wall:6.1f}")
        if args.out_dir is not None:
            args.out_dir.mkdir(parents=True, exist_ok=True)
            write_projection_csv(sol, args.out_dir / f"{name}_vertex{args.vertex}.csv", vertex=args.vertex)


if __name__ == "__main__":
    main()
