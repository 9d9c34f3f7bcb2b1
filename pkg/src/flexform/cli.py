"""Command-line entry point: ``flexform {simulate,solve-shapes,check-rigidity,verify}``."""
from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from .graph import rigidity_check
from .scenarios import BUILTINS, ScenarioError, load_scenario
from .shapes import DEFAULT_TOL, classify_cardinality, solve_shapes, write_projection_csv
from .sim import HOLD_MODES, IntegrationError, run, save_trajectory
from .dynamics import ActuationType


def _scenario(args):
    sc = load_scenario(args.scenario)
    changes = {}
    if getattr(args, "dt", None) is not None:
        changes["dt"] = args.dt
    if getattr(args, "t_final", None) is not None:
        changes["t_final"] = args.t_final
    if getattr(args, "method", None) is not None:
        changes["method"] = args.method
    return sc.replace(**changes) if changes else sc


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    t0 = time.perf_counter()
    rec = run(sc, hold=args.hold)
    wall = time.perf_counter() - t0
    if args.out:
        save_trajectory(rec, args.out)
    print(f"scenario {sc.name or args.scenario}: {rec.t.size - 1} steps of dt={sc.dt} in {wall:.1f} s")
    print(f"final max |edge error| = {np.max(np.abs(rec.edge_err[-1])):.3e} m")
    print(f"final |qdot| = {np.linalg.norm(rec.qdot[-1]):.3e} rad/s")
    print(f"U: {rec.U[0]:.6g} -> {rec.U[-1]:.6g}, increases beyond eps_int: {rec.lyapunov_violations.size}")
    print(f"steps inside singularity margin: {rec.singular_steps.size}")
    print(f"converged at: {rec.converged_at if rec.converged_at is not None else 'not converged'}")
    return 0


def cmd_solve_shapes(args) -> int:
    sc = _scenario(args)
    sol = solve_shapes(sc.method, sc.manipulators, sc.framework, n_starts=args.starts, seed=args.seed, tol=args.tol)
    counts = {a: sum(c.actuation is a for c in sc.manipulators) for a in ActuationType}
    pred = classify_cardinality(counts[ActuationType.FA], counts[ActuationType.AP], counts[ActuationType.PA], sc.method)
    if args.out:
        write_projection_csv(sol, args.out, vertex=args.vertex)
    nullities = sorted({s.nullity for s in sol.solutions})
    print(f"method {sc.method.value}: {sol.n_unknowns} unknowns, {sol.n_equations} equations")
    print(f"counting prediction: {pred.prediction.name}")
    print(f"{sol.n_converged}/{sol.n_starts} starts converged, {len(sol)} distinct solutions, nullities {nullities}")
    print(f"classification: {sol.classification.name}")
    return 0


def cmd_check_rigidity(args) -> int:
    sc = load_scenario(args.scenario)
    rank, rigid = rigidity_check(sc.framework)
    n = sc.framework.graph.n_vertices
    print(f"rigidity matrix rank {rank} (2N-3 = {2 * n - 3}): {'infinitesimally rigid' if rigid else 'not rigid'}")
    return 0 if rigid else 1


def cmd_verify(args) -> int:
    from .verify import run_checks

    results = run_checks(full=args.full, out=sys.stdout)
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flexform", description="Formation control of flexible-joint two-link arms.")
    sub = p.add_subparsers(dest="command", required=True)
    scen_help = f"scenario JSON file or built-in name ({', '.join(BUILTINS)})"

    s = sub.add_parser("simulate", help="run the closed loop and write a trajectory CSV")
    s.add_argument("--scenario", required=True, help=scen_help)
    s.add_argument("--dt", type=float)
    s.add_argument("--t-final", type=float)
    s.add_argument("--hold", choices=HOLD_MODES, default="stage")
    s.add_argument("--out", help="trajectory CSV path")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("solve-shapes", help="multi-start search of reachable desired shapes")
    s.add_argument("--scenario", required=True, help=scen_help)
    s.add_argument("--method", choices=("distance", "displacement"))
    s.add_argument("--starts", type=int, default=2000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tol", type=float, default=DEFAULT_TOL)
    s.add_argument("--vertex", type=int, default=1, help="vertex whose position is exported")
    s.add_argument("--out", help="projection CSV path")
    s.set_defaults(func=cmd_solve_shapes)

    s = sub.add_parser("check-rigidity", help="rank test of the scenario's reference framework")
    s.add_argument("--scenario", required=True, help=scen_help)
    s.set_defaults(func=cmd_check_rigidity)

    s = sub.add_parser("verify", help="run the invariant self-checks; nonzero exit on failure")
    s.add_argument("--full", action="store_true", help="include 60 s runs and the 2000-start shape study")
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, IntegrationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
