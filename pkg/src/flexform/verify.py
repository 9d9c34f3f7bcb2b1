"""Self-check suite behind ``flexform verify``.

Every check returns a ``CheckResult``. The quick set finishes in well under
a minute; ``full=True`` adds the 60 s closed-loop runs and the 2000-start
reachable-shape study.
"""
from __future__ import annotations

import io
import math
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .controller import AgentLaw, centralized_torques, gather_messages
from .dynamics import (
    ActuationType,
    LinkParams,
    ManipulatorConfig,
    MechParams,
    coriolis_matrix,
    mass_matrix_derivative,
)
from .graph import (
    FormationGraph,
    FormationMethod,
    Framework,
    formation_error,
    potential,
    potential_gradient,
    rigidity_check,
    stiffness_vector,
)
from .kinematics import ObservedNeighbor, virtual_end_effector, virtual_from_observables
from .scenarios import SQUARE_EDGES, SQUARE_X_STAR, builtin, load_scenario, save_scenario
from .shapes import ShapeClass, solve_shapes
from .sim import NetworkState, Simulator, run, verify_rest_equilibrium


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def random_config(rng: np.random.Generator, actuation=ActuationType.FA) -> ManipulatorConfig:
    """Random but physically sensible arm; used by property checks and tests."""
    l1, l2 = rng.uniform(0.2, 1.0, 2)
    link1 = LinkParams(rng.uniform(0.2, 2.0), rng.uniform(0.005, 0.1), l1, rng.uniform(0.1, 0.9) * l1)
    link2 = LinkParams(rng.uniform(0.2, 2.0), rng.uniform(0.005, 0.1), l2, rng.uniform(0.1, 0.9) * l2)
    return ManipulatorConfig(
        MechParams(link1, link2),
        stiffness=tuple(rng.uniform(0.5, 10.0, 2)),
        actuation=actuation,
        base=tuple(rng.uniform(-2, 2, 2)),
        beta=float(rng.uniform(-math.pi, math.pi)),
    )


def check_skew_symmetry(n: int = 200, seed: int = 1) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        p = random_config(rng).params
        q2 = rng.uniform(-math.pi, math.pi)
        qd = rng.uniform(-5, 5, 2)
        v = rng.uniform(-5, 5, 2)
        n_mat = mass_matrix_derivative(p, q2, qd[1]) - 2 * coriolis_matrix(p, q2, qd)
        worst = max(worst, abs(v @ n_mat @ v))
    return CheckResult("skew symmetry of M' - 2C", worst < 1e-12, f"max |v^T N v| = {worst:.2e} over {n} samples")


def _fd_gradient(method, fw, x, k_s, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.shape[0]):
        for a in range(2):
            xp, xm = x.copy(), x.copy()
            xp[i, a] += h
            xm[i, a] -= h
            vp = potential(formation_error(method, fw, xp), k_s)
            vm = potential(formation_error(method, fw, xm), k_s)
            g[i, a] = (vp - vm) / (2 * h)
    return g


def check_gradient(n: int = 20, seed: int = 2) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        fw = Framework(FormationGraph(4, SQUARE_EDGES), rng.uniform(-2, 2, (4, 2)))
        x = rng.uniform(-2, 2, (4, 2))
        for method in FormationMethod:
            k = stiffness_vector(method, rng.uniform(0.1, 2.0, len(SQUARE_EDGES)), len(SQUARE_EDGES))
            err = np.max(np.abs(potential_gradient(method, fw, x, k) - _fd_gradient(method, fw, x, k)))
            worst = max(worst, err)
    return CheckResult("potential gradient vs finite difference", worst < 1e-6, f"max abs error {worst:.2e}")


def check_rigidity() -> CheckResult:
    full, _ = rigidity_check(Framework(FormationGraph(4, SQUARE_EDGES), SQUARE_X_STAR))
    bare, _ = rigidity_check(Framework(FormationGraph(4, SQUARE_EDGES[:4]), SQUARE_X_STAR))
    return CheckResult("rigidity ranks", (full, bare) == (5, 4), f"square+diagonal {full}, square {bare}")


def check_local_vs_central(n: int = 20, seed: int = 3) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name in ("case1", "case2", "case3", "case4"):
        sc = builtin(name)
        sim = Simulator(sc)
        for _ in range(n // 4 + 1):
            q = rng.uniform(-math.pi, math.pi, (sc.n, 2))
            qd = rng.uniform(-1, 1, (sc.n, 2))
            obs = sim.observations(q)
            local = np.array(
                [
                    AgentLaw(i, c, sc.framework, sc.method, sc.gains)(
                        NetworkState(q, qd).agent(i), gather_messages(i, sc.framework, obs)
                    )
                    for i, c in enumerate(sc.manipulators, start=1)
                ]
            )
            central = centralized_torques(sc.manipulators, q, qd, sc.framework, sc.method, sc.gains)
            worst = max(worst, float(np.max(np.abs(local - central))))
    return CheckResult("distributed vs stacked controller", worst < 1e-12, f"max abs difference {worst:.2e}")


def check_observation_roundtrip(n: int = 100, seed: int = 4) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        for act in ActuationType:
            c = random_config(rng, act)
            q = rng.uniform(-math.pi, math.pi, 2)
            err = np.max(np.abs(virtual_from_observables(ObservedNeighbor.of(c, q)) - virtual_end_effector(c, q)))
            worst = max(worst, float(err))
    return CheckResult("virtual tip rebuilt from observations", worst < 1e-10, f"max abs error {worst:.2e}")


def check_rest_equilibrium(n: int = 100, seed: int = 5) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        for act in (ActuationType.AP, ActuationType.PA):
            c = random_config(rng, act)
            a = act.active_indices[0]
            qa = rng.uniform(-math.pi, math.pi)
            res = verify_rest_equilibrium(c, qa, c.stiffness[a] * qa)
            worst = max(worst, abs(res.passive_angle), res.residual)
    return CheckResult("passive angle at rest", worst < 1e-10, f"max |passive angle|, residual = {worst:.2e}")


def richardson_ratio(scenario, horizon: float = 1.0, dt: float = 0.02) -> float:
    """|y(dt) - y_ref| / |y(dt/2) - y_ref| for the closed loop over ``horizon``."""

    def final(h):
        sim = Simulator(scenario.replace(dt=h))
        s = NetworkState.initial(scenario)
        for _ in range(int(round(horizon / h))):
            s = sim.step(s)[0]
        return np.concatenate([s.q.ravel(), s.qdot.ravel()])

    ref = final(dt / 16)
    return float(np.linalg.norm(final(dt) - ref) / np.linalg.norm(final(dt / 2) - ref))


def check_rk4_order() -> CheckResult:
    ratio = richardson_ratio(builtin("case2"))
    return CheckResult("RK4 Richardson ratio", ratio >= 12, f"ratio {ratio:.2f} (fourth order gives 16)")


def check_lyapunov_short(t_final: float = 5.0) -> CheckResult:
    rec = run(builtin("case2"), t_final=t_final)
    bad = rec.lyapunov_violations.size
    return CheckResult(
        "U non-increasing (case2, short run)",
        bad == 0,
        f"{bad} violations, max step increase {np.max(np.diff(rec.U)):.2e}, eps_int {rec.eps_int:.2e}",
    )


def check_scenario_roundtrip() -> CheckResult:
    ok = True
    with tempfile.TemporaryDirectory() as d:
        for name in ("case1", "case2", "case3", "case4"):
            sc = builtin(name)
            path = Path(d) / f"{name}.json"
            save_scenario(sc, path)
            ok &= load_scenario(path) == sc
    return CheckResult("scenario save/load round trip", ok, "four built-ins")


def check_convergence(name: str) -> CheckResult:
    rec = run(builtin(name))
    sc = builtin(name)
    passive = [rec.q[-1, i, c.actuation.passive_index] for i, c in enumerate(sc.manipulators) if c.actuation.passive_index is not None]
    edge = float(np.max(np.abs(rec.edge_err[-1])))
    pmax = float(np.max(np.abs(passive))) if passive else 0.0
    ok = rec.converged_at is not None and pmax < 1e-2 and rec.lyapunov_violations.size == 0
    return CheckResult(
        f"{name} convergence",
        ok,
        f"converged at {rec.converged_at}, final max edge error {edge:.1e}, max |passive| {pmax:.1e}",
    )


def check_cardinality() -> CheckResult:
    expected = {"case1": ShapeClass.CONTINUUM, "case2": ShapeClass.CURVE, "case3": ShapeClass.ISOLATED, "case4": ShapeClass.EMPTY}
    found = {}
    for name, cls in expected.items():
        sc = builtin(name)
        found[name] = solve_shapes(sc.method, sc.manipulators, sc.framework, n_starts=2000, seed=0).classification
    ok = found == expected
    return CheckResult("reachable-shape classes", ok, ", ".join(f"{k}={v.name}" for k, v in found.items()))


QUICK_CHECKS = (
    check_skew_symmetry,
    check_gradient,
    check_rigidity,
    check_local_vs_central,
    check_observation_roundtrip,
    check_rest_equilibrium,
    check_scenario_roundtrip,
    check_rk4_order,
    check_lyapunov_short,
)


def run_checks(full: bool = False, out: io.TextIOBase | None = None) -> list[CheckResult]:
    checks = list(QUICK_CHECKS)
    if full:
        checks += [lambda: check_convergence("case2"), lambda: check_convergence("case3"), check_cardinality]
    results = []
    for chk in checks:
        try:
            r = chk()
        except Exception as exc:  # a crashing check is a failing check
            r = CheckResult(getattr(chk, "__name__", "check"), False, f"raised {type(exc).__name__}: {exc}")
        results.append(r)
        if out is not None:
            print(r.line(), file=out, flush=True)
    return results
