"""Desired-and-reachable shapes of a manipulator network.

At steady state every virtual tip lies in its arm's reachable set: an
annulus for a fully-actuated arm, a circle for AP and PA arms. The
reachable configurations are parameterised by the active angles (two per FA
arm, one per AP/PA arm, ordered FA block, AP block, PA block). This module
solves f_G(x_hat(q_a)) = f_G(x*) from many random starts, deduplicates the
roots and classifies the solution set by local Jacobian nullity.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field

import numpy as np

from .dynamics import ActuationType
from .graph import FormationMethod, Framework, edge_function, numerical_rank, rigidity_check
from .kinematics import forward_kinematics

LM_MAX_ITER = 200
LM_STEP_TOL = 1e-10
LM_LAMBDA0 = 1e-3
DEFAULT_TOL = 1e-8
DEDUP_EPS = 1e-4
NULLITY_RTOL = 1e-6
EMPTY_MIN_STARTS = 2000


class ShapeClass(enum.Enum):
    CONTINUUM = "continuum"
    CURVE = "curve"
    ISOLATED = "isolated"
    EMPTY = "empty"
    POSSIBLY_EMPTY = "possibly_empty"
    UNDETERMINED = "undetermined"


def active_layout(configs) -> list[tuple[int, int]]:
    """(agent, joint) pairs, 0-based, in FA/AP/PA block order."""
    out = []
    for act in (ActuationType.FA, ActuationType.AP, ActuationType.PA):
        for i, c in enumerate(configs):
            if c.actuation is act:
                out.extend((i, j) for j in act.active_indices)
    return out


def wrap_angle(x):
    """Map angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(x, dtype=float), 2.0 * np.pi)


class ShapeProblem:
    """Vectorised x_hat(q_a), residual and analytic Jacobian for one network."""

    def __init__(self, method, configs, framework: Framework):
        self.method = FormationMethod.parse(method)
        self.configs = tuple(configs)
        self.framework = framework
        n = len(self.configs)
        if framework.graph.n_vertices != n:
            raise ValueError("framework vertex count does not match the number of arms")
        if self.method is FormationMethod.DISTANCE and not rigidity_check(framework)[1]:
            raise ValueError("distance shape equations need an infinitesimally rigid framework")
        self.n = n
        self.layout = active_layout(self.configs)
        self.n_unknowns = len(self.layout)
        self.l1 = np.array([c.lengths[0] for c in self.configs])
        self.l2 = np.array([c.lengths[1] for c in self.configs])
        self.beta = np.array([c.beta for c in self.configs])
        self.base = np.array([c.base for c in self.configs], dtype=float)
        self.agent_idx = np.array([i for i, _ in self.layout], dtype=int)
        self.joint_idx = np.array([j for _, j in self.layout], dtype=int)
        e = np.array(framework.graph.edges, dtype=int) - 1
        self.tails, self.heads = e[:, 0], e[:, 1]
        self.target = edge_function(self.method, framework.graph, framework.x_star)
        self.n_equations = self.target.size

    def joint_angles(self, q_a) -> np.ndarray:
        q = np.zeros((self.n, 2))
        q[self.agent_idx, self.joint_idx] = q_a
        return q

    def positions(self, q_a) -> np.ndarray:
        q = self.joint_angles(np.asarray(q_a, dtype=float))
        a = q[:, 0] + self.beta
        b = a + q[:, 1]
        return self.base + np.column_stack(
            [-self.l1 * np.sin(a) - self.l2 * np.sin(b), self.l1 * np.cos(a) + self.l2 * np.cos(b)]
        )

    def position_jacobian(self, q_a) -> np.ndarray:
        """d x_hat / d q_a, shape (2N, n_unknowns)."""
        q = self.joint_angles(np.asarray(q_a, dtype=float))
        a = q[:, 0] + self.beta
        b = a + q[:, 1]
        j = np.zeros((2 * self.n, self.n_unknowns))
        for col, (i, jt) in enumerate(self.layout):
            if jt == 0:
                j[2 * i, col] = -self.l1[i] * np.cos(a[i]) - self.l2[i] * np.cos(b[i])
                j[2 * i + 1, col] = -self.l1[i] * np.sin(a[i]) - self.l2[i] * np.sin(b[i])
            else:
                j[2 * i, col] = -self.l2[i] * np.cos(b[i])
                j[2 * i + 1, col] = -self.l2[i] * np.sin(b[i])
        return j

    def residual(self, q_a) -> np.ndarray:
        x = self.positions(q_a)
        z = x[self.tails] - x[self.heads]
        if self.method is FormationMethod.DISTANCE:
            f = np.sum(z * z, axis=1)
        else:
            f = z.reshape(-1)
        return f - self.target

    def jacobian(self, q_a) -> np.ndarray:
        """Chain rule: (d e / d x_hat) (d x_hat / d q_a)."""
        x = self.positions(q_a)
        z = x[self.tails] - x[self.heads]
        m = len(self.tails)
        if self.method is FormationMethod.DISTANCE:
            de = np.zeros((m, 2 * self.n))
            for k in range(m):
                t, h = self.tails[k], self.heads[k]
                de[k, 2 * t : 2 * t + 2] += 2.0 * z[k]
                de[k, 2 * h : 2 * h + 2] -= 2.0 * z[k]
        else:
            de = np.zeros((2 * m, 2 * self.n))
            for k in range(m):
                t, h = self.tails[k], self.heads[k]
                de[2 * k : 2 * k + 2, 2 * t : 2 * t + 2] += np.eye(2)
                de[2 * k : 2 * k + 2, 2 * h : 2 * h + 2] -= np.eye(2)
        return de @ self.position_jacobian(q_a)


def virtual_positions_from_active(configs, q_a) -> np.ndarray:
    q_a = np.asarray(q_a, dtype=float)
    layout = active_layout(configs)
    if q_a.shape != (len(layout),):
        raise ValueError(f"expected {len(layout)} active angles, got shape {q_a.shape}")
    q = np.zeros((len(configs), 2))
    for v, (i, j) in zip(q_a, layout):
        q[i, j] = v
    return np.array([forward_kinematics(c, qi) for c, qi in zip(configs, q)])


def shape_residual(method, configs, framework: Framework, q_a) -> np.ndarray:
    return ShapeProblem(method, configs, framework).residual(q_a)


def levenberg_marquardt(fun, jac, x0, tol=DEFAULT_TOL, max_iter=LM_MAX_ITER, step_tol=LM_STEP_TOL):
    """Minimise 0.5*|fun(x)|^2 with identity damping; works for m < n as well.

    Returns (x, residual, n_iter).
    """
    x = np.array(x0, dtype=float)
    r = fun(x)
    cost = r @ r
    lam = LM_LAMBDA0
    n = x.size
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(r)) < tol:
            break
        j = jac(x)
        g = j.T @ r
        a = j.T @ j
        while True:
            try:
                dx = np.linalg.solve(a + lam * np.eye(n), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = x + dx
            r_new = fun(x_new)
            c_new = r_new @ r_new
            if c_new < cost:
                x, r, cost = x_new, r_new, c_new
                lam = max(lam / 10.0, 1e-15)
                break
            lam *= 10.0
            if np.linalg.norm(dx) < step_tol:
                break
        if np.linalg.norm(dx) < step_tol:
            break
    return x, r, it


@dataclass(frozen=True)
class ShapeSolution:
    q_a: np.ndarray
    virtual_positions: np.ndarray
    residual_norm: float
    nullity: int
    start_index: int


@dataclass
class ShapeSolutionSet:
    method: FormationMethod
    solutions: list[ShapeSolution]
    n_starts: int
    seed: int | None
    tol: float
    n_unknowns: int
    n_equations: int
    classification: ShapeClass = ShapeClass.UNDETERMINED
    n_converged: int = 0
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.solutions)


def angular_distance(a, b) -> float:
    return float(np.max(np.abs(wrap_angle(np.asarray(a) - np.asarray(b)))))


def local_nullity(problem: ShapeProblem, q_a) -> int:
    return problem.n_unknowns - numerical_rank(problem.jacobian(q_a), NULLITY_RTOL)


def classify_solutions(solutions, n_starts: int) -> ShapeClass:
    if not solutions:
        return ShapeClass.EMPTY if n_starts >= EMPTY_MIN_STARTS else ShapeClass.UNDETERMINED
    nulls = np.array([s.nullity for s in solutions])
    votes = {
        ShapeClass.ISOLATED: int(np.sum(nulls == 0)),
        ShapeClass.CURVE: int(np.sum(nulls == 1)),
        ShapeClass.CONTINUUM: int(np.sum(nulls >= 2)),
    }
    best = max(votes, key=votes.get)
    return best if votes[best] * 2 > len(solutions) else ShapeClass.UNDETERMINED


def solve_shapes(
    method,
    configs,
    framework: Framework,
    n_starts: int = EMPTY_MIN_STARTS,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
    dedup_eps: float = DEDUP_EPS,
    initial_guesses=None,
) -> ShapeSolutionSet:
    """Multi-start LM on the shape equations.

    Starts are drawn uniformly from [-pi, pi) with a seeded PCG64 stream, so
    the first k starts of a run with more starts are the same k starts.
    ``initial_guesses`` are tried before the random starts. Deduplication
    keeps the first-found representative in start order, which makes the
    distinct count monotone in ``n_starts``.
    """
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    problem = ShapeProblem(method, configs, framework)
    rng = np.random.default_rng(seed)
    starts = rng.uniform(-np.pi, np.pi, size=(n_starts, problem.n_unknowns))
    if initial_guesses is not None:
        starts = np.vstack([np.atleast_2d(np.asarray(initial_guesses, dtype=float)), starts])
    solutions: list[ShapeSolution] = []
    kept = np.empty((len(starts), problem.n_unknowns))
    converged = 0
    for s_idx, x0 in enumerate(starts):
        x, r, _ = levenberg_marquardt(problem.residual, problem.jacobian, x0, tol=tol)
        res = float(np.max(np.abs(r)))
        if not res < tol:
            continue
        converged += 1
        x = wrap_angle(x)
        if solutions:
            gaps = np.max(np.abs(wrap_angle(kept[: len(solutions)] - x)), axis=1)
            if np.min(gaps) < dedup_eps:
                continue
        kept[len(solutions)] = x
        solutions.append(
            ShapeSolution(
                q_a=x,
                virtual_positions=problem.positions(x),
                residual_norm=res,
                nullity=local_nullity(problem, x),
                start_index=s_idx,
            )
        )
    return ShapeSolutionSet(
        method=problem.method,
        solutions=solutions,
        n_starts=len(starts),
        seed=seed,
        tol=tol,
        n_unknowns=problem.n_unknowns,
        n_equations=problem.n_equations,
        classification=classify_solutions(solutions, len(starts)),
        n_converged=converged,
    )


@dataclass(frozen=True)
class CardinalityPrediction:
    prediction: ShapeClass
    n_unknowns: int
    n_independent_equations: int


def classify_cardinality(n_fa: int, n_ap: int, n_pa: int, method) -> CardinalityPrediction:
    """Predicted size of the reachable-shape set from DOF bookkeeping alone."""
    if min(n_fa, n_ap, n_pa) < 0:
        raise ValueError("counts must be non-negative")
    method = FormationMethod.parse(method)
    n = n_fa + n_ap + n_pa
    under = n_ap + n_pa
    unknowns = n + n_fa
    if method is FormationMethod.DISTANCE:
        eqs, lo = 2 * n - 3, 2
    else:
        eqs, lo = 2 * n - 2, 1
    if under <= lo:
        cls = ShapeClass.CONTINUUM
    elif under == lo + 1:
        cls = ShapeClass.ISOLATED
    else:
        cls = ShapeClass.POSSIBLY_EMPTY
    return CardinalityPrediction(cls, unknowns, eqs)


def export_projection(solution_set: ShapeSolutionSet, vertex: int = 1) -> np.ndarray:
    """Virtual position of ``vertex`` (1-based) for every solution, shape (n, 2)."""
    if not solution_set.solutions:
        return np.zeros((0, 2))
    return np.array([s.virtual_positions[vertex - 1] for s in solution_set.solutions])


def write_projection_csv(solution_set: ShapeSolutionSet, path, vertex: int = 1) -> None:
    pts = export_projection(solution_set, vertex)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["solution_id", "x", "y"])
        for k, (x, y) in enumerate(pts, start=1):
            w.writerow([k, repr(float(x)), repr(float(y))])


def read_projection_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["solution_id", "x", "y"]:
        raise ValueError(f"{path}: expected header solution_id,x,y")
    return np.array([[float(r[1]), float(r[2])] for r in rows[1:]]).reshape(-1, 2)
