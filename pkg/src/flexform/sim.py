"""Closed-loop simulation of the manipulator network.

Each step is one synchronous round: every agent reads the same snapshot of
its neighbours' tip and mid-joint positions, computes its torque, and the
whole 4N-dimensional plant is advanced by one classical RK4 step. By
default the round is repeated at every RK4 stage, so the sampled system
tracks the continuous-time closed loop to fourth order and the Lyapunov
function decreases step by step. ``hold="zoh"`` instead computes the
torques once at the start of the step and holds them, which models a
discrete controller but adds an O(dt) mismatch to the closed loop.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .controller import DEFAULT_SINGULARITY_MARGIN, AgentLaw, singularity_distance
from .dynamics import ActuationType, ManipulatorConfig, ManipulatorState, NetworkModel
from .graph import edge_function, formation_error, potential, stiffness_vector
from .kinematics import ObservedNeighbor, forward_kinematics, virtual_end_effector, virtual_xy_from_observables
from .scenarios import ALPHA_EQ_RTOL, Scenario

CONVERGED_EDGE_TOL = 1e-2
CONVERGED_QDOT_TOL = 1e-3
CONVERGED_HOLD = 1.0
LYAPUNOV_EPS_FACTOR = 10.0
HOLD_MODES = ("stage", "zoh")


class IntegrationError(RuntimeError):
    def __init__(self, t: float, message: str = "non-finite state"):
        super().__init__(f"integration failed at t={t!r}: {message}")
        self.t = t


class _NonFinite(Exception):
    pass


def rk4_step(f, t: float, y: np.ndarray, h: float, k1: np.ndarray | None = None) -> np.ndarray:
    if k1 is None:
        k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass
class NetworkState:
    q: np.ndarray
    qdot: np.ndarray
    t: float = 0.0

    @classmethod
    def initial(cls, scenario: Scenario) -> "NetworkState":
        return cls(
            np.array([s.q for s in scenario.initial_states], dtype=float),
            np.array([s.qdot for s in scenario.initial_states], dtype=float),
            0.0,
        )

    def agent(self, i: int) -> ManipulatorState:
        """State of agent i (1-based)."""
        return ManipulatorState(tuple(self.q[i - 1]), tuple(self.qdot[i - 1]))


def active_mask(configs) -> np.ndarray:
    m = np.ones((len(configs), 2), dtype=bool)
    for i, c in enumerate(configs):
        if c.actuation.passive_index is not None:
            m[i, c.actuation.passive_index] = False
    return m


class Simulator:
    """Precomputed plant, per-agent control laws and bookkeeping for one scenario.

    ``hold`` selects when torques are evaluated inside an RK4 step:
    ``"stage"`` runs a synchronous round at every RK4 stage (the sampled
    system then follows the continuous-time closed loop to fourth order);
    ``"zoh"`` runs one round at the start of the step and holds the torques.
    """

    def __init__(self, scenario: Scenario, margin: float = DEFAULT_SINGULARITY_MARGIN, hold: str = "stage"):
        if hold not in HOLD_MODES:
            raise ValueError(f"hold must be one of {HOLD_MODES}, got {hold!r}")
        self.scenario = scenario
        self.hold = hold
        self.configs = scenario.manipulators
        self.model = NetworkModel(self.configs)
        self.active = active_mask(self.configs)
        self.margin = margin
        self.laws = [
            AgentLaw(i, c, scenario.framework, scenario.method, scenario.gains)
            for i, c in enumerate(self.configs, start=1)
        ]
        self.k_s = stiffness_vector(scenario.method, scenario.gains.k_s, scenario.framework.graph.n_edges)
        self.d_star = scenario.framework.desired_distances()
        edges = np.array(scenario.framework.graph.edges, dtype=int).reshape(-1, 2) - 1
        self._tails, self._heads = edges[:, 0], edges[:, 1]
        self._e_star = edge_function(scenario.method, scenario.framework.graph, scenario.framework.x_star)

    # --- one synchronous round ------------------------------------------

    def observations(self, q) -> dict:
        return {i + 1: ObservedNeighbor.of(c, q[i]) for i, c in enumerate(self.configs)}

    def round_torques(self, q: np.ndarray, qd: np.ndarray) -> np.ndarray:
        """All agents' torques computed from one snapshot of (q, q')."""
        ql, qdl = q.tolist(), qd.tolist()
        obs = self.observations(ql)
        # the rebuilt virtual tip depends only on the observed agent, so each is built once per round
        virt = {j: virtual_xy_from_observables(o) for j, o in obs.items()}
        u = np.empty_like(q)
        for law in self.laws:
            others = {j: virt[j] for j in law.neighbors}
            (q1, q2), (qd1, qd2) = ql[law.i - 1], qdl[law.i - 1]
            u[law.i - 1] = law.torque(q1, q2, qd1, qd2, others)
        return u

    def torques(self, state: NetworkState) -> np.ndarray:
        return self.round_torques(state.q, state.qdot)

    def _split(self, y):
        n = self.model.n
        return y[: 2 * n].reshape(n, 2), y[2 * n :].reshape(n, 2)

    def _plant(self, u: np.ndarray):
        def f(t, y):
            q, qd = self._split(y)
            return np.concatenate([y[2 * self.model.n :], self.model.accel(q, qd, u).reshape(-1)])

        return f

    def _closed_loop(self, t, y):
        if not np.all(np.isfinite(y)):
            raise _NonFinite
        q, qd = self._split(y)
        u = self.round_torques(q, qd)
        return np.concatenate([y[2 * self.model.n :], self.model.accel(q, qd, u).reshape(-1)])

    def advance(self, state: NetworkState, u: np.ndarray, dt: float | None = None) -> NetworkState:
        """One RK4 step from ``state``; ``u`` are the torques of the round at ``state``."""
        h = self.scenario.dt if dt is None else dt
        n = self.model.n
        y = np.concatenate([state.q.reshape(-1), state.qdot.reshape(-1)])
        k1 = np.concatenate([y[2 * n :], self.model.accel(state.q, state.qdot, u).reshape(-1)])
        f = self._closed_loop if self.hold == "stage" else self._plant(u)
        t = state.t + h
        try:
            y = rk4_step(f, state.t, y, h, k1=k1)
        except _NonFinite:
            raise IntegrationError(t, "non-finite state inside the step") from None
        if not np.all(np.isfinite(y)):
            raise IntegrationError(t)
        q, qd = self._split(y)
        return NetworkState(q.copy(), qd.copy(), t)

    def step(self, state: NetworkState) -> tuple[NetworkState, np.ndarray]:
        u = self.torques(state)
        return self.advance(state, u), u

    # --- monitoring ------------------------------------------------------

    def tips(self, q: np.ndarray) -> np.ndarray:
        return np.array([forward_kinematics(c, qi) for c, qi in zip(self.configs, q)])

    def virtual_tips(self, q: np.ndarray) -> np.ndarray:
        return np.array([virtual_end_effector(c, qi) for c, qi in zip(self.configs, q)])

    def lyapunov(self, state: NetworkState) -> tuple[float, float]:
        return self._lyapunov(state, self.virtual_tips(state.q))

    def _lyapunov(self, state: NetworkState, xhat: np.ndarray) -> tuple[float, float]:
        sc = self.scenario
        e = formation_error(sc.method, sc.framework, xhat)
        v = potential(e, self.k_s)
        kin = self.model.kinetic_energy(state.q, state.qdot)
        passive = ~self.active
        spring_u = 0.5 * float(np.sum((self.model.k * state.q * state.q)[passive]))
        qa_dot = state.qdot[self.active]
        return v + kin + spring_u, -sc.gains.k_d * float(qa_dot @ qa_dot)

    def lyapunov_series(self, q: np.ndarray, qd: np.ndarray, xhat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(U, analytic dU/dt) for stacked (T, N, 2) histories in one pass."""
        sc = self.scenario
        tails, heads = self._tails, self._heads
        z = xhat[:, tails] - xhat[:, heads]
        if sc.method.p == 1:
            e = np.sum(z * z, axis=2) - self._e_star
        else:
            e = z.reshape(len(z), -1) - self._e_star
        v = 0.5 * np.sum(self.k_s * e * e, axis=1)
        m = self.model
        c2 = np.cos(q[:, :, 1])
        m11 = m.a1 + m.a2 + 2.0 * m.a3 * c2
        m12 = m.a2 + m.a3 * c2
        qd1, qd2 = qd[:, :, 0], qd[:, :, 1]
        kin = 0.5 * np.sum(m11 * qd1 * qd1 + 2.0 * m12 * qd1 * qd2 + m.a2 * qd2 * qd2, axis=1)
        spring_u = 0.5 * np.sum(np.where(self.active, 0.0, m.k * q * q), axis=(1, 2))
        u_dot = -sc.gains.k_d * np.sum(np.where(self.active, qd * qd, 0.0), axis=(1, 2))
        return v + kin + spring_u, u_dot

    def edge_errors(self, x_end: np.ndarray) -> np.ndarray:
        z = x_end[..., self._tails, :] - x_end[..., self._heads, :]
        return np.hypot(z[..., 0], z[..., 1]) - self.d_star

    def singularity_distances(self, q: np.ndarray) -> np.ndarray:
        return np.array([singularity_distance(c, qi) for c, qi in zip(self.configs, q)])


def step(scenario: Scenario, state: NetworkState, hold: str = "stage") -> NetworkState:
    return Simulator(scenario, hold=hold).step(state)[0]


def lyapunov(scenario: Scenario, state: NetworkState) -> tuple[float, float]:
    """(U, analytic dU/dt) at a network state."""
    return Simulator(scenario).lyapunov(state)


@dataclass
class TrajectoryRecord:
    n_agents: int
    n_edges: int
    t: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    x_end: np.ndarray
    x_hat: np.ndarray
    U: np.ndarray
    U_dot: np.ndarray
    edge_err: np.ndarray
    sing_dist: np.ndarray
    torque: np.ndarray
    eps_int: float = 0.0
    lyapunov_violations: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    singular_steps: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    converged_at: float | None = None

    @property
    def final_state(self) -> NetworkState:
        return NetworkState(self.q[-1].copy(), self.qdot[-1].copy(), float(self.t[-1]))

    def columns(self) -> list[str]:
        n, m = self.n_agents, self.n_edges
        cols = ["t"]
        cols += [f"q_{i}_{j}" for i in range(1, n + 1) for j in (1, 2)]
        cols += [f"qdot_{i}_{j}" for i in range(1, n + 1) for j in (1, 2)]
        cols += [f"x_end_{i}_{a}" for i in range(1, n + 1) for a in "XY"]
        cols += [f"x_hat_{i}_{a}" for i in range(1, n + 1) for a in "XY"]
        cols += ["U", "U_dot"]
        cols += [f"edge_err_{k}" for k in range(1, m + 1)]
        cols += [f"sing_{i}" for i in range(1, n + 1)]
        cols += [f"u_{i}_{j}" for i in range(1, n + 1) for j in (1, 2)]
        return cols

    def to_array(self) -> np.ndarray:
        T = self.t.size
        return np.column_stack(
            [
                self.t,
                self.q.reshape(T, -1),
                self.qdot.reshape(T, -1),
                self.x_end.reshape(T, -1),
                self.x_hat.reshape(T, -1),
                self.U,
                self.U_dot,
                self.edge_err,
                self.sing_dist,
                self.torque.reshape(T, -1),
            ]
        )

    @classmethod
    def from_array(cls, data: np.ndarray, n_agents: int, n_edges: int) -> "TrajectoryRecord":
        n, m, T = n_agents, n_edges, data.shape[0]
        cuts = np.cumsum([1, 2 * n, 2 * n, 2 * n, 2 * n, 1, 1, m, n, 2 * n])
        parts = np.split(data, cuts[:-1], axis=1)
        return cls(
            n_agents=n,
            n_edges=m,
            t=parts[0][:, 0].copy(),
            q=parts[1].reshape(T, n, 2).copy(),
            qdot=parts[2].reshape(T, n, 2).copy(),
            x_end=parts[3].reshape(T, n, 2).copy(),
            x_hat=parts[4].reshape(T, n, 2).copy(),
            U=parts[5][:, 0].copy(),
            U_dot=parts[6][:, 0].copy(),
            edge_err=parts[7].copy(),
            sing_dist=parts[8].copy(),
            torque=parts[9].reshape(T, n, 2).copy(),
        )


def save_trajectory(record: TrajectoryRecord, path) -> None:
    np.savetxt(path, record.to_array(), delimiter=",", header=",".join(record.columns()), comments="", fmt="%.17g")


def load_trajectory(path) -> TrajectoryRecord:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    n = sum(1 for c in header if c.startswith("sing_"))
    m = sum(1 for c in header if c.startswith("edge_err_"))
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    rec = TrajectoryRecord.from_array(data, n, m)
    if rec.columns() != header:
        raise ValueError(f"{path}: unexpected trajectory header")
    return rec


def centered_rate(values: np.ndarray, dt: float) -> np.ndarray:
    """Five-point centred derivative of a uniformly sampled series.

    Entry k corresponds to sample k + 2. The stencil is exact for cubics,
    which matters right after a start from rest where U - U(0) ~ t^3 and the
    three-point difference is off by a factor 4/3 at the first sample.
    """
    v = np.asarray(values, dtype=float)
    return (v[:-4] - 8.0 * v[1:-3] + 8.0 * v[3:-1] - v[4:]) / (12.0 * dt)


def _convergence_time(t, edge_err, qdot, hold) -> float | None:
    ok = np.all(np.abs(edge_err) < CONVERGED_EDGE_TOL, axis=1) & (
        np.linalg.norm(qdot.reshape(len(t), -1), axis=1) < CONVERGED_QDOT_TOL
    )
    if not ok[-1]:
        return None
    bad = np.flatnonzero(~ok)
    start = 0 if bad.size == 0 else bad[-1] + 1
    if t[-1] - t[start] < hold - 1e-12:
        return None
    return float(t[start])


def run(
    scenario: Scenario,
    t_final: float | None = None,
    margin: float = DEFAULT_SINGULARITY_MARGIN,
    eps_factor: float = LYAPUNOV_EPS_FACTOR,
    hold: str = "stage",
) -> TrajectoryRecord:
    """Simulate from the scenario's initial state, recording every step."""
    sim = Simulator(scenario, margin, hold)
    T_end = scenario.t_final if t_final is None else t_final
    n_steps = int(round(T_end / scenario.dt))
    n, m = sim.model.n, scenario.framework.graph.n_edges
    T = n_steps + 1
    rec = TrajectoryRecord(
        n_agents=n,
        n_edges=m,
        t=np.empty(T),
        q=np.empty((T, n, 2)),
        qdot=np.empty((T, n, 2)),
        x_end=np.empty((T, n, 2)),
        x_hat=np.empty((T, n, 2)),
        U=np.empty(T),
        U_dot=np.empty(T),
        edge_err=np.empty((T, m)),
        sing_dist=np.empty((T, n)),
        torque=np.empty((T, n, 2)),
    )
    state = NetworkState.initial(scenario)
    for k in range(T):
        # uniform grid: t_k = k * dt, not an accumulated sum
        state.t = k * scenario.dt
        u = sim.torques(state)
        x_end = sim.tips(state.q)
        x_hat = sim.virtual_tips(state.q)
        rec.t[k] = state.t
        rec.q[k] = state.q
        rec.qdot[k] = state.qdot
        rec.x_end[k] = x_end
        rec.x_hat[k] = x_hat
        rec.sing_dist[k] = sim.singularity_distances(state.q)
        rec.torque[k] = u
        if k < n_steps:
            state = sim.advance(state, u)

    rec.U, rec.U_dot = sim.lyapunov_series(rec.q, rec.qdot, rec.x_hat)
    rec.edge_err = sim.edge_errors(rec.x_end)
    rec.eps_int = eps_factor * scenario.dt**4 * float(np.max(np.abs(rec.U)))
    rec.lyapunov_violations = np.flatnonzero(np.diff(rec.U) > rec.eps_int)
    rec.singular_steps = np.flatnonzero(np.any(rec.sing_dist < margin, axis=1))
    rec.converged_at = _convergence_time(rec.t, rec.edge_err, rec.qdot, CONVERGED_HOLD)
    return rec


# --- steady-state properties of the underactuated arms -----------------------


@dataclass(frozen=True)
class RestEquilibrium:
    passive_angle: float
    residual: float
    torque_balance: float


def verify_rest_equilibrium(config: ManipulatorConfig, q_active: float, u_active: float, guess: float = 0.7) -> RestEquilibrium:
    """Solve the at-rest equations of motion for the passive angle.

    With q' = q'' = 0 the dynamics reduce to K q = u. The passive row is
    solved by Newton iteration on the generalised-force residual, starting
    away from zero. ``torque_balance`` is the active-row residual
    u_a - K_a q_a, which must vanish for a rest equilibrium to exist.
    """
    act = config.actuation
    if act is ActuationType.FA:
        raise ValueError("rest equilibrium check applies to AP and PA arms only")
    if act is ActuationType.PA:
        _, a2, a3 = config.params.alphas
        if abs(a2 - a3) <= ALPHA_EQ_RTOL * max(a2, a3):
            raise ValueError("PA arm with alpha2 == alpha3: passive angle is not pinned at rest")
    a = act.active_indices[0]
    p = act.passive_index
    k = np.asarray(config.stiffness)
    u = np.zeros(2)
    u[a] = u_active
    q = np.zeros(2)
    q[a] = q_active
    q[p] = guess

    def force(qp):
        qq = q.copy()
        qq[p] = qp
        return (u - k * qq)[p]

    qp = guess
    for _ in range(50):
        f = force(qp)
        step_ = f / k[p]  # d(force)/d(qp) = -k_p
        qp += step_
        if abs(step_) < 1e-15:
            break
    q[p] = qp
    residual = float(np.max(np.abs((u - k * q)[[p]])))
    return RestEquilibrium(float(qp), residual, float(u[a] - k[a] * q_active))


def simulate_single_arm(
    config: ManipulatorConfig,
    state: ManipulatorState,
    torque_fn,
    dt: float = 1e-3,
    t_final: float = 60.0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """RK4 run of one arm with a state-feedback torque held over each step.

    Returns (t, q, qdot) arrays.
    """
    model = NetworkModel([config])
    n_steps = int(round(t_final / dt))
    q = np.empty((n_steps + 1, 2))
    qd = np.empty((n_steps + 1, 2))
    q[0], qd[0] = state.q, state.qdot
    y = np.concatenate([q[0], qd[0]])
    for k in range(n_steps):
        u = np.where(model.passive_mask[0], 0.0, np.asarray(torque_fn(y[:2], y[2:]), dtype=float))

        def f(t, yy, u=u):
            return np.concatenate([yy[2:], model.accel(yy[None, :2], yy[None, 2:], u[None, :])[0]])

        y = rk4_step(f, k * dt, y, dt)
        if not np.all(np.isfinite(y)):
            raise IntegrationError((k + 1) * dt)
        q[k + 1], qd[k + 1] = y[:2], y[2:]
    return np.arange(n_steps + 1) * dt, q, qd
