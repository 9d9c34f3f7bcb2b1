"""Two-link planar manipulator with torsional springs at both joints.

Gravity-free Euler-Lagrange model

    M(q) q'' + C(q, q') q' + K q = u

with the inertia lumped into three constants alpha1..alpha3. The network
version is block diagonal, so everything here is vectorised over a leading
agent axis where that helps the simulator.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

DET_GUARD = 1e-12


class ActuationType(enum.Enum):
    FA = "fa"
    AP = "ap"
    PA = "pa"

    @property
    def passive_index(self) -> int | None:
        return {ActuationType.FA: None, ActuationType.AP: 1, ActuationType.PA: 0}[self]

    @property
    def active_indices(self) -> tuple[int, ...]:
        return {ActuationType.FA: (0, 1), ActuationType.AP: (0,), ActuationType.PA: (1,)}[self]

    @classmethod
    def parse(cls, value: "str | ActuationType") -> "ActuationType":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        aliases = {"fa": cls.FA, "fullyactuated": cls.FA, "full": cls.FA, "ap": cls.AP, "pa": cls.PA}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown actuation type {value!r}") from None


@dataclass(frozen=True)
class LinkParams:
    mass: float
    inertia_com: float
    length: float
    com_offset: float

    def __post_init__(self):
        for name in ("mass", "inertia_com", "length", "com_offset"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"LinkParams.{name} must be finite and > 0, got {v!r}")
        if self.com_offset > self.length:
            raise ValueError("LinkParams.com_offset must not exceed length")


def alphas_from_links(link1: LinkParams, link2: LinkParams) -> tuple[float, float, float]:
    a1 = link1.mass * link1.com_offset**2 + link2.mass * link1.length**2 + link1.inertia_com
    a2 = link2.mass * link2.com_offset**2 + link2.inertia_com
    a3 = link2.mass * link1.length * link2.com_offset
    return a1, a2, a3


@dataclass(frozen=True)
class MechParams:
    """Mechanical parameters of one arm; the alphas are derived and cached."""

    link1: LinkParams
    link2: LinkParams
    alpha1: float = field(init=False)
    alpha2: float = field(init=False)
    alpha3: float = field(init=False)

    def __post_init__(self):
        a1, a2, a3 = alphas_from_links(self.link1, self.link2)
        object.__setattr__(self, "alpha1", a1)
        object.__setattr__(self, "alpha2", a2)
        object.__setattr__(self, "alpha3", a3)

    @property
    def alphas(self) -> tuple[float, float, float]:
        return self.alpha1, self.alpha2, self.alpha3

    @property
    def lengths(self) -> tuple[float, float]:
        return self.link1.length, self.link2.length


@dataclass(frozen=True)
class ManipulatorConfig:
    params: MechParams
    stiffness: tuple[float, float]
    actuation: ActuationType = ActuationType.FA
    base: tuple[float, float] = (0.0, 0.0)
    beta: float = 0.0

    def __post_init__(self):
        k = tuple(float(v) for v in self.stiffness)
        if len(k) != 2 or not all(np.isfinite(v) and v > 0 for v in k):
            raise ValueError(f"stiffness entries must be finite and > 0, got {self.stiffness!r}")
        object.__setattr__(self, "stiffness", k)
        object.__setattr__(self, "actuation", ActuationType.parse(self.actuation))
        object.__setattr__(self, "base", (float(self.base[0]), float(self.base[1])))
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def lengths(self) -> tuple[float, float]:
        return self.params.lengths


@dataclass(frozen=True)
class ManipulatorState:
    q: tuple[float, float]
    qdot: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        q = (float(self.q[0]), float(self.q[1]))
        qd = (float(self.qdot[0]), float(self.qdot[1]))
        if not all(np.isfinite(q + qd)):
            raise ValueError("ManipulatorState entries must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", qd)


def mass_matrix(params: MechParams, q2: float) -> np.ndarray:
    a1, a2, a3 = params.alphas
    c2 = np.cos(q2)
    m12 = a2 + a3 * c2
    return np.array([[a1 + a2 + 2.0 * a3 * c2, m12], [m12, a2]])


def mass_matrix_derivative(params: MechParams, q2: float, q2dot: float) -> np.ndarray:
    """Time derivative of the mass matrix, dM/dq2 * q2dot."""
    a3 = params.alpha3
    s2 = np.sin(q2)
    return -a3 * s2 * q2dot * np.array([[2.0, 1.0], [1.0, 0.0]])


def coriolis_matrix(params: MechParams, q2: float, qdot) -> np.ndarray:
    qd1, qd2 = qdot
    return params.alpha3 * np.sin(q2) * np.array([[-qd2, -qd1 - qd2], [qd1, 0.0]])


def apply_actuation_mask(actuation: ActuationType, torque) -> np.ndarray:
    out = np.array(torque, dtype=float)
    idx = ActuationType.parse(actuation).passive_index
    if idx is not None:
        out[idx] = 0.0
    return out


def forward_dynamics(config: ManipulatorConfig, state: ManipulatorState, torque) -> np.ndarray:
    """Joint accelerations of a single arm.

    Raises ValueError if the torque drives a passive joint or if the mass
    matrix is numerically singular (corrupt parameters).
    """
    u = np.asarray(torque, dtype=float)
    idx = config.actuation.passive_index
    if idx is not None and u[idx] != 0.0:
        raise ValueError(
            f"nonzero torque {u[idx]!r} on passive joint {idx + 1} of a {config.actuation.name} arm"
        )
    q = np.asarray(state.q, dtype=float)
    qd = np.asarray(state.qdot, dtype=float)
    m = mass_matrix(config.params, q[1])
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if det < DET_GUARD:
        raise ValueError(f"mass matrix determinant {det!r} below guard; parameters are corrupt")
    rhs = u - coriolis_matrix(config.params, q[1], qd) @ qd - np.asarray(config.stiffness) * q
    return np.array([m[1, 1] * rhs[0] - m[0, 1] * rhs[1], m[0, 0] * rhs[1] - m[1, 0] * rhs[0]]) / det


def kinetic_energy(params: MechParams, q2: float, qdot) -> float:
    qd = np.asarray(qdot, dtype=float)
    return 0.5 * float(qd @ mass_matrix(params, q2) @ qd)


class NetworkModel:
    """Stacked parameters of N arms for vectorised evaluation of the block-diagonal dynamics."""

    def __init__(self, configs):
        self.configs = tuple(configs)
        self.n = len(self.configs)
        al = np.array([c.params.alphas for c in self.configs], dtype=float)
        self.a1, self.a2, self.a3 = al[:, 0].copy(), al[:, 1].copy(), al[:, 2].copy()
        self.k = np.array([c.stiffness for c in self.configs], dtype=float)
        self.passive_mask = np.zeros((self.n, 2), dtype=bool)
        for i, c in enumerate(self.configs):
            if c.actuation.passive_index is not None:
                self.passive_mask[i, c.actuation.passive_index] = True

    def accel(self, q: np.ndarray, qd: np.ndarray, u: np.ndarray) -> np.ndarray:
        """q'' for stacked (N, 2) arrays; torques are assumed already masked."""
        c2 = np.cos(q[:, 1])
        s2 = np.sin(q[:, 1])
        a2, a3 = self.a2, self.a3
        m11 = self.a1 + a2 + 2.0 * a3 * c2
        m12 = a2 + a3 * c2
        qd1, qd2 = qd[:, 0], qd[:, 1]
        h = a3 * s2
        r1 = u[:, 0] + h * (2.0 * qd1 * qd2 + qd2 * qd2) - self.k[:, 0] * q[:, 0]
        r2 = u[:, 1] - h * qd1 * qd1 - self.k[:, 1] * q[:, 1]
        det = m11 * a2 - m12 * m12
        out = np.empty_like(q)
        out[:, 0] = (a2 * r1 - m12 * r2) / det
        out[:, 1] = (m11 * r2 - m12 * r1) / det
        return out

    def kinetic_energy(self, q: np.ndarray, qd: np.ndarray) -> float:
        c2 = np.cos(q[:, 1])
        m11 = self.a1 + self.a2 + 2.0 * self.a3 * c2
        m12 = self.a2 + self.a3 * c2
        qd1, qd2 = qd[:, 0], qd[:, 1]
        return float(0.5 * np.sum(m11 * qd1 * qd1 + 2.0 * m12 * qd1 * qd2 + self.a2 * qd2 * qd2))

    def spring_energy(self, q: np.ndarray) -> float:
        return float(0.5 * np.sum(self.k * q * q))
