"""Distributed virtual-spring controller for FA, AP and PA arms.

Each agent computes its torque from its own joint state plus the
observations (tip, mid-joint) of its graph neighbours. Nothing else about
the network is reachable from ``control_torque``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .dynamics import ActuationType, ManipulatorConfig, ManipulatorState
from .graph import FormationMethod, Framework, potential_gradient, stiffness_vector
from .kinematics import (
    ObservedNeighbor,
    jacobian,
    reduced_jacobian,
    tip_xy,
    virtual_angles,
    virtual_end_effector,
    virtual_xy_from_observables,
)

DEFAULT_SINGULARITY_MARGIN = 0.05


@dataclass(frozen=True)
class ControlGains:
    k_s: tuple[float, ...]
    k_d: float

    def __post_init__(self):
        k = tuple(float(v) for v in np.atleast_1d(self.k_s))
        if not k or not all(np.isfinite(v) and v > 0 for v in k):
            raise ValueError(f"k_s entries must be strictly positive, got {self.k_s!r}")
        if not (np.isfinite(self.k_d) and self.k_d > 0):
            raise ValueError(f"k_d must be strictly positive, got {self.k_d!r}")
        object.__setattr__(self, "k_s", k)
        object.__setattr__(self, "k_d", float(self.k_d))


NeighborMessages = Mapping[int, ObservedNeighbor]


def gather_messages(i: int, framework: Framework, observations: Mapping[int, ObservedNeighbor]) -> dict:
    """Pick out exactly the neighbours of agent i from a broadcast snapshot."""
    return {j: observations[j] for j in framework.graph.neighbors(i)}


def incident_springs(i: int, framework: Framework, method, k_s) -> list[tuple]:
    """(neighbour, k_x, k_y, ref_dx, ref_dy, ref_sqdist) per edge at i, oriented from i."""
    method = FormationMethod.parse(method)
    k = stiffness_vector(method, k_s, framework.graph.n_edges)
    xs = framework.x_star
    out = []
    for idx, j, _sign in framework.graph.incident_edges(i):
        dx, dy = xs[i - 1] - xs[j - 1]
        if method is FormationMethod.DISTANCE:
            kx = ky = float(k[idx])
        else:
            kx, ky = float(k[2 * idx]), float(k[2 * idx + 1])
        out.append((j, kx, ky, float(dx), float(dy), float(dx * dx + dy * dy)))
    return out


def _spring_gradient(own, others: Mapping, springs, distance: bool) -> tuple[float, float]:
    gx = gy = 0.0
    xi, yi = own
    for j, kx, ky, rx, ry, rr in springs:
        xj, yj = others[j]
        dx, dy = xi - xj, yi - yj
        if distance:
            w = 2.0 * kx * (dx * dx + dy * dy - rr)
            gx += w * dx
            gy += w * dy
        else:
            gx += kx * (dx - rx)
            gy += ky * (dy - ry)
    return gx, gy


def local_gradient(i: int, own_virtual, neighbor_virtuals: Mapping, framework: Framework, method, k_s) -> np.ndarray:
    """Agent i's block of dV/dx_hat using incident edges only."""
    method = FormationMethod.parse(method)
    springs = incident_springs(i, framework, method, k_s)
    others = {j: (float(p[0]), float(p[1])) for j, p in neighbor_virtuals.items()}
    own = (float(own_virtual[0]), float(own_virtual[1]))
    return np.array(_spring_gradient(own, others, springs, method is FormationMethod.DISTANCE))


class AgentLaw:
    """Agent i's control law with its incident edges and reference data looked up once."""

    def __init__(self, i: int, config: ManipulatorConfig, framework: Framework, method, gains: ControlGains):
        self.i = i
        self.method = FormationMethod.parse(method)
        self.distance = self.method is FormationMethod.DISTANCE
        self.k_d = gains.k_d
        self.neighbors = frozenset(framework.graph.neighbors(i))
        self.springs = incident_springs(i, framework, self.method, gains.k_s)
        self.l1, self.l2 = config.lengths
        self.beta = config.beta
        self.bx, self.by = config.base
        self.k1, self.k2 = config.stiffness
        self.act = config.actuation

    def torque(self, q1: float, q2: float, qd1: float, qd2: float, others: Mapping) -> tuple[float, float]:
        v1, v2 = virtual_angles(self.act, q1, q2)
        own = tip_xy(self.l1, self.l2, self.beta, self.bx, self.by, v1, v2)
        ex, ey = _spring_gradient(own, others, self.springs, self.distance)
        a = q1 + self.beta
        if self.act is ActuationType.FA:
            b = a + q2
            cb, sb = self.l2 * math.cos(b), self.l2 * math.sin(b)
            j11, j21 = -self.l1 * math.cos(a) - cb, -self.l1 * math.sin(a) - sb
            return (
                -(j11 * ex + j21 * ey) - self.k_d * qd1 + self.k1 * q1,
                (cb * ex + sb * ey) - self.k_d * qd2 + self.k2 * q2,
            )
        if self.act is ActuationType.AP:
            proj = -math.cos(a) * ex - math.sin(a) * ey
            return -(self.l1 + self.l2) * proj - self.k_d * qd1 + self.k1 * q1, 0.0
        c = q2 + self.beta
        proj = -math.cos(c) * ex - math.sin(c) * ey
        return 0.0, -self.l2 * proj - self.k_d * qd2 + self.k2 * q2

    def __call__(self, state: ManipulatorState, msgs: NeighborMessages) -> np.ndarray:
        if msgs.keys() != self.neighbors:
            missing = sorted(self.neighbors - set(msgs))
            extra = sorted(set(msgs) - self.neighbors)
            raise ValueError(
                f"agent {self.i}: messages must cover exactly its neighbours (missing {missing}, extra {extra})"
            )
        others = {j: virtual_xy_from_observables(obs) for j, obs in msgs.items()}
        q1, q2 = state.q
        qd1, qd2 = state.qdot
        return np.array(self.torque(q1, q2, qd1, qd2, others))


def control_torque(
    i: int,
    config: ManipulatorConfig,
    state: ManipulatorState,
    msgs: NeighborMessages,
    framework: Framework,
    method,
    gains: ControlGains,
) -> np.ndarray:
    return AgentLaw(i, config, framework, method, gains)(state, msgs)


def centralized_torques(configs, q, qd, framework: Framework, method, gains: ControlGains) -> np.ndarray:
    """Stacked-form controller evaluated with global knowledge; (N, 2) torques.

    Shares no code with the per-agent law beyond kinematics, which makes it a
    useful cross-check of the local assembly.
    """
    q = np.asarray(q, dtype=float).reshape(-1, 2)
    qd = np.asarray(qd, dtype=float).reshape(-1, 2)
    xhat = np.array([virtual_end_effector(c, qi) for c, qi in zip(configs, q)])
    e_hat = potential_gradient(method, framework, xhat, gains.k_s)
    u = np.zeros_like(q)
    for i, c in enumerate(configs):
        k = np.asarray(c.stiffness)
        if c.actuation is ActuationType.FA:
            u[i] = -jacobian(c, q[i]).T @ e_hat[i] - gains.k_d * qd[i] + k * q[i]
        else:
            a = c.actuation.active_indices[0]
            jbar, r = reduced_jacobian(c, q[i, a])
            u[i, a] = -r * (jbar @ e_hat[i]) - gains.k_d * qd[i, a] + k[a] * q[i, a]
    return u


def singularity_distance(config: ManipulatorConfig, q) -> float:
    """Distance of the relevant angle to the singular set of the arm's type."""
    act = config.actuation
    if act is ActuationType.FA:
        angle, period = q[1] + config.beta, math.pi
    elif act is ActuationType.AP:
        angle, period = q[0] + config.beta, math.pi / 2
    else:
        angle, period = q[1] + config.beta, math.pi / 2
    m = float(angle) % period
    return min(m, period - m)


def singularity_check(config: ManipulatorConfig, state, margin: float = DEFAULT_SINGULARITY_MARGIN) -> tuple[bool, float]:
    q = state.q if isinstance(state, ManipulatorState) else state
    d = singularity_distance(config, q)
    return d < margin, d
