"""Planar kinematics, including the virtual end-effector of underactuated arms.

The virtual end-effector is the tip position obtained by keeping the active
angle(s) and forcing the passive angle to zero. A neighbour can rebuild it
from observed mid-joint/end-effector positions alone.

Scalar trig goes through ``math``: these functions sit in the simulator's
inner loop and numpy overhead on 2-vectors dominates otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import ActuationType, ManipulatorConfig

OBS_TOL = 1e-9
DEGENERATE_TOL = 1e-9


def tip_xy(l1: float, l2: float, beta: float, bx: float, by: float, q1: float, q2: float) -> tuple[float, float]:
    a = q1 + beta
    b = a + q2
    return bx - l1 * math.sin(a) - l2 * math.sin(b), by + l1 * math.cos(a) + l2 * math.cos(b)


def forward_kinematics(config: ManipulatorConfig, q) -> np.ndarray:
    l1, l2 = config.lengths
    bx, by = config.base
    return np.array(tip_xy(l1, l2, config.beta, bx, by, float(q[0]), float(q[1])))


def mid_joint(config: ManipulatorConfig, q1: float) -> np.ndarray:
    l1 = config.lengths[0]
    a = float(q1) + config.beta
    return np.array([config.base[0] - l1 * math.sin(a), config.base[1] + l1 * math.cos(a)])


def jacobian(config: ManipulatorConfig, q) -> np.ndarray:
    l1, l2 = config.lengths
    a = float(q[0]) + config.beta
    b = a + float(q[1])
    cb, sb = l2 * math.cos(b), l2 * math.sin(b)
    return np.array([[-l1 * math.cos(a) - cb, -cb], [-l1 * math.sin(a) - sb, -sb]])


def virtual_angles(actuation: ActuationType, q1: float, q2: float) -> tuple[float, float]:
    if actuation is ActuationType.AP:
        return q1, 0.0
    if actuation is ActuationType.PA:
        return 0.0, q2
    return q1, q2


def virtual_end_effector(config: ManipulatorConfig, q) -> np.ndarray:
    l1, l2 = config.lengths
    bx, by = config.base
    v1, v2 = virtual_angles(config.actuation, float(q[0]), float(q[1]))
    return np.array(tip_xy(l1, l2, config.beta, bx, by, v1, v2))


def reduced_jacobian(config: ManipulatorConfig, active_angle: float) -> tuple[np.ndarray, float]:
    """Direction and radius such that d(virtual tip)/dt = r * Jbar * (active rate)."""
    l1, l2 = config.lengths
    if config.actuation is ActuationType.AP:
        r = l1 + l2
    elif config.actuation is ActuationType.PA:
        r = l2
    else:
        raise ValueError("reduced_jacobian is only defined for AP and PA arms")
    a = float(active_angle) + config.beta
    return np.array([-math.cos(a), -math.sin(a)]), r


def relative_angle(a, b) -> float:
    """Counter-clockwise angle from a to b in (-pi, pi]."""
    return math.atan2(a[0] * b[1] - a[1] * b[0], a[0] * b[0] + a[1] * b[1])


@dataclass(frozen=True)
class ObservedNeighbor:
    """What agent i sees of neighbour j: tip, mid-joint and the static arm description."""

    end: tuple[float, float]
    mid: tuple[float, float]
    base: tuple[float, float]
    beta: float
    lengths: tuple[float, float]
    actuation: ActuationType

    def __post_init__(self):
        if not isinstance(self.actuation, ActuationType):
            object.__setattr__(self, "actuation", ActuationType.parse(self.actuation))
        l1, l2 = self.lengths
        d2 = math.hypot(self.end[0] - self.mid[0], self.end[1] - self.mid[1])
        d1 = math.hypot(self.mid[0] - self.base[0], self.mid[1] - self.base[1])
        if not (abs(d1 - l1) <= OBS_TOL and abs(d2 - l2) <= OBS_TOL):
            raise ValueError(
                f"inconsistent observation: |mid-base|={d1!r} vs L1={l1!r}, |end-mid|={d2!r} vs L2={l2!r}"
            )

    @classmethod
    def of(cls, config: ManipulatorConfig, q) -> "ObservedNeighbor":
        """Synthesize an exact observation of an arm at joint angles q."""
        l1, l2 = config.lengths
        bx, by = config.base
        q1, q2 = float(q[0]), float(q[1])
        a = q1 + config.beta
        return cls(
            end=tip_xy(l1, l2, config.beta, bx, by, q1, q2),
            mid=(bx - l1 * math.sin(a), by + l1 * math.cos(a)),
            base=config.base,
            beta=config.beta,
            lengths=config.lengths,
            actuation=config.actuation,
        )


def virtual_xy_from_observables(obs: ObservedNeighbor) -> tuple[float, float]:
    if obs.actuation is ActuationType.FA:
        return obs.end
    bx, by = obs.base
    ax, ay = obs.mid[0] - bx, obs.mid[1] - by
    if math.hypot(ax, ay) < DEGENERATE_TOL:
        raise ValueError("degenerate observation: mid-joint coincides with base")
    l1, l2 = obs.lengths
    if obs.actuation is ActuationType.AP:
        s = (l1 + l2) / l1
        return s * ax + bx, s * ay + by
    cx, cy = obs.end[0] - obs.mid[0], obs.end[1] - obs.mid[1]
    if math.hypot(cx, cy) < DEGENERATE_TOL:
        raise ValueError("degenerate observation: end-effector coincides with mid-joint")
    return tip_xy(l1, l2, obs.beta, bx, by, 0.0, relative_angle((ax, ay), (cx, cy)))


def virtual_from_observables(obs: ObservedNeighbor) -> np.ndarray:
    return np.array(virtual_xy_from_observables(obs))
