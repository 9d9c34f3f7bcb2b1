"""Scenario description, the four built-in network cases, and JSON scenario files.

Scenario file schema (JSON object)::

    {
      "name": "case2",                      optional
      "method": "distance" | "displacement",
      "dt": 0.001, "t_final": 60.0, "seed": 0,
      "gains": {"k_s": [0.5, ...] or 0.5, "k_d": 0.4},
      "graph": {"n_vertices": 4, "edges": [[1, 2], [2, 3], ...]},
      "x_star": [[x, y], ...],              one point per vertex
      "manipulators": [
        {"actuation": "fa" | "ap" | "pa",
         "base": [x, y], "beta": 0.0, "stiffness": [K1, K2],
         "link1": {"mass": ., "inertia_com": ., "length": ., "com_offset": .},
         "link2": {...},
         "q0": [q1, q2], "qdot0": [qd1, qd2]},     qdot0 optional, defaults to 0
        ...
      ]
    }

Edges are 1-based (tail, head) pairs. Floats are written with ``repr`` so a
save/load cycle is exact.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .controller import ControlGains
from .dynamics import ActuationType, LinkParams, ManipulatorConfig, ManipulatorState, MechParams
from .graph import FormationGraph, FormationMethod, Framework

ALPHA_EQ_RTOL = 1e-12


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    manipulators: tuple[ManipulatorConfig, ...]
    initial_states: tuple[ManipulatorState, ...]
    framework: Framework
    method: FormationMethod
    gains: ControlGains
    dt: float = 1e-3
    t_final: float = 60.0
    seed: int = 0
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "manipulators", tuple(self.manipulators))
        object.__setattr__(self, "initial_states", tuple(self.initial_states))
        object.__setattr__(self, "method", FormationMethod.parse(self.method))
        validate_scenario(self)

    @property
    def n(self) -> int:
        return len(self.manipulators)

    def replace(self, **changes) -> "Scenario":
        from dataclasses import replace

        return replace(self, **changes)


def validate_scenario(s: Scenario) -> None:
    if not (np.isfinite(s.dt) and s.dt > 0):
        raise ScenarioError(f"invariant violated: dt > 0 (got {s.dt!r})")
    if not (s.t_final >= s.dt):
        raise ScenarioError(f"invariant violated: t_final >= dt (got t_final={s.t_final!r}, dt={s.dt!r})")
    if len(s.initial_states) != len(s.manipulators):
        raise ScenarioError("invariant violated: one initial state per manipulator")
    if s.framework.graph.n_vertices != len(s.manipulators):
        raise ScenarioError(
            f"invariant violated: graph vertex count ({s.framework.graph.n_vertices}) "
            f"equals number of manipulators ({len(s.manipulators)})"
        )
    k = len(s.gains.k_s)
    ne = s.framework.graph.n_edges
    if k not in (1, ne, s.method.p * ne):
        raise ScenarioError(f"invariant violated: k_s has {k} entries, expected 1, {ne} or {s.method.p * ne}")
    for i, c in enumerate(s.manipulators, start=1):
        if c.actuation is ActuationType.PA:
            _, a2, a3 = c.params.alphas
            if abs(a2 - a3) <= ALPHA_EQ_RTOL * max(a2, a3):
                raise ScenarioError(f"invariant violated: alpha2 != alpha3 for PA manipulator {i}")


# Arm used throughout the reference study.
REFERENCE_LINK1 = LinkParams(mass=0.7223, inertia_com=0.0082, length=0.3, com_offset=0.1184)
REFERENCE_LINK2 = LinkParams(mass=1.2963, inertia_com=0.0358, length=0.5, com_offset=0.2357)
REFERENCE_PARAMS = MechParams(REFERENCE_LINK1, REFERENCE_LINK2)
REFERENCE_STIFFNESS = (5.0, 5.0)

SQUARE_EDGES = ((1, 2), (2, 3), (3, 4), (4, 1), (1, 3))
SQUARE_BASES = ((0.0, 0.0), (3.0, 0.0), (3.0, 2.0), (0.0, 2.0))
# side-2 square centred between the bases; each corner sits 0.5 m from its base
SQUARE_X_STAR = ((0.5, 0.0), (2.5, 0.0), (2.5, 2.0), (0.5, 2.0))
SQUARE_Q0 = (
    (-np.pi / 2, np.pi / 3),
    (np.pi / 3, -np.pi / 3),
    (np.pi / 3, -np.pi / 3),
    (-np.pi / 6, -np.pi / 3),
)

CASE_ACTUATIONS = {
    "case1": ("fa", "fa", "fa", "ap"),
    "case2": ("fa", "fa", "ap", "pa"),
    "case3": ("fa", "ap", "ap", "pa"),
    "case4": ("ap", "ap", "ap", "pa"),
}
CASE_GAINS = {
    "case1": (0.5, 0.4),
    "case2": (0.5, 0.4),
    "case3": (0.4, 0.5),
    "case4": (0.5, 0.4),
}


def square_framework() -> Framework:
    return Framework(FormationGraph(4, SQUARE_EDGES), np.array(SQUARE_X_STAR))


def square_network(actuations, method="distance", k_s=0.5, k_d=0.4, dt=1e-3, t_final=60.0, name="") -> Scenario:
    configs = tuple(
        ManipulatorConfig(REFERENCE_PARAMS, REFERENCE_STIFFNESS, ActuationType.parse(a), base, 0.0)
        for a, base in zip(actuations, SQUARE_BASES)
    )
    states = tuple(ManipulatorState(q, (0.0, 0.0)) for q in SQUARE_Q0)
    return Scenario(
        manipulators=configs,
        initial_states=states,
        framework=square_framework(),
        method=FormationMethod.parse(method),
        gains=ControlGains((float(k_s),) * len(SQUARE_EDGES), k_d),
        dt=dt,
        t_final=t_final,
        seed=0,
        name=name,
    )


def builtin(name: str, **overrides) -> Scenario:
    key = name.lower()
    if key not in CASE_ACTUATIONS:
        raise ScenarioError(f"unknown built-in scenario {name!r}; choose from {sorted(CASE_ACTUATIONS)}")
    k_s, k_d = CASE_GAINS[key]
    kwargs = dict(k_s=k_s, k_d=k_d, name=key)
    kwargs.update(overrides)
    return square_network(CASE_ACTUATIONS[key], **kwargs)


BUILTINS = tuple(sorted(CASE_ACTUATIONS))


# --- serialisation -------------------------------------------------------


def _link_to_dict(link: LinkParams) -> dict:
    return {
        "mass": link.mass,
        "inertia_com": link.inertia_com,
        "length": link.length,
        "com_offset": link.com_offset,
    }


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "name": s.name,
        "method": s.method.value,
        "dt": s.dt,
        "t_final": s.t_final,
        "seed": s.seed,
        "gains": {"k_s": list(s.gains.k_s), "k_d": s.gains.k_d},
        "graph": {"n_vertices": s.framework.graph.n_vertices, "edges": [list(e) for e in s.framework.graph.edges]},
        "x_star": s.framework.x_star.tolist(),
        "manipulators": [
            {
                "actuation": c.actuation.value,
                "base": list(c.base),
                "beta": c.beta,
                "stiffness": list(c.stiffness),
                "link1": _link_to_dict(c.params.link1),
                "link2": _link_to_dict(c.params.link2),
                "q0": list(st.q),
                "qdot0": list(st.qdot),
            }
            for c, st in zip(s.manipulators, s.initial_states)
        ],
    }


class _Fields:
    """Field access with path-qualified error messages."""

    def __init__(self, data, path: str):
        if not isinstance(data, dict):
            raise ScenarioError(f"{path or 'scenario'}: expected an object")
        self.data = data
        self.path = path

    def _p(self, key):
        return f"{self.path}.{key}" if self.path else key

    def get(self, key, default=...):
        if key not in self.data:
            if default is ...:
                raise ScenarioError(f"{self._p(key)}: missing required field '{key}'")
            return default
        return self.data[key]

    def number(self, key, default=...):
        v = self.get(key, default)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ScenarioError(f"{self._p(key)}: expected a number, got {v!r}")
        return float(v)

    def vector(self, key, length=None, default=...):
        v = self.get(key, default)
        if not isinstance(v, (list, tuple)) or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in v):
            raise ScenarioError(f"{self._p(key)}: expected a list of numbers, got {v!r}")
        if length is not None and len(v) != length:
            raise ScenarioError(f"{self._p(key)}: expected {length} entries, got {len(v)}")
        return tuple(float(x) for x in v)

    def sub(self, key):
        return _Fields(self.get(key), self._p(key))


def _link_from(f: _Fields) -> LinkParams:
    try:
        return LinkParams(
            mass=f.number("mass"),
            inertia_com=f.number("inertia_com"),
            length=f.number("length"),
            com_offset=f.number("com_offset"),
        )
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(f"{f.path}: {exc}") from None


def scenario_from_dict(data) -> Scenario:
    root = _Fields(data, "")
    arms = root.get("manipulators")
    if not isinstance(arms, list) or not arms:
        raise ScenarioError("manipulators: expected a non-empty list")
    configs, states = [], []
    for i, raw in enumerate(arms):
        f = _Fields(raw, f"manipulators[{i}]")
        try:
            params = MechParams(_link_from(f.sub("link1")), _link_from(f.sub("link2")))
            configs.append(
                ManipulatorConfig(
                    params=params,
                    stiffness=f.vector("stiffness", 2),
                    actuation=ActuationType.parse(f.get("actuation")),
                    base=f.vector("base", 2),
                    beta=f.number("beta", 0.0),
                )
            )
            states.append(ManipulatorState(f.vector("q0", 2), f.vector("qdot0", 2, (0.0, 0.0))))
        except ScenarioError:
            raise
        except ValueError as exc:
            raise ScenarioError(f"manipulators[{i}]: {exc}") from None

    g = root.sub("graph")
    edges = g.get("edges")
    if not isinstance(edges, list) or any(
        not isinstance(e, list) or len(e) != 2 or not all(isinstance(v, int) and not isinstance(v, bool) for v in e)
        for e in edges
    ):
        raise ScenarioError("graph.edges: expected a list of [tail, head] integer pairs")
    n_vert = g.get("n_vertices")
    if not isinstance(n_vert, int) or isinstance(n_vert, bool):
        raise ScenarioError(f"graph.n_vertices: expected an integer, got {n_vert!r}")
    xs = root.get("x_star")
    if not isinstance(xs, list) or any(not isinstance(p, list) or len(p) != 2 for p in xs):
        raise ScenarioError("x_star: expected a list of [x, y] pairs")
    try:
        framework = Framework(FormationGraph(n_vert, tuple(tuple(e) for e in edges)), np.array(xs, dtype=float))
    except ValueError as exc:
        raise ScenarioError(f"graph/x_star: {exc}") from None

    gains_f = root.sub("gains")
    k_s = gains_f.get("k_s")
    k_s = [k_s] if isinstance(k_s, (int, float)) and not isinstance(k_s, bool) else k_s
    if not isinstance(k_s, list):
        raise ScenarioError(f"gains.k_s: expected a number or list, got {k_s!r}")
    try:
        gains = ControlGains(tuple(k_s), gains_f.number("k_d"))
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"gains: {exc}") from None

    try:
        method = FormationMethod.parse(root.get("method"))
    except ValueError as exc:
        raise ScenarioError(f"method: {exc}") from None
    seed = root.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ScenarioError(f"seed: expected an integer, got {seed!r}")
    return Scenario(
        manipulators=tuple(configs),
        initial_states=tuple(states),
        framework=framework,
        method=method,
        gains=gains,
        dt=root.number("dt", 1e-3),
        t_final=root.number("t_final", 60.0),
        seed=seed,
        name=str(root.get("name", "")),
    )


def save_scenario(s: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=2) + "\n")


def load_scenario(path) -> Scenario:
    """Load a scenario from a JSON file, or a built-in by name (case1..case4)."""
    if str(path).lower() in CASE_ACTUATIONS and not Path(path).exists():
        return builtin(str(path))
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return scenario_from_dict(data)
