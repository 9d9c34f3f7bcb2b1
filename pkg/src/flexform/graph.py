"""Formation graphs, edge functions and the virtual-spring potential.

Vertices are 1-based in the public API (matching how formations are usually
written down); arrays are 0-based internally. Each edge keeps the
orientation given at construction and the same orientation is used in the
incidence matrix, the relative displacements and the rigidity matrix.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

RANK_RTOL = 1e-9


class FormationMethod(enum.Enum):
    DISTANCE = "distance"
    DISPLACEMENT = "displacement"

    @property
    def p(self) -> int:
        return 1 if self is FormationMethod.DISTANCE else 2

    @classmethod
    def parse(cls, value) -> "FormationMethod":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown formation method {value!r}") from None


@dataclass(frozen=True)
class FormationGraph:
    n_vertices: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        edges = tuple((int(t), int(h)) for t, h in self.edges)
        for t, h in edges:
            if t == h:
                raise ValueError(f"self-loop on vertex {t}")
            if not (1 <= t <= self.n_vertices and 1 <= h <= self.n_vertices):
                raise ValueError(f"edge {(t, h)} references a vertex outside 1..{self.n_vertices}")
        object.__setattr__(self, "edges", edges)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def incident_edges(self, i: int) -> list[tuple[int, int, int]]:
        """(edge index, neighbour, sign) for every edge touching vertex i; sign is +1 at the tail."""
        out = []
        for k, (t, h) in enumerate(self.edges):
            if t == i:
                out.append((k, h, 1))
            elif h == i:
                out.append((k, t, -1))
        return out

    def neighbors(self, i: int) -> list[int]:
        return sorted({j for _, j, _ in self.incident_edges(i)})


@dataclass(frozen=True)
class Framework:
    graph: FormationGraph
    x_star: np.ndarray

    def __post_init__(self):
        xs = np.array(self.x_star, dtype=float).reshape(-1, 2)
        if xs.shape[0] != self.graph.n_vertices:
            raise ValueError(f"x_star has {xs.shape[0]} points but the graph has {self.graph.n_vertices} vertices")
        xs.setflags(write=False)
        object.__setattr__(self, "x_star", xs)

    def __eq__(self, other):
        return (
            isinstance(other, Framework)
            and self.graph == other.graph
            and np.array_equal(self.x_star, other.x_star)
        )

    __hash__ = None

    def desired_distances(self) -> np.ndarray:
        return np.sqrt(edge_function(FormationMethod.DISTANCE, self.graph, self.x_star))


def incidence_matrix(graph: FormationGraph) -> np.ndarray:
    b = np.zeros((graph.n_vertices, graph.n_edges))
    for k, (t, h) in enumerate(graph.edges):
        b[t - 1, k] = 1.0
        b[h - 1, k] = -1.0
    return b


def _tails_heads(graph: FormationGraph) -> tuple[np.ndarray, np.ndarray]:
    e = np.array(graph.edges, dtype=int).reshape(-1, 2) - 1
    return e[:, 0], e[:, 1]


def relative_displacements(graph: FormationGraph, positions) -> np.ndarray:
    x = np.asarray(positions, dtype=float).reshape(-1, 2)
    t, h = _tails_heads(graph)
    return x[t] - x[h]


def edge_function(method, graph: FormationGraph, positions) -> np.ndarray:
    z = relative_displacements(graph, positions)
    if FormationMethod.parse(method) is FormationMethod.DISTANCE:
        return np.sum(z * z, axis=1)
    return z.reshape(-1)


def formation_error(method, framework: Framework, virtual_positions) -> np.ndarray:
    return edge_function(method, framework.graph, virtual_positions) - edge_function(
        method, framework.graph, framework.x_star
    )


def stiffness_vector(method, k_s, n_edges: int) -> np.ndarray:
    """Per-component virtual spring stiffness (length p*|E|).

    A scalar is broadcast; for the displacement method a per-edge list of
    length |E| is repeated across both components.
    """
    p = FormationMethod.parse(method).p
    k = np.atleast_1d(np.asarray(k_s, dtype=float))
    if k.size == 1:
        k = np.full(p * n_edges, k[0])
    elif k.size == n_edges and p == 2:
        k = np.repeat(k, 2)
    if k.size != p * n_edges:
        raise ValueError(f"expected {p * n_edges} stiffness entries, got {k.size}")
    if not np.all(np.isfinite(k) & (k > 0)):
        raise ValueError("virtual spring stiffness must be strictly positive")
    return k


def potential(e, k_s) -> float:
    e = np.atleast_1d(np.asarray(e, dtype=float))
    k = np.atleast_1d(np.asarray(k_s, dtype=float))
    if k.size == 1:
        k = np.full(e.size, k[0])
    if k.shape != e.shape:
        raise ValueError(f"stiffness shape {k.shape} does not match error shape {e.shape}")
    if not np.all(k > 0):
        raise ValueError("virtual spring stiffness must be strictly positive")
    return 0.5 * float(np.sum(k * e * e))


def potential_gradient(method, framework: Framework, virtual_positions, k_s) -> np.ndarray:
    """dV/dx_hat as an (N, 2) array, assembled as Bbar D(z) k_S e."""
    method = FormationMethod.parse(method)
    g = framework.graph
    x = np.asarray(virtual_positions, dtype=float).reshape(-1, 2)
    k = stiffness_vector(method, k_s, g.n_edges)
    e = formation_error(method, framework, x)
    z = relative_displacements(g, x)
    if method is FormationMethod.DISTANCE:
        w = 2.0 * z * (k * e)[:, None]
    else:
        w = (k * e).reshape(-1, 2)
    out = np.zeros_like(x)
    t, h = _tails_heads(g)
    np.add.at(out, t, w)
    np.add.at(out, h, -w)
    return out


def rigidity_matrix(framework: Framework) -> np.ndarray:
    """Jacobian of the squared-distance edge function at x*, shape (|E|, 2N)."""
    g = framework.graph
    z = relative_displacements(g, framework.x_star)
    r = np.zeros((g.n_edges, 2 * g.n_vertices))
    for k, (t, h) in enumerate(g.edges):
        r[k, 2 * (t - 1) : 2 * t] = 2.0 * z[k]
        r[k, 2 * (h - 1) : 2 * h] = -2.0 * z[k]
    return r


def numerical_rank(a: np.ndarray, rtol: float = RANK_RTOL) -> int:
    s = np.linalg.svd(np.atleast_2d(a), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def rigidity_check(framework: Framework) -> tuple[int, bool]:
    n = framework.graph.n_vertices
    if n < 3:
        raise ValueError("rigidity check needs at least 3 vertices")
    rank = numerical_rank(rigidity_matrix(framework))
    return rank, rank == 2 * n - 3
