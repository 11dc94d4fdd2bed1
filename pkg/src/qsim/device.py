"""Qubit lattices with always-on Ising couplings.

A :class:`DeviceGraph` holds the qubits (with a role and a bare frequency),
the coupling edges, and the rotating-frame frequency of every qubit.  All
rates are in units of ``1/T2`` and all times in units of ``T2``.

Only detunings ``omega - omega_prime`` enter the dynamics, so the builders put
every bare frequency at zero and store the frame that makes the Ising term
collapse onto excited-state projectors (see :func:`assign_frame`).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "QubitRole",
    "Qubit",
    "DeviceGraph",
    "EchoTiming",
    "Cross",
    "assign_frame",
    "build_chain",
    "build_2d_lattice",
    "build_bilayer_unit",
    "spin_echo_times",
    "randomize_couplings",
    "find_crosses",
    "cross_subgraph",
]


class QubitRole(str, Enum):
    LOGICAL = "logical"
    SYNDROME_X = "syndrome_x"
    SYNDROME_Z = "syndrome_z"
    ANCILLA = "ancilla"

    @property
    def is_main(self) -> bool:
        return self is not QubitRole.ANCILLA


@dataclass(frozen=True)
class Qubit:
    id: int
    role: QubitRole
    omega: float = 0.0
    coord: tuple[int, int] | None = None


@dataclass(frozen=True, eq=False)
class DeviceGraph:
    """Simple coupling graph over densely numbered qubits.

    Parameters
    ----------
    qubits : sequence of Qubit
        Must carry ids ``0..n-1`` (any order on input, stored sorted).
    edges : mapping ``(a, b) -> g``
        Coupling strengths, all strictly positive.
    frame : mapping ``id -> omega_prime``
        Rotating-frame frequency per qubit.  Missing entries default to the
        bare frequency (zero detuning).
    """

    qubits: tuple[Qubit, ...]
    edges: Mapping[tuple[int, int], float]
    frame: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        qubits = tuple(sorted(self.qubits, key=lambda q: q.id))
        if [q.id for q in qubits] != list(range(len(qubits))):
            raise ValueError("qubit ids must be the dense range 0..n-1")
        edges: dict[tuple[int, int], float] = {}
        for (a, b), g in self.edges.items():
            a, b = int(a), int(b)
            if a == b:
                raise ValueError(f"self-loop on qubit {a}")
            if not (0 <= a < len(qubits) and 0 <= b < len(qubits)):
                raise ValueError(f"edge ({a}, {b}) references unknown qubit")
            key = (min(a, b), max(a, b))
            if key in edges:
                raise ValueError(f"duplicate edge {key}")
            if not g > 0:
                raise ValueError(f"coupling on edge {key} must be positive, got {g}")
            edges[key] = float(g)
        frame = {q.id: q.omega for q in qubits}
        frame.update({int(k): float(v) for k, v in self.frame.items()})
        object.__setattr__(self, "qubits", qubits)
        object.__setattr__(self, "edges", dict(sorted(edges.items())))
        object.__setattr__(self, "frame", frame)

    @property
    def n(self) -> int:
        return len(self.qubits)

    @cached_property
    def _adjacency(self) -> dict[int, dict[int, float]]:
        adj: dict[int, dict[int, float]] = {q.id: {} for q in self.qubits}
        for (a, b), g in self.edges.items():
            adj[a][b] = g
            adj[b][a] = g
        return adj

    def neighbors(self, q: int) -> list[int]:
        return sorted(self._adjacency[q])

    def coupling(self, a: int, b: int) -> float:
        try:
            return self._adjacency[a][b]
        except KeyError:
            raise KeyError(f"qubits {a} and {b} are not coupled") from None

    def has_edge(self, a: int, b: int) -> bool:
        return b in self._adjacency.get(a, {})

    def role(self, q: int) -> QubitRole:
        return self.qubits[q].role

    def detuning(self, q: int) -> float:
        """``omega - omega_prime`` for qubit ``q``."""
        return self.qubits[q].omega - self.frame[q]

    def main_qubits(self) -> list[int]:
        return [q.id for q in self.qubits if q.role.is_main]

    def ancillas(self) -> list[int]:
        return [q.id for q in self.qubits if not q.role.is_main]

    def with_couplings(self, couplings: Mapping[tuple[int, int], float]) -> DeviceGraph:
        """Copy with some couplings replaced; the frame is reassigned."""
        edges = dict(self.edges)
        for (a, b), g in couplings.items():
            key = (min(a, b), max(a, b))
            if key not in edges:
                raise KeyError(f"no edge {key}")
            edges[key] = g
        return assign_frame(DeviceGraph(self.qubits, edges))

    def subgraph(self, ids: Sequence[int]) -> DeviceGraph:
        """Induced subgraph relabelled to ``0..len(ids)-1`` in the given order.

        Frame frequencies are carried over unchanged, so a qubit that lost
        neighbours keeps the detuning it had inside the larger device.
        """
        relabel = {old: new for new, old in enumerate(ids)}
        qubits = [
            Qubit(relabel[q], self.qubits[q].role, self.qubits[q].omega, self.qubits[q].coord)
            for q in ids
        ]
        edges = {
            (relabel[a], relabel[b]): g
            for (a, b), g in self.edges.items()
            if a in relabel and b in relabel
        }
        frame = {relabel[q]: self.frame[q] for q in ids}
        return DeviceGraph(qubits, edges, frame)

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "qubits": [
                {"id": q.id, "role": q.role.value, "omega": q.omega}
                | ({"coord": list(q.coord)} if q.coord is not None else {})
                for q in self.qubits
            ],
            "edges": [{"a": a, "b": b, "g": g} for (a, b), g in self.edges.items()],
            "frame": {str(k): v for k, v in self.frame.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: Mapping) -> DeviceGraph:
        qubits = [
            Qubit(
                int(q["id"]),
                QubitRole(q["role"]),
                float(q.get("omega", 0.0)),
                tuple(q["coord"]) if "coord" in q else None,
            )
            for q in data["qubits"]
        ]
        edges: dict[tuple[int, int], float] = {}
        for e in data["edges"]:
            key = (int(e["a"]), int(e["b"]))
            if key in edges or key[::-1] in edges:
                raise ValueError(f"duplicate edge {key}")
            edges[key] = float(e["g"])
        frame = {int(k): float(v) for k, v in data.get("frame", {}).items()}
        return cls(qubits, edges, frame)

    @classmethod
    def from_json(cls, text: str) -> DeviceGraph:
        return cls.from_dict(json.loads(text))


def assign_frame(graph: DeviceGraph) -> DeviceGraph:
    """Set every frame so that ``omega - omega' = sum of g/2`` over incident edges.

    With this choice the Ising Hamiltonian reduces (up to a constant) to
    ``sum_edges g * n_a * n_b`` with ``n`` the excited-state projector, so a
    qubit sitting in its ground state decouples all of its neighbours.
    """
    frame = {
        q.id: q.omega - 0.5 * sum(graph.coupling(q.id, j) for j in graph.neighbors(q.id))
        for q in graph.qubits
    }
    return DeviceGraph(graph.qubits, graph.edges, frame)


def _edge_values(couplings: float | Sequence[float], count: int) -> list[float]:
    if np.isscalar(couplings):
        return [float(couplings)] * count
    values = [float(g) for g in couplings]  # type: ignore[union-attr]
    if len(values) == 1:
        return values * count
    if len(values) != count:
        raise ValueError(f"expected 1 or {count} couplings, got {len(values)}")
    return values


def _check_even(m: int) -> None:
    if m < 2 or m % 2:
        raise ValueError(f"m must be an even integer >= 2, got {m}")


def build_chain(m: int, couplings: float | Sequence[float] = 1.0) -> DeviceGraph:
    """Linear array of ``m`` main qubits with an ancilla between each pair.

    Qubit ``2k`` is main qubit ``k``; odd ids are ancillas.  ``couplings`` is
    a single value or one value per edge in left-to-right order.
    """
    _check_even(m)
    n = 2 * m - 1
    qubits = []
    for i in range(n):
        if i % 2:
            role = QubitRole.ANCILLA
        else:
            role = QubitRole.LOGICAL if (i // 2) % 2 == 0 else QubitRole.SYNDROME_Z
        qubits.append(Qubit(i, role, 0.0, (0, i)))
    gs = _edge_values(couplings, n - 1)
    edges = {(i, i + 1): gs[i] for i in range(n - 1)}
    return assign_frame(DeviceGraph(qubits, edges))


def _main_role(r: int, c: int) -> QubitRole:
    # checkerboard: logical on even sites, syndrome type set by the row
    if (r + c) % 2 == 0:
        return QubitRole.LOGICAL
    return QubitRole.SYNDROME_X if r % 2 == 0 else QubitRole.SYNDROME_Z


def _graph_from_sites(
    sites: Mapping[tuple[int, int], QubitRole],
    links: Iterable[tuple[tuple[int, int], tuple[int, int]]],
    couplings: float | Sequence[float],
) -> DeviceGraph:
    order = sorted(sites)
    ids = {site: i for i, site in enumerate(order)}
    qubits = [Qubit(ids[s], sites[s], 0.0, s) for s in order]
    pairs = sorted({tuple(sorted((ids[a], ids[b]))) for a, b in links})
    gs = _edge_values(couplings, len(pairs))
    edges = {pair: g for pair, g in zip(pairs, gs)}
    return assign_frame(DeviceGraph(qubits, edges))


def build_2d_lattice(m: int, couplings: float | Sequence[float] = 1.0) -> DeviceGraph:
    """``m x m`` main qubits on a square grid with ancillas on every edge midpoint.

    Lattice coordinates are doubled: main qubit ``(r, c)`` sits at
    ``(2r, 2c)`` and the ancilla between two neighbours at the midpoint.
    Ids follow row-major order of these coordinates.
    """
    _check_even(m)
    sites: dict[tuple[int, int], QubitRole] = {}
    links = []
    for r in range(m):
        for c in range(m):
            sites[(2 * r, 2 * c)] = _main_role(r, c)
            if c + 1 < m:
                mid = (2 * r, 2 * c + 1)
                sites[mid] = QubitRole.ANCILLA
                links += [((2 * r, 2 * c), mid), (mid, (2 * r, 2 * c + 2))]
            if r + 1 < m:
                mid = (2 * r + 1, 2 * c)
                sites[mid] = QubitRole.ANCILLA
                links += [((2 * r, 2 * c), mid), (mid, (2 * r + 2, 2 * c))]
    return _graph_from_sites(sites, links, couplings)


# Bilayer unit cell, in lattice units of a quarter main-qubit spacing.  Six
# main qubits in 3 rows x 2 columns; one column belongs to the layer of
# logical + bit-flip syndrome qubits, the other to logical + dephasing
# syndrome qubits.  Odd-numbered tiles are mirrored so that neighbouring
# tiles touch with columns of the same layer.
#
#   row 0:  L_x --a-- S_z --a--> (next tile)      a: edge ancilla
#            |  \   /  |                          x: cross (centre + 4 arms)
#            a    x    a
#            |  /   \  |
#   row 1:  S_x --a-- L_z --a-->
#            |  \   /  |
#            a    x    a
#            |  /   \  |
#   row 2:  L_x --a-- S_z --a-->
#            a         a   (links to the tile below; left open)
#
# Each tile owns the ancilla to the right of and below every main qubit
# (12) plus two crosses of 5 ancillas each in its interior faces (10), for
# 6 + 22 = 28 qubits.  Slant links run between the two logical qubits on a
# diagonal of each face.
_BILAYER_COLUMNS = (
    (QubitRole.LOGICAL, QubitRole.SYNDROME_X, QubitRole.LOGICAL),
    (QubitRole.SYNDROME_Z, QubitRole.LOGICAL, QubitRole.SYNDROME_Z),
)
_TILE_WIDTH = 8


def build_bilayer_unit(tiles: int = 1, couplings: float | Sequence[float] = 1.0) -> DeviceGraph:
    """Row of ``tiles`` bilayer unit cells (28 qubits each) abutting in-plane."""
    if tiles < 1:
        raise ValueError(f"tiles must be >= 1, got {tiles}")
    sites: dict[tuple[int, int], QubitRole] = {}
    links = []
    for t in range(tiles):
        x0 = _TILE_WIDTH * t
        columns = _BILAYER_COLUMNS if t % 2 == 0 else _BILAYER_COLUMNS[::-1]
        for col, roles in enumerate(columns):
            x = x0 + 4 * col
            for r, role in enumerate(roles):
                y = 4 * r
                sites[(y, x)] = role
                right, below = (y, x + 2), (y + 2, x)
                sites[right] = sites[below] = QubitRole.ANCILLA
                links += [((y, x), right), ((y, x), below)]
                if x + 4 < _TILE_WIDTH * tiles:
                    links.append((right, (y, x + 4)))
                if r + 1 < len(roles):
                    links.append((below, (y + 4, x)))
        for r in range(2):
            centre = (4 * r + 2, x0 + 2)
            sites[centre] = QubitRole.ANCILLA
            for dy, dx in ((-1, -1), (-1, 1), (1, -1), (1, 1)):
                arm = (centre[0] + dy, centre[1] + dx)
                sites[arm] = QubitRole.ANCILLA
                links += [(arm, centre), (arm, (centre[0] + 2 * dy, centre[1] + 2 * dx))]
    return _graph_from_sites(sites, links, couplings)


@dataclass(frozen=True)
class EchoTiming:
    """Free-evolution times around the refocusing pulse.

    ``swapped`` is set when the caller passed ``g1 < g2``; the timing then
    refers to the reordered pair, so the pulse goes on the other end.
    """

    t1: float
    t2: float
    g1: float
    g2: float
    swapped: bool = False


def spin_echo_times(g1: float, g2: float) -> EchoTiming:
    """Times with ``g1 (t1 - t2) = g2 (t1 + t2) = pi`` for ``g1 >= g2``."""
    if not (g1 > 0 and g2 > 0):
        raise ValueError(f"couplings must be positive, got g1={g1}, g2={g2}")
    swapped = g1 < g2
    if swapped:
        g1, g2 = g2, g1
    t1 = math.pi * (g1 + g2) / (2 * g1 * g2)
    t2 = math.pi * (g1 - g2) / (2 * g1 * g2)
    return EchoTiming(t1, t2, g1, g2, swapped)


def randomize_couplings(
    graph: DeviceGraph, low: float, high: float, rng: np.random.Generator
) -> DeviceGraph:
    """Draw every coupling uniformly from ``[low, high]`` (edge order is fixed)."""
    values = rng.uniform(low, high, size=len(graph.edges))
    return graph.with_couplings(dict(zip(graph.edges, values)))


@dataclass(frozen=True)
class Cross:
    """Cross-shaped block: a centre ancilla, four arm ancillas, four mains.

    ``arms[i]`` links ``mains[i]`` to the centre.
    """

    centre: int
    arms: tuple[int, int, int, int]
    mains: tuple[int, int, int, int]

    def path(self, a: int, e: int) -> tuple[int, int, int, int, int]:
        """Five-qubit line ``main - arm - centre - arm - main`` joining two mains."""
        if a not in self.mains or e not in self.mains or a == e:
            raise ValueError(f"({a}, {e}) is not a pair of distinct mains of this cross")
        return (a, self.arms[self.mains.index(a)], self.centre, self.arms[self.mains.index(e)], e)

    @property
    def qubits(self) -> tuple[int, ...]:
        return (*self.mains, *self.arms, self.centre)


def find_crosses(graph: DeviceGraph) -> list[Cross]:
    """All cross blocks, ordered by centre id."""
    crosses = []
    for c in graph.ancillas():
        arms = graph.neighbors(c)
        if len(arms) != 4 or any(graph.role(a).is_main for a in arms):
            continue
        mains = []
        for arm in arms:
            others = [q for q in graph.neighbors(arm) if q != c]
            if len(others) != 1 or not graph.role(others[0]).is_main:
                break
            mains.append(others[0])
        else:
            if len(set(mains)) == 4:
                crosses.append(Cross(c, tuple(arms), tuple(mains)))
    return crosses


def cross_subgraph(graph: DeviceGraph, cross: Cross) -> tuple[DeviceGraph, Cross]:
    """The nine qubits of ``cross`` as a standalone device, frame re-assigned."""
    ids = list(cross.qubits)
    sub = assign_frame(graph.subgraph(ids))
    relabel = {old: new for new, old in enumerate(ids)}
    local = Cross(
        relabel[cross.centre],
        tuple(relabel[a] for a in cross.arms),
        tuple(relabel[m] for m in cross.mains),
    )
    return sub, local
