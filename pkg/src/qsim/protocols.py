"""Controlled-phase protocols and cluster-state generation schedules.

Every builder returns a :class:`~qsim.schedule.PulseSchedule`; generation
builders also attach the graph-state certificate of the state they are
meant to produce.  All schedules assume the device starts in its ground
state and leave every ancilla in the ground state.

The basic trick: an ancilla ``b`` prepared in ``|+>`` between ``a`` and ``c``
picks up a phase ``(-1)^(n_a + n_c)`` after free evolution for ``pi/g``.
Measuring ``b`` in the Y basis and applying the feedforward table below
leaves ``CZ_ac`` on the pair and ``b`` in the ground state, whichever
outcome occurs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import statevector as sv
from .device import DeviceGraph, find_crosses, spin_echo_times
from .schedule import Drive, Feedforward, FreeEvolve, Instant, Measure, PulseSchedule, Step
from .stabilizer import GraphStateCertificate

__all__ = [
    "FailureModel",
    "prepare_plus",
    "cz_feedforward",
    "switching_cz",
    "echo_cz_pair",
    "chain_cz_5",
    "cross_cz",
    "generate_1d",
    "generate_2d",
    "generate_3d_bilayer",
    "bilayer_layers",
    "reset_schedule",
    "apply_failure_model",
    "residual_excited_state",
]

_REL = 1e-12


def prepare_plus(q: int, ideal: bool = True, lam: float | None = None) -> list[Step]:
    """Rotate ``q`` from ground to ``|+>``: instant ``Ry(-pi/2)`` or a finite drive."""
    if ideal:
        return [Instant("Ry", q, -math.pi / 2)]
    if lam is None or lam <= 0:
        raise ValueError("physical mode needs a positive Rabi frequency")
    return [Drive(sv.DrivePulse(q, lam, math.pi / 2, math.pi / (2 * lam)))]


def cz_feedforward(key: str, a: int, b: int, c: int) -> Feedforward:
    """Outcome-dependent correction after measuring ancilla ``b`` in Y."""
    return Feedforward(
        (key,),
        {
            (1,): (Instant("S+", a), Instant("Rx", b, -math.pi / 2), Instant("S+", c)),
            (-1,): (Instant("S-", a), Instant("Rx", b, math.pi / 2), Instant("S-", c)),
        },
    )


def _key(b: int, tag: str) -> str:
    return f"{tag}y{b}"


def _require_ancilla_between(graph: DeviceGraph, a: int, b: int, c: int) -> None:
    if graph.role(b).is_main:
        raise ValueError(f"qubit {b} is not an ancilla")
    if sorted(graph.neighbors(b)) != sorted((a, c)) or a == c:
        raise ValueError(f"ancilla {b} must be adjacent to exactly {a} and {c}")


def switching_cz(
    graph: DeviceGraph,
    a: int,
    b: int,
    c: int,
    ideal: bool = True,
    lam: float | None = None,
    *,
    tag: str = "",
) -> PulseSchedule:
    """CZ between ``a`` and ``c`` through ancilla ``b`` with equal couplings."""
    _require_ancilla_between(graph, a, b, c)
    g1, g2 = graph.coupling(a, b), graph.coupling(b, c)
    if not math.isclose(g1, g2, rel_tol=1e-12):
        raise ValueError(f"unequal couplings {g1} and {g2}; use echo_cz_pair")
    key = _key(b, tag)
    steps = [
        *prepare_plus(b, ideal, lam),
        FreeEvolve(math.pi / g1),
        Measure(b, "Y", key),
        cz_feedforward(key, a, b, c),
    ]
    return PulseSchedule(steps, f"switching_cz({a},{b},{c})")


def _echo_block(graph: DeviceGraph, a: int, b: int, c: int, key: str) -> list[Step]:
    """Echo steps after ``b`` is already in ``|+>``."""
    timing = spin_echo_times(graph.coupling(a, b), graph.coupling(b, c))
    flip = c if timing.swapped else a
    steps: list[Step] = [FreeEvolve(timing.t1)]
    if timing.t2 > 0:
        steps += [
            Instant("X", flip),
            FreeEvolve(timing.t2),
            Instant("X", flip),
            # the flipped end leaves exp(-i g1 t2 n_b) behind on the ancilla
            Instant("P", b, timing.g1 * timing.t2),
        ]
    return steps


def echo_cz_pair(
    graph: DeviceGraph,
    a: int,
    b: int,
    c: int,
    g1: float | None = None,
    g2: float | None = None,
    *,
    always_echo: bool = False,
    tag: str = "",
) -> PulseSchedule:
    """CZ through ``b`` for unequal couplings using a refocusing pulse pair.

    ``g1``/``g2`` default to the graph couplings and must agree with them if
    given.  With equal couplings the pulse pair is dropped unless
    ``always_echo`` is set, in which case it is kept with ``t2 = 0``.
    """
    _require_ancilla_between(graph, a, b, c)
    for given, actual in ((g1, graph.coupling(a, b)), (g2, graph.coupling(b, c))):
        if given is not None and not math.isclose(given, actual, rel_tol=1e-12):
            raise ValueError(f"coupling {given} does not match the device value {actual}")
    key = _key(b, tag)
    block = _echo_block(graph, a, b, c, key)
    if always_echo and len(block) == 1:
        flip = a if graph.coupling(a, b) >= graph.coupling(b, c) else c
        block += [Instant("X", flip), FreeEvolve(0.0), Instant("X", flip)]
    steps = [*prepare_plus(b), *block, Measure(b, "Y", key), cz_feedforward(key, a, b, c)]
    return PulseSchedule(steps, f"echo_cz_pair({a},{b},{c})")


def _require_path(graph: DeviceGraph, path: Sequence[int]) -> None:
    for x, y in zip(path, path[1:]):
        if not graph.has_edge(x, y):
            raise ValueError(f"no coupling between {x} and {y}")
    if any(graph.role(q).is_main for q in path[1:-1]):
        raise ValueError("interior qubits of the path must be ancillas")


def chain_cz_5(
    graph: DeviceGraph, a: int, b: int, c: int, d: int, e: int, *, tag: str = ""
) -> PulseSchedule:
    """CZ between ``a`` and ``e`` along ``a - b - c - d - e``.

    ``c`` is put in ``|+>`` and entangled with both ends through echo blocks
    on ``b`` and ``d``; measuring ``c`` in Y then transfers the phase to
    ``CZ_ae``.  ``c`` may have further ancilla neighbours as long as they
    are in the ground state.
    """
    path = (a, b, c, d, e)
    if len(set(path)) != 5:
        raise ValueError("path qubits must be distinct")
    _require_path(graph, path)
    for x, left, right in ((b, a, c), (d, c, e)):
        _require_ancilla_between(graph, left, x, right)
    kb, kc, kd = _key(b, tag), _key(c, tag), _key(d, tag)
    steps: list[Step] = [*prepare_plus(c)]
    for left, x, right, key in ((a, b, c, kb), (c, d, e, kd)):
        steps += [*prepare_plus(x), *_echo_block(graph, left, x, right, key)]
        steps += [Measure(x, "Y", key), cz_feedforward(key, left, x, right)]
    steps += [Measure(c, "Y", kc), cz_feedforward(kc, a, c, e)]
    return PulseSchedule(steps, f"chain_cz_5({a},{b},{c},{d},{e})")


def cross_cz(graph: DeviceGraph, pair: tuple[int, int], *, tag: str = "") -> PulseSchedule:
    """CZ between two main qubits of a cross through its centre ancilla."""
    a, e = pair
    for cross in find_crosses(graph):
        if a in cross.mains and e in cross.mains and a != e:
            return chain_cz_5(graph, *cross.path(a, e), tag=tag)
    raise ValueError(f"no cross contains the main-qubit pair {pair}")


# -- cluster-state generation ------------------------------------------------


def _ancilla_between(graph: DeviceGraph, a: int, c: int) -> int:
    common = [
        q
        for q in set(graph.neighbors(a)) & set(graph.neighbors(c))
        if not graph.role(q).is_main and len(graph.neighbors(q)) == 2
    ]
    if len(common) != 1:
        raise ValueError(f"main qubits {a} and {c} do not share a single ancilla")
    return common[0]


def _is_uniform(graph: DeviceGraph, edges: Sequence[tuple[int, int]]) -> bool:
    gs = [graph.coupling(*e) for e in edges]
    return max(gs) - min(gs) <= _REL * max(gs)


def _link_edges(graph: DeviceGraph, pairs: Sequence[tuple[int, int]]) -> list[tuple[int, int]]:
    out = []
    for a, c in pairs:
        b = _ancilla_between(graph, a, c)
        out += [(a, b), (b, c)]
    return out


def _uniform_links(
    graph: DeviceGraph, pairs: Sequence[tuple[int, int]], mains: Sequence[int]
) -> list[Step]:
    """All links at once: every ancilla in ``|+>``, one free evolution,
    then measurement and feedforward ancilla by ancilla in id order."""
    triples = sorted(((_ancilla_between(graph, a, c), a, c) for a, c in pairs))
    g = graph.coupling(triples[0][1], triples[0][0])
    steps: list[Step] = [s for q in mains for s in prepare_plus(q)]
    steps += [s for b, _, _ in triples for s in prepare_plus(b)]
    steps.append(FreeEvolve(math.pi / g))
    for b, a, c in triples:
        key = _key(b, "")
        steps += [Measure(b, "Y", key), cz_feedforward(key, a, b, c)]
    return steps


def _echo_links(graph: DeviceGraph, pairs: Sequence[tuple[int, int]]) -> list[Step]:
    """One echo CZ per pair, run back to back."""
    steps: list[Step] = []
    for a, c in pairs:
        b = _ancilla_between(graph, a, c)
        key = _key(b, "")
        steps += [*prepare_plus(b), *_echo_block(graph, a, b, c, key)]
        steps += [Measure(b, "Y", key), cz_feedforward(key, a, b, c)]
    return steps


def _resolve_mode(graph: DeviceGraph, pairs, asymmetric: bool | None) -> bool:
    uniform = _is_uniform(graph, _link_edges(graph, pairs))
    if asymmetric is None:
        return not uniform
    if not asymmetric and not uniform:
        raise ValueError("couplings are not uniform; the simultaneous protocol needs equal g")
    return asymmetric


def generate_1d(graph: DeviceGraph, asymmetric: bool | None = None) -> PulseSchedule:
    """1D cluster state on the main qubits of a :func:`build_chain` device.

    ``asymmetric=None`` picks the echo protocol when couplings differ.  The
    echo protocol first links main qubits ``(2k, 2k+1)`` and then
    ``(2k+1, 2k+2)``, counting main qubits from zero.
    """
    mains = graph.main_qubits()
    m = len(mains)
    if m < 2 or m % 2:
        raise ValueError(f"need an even number of main qubits, got {m}")
    pairs = [(mains[i], mains[i + 1]) for i in range(m - 1)]
    asym = _resolve_mode(graph, pairs, asymmetric)
    cert = GraphStateCertificate(tuple(mains), tuple(pairs))
    if not asym:
        steps = _uniform_links(graph, pairs, mains)
    else:
        ordered = pairs[0::2] + pairs[1::2]
        steps = [s for q in mains for s in prepare_plus(q)] + _echo_links(graph, ordered)
    label = f"generate_1d(m={m}, {'echo' if asym else 'uniform'})"
    return PulseSchedule(steps, label, cert)


def _lattice_mains(graph: DeviceGraph) -> dict[tuple[int, int], int]:
    grid = {}
    for q in graph.qubits:
        if q.role.is_main:
            if q.coord is None or q.coord[0] % 2 or q.coord[1] % 2:
                raise ValueError(f"qubit {q.id} is not on a lattice site")
            grid[(q.coord[0] // 2, q.coord[1] // 2)] = q.id
    return grid


def generate_2d(graph: DeviceGraph, asymmetric: bool | None = None) -> PulseSchedule:
    """2D cluster state on the main qubits of a :func:`build_2d_lattice` device.

    Uniform couplings use the one-shot protocol.  Otherwise four echo
    rounds: vertical links on rows ``(2k, 2k+1)``, vertical links on rows
    ``(2k+1, 2k+2)``, horizontal links whose left end is a syndrome qubit,
    and the remaining horizontal links.
    """
    grid = _lattice_mains(graph)
    m = int(round(math.sqrt(len(grid))))
    if m * m != len(grid) or set(grid) != {(r, c) for r in range(m) for c in range(m)}:
        raise ValueError("main qubits do not form a square grid")
    if m % 2:
        raise ValueError(f"m must be even, got {m}")
    vertical = [((r, c), (r + 1, c)) for r in range(m - 1) for c in range(m)]
    horizontal = [((r, c), (r, c + 1)) for r in range(m) for c in range(m - 1)]
    rounds = [
        [p for p in vertical if p[0][0] % 2 == 0],
        [p for p in vertical if p[0][0] % 2 == 1],
        [p for p in horizontal if sum(p[0]) % 2 == 1],
        [p for p in horizontal if sum(p[0]) % 2 == 0],
    ]
    ids = [[(grid[x], grid[y]) for x, y in rnd] for rnd in rounds]
    pairs = [p for rnd in ids for p in rnd]
    mains = sorted(grid.values())
    asym = _resolve_mode(graph, pairs, asymmetric)
    cert = GraphStateCertificate(tuple(mains), tuple(pairs))
    if not asym:
        steps = _uniform_links(graph, pairs, mains)
    else:
        steps = [s for q in mains for s in prepare_plus(q)] + _echo_links(graph, pairs)
    label = f"generate_2d(m={m}, {'echo' if asym else 'uniform'})"
    return PulseSchedule(steps, label, cert)


@dataclass(frozen=True)
class BilayerPlan:
    """Main-qubit pairs linked by each stage of bilayer generation."""

    vertical_even: tuple[tuple[int, int], ...]
    vertical_odd: tuple[tuple[int, int], ...]
    rungs: tuple[tuple[int, int], ...]
    slants: tuple[tuple[int, int], ...]
    layers: tuple[tuple[int, ...], tuple[int, ...]]

    @property
    def layer_edges(self) -> tuple[tuple[int, int], ...]:
        return self.vertical_even + self.vertical_odd + self.rungs


def bilayer_layers(graph: DeviceGraph) -> BilayerPlan:
    """Recover the generation plan from a :func:`build_bilayer_unit` device.

    Main qubits sit on a grid with spacing 4; columns alternate between
    the two layers in the pattern ``A B | B A | A B ...``.
    """
    sites = {}
    for q in graph.qubits:
        if q.role.is_main:
            if q.coord is None or q.coord[0] % 4 or q.coord[1] % 4:
                raise ValueError(f"qubit {q.id} is not on a bilayer site")
            sites[(q.coord[0] // 4, q.coord[1] // 4)] = q.id
    if not sites:
        raise ValueError("graph has no main qubits")
    rows = 1 + max(r for r, _ in sites)
    cols = 1 + max(c for _, c in sites)
    if rows != 3 or cols % 2 or len(sites) != rows * cols:
        raise ValueError("malformed bilayer graph")
    layer_of = {c: ((c + 1) // 2) % 2 for c in range(cols)}

    def linked(x, y) -> tuple[int, int]:
        pair = (sites[x], sites[y])
        _ancilla_between(graph, *pair)
        return pair

    vertical_even = tuple(linked((0, c), (1, c)) for c in range(cols))
    vertical_odd = tuple(linked((1, c), (2, c)) for c in range(cols))
    rungs = tuple(
        linked((r, c), (r, c + 1)) for c in range(1, cols - 1, 2) for r in range(rows)
    )
    slants = []
    crosses = find_crosses(graph)
    for cross in crosses:
        logical = [q for q in cross.mains if graph.role(q).value == "logical"]
        if len(logical) != 2:
            raise ValueError(f"cross at {cross.centre} does not join two logical qubits")
        slants.append(tuple(sorted(logical)))
    if len(crosses) != cols:
        raise ValueError(f"expected {cols} crosses, found {len(crosses)}")
    layers = tuple(
        tuple(sorted(q for (r, c), q in sites.items() if layer_of[c] == k)) for k in (0, 1)
    )
    return BilayerPlan(vertical_even, vertical_odd, rungs, tuple(slants), layers)


def generate_3d_bilayer(graph: DeviceGraph, *, stop_after: int = 3) -> PulseSchedule:
    """Bilayer slice of the 3D cluster state.

    Stage 1 links every column into a vertical chain, stage 2 adds the
    in-layer rungs between neighbouring tiles, stage 3 joins the layers with
    one cross CZ per face.  ``stop_after`` truncates the schedule (and the
    attached certificate) after the given stage.
    """
    if stop_after not in (1, 2, 3):
        raise ValueError("stop_after must be 1, 2 or 3")
    plan = bilayer_layers(graph)
    mains = graph.main_qubits()
    steps: list[Step] = [s for q in mains for s in prepare_plus(q)]
    steps += _echo_links(graph, plan.vertical_even + plan.vertical_odd)
    edges = list(plan.vertical_even + plan.vertical_odd)
    if stop_after >= 2:
        steps += _echo_links(graph, plan.rungs)
        edges += plan.rungs
    if stop_after >= 3:
        for pair in plan.slants:
            steps += cross_cz(graph, pair).steps
        edges += plan.slants
    cert = GraphStateCertificate(tuple(mains), tuple(edges))
    return PulseSchedule(steps, f"generate_3d_bilayer(stage={stop_after})", cert)


def reset_schedule(qubits: Sequence[int], tag: str = "reset") -> PulseSchedule:
    """Measure each qubit in Z and flip it back to ground if it was excited."""
    steps: list[Step] = []
    for q in qubits:
        key = f"{tag}z{q}"
        steps += [Measure(q, "Z", key), Feedforward((key,), {(1,): (Instant("X", q),)})]
    return PulseSchedule(steps, "reset")


# -- measurement failure -----------------------------------------------------


@dataclass(frozen=True)
class FailureModel:
    """Probability that the measurement or feedforward on the ancilla fails."""

    epsilon_m: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.epsilon_m <= 1.0:
            raise ValueError(f"epsilon_m must lie in [0, 1], got {self.epsilon_m}")


def residual_excited_state(
    ideal: sv.StateVector, graph: DeviceGraph, b: int, t: float
) -> sv.StateVector:
    """Ideal output with ancilla ``b`` left excited and evolved for ``t``."""
    flipped = sv.apply_instant_gate(ideal, b, "X")
    return sv.evolve_diagonal(flipped, graph, t)


def apply_failure_model(
    ideal: sv.StateVector,
    graph: DeviceGraph,
    a: int,
    b: int,
    c: int,
    model: FailureModel,
    t: float,
) -> np.ndarray:
    """Reduced state of ``(a, c)`` under the failure mixture.

    With weight ``1 - epsilon_m`` the switching protocol succeeded and
    ``ideal`` is the output; with weight ``epsilon_m`` the ancilla was left
    excited and the always-on coupling acted on ``a`` and ``c`` for ``t``.
    """
    rho_ok = sv.reduced_density(ideal, (a, c))
    rho_bad = sv.reduced_density(residual_excited_state(ideal, graph, b, t), (a, c))
    eps = model.epsilon_m
    return (1 - eps) * rho_ok + eps * rho_bad
