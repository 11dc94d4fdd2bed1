"""Pulse schedules as plain data, and executors for both backends.

A schedule is an ordered list of steps.  Measurements carry a string key;
feedforward steps look up earlier keys and pick a list of instant gates from
an explicit branch table.  Nothing in a schedule is a closure, so the same
schedule can be replayed on the dense engine, on the tableau engine, or
written to JSON.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

import numpy as np

from . import statevector as sv
from .device import DeviceGraph
from .stabilizer import GraphStateCertificate, NonCliffordError, PauliString, StabilizerTableau

__all__ = [
    "FreeEvolve",
    "Drive",
    "Instant",
    "Measure",
    "Feedforward",
    "Step",
    "PulseSchedule",
    "RunRecord",
    "run_dense",
    "run_tableau",
    "TableauRunner",
]


@dataclass(frozen=True)
class FreeEvolve:
    duration: float

    def __post_init__(self) -> None:
        if self.duration < 0:
            raise ValueError("durations must be non-negative")


@dataclass(frozen=True)
class Drive:
    pulse: sv.DrivePulse


@dataclass(frozen=True)
class Instant:
    gate: str
    qubit: int
    angle: float | None = None


@dataclass(frozen=True)
class Measure:
    qubit: int
    basis: str
    key: str


@dataclass(frozen=True)
class Feedforward:
    """Gates chosen by the outcomes of earlier measurements.

    ``branches`` maps a tuple of outcomes (one per key, in order) to the
    gates to apply; patterns missing from the table apply nothing.
    """

    keys: tuple[str, ...]
    branches: Mapping[tuple[int, ...], tuple[Instant, ...]]


Step = Union[FreeEvolve, Drive, Instant, Measure, Feedforward]


@dataclass
class PulseSchedule:
    steps: list[Step] = field(default_factory=list)
    label: str = ""
    certificate: GraphStateCertificate | None = None

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for step in self.steps:
            self._check(step, seen)

    @staticmethod
    def _check(step: Step, seen: set[str]) -> None:
        if isinstance(step, Measure):
            if step.key in seen:
                raise ValueError(f"measurement key {step.key!r} used twice")
            seen.add(step.key)
        elif isinstance(step, Feedforward):
            missing = [k for k in step.keys if k not in seen]
            if missing:
                raise ValueError(f"feedforward references unknown measurements {missing}")

    def append(self, step: Step) -> None:
        self._check(step, {s.key for s in self.steps if isinstance(s, Measure)})
        self.steps.append(step)

    def extend(self, steps: Iterable[Step]) -> None:
        for step in steps:
            self.append(step)

    def __add__(self, other: PulseSchedule) -> PulseSchedule:
        return PulseSchedule(
            [*self.steps, *other.steps], self.label or other.label, other.certificate or self.certificate
        )

    def __iter__(self):
        return iter(self.steps)

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def duration(self) -> float:
        total = 0.0
        for step in self.steps:
            if isinstance(step, FreeEvolve):
                total += step.duration
            elif isinstance(step, Drive):
                total += step.pulse.duration
        return total

    def measured_qubits(self) -> list[int]:
        return [s.qubit for s in self.steps if isinstance(s, Measure)]

    def count_pi_pulses(self) -> int:
        """Refocusing pulses: instant X / Rx(pi) or drives of area pi."""
        count = 0
        for step in self.steps:
            if isinstance(step, Instant):
                if step.gate == "X" or (
                    step.gate == "Rx" and math.isclose(abs(step.angle or 0.0), math.pi)
                ):
                    count += 1
            elif isinstance(step, Drive):
                p = step.pulse
                if math.isclose(p.lam * p.duration, math.pi, rel_tol=1e-9):
                    count += 1
        return count

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        out = []
        for s in self.steps:
            if isinstance(s, FreeEvolve):
                out.append({"type": "free", "duration": s.duration})
            elif isinstance(s, Drive):
                p = s.pulse
                out.append(
                    {
                        "type": "drive",
                        "qubit": p.qubit,
                        "lambda": p.lam,
                        "theta": p.theta,
                        "duration": p.duration,
                        "frame_shift": p.frame_shift,
                    }
                )
            elif isinstance(s, Instant):
                out.append(_instant_dict(s))
            elif isinstance(s, Measure):
                out.append({"type": "measure", "qubit": s.qubit, "basis": s.basis, "key": s.key})
            else:
                out.append(
                    {
                        "type": "feedforward",
                        "keys": list(s.keys),
                        "branches": [
                            {"outcomes": list(pattern), "gates": [_instant_dict(g) for g in gates]}
                            for pattern, gates in s.branches.items()
                        ],
                    }
                )
        data = {"label": self.label, "time_unit": "T2", "steps": out}
        if self.certificate is not None:
            data["certificate"] = {
                "vertices": list(self.certificate.vertices),
                "edges": [list(e) for e in self.certificate.edges],
            }
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, data: Mapping) -> PulseSchedule:
        steps: list[Step] = []
        for d in data["steps"]:
            kind = d["type"]
            if kind == "free":
                steps.append(FreeEvolve(float(d["duration"])))
            elif kind == "drive":
                steps.append(
                    Drive(
                        sv.DrivePulse(
                            int(d["qubit"]),
                            float(d["lambda"]),
                            float(d["theta"]),
                            float(d["duration"]),
                            float(d.get("frame_shift", 0.0)),
                        )
                    )
                )
            elif kind == "instant":
                steps.append(_instant_from(d))
            elif kind == "measure":
                steps.append(Measure(int(d["qubit"]), d["basis"], d["key"]))
            elif kind == "feedforward":
                branches = {
                    tuple(int(o) for o in b["outcomes"]): tuple(_instant_from(g) for g in b["gates"])
                    for b in d["branches"]
                }
                steps.append(Feedforward(tuple(d["keys"]), branches))
            else:
                raise ValueError(f"unknown step type {kind!r}")
        cert = data.get("certificate")
        if cert is not None:
            cert = GraphStateCertificate(
                tuple(cert["vertices"]), tuple(tuple(e) for e in cert["edges"])
            )
        return cls(steps, data.get("label", ""), cert)

    @classmethod
    def from_json(cls, text: str) -> PulseSchedule:
        return cls.from_dict(json.loads(text))


def _instant_dict(s: Instant) -> dict:
    d = {"type": "instant", "gate": s.gate, "qubit": s.qubit}
    if s.angle is not None:
        d["angle"] = s.angle
    return d


def _instant_from(d: Mapping) -> Instant:
    angle = d.get("angle")
    return Instant(d["gate"], int(d["qubit"]), None if angle is None else float(angle))


@dataclass
class RunRecord:
    """Outcome log of one execution, keyed by measurement key."""

    outcomes: dict[str, int] = field(default_factory=dict)
    probabilities: dict[str, float] = field(default_factory=dict)
    deterministic: dict[str, bool] = field(default_factory=dict)
    qubits: dict[str, int] = field(default_factory=dict)


Force = Union[int, Mapping[str, int], None]


def _forced(force: Force, key: str) -> int | None:
    if force is None or isinstance(force, int):
        return force
    return force.get(key, force.get("*"))


def _branch(step: Feedforward, record: RunRecord) -> tuple[Instant, ...]:
    pattern = tuple(record.outcomes[k] for k in step.keys)
    return tuple(step.branches.get(pattern, ()))


def run_dense(
    schedule: PulseSchedule,
    graph: DeviceGraph,
    state: sv.StateVector,
    *,
    force: Force = None,
    rng: np.random.Generator | None = None,
) -> tuple[sv.StateVector, RunRecord]:
    """Execute on the dense engine.

    ``force`` is a single outcome for every measurement, or a mapping from
    measurement key to outcome (key ``"*"`` is the default); unforced
    measurements are sampled from ``rng``.
    """
    record = RunRecord()
    for step in schedule:
        if isinstance(step, FreeEvolve):
            state = sv.evolve_diagonal(state, graph, step.duration)
        elif isinstance(step, Drive):
            state = sv.evolve_driven(state, graph, step.pulse)
        elif isinstance(step, Instant):
            state = sv.apply_instant_gate(state, step.qubit, step.gate, step.angle)
        elif isinstance(step, Measure):
            rec, state = sv.measure(
                state, step.qubit, step.basis, force=_forced(force, step.key), rng=rng
            )
            record.outcomes[step.key] = rec.outcome
            record.probabilities[step.key] = rec.probability
            record.deterministic[step.key] = rec.probability > 1 - 1e-12
            record.qubits[step.key] = step.qubit
        else:
            for gate in _branch(step, record):
                state = sv.apply_instant_gate(state, gate.qubit, gate.gate, gate.angle)
    return state, record


class TableauRunner:
    """Replays schedules on a stabilizer tableau.

    Free evolution, ``Z``, ``S+-`` and ``P`` gates are all diagonal, so they
    are collected as a pending phase polynomial
    ``exp(-i [sum theta_ab n_a n_b + sum phi_a n_a])`` instead of being applied
    one by one.  Instant X gates are pushed through it (``n -> 1 - n``).  Only
    when a non-diagonal operation touches a qubit are the terms on that
    qubit written into the tableau; at that point they must be Clifford,
    after dropping terms on qubits that are deterministically in the ground
    state.  This is what lets an echo block with arbitrary couplings, whose
    intermediate phases are not multiples of pi/2, run on a tableau.
    """

    def __init__(self, graph: DeviceGraph, tableau: StabilizerTableau | None = None) -> None:
        self.graph = graph
        self.tab = tableau if tableau is not None else StabilizerTableau(graph.n)
        if self.tab.n != graph.n:
            raise ValueError("tableau and graph sizes differ")
        self.quad: dict[tuple[int, int], float] = {}
        self.lin: dict[int, float] = {}
        self._energy_edges = dict(graph.edges)
        self._energy_local = {
            q: graph.detuning(q) - 0.5 * sum(graph.coupling(q, j) for j in graph.neighbors(q))
            for q in range(graph.n)
        }

    def _add_quad(self, a: int, b: int, theta: float) -> None:
        key = (min(a, b), max(a, b))
        self.quad[key] = self.quad.get(key, 0.0) + theta

    def _add_lin(self, q: int, phi: float) -> None:
        self.lin[q] = self.lin.get(q, 0.0) + phi

    def free_evolve(self, duration: float) -> None:
        for (a, b), g in self._energy_edges.items():
            self._add_quad(a, b, g * duration)
        for q, local in self._energy_local.items():
            if local:
                self._add_lin(q, local * duration)

    def diagonal_gate(self, gate: str, q: int, angle: float | None) -> bool:
        """Absorb a diagonal gate; returns False if the gate is not diagonal."""
        # exp(-i phi n) = diag(1, e^{-i phi}) up to global phase
        if gate == "Z":
            self._add_lin(q, math.pi)
        elif gate == "S+":
            self._add_lin(q, -math.pi / 2)
        elif gate == "S-":
            self._add_lin(q, math.pi / 2)
        elif gate == "P":
            self._add_lin(q, -float(angle))
        elif gate == "Rz":
            self._add_lin(q, float(angle))
        else:
            return False
        return True

    def flip(self, q: int) -> None:
        """Apply X on ``q`` and conjugate the pending phases through it."""
        for key in [k for k in self.quad if q in k]:
            theta = self.quad[key]
            other = key[0] if key[1] == q else key[1]
            self.quad[key] = -theta
            self._add_lin(other, theta)
        if q in self.lin:
            self.lin[q] = -self.lin[q]
        self.tab.x_(q)

    def _is_ground(self, q: int) -> bool:
        return self.tab.expectation(PauliString({q: "Z"})) == -1

    def _is_excited(self, q: int) -> bool:
        return self.tab.expectation(PauliString({q: "Z"})) == 1

    def flush(self, q: int) -> None:
        """Write every pending term involving ``q`` into the tableau."""
        for key in sorted(k for k in self.quad if q in k):
            theta = self.quad.pop(key)
            a, b = key
            k = _reduce_mod(theta, math.pi)
            if k is None:
                # non-Clifford phase: harmless only if one end is frozen
                other = b if a == q else a
                if self._is_ground(other) or self._is_ground(q):
                    continue
                if self._is_excited(other):
                    self._add_lin(q, theta)
                    continue
                if self._is_excited(q):
                    self._add_lin(other, theta)
                    continue
                raise NonCliffordError(
                    f"pending Ising phase {theta:.6g} on edge {key} is not a multiple of pi"
                )
            if k % 2:
                self.tab.cz(a, b)
        if q in self.lin:
            phi = self.lin.pop(q)
            k = _reduce_mod(phi, math.pi / 2)
            if k is None:
                if self._is_ground(q):
                    return
                raise NonCliffordError(
                    f"pending phase {phi:.6g} on qubit {q} is not a multiple of pi/2"
                )
            # exp(-i k pi/2 n) = S^{-k}
            for _ in range((-k) % 4):
                self.tab.s(q)

    def instant(self, gate: str, q: int, angle: float | None = None) -> None:
        if self.diagonal_gate(gate, q, angle):
            return
        if gate == "X" or (gate == "Rx" and angle is not None and _reduce_mod(angle, math.pi) == 1):
            self.flip(q)
            return
        self.flush(q)
        self.tab.apply_clifford(gate, q, angle)

    def measure(self, q: int, basis: str, *, force=None, rng=None):
        if basis != "Z":
            self.flush(q)
        return self.tab.measure_pauli(q, basis, force=force, rng=rng)

    def settle(self) -> None:
        """Flush everything still pending."""
        qubits = {q for k in self.quad for q in k} | set(self.lin)
        for q in sorted(qubits):
            self.flush(q)


def _reduce_mod(angle: float, period: float) -> int | None:
    k = angle / period
    nearest = round(k)
    if abs(k - nearest) > 1e-9 * max(1.0, abs(k)):
        return None
    return int(nearest) % int(round(2 * math.pi / period))


def run_tableau(
    schedule: PulseSchedule,
    graph: DeviceGraph,
    tableau: StabilizerTableau | None = None,
    *,
    force: Force = None,
    rng: np.random.Generator | None = None,
) -> tuple[StabilizerTableau, RunRecord]:
    """Execute an ideal (instant-gate) schedule on a tableau.

    The tableau is modified in place and returned with all pending phases
    flushed.  Drive steps are rejected.
    """
    runner = TableauRunner(graph, tableau)
    record = RunRecord()
    for step in schedule:
        if isinstance(step, FreeEvolve):
            runner.free_evolve(step.duration)
        elif isinstance(step, Drive):
            raise NonCliffordError("finite-amplitude drives cannot run on the tableau backend")
        elif isinstance(step, Instant):
            runner.instant(step.gate, step.qubit, step.angle)
        elif isinstance(step, Measure):
            out = runner.measure(step.qubit, step.basis, force=_forced(force, step.key), rng=rng)
            record.outcomes[step.key] = out.outcome
            record.probabilities[step.key] = out.probability
            record.deterministic[step.key] = out.deterministic
            record.qubits[step.key] = step.qubit
        else:
            for gate in _branch(step, record):
                runner.instant(gate.gate, gate.qubit, gate.angle)
    runner.settle()
    return runner.tab, record
