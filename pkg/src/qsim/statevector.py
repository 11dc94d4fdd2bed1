"""Dense state-vector simulation of the rotating-frame Ising model.

Basis convention: bit value 0 is the ground state and 1 the excited state.
Qubit 0 is the most significant bit of the amplitude index.  Pauli operators
follow the Hamiltonian's convention, ``(1 + Z)/2`` projects on the excited
state, so in the (ground, excited) basis::

    X = [[0, 1], [1, 0]]    Y = [[0, i], [-i, 0]]    Z = [[-1, 0], [0, 1]]

Measurement outcomes are eigenvalues of these operators.  Global phases are
never tracked.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping

import numpy as np

from .device import DeviceGraph

__all__ = [
    "MAX_QUBITS",
    "PAULI",
    "StateVector",
    "DrivePulse",
    "MeasurementRecord",
    "ZeroProbabilityError",
    "single_qubit_state",
    "init_product_state",
    "diagonal_energies",
    "evolve_diagonal",
    "evolve_driven",
    "gate_matrix",
    "apply_instant_gate",
    "apply_matrix",
    "measure",
    "fidelity",
    "reduced_density",
    "pauli_expectation",
    "excitation_probability",
    "dephasing_trajectories",
    "dump_state",
    "load_state",
]

MAX_QUBITS = 24
MAX_KEEP = 6

_SQ2 = 1 / math.sqrt(2)

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, 1j], [-1j, 0]], dtype=complex),
    "Z": np.array([[-1, 0], [0, 1]], dtype=complex),
}

_SINGLE = {
    "ground": np.array([1, 0], dtype=complex),
    "excited": np.array([0, 1], dtype=complex),
    "plus": np.array([_SQ2, _SQ2], dtype=complex),
    "minus": np.array([_SQ2, -_SQ2], dtype=complex),
    # +1 / -1 eigenvectors of Y above
    "plus_i": np.array([_SQ2, -1j * _SQ2], dtype=complex),
    "minus_i": np.array([_SQ2, 1j * _SQ2], dtype=complex),
}


class ZeroProbabilityError(ValueError):
    """A forced measurement outcome has zero probability."""


@dataclass(frozen=True, eq=False)
class StateVector:
    n: int
    amps: np.ndarray

    def __post_init__(self) -> None:
        if not 1 <= self.n <= MAX_QUBITS:
            raise ValueError(f"dense states support 1..{MAX_QUBITS} qubits, got {self.n}")
        amps = np.asarray(self.amps, dtype=complex).reshape(-1)
        if amps.size != 2**self.n:
            raise ValueError(f"expected {2**self.n} amplitudes, got {amps.size}")
        norm = np.vdot(amps, amps).real
        if abs(norm - 1) > 1e-10:
            raise ValueError(f"state is not normalized (norm^2 = {norm})")
        object.__setattr__(self, "amps", amps)

    def tensor(self) -> np.ndarray:
        return self.amps.reshape((2,) * self.n)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))


@dataclass(frozen=True)
class DrivePulse:
    """Constant-amplitude microwave drive on one qubit.

    In the frame of the drive the qubit sees ``(lam/2) A(theta)`` with
    ``A(theta) = [[0, exp(-i theta)], [exp(i theta), 0]]``; ``theta = pi/2``
    rotates ground into ``|+>``, ``theta = 0`` is an X rotation.
    ``frame_shift`` offsets the drive frequency from the qubit's frame and
    enters as an extra static detuning.
    """

    qubit: int
    lam: float
    theta: float
    duration: float
    frame_shift: float = 0.0

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ValueError("Rabi frequency must be non-negative")
        if self.duration < 0:
            raise ValueError("duration must be non-negative")


@dataclass(frozen=True)
class MeasurementRecord:
    qubit: int
    basis: str
    outcome: int
    probability: float


def single_qubit_state(label: str) -> np.ndarray:
    try:
        return _SINGLE[label].copy()
    except KeyError:
        raise ValueError(f"unknown single-qubit state {label!r}") from None


def init_product_state(
    graph: DeviceGraph | int, assignment: Mapping[int, str | np.ndarray] | None = None
) -> StateVector:
    """Product state; unassigned qubits start in the ground state."""
    n = graph if isinstance(graph, int) else graph.n
    assignment = dict(assignment or {})
    unknown = set(assignment) - set(range(n))
    if unknown:
        raise ValueError(f"assignment references unknown qubits {sorted(unknown)}")
    amps = np.ones(1, dtype=complex)
    for q in range(n):
        spec = assignment.get(q, "ground")
        vec = single_qubit_state(spec) if isinstance(spec, str) else np.asarray(spec, dtype=complex)
        amps = np.kron(amps, vec / np.linalg.norm(vec))
    return StateVector(n, amps)


def _bits(n: int) -> np.ndarray:
    """``(2**n, n)`` table of excitation numbers."""
    idx = np.arange(2**n, dtype=np.int64)
    return ((idx[:, None] >> (n - 1 - np.arange(n))) & 1).astype(np.float64)


@lru_cache(maxsize=16)
def diagonal_energies(graph: DeviceGraph) -> np.ndarray:
    """Energy of every basis configuration with all drives off.

    ``E = sum_edges g n_a n_b + sum_l (omega_l - omega'_l - sum_j g_lj / 2) n_l``
    which equals the rotating-frame Ising Hamiltonian up to a constant.
    """
    n = graph.n
    if n > MAX_QUBITS:
        raise ValueError(f"graph has {n} qubits; dense simulation is capped at {MAX_QUBITS}")
    idx = np.arange(2**n, dtype=np.int64)
    occ = [((idx >> (n - 1 - q)) & 1).astype(np.float64) for q in range(n)]
    energy = np.zeros(2**n)
    for (a, b), g in graph.edges.items():
        energy += g * occ[a] * occ[b]
    for q in range(n):
        local = graph.detuning(q) - 0.5 * sum(graph.coupling(q, j) for j in graph.neighbors(q))
        if local:
            energy += local * occ[q]
    energy.flags.writeable = False
    return energy


def _check_graph(state: StateVector, graph: DeviceGraph) -> None:
    if graph.n != state.n:
        raise ValueError(f"state has {state.n} qubits but graph has {graph.n}")


def evolve_diagonal(state: StateVector, graph: DeviceGraph, duration: float) -> StateVector:
    """Exact free evolution: each configuration picks up ``exp(-i E t)``."""
    _check_graph(state, graph)
    if duration == 0:
        return state
    phases = np.exp(-1j * duration * diagonal_energies(graph))
    return StateVector(state.n, state.amps * phases)


def evolve_driven(state: StateVector, graph: DeviceGraph, pulse: DrivePulse) -> StateVector:
    """Exact evolution with one qubit driven and everything else diagonal.

    For each configuration of the undriven qubits the driven qubit sees a
    2x2 Hamiltonian ``E0 + [[0, b*], [b, h]]`` where ``h`` is the energy
    cost of exciting it given its neighbours and ``b = (lam/2) e^{i theta}``.
    Every block is exponentiated in closed form.
    """
    _check_graph(state, graph)
    q, n, t = pulse.qubit, state.n, pulse.duration
    energy = diagonal_energies(graph).reshape((2,) * n)
    e_all = np.moveaxis(energy, q, -1).reshape(-1, 2)
    e0 = e_all[:, 0]
    h = e_all[:, 1] - e0 - pulse.frame_shift
    psi = np.moveaxis(state.tensor(), q, -1).reshape(-1, 2)

    beta = 0.5 * pulse.lam * np.exp(1j * pulse.theta)
    omega = np.sqrt(0.25 * h**2 + abs(beta) ** 2)
    cos = np.cos(omega * t)
    # sin(omega t) / omega, finite at omega = 0
    sinc = t * np.sinc(omega * t / np.pi)
    phase = np.exp(-1j * (e0 + 0.5 * h) * t)
    # exp(-i K t) with K = [[-h/2, conj(beta)], [beta, h/2]]
    u00 = cos + 1j * sinc * 0.5 * h
    u11 = cos - 1j * sinc * 0.5 * h
    u01 = -1j * sinc * np.conj(beta)
    u10 = -1j * sinc * beta
    out = np.empty_like(psi)
    out[:, 0] = phase * (u00 * psi[:, 0] + u01 * psi[:, 1])
    out[:, 1] = phase * (u10 * psi[:, 0] + u11 * psi[:, 1])
    shape = list(state.tensor().shape)
    shape.append(shape.pop(q))
    amps = np.moveaxis(out.reshape(shape), -1, q).reshape(-1)
    return StateVector(n, amps)


def _rotation(axis: str, angle: float) -> np.ndarray:
    return math.cos(angle / 2) * PAULI["I"] - 1j * math.sin(angle / 2) * PAULI[axis]


def gate_matrix(gate: str, angle: float | None = None) -> np.ndarray:
    """2x2 unitary for an instantaneous gate.

    ``S+``/``S-`` are ``diag(1, +-i)`` and ``P`` is ``diag(1, e^{i angle})``
    (phase on the excited state).  ``H`` maps ground to ``|+>``.
    """
    if gate in ("X", "Y", "Z"):
        return PAULI[gate].copy()
    if gate == "S+":
        return np.diag([1, 1j]).astype(complex)
    if gate == "S-":
        return np.diag([1, -1j]).astype(complex)
    if gate == "H":
        return np.array([[1, 1], [1, -1]], dtype=complex) * _SQ2
    if gate in ("Rx", "Ry", "Rz", "P"):
        if angle is None:
            raise ValueError(f"gate {gate} needs an angle")
        if gate == "P":
            return np.diag([1, np.exp(1j * angle)]).astype(complex)
        return _rotation(gate[1].upper(), angle)
    raise ValueError(f"unknown gate {gate!r}")


def apply_matrix(state: StateVector, qubit: int, matrix: np.ndarray) -> StateVector:
    if not 0 <= qubit < state.n:
        raise ValueError(f"qubit {qubit} out of range for {state.n}-qubit state")
    psi = np.tensordot(matrix, state.tensor(), axes=([1], [qubit]))
    return StateVector(state.n, np.moveaxis(psi, 0, qubit).reshape(-1))


def apply_instant_gate(
    state: StateVector, qubit: int, gate: str, angle: float | None = None
) -> StateVector:
    return apply_matrix(state, qubit, gate_matrix(gate, angle))


def _projector(basis: str, outcome: int) -> np.ndarray:
    if basis not in ("X", "Y", "Z"):
        raise ValueError(f"basis must be X, Y or Z, got {basis!r}")
    if outcome not in (1, -1):
        raise ValueError(f"outcome must be +1 or -1, got {outcome}")
    return 0.5 * (PAULI["I"] + outcome * PAULI[basis])


def measure(
    state: StateVector,
    qubit: int,
    basis: str,
    *,
    force: int | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[MeasurementRecord, StateVector]:
    """Projective single-qubit measurement.

    Either ``force`` an outcome (``+1``/``-1``) or pass a seeded ``rng`` to
    sample one.  The record carries the pre-measurement probability.
    """
    if force is None and rng is None:
        raise ValueError("measurement needs either a forced outcome or an rng")
    projected = {s: apply_matrix_unchecked(state, qubit, _projector(basis, s)) for s in (1, -1)}
    probs = {s: float(np.vdot(v, v).real) for s, v in projected.items()}
    if force is not None:
        outcome = force
        if outcome not in probs:
            raise ValueError(f"outcome must be +1 or -1, got {force}")
        if probs[outcome] < 1e-14:
            raise ZeroProbabilityError(
                f"forced outcome {outcome:+d} on qubit {qubit} ({basis}) has zero probability"
            )
    else:
        outcome = 1 if rng.random() < probs[1] else -1
    p = min(max(probs[outcome], 0.0), 1.0)
    amps = projected[outcome] / math.sqrt(probs[outcome])
    return MeasurementRecord(qubit, basis, outcome, p), StateVector(state.n, amps)


def apply_matrix_unchecked(state: StateVector, qubit: int, matrix: np.ndarray) -> np.ndarray:
    """Apply a (possibly non-unitary) 2x2 matrix and return raw amplitudes."""
    psi = np.tensordot(matrix, state.tensor(), axes=([1], [qubit]))
    return np.moveaxis(psi, 0, qubit).reshape(-1)


def fidelity(a: StateVector, b: StateVector) -> float:
    """``|<a|b>|^2``."""
    if a.n != b.n:
        raise ValueError(f"dimension mismatch: {a.n} vs {b.n} qubits")
    return float(abs(np.vdot(a.amps, b.amps)) ** 2)


def reduced_density(state: StateVector, keep: Iterable[int]) -> np.ndarray:
    """Partial trace onto ``keep`` (at most six qubits), ordered as given."""
    keep = list(keep)
    if len(keep) > MAX_KEEP:
        raise ValueError(f"can keep at most {MAX_KEEP} qubits, got {len(keep)}")
    if len(set(keep)) != len(keep) or any(not 0 <= q < state.n for q in keep):
        raise ValueError(f"invalid keep set {keep}")
    rest = [q for q in range(state.n) if q not in keep]
    psi = np.transpose(state.tensor(), keep + rest).reshape(2 ** len(keep), -1)
    return psi @ psi.conj().T


def pauli_expectation(state: StateVector, ops: Mapping[int, str]) -> float:
    """``<psi| prod_q P_q |psi>`` for a Pauli string given as ``{qubit: "X"|"Y"|"Z"}``."""
    psi = state.tensor()
    for q, p in ops.items():
        psi = np.moveaxis(np.tensordot(PAULI[p], psi, axes=([1], [q])), 0, q)
    return float(np.vdot(state.amps, psi.reshape(-1)).real)


def excitation_probability(state: StateVector, qubit: int) -> float:
    t = np.moveaxis(state.tensor(), qubit, 0)
    return float(np.sum(np.abs(t[1]) ** 2))


def dephasing_trajectories(
    state: StateVector,
    graph: DeviceGraph,
    duration: float,
    t2: float,
    *,
    samples: int,
    intervals: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Free evolution with random phase flips, one trajectory per sample.

    The duration is cut into ``intervals`` equal slices; after each slice a Z
    is applied to every qubit independently with probability
    ``(1 - exp(-dt/t2)) / 2``.  Returns the ``(samples, 2**n)`` array of final
    amplitudes.
    """
    _check_graph(state, graph)
    dt = duration / intervals
    p_flip = 0.5 * (1 - math.exp(-dt / t2))
    slice_phase = np.exp(-1j * dt * diagonal_energies(graph))
    # sign pattern of Z on each qubit over the basis: +1 ground, -1 excited
    signs = 1 - 2 * _bits(state.n)
    psi = np.tile(state.amps, (samples, 1))
    for _ in range(intervals):
        psi *= slice_phase
        flips = rng.random((samples, state.n)) < p_flip
        # product over flipped qubits of the per-qubit sign
        factor = np.prod(np.where(flips[:, None, :], signs[None, :, :], 1.0), axis=2)
        psi *= factor
    return psi


def dump_state(state: StateVector) -> bytes:
    """Little-endian ``uint64`` qubit count followed by ``(re, im)`` float64 pairs."""
    return struct.pack("<Q", state.n) + state.amps.astype("<c16").tobytes()


def load_state(data: bytes) -> StateVector:
    (n,) = struct.unpack_from("<Q", data)
    amps = np.frombuffer(data, dtype="<c16", offset=8)
    return StateVector(n, amps.astype(complex))
