"""Stabilizer tableau simulation and graph-state certificates.

The tableau follows Aaronson and Gottesman: ``2n`` rows of Pauli strings
(destabilizers then stabilizers) stored as X/Z bit matrices plus a sign bit.
Internally the rows use textbook Paulis over the computational basis with
``|0>`` = ground.  The public interface (gate names, measurement bases and
outcomes, :class:`PauliString`) uses the same physical convention as
:mod:`qsim.statevector`, where Z is +1 on the excited state.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .statevector import StateVector, ZeroProbabilityError, pauli_expectation, excitation_probability

__all__ = [
    "MAX_TABLEAU_QUBITS",
    "NonCliffordError",
    "PauliString",
    "StabilizerTableau",
    "MeasurementOutcome",
    "GraphStateCertificate",
    "CertificateEntry",
    "CertificateReport",
    "check_certificate",
    "check_certificate_dense",
    "graph_state_tableau",
]

MAX_TABLEAU_QUBITS = 4096
_QUARTER = math.pi / 2


class NonCliffordError(ValueError):
    """Requested operation cannot be represented on a stabilizer tableau."""


@dataclass(frozen=True)
class PauliString:
    """Signed Pauli product in the physical convention, e.g. ``-X0 Z1 Z3``."""

    ops: Mapping[int, str]
    sign: int = 1

    def __post_init__(self) -> None:
        ops = {int(q): p for q, p in sorted(self.ops.items()) if p != "I"}
        if any(p not in "XYZ" for p in ops.values()):
            raise ValueError(f"invalid Pauli letters in {ops}")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        object.__setattr__(self, "ops", ops)

    def __str__(self) -> str:
        body = " ".join(f"{p}{q}" for q, p in self.ops.items()) or "I"
        return ("+" if self.sign > 0 else "-") + body


@dataclass(frozen=True)
class MeasurementOutcome:
    outcome: int
    probability: float
    deterministic: bool


def _reduce_angle(angle: float, period: float) -> int:
    """Index ``k`` with ``angle = k * period (mod 2 pi)``, or raise."""
    k = angle / period
    nearest = round(k)
    if abs(k - nearest) > 1e-9 * max(1.0, abs(k)):
        raise NonCliffordError(f"angle {angle} is not a multiple of {period}")
    return int(nearest) % int(round(2 * math.pi / period))


class StabilizerTableau:
    """Clifford state on ``n`` qubits, initialised to all-ground."""

    def __init__(self, n: int) -> None:
        if not 1 <= n <= MAX_TABLEAU_QUBITS:
            raise ValueError(f"tableau size must be in 1..{MAX_TABLEAU_QUBITS}, got {n}")
        self.n = n
        self.x = np.zeros((2 * n, n), dtype=np.uint8)
        self.z = np.zeros((2 * n, n), dtype=np.uint8)
        self.r = np.zeros(2 * n, dtype=np.uint8)
        self.x[np.arange(n), np.arange(n)] = 1
        self.z[n + np.arange(n), np.arange(n)] = 1

    def copy(self) -> StabilizerTableau:
        other = StabilizerTableau.__new__(StabilizerTableau)
        other.n = self.n
        other.x, other.z, other.r = self.x.copy(), self.z.copy(), self.r.copy()
        return other

    def _check(self, *qubits: int) -> None:
        for q in qubits:
            if not 0 <= q < self.n:
                raise ValueError(f"qubit {q} out of range for {self.n}-qubit tableau")

    # -- textbook primitives (computational basis) ----------------------

    def h(self, q: int) -> None:
        self.r ^= self.x[:, q] & self.z[:, q]
        self.x[:, q], self.z[:, q] = self.z[:, q].copy(), self.x[:, q].copy()

    def s(self, q: int) -> None:
        self.r ^= self.x[:, q] & self.z[:, q]
        self.z[:, q] ^= self.x[:, q]

    def sdg(self, q: int) -> None:
        self.s(q)
        self.z_(q)

    def x_(self, q: int) -> None:
        self.r ^= self.z[:, q]

    def z_(self, q: int) -> None:
        self.r ^= self.x[:, q]

    def y_(self, q: int) -> None:
        self.r ^= self.x[:, q] ^ self.z[:, q]

    def cx(self, a: int, b: int) -> None:
        self.r ^= self.x[:, a] & self.z[:, b] & (self.x[:, b] ^ self.z[:, a] ^ 1)
        self.x[:, b] ^= self.x[:, a]
        self.z[:, a] ^= self.z[:, b]

    def cz(self, a: int, b: int) -> None:
        self.h(b)
        self.cx(a, b)
        self.h(b)

    # -- physical gate set -----------------------------------------------

    def apply_clifford(self, gate: str, qubits: int | Sequence[int], angle: float | None = None) -> None:
        """Apply a named gate; rotations must be multiples of pi/2.

        Names match :func:`qsim.statevector.gate_matrix` plus ``CZ``.
        """
        qs = [qubits] if isinstance(qubits, (int, np.integer)) else list(qubits)
        self._check(*qs)
        if gate == "CZ":
            if len(qs) != 2 or qs[0] == qs[1]:
                raise ValueError("CZ needs two distinct qubits")
            self.cz(*qs)
            return
        if len(qs) != 1:
            raise ValueError(f"{gate} acts on one qubit")
        (q,) = qs
        if gate == "H":
            self.h(q)
        elif gate == "X":
            self.x_(q)
        elif gate == "Y":
            self.y_(q)
        elif gate == "Z":
            self.z_(q)
        elif gate in ("S+", "S"):
            self.s(q)
        elif gate in ("S-", "S†", "Sdg"):
            self.sdg(q)
        elif gate in ("Rx", "Ry", "Rz", "P"):
            if angle is None:
                raise ValueError(f"gate {gate} needs an angle")
            self._rotation(gate, q, _reduce_angle(angle, _QUARTER))
        else:
            raise NonCliffordError(f"gate {gate!r} is not in the Clifford gate set")

    def _rotation(self, gate: str, q: int, k: int) -> None:
        if k == 0:
            return
        if gate in ("P", "Rz"):
            # P(k pi/2) = S^k; Rz equals P up to phase and a sign flip of the
            # angle, because physical Z is minus the computational one.
            steps = k if gate == "P" else (4 - k) % 4
            for _ in range(steps):
                self.s(q)
        elif gate == "Rx":
            if k == 2:
                self.x_(q)
                return
            self.h(q)
            self.s(q) if k == 1 else self.sdg(q)
            self.h(q)
        else:
            # physical Y is minus the computational Y, so Ry(+pi/2) here is
            # the textbook Ry(-pi/2) = (H then Z)
            if k == 2:
                self.y_(q)
            elif k == 1:
                self.h(q)
                self.z_(q)
            else:
                self.z_(q)
                self.h(q)

    # -- row algebra -----------------------------------------------------

    @staticmethod
    def _phase_exponent(x1, z1, x2, z2) -> np.ndarray:
        """Sum over qubits of the i-power picked up multiplying P1 * P2."""
        x1, z1, x2, z2 = (a.astype(np.int64) for a in (x1, z1, x2, z2))
        g = np.where(
            (x1 == 1) & (z1 == 1),
            z2 - x2,
            np.where(x1 == 1, z2 * (2 * x2 - 1), np.where(z1 == 1, x2 * (1 - 2 * z2), 0)),
        )
        return g.sum(axis=-1)

    def _rowsum(self, targets: np.ndarray, source: int) -> None:
        """Replace each target row by ``source * target`` (vectorized)."""
        if targets.size == 0:
            return
        xs, zs = self.x[source], self.z[source]
        total = (
            2 * self.r[targets].astype(np.int64)
            + 2 * int(self.r[source])
            + self._phase_exponent(xs[None, :], zs[None, :], self.x[targets], self.z[targets])
        ) % 4
        self.r[targets] = (total // 2).astype(np.uint8)
        self.x[targets] ^= xs
        self.z[targets] ^= zs

    @staticmethod
    def _std_bits(n: int, pauli: PauliString) -> tuple[np.ndarray, np.ndarray, int]:
        """Textbook X/Z bits and sign bit of a physical Pauli string."""
        px = np.zeros(n, dtype=np.uint8)
        pz = np.zeros(n, dtype=np.uint8)
        sign = pauli.sign
        for q, p in pauli.ops.items():
            if p in "XY":
                px[q] = 1
            if p in "YZ":
                pz[q] = 1
                sign = -sign  # physical Y, Z = - textbook Y, Z
        return px, pz, 0 if sign > 0 else 1

    def _anticommuting(self, rows: slice, px: np.ndarray, pz: np.ndarray) -> np.ndarray:
        sym = (self.x[rows] & pz) ^ (self.z[rows] & px)
        return np.bitwise_xor.reduce(sym, axis=1).astype(bool)

    def _deterministic_sign(self, px: np.ndarray, pz: np.ndarray) -> int:
        """Sign bit of the stabilizer-group element equal to +-P."""
        n = self.n
        hits = np.flatnonzero(self._anticommuting(slice(0, n), px, pz))
        sx = np.zeros(n, dtype=np.uint8)
        sz = np.zeros(n, dtype=np.uint8)
        sr = 0
        for i in hits + n:
            e = 2 * sr + 2 * int(self.r[i]) + int(self._phase_exponent(self.x[i], self.z[i], sx, sz))
            sr = (e % 4) // 2
            sx ^= self.x[i]
            sz ^= self.z[i]
        if not (np.array_equal(sx, px) and np.array_equal(sz, pz)):
            raise AssertionError("tableau inconsistent: commuting Pauli not in stabilizer group")
        return sr

    def expectation(self, pauli: PauliString) -> int:
        """``<P>`` in ``{-1, 0, +1}``."""
        if pauli.ops:
            self._check(*pauli.ops)
        px, pz, psign = self._std_bits(self.n, pauli)
        if self._anticommuting(slice(self.n, 2 * self.n), px, pz).any():
            return 0
        return 1 if self._deterministic_sign(px, pz) == psign else -1

    def measure_pauli(
        self,
        qubit: int,
        basis: str,
        *,
        force: int | None = None,
        rng: np.random.Generator | None = None,
    ) -> MeasurementOutcome:
        """Measure a single-qubit Pauli natively (X, Y or Z) and collapse."""
        self._check(qubit)
        if basis not in ("X", "Y", "Z"):
            raise ValueError(f"basis must be X, Y or Z, got {basis!r}")
        if force is not None and force not in (1, -1):
            raise ValueError(f"outcome must be +1 or -1, got {force}")
        n = self.n
        px, pz, psign = self._std_bits(n, PauliString({qubit: basis}))
        anti = self._anticommuting(slice(0, 2 * n), px, pz)
        stab_anti = np.flatnonzero(anti[n:])
        if stab_anti.size == 0:
            value = 1 if self._deterministic_sign(px, pz) == psign else -1
            if force is not None and force != value:
                raise ZeroProbabilityError(
                    f"forced outcome {force:+d} on qubit {qubit} ({basis}) has zero probability"
                )
            return MeasurementOutcome(value, 1.0, True)
        if force is None:
            if rng is None:
                raise ValueError("random measurement needs either a forced outcome or an rng")
            force = 1 if rng.random() < 0.5 else -1
        p = n + stab_anti[0]
        others = np.flatnonzero(anti)
        self._rowsum(others[others != p], p)
        self.x[p - n], self.z[p - n], self.r[p - n] = self.x[p], self.z[p], self.r[p]
        self.x[p], self.z[p] = px, pz
        # stabilizer row holds +-P_std; outcome refers to the physical P
        self.r[p] = psign if force > 0 else psign ^ 1
        return MeasurementOutcome(force, 0.5, False)

    def stabilizers(self) -> list[str]:
        """Stabilizer rows in textbook notation (useful for debugging)."""
        labels = []
        for i in range(self.n, 2 * self.n):
            chars = "".join(
                "IXZY"[int(self.x[i, q]) + 2 * int(self.z[i, q])] for q in range(self.n)
            )
            labels.append(("-" if self.r[i] else "+") + chars)
        return labels


def graph_state_tableau(n: int, edges: Iterable[tuple[int, int]]) -> StabilizerTableau:
    """Graph state built directly: H on every vertex then CZ on every edge."""
    tab = StabilizerTableau(n)
    for q in range(n):
        tab.h(q)
    for a, b in edges:
        tab.cz(a, b)
    return tab


@dataclass(frozen=True)
class GraphStateCertificate:
    """Stabilizers ``K_a = X_a prod_{b in N(a)} (-Z_b)`` of a target graph state.

    ``-Z`` (physical) is the phase flip on the excited state, so these are the
    usual graph-state stabilizers of ``prod CZ |+>^N``.
    """

    vertices: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    stabilizers: tuple[PauliString, ...] = field(init=False)

    def __post_init__(self) -> None:
        vertices = tuple(self.vertices)
        edges = tuple(sorted({(min(a, b), max(a, b)) for a, b in self.edges}))
        vs = set(vertices)
        for a, b in edges:
            if a not in vs or b not in vs:
                raise ValueError(f"edge ({a}, {b}) leaves the vertex set")
        nbrs: dict[int, list[int]] = {v: [] for v in vertices}
        for a, b in edges:
            nbrs[a].append(b)
            nbrs[b].append(a)
        stabs = tuple(
            PauliString({v: "X", **{b: "Z" for b in nbrs[v]}}, (-1) ** len(nbrs[v]))
            for v in vertices
        )
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "stabilizers", stabs)


@dataclass(frozen=True)
class CertificateEntry:
    vertex: int
    expectation: float
    passed: bool


@dataclass
class CertificateReport:
    entries: list[CertificateEntry]
    spectators_ground: bool
    tol: float = 0.0

    @property
    def passed(self) -> bool:
        return self.spectators_ground and all(e.passed for e in self.entries)

    def failing_vertices(self) -> list[int]:
        return [e.vertex for e in self.entries if not e.passed]

    def to_dict(self) -> dict:
        return {
            "stabilizers": [
                {"vertex": e.vertex, "expectation": e.expectation, "pass": e.passed}
                for e in self.entries
            ],
            "spectators_ground": self.spectators_ground,
            "pass": self.passed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def check_certificate(tab: StabilizerTableau, cert: GraphStateCertificate) -> CertificateReport:
    """Exact stabilizer check on a tableau; spectator qubits must be ground."""
    if any(not 0 <= v < tab.n for v in cert.vertices):
        raise ValueError("certificate vertices exceed the tableau")
    entries = []
    for v, stab in zip(cert.vertices, cert.stabilizers):
        value = tab.expectation(stab)
        entries.append(CertificateEntry(v, float(value), value == 1))
    inside = set(cert.vertices)
    ground = all(
        tab.expectation(PauliString({q: "Z"})) == -1 for q in range(tab.n) if q not in inside
    )
    return CertificateReport(entries, ground)


def check_certificate_dense(
    state: StateVector, cert: GraphStateCertificate, tol: float = 1e-10
) -> CertificateReport:
    """Same check on a dense state, each ``<K_a>`` within ``tol`` of +1."""
    entries = []
    for v, stab in zip(cert.vertices, cert.stabilizers):
        value = stab.sign * pauli_expectation(state, stab.ops)
        entries.append(CertificateEntry(v, value, abs(value - 1) <= tol))
    inside = set(cert.vertices)
    ground = all(
        excitation_probability(state, q) <= tol for q in range(state.n) if q not in inside
    )
    return CertificateReport(entries, ground, tol)
