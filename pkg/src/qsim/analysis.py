"""Analytic error budget for the switching protocols and its optimisation.

Two error sources are combined linearly:

* ``epsilon_pi2``: infidelity of the pi/2 pulse that prepares an ancilla when
  its neighbours are excited and shift its frequency, and
* ``epsilon_d``: dephasing of one qubit during a controlled-phase gate of
  duration ``T_cz = pi / g``.

Stronger coupling shortens the gate but detunes the pulses, so the budget
``F = 1 - (n_pi2 eps_pi2 + n_d eps_d)`` has an optimum in ``g`` for every
Rabi frequency.  Rates are in units of ``1/T2`` unless ``T2`` is passed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import ClassVar, Iterable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from . import statevector as sv
from .device import DeviceGraph, Qubit, QubitRole, build_chain
from .protocols import prepare_plus
from .schedule import PulseSchedule, run_dense

__all__ = [
    "VARIANTS",
    "ErrorBudget",
    "Optimum",
    "SweepResult",
    "ValidationRow",
    "ValidationReport",
    "epsilon_pi2",
    "epsilon_d",
    "fidelity_model",
    "optimal_g",
    "sweep",
    "validate_against_simulation",
    "monte_carlo_epsilon_d",
    "NEIGHBOUR_CONFIGS",
]

# (n_pi2, n_d): pulse and dephasing error counts per variant
VARIANTS = {"switch3": (2, 3), "chain5": (4, 15)}
# worst case used in the budget: both neighbours excited
_WORST_NEIGHBOURS = 2


def epsilon_pi2(g, lam, n_neighbors: int = _WORST_NEIGHBOURS):
    """Infidelity of a pi/2 pulse with ``n_neighbors`` excited neighbours.

    The ancilla sees ``H = c Z + (lam/2) Y`` with ``c = g n / 2`` for a time
    ``pi / (2 lam)``.  Accepts scalars or arrays and broadcasts.
    """
    g = np.asarray(g, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("Rabi frequency must be positive")
    if np.any(g < 0) or n_neighbors < 0:
        raise ValueError("coupling and neighbour count must be non-negative")
    # only the ratio r = 2c / lam matters once t = pi / (2 lam) is substituted
    r = g * n_neighbors / lam
    root = np.sqrt(1.0 + r * r)
    half = 0.25 * np.pi * root
    amp = np.cos(half) + np.sin(half) * (1.0 + 1j * r) / root
    eps = np.clip(1.0 - 0.5 * np.abs(amp) ** 2, 0.0, 1.0)
    return eps if eps.ndim else float(eps)


def epsilon_d(g, T2: float = 1.0, linearized: bool = True):
    """Dephasing error over one gate time ``T_cz = pi / g``.

    The exact single-qubit error is ``(1 - exp(-T_cz/T2)) / 2``; the
    linearized form used in the budget is ``T_cz / T2``.
    """
    g = np.asarray(g, dtype=float)
    if np.any(g <= 0) or T2 <= 0:
        raise ValueError("coupling and T2 must be positive")
    x = np.pi / (g * T2)
    eps = x if linearized else 0.5 * -np.expm1(-x)
    return eps if eps.ndim else float(eps)


def _counts(variant: str) -> tuple[int, int]:
    try:
        return VARIANTS[variant]
    except KeyError:
        raise ValueError(f"unknown variant {variant!r}; expected one of {sorted(VARIANTS)}") from None


def _raw_fidelity(g, lam, T2: float, variant: str, linearized: bool):
    n_pi2, n_d = _counts(variant)
    return 1.0 - (n_pi2 * epsilon_pi2(g, lam) + n_d * epsilon_d(g, T2, linearized))


@dataclass(frozen=True)
class ErrorBudget:
    eps_pi2: float
    eps_d: float
    n_pi2: int
    n_d: int
    F: float
    T2: float
    T_cz: float
    F_raw: float
    clamped: bool
    variant: str


def fidelity_model(
    g: float,
    lam: float,
    T2: float = 1.0,
    variant: str = "switch3",
    linearized: bool = True,
) -> ErrorBudget:
    """Error budget of one controlled-phase operation.

    ``F`` is clipped to ``[0, 1]``; ``F_raw`` keeps the unclipped value and
    ``clamped`` records whether clipping happened.
    """
    n_pi2, n_d = _counts(variant)
    e1 = float(epsilon_pi2(g, lam))
    e2 = float(epsilon_d(g, T2, linearized))
    raw = 1.0 - (n_pi2 * e1 + n_d * e2)
    F = min(max(raw, 0.0), 1.0)
    return ErrorBudget(e1, e2, n_pi2, n_d, F, T2, math.pi / g, raw, F != raw, variant)


@dataclass(frozen=True)
class Optimum:
    """Best coupling for one Rabi frequency.

    ``fallback`` is set when the coarse grid had its maximum on an end
    point, in which case the grid argmax is returned unrefined.
    """

    lam: float
    g_star: float
    F_star: float
    F_raw: float
    fallback: bool = False

    def __iter__(self):
        return iter((self.g_star, self.F_star))


def optimal_g(
    lam: float,
    T2: float = 1.0,
    variant: str = "switch3",
    *,
    linearized: bool = True,
    grid_points: int = 200,
    xtol: float = 1e-6,
) -> Optimum:
    """Maximise the budget over ``g in [1/T2, lam]``.

    A log-spaced grid brackets the maximum, then golden-section search on
    ``log g`` refines it.  The unclipped fidelity is optimised so that the
    objective is informative even where the budget is negative.
    """
    if lam <= 0 or T2 <= 0:
        raise ValueError("lam and T2 must be positive")
    lo, hi = math.log(1.0 / T2), math.log(lam)
    if hi <= lo:
        raise ValueError("lam must exceed 1/T2")
    xs = np.linspace(lo, hi, grid_points)
    fs = _raw_fidelity(np.exp(xs), lam, T2, variant, linearized)
    i = int(np.argmax(fs))
    if i == 0 or i == grid_points - 1:
        x = xs[i]
        fallback = True
    else:
        res = minimize_scalar(
            lambda x: -float(_raw_fidelity(math.exp(x), lam, T2, variant, linearized)),
            bracket=(xs[i - 1], xs[i], xs[i + 1]),
            method="golden",
            options={"xtol": xtol},
        )
        x = float(res.x) if -res.fun >= fs[i] else float(xs[i])
        fallback = False
    g = math.exp(x)
    raw = float(_raw_fidelity(g, lam, T2, variant, linearized))
    return Optimum(lam, g, min(max(raw, 0.0), 1.0), raw, fallback)


@dataclass
class SweepResult:
    """Cartesian sweep over ``(lambda, g)`` with the best ``g`` per lambda.

    ``rows`` has columns ``lambda_T2, g_T2, eps_pi2, eps_d, F`` sorted by
    ``(lambda_T2, g_T2)``; ``optima`` has ``lambda_T2, g_star_T2, F_star``.
    """

    rows: np.ndarray
    optima: np.ndarray
    variant: str = "switch3"
    HEADER: ClassVar[tuple[str, ...]] = ("lambda_T2", "g_T2", "eps_pi2", "eps_d", "F")
    OPT_HEADER: ClassVar[tuple[str, ...]] = ("lambda_T2", "g_star_T2", "F_star")

    def F_grid(self) -> np.ndarray:
        """``F`` reshaped to ``(n_lambda, n_g)``."""
        n_lam = len(self.optima)
        return self.rows[:, 4].reshape(n_lam, -1)

    def write_csv(self, path: str | Path) -> None:
        _write_csv(path, self.HEADER, self.rows)

    def write_optima_csv(self, path: str | Path) -> None:
        _write_csv(path, self.OPT_HEADER, self.optima)


def _write_csv(path: str | Path, header: Sequence[str], rows: np.ndarray) -> None:
    lines = [",".join(header)]
    lines += [",".join("%.17g" % v for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def sweep(
    lambda_grid: Iterable[float],
    g_grid: Iterable[float],
    T2: float = 1.0,
    variant: str = "switch3",
    *,
    linearized: bool = True,
) -> SweepResult:
    """Evaluate the budget on every ``(lambda, g)`` pair (vectorised).

    Grids are given in units of ``1/T2``.  The per-lambda optimum is the
    grid point with the largest unclipped fidelity.
    """
    lams = np.unique(np.asarray(list(lambda_grid), dtype=float))
    gs = np.unique(np.asarray(list(g_grid), dtype=float))
    if lams.size == 0 or gs.size == 0:
        raise ValueError("sweep grids must be non-empty")
    L, G = np.meshgrid(lams, gs, indexing="ij")
    n_pi2, n_d = _counts(variant)
    e1 = np.asarray(epsilon_pi2(G, L), dtype=float).reshape(L.shape)
    e2 = np.asarray(epsilon_d(G, T2, linearized), dtype=float).reshape(L.shape)
    raw = 1.0 - (n_pi2 * e1 + n_d * e2)
    F = np.clip(raw, 0.0, 1.0)
    rows = np.column_stack([L.ravel() * T2, G.ravel() * T2, e1.ravel(), e2.ravel(), F.ravel()])
    best = np.argmax(raw, axis=1)
    idx = np.arange(lams.size)
    optima = np.column_stack([lams * T2, gs[best] * T2, F[idx, best]])
    return SweepResult(rows, optima, variant)


# neighbour configurations of the driven qubit (ground = down, excited = up)
NEIGHBOUR_CONFIGS = (("dd", 0, 0), ("ud", 1, 0), ("du", 0, 1), ("uu", 1, 1))


@dataclass(frozen=True)
class ValidationRow:
    config: str
    n_excited: int
    simulated: float
    analytic: float

    @property
    def error(self) -> float:
        return abs(self.simulated - self.analytic)


@dataclass
class ValidationReport:
    g: float
    lam: float
    rows: list[ValidationRow]
    tol: float = 1e-9

    @property
    def max_error(self) -> float:
        return max(r.error for r in self.rows)

    @property
    def worst_is_uu(self) -> bool:
        uu = next(r for r in self.rows if r.config == "uu")
        return all(uu.simulated >= r.simulated for r in self.rows)

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tol and self.worst_is_uu

    def to_dict(self) -> dict:
        return {
            "g": self.g,
            "lambda": self.lam,
            "rows": [
                {
                    "config": r.config,
                    "n_excited": r.n_excited,
                    "simulated": r.simulated,
                    "analytic": r.analytic,
                    "error": r.error,
                }
                for r in self.rows
            ],
            "max_error": self.max_error,
            "pass": self.passed,
        }


def validate_against_simulation(g: float, lam: float, tol: float = 1e-9) -> ValidationReport:
    """Compare the dense-engine pi/2 pulse with :func:`epsilon_pi2`.

    On the chain ``A - B - C`` the outer qubits are fixed to each basis
    configuration and ``B`` is driven by a finite-amplitude pulse; the
    simulated infidelity against the ideal ``|+>`` is compared with the
    closed form for the same number of excited neighbours.
    """
    graph = build_chain(2, g)
    a, b, c = 0, 1, 2
    pulse = PulseSchedule(prepare_plus(b, ideal=False, lam=lam))
    ideal = PulseSchedule(prepare_plus(b, ideal=True))
    rows = []
    for label, ea, ec in NEIGHBOUR_CONFIGS:
        init = sv.init_product_state(
            graph, {a: "excited" if ea else "ground", c: "excited" if ec else "ground"}
        )
        out, _ = run_dense(pulse, graph, init)
        target, _ = run_dense(ideal, graph, init)
        sim = 1.0 - sv.fidelity(out, target)
        rows.append(ValidationRow(label, ea + ec, sim, float(epsilon_pi2(g, lam, ea + ec))))
    return ValidationReport(g, lam, rows, tol)


def monte_carlo_epsilon_d(
    g: float,
    T2: float = 1.0,
    *,
    samples: int = 10_000,
    intervals: int = 16,
    seed: int = 0,
) -> tuple[float, float]:
    """Dephasing error of an idle ``|+>`` qubit over ``pi / g``, by sampling.

    Returns the mean infidelity over trajectories and its standard error.
    """
    graph = DeviceGraph([Qubit(0, QubitRole.ANCILLA)], {})
    plus = sv.init_product_state(graph, {0: "plus"})
    psi = sv.dephasing_trajectories(
        plus,
        graph,
        math.pi / g,
        T2,
        samples=samples,
        intervals=intervals,
        rng=np.random.default_rng(seed),
    )
    infid = 1.0 - np.abs(psi @ plus.amps.conj()) ** 2
    return float(infid.mean()), float(infid.std(ddof=1) / math.sqrt(samples))
