"""Command-line harness: ``qsim verify|sweep|optimal|demo-failure``.

Each command reads one JSON config (validated against :data:`SCHEMAS`) and
writes its artifacts into ``--out``.  Exit codes: 0 when every check
passes, 1 when a check fails, 2 for usage or configuration errors.
"""

from __future__ import annotations

import argparse
import itertools
import json
import math
import sys
from pathlib import Path
from typing import Callable, Sequence

import jsonschema
import numpy as np

from . import analysis as an
from . import device as dv
from . import protocols as pr
from . import statevector as sv
from .schedule import Measure, PulseSchedule, run_dense, run_tableau
from .stabilizer import GraphStateCertificate, check_certificate, check_certificate_dense

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
FIDELITY_TOL = 1e-10

_RANGE = {
    "oneOf": [
        {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        {
            "type": "object",
            "properties": {
                "min": {"type": "number", "exclusiveMinimum": 0},
                "max": {"type": "number", "exclusiveMinimum": 0},
                "num": {"type": "integer", "minimum": 1},
            },
            "required": ["min", "max", "num"],
            "additionalProperties": False,
        },
    ]
}
_VARIANT = {"enum": sorted(an.VARIANTS)}

SCHEMAS: dict[str, dict] = {
    "verify": {
        "type": "object",
        "properties": {
            "protocol": {"enum": ["switch3", "echo", "chain5", "cross", "gen1d", "gen2d", "gen3d"]},
            "backend": {"enum": ["dense", "tableau", "both"]},
            "mode": {"enum": ["ideal", "physical"]},
            "seed": {"type": "integer", "minimum": 0},
            "m": {"type": "integer", "minimum": 2},
            "tiles": {"type": "integer", "minimum": 1},
            "g": {"type": "number", "exclusiveMinimum": 0},
            "g_range": {
                "type": "array",
                "items": {"type": "number", "exclusiveMinimum": 0},
                "minItems": 2,
                "maxItems": 2,
            },
            "lambda": {"type": "number", "exclusiveMinimum": 0},
            "trials": {"type": "integer", "minimum": 1},
        },
        "required": ["protocol", "seed"],
        "additionalProperties": False,
    },
    "sweep": {
        "type": "object",
        "properties": {
            "variant": _VARIANT,
            "lambda_T2": _RANGE,
            "g_T2": _RANGE,
            "T2": {"type": "number", "exclusiveMinimum": 0},
            "linearized": {"type": "boolean"},
        },
        "required": ["lambda_T2", "g_T2"],
        "additionalProperties": False,
    },
    "optimal": {
        "type": "object",
        "properties": {
            "variant": _VARIANT,
            "lambda_T2": _RANGE,
            "T2": {"type": "number", "exclusiveMinimum": 0},
            "linearized": {"type": "boolean"},
        },
        "required": ["lambda_T2"],
        "additionalProperties": False,
    },
    "demo-failure": {
        "type": "object",
        "properties": {
            "epsilon_m": {
                "type": "array",
                "items": {"type": "number", "minimum": 0, "maximum": 1},
                "minItems": 1,
            },
            "times": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
            "g": {"type": "number", "exclusiveMinimum": 0},
            "seed": {"type": "integer", "minimum": 0},
        },
        "required": ["epsilon_m"],
        "additionalProperties": False,
    },
}


class ConfigError(ValueError):
    """Raised for configurations that pass the schema but cannot be run."""


def _grid(spec) -> np.ndarray:
    if isinstance(spec, dict):
        if spec["min"] > spec["max"]:
            raise ConfigError("range min exceeds max")
        return np.geomspace(spec["min"], spec["max"], spec["num"])
    return np.asarray(spec, dtype=float)


def _random_state(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return v / np.linalg.norm(v)


def _embed(phi: np.ndarray, n: int, qubits: Sequence[int]) -> sv.StateVector:
    """Place ``phi`` on ``qubits`` (first listed = most significant), others ground."""
    k = len(qubits)
    amps = np.zeros(2**n, dtype=complex)
    for idx, amp in enumerate(phi):
        j = 0
        for pos, q in enumerate(qubits):
            if (idx >> (k - 1 - pos)) & 1:
                j |= 1 << (n - 1 - q)
        amps[j] = amp
    return sv.StateVector(n, amps)


def _apply_cz(state: sv.StateVector, a: int, e: int) -> sv.StateVector:
    n = state.n
    idx = np.arange(2**n)
    both = ((idx >> (n - 1 - a)) & 1) & ((idx >> (n - 1 - e)) & 1)
    return sv.StateVector(n, np.where(both, -state.amps, state.amps))


def _outcome_patterns(schedule: PulseSchedule):
    keys = [s.key for s in schedule.steps if isinstance(s, Measure)]
    for pattern in itertools.product((1, -1), repeat=len(keys)):
        yield dict(zip(keys, pattern))


def cz_fidelities(
    schedule: PulseSchedule,
    graph: dv.DeviceGraph,
    a: int,
    e: int,
    rng: np.random.Generator,
    trials: int,
) -> list[float]:
    """Fidelity with ``CZ_ae`` for random inputs and every outcome pattern."""
    out = []
    for _ in range(trials):
        init = _embed(_random_state(rng, 2), graph.n, (a, e))
        target = _apply_cz(init, a, e)
        for force in _outcome_patterns(schedule):
            final, _ = run_dense(schedule, graph, init, force=force)
            out.append(sv.fidelity(final, target))
    return out


def _with_plus_inputs(schedule: PulseSchedule, a: int, e: int) -> PulseSchedule:
    prep = PulseSchedule([*pr.prepare_plus(a), *pr.prepare_plus(e)])
    full = prep + schedule
    full.certificate = GraphStateCertificate((a, e), ((a, e),))
    return full


def _certificate_runs(
    schedule: PulseSchedule, graph: dv.DeviceGraph, backends: Sequence[str], seed: int
) -> dict:
    report = {}
    if "dense" in backends:
        if graph.n > sv.MAX_QUBITS:
            raise ConfigError(f"dense backend supports at most {sv.MAX_QUBITS} qubits")
        final, rec = run_dense(
            schedule, graph, sv.init_product_state(graph), rng=np.random.default_rng(seed)
        )
        report["dense"] = check_certificate_dense(final, schedule.certificate).to_dict()
        report["dense"]["outcomes"] = rec.outcomes
    if "tableau" in backends:
        tab, rec = run_tableau(schedule, graph, rng=np.random.default_rng(seed))
        report["tableau"] = check_certificate(tab, schedule.certificate).to_dict()
        report["tableau"]["outcomes"] = rec.outcomes
    return report


def _couplings(cfg: dict, count: int, rng: np.random.Generator) -> float | list[float]:
    if "g_range" in cfg:
        lo, hi = cfg["g_range"]
        if lo > hi:
            raise ConfigError("g_range must be ordered")
        return list(rng.uniform(lo, hi, size=count))
    return float(cfg.get("g", 1.0))


def _verify(cfg: dict) -> tuple[bool, dict]:
    protocol = cfg["protocol"]
    backend = cfg.get("backend", "dense")
    backends = ("dense", "tableau") if backend == "both" else (backend,)
    mode = cfg.get("mode", "ideal")
    rng = np.random.default_rng(cfg["seed"])
    trials = cfg.get("trials", 10)
    report: dict = {"protocol": protocol, "backend": backend, "mode": mode}

    if mode == "physical":
        if protocol != "switch3":
            raise ConfigError("physical mode is only available for switch3")
        if "lambda" not in cfg:
            raise ConfigError("physical mode needs 'lambda'")
        val = an.validate_against_simulation(float(cfg.get("g", 1.0)), float(cfg["lambda"]))
        report["validation"] = val.to_dict()
        return val.passed, report

    if protocol in ("switch3", "echo"):
        if protocol == "echo" and "g_range" not in cfg:
            ratio = rng.uniform(1, 5)
            couplings = [ratio * cfg.get("g", 1.0), cfg.get("g", 1.0)]
        else:
            couplings = _couplings(cfg, 2, rng)
        graph = dv.build_chain(2, couplings)
        if protocol == "switch3":
            sched = pr.switching_cz(graph, 0, 1, 2)
        else:
            sched = pr.echo_cz_pair(graph, 0, 1, 2)
        pairs = [(sched, graph, 0, 2)]
    elif protocol in ("chain5", "cross"):
        bilayer = dv.build_bilayer_unit(1)
        graph, cross = dv.cross_subgraph(bilayer, dv.find_crosses(bilayer)[0])
        graph = graph.with_couplings(
            dict(zip(graph.edges, np.broadcast_to(_couplings(cfg, len(graph.edges), rng), len(graph.edges))))
        )
        if protocol == "chain5":
            a, e = cross.mains[0], cross.mains[2]
            pairs = [(pr.chain_cz_5(graph, *cross.path(a, e)), graph, a, e)]
        else:
            pairs = [
                (pr.cross_cz(graph, (a, e)), graph, a, e)
                for a, e in itertools.combinations(cross.mains, 2)
            ]
    else:
        if protocol == "gen1d":
            m = cfg.get("m", 4)
            graph = dv.build_chain(m, _couplings(cfg, 2 * m - 2, rng))
            sched = pr.generate_1d(graph)
        elif protocol == "gen2d":
            m = cfg.get("m", 2)
            count = len(dv.build_2d_lattice(m).edges)
            graph = dv.build_2d_lattice(m, _couplings(cfg, count, rng))
            sched = pr.generate_2d(graph)
        else:
            tiles = cfg.get("tiles", 1)
            count = len(dv.build_bilayer_unit(tiles).edges)
            graph = dv.build_bilayer_unit(tiles, _couplings(cfg, count, rng))
            sched = pr.generate_3d_bilayer(graph)
        runs = _certificate_runs(sched, graph, backends, cfg["seed"])
        report.update(n_qubits=graph.n, label=sched.label, certificates=runs)
        return all(r["pass"] for r in runs.values()), report

    checks = []
    ok = True
    for sched, graph, a, e in pairs:
        entry: dict = {"pair": [a, e], "label": sched.label}
        if "dense" in backends:
            fids = cz_fidelities(sched, graph, a, e, rng, trials)
            entry["min_fidelity"] = min(fids)
            ok &= min(fids) >= 1 - FIDELITY_TOL
            if protocol == "cross":
                dist = spectator_distance(sched, graph, a, e, rng)
                entry["spectator_trace_distance"] = dist
                ok &= dist <= FIDELITY_TOL
        if "tableau" in backends:
            runs = _certificate_runs(_with_plus_inputs(sched, a, e), graph, ("tableau",), cfg["seed"])
            entry["tableau"] = runs["tableau"]
            ok &= runs["tableau"]["pass"]
        checks.append(entry)
    report.update(n_qubits=pairs[0][1].n, checks=checks)
    return bool(ok), report


def spectator_distance(
    schedule: PulseSchedule, graph: dv.DeviceGraph, a: int, e: int, rng: np.random.Generator
) -> float:
    """Worst trace distance of the other mains' reduced state, over outcomes.

    The pair starts in a random state and every spectator main in ``|+>``.
    """
    mains = graph.main_qubits()
    spectators = [q for q in mains if q not in (a, e)]
    init = _embed(_random_state(rng, 2), graph.n, (a, e))
    for q in spectators:
        init = sv.apply_instant_gate(init, q, "Ry", -math.pi / 2)
    before = sv.reduced_density(init, spectators)
    worst = 0.0
    for force in _outcome_patterns(schedule):
        final, _ = run_dense(schedule, graph, init, force=force)
        diff = sv.reduced_density(final, spectators) - before
        worst = max(worst, 0.5 * float(np.abs(np.linalg.eigvalsh(diff)).sum()))
    return worst


def _sweep(cfg: dict, out: Path) -> tuple[bool, dict]:
    T2 = float(cfg.get("T2", 1.0))
    lams = _grid(cfg["lambda_T2"]) / T2
    gs = _grid(cfg["g_T2"]) / T2
    res = an.sweep(lams, gs, T2, cfg.get("variant", "switch3"), linearized=cfg.get("linearized", True))
    res.write_csv(out / "sweep.csv")
    res.write_optima_csv(out / "optimum.csv")
    return True, {"rows": int(len(res.rows)), "files": ["sweep.csv", "optimum.csv"]}


def _optimal(cfg: dict, out: Path) -> tuple[bool, dict]:
    T2 = float(cfg.get("T2", 1.0))
    variant = cfg.get("variant", "switch3")
    rows, entries = [], []
    for lam_T2 in _grid(cfg["lambda_T2"]):
        if lam_T2 <= 1:
            raise ConfigError("lambda_T2 must exceed 1")
        opt = an.optimal_g(lam_T2 / T2, T2, variant, linearized=cfg.get("linearized", True))
        rows.append((lam_T2, opt.g_star * T2, opt.F_star))
        entries.append(
            {"lambda_T2": lam_T2, "g_star_T2": opt.g_star * T2, "F_star": opt.F_star, "fallback": opt.fallback}
        )
    an._write_csv(out / "optimum.csv", an.SweepResult.OPT_HEADER, np.asarray(rows))
    return True, {"variant": variant, "optima": entries, "files": ["optimum.csv"]}


def failure_report(eps_grid: Sequence[float], times: Sequence[float], g: float, phi=None) -> dict:
    """Trace distance and coherence loss of ``rho_ac`` against the ideal output."""
    graph = dv.build_chain(2, g)
    if phi is None:
        phi = np.full(4, 0.5, dtype=complex)
    init = _embed(phi, 3, (0, 2))
    ideal, _ = run_dense(pr.switching_cz(graph, 0, 1, 2), graph, init, force=1)
    rho0 = sv.reduced_density(ideal, (0, 2))
    off0 = np.abs(rho0 - np.diag(np.diag(rho0))).sum()
    points = []
    ok = True
    for t in times:
        last = -1.0
        for eps in sorted(eps_grid):
            rho = pr.apply_failure_model(ideal, graph, 0, 1, 2, pr.FailureModel(eps), t)
            dist = 0.5 * float(np.abs(np.linalg.eigvalsh(rho - rho0)).sum())
            diag_dev = float(np.abs(np.diag(rho) - np.diag(rho0)).max())
            off = np.abs(rho - np.diag(np.diag(rho))).sum()
            atten = float(off / off0) if off0 > 0 else 1.0
            passed = dist <= eps + 1e-12 and diag_dev <= 1e-12 and dist >= last - 1e-15
            ok &= passed
            last = dist
            points.append(
                {
                    "t": t,
                    "epsilon_m": eps,
                    "trace_distance": dist,
                    "diagonal_deviation": diag_dev,
                    "offdiag_attenuation": atten,
                    "pass": passed,
                }
            )
    return {"g": g, "points": points, "pass": bool(ok)}


def _demo_failure(cfg: dict, out: Path) -> tuple[bool, dict]:
    g = float(cfg.get("g", 1.0))
    times = cfg.get("times", [math.pi / (2 * g)])
    phi = None
    if "seed" in cfg:
        phi = _random_state(np.random.default_rng(cfg["seed"]), 2)
    report = failure_report(cfg["epsilon_m"], times, g, phi)
    return report["pass"], report


def _run_verify(cfg: dict, out: Path) -> tuple[bool, dict]:
    return _verify(cfg)


_COMMANDS: dict[str, Callable[[dict, Path], tuple[bool, dict]]] = {
    "verify": _run_verify,
    "sweep": _sweep,
    "optimal": _optimal,
    "demo-failure": _demo_failure,
}


def _error(msg: str) -> int:
    print(f"qsim: error: {msg}", file=sys.stderr)
    return EXIT_USAGE


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="qsim", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, type=Path, help="JSON config file")
    parser.add_argument("--out", required=True, type=Path, help="output directory")
    args = parser.parse_args(argv)

    try:
        cfg = json.loads(args.config.read_text())
    except OSError as exc:
        return _error(f"cannot read config: {exc}")
    except json.JSONDecodeError as exc:
        return _error(f"malformed JSON in {args.config}: {exc}")
    try:
        jsonschema.validate(cfg, SCHEMAS[args.command])
    except jsonschema.ValidationError as exc:
        return _error(f"invalid config: {exc.message}")

    try:
        args.out.mkdir(parents=True, exist_ok=True)
        passed, report = _COMMANDS[args.command](cfg, args.out)
    except (ConfigError, ValueError) as exc:
        return _error(str(exc))
    report = {"command": args.command, "pass": passed, **report}
    (args.out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"{args.command}: {'pass' if passed else 'FAIL'}")
    return EXIT_OK if passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
