import itertools
import math

import numpy as np
import pytest

from conftest import cz_matrix, embed, random_state, trace_distance
from qsim import device as dv
from qsim import protocols as pr
from qsim import statevector as sv
from qsim.schedule import Measure, PulseSchedule, run_dense, run_tableau
from qsim.stabilizer import GraphStateCertificate, PauliString, check_certificate, check_certificate_dense


def outcome_patterns(schedule):
    keys = [s.key for s in schedule.steps if isinstance(s, Measure)]
    for pattern in itertools.product((1, -1), repeat=len(keys)):
        yield dict(zip(keys, pattern))


def cz_target(phi, n, a, e):
    init = embed(phi, n, (a, e))
    return init, sv.StateVector(n, cz_matrix(n, a, e) @ init.amps)


def min_cz_fidelity(schedule, graph, phi, a, e):
    init, target = cz_target(phi, graph.n, a, e)
    return min(
        sv.fidelity(run_dense(schedule, graph, init, force=f)[0], target)
        for f in outcome_patterns(schedule)
    )


def cross_device(rng=None):
    g = dv.build_bilayer_unit(1)
    if rng is not None:
        g = dv.randomize_couplings(g, 1, 3, rng)
    return dv.cross_subgraph(g, dv.find_crosses(g)[0])


class TestSwitchingCZ:
    def test_ground_inputs_stay_ground(self):
        g = dv.build_chain(2)
        for f in (1, -1):
            out, _ = run_dense(pr.switching_cz(g, 0, 1, 2), g, sv.init_product_state(g), force=f)
            assert sv.fidelity(out, sv.init_product_state(g)) == pytest.approx(1, abs=1e-12)

    def test_plus_inputs_give_graph_state(self):
        g = dv.build_chain(2, 0.8)
        init = sv.init_product_state(g, {0: "plus", 2: "plus"})
        out, _ = run_dense(pr.switching_cz(g, 0, 1, 2), g, init, rng=np.random.default_rng(0))
        cert = GraphStateCertificate((0, 2), ((0, 2),))
        assert check_certificate_dense(out, cert).passed

    def test_branches_agree(self, rng):
        g = dv.build_chain(2, 1.9)
        s = pr.switching_cz(g, 0, 1, 2)
        init = embed(random_state(rng, 2), 3, (0, 2))
        plus, _ = run_dense(s, g, init, force=1)
        minus, _ = run_dense(s, g, init, force=-1)
        assert sv.fidelity(plus, minus) == pytest.approx(1, abs=1e-12)

    @pytest.mark.parametrize("gval", [0.3, 1.0, 7.5])
    def test_exact_cz(self, rng, gval):
        g = dv.build_chain(2, gval)
        assert min_cz_fidelity(pr.switching_cz(g, 0, 1, 2), g, random_state(rng, 2), 0, 2) > 1 - 1e-12

    def test_wrong_topology(self):
        g = dv.build_chain(4)
        with pytest.raises(ValueError):
            pr.switching_cz(g, 0, 2, 4)
        with pytest.raises(ValueError):
            pr.switching_cz(g, 0, 1, 4)

    def test_unequal_couplings_rejected(self):
        with pytest.raises(ValueError):
            pr.switching_cz(dv.build_chain(2, [1.0, 2.0]), 0, 1, 2)

    def test_physical_mode_uses_drive(self):
        g = dv.build_chain(2)
        s = pr.switching_cz(g, 0, 1, 2, ideal=False, lam=50.0)
        assert s.duration == pytest.approx(math.pi + math.pi / 100)
        with pytest.raises(ValueError):
            pr.switching_cz(g, 0, 1, 2, ideal=False)

    def test_physical_mode_exact_without_detuning(self):
        # with both neighbours in ground the finite pulse is resonant
        g = dv.build_chain(2)
        s = pr.switching_cz(g, 0, 1, 2, ideal=False, lam=20.0)
        out, _ = run_dense(s, g, sv.init_product_state(g), force=1)
        assert sv.fidelity(out, sv.init_product_state(g)) == pytest.approx(1, abs=1e-12)


class TestEchoCZ:
    def test_timing_identities(self):
        t = dv.spin_echo_times(2.0, 1.0)
        assert 2.0 * (t.t1 - t.t2) == pytest.approx(math.pi, abs=1e-12)
        assert 1.0 * (t.t1 + t.t2) == pytest.approx(math.pi, abs=1e-12)

    @pytest.mark.parametrize("g1, g2", [(2.0, 1.0), (1.0, 2.0), (4.7, 1.1), (1.0, 1.0)])
    def test_exact_cz(self, rng, g1, g2):
        g = dv.build_chain(2, [g1, g2])
        s = pr.echo_cz_pair(g, 0, 1, 2, g1, g2)
        assert min_cz_fidelity(s, g, random_state(rng, 2), 0, 2) > 1 - 1e-12

    def test_equal_couplings_reduce_to_switching(self, rng):
        g = dv.build_chain(2, 1.4)
        echo = pr.echo_cz_pair(g, 0, 1, 2, always_echo=True)
        plain = pr.switching_cz(g, 0, 1, 2)
        assert echo.count_pi_pulses() == 2
        assert echo.duration == pytest.approx(plain.duration)
        init = embed(random_state(rng, 2), 3, (0, 2))
        a, _ = run_dense(echo, g, init, force=1)
        b, _ = run_dense(plain, g, init, force=1)
        assert sv.fidelity(a, b) == pytest.approx(1, abs=1e-12)

    def test_coupling_mismatch(self):
        g = dv.build_chain(2, [2.0, 1.0])
        with pytest.raises(ValueError):
            pr.echo_cz_pair(g, 0, 1, 2, 1.0, 2.0)


class TestChainCZ5:
    def test_ground_ends(self, rng):
        g, cross = cross_device(rng)
        path = cross.path(cross.mains[0], cross.mains[2])
        s = pr.chain_cz_5(g, *path)
        for f in outcome_patterns(s):
            out, _ = run_dense(s, g, sv.init_product_state(g), force=f)
            assert sv.fidelity(out, sv.init_product_state(g)) == pytest.approx(1, abs=1e-12)

    def test_exact_cz_on_five_qubit_line(self, rng):
        qubits = [dv.Qubit(i, dv.QubitRole.ANCILLA if 0 < i < 4 else dv.QubitRole.LOGICAL) for i in range(5)]
        gs = rng.uniform(1, 3, size=4)
        g = dv.assign_frame(dv.DeviceGraph(qubits, {(i, i + 1): gs[i] for i in range(4)}))
        s = pr.chain_cz_5(g, 0, 1, 2, 3, 4)
        assert min_cz_fidelity(s, g, random_state(rng, 2), 0, 4) > 1 - 1e-12

    def test_middle_is_entangled_after_step_two(self, rng):
        g, cross = cross_device(rng)
        a, b, c, d, e = cross.path(cross.mains[1], cross.mains[3])
        s = pr.chain_cz_5(g, a, b, c, d, e)
        cut = next(i for i, st in enumerate(s.steps) if isinstance(st, Measure) and st.qubit == c)
        init = sv.init_product_state(g, {a: "plus", e: "plus"})
        mid, _ = run_dense(PulseSchedule(s.steps[:cut]), g, init, force=1)
        rho_c = sv.reduced_density(mid, (c,))
        purity = float(np.trace(rho_c @ rho_c).real)
        assert purity < 1 - 1e-3

    def test_wrong_topology(self):
        g, cross = cross_device()
        with pytest.raises(ValueError):
            pr.chain_cz_5(g, cross.mains[0], cross.centre, cross.arms[0], cross.arms[1], cross.mains[1])


class TestCrossCZ:
    def test_all_mains_ground(self):
        g, cross = cross_device()
        s = pr.cross_cz(g, (cross.mains[0], cross.mains[1]))
        out, _ = run_dense(s, g, sv.init_product_state(g), force=1)
        assert sv.fidelity(out, sv.init_product_state(g)) == pytest.approx(1, abs=1e-12)

    @pytest.mark.parametrize("pair", list(itertools.combinations(range(4), 2)))
    def test_every_pair(self, rng, pair):
        g, cross = cross_device(rng)
        a, e = cross.mains[pair[0]], cross.mains[pair[1]]
        s = pr.cross_cz(g, (a, e))
        assert min_cz_fidelity(s, g, random_state(rng, 2), a, e) > 1 - 1e-12

    def test_spectators_untouched(self, rng):
        g, cross = cross_device(rng)
        a, e = cross.mains[0], cross.mains[3]
        others = [q for q in cross.mains if q not in (a, e)]
        init = embed(random_state(rng, 2), g.n, (a, e))
        for q in others:
            init = sv.apply_instant_gate(init, q, "Ry", -math.pi / 2)
        before = sv.reduced_density(init, others)
        s = pr.cross_cz(g, (a, e))
        for f in outcome_patterns(s):
            out, _ = run_dense(s, g, init, force=f)
            assert trace_distance(sv.reduced_density(out, others), before) < 1e-10

    def test_pair_not_in_cross(self):
        g, cross = cross_device()
        with pytest.raises(ValueError):
            pr.cross_cz(g, (cross.mains[0], cross.arms[0]))


def dense_certificate(graph, schedule, seed=0):
    out, rec = run_dense(schedule, graph, sv.init_product_state(graph), rng=np.random.default_rng(seed))
    return check_certificate_dense(out, schedule.certificate), rec


def tableau_certificate(graph, schedule, seed=0):
    tab, rec = run_tableau(schedule, graph, rng=np.random.default_rng(seed))
    return check_certificate(tab, schedule.certificate), rec


class TestGenerate1D:
    def test_two_mains(self):
        g = dv.build_chain(2)
        s = pr.generate_1d(g)
        report, _ = dense_certificate(g, s)
        assert report.passed and len(report.entries) == 2

    @pytest.mark.parametrize("seed", range(3))
    def test_uniform_four(self, seed):
        g = dv.build_chain(4, 1.3)
        report, _ = dense_certificate(g, pr.generate_1d(g), seed)
        assert report.passed

    @pytest.mark.parametrize("seed", range(3))
    def test_asymmetric_four(self, seed):
        g = dv.randomize_couplings(dv.build_chain(4), 1, 3, np.random.default_rng(seed))
        s = pr.generate_1d(g)
        assert "echo" in s.label
        report, _ = dense_certificate(g, s, seed)
        assert report.passed

    def test_uniform_requires_equal_couplings(self):
        g = dv.build_chain(4, [1, 2, 1, 1, 1, 1])
        with pytest.raises(ValueError):
            pr.generate_1d(g, asymmetric=False)

    def test_echo_on_uniform_device(self):
        g = dv.build_chain(4, 1.0)
        uniform, _ = run_dense(pr.generate_1d(g), g, sv.init_product_state(g), force=1)
        echo, _ = run_dense(pr.generate_1d(g, asymmetric=True), g, sv.init_product_state(g), force=1)
        assert sv.fidelity(uniform, echo) == pytest.approx(1, abs=1e-12)

    def test_pi_pulses_linear(self):
        counts = []
        for m in (2, 4, 6, 8):
            g = dv.randomize_couplings(dv.build_chain(m), 1, 3, np.random.default_rng(m))
            counts.append(pr.generate_1d(g).count_pi_pulses())
        assert all(c <= 2 * m for c, m in zip(counts, (2, 4, 6, 8)))
        assert counts == sorted(counts)


class TestGenerate2D:
    def test_uniform_square(self):
        g = dv.build_2d_lattice(2)
        report, _ = dense_certificate(g, pr.generate_2d(g))
        assert report.passed and len(report.entries) == 4

    def test_four_step_square(self):
        g = dv.randomize_couplings(dv.build_2d_lattice(2), 1, 3, np.random.default_rng(3))
        s = pr.generate_2d(g)
        assert "echo" in s.label
        report, _ = dense_certificate(g, s)
        assert report.passed

    def test_modes_agree(self):
        g = dv.build_2d_lattice(2, 0.9)
        a, _ = run_dense(pr.generate_2d(g), g, sv.init_product_state(g), force=-1)
        b, _ = run_dense(pr.generate_2d(g, asymmetric=True), g, sv.init_product_state(g), force=1)
        assert sv.fidelity(a, b) == pytest.approx(1, abs=1e-12)

    @pytest.mark.parametrize("asym", [False, True])
    def test_m4_on_tableau(self, asym):
        g = dv.build_2d_lattice(4)
        if asym:
            g = dv.randomize_couplings(g, 1, 3, np.random.default_rng(7))
        report, _ = tableau_certificate(g, pr.generate_2d(g))
        assert report.passed and len(report.entries) == 16


class TestGenerate3D:
    @pytest.mark.parametrize("seed", [None, 1, 2])
    def test_unit_cell(self, seed):
        g = dv.build_bilayer_unit(1)
        if seed is not None:
            g = dv.randomize_couplings(g, 1, 3, np.random.default_rng(seed))
        report, _ = tableau_certificate(g, pr.generate_3d_bilayer(g))
        assert g.n == 28 and report.passed

    def test_two_tiles(self):
        g = dv.randomize_couplings(dv.build_bilayer_unit(2), 1, 3, np.random.default_rng(4))
        s = pr.generate_3d_bilayer(g)
        report, _ = tableau_certificate(g, s)
        assert report.passed
        assert len(pr.bilayer_layers(g).rungs) == 3

    def test_layers_before_slant_links(self):
        g = dv.build_bilayer_unit(2)
        plan = pr.bilayer_layers(g)
        s = pr.generate_3d_bilayer(g, stop_after=2)
        tab, _ = run_tableau(s, g, rng=np.random.default_rng(0))
        for layer in plan.layers:
            edges = [e for e in plan.layer_edges if e[0] in layer]
            cert = GraphStateCertificate(layer, tuple(edges))
            # each layer on its own is a graph state
            values = [tab.expectation(st) for st in cert.stabilizers]
            assert values == [1] * len(layer)
        assert not check_certificate(tab, pr.generate_3d_bilayer(g).certificate).passed

    def test_regeneration_after_measuring_a_layer(self):
        g = dv.randomize_couplings(dv.build_bilayer_unit(1), 1, 3, np.random.default_rng(9))
        s = pr.generate_3d_bilayer(g)
        rng = np.random.default_rng(5)
        tab, _ = run_tableau(s, g, rng=rng)
        layer = pr.bilayer_layers(g).layers[0]
        tab, _ = run_tableau(pr.reset_schedule(layer), g, tab, rng=rng)
        tab, _ = run_tableau(pr.reset_schedule(g.main_qubits(), "again"), g, tab, rng=rng)
        tab, _ = run_tableau(s, g, tab, rng=rng)
        assert check_certificate(tab, s.certificate).passed

    def test_malformed_graph(self):
        with pytest.raises(ValueError):
            pr.generate_3d_bilayer(dv.build_2d_lattice(2))


class TestInvariants:
    @pytest.mark.parametrize(
        "graph, build",
        [
            (dv.build_chain(4), pr.generate_1d),
            (dv.randomize_couplings(dv.build_chain(4), 1, 3, np.random.default_rng(0)), pr.generate_1d),
            (dv.build_2d_lattice(2), pr.generate_2d),
            (dv.build_bilayer_unit(1), pr.generate_3d_bilayer),
        ],
    )
    def test_ancillas_end_in_ground(self, graph, build):
        g = graph
        tab, _ = run_tableau(build(g), g, rng=np.random.default_rng(1))
        for q in g.ancillas():
            out = tab.copy().measure_pauli(q, "Z", rng=np.random.default_rng(0))
            assert out.deterministic and out.outcome == -1
            assert tab.expectation(PauliString({q: "Z"})) == -1

    def test_all_outcome_patterns_agree(self):
        g = dv.randomize_couplings(dv.build_chain(4), 1, 3, np.random.default_rng(2))
        s = pr.generate_1d(g)
        finals = [run_dense(s, g, sv.init_product_state(g), force=f)[0] for f in outcome_patterns(s)]
        for other in finals[1:]:
            assert sv.fidelity(finals[0], other) == pytest.approx(1, abs=1e-10)

    def test_backends_agree_on_probabilities(self):
        g = dv.randomize_couplings(dv.build_2d_lattice(2), 1, 3, np.random.default_rng(2))
        s = pr.generate_2d(g)
        for f in itertools.islice(outcome_patterns(s), 6):
            _, rd = run_dense(s, g, sv.init_product_state(g), force=f)
            _, rt = run_tableau(s, g, force=f)
            assert rd.outcomes == rt.outcomes
            for k in rd.probabilities:
                assert rd.probabilities[k] == pytest.approx(rt.probabilities[k], abs=1e-12)


class TestFailureModel:
    def _ideal(self, g):
        init = sv.init_product_state(g, {0: "plus", 2: "plus"})
        out, _ = run_dense(pr.switching_cz(g, 0, 1, 2), g, init, force=1)
        return out

    def test_range_checked(self):
        with pytest.raises(ValueError):
            pr.FailureModel(1.2)
        with pytest.raises(ValueError):
            pr.FailureModel(-0.1)

    def test_no_failure(self):
        g = dv.build_chain(2)
        ideal = self._ideal(g)
        rho = pr.apply_failure_model(ideal, g, 0, 1, 2, pr.FailureModel(0.0), 1.0)
        np.testing.assert_allclose(rho, sv.reduced_density(ideal, (0, 2)), atol=1e-15)

    def test_no_residual_time(self):
        g = dv.build_chain(2)
        ideal = self._ideal(g)
        rho = pr.apply_failure_model(ideal, g, 0, 1, 2, pr.FailureModel(1.0), 0.0)
        np.testing.assert_allclose(rho, sv.reduced_density(ideal, (0, 2)), atol=1e-15)

    def test_phase_type_error(self):
        g = dv.build_chain(2, 1.5)
        ideal = self._ideal(g)
        rho0 = sv.reduced_density(ideal, (0, 2))
        eps, t = 0.1, math.pi / (2 * 1.5)
        rho = pr.apply_failure_model(ideal, g, 0, 1, 2, pr.FailureModel(eps), t)
        np.testing.assert_allclose(np.diag(rho), np.diag(rho0), atol=1e-12)
        # independent oracle: mixture with exp(-i g t (n_a + n_c)) applied to the pair
        U = np.diag(np.exp(-1j * 1.5 * t * np.array([0, 1, 1, 2])))
        expected = (1 - eps) * rho0 + eps * U @ rho0 @ U.conj().T
        np.testing.assert_allclose(rho, expected, atol=1e-12)
        assert trace_distance(rho, rho0) <= eps + 1e-12

    def test_excited_ancilla_residual(self):
        g = dv.build_chain(2, 1.0)
        ideal = self._ideal(g)
        bad = pr.residual_excited_state(ideal, g, 1, math.pi / 2)
        rho = sv.reduced_density(bad, (0, 2))
        psi = ideal.amps.reshape(2, 2, 2)[:, 0, :].reshape(-1)
        assert float(np.vdot(psi, rho @ psi).real) < 1 - 1e-3
