import numpy as np
import pytest
import scipy.sparse as sp
from scipy.linalg import expm

from chaos_anneal.errors import (BudgetError, MisuseError, ParameterError,
                                 StepSizeError)
from chaos_anneal.hilbert import (FockDims, JumpEnsembleConfig, JumpOperators,
                                  NoJumpPropagator, accumulate_density_matrix,
                                  annihilation_matrix, basis_state,
                                  build_hamiltonian,
                                  cavity_density_from_states,
                                  coherent_amplitudes, effective_hamiltonian,
                                  evolve_trajectory, expectation_value,
                                  integrate_master_oracle, jump_probabilities,
                                  jump_step, number_diagonals,
                                  partial_trace_cavity,
                                  product_coherent_state,
                                  simulate_jump_ensemble,
                                  validate_density_matrix)
from chaos_anneal.model import DimensionlessParams


def small_params(**kw):
    base = dict(delta=0.5, kappa=0.3, gamma=0.2, coupling=0.4, kerr=0.3,
                drive=0.5)
    base.update(kw)
    return DimensionlessParams(**base)


class TestOperators:
    def test_two_level_lowering_matrix(self):
        dims = FockDims(2, 1)
        a = annihilation_matrix(2, "a", dims).matrix.toarray()
        assert np.array_equal(a, np.array([[0, 1], [0, 0]], dtype=complex))

    def test_truncated_commutator_defect(self):
        dims = FockDims(5, 1)
        a = annihilation_matrix(5, "a", dims).matrix.toarray()
        defect = a @ a.conj().T - a.conj().T @ a
        expected = np.diag([1.0, 1.0, 1.0, 1.0, -4.0])
        assert np.allclose(defect, expected, atol=1e-14)

    def test_number_action(self):
        dims = FockDims(4, 3)
        a = annihilation_matrix(4, "a", dims).matrix
        num = (a.conj().T @ a).toarray()
        for n_a in range(4):
            psi = basis_state(dims, n_a, 1)
            assert np.vdot(psi, num @ psi).real == pytest.approx(n_a)

    def test_mode_b_embedding(self):
        dims = FockDims(2, 3)
        b = annihilation_matrix(3, "b", dims).matrix
        psi = basis_state(dims, 1, 2)
        out = b @ psi
        assert np.vdot(basis_state(dims, 1, 1), out) == pytest.approx(np.sqrt(2))

    def test_dimension_mismatch_rejected(self):
        dims = FockDims(2, 3)
        with pytest.raises(MisuseError):
            annihilation_matrix(4, "a", dims)

    def test_budget_guard(self):
        with pytest.raises(BudgetError):
            FockDims(1000, 1000)


class TestHamiltonian:
    def test_bare_mechanical_spectrum(self):
        dims = FockDims(2, 3)
        d = small_params(delta=0.0, coupling=0.0, kerr=0.0, drive=0.0)
        h = build_hamiltonian(d, dims).matrix.toarray()
        _, n_b = number_diagonals(dims)
        assert np.allclose(h, np.diag(n_b), atol=1e-14)

    def test_hermiticity(self):
        dims = FockDims(4, 5)
        h = build_hamiltonian(small_params(), dims).matrix.toarray()
        assert np.abs(h - h.conj().T).max() < 1e-12

    def test_optomechanical_matrix_element(self):
        dims = FockDims(2, 2)
        d = small_params(delta=0.0, coupling=1.0, kerr=0.0, drive=0.0)
        h = build_hamiltonian(d, dims).matrix.toarray()
        bra = basis_state(dims, 1, 0)
        ket = basis_state(dims, 1, 1)
        assert np.vdot(bra, h @ ket) == pytest.approx(-1.0)

    def test_detuning_sign_gives_heisenberg_drift(self):
        # d<a>/dt from -i<[a, H]> must carry +i delta <a>
        dims = FockDims(3, 1)
        d = small_params(delta=0.7, coupling=0.0, kerr=0.0, drive=0.0,
                         kappa=1e-9, gamma=1e-9)
        h = build_hamiltonian(d, dims).matrix.toarray()
        a = annihilation_matrix(3, "a", dims).matrix.toarray()
        psi = product_coherent_state(dims, alpha=0.3)
        comm = a @ h - h @ a
        drift = -1j * np.vdot(psi, comm @ psi)
        mean_a = np.vdot(psi, a @ psi)
        assert drift == pytest.approx(1j * d.delta * mean_a, rel=1e-6)

    def test_effective_hamiltonian_anti_hermitian_part(self):
        dims = FockDims(3, 4)
        d = small_params()
        h = build_hamiltonian(d, dims)
        h_eff = effective_hamiltonian(h, d, dims).matrix.toarray()
        n_a, n_b = number_diagonals(dims)
        diff = h_eff - h.matrix.toarray()
        assert np.allclose(diff, -1j * np.diag(d.kappa * n_a + d.gamma * n_b),
                           atol=1e-14)

    def test_effective_equals_plain_without_losses(self):
        dims = FockDims(3, 2)
        d = small_params(kappa=1e-300, gamma=1e-300)
        h = build_hamiltonian(d, dims)
        h_eff = effective_hamiltonian(h, d, dims)
        assert np.allclose(h_eff.matrix.toarray(), h.matrix.toarray())


class TestJumpStep:
    def test_vacuum_probabilities(self):
        dims = FockDims(3, 3)
        d = small_params(drive=0.0)
        ops = JumpOperators.build(d, dims, dt=1e-3)
        psi = basis_state(dims, 0, 0)
        p0, p1, p2 = jump_probabilities(psi, ops.n_a_diag, ops.n_b_diag,
                                        d.kappa, d.gamma, 1e-3)
        assert p1 == 0.0 and p2 == 0.0 and p0 == 1.0

    def test_single_photon_probabilities(self):
        dims = FockDims(3, 3)
        d = small_params()
        ops = JumpOperators.build(d, dims, dt=2e-3)
        psi = basis_state(dims, 1, 0)
        p0, p1, p2 = jump_probabilities(psi, ops.n_a_diag, ops.n_b_diag,
                                        d.kappa, d.gamma, 2e-3)
        assert p1 == pytest.approx(2.0 * d.kappa * 2e-3)
        assert p2 == 0.0
        assert p0 + p1 + p2 == pytest.approx(1.0)

    def test_partition_sums_to_one_for_random_state(self, rng):
        dims = FockDims(4, 5)
        d = small_params()
        ops = JumpOperators.build(d, dims, dt=1e-3)
        psi = rng.standard_normal(dims.total) + 1j * rng.standard_normal(dims.total)
        psi /= np.linalg.norm(psi)
        p0, p1, p2 = jump_probabilities(psi, ops.n_a_diag, ops.n_b_diag,
                                        d.kappa, d.gamma, 1e-3)
        assert p0 + p1 + p2 == pytest.approx(1.0, abs=1e-14)

    def test_vacuum_state_unchanged_up_to_phase(self):
        dims = FockDims(3, 3)
        d = small_params(drive=0.0)
        ops = JumpOperators.build(d, dims, dt=1e-3)
        psi = basis_state(dims, 0, 0)
        out, event = jump_step(psi, ops, np.random.default_rng(0))
        assert event is None
        assert abs(np.vdot(out, psi)) == pytest.approx(1.0)

    def test_forced_cavity_jump_lands_in_vacuum(self):
        dims = FockDims(3, 3)
        d = small_params(drive=0.0)
        ops = JumpOperators.build(d, dims, dt=1e-3)
        psi = basis_state(dims, 1, 0)

        class ZeroRng:
            def random(self):
                return 0.0

        out, event = jump_step(psi, ops, ZeroRng())
        assert event == "a"
        assert np.allclose(out, basis_state(dims, 0, 0))

    def test_oversized_step_rejected(self):
        dims = FockDims(4, 2)
        d = small_params(kappa=3.0)
        ops = JumpOperators.build(d, dims, dt=0.05)
        psi = basis_state(dims, 3, 0)  # P1 = 2*3*0.05*3 = 0.9
        with pytest.raises(StepSizeError):
            jump_step(psi, ops, np.random.default_rng(0))


class TestPropagator:
    def test_taylor_matches_dense_exponential(self, rng):
        dims = FockDims(4, 4)
        d = small_params()
        h_eff = effective_hamiltonian(build_hamiltonian(d, dims), d, dims)
        dense = NoJumpPropagator(h_eff, dt=0.05, dense_max_dim=1024)
        taylor = NoJumpPropagator(h_eff, dt=0.05, dense_max_dim=1)
        psi = rng.standard_normal(dims.total) + 1j * rng.standard_normal(dims.total)
        assert np.abs(dense.apply(psi) - taylor.apply(psi)).max() < 1e-8

    def test_substep_fraction(self, rng):
        dims = FockDims(3, 3)
        d = small_params()
        h_eff = effective_hamiltonian(build_hamiltonian(d, dims), d, dims)
        prop = NoJumpPropagator(h_eff, dt=0.1)
        psi = rng.standard_normal(dims.total) + 1j * rng.standard_normal(dims.total)
        half = prop.apply(prop.apply(psi, substeps=2), substeps=2)
        assert np.abs(half - prop.apply(psi)).max() < 1e-10


class TestStatesAndObservables:
    def test_coherent_amplitudes_poissonian(self):
        amps = coherent_amplitudes(0.6, 25)
        n = np.arange(25)
        probs = np.abs(amps) ** 2
        assert probs.sum() == pytest.approx(1.0)
        assert probs @ n == pytest.approx(0.36, rel=1e-6)

    def test_expectation_values(self):
        dims = FockDims(2, 1)
        a = annihilation_matrix(2, "a", dims)
        num = a.matrix.conj().T @ a.matrix
        vac = basis_state(dims, 0, 0)
        assert expectation_value(vac, num) == 0.0
        one = basis_state(dims, 1, 0)
        assert expectation_value(np.outer(one, one.conj()), num) == pytest.approx(1.0)
        mixed = 0.5 * np.eye(2, dtype=complex)
        assert expectation_value(mixed, num) == pytest.approx(0.5)

    def test_partial_trace_product_state(self, rng):
        dims = FockDims(3, 4)
        rho_a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        rho_a = rho_a @ rho_a.conj().T
        rho_a /= np.trace(rho_a)
        rho_b = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        rho_b = rho_b @ rho_b.conj().T
        rho_b /= np.trace(rho_b)
        full = np.kron(rho_a, rho_b)
        assert np.allclose(partial_trace_cavity(full, dims), rho_a, atol=1e-12)

    def test_partial_trace_bell_state(self):
        dims = FockDims(2, 2)
        psi = (basis_state(dims, 0, 0) + basis_state(dims, 1, 1)) / np.sqrt(2)
        rho_a = partial_trace_cavity(np.outer(psi, psi.conj()), dims)
        assert np.allclose(rho_a, 0.5 * np.eye(2), atol=1e-12)

    def test_partial_trace_preserves_trace(self, rng):
        dims = FockDims(3, 3)
        m = rng.standard_normal((9, 9)) + 1j * rng.standard_normal((9, 9))
        rho = m @ m.conj().T
        rho /= np.trace(rho)
        assert np.trace(partial_trace_cavity(rho, dims)) == pytest.approx(
            1.0, abs=1e-12)

    def test_accumulate_single_state_is_projector(self):
        dims = FockDims(2, 2)
        psi = product_coherent_state(dims, alpha=0.4, beta=0.2)
        rho = accumulate_density_matrix([psi])
        assert np.abs(rho @ rho - rho).max() < 1e-10
        assert np.trace(rho) == pytest.approx(1.0, abs=1e-10)

    def test_accumulate_orthogonal_pair(self):
        dims = FockDims(2, 2)
        rho = accumulate_density_matrix([basis_state(dims, 0, 0),
                                         basis_state(dims, 1, 1)])
        eigs = np.sort(np.linalg.eigvalsh(rho))[::-1]
        assert eigs[:2] == pytest.approx([0.5, 0.5])
        assert abs(eigs[2:]).max() < 1e-14

    def test_cavity_density_shortcut_matches_partial_trace(self, rng):
        dims = FockDims(3, 4)
        states = []
        for _ in range(5):
            psi = rng.standard_normal(dims.total) + 1j * rng.standard_normal(dims.total)
            states.append(psi / np.linalg.norm(psi))
        direct = cavity_density_from_states(states, dims)
        full = accumulate_density_matrix(states)
        assert np.allclose(direct, partial_trace_cavity(full, dims), atol=1e-12)

    def test_validate_density_matrix_rejects_non_hermitian(self):
        bad = np.array([[1.0, 0.5], [0.0, 0.0]], dtype=complex)
        with pytest.raises(MisuseError):
            validate_density_matrix(bad)


class TestTrajectories:
    def test_deterministic_per_seed_and_index(self):
        dims = FockDims(3, 3)
        d = small_params()
        psi0 = basis_state(dims, 0, 0)
        t1 = evolve_trajectory(psi0, d, dims, t_end=2.0, dt=2e-3,
                               sample_stride=100, traj_index=4, seed=9)
        t2 = evolve_trajectory(psi0, d, dims, t_end=2.0, dt=2e-3,
                               sample_stride=100, traj_index=4, seed=9)
        assert np.array_equal(t1.n_a, t2.n_a)
        assert t1.jumps_a == t2.jumps_a

    def test_unitary_limit_conserves_norm_and_energy(self):
        dims = FockDims(4, 4)
        d = small_params(kappa=1e-12, gamma=1e-12, drive=0.0)
        psi0 = (basis_state(dims, 0, 0) + basis_state(dims, 1, 1)
                + basis_state(dims, 2, 0)) / np.sqrt(3)
        h = build_hamiltonian(d, dims)
        traj = evolve_trajectory(psi0, d, dims, t_end=10.0, dt=5e-3,
                                 sample_stride=200, traj_index=0, seed=3,
                                 snapshot_times=(10.0,))
        psi_final = traj.snapshots[10.0]
        assert np.linalg.norm(psi_final) == pytest.approx(1.0, abs=1e-10)
        e0 = expectation_value(psi0, h).real
        e1 = expectation_value(psi_final, h).real
        assert e1 == pytest.approx(e0, rel=1e-6)

    @pytest.mark.filterwarnings("ignore:top-level Fock population")
    def test_decay_law_against_analytic(self):
        dims = FockDims(3, 2)
        d = small_params(delta=0.0, kappa=0.4, gamma=1e-7, coupling=0.0,
                         kerr=0.0, drive=0.0)
        psi0 = basis_state(dims, 1, 0)
        cfg = JumpEnsembleConfig(n_traj=2000, t_end=3.0, dt=2e-3,
                                 sample_stride=300, block_size=1024)
        res = simulate_jump_ensemble(psi0, d, dims, cfg, seed=21)
        exact = np.exp(-2 * d.kappa * res.times)
        se = np.sqrt(exact * (1 - exact) / res.n_traj)
        assert np.all(np.abs(res.mean_n_a - exact) <= 5 * np.maximum(se, 1e-12))

    @pytest.mark.filterwarnings("ignore:top-level Fock population")
    def test_ensemble_worker_invariance(self):
        dims = FockDims(3, 3)
        d = small_params()
        psi0 = basis_state(dims, 0, 0)
        cfg = JumpEnsembleConfig(n_traj=32, t_end=0.5, dt=2e-3,
                                 sample_stride=50, block_size=8,
                                 snapshot_times=(0.5,))
        r1 = simulate_jump_ensemble(psi0, d, dims, cfg, seed=5, workers=1)
        r2 = simulate_jump_ensemble(psi0, d, dims, cfg, seed=5, workers=2)
        assert np.array_equal(r1.mean_n_a, r2.mean_n_a)
        assert np.array_equal(r1.rho_cavity[0.5], r2.rho_cavity[0.5])

    @pytest.mark.filterwarnings("ignore:top-level Fock population")
    def test_snapshot_density_matrix_is_physical(self):
        dims = FockDims(3, 3)
        d = small_params()
        psi0 = basis_state(dims, 0, 0)
        cfg = JumpEnsembleConfig(n_traj=64, t_end=1.0, dt=2e-3,
                                 sample_stride=100, snapshot_times=(1.0,),
                                 accumulate_full_rho=True)
        res = simulate_jump_ensemble(psi0, d, dims, cfg, seed=13)
        rho_full = res.rho_full[1.0]
        validate_density_matrix(rho_full, check_eigs=True)
        rho_a = res.rho_cavity[1.0]
        assert np.allclose(rho_a, partial_trace_cavity(rho_full, dims),
                           atol=1e-10)


class TestMasterOracle:
    def test_trace_preservation(self):
        dims = FockDims(3, 4)
        d = small_params()
        rho0 = np.outer(basis_state(dims, 0, 0), basis_state(dims, 0, 0))
        times, rhos = integrate_master_oracle(rho0, d, dims, t_end=10.0,
                                              dt=1e-3, sample_stride=1000)
        traces = np.array([np.trace(r).real for r in rhos])
        assert np.abs(traces - 1.0).max() < 1e-8

    def test_decay_matches_analytic(self):
        dims = FockDims(3, 2)
        d = small_params(delta=0.0, kappa=0.4, gamma=1e-7, coupling=0.0,
                         kerr=0.0, drive=0.0)
        psi0 = basis_state(dims, 1, 0)
        rho0 = np.outer(psi0, psi0.conj())
        times, rhos = integrate_master_oracle(rho0, d, dims, t_end=5.0,
                                              dt=1e-3, sample_stride=500)
        a = annihilation_matrix(3, "a", dims).matrix
        num = a.conj().T @ a
        vals = np.array([expectation_value(r, num).real for r in rhos])
        assert vals == pytest.approx(np.exp(-2 * d.kappa * times), abs=1e-6)

    def test_budget_refusal(self):
        dims = FockDims(10, 10)
        d = small_params()
        with pytest.raises(BudgetError):
            integrate_master_oracle(np.eye(100) / 100, d, dims, 1.0, 1e-3)

    @pytest.mark.filterwarnings("ignore:top-level Fock population")
    def test_jump_ensemble_matches_oracle(self):
        dims = FockDims(3, 4)
        d = small_params()
        psi0 = basis_state(dims, 0, 0)
        rho0 = np.outer(psi0, psi0.conj())
        times, rhos = integrate_master_oracle(rho0, d, dims, t_end=6.0,
                                              dt=1e-3, sample_stride=1000)
        a = annihilation_matrix(3, "a", dims).matrix
        num = a.conj().T @ a
        oracle = np.array([expectation_value(r, num).real for r in rhos])
        cfg = JumpEnsembleConfig(n_traj=2000, t_end=6.0, dt=2e-3,
                                 sample_stride=500, block_size=1024)
        res = simulate_jump_ensemble(psi0, d, dims, cfg, seed=17)
        assert np.array_equal(res.times, times)
        dev = np.abs(res.mean_n_a - oracle)
        assert np.all(dev <= 5 * np.maximum(res.se_n_a, 1e-12))
