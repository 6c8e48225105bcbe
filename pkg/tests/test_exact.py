import math

import numpy as np
import pytest

from xytomo import exact
from xytomo.errors import (
    ConvergenceFailure,
    DimensionMismatch,
    OddChainLength,
    SizeLimitExceeded,
)


def brute_force_hamiltonian(n, j=1.0):
    """Independent oracle: loop over all pairs of sector states and apply the
    matrix-element rule directly (exchange of one antiparallel NN pair)."""
    basis = exact.build_sector_basis(n)
    size = len(basis)
    h = np.zeros((size, size))
    states = basis.states
    for a in range(size):
        for bond in range(n - 1):
            if states[a, bond] != states[a, bond + 1]:
                partner = states[a].copy()
                partner[bond], partner[bond + 1] = partner[bond + 1], partner[bond]
                h[basis.index_of(partner), a] += -j / 2.0
    return h


class TestSectorBasis:
    def test_n2_enumeration(self):
        basis = exact.build_sector_basis(2)
        assert len(basis) == 2
        assert basis.states.tolist() == [[0, 1], [1, 0]]

    def test_sizes(self):
        assert len(exact.build_sector_basis(4)) == 6
        assert len(exact.build_sector_basis(10)) == 252

    def test_lexicographic_and_sector(self):
        basis = exact.build_sector_basis(8)
        assert np.all(basis.states.sum(axis=1) == 4)
        as_ints = [int("".join(map(str, row)), 2) for row in basis.states]
        assert as_ints == sorted(as_ints)
        assert len(set(as_ints)) == len(basis)

    def test_index_roundtrip(self):
        basis = exact.build_sector_basis(8)
        for k in (0, 1, 17, len(basis) - 1):
            assert basis.index_of(basis.states[k]) == k
        assert np.array_equal(basis.ranks_of(basis.states), np.arange(len(basis)))

    def test_guards(self):
        with pytest.raises(OddChainLength):
            exact.build_sector_basis(3)
        with pytest.raises(SizeLimitExceeded):
            exact.build_sector_basis(26)


class TestHamiltonian:
    def test_n2_single_exchange(self):
        spec = exact.XYChainSpec(2)
        basis = exact.build_sector_basis(2)
        v = np.array([1.0, 0.0])  # unit vector on (0,1)
        hv = exact.hamiltonian_apply(spec, basis, v)
        assert np.allclose(hv, [0.0, -0.5])

    def test_n2_ground_eigenvector(self):
        spec = exact.XYChainSpec(2)
        basis = exact.build_sector_basis(2)
        v = np.array([1.0, 1.0]) / np.sqrt(2)
        assert np.allclose(exact.hamiltonian_apply(spec, basis, v), -0.5 * v)

    def test_n4_matches_brute_force(self):
        spec = exact.XYChainSpec(4)
        basis = exact.build_sector_basis(4)
        h_oracle = brute_force_hamiltonian(4)
        # spot-check the spec case: only bond (2,3) of (0,0,1,1) is antiparallel
        v = np.zeros(6)
        v[basis.index_of([0, 0, 1, 1])] = 1.0
        hv = exact.hamiltonian_apply(spec, basis, v)
        expected = np.zeros(6)
        expected[basis.index_of([0, 1, 0, 1])] = -0.5
        assert np.allclose(hv, expected)
        assert np.allclose(hv, h_oracle @ v)
        # and the full operator
        for _ in range(3):
            u = np.random.default_rng(0).standard_normal(6)
            assert np.allclose(exact.hamiltonian_apply(spec, basis, u), h_oracle @ u)

    @pytest.mark.parametrize("n", [4, 8, 12])
    def test_symmetric(self, n):
        spec = exact.XYChainSpec(n)
        basis = exact.build_sector_basis(n)
        rng = np.random.default_rng(n)
        for _ in range(3):
            u = rng.standard_normal(len(basis))
            v = rng.standard_normal(len(basis))
            left = u @ exact.hamiltonian_apply(spec, basis, v)
            right = exact.hamiltonian_apply(spec, basis, u) @ v
            assert abs(left - right) < 1e-12 * max(1.0, abs(left))

    def test_dimension_mismatch(self):
        spec = exact.XYChainSpec(4)
        basis = exact.build_sector_basis(4)
        with pytest.raises(DimensionMismatch):
            exact.hamiltonian_apply(spec, basis, np.zeros(5))


class TestGroundState:
    def test_n2(self):
        gs = exact.ground_state(exact.XYChainSpec(2))
        assert np.allclose(gs.amplitudes, [1 / np.sqrt(2), 1 / np.sqrt(2)], atol=1e-12)
        assert abs(gs.energy - (-0.5)) < 1e-12

    def test_n4_energy(self):
        gs = exact.ground_state(exact.XYChainSpec(4))
        # cos(pi/5) + cos(2pi/5) = sqrt(5)/2
        assert abs(gs.energy - (-math.sqrt(5) / 2)) < 1e-10

    @pytest.mark.parametrize("n", [2, 4, 6, 8, 10, 12])
    def test_sign_free_and_normalized(self, n):
        gs = exact.ground_state(exact.XYChainSpec(n))
        assert gs.amplitudes.min() >= 0.0
        assert abs(gs.probabilities().sum() - 1.0) < 1e-12

    @pytest.mark.parametrize("n", [2, 4, 6, 8, 10, 12])
    def test_energy_is_rayleigh_quotient(self, n):
        gs = exact.ground_state(exact.XYChainSpec(n))
        hv = exact.hamiltonian_apply(gs.spec, gs.basis, gs.amplitudes)
        assert abs(gs.amplitudes @ hv - gs.energy) < 1e-10

    def test_coupling_scaling(self):
        assert abs(exact.ground_state(exact.XYChainSpec(4, 2.0)).energy
                   - 2.0 * exact.ground_state(exact.XYChainSpec(4)).energy) < 1e-10

    def test_size_guard(self):
        with pytest.raises(SizeLimitExceeded):
            exact.ground_state(exact.XYChainSpec(22))


class TestFreeFermion:
    def test_n2(self):
        assert abs(exact.free_fermion_energy(2) - (-0.5)) < 1e-14

    def test_n4(self):
        assert abs(exact.free_fermion_energy(4) - (-math.sqrt(5) / 2)) < 1e-14

    def test_beyond_diagonalization_limit(self):
        value = exact.free_fermion_energy(50)
        assert np.isfinite(value) and value < -15.0

    def test_coupling_linear(self):
        assert exact.free_fermion_energy(6, 3.0) == pytest.approx(
            3.0 * exact.free_fermion_energy(6), abs=1e-14)

    @pytest.mark.parametrize("n", [2, 4, 6, 8, 10, 12])
    def test_matches_diagonalization(self, n):
        gs = exact.ground_state(exact.XYChainSpec(n))
        assert abs(gs.energy - exact.free_fermion_energy(n)) <= 1e-10 * n


class TestSampling:
    def test_shape_and_sector(self):
        gs = exact.ground_state(exact.XYChainSpec(6))
        data = exact.sample_dataset(gs, 2000, np.random.default_rng(1))
        assert len(data) == 2000
        assert np.all(data.samples.sum(axis=1) == 3)

    def test_seed_determinism(self):
        gs = exact.ground_state(exact.XYChainSpec(4))
        a = exact.sample_dataset(gs, 500, np.random.default_rng(9))
        b = exact.sample_dataset(gs, 500, np.random.default_rng(9))
        assert np.array_equal(a.samples, b.samples)

    def test_n2_frequency(self):
        gs = exact.ground_state(exact.XYChainSpec(2))
        data = exact.sample_dataset(gs, 10**6, np.random.default_rng(7))
        freq = np.mean(np.all(data.samples == [0, 1], axis=1))
        assert abs(freq - 0.5) < 0.002


class TestFidelity:
    def test_self_overlap(self):
        gs = exact.ground_state(exact.XYChainSpec(6))
        assert abs(exact.fidelity(gs, gs.amplitude_of) - 1.0) < 1e-12

    def test_n2_uniform_is_exact(self):
        gs = exact.ground_state(exact.XYChainSpec(2))
        uniform = lambda configs: np.full(np.atleast_2d(configs).shape[0], 1 / np.sqrt(2))
        assert abs(exact.fidelity(gs, uniform) - 1.0) < 1e-12

    def test_n4_uniform_against_dot_product(self):
        gs = exact.ground_state(exact.XYChainSpec(4))
        uniform = lambda configs: np.full(np.atleast_2d(configs).shape[0], 1 / np.sqrt(6))
        expected = float(np.dot(gs.amplitudes, np.full(6, 1 / np.sqrt(6))) ** 2)
        assert abs(exact.fidelity(gs, uniform) - expected) < 1e-14
        assert expected < 1.0

    def test_scalar_amplitude_function(self):
        gs = exact.ground_state(exact.XYChainSpec(4))
        scalar = lambda config: float(gs.amplitude_of(config)[0])
        assert abs(exact.fidelity(gs, scalar) - 1.0) < 1e-12

    def test_permutation_invariance(self):
        gs = exact.ground_state(exact.XYChainSpec(6))
        rng = np.random.default_rng(3)
        model = 0.5 * gs.amplitudes + 0.5 / np.sqrt(len(gs.basis))
        model /= np.linalg.norm(model)
        perm = rng.permutation(len(gs.basis))
        direct = float(np.dot(gs.amplitudes, model) ** 2)
        permuted = float(np.dot(gs.amplitudes[perm], model[perm]) ** 2)
        assert abs(direct - permuted) < 1e-12


class TestExactModelEnergy:
    def test_ground_state_padded(self):
        gs = exact.ground_state(exact.XYChainSpec(6))
        val = exact.exact_model_energy(gs.spec, gs.amplitude_of)
        assert abs(val - gs.energy) < 1e-10

    def test_n2_uniform_by_hand(self):
        # 4 states, amplitudes 1/2 each; H couples (0,1)<->(1,0) with -J/2:
        # <psi|H|psi> = 2 * (1/4) * (-1/2) = -1/4
        spec = exact.XYChainSpec(2)
        uniform = lambda configs: np.full(np.atleast_2d(configs).shape[0], 0.5)
        assert abs(exact.exact_model_energy(spec, uniform) - (-0.25)) < 1e-14

    def test_single_basis_state(self):
        spec = exact.XYChainSpec(4)
        target = np.array([0, 1, 0, 1], dtype=np.uint8)
        fn = lambda configs: np.all(np.atleast_2d(configs) == target, axis=1).astype(float)
        assert exact.exact_model_energy(spec, fn) == 0.0

    def test_size_guard(self):
        with pytest.raises(SizeLimitExceeded):
            exact.exact_model_energy(exact.XYChainSpec(14), lambda c: 1.0)


class TestGroundStateCache:
    def test_roundtrip_and_determinism(self, tmp_path):
        gs = exact.ground_state(exact.XYChainSpec(6, 1.5))
        path = tmp_path / "gs.json"
        exact.save_ground_state(path, gs)
        loaded = exact.load_ground_state(path)
        assert loaded.spec == gs.spec
        assert loaded.energy == gs.energy
        assert np.array_equal(loaded.amplitudes, gs.amplitudes)
        other = tmp_path / "gs2.json"
        exact.save_ground_state(other, exact.ground_state(exact.XYChainSpec(6, 1.5)))
        assert path.read_bytes() == other.read_bytes()
