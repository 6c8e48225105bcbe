import numpy as np
import pytest

from xytomo import exact, observables
from xytomo.errors import ZeroAmplitudeConfig
from xytomo.rng import derive_rng


def uniform_amplitude(value):
    return lambda configs: np.full(np.atleast_2d(configs).shape[0], value)


class TestLocalEnergy:
    def test_ferromagnetic_config_is_zero(self):
        spec = exact.XYChainSpec(6)
        assert observables.local_energy(uniform_amplitude(1.0), np.zeros(6), spec) == 0.0

    def test_n2_single_bond(self):
        spec = exact.XYChainSpec(2)
        val = observables.local_energy(uniform_amplitude(0.5), [0, 1], spec)
        assert val == pytest.approx(-0.5, abs=1e-15)

    def test_coupling_scales(self):
        spec = exact.XYChainSpec(2, coupling=3.0)
        val = observables.local_energy(uniform_amplitude(1.0), [1, 0], spec)
        assert val == pytest.approx(-1.5, abs=1e-15)

    @pytest.mark.parametrize("n", [4, 8, 12])
    def test_zero_variance_on_exact_state(self, n):
        gs = exact.ground_state(exact.XYChainSpec(n))
        e_loc = observables.local_energies(gs.amplitude_of, gs.basis.states, gs.spec)
        assert np.max(np.abs(e_loc - gs.energy)) < 1e-9

    def test_zero_amplitude_aborts(self):
        spec = exact.XYChainSpec(4)
        gs = exact.ground_state(spec)
        with pytest.raises(ZeroAmplitudeConfig):
            observables.local_energies(gs.amplitude_of,
                                       np.array([[1, 1, 1, 0]], dtype=np.uint8), spec)


class TestEnergyEstimate:
    def test_exact_state_samples(self):
        gs = exact.ground_state(exact.XYChainSpec(6))
        data = exact.sample_dataset(gs, 3000, derive_rng(0, "data"))
        est = observables.energy_estimate(gs.amplitude_of, data.samples, gs.spec)
        assert est.mean == pytest.approx(gs.energy, abs=1e-10)
        assert est.stderr < 1e-10
        assert est.n_samples == 3000

    def test_exhaustive_uniform_matches_full_enumeration(self):
        # uniform amplitudes: an exhaustive sample set weights all configs
        # equally, exactly like the Rayleigh-quotient oracle
        spec = exact.XYChainSpec(2)
        samples = exact.full_basis(2)
        est = observables.energy_estimate(uniform_amplitude(0.5), samples, spec)
        oracle = exact.exact_model_energy(spec, uniform_amplitude(0.5))
        assert est.mean == pytest.approx(oracle, abs=1e-14)

    @pytest.mark.parametrize("n", [2, 4, 6, 8])
    def test_unbiased_under_weighted_enumeration(self, n):
        # sum_s q(s) E_loc(s) over the full basis == <H> for any model
        spec = exact.XYChainSpec(n)
        rng = np.random.default_rng(n)
        amps = rng.random(2**n) + 0.05
        amps /= np.linalg.norm(amps)
        configs = exact.full_basis(n)

        def amp_fn(rows):
            rows = np.atleast_2d(rows)
            shifts = np.arange(n - 1, -1, -1)
            idx = (rows.astype(np.int64) << shifts[None, :]).sum(axis=1)
            return amps[idx]

        e_loc = observables.local_energies(amp_fn, configs, spec)
        weighted = float(np.sum(amps**2 * e_loc))
        assert weighted == pytest.approx(exact.exact_model_energy(spec, amp_fn), abs=1e-10)

    def test_stderr_scales_with_sample_count(self):
        gs = exact.ground_state(exact.XYChainSpec(8))
        noisy = 0.8 * gs.amplitudes + 0.2 / np.sqrt(len(gs.basis))
        noisy /= np.linalg.norm(noisy)
        model = exact.GroundState(gs.spec, gs.basis, noisy, energy=0.0)
        data = exact.sample_dataset(model, 40_000, derive_rng(1, "data"))
        small = observables.energy_estimate(model.amplitude_of, data.samples[:2500], gs.spec)
        large = observables.energy_estimate(model.amplitude_of, data.samples, gs.spec)
        # 16x the samples: stderr should shrink ~4x, within a 1.5 factor
        ratio = small.stderr / large.stderr
        assert 4.0 / 1.5 < ratio < 4.0 * 1.5


class TestEnergyDifference:
    def test_equal_energies(self):
        assert observables.energy_difference(-1.5, -1.5, 6) == 0.0

    def test_arithmetic(self):
        assert observables.energy_difference(-1.0, -1.118, 4) == pytest.approx(0.0295)

    def test_symmetric_and_literal(self):
        a = observables.energy_difference(-1.0, -1.2, 5)
        b = observables.energy_difference(-1.2, -1.0, 5)
        assert a == b == pytest.approx(abs(-1.0 - (-1.2)) / 5, abs=1e-15)


class TestSectorFraction:
    def test_in_sector_samples(self):
        samples = exact.build_sector_basis(6).states
        assert observables.sector_fraction(samples) == 0.0

    def test_all_ones(self):
        assert observables.sector_fraction(np.ones((10, 4), dtype=np.uint8)) == 1.0

    def test_uniform_sampling_weight(self):
        rng = derive_rng(2, "uniform")
        samples = (rng.random((100_000, 10)) < 0.5).astype(np.uint8)
        expected = 1.0 - 252 / 1024
        sigma = np.sqrt(expected * (1 - expected) / 100_000)
        assert abs(observables.sector_fraction(samples) - expected) < 3 * sigma
