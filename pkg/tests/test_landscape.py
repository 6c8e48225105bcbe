import numpy as np
import pytest
from conftest import random_params

from xytomo import exact, landscape, rnn, training
from xytomo.errors import DegeneratePlane
from xytomo.rng import derive_rng


def make_plane(n_params=40, seed=0, grid=(-1.0, 0.0, 0.3, 1.0)):
    rng = derive_rng(seed, "plane")
    theta = rng.standard_normal(n_params)
    delta, eta = landscape.random_directions(n_params, rng)
    g = np.asarray(grid)
    return landscape.LandscapePlane(theta, delta, eta, g, g)


class TestRandomDirections:
    def test_shapes_and_determinism(self):
        d1, e1 = landscape.random_directions(100, derive_rng(1, "dirs"))
        d2, e2 = landscape.random_directions(100, derive_rng(1, "dirs"))
        assert d1.shape == e1.shape == (100,)
        assert np.array_equal(d1, d2) and np.array_equal(e1, e2)
        assert not np.array_equal(d1, e1)

    def test_standard_normal_moments(self):
        d, e = landscape.random_directions(20_000, derive_rng(2, "dirs"))
        for v in (d, e):
            assert abs(v.mean()) < 3 / np.sqrt(20_000)
            assert abs(v.var() - 1.0) < 3 * np.sqrt(2.0 / 20_000)


class TestLossSurface:
    def test_origin_is_exact(self):
        plane = make_plane()
        calls = []

        def loss(theta):
            calls.append(theta)
            return float(theta @ theta)

        values = landscape.loss_surface(plane, loss)
        i = list(plane.alpha_grid).index(0.0)
        assert values[i, i] == float(plane.theta_star @ plane.theta_star)

    def test_constant_along_zero_direction(self):
        plane = make_plane()
        plane.delta = np.zeros_like(plane.delta)
        values = landscape.loss_surface(plane, lambda t: float(t @ t))
        assert np.allclose(values, values[0, :][None, :])

    def test_probe_point_recomputation(self):
        # surface value at (0.3, -0.7) equals an independent evaluation of the
        # NLL at the displaced parameters
        p = random_params("gru", 4, 3)
        data = exact.sample_dataset(exact.ground_state(exact.XYChainSpec(4)), 64,
                                    derive_rng(0, "data"))

        def loss(theta):
            q = rnn.RnnParameters.from_vector("gru", 4, theta)
            return training.nll(q, data.samples, rnn.MODE_U1)

        theta = p.to_vector()
        rng = derive_rng(4, "dirs")
        delta, eta = landscape.random_directions(theta.size, rng)
        plane = landscape.LandscapePlane(theta, delta, eta,
                                         np.array([0.3]), np.array([-0.7]))
        surface = landscape.loss_surface(plane, loss)
        direct = loss(theta + 0.3 * delta - 0.7 * eta)
        assert surface[0, 0] == direct

    def test_grid_order_does_not_matter(self):
        plane = make_plane(seed=5)
        loss = lambda t: float(np.sin(t).sum())
        base = landscape.loss_surface(plane, loss)
        flipped = landscape.LandscapePlane(
            plane.theta_star, plane.delta, plane.eta,
            plane.alpha_grid[::-1].copy(), plane.beta_grid[::-1].copy())
        assert np.array_equal(landscape.loss_surface(flipped, loss), base[::-1, ::-1])


class TestProjectPath:
    def test_optimum_maps_to_origin(self):
        plane = make_plane(seed=6)
        rows = landscape.project_path([plane.theta_star], plane)
        assert np.array_equal(rows[0], [0.0, 0.0, 0.0])

    def test_in_plane_point_recovered_exactly(self):
        plane = make_plane(seed=7)
        rows = landscape.project_path([plane.theta_star + 2.0 * plane.delta], plane)
        assert abs(rows[0, 0] - 2.0) < 1e-10
        assert abs(rows[0, 1]) < 1e-10
        assert rows[0, 2] < 1e-10

    def test_residual_orthogonal_to_plane(self):
        plane = make_plane(seed=8)
        rng = derive_rng(9, "off-plane")
        theta = plane.theta_star + rng.standard_normal(plane.theta_star.size)
        alpha, beta, res_norm = landscape.project_path([theta], plane)[0]
        residual = theta - plane.theta_star - alpha * plane.delta - beta * plane.eta
        assert abs(residual @ plane.delta) < 1e-8
        assert abs(residual @ plane.eta) < 1e-8
        assert res_norm == pytest.approx(float(np.linalg.norm(residual)))

    def test_degenerate_plane(self):
        plane = make_plane(seed=10)
        plane.eta = 2.0 * plane.delta
        with pytest.raises(DegeneratePlane):
            landscape.project_path([plane.theta_star], plane)


class TestAgainstTraining:
    def test_origin_equals_final_training_nll(self):
        gs = exact.ground_state(exact.XYChainSpec(4))
        data = exact.sample_dataset(gs, 128, derive_rng(1, "data"))
        config = training.TrainingConfig(epochs=3, d_h=4, symmetry_mode=rnn.MODE_U1,
                                         eval_every=1, eval_samples=100)
        params, records = training.train(config, data, gs)

        def loss(theta):
            q = rnn.RnnParameters.from_vector("gru", 4, theta)
            return training.nll(q, data.samples, rnn.MODE_U1)

        theta = params.to_vector()
        delta, eta = landscape.random_directions(theta.size, derive_rng(2, "dirs"))
        grid = landscape.default_grid(1.0, 3)
        plane = landscape.LandscapePlane(theta, delta, eta, grid, grid)
        surface = landscape.loss_surface(plane, loss)
        assert surface[1, 1] == records[-1].nll_train
