"""Shared helpers for the test suite."""

import math

import numpy as np

from xytomo import exact, rnn, training
from xytomo.rng import derive_rng


def zero_params(cell_kind, d_h):
    shapes = rnn._param_shapes(cell_kind, d_h)
    return rnn.RnnParameters(cell_kind, d_h, {k: np.zeros(s) for k, s in shapes.items()})


def random_params(cell_kind, d_h, seed):
    return rnn.init_parameters(cell_kind, d_h, derive_rng(seed, "test-params"))


def hand_built_two_site_params():
    """Vanilla d_h=1 model with conditionals (0.75, 0.25) then (0.5, 0.5)
    along the (0, 1) path: h1 = 0.5 from the fixed input, the recurrent
    weight cancels it at step 2."""
    p = zero_params("vanilla", 1)
    w00 = math.atanh(0.5)
    p.weights["W"][0, 0] = w00
    p.weights["U"][0, 0] = -2.0 * w00
    p.weights["V"][0, 0] = 2.0 * math.log(3.0)
    return p


def sector_batch(n, size, seed):
    basis = exact.build_sector_basis(n)
    rng = np.random.default_rng(seed)
    return basis.states[rng.integers(0, len(basis), size=size)]


def richardson_gradient(params, batch, mode, step=2e-3):
    """Noise-resistant finite-difference oracle: Richardson extrapolation of
    two central differences cancels the O(step^2) truncation term while the
    step stays large enough that float64 rounding noise is negligible."""
    full = training.finite_diff_gradient(params, batch, mode, step=step)
    half = training.finite_diff_gradient(params, batch, mode, step=step / 2)
    return {k: (4.0 * half[k] - full[k]) / 3.0 for k in full}


def gradient_agreement(analytic, oracle, names, rtol=1e-5, atol=1e-11):
    """Max elementwise violation of |a - fd| <= atol + rtol |fd| (<=1 passes)."""
    return max(
        float(np.max(np.abs(analytic[k] - oracle[k]) / (atol + rtol * np.abs(oracle[k]))))
        for k in names
    )
