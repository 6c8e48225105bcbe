"""Monte-Carlo energy estimation and sector diagnostics.

The energy of a model state is estimated from its own samples via local
energies, E_loc(sigma) = sum_{sigma'} H_{sigma sigma'} psi(sigma')/psi(sigma).
Only configurations reachable by exchanging one antiparallel nearest-neighbor
pair contribute (H has no diagonal in this basis), so each sample costs O(N)
amplitude evaluations. For an exact eigenstate every local energy equals the
eigenvalue - the zero-variance principle the tests lean on.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ZeroAmplitudeConfig
from .exact import XYChainSpec, _amplitudes_on


@dataclass
class EnergyEstimate:
    mean: float
    stderr: float
    n_samples: int


def local_energies(amplitude_fn, samples, spec: XYChainSpec) -> np.ndarray:
    """Local energy of every sample row (batched amplitude evaluation)."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.uint8))
    b, n = samples.shape
    if n != spec.n_sites:
        raise ValueError(f"samples have {n} sites, spec has {spec.n_sites}")
    base = _amplitudes_on(amplitude_fn, samples)
    zero = np.nonzero(base <= 0.0)[0]
    if zero.size:
        raise ZeroAmplitudeConfig(
            f"sampled configuration {zero[0]} has amplitude {base[zero[0]]}; "
            "sampler and evaluator are inconsistent")
    rows, flipped = [], []
    for i in range(n - 1):
        anti = np.nonzero(samples[:, i] != samples[:, i + 1])[0]
        if anti.size == 0:
            continue
        sw = samples[anti].copy()
        sw[:, [i, i + 1]] = sw[:, [i + 1, i]]
        rows.append(anti)
        flipped.append(sw)
    out = np.zeros(b)
    if rows:
        rows = np.concatenate(rows)
        amps = _amplitudes_on(amplitude_fn, np.concatenate(flipped, axis=0))
        np.add.at(out, rows, amps)
        out *= -spec.coupling / 2.0
        out /= base
    return out


def local_energy(amplitude_fn, config, spec: XYChainSpec) -> float:
    return float(local_energies(amplitude_fn, np.atleast_2d(config), spec)[0])


def energy_estimate(amplitude_fn, samples, spec: XYChainSpec) -> EnergyEstimate:
    """Mean local energy over samples drawn from |amplitude_fn|^2.

    stderr is the sample standard deviation of the local energies divided by
    sqrt(n); it collapses to 0 for exact eigenstates.
    """
    e_loc = local_energies(amplitude_fn, samples, spec)
    n = e_loc.shape[0]
    stderr = float(e_loc.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return EnergyEstimate(mean=float(e_loc.mean()), stderr=stderr, n_samples=n)


def energy_difference(e_model: float, e_exact: float, n_sites: int) -> float:
    """Absolute energy difference per site."""
    if n_sites < 1:
        raise ValueError("n_sites must be >= 1")
    return abs(e_model - e_exact) / n_sites


def sector_fraction(samples) -> float:
    """Fraction of samples outside the zero-magnetization sector."""
    samples = np.atleast_2d(np.asarray(samples))
    if samples.shape[0] == 0:
        raise ValueError("samples must be nonempty")
    n = samples.shape[1]
    return float(np.mean(samples.sum(axis=1) != n // 2))
