"""Exact ground states of the open spin-1/2 XY chain, and the oracles built on them.

Configurations are occupation vectors sigma in {0,1}^N with spin-up = 0
(sigma_i = 1/2 - S^z_i). The Hamiltonian

    H = -J sum_{<ij>} (S^x_i S^x_j + S^y_i S^y_j)

conserves total magnetization, so the ground state lives in the sector with
exactly N/2 ones. For J > 0 it is sign-free (Perron-Frobenius), which lets us
treat the amplitude vector as the square root of a probability distribution
over the sector and draw measurement datasets from it directly. This replaces
a tensor-network data pipeline at desk scale (N <= 20) with a bit-exact one.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    ConvergenceFailure,
    DimensionMismatch,
    OddChainLength,
    SizeLimitExceeded,
)

BASIS_SIZE_LIMIT = 24      # sector enumeration guard
DIAG_SIZE_LIMIT = 20       # eigensolver / fidelity guard
DENSE_SECTOR_LIMIT = 4000  # dense eigh below, Lanczos above
FULL_BASIS_LIMIT = 12      # full 2^N enumeration guard
SPECTRAL_GAP_FLOOR = 1e-8


@dataclass(frozen=True)
class XYChainSpec:
    """Open XY chain: site count and coupling (the dimensionless energy unit)."""

    n_sites: int
    coupling: float = 1.0

    def __post_init__(self):
        if self.n_sites < 2 or self.n_sites % 2 != 0:
            raise OddChainLength(f"n_sites must be even and >= 2, got {self.n_sites}")
        if not self.coupling > 0:
            raise ValueError(f"coupling must be > 0 (sign-free regime), got {self.coupling}")


class SectorBasis:
    """Zero-magnetization sector basis in ascending lexicographic order.

    States are rows of ``states`` (uint8, shape (size, N)), ordered
    lexicographically with sigma_1 as the most significant digit.
    ``index_of`` is the exact inverse of the enumeration (combinatorial rank),
    so indices are reproducible across runs and in files.
    """

    def __init__(self, n_sites: int, states: np.ndarray):
        self.n_sites = n_sites
        self.states = states
        # binom[m, r] = C(m, r), used by the vectorized ranking below
        n = n_sites
        binom = np.zeros((n + 1, n + 1), dtype=np.int64)
        for m in range(n + 1):
            binom[m, 0] = 1
            for r in range(1, m + 1):
                binom[m, r] = binom[m - 1, r - 1] + binom[m - 1, r]
        self._binom = binom

    def __len__(self):
        return self.states.shape[0]

    def ranks_of(self, configs: np.ndarray) -> np.ndarray:
        """Sector indices of configs (shape (B, N)); inverse of enumeration.

        Callers must pass configurations with exactly N/2 ones.
        """
        configs = np.asarray(configs, dtype=np.int64)
        if configs.ndim == 1:
            configs = configs[None, :]
        if configs.shape[1] != self.n_sites:
            raise DimensionMismatch(
                f"configs have {configs.shape[1]} sites, basis has {self.n_sites}")
        n = self.n_sites
        # ones still to place before consuming each position (exclusive prefix)
        ones_left = n // 2 - (np.cumsum(configs, axis=1) - configs)
        remaining = n - 1 - np.arange(n)
        contrib = self._binom[remaining[None, :], ones_left] * configs
        return contrib.sum(axis=1)

    def index_of(self, config) -> int:
        """Sector index of a single configuration."""
        return int(self.ranks_of(np.asarray(config))[0])


def build_sector_basis(n_sites: int) -> SectorBasis:
    """Enumerate all N-bit strings with exactly N/2 ones, lexicographically.

    Uses Gosper's hack to walk same-popcount integers in ascending order,
    which coincides with lexicographic order when sigma_1 is the most
    significant bit.
    """
    if n_sites % 2 != 0 or n_sites < 2:
        raise OddChainLength(f"n_sites must be even and >= 2, got {n_sites}")
    if n_sites > BASIS_SIZE_LIMIT:
        raise SizeLimitExceeded(
            f"sector enumeration supports n_sites <= {BASIS_SIZE_LIMIT}, got {n_sites}")
    k = n_sites // 2
    size = math.comb(n_sites, k)
    values = np.empty(size, dtype=np.int64)
    v = (1 << k) - 1
    for i in range(size):
        values[i] = v
        lowest = v & -v
        ripple = v + lowest
        v = ripple | (((v ^ ripple) >> 2) // lowest)
    shifts = np.arange(n_sites - 1, -1, -1)
    states = ((values[:, None] >> shifts[None, :]) & 1).astype(np.uint8)
    return SectorBasis(n_sites, states)


def sector_hamiltonian(spec: XYChainSpec, basis: SectorBasis) -> sp.csr_matrix:
    """Sparse H restricted to the sector.

    <sigma'|H|sigma> = -J/2 when sigma' differs from sigma by exchanging one
    antiparallel nearest-neighbor pair; the diagonal vanishes in the S^z basis
    because S^xS^x + S^yS^y has no diagonal part.
    """
    states = basis.states.astype(np.int64)
    size = len(basis)
    rows, cols = [], []
    for i in range(spec.n_sites - 1):
        anti = np.nonzero(states[:, i] != states[:, i + 1])[0]
        swapped = states[anti].copy()
        swapped[:, [i, i + 1]] = swapped[:, [i + 1, i]]
        rows.append(basis.ranks_of(swapped))
        cols.append(anti)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    data = np.full(rows.shape, -spec.coupling / 2.0)
    return sp.coo_matrix((data, (rows, cols)), shape=(size, size)).tocsr()


def hamiltonian_apply(spec: XYChainSpec, basis: SectorBasis, v: np.ndarray) -> np.ndarray:
    """Apply the sector-restricted Hamiltonian to a vector."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (len(basis),):
        raise DimensionMismatch(f"vector length {v.shape} != basis size {len(basis)}")
    return sector_hamiltonian(spec, basis) @ v


@dataclass
class GroundState:
    """Sector basis with nonnegative normalized amplitudes and exact energy.

    ``amplitudes[k]`` is psi_GS evaluated on ``basis.states[k]``; the target
    measurement distribution is q(sigma) = amplitudes**2.
    """

    spec: XYChainSpec
    basis: SectorBasis
    amplitudes: np.ndarray
    energy: float

    def probabilities(self) -> np.ndarray:
        return self.amplitudes**2

    def amplitude_of(self, configs: np.ndarray) -> np.ndarray:
        """Amplitudes for arbitrary configurations (0 outside the sector)."""
        configs = np.atleast_2d(np.asarray(configs))
        out = np.zeros(configs.shape[0])
        in_sector = configs.sum(axis=1) == self.spec.n_sites // 2
        if in_sector.any():
            out[in_sector] = self.amplitudes[self.basis.ranks_of(configs[in_sector])]
        return out


def ground_state(spec: XYChainSpec) -> GroundState:
    """Lowest eigenpair of H in the zero-magnetization sector.

    Dense diagonalization below DENSE_SECTOR_LIMIT, Lanczos above. The
    eigenvector is gauge-fixed to the nonnegative Perron-Frobenius
    representative; a spectral gap above SPECTRAL_GAP_FLOOR between the two
    lowest sector eigenvalues is asserted to catch solver misconfiguration
    (the XY-chain sector ground state is unique).
    """
    if spec.n_sites > DIAG_SIZE_LIMIT:
        raise SizeLimitExceeded(
            f"ground_state supports n_sites <= {DIAG_SIZE_LIMIT}, got {spec.n_sites}")
    basis = build_sector_basis(spec.n_sites)
    ham = sector_hamiltonian(spec, basis)
    if len(basis) <= DENSE_SECTOR_LIMIT:
        import scipy.linalg as la

        vals, vecs = la.eigh(ham.toarray(), subset_by_index=[0, min(1, len(basis) - 1)])
    else:
        try:
            vals, vecs = spla.eigsh(ham, k=2, which="SA")
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceFailure(f"Lanczos did not converge for N={spec.n_sites}") from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    if len(vals) > 1 and vals[1] - vals[0] <= SPECTRAL_GAP_FLOOR:
        raise ConvergenceFailure(
            f"sector spectral gap {vals[1] - vals[0]:.3e} below {SPECTRAL_GAP_FLOOR}; "
            "the XY-chain sector ground state should be unique")
    vec = vecs[:, 0]
    if vec[np.argmax(np.abs(vec))] < 0:
        vec = -vec
    if vec.min() < -1e-12:
        raise ConvergenceFailure(
            f"eigenvector has component {vec.min():.3e} < -1e-12; sign-free gauge failed")
    vec = np.clip(vec, 0.0, None)
    vec /= np.linalg.norm(vec)
    energy = float(vec @ (ham @ vec))
    return GroundState(spec=spec, basis=basis, amplitudes=vec, energy=energy)


def free_fermion_energy(n_sites: int, coupling: float = 1.0) -> float:
    """Exact open-chain ground energy from the free-fermion spectrum.

    The Jordan-Wigner mapping turns the XY chain into free fermions hopping
    with amplitude J/2; the open-boundary modes have energies
    -J cos(pi m / (N+1)), m = 1..N, and the zero-magnetization ground state
    fills exactly the modes with cos > 0. Valid for any even N, so it serves
    as an independent analytic oracle beyond the diagonalization limit.
    """
    if n_sites < 2 or n_sites % 2 != 0:
        raise OddChainLength(f"n_sites must be even and >= 2, got {n_sites}")
    m = np.arange(1, n_sites + 1)
    c = np.cos(np.pi * m / (n_sites + 1))
    return float(-coupling * c[c > 0].sum())


@dataclass
class Dataset:
    """Projective measurement samples, one occupation vector per row."""

    n_sites: int
    samples: np.ndarray
    line_numbers: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.uint8)
        if self.samples.ndim != 2 or self.samples.shape[1] != self.n_sites:
            raise DimensionMismatch(
                f"samples shape {self.samples.shape} does not match n_sites={self.n_sites}")
        if self.samples.shape[0] == 0:
            raise ValueError("dataset must be nonempty")

    def __len__(self):
        return self.samples.shape[0]


def sample_dataset(gs: GroundState, n_samples: int, rng: np.random.Generator) -> Dataset:
    """Draw independent measurements from q = amplitudes**2 by inverse CDF."""
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    cdf = np.cumsum(gs.probabilities())
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, rng.random(n_samples), side="right")
    idx = np.minimum(idx, len(gs.basis) - 1)
    return Dataset(n_sites=gs.spec.n_sites, samples=gs.basis.states[idx].copy())


def _amplitudes_on(amplitude_fn, configs: np.ndarray) -> np.ndarray:
    """Evaluate a model amplitude function on a batch of configurations.

    Accepts either batch-aware callables (ndarray (B, N) -> (B,)) or plain
    per-configuration scalar functions.
    """
    try:
        out = np.asarray(amplitude_fn(configs), dtype=np.float64)
        if out.shape == (configs.shape[0],):
            return out
    except (TypeError, ValueError, IndexError):
        pass
    return np.array([float(amplitude_fn(c)) for c in configs])


def fidelity(gs: GroundState, model_amplitude) -> float:
    """Squared overlap between the exact state and a normalized model state.

    Computed exactly over the sector enumeration; model weight outside the
    sector only lowers the overlap because those terms never enter the sum.
    """
    if gs.spec.n_sites > DIAG_SIZE_LIMIT:
        raise SizeLimitExceeded(
            f"fidelity supports n_sites <= {DIAG_SIZE_LIMIT}, got {gs.spec.n_sites}")
    amps = _amplitudes_on(model_amplitude, gs.basis.states)
    if amps.min() < 0:
        raise ValueError("model amplitudes must be nonnegative (sqrt of probabilities)")
    return float(np.dot(gs.amplitudes, amps) ** 2)


def full_basis(n_sites: int) -> np.ndarray:
    """All 2^N occupation vectors, lexicographic, sigma_1 most significant."""
    values = np.arange(2**n_sites, dtype=np.int64)
    shifts = np.arange(n_sites - 1, -1, -1)
    return ((values[:, None] >> shifts[None, :]) & 1).astype(np.uint8)


def exact_model_energy(spec: XYChainSpec, model_amplitude) -> float:
    """Rayleigh quotient <psi|H|psi>/<psi|psi> by full-basis enumeration.

    Enumeration oracle for the Monte-Carlo energy estimator at tiny N; the
    model amplitude must be defined on the whole 2^N basis.
    """
    if spec.n_sites > FULL_BASIS_LIMIT:
        raise SizeLimitExceeded(
            f"exact_model_energy supports n_sites <= {FULL_BASIS_LIMIT}, got {spec.n_sites}")
    configs = full_basis(spec.n_sites)
    amps = _amplitudes_on(model_amplitude, configs)
    norm = float(amps @ amps)
    if norm == 0.0:
        raise ValueError("model amplitude is identically zero on the basis")
    idx = np.arange(configs.shape[0])
    num = 0.0
    for i in range(spec.n_sites - 1):
        anti = configs[:, i] != configs[:, i + 1]
        # exchanging bits (i, i+1) == XOR of the two bit masks on the index
        mask = (1 << (spec.n_sites - 1 - i)) | (1 << (spec.n_sites - 2 - i))
        partner = idx[anti] ^ mask
        num += -spec.coupling / 2.0 * float(amps[anti] @ amps[partner])
    return num / norm


def save_ground_state(path, gs: GroundState) -> None:
    """Write the ground-state cache file (JSON, lexicographic basis order)."""
    payload = {
        "n": gs.spec.n_sites,
        "j": gs.spec.coupling,
        "energy": gs.energy,
        "basis_order": "lex",
        "amplitudes": [float(a) for a in gs.amplitudes],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_ground_state(path) -> GroundState:
    """Read a ground-state cache file written by save_ground_state."""
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("basis_order") != "lex":
        raise ValueError(f"unsupported basis_order {payload.get('basis_order')!r}")
    spec = XYChainSpec(n_sites=int(payload["n"]), coupling=float(payload["j"]))
    basis = build_sector_basis(spec.n_sites)
    amps = np.asarray(payload["amplitudes"], dtype=np.float64)
    if amps.shape != (len(basis),):
        raise DimensionMismatch(
            f"cache has {amps.shape[0]} amplitudes, sector size is {len(basis)}")
    return GroundState(spec=spec, basis=basis, amplitudes=amps, energy=float(payload["energy"]))
