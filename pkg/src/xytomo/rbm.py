"""Restricted Boltzmann machine baseline trained with CD_k.

The RBM carries parameters (W, b, c) - a visible-hidden weight matrix and
two bias fields - and defines an unnormalized distribution over visible
configurations through the marginal energy

    E(sigma) = -sigma.b - sum_j ln(1 + exp(c_j + sum_i W_ij sigma_i)).

KL-divergence gradients split into a data-driven positive phase and a
model-driven negative phase; the latter is approximated by block-Gibbs
chains run k steps from data configurations (contrastive divergence).
Unlike the recurrent model, the distribution is unnormalized: computing the
likelihood or the normalized state requires summing the partition function,
which is only feasible by enumeration at small N.
"""

import json
import time
from dataclasses import dataclass

import numpy as np

from . import observables
from .errors import DimensionMismatch, SizeLimitExceeded
from .exact import (
    Dataset,
    GroundState,
    XYChainSpec,
    fidelity,
    free_fermion_energy,
    full_basis,
)
from .kernels import backend
from .rng import derive_rng, derive_uint64
from .training import CHECKPOINT_EVERY, MetricsRecord, epoch_batches

CHECKPOINT_FORMAT_VERSION = 1
PARTITION_VISIBLE_LIMIT = 12
PARTITION_HIDDEN_LIMIT = 12
NORMALIZATION_LIMIT = 20

# hidden-layer widths and init seeds that were found to train stably per
# chain length; anything unlisted falls back to the generic entry
HIDDEN_UNITS_BY_N = {2: 10, 4: 50}
SEED_BY_N = {2: 7777, 4: 9999, 6: 2222, 8: 1234, 10: 1234, 16: 1357, 20: 1234,
             30: 9999, 40: 1357, 50: 9999}


def default_hidden_units(n_sites: int) -> int:
    return HIDDEN_UNITS_BY_N.get(n_sites, 100)


def default_seed(n_sites: int) -> int:
    return SEED_BY_N.get(n_sites, 1234)


@dataclass
class RbmParameters:
    """Weight matrix (N x n_h) plus visible and hidden bias fields."""

    weights: np.ndarray
    visible_bias: np.ndarray
    hidden_bias: np.ndarray

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        self.visible_bias = np.ascontiguousarray(self.visible_bias, dtype=np.float64)
        self.hidden_bias = np.ascontiguousarray(self.hidden_bias, dtype=np.float64)
        n, n_h = self.weights.shape
        if self.visible_bias.shape != (n,) or self.hidden_bias.shape != (n_h,):
            raise DimensionMismatch(
                f"bias shapes {self.visible_bias.shape}/{self.hidden_bias.shape} do not "
                f"match weights {self.weights.shape}")
        for arr in (self.weights, self.visible_bias, self.hidden_bias):
            if not np.all(np.isfinite(arr)):
                raise ValueError("RBM parameters contain non-finite entries")

    @property
    def n_visible(self) -> int:
        return self.weights.shape[0]

    @property
    def n_hidden(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "RbmParameters":
        return RbmParameters(self.weights.copy(), self.visible_bias.copy(),
                             self.hidden_bias.copy())


@dataclass
class RbmTrainingConfig:
    epochs: int
    n_h: int = 100
    seed: int = 1234
    base_lr: float = 0.01
    lr_decay: float = 0.999
    positive_batch: int = 100
    negative_batch: int = 200
    gibbs_k: int = 100
    eval_every: int = 25
    eval_samples: int = 10_000

    def __post_init__(self):
        for name in ("epochs", "n_h", "positive_batch", "negative_batch",
                     "gibbs_k", "eval_every", "eval_samples"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.base_lr <= 0 or not (0 < self.lr_decay <= 1):
            raise ValueError("base_lr must be > 0 and lr_decay in (0, 1]")

    def learning_rate(self, epoch: int) -> float:
        """0.01 * 0.999^t with t counted from 0 at the first epoch."""
        return self.base_lr * self.lr_decay ** (epoch - 1)


def init_rbm(n_sites: int, n_h: int, rng: np.random.Generator) -> RbmParameters:
    """Zero-mean Gaussian weights with std 1/sqrt(N), zero biases.

    The scale matters: much smaller weights leave the early KL gradient
    second-order small (visible marginals of the target already match the
    uniform start), which stalls training on symmetric targets.
    """
    return RbmParameters(
        weights=rng.normal(0.0, 1.0 / np.sqrt(n_sites), size=(n_sites, n_h)),
        visible_bias=np.zeros(n_sites),
        hidden_bias=np.zeros(n_h),
    )


def _as_rows(configs, width, what):
    arr = np.atleast_2d(np.asarray(configs, dtype=np.float64))
    if arr.shape[1] != width:
        raise DimensionMismatch(f"{what} has width {arr.shape[1]}, expected {width}")
    return arr


def effective_energy(params: RbmParameters, config):
    """Marginal (hidden-summed) energy; scalar for one row, vector for many."""
    rows = _as_rows(config, params.n_visible, "config")
    act = params.hidden_bias + rows @ params.weights
    energy = -rows @ params.visible_bias - np.logaddexp(0.0, act).sum(axis=1)
    return float(energy[0]) if np.asarray(config).ndim == 1 else energy


def hidden_probabilities(params: RbmParameters, config) -> np.ndarray:
    """p(h_j = 1 | sigma), the logistic of the hidden activations."""
    rows = _as_rows(config, params.n_visible, "config")
    return _sigmoid(params.hidden_bias + rows @ params.weights)


def visible_probabilities(params: RbmParameters, hidden) -> np.ndarray:
    rows = _as_rows(hidden, params.n_hidden, "hidden")
    return _sigmoid(params.visible_bias + rows @ params.weights.T)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sample_hidden(params: RbmParameters, config, rng: np.random.Generator) -> np.ndarray:
    """One block update of the hidden layer given the visibles."""
    p = hidden_probabilities(params, config)
    out = (rng.random(p.shape) < p).astype(np.uint8)
    return out[0] if np.asarray(config).ndim == 1 else out


def sample_visible(params: RbmParameters, hidden, rng: np.random.Generator) -> np.ndarray:
    """One block update of the visible layer given the hiddens."""
    p = visible_probabilities(params, hidden)
    out = (rng.random(p.shape) < p).astype(np.uint8)
    return out[0] if np.asarray(hidden).ndim == 1 else out


def cd_k(params: RbmParameters, seed_batch, k: int, rng: np.random.Generator) -> np.ndarray:
    """k alternating block-Gibbs sweeps from each seed configuration.

    Chains run on private counter-based streams derived from one seed word
    drawn from ``rng``, so the result is reproducible for any chain
    scheduling (the compiled backend runs chains in parallel).
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    v0 = np.atleast_2d(np.asarray(seed_batch, dtype=np.int8))
    if v0.shape[1] != params.n_visible:
        raise DimensionMismatch(
            f"seed batch width {v0.shape[1]} != n_visible {params.n_visible}")
    return backend.rbm_gibbs(params.weights, params.visible_bias, params.hidden_bias,
                             np.ascontiguousarray(v0), k, derive_uint64(rng))


def kl_gradient(params: RbmParameters, data_batch, model_batch) -> dict[str, np.ndarray]:
    """<grad E>_data - <grad E>_model, each phase averaged over its batch.

    grad E per configuration: dE/dW_ij = -p(h_j=1|sigma) sigma_i,
    dE/dc_j = -p(h_j=1|sigma), dE/db_i = -sigma_i.
    """
    data = _as_rows(data_batch, params.n_visible, "data batch")
    model = _as_rows(model_batch, params.n_visible, "model batch")
    if data.shape[0] == 0 or model.shape[0] == 0:
        raise ValueError("batches must be nonempty")
    ph_data = hidden_probabilities(params, data)
    ph_model = hidden_probabilities(params, model)
    grad_w = -(data.T @ ph_data) / data.shape[0] + (model.T @ ph_model) / model.shape[0]
    grad_b = -data.mean(axis=0) + model.mean(axis=0)
    grad_c = -ph_data.mean(axis=0) + ph_model.mean(axis=0)
    return {"W": grad_w, "b": grad_b, "c": grad_c}


def exact_partition(params: RbmParameters) -> float:
    """Z = sum over all visible configurations of exp(-E); enumeration oracle."""
    if params.n_visible > PARTITION_VISIBLE_LIMIT or params.n_hidden > PARTITION_HIDDEN_LIMIT:
        raise SizeLimitExceeded(
            f"exact_partition supports N <= {PARTITION_VISIBLE_LIMIT} and "
            f"n_h <= {PARTITION_HIDDEN_LIMIT}")
    energies = effective_energy(params, full_basis(params.n_visible))
    return float(np.exp(-energies).sum())


def exact_kl(params: RbmParameters, gs: GroundState) -> float:
    """KL(q || p) over the full visible space, with q zero-padded off-sector."""
    z = exact_partition(params)
    q = np.zeros(2**params.n_visible)
    configs = gs.basis.states
    shifts = np.arange(params.n_visible - 1, -1, -1)
    idx = (configs.astype(np.int64) << shifts[None, :]).sum(axis=1)
    q[idx] = gs.probabilities()
    log_p = -effective_energy(params, full_basis(params.n_visible)) - np.log(z)
    support = q > 0
    return float(np.sum(q[support] * (np.log(q[support]) - log_p[support])))


def rbm_amplitude(params: RbmParameters, config):
    """Unnormalized trial-state amplitude exp(-E/2); Z cancels in energy ratios."""
    rows = _as_rows(config, params.n_visible, "config")
    out = np.exp(-0.5 * effective_energy(params, rows))
    return float(out[0]) if np.asarray(config).ndim == 1 else out


def amplitude_fn(params: RbmParameters, shift: float | None = None):
    """Batch amplitude callable with an overflow-guarding constant shift.

    A constant added to E rescales all amplitudes equally, which cancels in
    local-energy ratios; anchoring at the energy of one reference
    configuration keeps exp() in range for trained models.
    """
    if shift is None:
        ref = np.zeros(params.n_visible)
        ref[1::2] = 1.0
        shift = float(effective_energy(params, ref[None, :])[0])

    def fn(configs):
        rows = _as_rows(configs, params.n_visible, "configs")
        return np.exp(-0.5 * (effective_energy(params, rows) - shift))

    return fn


def normalized_amplitude_fn(params: RbmParameters):
    """Normalized sqrt(p) over the full visible space (for fidelity), N <= 20."""
    n = params.n_visible
    if n > NORMALIZATION_LIMIT:
        raise SizeLimitExceeded(f"normalization by enumeration needs N <= {NORMALIZATION_LIMIT}")
    energies = effective_energy(params, full_basis(n))
    m = energies.min()
    log_z = float(np.log(np.exp(-(energies - m)).sum()) - m)

    def fn(configs):
        rows = _as_rows(configs, n, "configs")
        return np.exp(-0.5 * (effective_energy(params, rows) + log_z))

    return fn


def exact_nll(params: RbmParameters, samples) -> float:
    """-mean log p over samples via the enumerated partition function."""
    n = params.n_visible
    if n > NORMALIZATION_LIMIT:
        raise SizeLimitExceeded(f"exact_nll needs N <= {NORMALIZATION_LIMIT}")
    energies = effective_energy(params, full_basis(n))
    m = energies.min()
    log_z = float(np.log(np.exp(-(energies - m)).sum()) - m)
    rows = _as_rows(samples, n, "samples")
    return float(effective_energy(params, rows).mean() + log_z)


def rbm_sample(params: RbmParameters, n_samples: int, k: int,
               rng: np.random.Generator) -> np.ndarray:
    """Approximate model samples: k Gibbs sweeps from uniform random starts."""
    v0 = (rng.random((n_samples, params.n_visible)) < 0.5).astype(np.int8)
    return backend.rbm_gibbs(params.weights, params.visible_bias, params.hidden_bias,
                             np.ascontiguousarray(v0), k, derive_uint64(rng))


def evaluate_rbm(params: RbmParameters, spec: XYChainSpec, dataset: Dataset,
                 gs: GroundState | None, e_exact: float, n_eval: int, gibbs_k: int,
                 rng: np.random.Generator, *, epoch: int, wall_seconds: float) -> MetricsRecord:
    samples = rbm_sample(params, n_eval, gibbs_k, rng)
    est = observables.energy_estimate(amplitude_fn(params), samples, spec)
    n = spec.n_sites
    infid = None
    if gs is not None and n <= NORMALIZATION_LIMIT:
        infid = 1.0 - fidelity(gs, normalized_amplitude_fn(params))
    nll_train = exact_nll(params, dataset.samples) if n <= NORMALIZATION_LIMIT else None
    return MetricsRecord(
        epoch=epoch,
        nll_train=nll_train,
        energy=est.mean,
        energy_stderr=est.stderr,
        epsilon=observables.energy_difference(est.mean, e_exact, n),
        infidelity=infid,
        frac_out_of_sector=observables.sector_fraction(samples),
        wall_seconds=wall_seconds,
    )


def rbm_train(config: RbmTrainingConfig, dataset: Dataset, gs: GroundState | None = None,
              sink=None, *, coupling: float = 1.0, stop_when=None, checkpoint_sink=None):
    """CD_k training: one epoch is a pass over the dataset in positive batches.

    Each update draws a fresh set of negative chains seeded from randomly
    chosen training samples, runs them k Gibbs steps, and applies the
    positive-minus-negative gradient with the decayed learning rate.
    Returns (params, metrics list).
    """
    n = dataset.n_sites
    spec = gs.spec if gs is not None else XYChainSpec(n, coupling)
    e_exact = gs.energy if gs is not None else free_fermion_energy(n, spec.coupling)

    params = init_rbm(n, config.n_h, derive_rng(config.seed, "rbm-init"))
    shuffle_rng = derive_rng(config.seed, "epoch-shuffle")
    chain_rng = derive_rng(config.seed, "gibbs-chains")
    eval_rng = derive_rng(config.seed, "eval-sampling")
    data = dataset.samples

    records = []
    t_start = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        lr = config.learning_rate(epoch)
        for idx in epoch_batches(shuffle_rng, len(dataset), config.positive_batch):
            seeds = data[chain_rng.integers(0, len(dataset), size=config.negative_batch)]
            gamma = cd_k(params, seeds, config.gibbs_k, chain_rng)
            grads = kl_gradient(params, data[idx], gamma)
            params.weights -= lr * grads["W"]
            params.visible_bias -= lr * grads["b"]
            params.hidden_bias -= lr * grads["c"]

        stopping = False
        if epoch % config.eval_every == 0 or epoch == config.epochs:
            record = evaluate_rbm(
                params, spec, dataset, gs, e_exact, config.eval_samples,
                config.gibbs_k, eval_rng, epoch=epoch,
                wall_seconds=time.perf_counter() - t_start)
            records.append(record)
            if sink is not None:
                sink(record)
            stopping = stop_when is not None and stop_when(record)
        if checkpoint_sink is not None and (
                epoch % CHECKPOINT_EVERY == 0 or epoch == config.epochs or stopping):
            checkpoint_sink(epoch, params)
        if stopping:
            break
    return params, records


def save_checkpoint(path, params: RbmParameters, *, n_sites, epoch, seed):
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "n": n_sites,
        "n_h": params.n_hidden,
        "seed": seed,
        "epoch": epoch,
        "params": {
            "W": params.weights.ravel().tolist(),
            "b": params.visible_bias.tolist(),
            "c": params.hidden_bias.tolist(),
        },
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_checkpoint(path):
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {payload.get('format_version')!r}")
    n, n_h = int(payload["n"]), int(payload["n_h"])
    params = RbmParameters(
        weights=np.asarray(payload["params"]["W"], dtype=np.float64).reshape(n, n_h),
        visible_bias=np.asarray(payload["params"]["b"], dtype=np.float64),
        hidden_bias=np.asarray(payload["params"]["c"], dtype=np.float64),
    )
    meta = {"n": n, "epoch": int(payload["epoch"]), "seed": int(payload["seed"])}
    return params, meta
