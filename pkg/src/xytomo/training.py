"""Likelihood training of the recurrent wavefunction.

The objective is the negative log-likelihood of the measurement dataset
under the model distribution, minimized with plain SGD (no momentum, no
clipping, no decay). Gradients are exact reverse-mode backpropagation
through the unrolled sequence, including through the magnetization
projection: sites whose projected conditional is pinned to 1 contribute
neither loss nor gradient, and where both spin values survive the
projection it acts as the identity.
"""

import time
from dataclasses import dataclass

import numpy as np

from . import observables, rnn
from .errors import DimensionMismatch, SymmetryViolatedSample
from .exact import Dataset, GroundState, XYChainSpec, fidelity, free_fermion_energy
from .kernels import backend
from .rng import derive_rng

CHECKPOINT_EVERY = 200  # fixed schedule consumed by the landscape tooling


@dataclass
class TrainingConfig:
    epochs: int
    d_h: int = 100
    seed: int = 1
    learning_rate: float = 0.001
    batch_size: int = 50
    symmetry_mode: str = rnn.MODE_NONE
    cell_kind: str = rnn.GRU
    eval_every: int = 10
    eval_samples: int = 10_000

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1 or self.eval_samples < 1 or self.eval_every < 1:
            raise ValueError("batch_size, eval_samples and eval_every must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass
class MetricsRecord:
    """One evaluation row: likelihood, energy and sector diagnostics.

    nll_train and infidelity are None when their oracle is unavailable
    (unnormalized model beyond enumeration reach, no exact ground state).
    """

    epoch: int
    nll_train: float | None
    energy: float
    energy_stderr: float
    epsilon: float
    infidelity: float | None
    frac_out_of_sector: float
    wall_seconds: float


def _require_in_sector(samples, n_sites):
    counts = samples.sum(axis=1)
    bad = np.nonzero(counts != n_sites // 2)[0]
    if bad.size:
        raise SymmetryViolatedSample(
            f"sample {bad[0]} has magnetization count {int(counts[bad[0]])}, "
            f"expected {n_sites // 2}", int(bad[0]))


def nll(params: rnn.RnnParameters, batch, mode: str) -> float:
    """-(1/|batch|) sum of log-probabilities."""
    x = np.atleast_2d(np.asarray(batch))
    if x.shape[0] == 0:
        raise ValueError("batch must be nonempty")
    if mode == rnn.MODE_U1:
        _require_in_sector(x, x.shape[1])
    lp = rnn.log_probs(params, x, mode)
    return float(-lp.mean())


def nll_gradient(params: rnn.RnnParameters, batch, mode: str) -> dict[str, np.ndarray]:
    """Exact BPTT gradient of the batch NLL, keyed by parameter name."""
    x = np.atleast_2d(np.asarray(batch)).astype(np.int8)
    if x.shape[0] == 0:
        raise ValueError("batch must be nonempty")
    quota = 0
    if mode == rnn.MODE_U1:
        _require_in_sector(x, x.shape[1])
        quota = x.shape[1] // 2
    elif mode != rnn.MODE_NONE:
        raise ValueError(f"unknown symmetry mode {mode!r}")
    fn = getattr(backend, f"{params.cell_kind}_nll_grad")
    _, grads = fn(*params.arrays(), np.ascontiguousarray(x), quota)
    scale = 1.0 / x.shape[0]
    return {name: g * scale for name, g in zip(params.names, grads)}


def finite_diff_gradient(params: rnn.RnnParameters, batch, mode: str,
                         step: float = 1e-4, loss_fn=None) -> dict[str, np.ndarray]:
    """Central-difference gradient of the batch NLL, one coordinate at a time.

    Independent oracle for nll_gradient; O(step^2) accurate and O(n_params)
    loss evaluations, so keep batches and models tiny. ``loss_fn(params)``
    replaces the NLL when given (e.g. to validate the stencil on a known
    function).
    """
    if step <= 0:
        raise ValueError("step must be > 0")
    theta = params.to_vector()
    grad = np.empty_like(theta)

    def loss_at(vec):
        p = rnn.RnnParameters.from_vector(params.cell_kind, params.d_h, vec)
        return loss_fn(p) if loss_fn is not None else nll(p, batch, mode)

    for k in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[k] += step
        down[k] -= step
        grad[k] = (loss_at(up) - loss_at(down)) / (2.0 * step)
    out, pos = {}, 0
    for name in params.names:
        size = params.weights[name].size
        out[name] = grad[pos:pos + size].reshape(params.weights[name].shape)
        pos += size
    return out


def sgd_step(params: rnn.RnnParameters, grads: dict[str, np.ndarray],
             lr: float) -> rnn.RnnParameters:
    """theta <- theta - lr * g. Plain SGD, returns a new parameter set."""
    new = params.copy()
    for name in params.names:
        g = np.asarray(grads[name])
        if g.shape != new.weights[name].shape:
            raise DimensionMismatch(
                f"gradient {name} has shape {g.shape}, expected {new.weights[name].shape}")
        new.weights[name] -= lr * g
    return new


def epoch_batches(rng: np.random.Generator, n_samples: int, batch_size: int):
    """Seeded shuffle split into consecutive batches; the last may be short."""
    perm = rng.permutation(n_samples)
    return [perm[i:i + batch_size] for i in range(0, n_samples, batch_size)]


def evaluate_model(params: rnn.RnnParameters, mode: str, spec: XYChainSpec,
                   dataset: Dataset, gs: GroundState | None, e_exact: float,
                   n_eval: int, rng: np.random.Generator, *, epoch: int,
                   wall_seconds: float) -> MetricsRecord:
    """Draw model samples and assemble one metrics row.

    Infidelity needs the exact state (sector enumeration), so it is None
    when no ground state is available.
    """
    n = spec.n_sites
    amp = rnn.amplitude_fn(params, mode)
    samples = rnn.sample(params, n_eval, n, mode, rng)
    est = observables.energy_estimate(amp, samples, spec)
    infid = None
    if gs is not None:
        infid = 1.0 - fidelity(gs, amp)
    return MetricsRecord(
        epoch=epoch,
        nll_train=nll(params, dataset.samples, mode),
        energy=est.mean,
        energy_stderr=est.stderr,
        epsilon=observables.energy_difference(est.mean, e_exact, n),
        infidelity=infid,
        frac_out_of_sector=observables.sector_fraction(samples),
        wall_seconds=wall_seconds,
    )


def train(config: TrainingConfig, dataset: Dataset, gs: GroundState | None = None,
          sink=None, *, coupling: float = 1.0, stop_when=None, checkpoint_sink=None):
    """SGD over seeded epoch shuffles with periodic evaluation.

    Evaluations happen every ``eval_every`` epochs and always at the final
    epoch. Checkpoints go to ``checkpoint_sink(epoch, params)`` every
    CHECKPOINT_EVERY epochs and at the end. ``stop_when(record)`` may end
    training early once a metrics row satisfies a caller-supplied criterion.
    Returns (params, metrics list).
    """
    n = dataset.n_sites
    spec = gs.spec if gs is not None else XYChainSpec(n, coupling)
    e_exact = gs.energy if gs is not None else free_fermion_energy(n, spec.coupling)
    if config.symmetry_mode == rnn.MODE_U1:
        _require_in_sector(dataset.samples, n)

    params = rnn.init_parameters(config.cell_kind, config.d_h, derive_rng(config.seed, "rnn-init"))
    shuffle_rng = derive_rng(config.seed, "epoch-shuffle")
    eval_rng = derive_rng(config.seed, "eval-sampling")
    quota = n // 2 if config.symmetry_mode == rnn.MODE_U1 else 0
    grad_fn = getattr(backend, f"{params.cell_kind}_nll_grad")
    data = np.ascontiguousarray(dataset.samples, dtype=np.int8)

    records = []
    t_start = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        for idx in epoch_batches(shuffle_rng, len(dataset), config.batch_size):
            batch = np.ascontiguousarray(data[idx])
            _, grads = grad_fn(*params.arrays(), batch, quota)
            scale = config.learning_rate / batch.shape[0]
            for name, g in zip(params.names, grads):
                params.weights[name] -= scale * g

        stopping = False
        if epoch % config.eval_every == 0 or epoch == config.epochs:
            record = evaluate_model(
                params, config.symmetry_mode, spec, dataset, gs, e_exact,
                config.eval_samples, eval_rng, epoch=epoch,
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
