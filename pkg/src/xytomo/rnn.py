"""Recurrent wavefunction: cells, softmax output, magnetization projection.

The model assigns each occupation vector a probability through the chain
rule, p(sigma) = prod_i y_i . sigma_i, where y_i is the softmax output after
feeding sites 1..i-1 through the recurrent cell (fixed initial hidden state 0
and initial input spin 0). The wavefunction is sqrt(p). In "u1" mode the
conditionals are projected so that no spin value can exceed the N/2 quota,
which confines both sampling and probability mass exactly to the
zero-magnetization sector while keeping the model autoregressive.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidCounters
from .kernels import backend

VANILLA = "vanilla"
GRU = "gru"
MODE_NONE = "none"
MODE_U1 = "u1"

# canonical parameter order: initialization draws, checkpoints, gradient
# tuples and flattened vectors all follow it
PARAM_NAMES = {
    VANILLA: ("W", "U", "b", "V", "c"),
    GRU: ("W_z", "W_r", "W_h", "U_z", "U_r", "U_h", "b_z", "b_r", "b_h", "V", "c"),
}

CHECKPOINT_FORMAT_VERSION = 1


def _param_shapes(cell_kind, d_h):
    if cell_kind == VANILLA:
        return {"W": (d_h, 2), "U": (d_h, d_h), "b": (d_h,), "V": (2, d_h), "c": (2,)}
    if cell_kind == GRU:
        shapes = {}
        for g in ("z", "r", "h"):
            shapes[f"W_{g}"] = (d_h, 2)
        for g in ("z", "r", "h"):
            shapes[f"U_{g}"] = (d_h, d_h)
        for g in ("z", "r", "h"):
            shapes[f"b_{g}"] = (d_h,)
        shapes["V"] = (2, d_h)
        shapes["c"] = (2,)
        return shapes
    raise ValueError(f"unknown cell kind {cell_kind!r}")


@dataclass
class RnnParameters:
    """Cell and output-layer weights for one recurrent wavefunction."""

    cell_kind: str
    d_h: int
    weights: dict[str, np.ndarray] = field(repr=False)

    def __post_init__(self):
        shapes = _param_shapes(self.cell_kind, self.d_h)
        if set(self.weights) != set(shapes):
            raise DimensionMismatch(
                f"expected parameters {sorted(shapes)}, got {sorted(self.weights)}")
        for name, shape in shapes.items():
            arr = np.ascontiguousarray(self.weights[name], dtype=np.float64)
            if arr.shape != shape:
                raise DimensionMismatch(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
            self.weights[name] = arr

    @property
    def names(self):
        return PARAM_NAMES[self.cell_kind]

    def arrays(self):
        """Parameter arrays in canonical order."""
        return tuple(self.weights[n] for n in self.names)

    def n_params(self) -> int:
        return sum(self.weights[n].size for n in self.names)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.weights[n].ravel() for n in self.names])

    def copy(self) -> "RnnParameters":
        return RnnParameters(self.cell_kind, self.d_h,
                             {k: v.copy() for k, v in self.weights.items()})

    @classmethod
    def from_vector(cls, cell_kind, d_h, vec) -> "RnnParameters":
        shapes = _param_shapes(cell_kind, d_h)
        vec = np.asarray(vec, dtype=np.float64)
        weights, pos = {}, 0
        for name in PARAM_NAMES[cell_kind]:
            size = int(np.prod(shapes[name]))
            weights[name] = vec[pos:pos + size].reshape(shapes[name]).copy()
            pos += size
        if pos != vec.size:
            raise DimensionMismatch(f"vector has {vec.size} entries, expected {pos}")
        return cls(cell_kind, d_h, weights)


def init_parameters(cell_kind, d_h, rng) -> RnnParameters:
    """Uniform +-1/sqrt(d_h) weight matrices, zero biases.

    Matrices are drawn in canonical name order so a seed pins the full
    initial state; the scale keeps early softmax outputs near uniform.
    """
    shapes = _param_shapes(cell_kind, d_h)
    bound = 1.0 / np.sqrt(d_h)
    weights = {}
    for name in PARAM_NAMES[cell_kind]:
        shape = shapes[name]
        if len(shape) == 2:
            weights[name] = rng.uniform(-bound, bound, size=shape)
        else:
            weights[name] = np.zeros(shape)
    return RnnParameters(cell_kind, d_h, weights)


def _quota(mode, n_sites):
    if mode == MODE_NONE:
        return 0
    if mode == MODE_U1:
        if n_sites % 2 != 0:
            raise ValueError(f"u1 mode requires an even chain, got n_sites={n_sites}")
        return n_sites // 2
    raise ValueError(f"unknown symmetry mode {mode!r}")


# ---------------------------------------------------------------------------
# single-step operations
# ---------------------------------------------------------------------------


def _as_onehot(prev_input):
    e = np.asarray(prev_input, dtype=np.float64)
    if e.shape != (2,):
        raise DimensionMismatch(f"one-hot input must have shape (2,), got {e.shape}")
    return e


def vanilla_cell(params: RnnParameters, prev_input, prev_hidden) -> np.ndarray:
    """h_i = tanh(W sigma_{i-1} + U h_{i-1} + b)."""
    if params.cell_kind != VANILLA:
        raise ValueError(f"vanilla_cell called with {params.cell_kind} parameters")
    e = _as_onehot(prev_input)
    h = np.asarray(prev_hidden, dtype=np.float64)
    if h.shape != (params.d_h,):
        raise DimensionMismatch(f"hidden state has shape {h.shape}, expected ({params.d_h},)")
    w = params.weights
    return np.tanh(w["W"] @ e + w["U"] @ h + w["b"])


def _sigmoid(x):
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def gru_cell(params: RnnParameters, prev_input, prev_hidden) -> np.ndarray:
    """Gated update: h_i = (1-z) . h_{i-1} + z . tanh-candidate.

    z and r are logistic gates; the candidate sees r . h_{i-1} so the cell
    can selectively forget the encoded prefix.
    """
    if params.cell_kind != GRU:
        raise ValueError(f"gru_cell called with {params.cell_kind} parameters")
    e = _as_onehot(prev_input)
    h = np.asarray(prev_hidden, dtype=np.float64)
    if h.shape != (params.d_h,):
        raise DimensionMismatch(f"hidden state has shape {h.shape}, expected ({params.d_h},)")
    w = params.weights
    z = _sigmoid(w["W_z"] @ e + w["U_z"] @ h + w["b_z"])
    r = _sigmoid(w["W_r"] @ e + w["U_r"] @ h + w["b_r"])
    hhat = np.tanh(w["W_h"] @ e + w["U_h"] @ (r * h) + w["b_h"])
    return (1.0 - z) * h + z * hhat


def output_distribution(params: RnnParameters, hidden) -> np.ndarray:
    """Softmax of the linear readout: strictly positive pair summing to 1."""
    h = np.asarray(hidden, dtype=np.float64)
    o = params.weights["V"] @ h + params.weights["c"]
    o = o - o.max()
    e = np.exp(o)
    return e / e.sum()


def u1_project(y, n_up: int, n_down: int, n_sites: int) -> np.ndarray:
    """Zero out any spin value whose count has reached N/2, then renormalize.

    Counters exclude the fixed initial input spin. The renormalization
    denominator is strictly positive for every reachable counter state
    because both counters cannot reach N/2 before the sequence ends.
    """
    y = np.asarray(y, dtype=np.float64)
    quota = n_sites // 2
    if n_up < 0 or n_down < 0 or n_up + n_down >= n_sites or n_up > quota or n_down > quota:
        raise InvalidCounters(
            f"counters (n_up={n_up}, n_down={n_down}) unreachable for n_sites={n_sites}")
    masked = np.array([y[0] * (n_up < quota), y[1] * (n_down < quota)])
    return masked / masked.sum()


# ---------------------------------------------------------------------------
# sequence-level operations (kernel-backed)
# ---------------------------------------------------------------------------


def _as_batch(configs, n_sites=None):
    x = np.atleast_2d(np.asarray(configs))
    if n_sites is not None and x.shape[1] != n_sites:
        raise DimensionMismatch(f"configs have {x.shape[1]} sites, expected {n_sites}")
    return np.ascontiguousarray(x, dtype=np.int8)


def conditionals(params: RnnParameters, config, mode: str) -> np.ndarray:
    """Teacher-forced per-site conditionals, projected in u1 mode: (N, 2)."""
    x = _as_batch(config)
    n = x.shape[1]
    quota = _quota(mode, n)
    raw = getattr(backend, f"{params.cell_kind}_conditionals")(*params.arrays(), x)[0]
    if quota == 0:
        return raw
    out = np.empty_like(raw)
    n_up = n_down = 0
    for i in range(n):
        out[i] = u1_project(raw[i], n_up, n_down, n)
        if x[0, i] == 0:
            n_up += 1
        else:
            n_down += 1
    return out


def log_probs(params: RnnParameters, configs, mode: str) -> np.ndarray:
    """Batch log p(sigma); -inf where the projection assigns probability 0."""
    x = _as_batch(configs)
    quota = _quota(mode, x.shape[1])
    fn = getattr(backend, f"{params.cell_kind}_logprobs")
    return fn(*params.arrays(), x, quota)


def log_prob(params: RnnParameters, config, mode: str) -> float:
    return float(log_probs(params, config, mode)[0])


def amplitudes(params: RnnParameters, configs, mode: str) -> np.ndarray:
    """sqrt(p) for a batch; exactly 0 on zero-probability configurations."""
    lp = log_probs(params, configs, mode)
    out = np.zeros(lp.shape)
    finite = np.isfinite(lp)
    out[finite] = np.exp(0.5 * lp[finite])
    return out


def amplitude(params: RnnParameters, config, mode: str) -> float:
    return float(amplitudes(params, config, mode)[0])


def amplitude_fn(params: RnnParameters, mode: str):
    """Batch amplitude callable for the observables and fidelity machinery."""

    def fn(configs):
        return amplitudes(params, configs, mode)

    return fn


def sample(params: RnnParameters, n_samples: int, n_sites: int, mode: str,
           rng: np.random.Generator) -> np.ndarray:
    """Ancestral sampling: draw each site from its (projected) conditional.

    Samples are independent rows; one uniform per (sample, site) is drawn
    up front so the stream layout is fixed regardless of how the backend
    iterates.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    quota = _quota(mode, n_sites)
    uniforms = rng.random((n_samples, n_sites))
    fn = getattr(backend, f"{params.cell_kind}_sample")
    out = fn(*params.arrays(), n_samples, n_sites, quota, uniforms)
    return out.astype(np.uint8)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path, params: RnnParameters, *, n_sites, symmetry_mode, epoch, seed):
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "cell_kind": params.cell_kind,
        "n": n_sites,
        "d_h": params.d_h,
        "symmetry_mode": symmetry_mode,
        "epoch": epoch,
        "seed": seed,
        "params": {name: params.weights[name].ravel().tolist() for name in params.names},
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_checkpoint(path):
    """Returns (RnnParameters, metadata dict with n, symmetry_mode, epoch, seed)."""
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {payload.get('format_version')!r}")
    cell_kind = payload["cell_kind"]
    d_h = int(payload["d_h"])
    shapes = _param_shapes(cell_kind, d_h)
    weights = {
        name: np.asarray(payload["params"][name], dtype=np.float64).reshape(shapes[name])
        for name in PARAM_NAMES[cell_kind]
    }
    params = RnnParameters(cell_kind, d_h, weights)
    meta = {
        "n": int(payload["n"]),
        "symmetry_mode": payload["symmetry_mode"],
        "epoch": int(payload["epoch"]),
        "seed": int(payload["seed"]),
    }
    return params, meta
