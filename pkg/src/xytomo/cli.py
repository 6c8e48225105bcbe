"""Command-line surface: reproducible experiments over file-based inputs.

Subcommands: gen-data, train, eval, landscape, sample. Every command takes
one user-visible --seed; all internal randomness is derived from it per
subsystem, so reruns with identical inputs produce byte-identical dataset,
metrics, checkpoint and landscape files. A run manifest (JSON with config
echo, input checksums and package version) is written next to the outputs;
the manifest carries a timestamp and is the one non-reproducible file.

Exit codes: 0 success; 2 invalid flags/config/inputs; 3 solver failure;
4 symmetry-violated sample (with the offending line); 5 missing oracle for
a requested metric; 6 degenerate landscape plane.
"""

import argparse
import glob
import hashlib
import json
import os
import re
import sys
from datetime import datetime, timezone

from . import __version__, dataio, exact, landscape, observables, rbm, rnn, training
from .errors import (
    ConfigError,
    ConvergenceFailure,
    DegeneratePlane,
    DimensionMismatch,
    OddChainLength,
    SizeLimitExceeded,
    SymmetryViolatedSample,
)
from .kernels import backend_name
from .rng import derive_rng

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SOLVER = 3
EXIT_SYMMETRY = 4
EXIT_MISSING_ORACLE = 5
EXIT_DEGENERATE_PLANE = 6

GEN_DATA_LIMIT = 20


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_manifest(out_dir, command, config, inputs, outputs):
    manifest = {
        "command": command,
        "version": __version__,
        "backend": backend_name(),
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "config": config,
        "input_checksums": {str(p): _sha256(p) for p in inputs},
        "outputs": sorted(outputs),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _merge_config(args, defaults):
    """defaults < config file < explicit flags; unknown file keys rejected."""
    merged = dict(defaults)
    path = getattr(args, "config", None)
    if path:
        try:
            with open(path) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_cfg)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _require(condition, message):
    if not condition:
        raise ConfigError(message)


# ---------------------------------------------------------------------------
# gen-data
# ---------------------------------------------------------------------------

GEN_DEFAULTS = {"n": 4, "j": 1.0, "samples": 20000, "seed": 1}


def cmd_gen_data(args) -> int:
    cfg = _merge_config(args, GEN_DEFAULTS)
    n, j = int(cfg["n"]), float(cfg["j"])
    _require(n >= 2 and n % 2 == 0, f"--n must be even and >= 2, got {n}")
    _require(n <= GEN_DATA_LIMIT, f"built-in generation supports --n <= {GEN_DATA_LIMIT}")
    _require(j > 0, f"--j must be > 0, got {j}")
    _require(int(cfg["samples"]) >= 1, "--samples must be >= 1")

    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    gs = exact.ground_state(exact.XYChainSpec(n, j))
    dataset = exact.sample_dataset(gs, int(cfg["samples"]), derive_rng(int(cfg["seed"]), "dataset"))

    data_path = os.path.join(out_dir, "dataset.txt")
    gs_path = os.path.join(out_dir, "ground_state.json")
    dataio.write_dataset(data_path, dataset, comments=[
        f"xy chain measurements: n={n} j={j} samples={len(dataset)} seed={int(cfg['seed'])}",
    ])
    exact.save_ground_state(gs_path, gs)
    _write_manifest(out_dir, "gen-data", cfg, [], ["dataset.txt", "ground_state.json"])
    print(f"n={n} sector_size={len(gs.basis)} energy={gs.energy!r}")
    print(f"wrote {data_path} and {gs_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

TRAIN_DEFAULTS = {
    "model": "u1-rnn",
    "seed": None,           # model-dependent default, resolved below
    "j": 1.0,
    "hidden_units": None,   # Table-I / Table-II defaults resolved below
    "lr": None,
    "batch_size": 50,
    "epochs": 1000,
    "eval_every": 10,
    "eval_samples": 10000,
    "symmetry": None,
    "cell": "gru",
    "k": 100,
    "pos_batch": 100,
    "neg_batch": 200,
    "gs": None,
}

MODEL_CHOICES = ("rnn", "u1-rnn", "rbm")


def _load_gs_if_given(cfg, inputs):
    gs = None
    if cfg.get("gs"):
        gs = exact.load_ground_state(cfg["gs"])
        inputs.append(cfg["gs"])
    return gs


def cmd_train(args) -> int:
    cfg = _merge_config(args, TRAIN_DEFAULTS)
    model = cfg["model"]
    _require(model in MODEL_CHOICES, f"--model must be one of {MODEL_CHOICES}")
    dataset = dataio.read_dataset(args.data)
    inputs = [args.data]
    gs = _load_gs_if_given(cfg, inputs)
    if gs is not None:
        _require(gs.spec.n_sites == dataset.n_sites,
                 f"ground-state cache is for n={gs.spec.n_sites}, data has n={dataset.n_sites}")

    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    metrics_path = os.path.join(out_dir, "metrics.csv")
    outputs = ["metrics.csv"]

    if model == "rbm":
        n = dataset.n_sites
        config = rbm.RbmTrainingConfig(
            epochs=int(cfg["epochs"]),
            n_h=int(cfg["hidden_units"]) if cfg["hidden_units"] else rbm.default_hidden_units(n),
            seed=int(cfg["seed"]) if cfg["seed"] is not None else rbm.default_seed(n),
            base_lr=float(cfg["lr"]) if cfg["lr"] else 0.01,
            positive_batch=int(cfg["pos_batch"]),
            negative_batch=int(cfg["neg_batch"]),
            gibbs_k=int(cfg["k"]),
            eval_every=int(cfg["eval_every"]),
            eval_samples=int(cfg["eval_samples"]),
        )
        cfg["seed"], cfg["hidden_units"], cfg["lr"] = config.seed, config.n_h, config.base_lr

        def checkpoint_sink(epoch, params):
            name = f"ckpt_{epoch}.json"
            rbm.save_checkpoint(os.path.join(out_dir, name), params,
                                n_sites=n, epoch=epoch, seed=config.seed)
            outputs.append(name)

        with dataio.MetricsWriter(metrics_path) as sink:
            def progress(record):
                sink(record)
                print(f"epoch {record.epoch}: epsilon={record.epsilon:.5f} "
                      f"frac_out={record.frac_out_of_sector:.4f}", file=sys.stderr)

            rbm.rbm_train(config, dataset, gs, progress, coupling=float(cfg["j"]),
                          checkpoint_sink=checkpoint_sink)
    else:
        mode = rnn.MODE_U1 if model == "u1-rnn" else rnn.MODE_NONE
        if cfg["symmetry"] is not None:
            _require(cfg["symmetry"] in (rnn.MODE_NONE, rnn.MODE_U1),
                     "--symmetry must be none or u1")
            _require((cfg["symmetry"] == rnn.MODE_U1) == (model == "u1-rnn"),
                     f"--symmetry {cfg['symmetry']} contradicts --model {model}")
        config = training.TrainingConfig(
            epochs=int(cfg["epochs"]),
            d_h=int(cfg["hidden_units"]) if cfg["hidden_units"] else 100,
            seed=int(cfg["seed"]) if cfg["seed"] is not None else 1,
            learning_rate=float(cfg["lr"]) if cfg["lr"] else 0.001,
            batch_size=int(cfg["batch_size"]),
            symmetry_mode=mode,
            cell_kind=cfg["cell"],
            eval_every=int(cfg["eval_every"]),
            eval_samples=int(cfg["eval_samples"]),
        )
        cfg["seed"], cfg["hidden_units"], cfg["lr"] = config.seed, config.d_h, config.learning_rate
        cfg["symmetry"] = mode

        def checkpoint_sink(epoch, params):
            name = f"ckpt_{epoch}.json"
            rnn.save_checkpoint(os.path.join(out_dir, name), params,
                                n_sites=dataset.n_sites, symmetry_mode=mode,
                                epoch=epoch, seed=config.seed)
            outputs.append(name)

        with dataio.MetricsWriter(metrics_path) as sink:
            def progress(record):
                sink(record)
                print(f"epoch {record.epoch}: nll={record.nll_train:.5f} "
                      f"epsilon={record.epsilon:.5f} "
                      f"frac_out={record.frac_out_of_sector:.4f}", file=sys.stderr)

            training.train(config, dataset, gs, progress, coupling=float(cfg["j"]),
                           checkpoint_sink=checkpoint_sink)

    _write_manifest(out_dir, "train", cfg, inputs, outputs)
    print(f"wrote {metrics_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

EVAL_DEFAULTS = {"seed": 7, "j": 1.0, "eval_samples": 10000, "k": 100,
                 "data": None, "gs": None}


def _load_any_checkpoint(path):
    """Returns ('rnn'|'rbm', params, meta) by sniffing the checkpoint fields."""
    with open(path) as fh:
        payload = json.load(fh)
    if "cell_kind" in payload:
        return ("rnn", *rnn.load_checkpoint(path))
    if "n_h" in payload:
        return ("rbm", *rbm.load_checkpoint(path))
    raise ValueError(f"{path}: not a recognized checkpoint")


def cmd_eval(args) -> int:
    cfg = _merge_config(args, EVAL_DEFAULTS)
    kind, params, meta = _load_any_checkpoint(args.checkpoint)
    n = meta["n"]
    if not cfg.get("data") and not cfg.get("gs"):
        print("eval: need --data and/or --gs to compare against", file=sys.stderr)
        return EXIT_MISSING_ORACLE

    dataset = dataio.read_dataset(cfg["data"]) if cfg.get("data") else None
    if dataset is not None:
        _require(dataset.n_sites == n, f"data has n={dataset.n_sites}, checkpoint n={n}")
    gs = exact.load_ground_state(cfg["gs"]) if cfg.get("gs") else None
    if gs is not None:
        _require(gs.spec.n_sites == n, f"ground state has n={gs.spec.n_sites}, checkpoint n={n}")

    coupling = gs.spec.coupling if gs is not None else float(cfg["j"])
    spec = exact.XYChainSpec(n, coupling)
    e_exact = gs.energy if gs is not None else exact.free_fermion_energy(n, coupling)
    rng = derive_rng(int(cfg["seed"]), "eval-sampling")
    n_eval = int(cfg["eval_samples"])

    if kind == "rnn":
        mode = meta["symmetry_mode"]
        amp = rnn.amplitude_fn(params, mode)
        samples = rnn.sample(params, n_eval, n, mode, rng)
        nll_val = training.nll(params, dataset.samples, mode) if dataset is not None else None
        infid = (1.0 - exact.fidelity(gs, amp)) if gs is not None else None
    else:
        samples = rbm.rbm_sample(params, n_eval, int(cfg["k"]), rng)
        amp = rbm.amplitude_fn(params)
        nll_val = None
        if dataset is not None and n <= rbm.NORMALIZATION_LIMIT:
            nll_val = rbm.exact_nll(params, dataset.samples)
        infid = None
        if gs is not None and n <= rbm.NORMALIZATION_LIMIT:
            infid = 1.0 - exact.fidelity(gs, rbm.normalized_amplitude_fn(params))

    est = observables.energy_estimate(amp, samples, spec)
    record = training.MetricsRecord(
        epoch=meta["epoch"],
        nll_train=nll_val,
        energy=est.mean,
        energy_stderr=est.stderr,
        epsilon=observables.energy_difference(est.mean, e_exact, n),
        infidelity=infid,
        frac_out_of_sector=observables.sector_fraction(samples),
        wall_seconds=None,
    )
    print(",".join(dataio.METRICS_HEADER))
    print(",".join(dataio.metrics_row(record)))
    return EXIT_OK


# ---------------------------------------------------------------------------
# landscape
# ---------------------------------------------------------------------------

LANDSCAPE_DEFAULTS = {"seed": 11, "grid": 41, "range": 1.0}


def _collect_checkpoints(ckpt_dir):
    found = []
    for path in glob.glob(os.path.join(ckpt_dir, "ckpt_*.json")):
        m = re.fullmatch(r"ckpt_(\d+)\.json", os.path.basename(path))
        if m:
            found.append((int(m.group(1)), path))
    found.sort()
    return found


def cmd_landscape(args) -> int:
    cfg = _merge_config(args, LANDSCAPE_DEFAULTS)
    points, half_range = int(cfg["grid"]), float(cfg["range"])
    _require(points >= 1, "--grid must be >= 1")
    _require(half_range > 0, "--range must be > 0")

    checkpoints = _collect_checkpoints(args.checkpoint_dir)
    _require(len(checkpoints) >= 2,
             f"need the final and at least one intermediate checkpoint in {args.checkpoint_dir}")
    kind, final_params, meta = _load_any_checkpoint(checkpoints[-1][1])
    _require(kind == "rnn", "landscape cross-sections support recurrent checkpoints only")

    dataset = dataio.read_dataset(args.data)
    _require(dataset.n_sites == meta["n"],
             f"data has n={dataset.n_sites}, checkpoint n={meta['n']}")
    mode = meta["symmetry_mode"]
    cell_kind, d_h = final_params.cell_kind, final_params.d_h

    epochs, thetas = [], []
    for epoch, path in checkpoints:
        params, ck_meta = rnn.load_checkpoint(path)
        _require(params.cell_kind == cell_kind and params.d_h == d_h,
                 f"{path}: checkpoint shape differs from the final one")
        epochs.append(epoch)
        thetas.append(params.to_vector())

    theta_star = thetas[-1]
    delta, eta = landscape.random_directions(
        theta_star.size, derive_rng(int(cfg["seed"]), "landscape-directions"))
    grid = landscape.default_grid(half_range, points)
    plane = landscape.LandscapePlane(theta_star, delta, eta, grid, grid)

    def loss_fn(theta):
        p = rnn.RnnParameters.from_vector(cell_kind, d_h, theta)
        return training.nll(p, dataset.samples, mode)

    surface = landscape.loss_surface(plane, loss_fn)
    path_rows = landscape.project_path(thetas, plane)

    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    dataio.write_surface(os.path.join(out_dir, "surface.csv"), grid, grid, surface)
    dataio.write_path(os.path.join(out_dir, "path.csv"), epochs, path_rows)
    cfg["loss_dataset"] = args.data
    cfg["symmetry"] = mode
    _write_manifest(out_dir, "landscape", cfg,
                    [args.data] + [p for _, p in checkpoints],
                    ["surface.csv", "path.csv"])
    print(f"wrote {os.path.join(out_dir, 'surface.csv')} "
          f"({points}x{points} grid) and path.csv ({len(epochs)} checkpoints)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sample
# ---------------------------------------------------------------------------

SAMPLE_DEFAULTS = {"seed": 5, "samples": 10000, "k": 100}


def cmd_sample(args) -> int:
    cfg = _merge_config(args, SAMPLE_DEFAULTS)
    kind, params, meta = _load_any_checkpoint(args.checkpoint)
    n, n_samples = meta["n"], int(cfg["samples"])
    _require(n_samples >= 1, "--samples must be >= 1")
    rng = derive_rng(int(cfg["seed"]), "model-sampling")
    if kind == "rnn":
        draws = rnn.sample(params, n_samples, n, meta["symmetry_mode"], rng)
    else:
        draws = rbm.rbm_sample(params, n_samples, int(cfg["k"]), rng)

    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    out_path = os.path.join(out_dir, "samples.txt")
    dataio.write_dataset(out_path, exact.Dataset(n_sites=n, samples=draws), comments=[
        f"model samples: checkpoint={os.path.basename(args.checkpoint)} "
        f"n={n} samples={n_samples} seed={int(cfg['seed'])}",
    ])
    _write_manifest(out_dir, "sample", cfg, [args.checkpoint], ["samples.txt"])
    print(f"wrote {out_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser / entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xytomo",
        description="Reconstruct XY-chain ground states from measurement data.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file; flags override its keys")
        p.add_argument("--seed", type=int, help="run seed (all streams derive from it)")

    p = sub.add_parser("gen-data", help="exact ground state + measurement dataset")
    add_common(p)
    p.add_argument("--n", type=int, help="chain length (even, <= 20)")
    p.add_argument("--j", type=float, help="coupling strength (> 0)")
    p.add_argument("--samples", type=int, help="number of measurements")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a generative model on a dataset")
    add_common(p)
    p.add_argument("data", help="dataset file (chain length inferred from width)")
    p.add_argument("--model", choices=MODEL_CHOICES, help="rnn | u1-rnn | rbm")
    p.add_argument("--gs", help="ground-state cache for infidelity/energy reference")
    p.add_argument("--j", type=float, help="coupling for the energy reference (no --gs)")
    p.add_argument("--hidden-units", type=int, dest="hidden_units")
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--epochs", type=int)
    p.add_argument("--eval-every", type=int, dest="eval_every")
    p.add_argument("--eval-samples", type=int, dest="eval_samples")
    p.add_argument("--symmetry", choices=(rnn.MODE_NONE, rnn.MODE_U1))
    p.add_argument("--cell", choices=(rnn.GRU, rnn.VANILLA))
    p.add_argument("--k", type=int, help="Gibbs steps per negative phase (rbm)")
    p.add_argument("--pos-batch", type=int, dest="pos_batch")
    p.add_argument("--neg-batch", type=int, dest="neg_batch")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint; metrics row on stdout")
    add_common(p)
    p.add_argument("checkpoint")
    p.add_argument("--data", help="dataset file for the NLL")
    p.add_argument("--gs", help="ground-state cache for infidelity/exact energy")
    p.add_argument("--j", type=float, help="coupling for the energy reference (no --gs)")
    p.add_argument("--eval-samples", type=int, dest="eval_samples")
    p.add_argument("--k", type=int, help="Gibbs steps when sampling an rbm checkpoint")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("landscape", help="loss surface + training path projection")
    add_common(p)
    p.add_argument("checkpoint_dir", help="directory holding ckpt_<epoch>.json files")
    p.add_argument("data", help="dataset file the loss is evaluated on")
    p.add_argument("--grid", type=int, help="points per axis")
    p.add_argument("--range", type=float, help="half-width of the alpha/beta window")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_landscape)

    p = sub.add_parser("sample", help="dump model samples in dataset format")
    add_common(p)
    p.add_argument("checkpoint")
    p.add_argument("--samples", type=int, help="number of samples to draw")
    p.add_argument("--k", type=int, help="Gibbs steps when sampling an rbm checkpoint")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_sample)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SymmetryViolatedSample as exc:
        line = exc.sample_index
        data_path = getattr(args, "data", None)
        if data_path:
            try:
                line = int(dataio.read_dataset(data_path).line_numbers[exc.sample_index])
            except Exception:
                pass
        print(f"error: {exc} (line {line} of {data_path or 'input'})", file=sys.stderr)
        return EXIT_SYMMETRY
    except ConvergenceFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except DegeneratePlane as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE_PLANE
    except (ConfigError, OddChainLength, SizeLimitExceeded, DimensionMismatch,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
