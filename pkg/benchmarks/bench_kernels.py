#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy reference.

Times the three hot paths at training-realistic shapes and checks that both
backends agree (exactly where the computation is deterministic, statistically
for Gibbs). Run after `pip install -e .`:

    python benchmarks/bench_kernels.py [--repeats 20]
"""

import argparse
import time

import numpy as np

from xytomo import rnn
from xytomo.kernels import pyref
from xytomo.rng import derive_rng

try:
    from xytomo.kernels import _native as native
except ImportError:
    native = None


def timeit(fn, repeats):
    fn()  # warm-up
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(name, make_ref, make_nat, check, repeats):
    t_ref = timeit(make_ref, repeats)
    if native is None:
        print(f"{name:<34} python {t_ref * 1e3:8.2f} ms   (native not built)")
        return
    t_nat = timeit(make_nat, repeats)
    ok = check()
    print(f"{name:<34} python {t_ref * 1e3:8.2f} ms   native {t_nat * 1e3:8.2f} ms"
          f"   speedup {t_ref / t_nat:5.2f}x   agree: {'yes' if ok else 'NO'}")
    if not ok:
        raise SystemExit(f"backend disagreement in {name}")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    n, d_h, batch = 10, 100, 50
    params = rnn.init_parameters(rnn.GRU, d_h, derive_rng(1, "bench"))
    vparams = rnn.init_parameters(rnn.VANILLA, d_h, derive_rng(1, "bench"))
    rng = derive_rng(2, "bench-data")
    x = np.zeros((batch, n), dtype=np.int8)
    for row in x:
        row[rng.permutation(n)[: n // 2]] = 1
    x = np.ascontiguousarray(x)
    quota = n // 2

    print(f"shapes: n={n} d_h={d_h} batch={batch} (training step), "
          f"10^4 samples (evaluation)\n")

    out = {}

    def grad(mod, p):
        loss, grads = getattr(mod, f"{p.cell_kind}_nll_grad")(*p.arrays(), x, quota)
        return loss, grads

    for label, p in (("gru", params), ("vanilla", vparams)):
        ref_val = grad(pyref, p)
        nat_val = grad(native, p) if native else None
        bench(
            f"{label} nll+gradient (one batch)",
            lambda p=p: grad(pyref, p),
            lambda p=p: grad(native, p),
            lambda rv=ref_val, nv=nat_val: (
                abs(rv[0] - nv[0]) < 1e-9 * abs(rv[0])
                and all(np.allclose(a, b, rtol=1e-9, atol=1e-12)
                        for a, b in zip(rv[1], nv[1]))),
            args.repeats,
        )

    big = np.ascontiguousarray(np.tile(x, (200, 1)))
    ref_lp = pyref.gru_logprobs(*params.arrays(), big, quota)
    nat_lp = native.gru_logprobs(*params.arrays(), big, quota) if native else None
    bench(
        "gru log-probs (10^4 configs)",
        lambda: pyref.gru_logprobs(*params.arrays(), big, quota),
        lambda: native.gru_logprobs(*params.arrays(), big, quota),
        lambda: np.allclose(ref_lp, nat_lp, rtol=1e-10, atol=1e-12),
        max(3, args.repeats // 4),
    )

    uniforms = derive_rng(3, "bench-uniforms").random((10_000, n))
    ref_s = pyref.gru_sample(*params.arrays(), 10_000, n, quota, uniforms)
    nat_s = native.gru_sample(*params.arrays(), 10_000, n, quota, uniforms) if native else None
    bench(
        "gru autoregressive sample (10^4)",
        lambda: pyref.gru_sample(*params.arrays(), 10_000, n, quota, uniforms),
        lambda: native.gru_sample(*params.arrays(), 10_000, n, quota, uniforms),
        lambda: np.array_equal(np.asarray(ref_s), np.asarray(nat_s)),
        max(3, args.repeats // 4),
    )

    w = 0.5 * derive_rng(4, "bench-rbm").standard_normal((n, 100))
    bv = np.zeros(n)
    ch = np.zeros(100)
    v0 = np.ascontiguousarray(x.repeat(4, axis=0))  # 200 chains
    ref_g = pyref.rbm_gibbs(w, bv, ch, v0, 100, 11)
    nat_g = native.rbm_gibbs(w, bv, ch, v0, 100, 11) if native else None
    bench(
        "rbm block Gibbs (200 chains, k=100)",
        lambda: pyref.rbm_gibbs(w, bv, ch, v0, 100, 11),
        lambda: native.rbm_gibbs(w, bv, ch, v0, 100, 11),
        # different fp reductions: compare the sampled magnetization profile
        lambda: np.all(np.abs(np.asarray(ref_g, float).mean(0)
                              - np.asarray(nat_g, float).mean(0)) < 0.2),
        max(3, args.repeats // 4),
    )


if __name__ == "__main__":
    main()
