"""Pure-numpy kernels: recurrent passes, sampling, and block-Gibbs sweeps.

This is the reference implementation of the hot loops; xytomo.kernels._native
is a compiled twin with identical call signatures. Everything here is
batch-vectorized with an explicit Python loop only over the site sequence
(or Gibbs sweeps), which the compiled version fuses away.

Conventions shared by both backends:
  * configurations are int8/uint8 arrays of shape (B, N) with entries in {0,1};
  * the one-hot encoding of spin s is (1-s, s), and the fixed initial input
    is spin 0, i.e. (1, 0);
  * ``quota`` switches the magnetization projection: 0 disables it, a value
    q > 0 masks any spin value whose running count has reached q (counts
    exclude the fixed initial input);
  * log-probabilities of zero-probability configurations are -inf.
"""

import numpy as np

NEG_INF = -np.inf

# splitmix64 constants; the Gibbs kernel draws uniforms from a counter-based
# stream per chain so chains can run concurrently in any order
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _log_softmax2(o):
    """Row-wise log-softmax for (B, 2) logits."""
    m = np.max(o, axis=1, keepdims=True)
    z = o - m
    lse = np.log(np.exp(z[:, 0]) + np.exp(z[:, 1]))
    return z - lse[:, None]


def _onehot(s):
    e = np.zeros((s.shape[0], 2))
    e[np.arange(s.shape[0]), s] = 1.0
    return e


def _alive_masks(counts0, counts1, quota):
    return counts0 < quota, counts1 < quota


def _project_site_logprob(logy, y, s, alive0, alive1):
    """Log of the projected conditional of the observed spin at one site.

    Sites where both spin values are still allowed use the literal
    renormalized form log(y_s / (y_0 a_0 + y_1 a_1)); sites determined by the
    projection contribute exactly 0 when the observed spin is the survivor
    and -inf when it is masked.
    """
    b = s.shape[0]
    obs_alive = np.where(s == 0, alive0, alive1)
    both = alive0 & alive1
    denom = y[:, 0] * alive0 + y[:, 1] * alive1
    logy_obs = logy[np.arange(b), s]
    out = np.where(both, logy_obs - np.log(denom), 0.0)
    return np.where(obs_alive, out, NEG_INF)


# ---------------------------------------------------------------------------
# vanilla cell
# ---------------------------------------------------------------------------


def _vanilla_forward(W, U, b, V, c, x, keep):
    """Teacher-forced pass; returns per-site (logy, y) and optional stash."""
    B, n = x.shape
    d_h = W.shape[0]
    h = np.zeros((B, d_h))
    prev = np.zeros(B, dtype=np.intp)  # fixed initial input spin 0
    stash = [] if keep else None
    out = []
    for i in range(n):
        e = _onehot(prev)
        a = e @ W.T + h @ U.T + b
        h_new = np.tanh(a)
        o = h_new @ V.T + c
        logy = _log_softmax2(o)
        if keep:
            stash.append((e, h, h_new))
        out.append(logy)
        h = h_new
        prev = x[:, i].astype(np.intp)
    return out, stash


def vanilla_logprobs(W, U, b, V, c, x, quota):
    x = np.ascontiguousarray(x, dtype=np.int8)
    B, n = x.shape
    logys, _ = _vanilla_forward(W, U, b, V, c, x, keep=False)
    total = np.zeros(B)
    c0 = np.zeros(B, dtype=np.int64)
    c1 = np.zeros(B, dtype=np.int64)
    for i in range(n):
        logy = logys[i]
        s = x[:, i].astype(np.intp)
        if quota > 0:
            alive0, alive1 = _alive_masks(c0, c1, quota)
            total = total + _project_site_logprob(logy, np.exp(logy), s, alive0, alive1)
            c0 += s == 0
            c1 += s == 1
        else:
            total = total + logy[np.arange(B), s]
    return total


def vanilla_conditionals(W, U, b, V, c, x):
    """Raw (unprojected) softmax conditionals at every site: (B, N, 2)."""
    x = np.ascontiguousarray(x, dtype=np.int8)
    logys, _ = _vanilla_forward(W, U, b, V, c, x, keep=False)
    return np.exp(np.stack(logys, axis=1))


def vanilla_nll_grad(W, U, b, V, c, x, quota):
    """Summed weighted cross-entropy over the batch, with its exact gradient.

    Sites fully determined by the projection carry weight 0: their factor is
    identically 1, so they contribute neither loss nor gradient. Returns
    (loss_sum, (gW, gU, gb, gV, gc)); the caller scales by 1/B.
    """
    x = np.ascontiguousarray(x, dtype=np.int8)
    B, n = x.shape
    logys, stash = _vanilla_forward(W, U, b, V, c, x, keep=True)
    weights, loss_sum = _site_weights_and_loss(logys, x, quota)

    gW = np.zeros_like(W)
    gU = np.zeros_like(U)
    gb = np.zeros_like(b)
    gV = np.zeros_like(V)
    gc = np.zeros_like(c)
    dh_next = np.zeros((B, W.shape[0]))
    rows = np.arange(B)
    for i in range(n - 1, -1, -1):
        e, h_prev, h_i = stash[i]
        y = np.exp(logys[i])
        delta = y.copy()
        delta[rows, x[:, i].astype(np.intp)] -= 1.0
        delta *= weights[:, i][:, None]
        gV += delta.T @ h_i
        gc += delta.sum(axis=0)
        dh = delta @ V + dh_next
        da = dh * (1.0 - h_i**2)
        gW += da.T @ e
        gU += da.T @ h_prev
        gb += da.sum(axis=0)
        dh_next = da @ U
    return loss_sum, (gW, gU, gb, gV, gc)


def vanilla_sample(W, U, b, V, c, n_samples, n_sites, quota, uniforms):
    d_h = W.shape[0]
    B = n_samples
    h = np.zeros((B, d_h))
    prev = np.zeros(B, dtype=np.intp)
    c0 = np.zeros(B, dtype=np.int64)
    c1 = np.zeros(B, dtype=np.int64)
    out = np.empty((B, n_sites), dtype=np.int8)
    for i in range(n_sites):
        e = _onehot(prev)
        a = e @ W.T + h @ U.T + b
        h = np.tanh(a)
        o = h @ V.T + c
        y = np.exp(_log_softmax2(o))
        p0 = _effective_p0(y, c0, c1, quota)
        s = (uniforms[:, i] >= p0).astype(np.int8)
        out[:, i] = s
        if quota > 0:
            c0 += s == 0
            c1 += s == 1
        prev = s.astype(np.intp)
    return out


# ---------------------------------------------------------------------------
# GRU cell
# ---------------------------------------------------------------------------


def _gru_forward(Wz, Wr, Wh, Uz, Ur, Uh, bz, br, bh, V, c, x, keep):
    B, n = x.shape
    d_h = Wz.shape[0]
    h = np.zeros((B, d_h))
    prev = np.zeros(B, dtype=np.intp)
    stash = [] if keep else None
    out = []
    for i in range(n):
        e = _onehot(prev)
        z = _sigmoid(e @ Wz.T + h @ Uz.T + bz)
        r = _sigmoid(e @ Wr.T + h @ Ur.T + br)
        rh = r * h
        hhat = np.tanh(e @ Wh.T + rh @ Uh.T + bh)
        h_new = (1.0 - z) * h + z * hhat
        o = h_new @ V.T + c
        logy = _log_softmax2(o)
        if keep:
            stash.append((e, h, z, r, rh, hhat, h_new))
        out.append(logy)
        h = h_new
        prev = x[:, i].astype(np.intp)
    return out, stash


def gru_logprobs(Wz, Wr, Wh, Uz, Ur, Uh, bz, br, bh, V, c, x, quota):
    x = np.ascontiguousarray(x, dtype=np.int8)
    B, n = x.shape
    logys, _ = _gru_forward(Wz, Wr, Wh, Uz, Ur, Uh, bz, br, bh, V, c, x, keep=False)
    total = np.zeros(B)
    c0 = np.zeros(B, dtype=np.int64)
    c1 = np.zeros(B, dtype=np.int64)
    for i in range(n):
        logy = logys[i]
        s = x[:, i].astype(np.intp)
        if quota > 0:
            alive0, alive1 = _alive_masks(c0, c1, quota)
            total = total + _project_site_logprob(logy, np.exp(logy), s, alive0, alive1)
            c0 += s == 0
            c1 += s == 1
        else:
            total = total + logy[np.arange(B), s]
    return total


def gru_conditionals(Wz, Wr, Wh, Uz, Ur, Uh, bz, br, bh, V, c, x):
    x = np.ascontiguousarray(x, dtype=np.int8)
    logys, _ = _gru_forward(Wz, Wr, Wh, Uz, Ur, Uh, bz, br, bh, V, c, x, keep=False)
    return np.exp(np.stack(logys, axis=1))


def gru_nll_grad(Wz, Wr, Wh, Uz, Ur, Uh, bz, br, bh, V, c, x, quota):
    x = np.ascontiguousarray(x, dtype=np.int8)
    B, n = x.shape
    logys, stash = _gru_forward(Wz, Wr, Wh, Uz, Ur, Uh, bz, br, bh, V, c, x, keep=True)
    weights, loss_sum = _site_weights_and_loss(logys, x, quota)

    gWz, gWr, gWh = np.zeros_like(Wz), np.zeros_like(Wr), np.zeros_like(Wh)
    gUz, gUr, gUh = np.zeros_like(Uz), np.zeros_like(Ur), np.zeros_like(Uh)
    gbz, gbr, gbh = np.zeros_like(bz), np.zeros_like(br), np.zeros_like(bh)
    gV = np.zeros_like(V)
    gc = np.zeros_like(c)
    dh_next = np.zeros((B, Wz.shape[0]))
    rows = np.arange(B)
    for i in range(n - 1, -1, -1):
        e, h_prev, z, r, rh, hhat, h_i = stash[i]
        y = np.exp(logys[i])
        delta = y.copy()
        delta[rows, x[:, i].astype(np.intp)] -= 1.0
        delta *= weights[:, i][:, None]
        gV += delta.T @ h_i
        gc += delta.sum(axis=0)
        dh = delta @ V + dh_next

        dz = dh * (hhat - h_prev)
        daz = dz * z * (1.0 - z)
        dhhat = dh * z
        dah = dhhat * (1.0 - hhat**2)
        drh = dah @ Uh
        dr = drh * h_prev
        dar = dr * r * (1.0 - r)

        gWz += daz.T @ e
        gUz += daz.T @ h_prev
        gbz += daz.sum(axis=0)
        gWr += dar.T @ e
        gUr += dar.T @ h_prev
        gbr += dar.sum(axis=0)
        gWh += dah.T @ e
        gUh += dah.T @ rh
        gbh += dah.sum(axis=0)

        dh_next = dh * (1.0 - z) + daz @ Uz + dar @ Ur + drh * r
    return loss_sum, (gWz, gWr, gWh, gUz, gUr, gUh, gbz, gbr, gbh, gV, gc)


def gru_sample(Wz, Wr, Wh, Uz, Ur, Uh, bz, br, bh, V, c, n_samples, n_sites, quota, uniforms):
    d_h = Wz.shape[0]
    B = n_samples
    h = np.zeros((B, d_h))
    prev = np.zeros(B, dtype=np.intp)
    c0 = np.zeros(B, dtype=np.int64)
    c1 = np.zeros(B, dtype=np.int64)
    out = np.empty((B, n_sites), dtype=np.int8)
    for i in range(n_sites):
        e = _onehot(prev)
        z = _sigmoid(e @ Wz.T + h @ Uz.T + bz)
        r = _sigmoid(e @ Wr.T + h @ Ur.T + br)
        hhat = np.tanh(e @ Wh.T + (r * h) @ Uh.T + bh)
        h = (1.0 - z) * h + z * hhat
        o = h @ V.T + c
        y = np.exp(_log_softmax2(o))
        p0 = _effective_p0(y, c0, c1, quota)
        s = (uniforms[:, i] >= p0).astype(np.int8)
        out[:, i] = s
        if quota > 0:
            c0 += s == 0
            c1 += s == 1
        prev = s.astype(np.intp)
    return out


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def _site_weights_and_loss(logys, x, quota):
    """Per-site CE weights (0 on projection-determined sites) and total loss.

    Requires in-sector rows when quota > 0; the Python layer validates that
    before calling, so an observed masked spin cannot occur here.
    """
    B, n = x.shape
    rows = np.arange(B)
    weights = np.ones((B, n))
    loss = 0.0
    if quota > 0:
        c0 = np.zeros(B, dtype=np.int64)
        c1 = np.zeros(B, dtype=np.int64)
        for i in range(n):
            s = x[:, i].astype(np.intp)
            alive0, alive1 = _alive_masks(c0, c1, quota)
            both = alive0 & alive1
            weights[:, i] = both
            y = np.exp(logys[i])
            denom = y[:, 0] * alive0 + y[:, 1] * alive1
            loss -= np.where(both, logys[i][rows, s] - np.log(denom), 0.0).sum()
            c0 += s == 0
            c1 += s == 1
    else:
        for i in range(n):
            loss -= logys[i][rows, x[:, i].astype(np.intp)].sum()
    return weights, float(loss)


def _effective_p0(y, c0, c1, quota):
    """Probability of drawing spin 0 after projection (ancestral sampling)."""
    if quota <= 0:
        return y[:, 0]
    alive0 = c0 < quota
    alive1 = c1 < quota
    denom = y[:, 0] * alive0 + y[:, 1] * alive1
    return np.where(alive0, np.where(alive1, y[:, 0] / denom, 1.0), 0.0)


# ---------------------------------------------------------------------------
# RBM block Gibbs
# ---------------------------------------------------------------------------


def _mix64(z):
    # splitmix64 finalizer; uint64 wraparound is the intended arithmetic
    with np.errstate(over="ignore"):
        z = np.asarray(z, dtype=np.uint64)
        z = z ^ (z >> np.uint64(30))
        z = z * _MIX1
        z = z ^ (z >> np.uint64(27))
        z = z * _MIX2
        return z ^ (z >> np.uint64(31))


def _uniform_from(chain_seeds, counters):
    """Counter-based uniforms: draw t of chain i = mix(seed_i + (t+1)*golden)."""
    with np.errstate(over="ignore"):
        z = _mix64(chain_seeds + (counters + np.uint64(1)) * _GOLDEN)
    return (z >> np.uint64(11)).astype(np.float64) * (2.0**-53)


def chain_seeds(seed, n_chains):
    """Per-chain stream seeds derived from one 64-bit seed word."""
    with np.errstate(over="ignore"):
        idx = np.arange(1, n_chains + 1, dtype=np.uint64)
        return _mix64(np.uint64(seed) + idx * _GOLDEN)


def rbm_gibbs(w, b_vis, c_hid, v0, k, seed):
    """k alternating block-Gibbs sweeps from each row of v0.

    Each sweep samples the full hidden layer given the visibles, then the
    full visible layer given the hiddens. Chain i consumes a private
    counter-based uniform stream, so results do not depend on how chains are
    scheduled; the compiled twin exploits that to run chains in parallel.
    """
    v = np.ascontiguousarray(v0, dtype=np.float64)
    B, n_vis = v.shape
    n_hid = w.shape[1]
    seeds = chain_seeds(seed, B)[:, None]
    hid_counters = np.arange(n_hid, dtype=np.uint64)[None, :]
    vis_counters = np.arange(n_vis, dtype=np.uint64)[None, :]
    per_sweep = np.uint64(n_hid + n_vis)
    for t in range(k):
        base = np.uint64(t) * per_sweep
        u = _uniform_from(seeds, base + hid_counters)
        h = (u < _sigmoid(c_hid + v @ w)).astype(np.float64)
        u = _uniform_from(seeds, base + np.uint64(n_hid) + vis_counters)
        v = (u < _sigmoid(b_vis + h @ w.T)).astype(np.float64)
    return v.astype(np.uint8)
