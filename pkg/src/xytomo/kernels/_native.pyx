# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twin of the pyref kernels.

Matrix products go through BLAS (scipy's cython bindings); large elementwise
activations use numpy's SIMD ufuncs on preallocated buffers (sigmoid through
the exact identity 0.5*(1+tanh(x/2))); per-site bookkeeping, the two-class
softmax and the Gibbs chains are plain C. Gibbs chains draw from the same
counter-based splitmix64 streams as the reference and run in parallel over
chains (OpenMP), which is safe because each chain owns its stream and its
rows. The Gibbs sigmoid uses a polynomial exp accurate to ~1e-7, which is
far below sampling noise at any feasible chain count.
"""

import numpy as np

cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport INFINITY, exp, log
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

# conditionals are not on a hot path; the reference implementation serves
# both backends
from .pyref import gru_conditionals, vanilla_conditionals  # noqa: F401

ctypedef cnp.int8_t i8
ctypedef unsigned long long u64

cdef u64 GOLDEN = 0x9E3779B97F4A7C15ULL
cdef u64 MIX1 = 0xBF58476D1CE4E5B9ULL
cdef u64 MIX2 = 0x94D049BB133111EBULL


# ---------------------------------------------------------------------------
# BLAS helper: row-major C(m,n) = alpha*op(A)op(B) + beta*C
# ---------------------------------------------------------------------------

cdef void gemm_rm(double* C, const double* A, const double* B,
                  int m, int n, int k, bint ta, bint tb,
                  double alpha, double beta) noexcept nogil:
    # column-major BLAS computes C^T = op(B)^T op(A)^T when fed row-major
    # buffers; swap operands and dimensions accordingly
    cdef char opb = b'T' if tb else b'N'
    cdef char opa = b'T' if ta else b'N'
    cdef int ldb = k if tb else n
    cdef int lda = m if ta else k
    dgemm(&opb, &opa, &n, &m, &k, &alpha, <double*> B, &ldb,
          <double*> A, &lda, &beta, C, &n)


cdef inline double site_logsoftmax(double o0, double o1, double* logy0,
                                   double* logy1) noexcept nogil:
    cdef double m = o0 if o0 > o1 else o1
    cdef double z0 = o0 - m
    cdef double z1 = o1 - m
    cdef double lse = log(exp(z0) + exp(z1))
    logy0[0] = z0 - lse
    logy1[0] = z1 - lse
    return lse


cdef void _sigmoid_inplace(object buf):
    # exact identity: logistic(x) = 0.5 * (1 + tanh(x / 2)); numpy's tanh is
    # SIMD-vectorized and accurate to ~1 ulp
    np.multiply(buf, 0.5, out=buf)
    np.tanh(buf, out=buf)
    np.multiply(buf, 0.5, out=buf)
    np.add(buf, 0.5, out=buf)


# ---------------------------------------------------------------------------
# per-site loss/delta pass shared by the nll_grad kernels
# ---------------------------------------------------------------------------

cdef double _site_pass(double[:, ::1] O, i8[:, ::1] x, int i, int quota,
                       long[::1] cnt0, long[::1] cnt1, double[::1] c,
                       double[:, :, ::1] delta) noexcept nogil:
    """Finish logits (add bias), accumulate the weighted CE loss for site i,
    fill delta[i] and update the spin counters. Returns the loss increment."""
    cdef int B = O.shape[0]
    cdef int b, s
    cdef bint alive0, alive1
    cdef double logy0, logy1, y0, y1, denom, loss = 0.0
    for b in range(B):
        s = x[b, i]
        site_logsoftmax(O[b, 0] + c[0], O[b, 1] + c[1], &logy0, &logy1)
        y0 = exp(logy0)
        y1 = exp(logy1)
        if quota > 0:
            alive0 = cnt0[b] < quota
            alive1 = cnt1[b] < quota
            if alive0 and alive1:
                denom = y0 + y1
                loss -= (logy0 if s == 0 else logy1) - log(denom)
                delta[i, b, 0] = y0
                delta[i, b, 1] = y1
                delta[i, b, s] -= 1.0
            else:
                # site fully determined by the projection: no loss, no grad
                delta[i, b, 0] = 0.0
                delta[i, b, 1] = 0.0
            if s == 0:
                cnt0[b] += 1
            else:
                cnt1[b] += 1
        else:
            loss -= logy0 if s == 0 else logy1
            delta[i, b, 0] = y0
            delta[i, b, 1] = y1
            delta[i, b, s] -= 1.0
    return loss


cdef void _input_gather(double[:, ::1] A, double[:, ::1] W, double[::1] bias,
                        i8[:, ::1] x, int i) noexcept nogil:
    """A[b, :] = W[:, s_prev(b)] + bias, with s_prev the previous data spin
    (the fixed initial input spin 0 at the first site)."""
    cdef int B = A.shape[0]
    cdef int dh = A.shape[1]
    cdef int b, j, s
    for b in range(B):
        s = 0 if i == 0 else x[b, i - 1]
        for j in range(dh):
            A[b, j] = W[j, s] + bias[j]


cdef void _input_scatter_grad(double[:, ::1] gW, double[:, ::1] DA,
                              i8[:, ::1] x, int i) noexcept nogil:
    """gW[:, s_prev(b)] += DA[b, :] (transposed one-hot product)."""
    cdef int B = DA.shape[0]
    cdef int dh = DA.shape[1]
    cdef int b, j, s
    for b in range(B):
        s = 0 if i == 0 else x[b, i - 1]
        for j in range(dh):
            gW[j, s] += DA[b, j]


cdef void _colsum_into(double[::1] out, double[:, ::1] A) noexcept nogil:
    cdef int B = A.shape[0]
    cdef int n = A.shape[1]
    cdef int b, j
    for b in range(B):
        for j in range(n):
            out[j] += A[b, j]


# ---------------------------------------------------------------------------
# vanilla cell
# ---------------------------------------------------------------------------

def vanilla_nll_grad(W, U, b, V, c, x, int quota):
    cdef double[:, ::1] W_ = W
    cdef double[:, ::1] U_ = U
    cdef double[::1] b_ = b
    cdef double[:, ::1] V_ = V
    cdef double[::1] c_ = c
    cdef i8[:, ::1] x_ = x
    cdef int B = x_.shape[0]
    cdef int N = x_.shape[1]
    cdef int dh = W_.shape[0]

    H_np = np.zeros((N + 1, B, dh))
    A_np = np.empty((B, dh))
    O_np = np.empty((B, 2))
    delta_np = np.empty((N, B, 2))
    cdef double[:, :, ::1] H = H_np
    cdef double[:, ::1] A = A_np
    cdef double[:, ::1] O = O_np
    cdef double[:, :, ::1] delta = delta_np
    cdef long[::1] cnt0 = np.zeros(B, dtype=np.int64)
    cdef long[::1] cnt1 = np.zeros(B, dtype=np.int64)

    cdef double loss = 0.0
    cdef int i
    for i in range(N):
        _input_gather(A, W_, b_, x_, i)
        gemm_rm(&A[0, 0], &H[i, 0, 0], &U_[0, 0], B, dh, dh, 0, 1, 1.0, 1.0)
        np.tanh(A_np, out=H_np[i + 1])
        gemm_rm(&O[0, 0], &H[i + 1, 0, 0], &V_[0, 0], B, 2, dh, 0, 1, 1.0, 0.0)
        loss += _site_pass(O, x_, i, quota, cnt0, cnt1, c_, delta)

    gW_np = np.zeros((dh, 2))
    gU_np = np.zeros((dh, dh))
    gb_np = np.zeros(dh)
    gV_np = np.zeros((2, dh))
    gc_np = np.zeros(2)
    cdef double[:, ::1] gW = gW_np
    cdef double[:, ::1] gU = gU_np
    cdef double[::1] gb = gb_np
    cdef double[:, ::1] gV = gV_np
    cdef double[::1] gc = gc_np
    DH_np = np.zeros((B, dh))
    DA_np = np.empty((B, dh))
    cdef double[:, ::1] DH = DH_np
    cdef double[:, ::1] DA = DA_np
    cdef int bb, j

    for i in range(N - 1, -1, -1):
        gemm_rm(&DH[0, 0], &delta[i, 0, 0], &V_[0, 0], B, dh, 2, 0, 0, 1.0, 1.0)
        gemm_rm(&gV[0, 0], &delta[i, 0, 0], &H[i + 1, 0, 0], 2, dh, B, 1, 0, 1.0, 1.0)
        for bb in range(B):
            gc[0] += delta[i, bb, 0]
            gc[1] += delta[i, bb, 1]
            for j in range(dh):
                DA[bb, j] = DH[bb, j] * (1.0 - H[i + 1, bb, j] * H[i + 1, bb, j])
        gemm_rm(&gU[0, 0], &DA[0, 0], &H[i, 0, 0], dh, dh, B, 1, 0, 1.0, 1.0)
        _colsum_into(gb, DA)
        _input_scatter_grad(gW, DA, x_, i)
        gemm_rm(&DH[0, 0], &DA[0, 0], &U_[0, 0], B, dh, dh, 0, 0, 1.0, 0.0)

    return loss, (gW_np, gU_np, gb_np, gV_np, gc_np)


cdef void _logprob_site(double[:, ::1] O, i8[:, ::1] x, int i, int quota,
                        long[::1] cnt0, long[::1] cnt1, double[::1] c,
                        double[::1] total) noexcept nogil:
    cdef int B = O.shape[0]
    cdef int b, s
    cdef bint alive0, alive1, obs_alive
    cdef double logy0, logy1, y0, y1, denom
    for b in range(B):
        s = x[b, i]
        site_logsoftmax(O[b, 0] + c[0], O[b, 1] + c[1], &logy0, &logy1)
        if quota > 0:
            alive0 = cnt0[b] < quota
            alive1 = cnt1[b] < quota
            obs_alive = alive0 if s == 0 else alive1
            if not obs_alive:
                total[b] = -INFINITY
            elif alive0 and alive1:
                y0 = exp(logy0)
                y1 = exp(logy1)
                denom = y0 * alive0 + y1 * alive1
                total[b] += (logy0 if s == 0 else logy1) - log(denom)
            # sole-survivor sites contribute log(1) = 0
            if s == 0:
                cnt0[b] += 1
            else:
                cnt1[b] += 1
        else:
            total[b] += logy0 if s == 0 else logy1


def vanilla_logprobs(W, U, b, V, c, x, int quota):
    cdef double[:, ::1] W_ = W
    cdef double[:, ::1] U_ = U
    cdef double[::1] b_ = b
    cdef double[:, ::1] V_ = V
    cdef double[::1] c_ = c
    cdef i8[:, ::1] x_ = x
    cdef int B = x_.shape[0]
    cdef int N = x_.shape[1]
    cdef int dh = W_.shape[0]

    H_np = np.zeros((B, dh))
    A_np = np.empty((B, dh))
    O_np = np.empty((B, 2))
    total_np = np.zeros(B)
    cdef double[:, ::1] H = H_np
    cdef double[:, ::1] A = A_np
    cdef double[:, ::1] O = O_np
    cdef double[::1] total = total_np
    cdef long[::1] cnt0 = np.zeros(B, dtype=np.int64)
    cdef long[::1] cnt1 = np.zeros(B, dtype=np.int64)
    cdef int i
    for i in range(N):
        _input_gather(A, W_, b_, x_, i)
        gemm_rm(&A[0, 0], &H[0, 0], &U_[0, 0], B, dh, dh, 0, 1, 1.0, 1.0)
        np.tanh(A_np, out=H_np)
        gemm_rm(&O[0, 0], &H[0, 0], &V_[0, 0], B, 2, dh, 0, 1, 1.0, 0.0)
        _logprob_site(O, x_, i, quota, cnt0, cnt1, c_, total)
    return total_np


cdef void _sample_site(double[:, ::1] O, double[::1] c, double[:, ::1] uniforms,
                       int i, int quota, long[::1] cnt0, long[::1] cnt1,
                       i8[:, ::1] out) noexcept nogil:
    cdef int B = O.shape[0]
    cdef int b
    cdef i8 s
    cdef bint alive0, alive1
    cdef double logy0, logy1, y0, y1, p0
    for b in range(B):
        site_logsoftmax(O[b, 0] + c[0], O[b, 1] + c[1], &logy0, &logy1)
        y0 = exp(logy0)
        y1 = exp(logy1)
        if quota > 0:
            alive0 = cnt0[b] < quota
            alive1 = cnt1[b] < quota
            if alive0 and alive1:
                p0 = y0 / (y0 + y1)
            elif alive0:
                p0 = 1.0
            else:
                p0 = 0.0
        else:
            p0 = y0
        s = 0 if uniforms[b, i] < p0 else 1
        out[b, i] = s
        if quota > 0:
            if s == 0:
                cnt0[b] += 1
            else:
                cnt1[b] += 1


def vanilla_sample(W, U, b, V, c, int n_samples, int n_sites, int quota, uniforms):
    cdef double[:, ::1] W_ = W
    cdef double[:, ::1] U_ = U
    cdef double[::1] b_ = b
    cdef double[:, ::1] V_ = V
    cdef double[::1] c_ = c
    cdef double[:, ::1] uni = np.ascontiguousarray(uniforms)
    cdef int B = n_samples
    cdef int dh = W_.shape[0]

    out_np = np.empty((B, n_sites), dtype=np.int8)
    H_np = np.zeros((B, dh))
    A_np = np.empty((B, dh))
    O_np = np.empty((B, 2))
    cdef i8[:, ::1] out = out_np
    cdef double[:, ::1] H = H_np
    cdef double[:, ::1] A = A_np
    cdef double[:, ::1] O = O_np
    cdef long[::1] cnt0 = np.zeros(B, dtype=np.int64)
    cdef long[::1] cnt1 = np.zeros(B, dtype=np.int64)
    cdef int i
    for i in range(n_sites):
        _input_gather(A, W_, b_, out, i)
        gemm_rm(&A[0, 0], &H[0, 0], &U_[0, 0], B, dh, dh, 0, 1, 1.0, 1.0)
        np.tanh(A_np, out=H_np)
        gemm_rm(&O[0, 0], &H[0, 0], &V_[0, 0], B, 2, dh, 0, 1, 1.0, 0.0)
        _sample_site(O, c_, uni, i, quota, cnt0, cnt1, out)
    return out_np


# ---------------------------------------------------------------------------
# GRU cell
# ---------------------------------------------------------------------------


cdef void _gru_gates_forward(double[:, :, ::1] H, double[:, :, ::1] Z,
                             double[:, :, ::1] R, double[:, :, ::1] RH,
                             double[:, :, ::1] HH, int i) noexcept nogil:
    """RH[i] = R[i] * H[i] (candidate input) - called before the Uh product."""
    cdef int B = H.shape[1]
    cdef int dh = H.shape[2]
    cdef int b, j
    for b in range(B):
        for j in range(dh):
            RH[i, b, j] = R[i, b, j] * H[i, b, j]


cdef void _gru_combine(double[:, :, ::1] H, double[:, :, ::1] Z,
                       double[:, :, ::1] HH, int i) noexcept nogil:
    """H[i+1] = (1 - Z[i]) * H[i] + Z[i] * HH[i]."""
    cdef int B = H.shape[1]
    cdef int dh = H.shape[2]
    cdef int b, j
    for b in range(B):
        for j in range(dh):
            H[i + 1, b, j] = (1.0 - Z[i, b, j]) * H[i, b, j] + Z[i, b, j] * HH[i, b, j]


def gru_nll_grad(Wz, Wr, Wh, Uz, Ur, Uh, bz, br, bh, V, c, x, int quota):
    cdef double[:, ::1] Wz_ = Wz, Wr_ = Wr, Wh_ = Wh
    cdef double[:, ::1] Uz_ = Uz, Ur_ = Ur, Uh_ = Uh
    cdef double[::1] bz_ = bz, br_ = br, bh_ = bh
    cdef double[:, ::1] V_ = V
    cdef double[::1] c_ = c
    cdef i8[:, ::1] x_ = x
    cdef int B = x_.shape[0]
    cdef int N = x_.shape[1]
    cdef int dh = Wz_.shape[0]

    H_np = np.zeros((N + 1, B, dh))
    Z_np = np.empty((N, B, dh))
    R_np = np.empty((N, B, dh))
    RH_np = np.empty((N, B, dh))
    HH_np = np.empty((N, B, dh))
    O_np = np.empty((B, 2))
    delta_np = np.empty((N, B, 2))
    cdef double[:, :, ::1] H = H_np, Z = Z_np, R = R_np, RH = RH_np, HH = HH_np
    cdef double[:, ::1] O = O_np
    cdef double[:, :, ::1] delta = delta_np
    cdef long[::1] cnt0 = np.zeros(B, dtype=np.int64)
    cdef long[::1] cnt1 = np.zeros(B, dtype=np.int64)

    cdef double loss = 0.0
    cdef int i
    for i in range(N):
        _input_gather_3(Z, Wz_, bz_, x_, i)
        gemm_rm(&Z[i, 0, 0], &H[i, 0, 0], &Uz_[0, 0], B, dh, dh, 0, 1, 1.0, 1.0)
        _sigmoid_inplace(Z_np[i])
        _input_gather_3(R, Wr_, br_, x_, i)
        gemm_rm(&R[i, 0, 0], &H[i, 0, 0], &Ur_[0, 0], B, dh, dh, 0, 1, 1.0, 1.0)
        _sigmoid_inplace(R_np[i])
        _gru_gates_forward(H, Z, R, RH, HH, i)
        _input_gather_3(HH, Wh_, bh_, x_, i)
        gemm_rm(&HH[i, 0, 0], &RH[i, 0, 0], &Uh_[0, 0], B, dh, dh, 0, 1, 1.0, 1.0)
        np.tanh(HH_np[i], out=HH_np[i])
        _gru_combine(H, Z, HH, i)
        gemm_rm(&O[0, 0], &H[i + 1, 0, 0], &V_[0, 0], B, 2, dh, 0, 1, 1.0, 0.0)
        loss += _site_pass(O, x_, i, quota, cnt0, cnt1, c_, delta)

    gWz_np, gWr_np, gWh_np = np.zeros((dh, 2)), np.zeros((dh, 2)), np.zeros((dh, 2))
    gUz_np, gUr_np, gUh_np = np.zeros((dh, dh)), np.zeros((dh, dh)), np.zeros((dh, dh))
    gbz_np, gbr_np, gbh_np = np.zeros(dh), np.zeros(dh), np.zeros(dh)
    gV_np = np.zeros((2, dh))
    gc_np = np.zeros(2)
    cdef double[:, ::1] gWz = gWz_np, gWr = gWr_np, gWh = gWh_np
    cdef double[:, ::1] gUz = gUz_np, gUr = gUr_np, gUh = gUh_np
    cdef double[::1] gbz = gbz_np, gbr = gbr_np, gbh = gbh_np
    cdef double[:, ::1] gV = gV_np
    cdef double[::1] gc = gc_np

    DH_np = np.zeros((B, dh))
    DAZ_np = np.empty((B, dh))
    DAR_np = np.empty((B, dh))
    DAH_np = np.empty((B, dh))
    DRH_np = np.empty((B, dh))
    DHP_np = np.empty((B, dh))
    cdef double[:, ::1] DH = DH_np, DAZ = DAZ_np, DAR = DAR_np
    cdef double[:, ::1] DAH = DAH_np, DRH = DRH_np, DHP = DHP_np
    cdef int bb, j
    cdef double dh_val, z, r, hh, hp, dz, dhh

    for i in range(N - 1, -1, -1):
        gemm_rm(&DH[0, 0], &delta[i, 0, 0], &V_[0, 0], B, dh, 2, 0, 0, 1.0, 1.0)
        gemm_rm(&gV[0, 0], &delta[i, 0, 0], &H[i + 1, 0, 0], 2, dh, B, 1, 0, 1.0, 1.0)
        for bb in range(B):
            gc[0] += delta[i, bb, 0]
            gc[1] += delta[i, bb, 1]
            for j in range(dh):
                dh_val = DH[bb, j]
                z = Z[i, bb, j]
                hh = HH[i, bb, j]
                hp = H[i, bb, j]
                dz = dh_val * (hh - hp)
                DAZ[bb, j] = dz * z * (1.0 - z)
                dhh = dh_val * z
                DAH[bb, j] = dhh * (1.0 - hh * hh)
        gemm_rm(&DRH[0, 0], &DAH[0, 0], &Uh_[0, 0], B, dh, dh, 0, 0, 1.0, 0.0)
        for bb in range(B):
            for j in range(dh):
                r = R[i, bb, j]
                DAR[bb, j] = DRH[bb, j] * H[i, bb, j] * r * (1.0 - r)
                DHP[bb, j] = DH[bb, j] * (1.0 - Z[i, bb, j]) + DRH[bb, j] * r
        gemm_rm(&gUz[0, 0], &DAZ[0, 0], &H[i, 0, 0], dh, dh, B, 1, 0, 1.0, 1.0)
        gemm_rm(&gUr[0, 0], &DAR[0, 0], &H[i, 0, 0], dh, dh, B, 1, 0, 1.0, 1.0)
        gemm_rm(&gUh[0, 0], &DAH[0, 0], &RH[i, 0, 0], dh, dh, B, 1, 0, 1.0, 1.0)
        _colsum_into(gbz, DAZ)
        _colsum_into(gbr, DAR)
        _colsum_into(gbh, DAH)
        _input_scatter_grad(gWz, DAZ, x_, i)
        _input_scatter_grad(gWr, DAR, x_, i)
        _input_scatter_grad(gWh, DAH, x_, i)
        gemm_rm(&DHP[0, 0], &DAZ[0, 0], &Uz_[0, 0], B, dh, dh, 0, 0, 1.0, 1.0)
        gemm_rm(&DHP[0, 0], &DAR[0, 0], &Ur_[0, 0], B, dh, dh, 0, 0, 1.0, 1.0)
        DH_np, DHP_np = DHP_np, DH_np
        DH = DH_np
        DHP = DHP_np

    return loss, (gWz_np, gWr_np, gWh_np, gUz_np, gUr_np, gUh_np,
                  gbz_np, gbr_np, gbh_np, gV_np, gc_np)


cdef void _input_gather_3(double[:, :, ::1] A, double[:, ::1] W,
                          double[::1] bias, i8[:, ::1] x, int i) noexcept nogil:
    """A[i, b, :] = W[:, s_prev(b)] + bias (3-d stash variant)."""
    cdef int B = A.shape[1]
    cdef int dh = A.shape[2]
    cdef int b, j, s
    for b in range(B):
        s = 0 if i == 0 else x[b, i - 1]
        for j in range(dh):
            A[i, b, j] = W[j, s] + bias[j]


def gru_logprobs(Wz, Wr, Wh, Uz, Ur, Uh, bz, br, bh, V, c, x, int quota):
    cdef double[:, ::1] Wz_ = Wz, Wr_ = Wr, Wh_ = Wh
    cdef double[:, ::1] Uz_ = Uz, Ur_ = Ur, Uh_ = Uh
    cdef double[::1] bz_ = bz, br_ = br, bh_ = bh
    cdef double[:, ::1] V_ = V
    cdef double[::1] c_ = c
    cdef i8[:, ::1] x_ = x
    cdef int B = x_.shape[0]
    cdef int N = x_.shape[1]
    cdef int dh = Wz_.shape[0]

    H_np = np.zeros((B, dh))
    Zg_np = np.empty((B, dh))
    Rg_np = np.empty((B, dh))
    C_np = np.empty((B, dh))
    O_np = np.empty((B, 2))
    total_np = np.zeros(B)
    cdef double[:, ::1] H = H_np, Zg = Zg_np, Rg = Rg_np, Cand = C_np
    cdef double[:, ::1] O = O_np
    cdef double[::1] total = total_np
    cdef long[::1] cnt0 = np.zeros(B, dtype=np.int64)
    cdef long[::1] cnt1 = np.zeros(B, dtype=np.int64)
    cdef int i, bb, j
    for i in range(N):
        _input_gather(Zg, Wz_, bz_, x_, i)
        gemm_rm(&Zg[0, 0], &H[0, 0], &Uz_[0, 0], B, dh, dh, 0, 1, 1.0, 1.0)
        _sigmoid_inplace(Zg_np)
        _input_gather(Rg, Wr_, br_, x_, i)
        gemm_rm(&Rg[0, 0], &H[0, 0], &Ur_[0, 0], B, dh, dh, 0, 1, 1.0, 1.0)
        _sigmoid_inplace(Rg_np)
        for bb in range(B):
            for j in range(dh):
                Rg[bb, j] = Rg[bb, j] * H[bb, j]
        _input_gather(Cand, Wh_, bh_, x_, i)
        gemm_rm(&Cand[0, 0], &Rg[0, 0], &Uh_[0, 0], B, dh, dh, 0, 1, 1.0, 1.0)
        np.tanh(C_np, out=C_np)
        for bb in range(B):
            for j in range(dh):
                H[bb, j] = (1.0 - Zg[bb, j]) * H[bb, j] + Zg[bb, j] * Cand[bb, j]
        gemm_rm(&O[0, 0], &H[0, 0], &V_[0, 0], B, 2, dh, 0, 1, 1.0, 0.0)
        _logprob_site(O, x_, i, quota, cnt0, cnt1, c_, total)
    return total_np


def gru_sample(Wz, Wr, Wh, Uz, Ur, Uh, bz, br, bh, V, c,
               int n_samples, int n_sites, int quota, uniforms):
    cdef double[:, ::1] Wz_ = Wz, Wr_ = Wr, Wh_ = Wh
    cdef double[:, ::1] Uz_ = Uz, Ur_ = Ur, Uh_ = Uh
    cdef double[::1] bz_ = bz, br_ = br, bh_ = bh
    cdef double[:, ::1] V_ = V
    cdef double[::1] c_ = c
    cdef double[:, ::1] uni = np.ascontiguousarray(uniforms)
    cdef int B = n_samples
    cdef int dh = Wz_.shape[0]

    out_np = np.empty((B, n_sites), dtype=np.int8)
    H_np = np.zeros((B, dh))
    Zg_np = np.empty((B, dh))
    Rg_np = np.empty((B, dh))
    C_np = np.empty((B, dh))
    O_np = np.empty((B, 2))
    cdef i8[:, ::1] out = out_np
    cdef double[:, ::1] H = H_np, Zg = Zg_np, Rg = Rg_np, Cand = C_np
    cdef double[:, ::1] O = O_np
    cdef long[::1] cnt0 = np.zeros(B, dtype=np.int64)
    cdef long[::1] cnt1 = np.zeros(B, dtype=np.int64)
    cdef int i, bb, j
    for i in range(n_sites):
        _input_gather(Zg, Wz_, bz_, out, i)
        gemm_rm(&Zg[0, 0], &H[0, 0], &Uz_[0, 0], B, dh, dh, 0, 1, 1.0, 1.0)
        _sigmoid_inplace(Zg_np)
        _input_gather(Rg, Wr_, br_, out, i)
        gemm_rm(&Rg[0, 0], &H[0, 0], &Ur_[0, 0], B, dh, dh, 0, 1, 1.0, 1.0)
        _sigmoid_inplace(Rg_np)
        for bb in range(B):
            for j in range(dh):
                Rg[bb, j] = Rg[bb, j] * H[bb, j]
        _input_gather(Cand, Wh_, bh_, out, i)
        gemm_rm(&Cand[0, 0], &Rg[0, 0], &Uh_[0, 0], B, dh, dh, 0, 1, 1.0, 1.0)
        np.tanh(C_np, out=C_np)
        for bb in range(B):
            for j in range(dh):
                H[bb, j] = (1.0 - Zg[bb, j]) * H[bb, j] + Zg[bb, j] * Cand[bb, j]
        gemm_rm(&O[0, 0], &H[0, 0], &V_[0, 0], B, 2, dh, 0, 1, 1.0, 0.0)
        _sample_site(O, c_, uni, i, quota, cnt0, cnt1, out)
    return out_np


# ---------------------------------------------------------------------------
# RBM block Gibbs
# ---------------------------------------------------------------------------

cdef inline u64 mix64(u64 z) noexcept nogil:
    z = z ^ (z >> 30)
    z = z * MIX1
    z = z ^ (z >> 27)
    z = z * MIX2
    return z ^ (z >> 31)


cdef inline double uniform_at(u64 chain_seed, u64 counter) noexcept nogil:
    return <double> (mix64(chain_seed + (counter + 1ULL) * GOLDEN) >> 11) * (2.0 ** -53)


cdef inline double exp_fast(double x) noexcept nogil:
    """exp of a non-positive argument, accurate to ~1e-7 relative: range
    reduction by ln 2, short Taylor tail, and the power-of-two scale built
    directly in the exponent bits. Only used for Gibbs acceptance
    probabilities, where the error is orders of magnitude below sampling
    noise."""
    if x < -36.0:
        return 0.0
    cdef double k = x * 1.4426950408889634
    cdef long n = <long> (k - 0.5)
    cdef double r = x - n * 0.6931471805599453
    cdef double p = 1.0 + r * (1.0 + r * (0.5 + r * (1.0 / 6.0 + r * (1.0 / 24.0
                    + r * (1.0 / 120.0 + r * (1.0 / 720.0))))))
    cdef u64 bits = (<u64> (n + 1023)) << 52
    return p * (<double*> &bits)[0]


cdef inline bint bernoulli_sigmoid(double u, double x) noexcept nogil:
    """u < logistic(x) without a division: multiply through by 1 + e."""
    cdef double e
    if x >= 0:
        e = exp_fast(-x)
        return u * (1.0 + e) < 1.0
    e = exp_fast(x)
    return u * (1.0 + e) < e


def rbm_gibbs(w, b_vis, c_hid, v0, int k, seed):
    """k block-Gibbs sweeps per chain, chains in parallel.

    Draw order per chain and sweep: all hidden units, then all visible
    units, with counters matching the reference backend exactly.
    """
    cdef double[:, ::1] w_ = np.ascontiguousarray(w)
    cdef double[::1] b_ = np.ascontiguousarray(b_vis)
    cdef double[::1] c_ = np.ascontiguousarray(c_hid)
    cdef i8[:, ::1] v0_ = np.ascontiguousarray(v0, dtype=np.int8)
    cdef u64 seed_ = <u64> int(seed)
    cdef int B = v0_.shape[0]
    cdef int n_vis = v0_.shape[1]
    cdef int n_hid = w_.shape[1]

    out_np = np.empty((B, n_vis), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] out = out_np
    # per-chain scratch rows so chains never share state
    cdef double[:, ::1] act = np.empty((B, n_hid))
    cdef double[:, ::1] hid = np.empty((B, n_hid))
    cdef i8[:, ::1] vis = np.empty((B, n_vis), dtype=np.int8)

    cdef int ch, t, i, j
    cdef u64 cs, base
    cdef u64 per_sweep = <u64> (n_hid + n_vis)
    cdef double a

    cdef double s0, s1, s2, s3
    cdef int j4

    for ch in prange(B, nogil=True, schedule="static"):
        cs = mix64(seed_ + (<u64> ch + 1ULL) * GOLDEN)
        for i in range(n_vis):
            vis[ch, i] = v0_[ch, i]
        for t in range(k):
            base = <u64> t * per_sweep
            for j in range(n_hid):
                act[ch, j] = c_[j]
            for i in range(n_vis):
                if vis[ch, i]:
                    for j in range(n_hid):
                        act[ch, j] = act[ch, j] + w_[i, j]
            for j in range(n_hid):
                hid[ch, j] = 1.0 if bernoulli_sigmoid(
                    uniform_at(cs, base + <u64> j), act[ch, j]) else 0.0
            for i in range(n_vis):
                # 4-way partial sums so the dot product vectorizes
                s0 = 0.0
                s1 = 0.0
                s2 = 0.0
                s3 = 0.0
                j4 = 0
                while j4 + 4 <= n_hid:
                    s0 = s0 + w_[i, j4] * hid[ch, j4]
                    s1 = s1 + w_[i, j4 + 1] * hid[ch, j4 + 1]
                    s2 = s2 + w_[i, j4 + 2] * hid[ch, j4 + 2]
                    s3 = s3 + w_[i, j4 + 3] * hid[ch, j4 + 3]
                    j4 = j4 + 4
                a = b_[i] + ((s0 + s1) + (s2 + s3))
                for j in range(j4, n_hid):
                    a = a + w_[i, j] * hid[ch, j]
                vis[ch, i] = 1 if bernoulli_sigmoid(
                    uniform_at(cs, base + <u64> n_hid + <u64> i), a) else 0
        for i in range(n_vis):
            out[ch, i] = <cnp.uint8_t> vis[ch, i]
    return out_np
