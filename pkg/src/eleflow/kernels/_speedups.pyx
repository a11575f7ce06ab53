# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; drop-in replacements for kernels.reference.

Matrix products go through BLAS (dgemm); gate math, convolution and
pooling run as tight typed loops. Semantics, shapes and cache layouts
match the reference module exactly.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef inline double _sig(double z) noexcept nogil:
    cdef double ez
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    ez = exp(z)
    return ez / (1.0 + ez)


cdef void _mm_nn(double[:, ::1] a, double[:, ::1] b, double[:, ::1] c,
                 double alpha, double beta) noexcept nogil:
    # c = alpha * a @ b + beta * c
    cdef int m = a.shape[0], k = a.shape[1], n = b.shape[1]
    dgemm("N", "N", &n, &m, &k, &alpha, &b[0, 0], &n, &a[0, 0], &k,
          &beta, &c[0, 0], &n)


cdef void _mm_tn(double[:, ::1] a, double[:, ::1] b, double[:, ::1] c,
                 double alpha, double beta) noexcept nogil:
    # c = alpha * a.T @ b + beta * c
    cdef int k = a.shape[0], m = a.shape[1], n = b.shape[1]
    dgemm("N", "T", &n, &m, &k, &alpha, &b[0, 0], &n, &a[0, 0], &m,
          &beta, &c[0, 0], &n)


cdef void _mm_nt(double[:, ::1] a, double[:, ::1] b, double[:, ::1] c,
                 double alpha, double beta) noexcept nogil:
    # c = alpha * a @ b.T + beta * c
    cdef int m = a.shape[0], k = a.shape[1], n = b.shape[0]
    dgemm("T", "N", &n, &m, &k, &alpha, &b[0, 0], &k, &a[0, 0], &k,
          &beta, &c[0, 0], &n)


def conv1d_forward(cnp.ndarray x_in, cnp.ndarray w_in, cnp.ndarray b_in):
    cdef double[:, :, ::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef double[:, :, ::1] w = np.ascontiguousarray(w_in, dtype=np.float64)
    cdef double[::1] b = np.ascontiguousarray(b_in, dtype=np.float64)
    cdef Py_ssize_t bsz = x.shape[0], length = x.shape[1], chans = x.shape[2]
    cdef Py_ssize_t ksz = w.shape[0], filt = w.shape[2]
    cdef Py_ssize_t lout = length - ksz + 1
    out_arr = np.empty((bsz, lout, filt), dtype=np.float64)
    cdef double[:, :, ::1] y = out_arr
    cdef Py_ssize_t i, t, kk, c, f
    cdef double xv
    with nogil:
        for i in range(bsz):
            for t in range(lout):
                for f in range(filt):
                    y[i, t, f] = b[f]
                for kk in range(ksz):
                    for c in range(chans):
                        xv = x[i, t + kk, c]
                        for f in range(filt):
                            y[i, t, f] += xv * w[kk, c, f]
    return out_arr


def conv1d_backward(cnp.ndarray x_in, cnp.ndarray w_in, cnp.ndarray gy_in):
    cdef double[:, :, ::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef double[:, :, ::1] w = np.ascontiguousarray(w_in, dtype=np.float64)
    cdef double[:, :, ::1] gy = np.ascontiguousarray(gy_in, dtype=np.float64)
    cdef Py_ssize_t bsz = x.shape[0], length = x.shape[1], chans = x.shape[2]
    cdef Py_ssize_t ksz = w.shape[0], filt = w.shape[2]
    cdef Py_ssize_t lout = gy.shape[1]
    gx_arr = np.zeros((bsz, length, chans), dtype=np.float64)
    gw_arr = np.zeros((ksz, chans, filt), dtype=np.float64)
    gb_arr = np.zeros(filt, dtype=np.float64)
    cdef double[:, :, ::1] gx = gx_arr
    cdef double[:, :, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t i, t, kk, c, f
    cdef double xv, acc
    with nogil:
        for i in range(bsz):
            for t in range(lout):
                for f in range(filt):
                    gb[f] += gy[i, t, f]
                for kk in range(ksz):
                    for c in range(chans):
                        xv = x[i, t + kk, c]
                        acc = 0.0
                        for f in range(filt):
                            gw[kk, c, f] += xv * gy[i, t, f]
                            acc += w[kk, c, f] * gy[i, t, f]
                        gx[i, t + kk, c] += acc
    return gx_arr, gw_arr, gb_arr


def maxpool1d_forward(cnp.ndarray x_in, int pool):
    cdef double[:, :, ::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef Py_ssize_t bsz = x.shape[0], length = x.shape[1], chans = x.shape[2]
    cdef Py_ssize_t lout = length // pool
    y_arr = np.empty((bsz, lout, chans), dtype=np.float64)
    arg_arr = np.empty((bsz, lout, chans), dtype=np.int64)
    cdef double[:, :, ::1] y = y_arr
    cdef long long[:, :, ::1] arg = arg_arr
    cdef Py_ssize_t i, t, c, j
    cdef double best, v
    cdef long long bidx
    with nogil:
        for i in range(bsz):
            for t in range(lout):
                for c in range(chans):
                    best = x[i, t * pool, c]
                    bidx = 0
                    for j in range(1, pool):
                        v = x[i, t * pool + j, c]
                        if v > best:
                            best = v
                            bidx = j
                    y[i, t, c] = best
                    arg[i, t, c] = bidx
    return y_arr, arg_arr


def maxpool1d_backward(cnp.ndarray arg_in, int pool, int in_length,
                       cnp.ndarray gy_in):
    cdef long long[:, :, ::1] arg = np.ascontiguousarray(arg_in, dtype=np.int64)
    cdef double[:, :, ::1] gy = np.ascontiguousarray(gy_in, dtype=np.float64)
    cdef Py_ssize_t bsz = gy.shape[0], lout = gy.shape[1], chans = gy.shape[2]
    gx_arr = np.zeros((bsz, in_length, chans), dtype=np.float64)
    cdef double[:, :, ::1] gx = gx_arr
    cdef Py_ssize_t i, t, c
    with nogil:
        for i in range(bsz):
            for t in range(lout):
                for c in range(chans):
                    gx[i, t * pool + arg[i, t, c], c] = gy[i, t, c]
    return gx_arr


def lstm_forward(cnp.ndarray x_in, cnp.ndarray wx_in, cnp.ndarray wh_in,
                 cnp.ndarray b_in):
    x_arr = np.ascontiguousarray(x_in, dtype=np.float64)
    wx_arr = np.ascontiguousarray(wx_in, dtype=np.float64)
    wh_arr = np.ascontiguousarray(wh_in, dtype=np.float64)
    cdef double[:, :, ::1] x = x_arr
    cdef double[:, ::1] wx = wx_arr
    cdef double[:, ::1] wh = wh_arr
    cdef double[::1] b = np.ascontiguousarray(b_in, dtype=np.float64)
    cdef Py_ssize_t bsz = x.shape[0], steps = x.shape[1], feats = x.shape[2]
    cdef Py_ssize_t units = wh.shape[0], g4 = 4 * units

    # input projections for every step in one dgemm
    xp_arr = np.empty((bsz * steps, g4), dtype=np.float64)
    cdef double[:, ::1] xp = xp_arr
    cdef double[:, ::1] xflat = x_arr.reshape(bsz * steps, feats)
    _mm_nn(xflat, wx, xp, 1.0, 0.0)

    gates_arr = np.empty((bsz, steps, g4), dtype=np.float64)
    cs_arr = np.empty((bsz, steps, units), dtype=np.float64)
    hs_arr = np.empty((bsz, steps, units), dtype=np.float64)
    h_arr = np.zeros((bsz, units), dtype=np.float64)
    cdef double[:, :, ::1] gates = gates_arr
    cdef double[:, :, ::1] cs = cs_arr
    cdef double[:, :, ::1] hs = hs_arr
    cdef double[:, ::1] h = h_arr
    cdef double[:, ::1] c = np.zeros((bsz, units), dtype=np.float64)
    cdef double[:, ::1] z = np.empty((bsz, g4), dtype=np.float64)

    cdef Py_ssize_t t, i, j
    cdef double iv, fv, gv, ov, cv
    for t in range(steps):
        with nogil:
            for i in range(bsz):
                for j in range(g4):
                    z[i, j] = xp[i * steps + t, j] + b[j]
        _mm_nn(h, wh, z, 1.0, 1.0)
        with nogil:
            for i in range(bsz):
                for j in range(units):
                    iv = _sig(z[i, j])
                    fv = _sig(z[i, units + j])
                    gv = tanh(z[i, 2 * units + j])
                    ov = _sig(z[i, 3 * units + j])
                    cv = fv * c[i, j] + iv * gv
                    c[i, j] = cv
                    h[i, j] = ov * tanh(cv)
                    gates[i, t, j] = iv
                    gates[i, t, units + j] = fv
                    gates[i, t, 2 * units + j] = gv
                    gates[i, t, 3 * units + j] = ov
                    cs[i, t, j] = cv
                    hs[i, t, j] = h[i, j]
    return h_arr.copy(), (x_arr, wx_arr, wh_arr, gates_arr, cs_arr, hs_arr)


def lstm_backward(cache, cnp.ndarray gh_last):
    x_arr, wx_arr, wh_arr, gates_arr, cs_arr, hs_arr = cache
    cdef double[:, :, ::1] x = x_arr
    cdef double[:, ::1] wx = wx_arr
    cdef double[:, ::1] wh = wh_arr
    cdef double[:, :, ::1] gates = gates_arr
    cdef double[:, :, ::1] cs = cs_arr
    cdef double[:, :, ::1] hs = hs_arr
    cdef Py_ssize_t bsz = x.shape[0], steps = x.shape[1], feats = x.shape[2]
    cdef Py_ssize_t units = wh.shape[0], g4 = 4 * units

    gx_arr = np.empty((bsz, steps, feats), dtype=np.float64)
    gwx_arr = np.zeros((feats, g4), dtype=np.float64)
    gwh_arr = np.zeros((units, g4), dtype=np.float64)
    gb_arr = np.zeros(g4, dtype=np.float64)
    cdef double[:, :, ::1] gx = gx_arr
    cdef double[:, ::1] gwx = gwx_arr
    cdef double[:, ::1] gwh = gwh_arr
    cdef double[::1] gb = gb_arr

    cdef double[:, ::1] dh = np.ascontiguousarray(gh_last, dtype=np.float64).copy()
    cdef double[:, ::1] dc = np.zeros((bsz, units), dtype=np.float64)
    cdef double[:, ::1] dz = np.empty((bsz, g4), dtype=np.float64)
    cdef double[:, ::1] xt = np.empty((bsz, feats), dtype=np.float64)
    cdef double[:, ::1] hprev = np.empty((bsz, units), dtype=np.float64)
    cdef double[:, ::1] gxt = np.empty((bsz, feats), dtype=np.float64)

    cdef Py_ssize_t t, i, j
    cdef double iv, fv, gv, ov, tc, cp, do_, dcv
    for t in range(steps - 1, -1, -1):
        with nogil:
            for i in range(bsz):
                for j in range(units):
                    iv = gates[i, t, j]
                    fv = gates[i, t, units + j]
                    gv = gates[i, t, 2 * units + j]
                    ov = gates[i, t, 3 * units + j]
                    tc = tanh(cs[i, t, j])
                    cp = cs[i, t - 1, j] if t > 0 else 0.0
                    do_ = dh[i, j] * tc
                    dcv = dc[i, j] + dh[i, j] * ov * (1.0 - tc * tc)
                    dz[i, j] = dcv * gv * iv * (1.0 - iv)
                    dz[i, units + j] = dcv * cp * fv * (1.0 - fv)
                    dz[i, 2 * units + j] = dcv * iv * (1.0 - gv * gv)
                    dz[i, 3 * units + j] = do_ * ov * (1.0 - ov)
                    dc[i, j] = dcv * fv
                for j in range(feats):
                    xt[i, j] = x[i, t, j]
                for j in range(units):
                    hprev[i, j] = hs[i, t - 1, j] if t > 0 else 0.0
            for i in range(bsz):
                for j in range(g4):
                    gb[j] += dz[i, j]
        _mm_tn(xt, dz, gwx, 1.0, 1.0)
        if t > 0:
            _mm_tn(hprev, dz, gwh, 1.0, 1.0)
        _mm_nt(dz, wx, gxt, 1.0, 0.0)
        with nogil:
            for i in range(bsz):
                for j in range(feats):
                    gx[i, t, j] = gxt[i, j]
        _mm_nt(dz, wh, dh, 1.0, 0.0)
    return gx_arr, gwx_arr, gwh_arr, gb_arr
