"""Numpy reference implementations of the hot training kernels.

These define the semantics; the optional compiled module in
``_speedups.pyx`` mirrors the exact signatures. Conventions:

  conv1d   x (B, L, C) * w (K, C, F) + b (F) -> (B, L-K+1, F), valid padding
  maxpool  pool windows of size p, trailing remainder dropped,
           gradient routed to the first maximal index of each window
  lstm     gate order [input, forget, cell-candidate, output] along the
           last axis of the packed weight matrices; returns the final
           hidden state only
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def conv1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    win = sliding_window_view(x, w.shape[0], axis=1)  # (B, Lo, C, K)
    return np.einsum("blck,kcf->blf", win, w, optimize=True) + b


def conv1d_backward(x: np.ndarray, w: np.ndarray, gy: np.ndarray):
    k = w.shape[0]
    win = sliding_window_view(x, k, axis=1)
    gw = np.einsum("blck,blf->kcf", win, gy, optimize=True)
    gb = gy.sum(axis=(0, 1))
    gx = np.zeros_like(x)
    lo = gy.shape[1]
    for j in range(k):
        gx[:, j:j + lo, :] += gy @ w[j].T
    return gx, gw, gb


def maxpool1d_forward(x: np.ndarray, pool: int):
    b, length, c = x.shape
    lo = length // pool
    windows = x[:, :lo * pool, :].reshape(b, lo, pool, c)
    arg = windows.argmax(axis=2)
    y = np.take_along_axis(windows, arg[:, :, None, :], axis=2)[:, :, 0, :]
    return y, arg.astype(np.int64)


def maxpool1d_backward(arg: np.ndarray, pool: int, in_length: int, gy: np.ndarray):
    b, lo, c = gy.shape
    gx = np.zeros((b, in_length, c), dtype=gy.dtype)
    windows = gx[:, :lo * pool, :].reshape(b, lo, pool, c)
    np.put_along_axis(windows, arg[:, :, None, :], gy[:, :, None, :], axis=2)
    return gx


def lstm_forward(x: np.ndarray, wx: np.ndarray, wh: np.ndarray, b: np.ndarray):
    bsz, steps, _ = x.shape
    h_units = wh.shape[0]
    # input projections for every step in one matmul
    xp = (x.reshape(bsz * steps, -1) @ wx).reshape(bsz, steps, 4 * h_units) + b
    gates = np.empty((bsz, steps, 4 * h_units))
    cs = np.empty((bsz, steps, h_units))
    hs = np.empty((bsz, steps, h_units))
    h = np.zeros((bsz, h_units))
    c = np.zeros((bsz, h_units))
    for t in range(steps):
        z = xp[:, t] + h @ wh
        i = sigmoid(z[:, :h_units])
        f = sigmoid(z[:, h_units:2 * h_units])
        g = np.tanh(z[:, 2 * h_units:3 * h_units])
        o = sigmoid(z[:, 3 * h_units:])
        c = f * c + i * g
        h = o * np.tanh(c)
        gates[:, t, :h_units] = i
        gates[:, t, h_units:2 * h_units] = f
        gates[:, t, 2 * h_units:3 * h_units] = g
        gates[:, t, 3 * h_units:] = o
        cs[:, t] = c
        hs[:, t] = h
    return h, (x, wx, wh, gates, cs, hs)


def lstm_backward(cache, gh_last: np.ndarray):
    x, wx, wh, gates, cs, hs = cache
    bsz, steps, _ = x.shape
    h_units = wh.shape[0]

    gx = np.empty_like(x)
    gwx = np.zeros_like(wx)
    gwh = np.zeros_like(wh)
    gb = np.zeros(4 * h_units)
    dh = gh_last.copy()
    dc = np.zeros((bsz, h_units))
    dz = np.empty((bsz, 4 * h_units))

    for t in range(steps - 1, -1, -1):
        i = gates[:, t, :h_units]
        f = gates[:, t, h_units:2 * h_units]
        g = gates[:, t, 2 * h_units:3 * h_units]
        o = gates[:, t, 3 * h_units:]
        tc = np.tanh(cs[:, t])
        c_prev = cs[:, t - 1] if t > 0 else np.zeros((bsz, h_units))
        h_prev = hs[:, t - 1] if t > 0 else None

        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        dz[:, :h_units] = dc * g * i * (1.0 - i)
        dz[:, h_units:2 * h_units] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * h_units:3 * h_units] = dc * i * (1.0 - g * g)
        dz[:, 3 * h_units:] = do * o * (1.0 - o)

        gb += dz.sum(axis=0)
        gwx += x[:, t].T @ dz
        if h_prev is not None:
            gwh += h_prev.T @ dz
        gx[:, t] = dz @ wx.T
        dh = dz @ wh.T
        dc = dc * f
    return gx, gwx, gwh, gb
