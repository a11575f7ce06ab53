"""Gradient verification against central finite differences."""

from __future__ import annotations

import numpy as np

from .network import Network


def grad_check(net: Network, x: np.ndarray, target: np.ndarray, loss_fn,
               epsilon: float = 1e-5) -> float:
    """Max relative error between analytic and numeric parameter gradients.

    The network must be deterministic (no active dropout). Relative
    error is |a - n| / max(|a|, |n|), treated as 0 when both are tiny.
    """
    out = net.forward(x, train=True)
    _, upstream = loss_fn(out, target)
    net.backward(upstream)
    analytic = [g.copy() for g in net.grads()]

    worst = 0.0
    for param, agrad in zip(net.params(), analytic):
        flat = param.ravel()
        aflat = agrad.ravel()
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + epsilon
            up, _ = loss_fn(net.forward(x, train=True), target)
            flat[idx] = orig - epsilon
            down, _ = loss_fn(net.forward(x, train=True), target)
            flat[idx] = orig
            numeric = (up - down) / (2.0 * epsilon)
            a = aflat[idx]
            if abs(a) < 1e-8 and abs(numeric) < 1e-8:
                continue
            worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric)))
    return worst
