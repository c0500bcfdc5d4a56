"""Minimal dense-network machinery: parameter dicts, MLP forward/backward, losses.

Everything is float64 numpy with hand-written backward passes, so analytic
gradients can be checked against central finite differences to tight
tolerances. Parameters live in a flat ``{name: array}`` dict; gradients use
the same keys.
"""

from __future__ import annotations

import numpy as np

Params = dict  # name -> np.ndarray
Grads = dict


def init_linear(params: Params, name: str, fan_in: int, fan_out: int, rng: np.random.Generator):
    """Uniform init scaled by fan-in, for weight and bias."""
    bound = 1.0 / np.sqrt(fan_in)
    params[f"{name}.w"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
    params[f"{name}.b"] = rng.uniform(-bound, bound, size=(fan_out,))


def linear_forward(params: Params, name: str, x: np.ndarray) -> np.ndarray:
    return x @ params[f"{name}.w"] + params[f"{name}.b"]


def linear_backward(params: Params, grads: Grads, name: str, x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    grads[f"{name}.w"] += x.T @ dy
    grads[f"{name}.b"] += dy.sum(axis=0)
    return dy @ params[f"{name}.w"].T


class Mlp:
    """Stack of linear layers with tanh between them.

    The output layer is linear unless ``tanh_output`` is set (used for trunks
    that feed separate linear heads). tanh keeps the derivative defined (and
    smooth) everywhere, which the finite-difference gradient checks rely on.
    """

    def __init__(self, name: str, sizes: list[int], tanh_output: bool = False):
        self.name = name
        self.sizes = list(sizes)
        self.tanh_output = tanh_output
        self.layer_names = [f"{name}.l{i}" for i in range(len(sizes) - 1)]

    def init(self, params: Params, rng: np.random.Generator):
        for i, layer in enumerate(self.layer_names):
            init_linear(params, layer, self.sizes[i], self.sizes[i + 1], rng)

    def _activated(self, i: int) -> bool:
        return i < len(self.layer_names) - 1 or self.tanh_output

    def forward(self, params: Params, x: np.ndarray):
        """Returns (output, cache); cache holds each layer's input and activation."""
        cache = []
        h = x
        for i, layer in enumerate(self.layer_names):
            z = linear_forward(params, layer, h)
            a = np.tanh(z) if self._activated(i) else z
            cache.append((h, a if self._activated(i) else None))
            h = a
        return h, cache

    def backward(self, params: Params, grads: Grads, cache, dy: np.ndarray) -> np.ndarray:
        for i in range(len(self.layer_names) - 1, -1, -1):
            x, act = cache[i]
            if self._activated(i):
                dy = dy * (1.0 - act * act)  # tanh'
            dy = linear_backward(params, grads, self.layer_names[i], x, dy)
        return dy


def scale_to_unit(x: np.ndarray):
    """Min-max rescale each row to [0, 1]; constant rows map to zeros.

    Returns (scaled, cache) where cache is reused by :func:`scale_to_unit_backward`.
    """
    lo = x.min(axis=1, keepdims=True)
    hi = x.max(axis=1, keepdims=True)
    span = hi - lo
    degenerate = span[:, 0] == 0.0
    safe = np.where(span == 0.0, 1.0, span)
    y = (x - lo) / safe
    y[degenerate] = 0.0
    imin = x.argmin(axis=1)
    imax = x.argmax(axis=1)
    return y, (y, safe, imin, imax, degenerate)


def scale_to_unit_backward(cache, dy: np.ndarray) -> np.ndarray:
    """Exact gradient of the min-max rescale (subgradient at the arg extrema)."""
    y, span, imin, imax, degenerate = cache
    rows = np.arange(dy.shape[0])
    dx = dy / span
    g_sum = dy.sum(axis=1) / span[:, 0]
    gy_sum = (dy * y).sum(axis=1) / span[:, 0]
    dx[rows, imin] -= g_sum - gy_sum
    dx[rows, imax] -= gy_sum
    dx[degenerate] = 0.0
    return dx


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits: np.ndarray, targets: np.ndarray):
    """Per-row cross-entropy -sum(target * log softmax(logits)).

    Returns (losses, probs); the gradient wrt logits is (probs - targets)
    scaled by the upstream factor.
    """
    z = logits - logits.max(axis=-1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    losses = -(targets * log_probs).sum(axis=-1)
    return losses, np.exp(log_probs)


def flat_norm_sq(params: Params) -> float:
    return float(sum(float(np.sum(v * v)) for v in params.values()))


def zeros_like_params(params: Params) -> Grads:
    return {k: np.zeros_like(v) for k, v in params.items()}
