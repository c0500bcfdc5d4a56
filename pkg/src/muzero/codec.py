"""Invertible scalar transform and categorical support encoding for values and rewards.

Scalars are squashed by an invertible transform and then represented as a
probability mixture over an integer support grid, so that value/reward heads
can be trained with a cross-entropy loss while the rest of the system keeps
working with plain floats.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CodecConfig:
    """Support grid and transform regularizer for the categorical encoding."""

    epsilon: float = 0.001
    support_min: int = -20
    support_max: int = 20

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.support_max <= self.support_min:
            raise ValueError(
                f"support_max ({self.support_max}) must exceed support_min ({self.support_min})"
            )

    @property
    def support_size(self) -> int:
        return self.support_max - self.support_min + 1

    @property
    def supports(self) -> np.ndarray:
        return np.arange(self.support_min, self.support_max + 1, dtype=np.float64)

    @classmethod
    def wide(cls) -> "CodecConfig":
        """601-atom preset: one support per integer in [-300, 300]."""
        return cls(epsilon=0.001, support_min=-300, support_max=300)


def _check_finite(x, name: str):
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} must be finite, got {x!r}")


def transform(x, epsilon: float = 0.001):
    """Squash a scalar (or array): sign(x) * (sqrt(|x| + 1) - 1) + epsilon * x.

    Odd and strictly increasing, so it has a closed-form inverse.
    """
    arr = np.asarray(x, dtype=np.float64)
    _check_finite(arr, "transform input")
    out = np.sign(arr) * (np.sqrt(np.abs(arr) + 1.0) - 1.0) + epsilon * arr
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def inverse_transform(y, epsilon: float = 0.001):
    """Closed-form inverse of :func:`transform`.

    For y >= 0 solve y = u - 1 + epsilon*(u^2 - 1) with u = sqrt(x + 1), a
    quadratic in u; the negative branch follows by oddness.
    """
    arr = np.asarray(y, dtype=np.float64)
    _check_finite(arr, "inverse_transform input")
    a = np.abs(arr)
    u = (np.sqrt(1.0 + 4.0 * epsilon * (a + 1.0 + epsilon)) - 1.0) / (2.0 * epsilon)
    out = np.sign(arr) * (u * u - 1.0)
    return float(out) if np.isscalar(y) or arr.ndim == 0 else out


def scalar_to_categorical(x: float, cfg: CodecConfig) -> np.ndarray:
    """Project a transformed-space scalar onto the support grid.

    The input is clamped to the grid and its mass split between the two
    adjacent supports so the expectation recovers the clamped value exactly;
    e.g. 3.7 becomes weight 0.3 on support 3 and weight 0.7 on support 4.
    """
    _check_finite(x, "scalar_to_categorical input")
    x = min(max(float(x), cfg.support_min), cfg.support_max)
    probs = np.zeros(cfg.support_size, dtype=np.float64)
    low = int(np.floor(x))
    frac = x - low
    idx = low - cfg.support_min
    probs[idx] = 1.0 - frac
    if frac > 0.0:
        probs[idx + 1] = frac
    return probs


def scalars_to_categorical(xs: np.ndarray, cfg: CodecConfig) -> np.ndarray:
    """Vectorized :func:`scalar_to_categorical` for a batch of scalars."""
    xs = np.asarray(xs, dtype=np.float64)
    _check_finite(xs, "scalars_to_categorical input")
    flat = np.clip(xs.reshape(-1), cfg.support_min, cfg.support_max)
    low = np.floor(flat).astype(np.int64)
    # Values sitting exactly on support_max need their upper atom kept in range.
    low = np.minimum(low, cfg.support_max - 1)
    frac = flat - low
    probs = np.zeros((flat.size, cfg.support_size), dtype=np.float64)
    rows = np.arange(flat.size)
    idx = low - cfg.support_min
    probs[rows, idx] = 1.0 - frac
    probs[rows, idx + 1] = frac
    return probs.reshape(xs.shape + (cfg.support_size,))


def categorical_to_scalar(probs: np.ndarray, cfg: CodecConfig) -> float:
    """Expected support under `probs`, mapped back through the inverse transform."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (cfg.support_size,):
        raise ValueError(f"expected {cfg.support_size} probabilities, got shape {probs.shape}")
    total = probs.sum()
    if abs(total - 1.0) > 1e-6 or np.any(probs < -1e-12):
        raise ValueError(f"probabilities must be normalized, sum={total}")
    return inverse_transform(float(probs @ cfg.supports), cfg.epsilon)
