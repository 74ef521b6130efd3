"""Digital-domain math shared by the analog array model and the transformer pipeline.

Everything here is exact float64 arithmetic; simulated precision loss enters only
through :func:`quantize`, which snaps values onto a uniform grid. Matrices are
plain 2-D float64 numpy arrays throughout the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

Array = np.ndarray

_SQRT2 = math.sqrt(2.0)


def as_matrix(m, name: str = "matrix") -> Array:
    """Coerce ``m`` to a 2-D float64 array, rejecting anything else."""
    out = np.asarray(m, dtype=np.float64)
    if out.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got ndim={out.ndim}")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite values")
    return out


def matmul(a, b) -> Array:
    """Exact float64 matrix product; the noise-free reference for every analog path."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    return a @ b


def softmax_rows(m) -> Array:
    """Row-wise softmax with max-subtraction stabilization."""
    m = as_matrix(m)
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def layernorm(m, gain, bias, eps: float = 1e-6) -> Array:
    """Row-wise layer normalization with learned per-column gain and bias.

    Uses the biased variance (divide by n) and ``eps`` inside the square root,
    so constant rows map to the bias exactly.
    """
    m = as_matrix(m)
    gain = np.asarray(gain, dtype=np.float64).reshape(-1)
    bias = np.asarray(bias, dtype=np.float64).reshape(-1)
    if gain.shape[0] != m.shape[1] or bias.shape[0] != m.shape[1]:
        raise ValueError("gain/bias length must match column count")
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    mean = m.mean(axis=1, keepdims=True)
    var = np.square(m - mean).mean(axis=1, keepdims=True)
    return (m - mean) / np.sqrt(var + eps) * gain + bias


def gelu(m) -> Array:
    """Exact-erf GELU, x * Phi(x); no tanh approximation."""
    m = as_matrix(m)
    return m * 0.5 * (1.0 + erf(m / _SQRT2))


def round_half_away(x: Array) -> Array:
    """Round to nearest integer, ties away from zero (np.round ties to even)."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0.0, np.floor(x + 0.5), np.ceil(x - 0.5))


@dataclass(frozen=True)
class QuantSpec:
    """Uniform quantization grid: 2**bits levels spanning [min_val, max_val]."""

    bits: int
    min_val: float
    max_val: float

    def __post_init__(self) -> None:
        if self.bits < 1:
            raise ValueError(f"bits must be >= 1, got {self.bits}")
        if not (math.isfinite(self.min_val) and math.isfinite(self.max_val)):
            raise ValueError("quantization range must be finite")
        if self.max_val < self.min_val:
            raise ValueError(
                f"max_val {self.max_val} < min_val {self.min_val}")

    @property
    def n_levels(self) -> int:
        return 1 << self.bits

    @property
    def max_code(self) -> int:
        return self.n_levels - 1

    @property
    def step(self) -> float:
        if self.max_val == self.min_val:
            return 0.0
        return (self.max_val - self.min_val) / self.max_code


def quantize_codes(m, spec: QuantSpec) -> Array:
    """Integer grid codes in [0, 2**bits - 1]; values outside the range clip.

    Ties round away from zero, which for the non-negative normalized
    coordinate means half-up: a deterministic convention shared by input,
    weight and ADC quantization.
    """
    m = np.asarray(m, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise ValueError("cannot quantize non-finite values")
    if spec.step == 0.0:
        return np.zeros_like(m)
    t = (m - spec.min_val) / spec.step
    return np.clip(round_half_away(t), 0.0, float(spec.max_code))


def codes_to_values(codes, spec: QuantSpec) -> Array:
    """Map integer grid codes back to representable values."""
    codes = np.asarray(codes, dtype=np.float64)
    return spec.min_val + codes * spec.step


def quantize(m, spec: QuantSpec) -> Array:
    """Snap values onto the grid: clip to range, round to the nearest level."""
    return codes_to_values(quantize_codes(m, spec), spec)
