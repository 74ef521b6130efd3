"""Encoder-stack model description, synthetic weight generation, and the
adapter onto the tensor container format.

The default geometry is a small desk-scale stack (4 encoders, 16 tokens,
64-dim embedding, 4 heads) chosen so full noise sweeps run in seconds; the
published-scale geometry (12 encoders, 197 tokens, 384-dim, 6 heads) is
expressible through the same config and used by the counting-only estimator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import Array
from .noise import NoiseSpec
from .tensorfile import load_tensors, save_tensors


@dataclass(frozen=True)
class ModelConfig:
    n_encoders: int = 4
    tokens: int = 16
    embed_dim: int = 64
    n_heads: int = 4
    mlp_ratio: float = 4.0

    def __post_init__(self) -> None:
        if min(self.n_encoders, self.tokens, self.embed_dim, self.n_heads) < 1:
            raise ValueError("model dimensions must be positive")
        if self.embed_dim % self.n_heads != 0:
            raise ValueError(
                f"embed_dim {self.embed_dim} not divisible by "
                f"{self.n_heads} heads")
        if self.mlp_ratio <= 0.0:
            raise ValueError("mlp_ratio must be positive")
        if int(self.embed_dim * self.mlp_ratio) < 1:
            raise ValueError("mlp hidden dim must be positive")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.n_heads

    @property
    def mlp_dim(self) -> int:
        return int(self.embed_dim * self.mlp_ratio)


@dataclass
class EncoderWeights:
    """One encoder's learnable tensors (digital layernorm + crossbar MVMs)."""

    w_q: Array
    w_k: Array
    w_v: Array
    w_proj: Array
    mlp_in: Array
    mlp_out: Array
    ln1_gain: Array
    ln1_bias: Array
    ln2_gain: Array
    ln2_bias: Array

    def validate(self, cfg: ModelConfig) -> None:
        d, m = cfg.embed_dim, cfg.mlp_dim
        expected = {"w_q": (d, d), "w_k": (d, d), "w_v": (d, d),
                    "w_proj": (d, d), "mlp_in": (d, m), "mlp_out": (m, d),
                    "ln1_gain": (d,), "ln1_bias": (d,),
                    "ln2_gain": (d,), "ln2_bias": (d,)}
        for name, shape in expected.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ValueError(f"{name} has shape {got}, expected {shape}")


_MATRIX_FIELDS = ("w_q", "w_k", "w_v", "w_proj", "mlp_in", "mlp_out")
_VECTOR_FIELDS = ("ln1_gain", "ln1_bias", "ln2_gain", "ln2_bias")

WEIGHT_INIT_STD = 0.02


def _f32_exact(values: Array) -> Array:
    """Round to the nearest float32 so saved models reload bitwise."""
    return values.astype(np.float32).astype(np.float64)


def generate_synthetic_model(cfg: ModelConfig, seed: int = 0) -> list[EncoderWeights]:
    """Gaussian(0, 0.02^2) weights from counter-based per-tensor streams;
    layernorm gains start at one, biases at zero."""
    base = NoiseSpec(seed=seed, stream=0).child("model")
    d, m = cfg.embed_dim, cfg.mlp_dim
    shapes = {"w_q": (d, d), "w_k": (d, d), "w_v": (d, d), "w_proj": (d, d),
              "mlp_in": (d, m), "mlp_out": (m, d)}
    encoders = []
    for e in range(cfg.n_encoders):
        fields = {}
        for name, shape in shapes.items():
            draw = base.child(f"enc{e}/{name}").standard_normal(shape)
            fields[name] = _f32_exact(draw * WEIGHT_INIT_STD)
        for name in _VECTOR_FIELDS:
            fields[name] = (np.ones(d) if name.endswith("gain")
                            else np.zeros(d))
        encoders.append(EncoderWeights(**fields))
    return encoders


def model_to_tensors(weights: list[EncoderWeights]) -> dict[str, np.ndarray]:
    tensors: dict[str, np.ndarray] = {}
    for e, w in enumerate(weights):
        for name in _MATRIX_FIELDS + _VECTOR_FIELDS:
            tensors[f"enc{e}.{name}"] = getattr(w, name)
    return tensors


def tensors_to_model(tensors: dict[str, np.ndarray],
                     cfg: ModelConfig) -> list[EncoderWeights]:
    encoders = []
    for e in range(cfg.n_encoders):
        fields = {}
        for name in _MATRIX_FIELDS + _VECTOR_FIELDS:
            key = f"enc{e}.{name}"
            if key not in tensors:
                raise ValueError(f"model file is missing tensor {key!r}")
            fields[name] = np.asarray(tensors[key], dtype=np.float64)
        enc = EncoderWeights(**fields)
        enc.validate(cfg)
        encoders.append(enc)
    return encoders


def save_model(path, weights: list[EncoderWeights]) -> None:
    save_tensors(path, model_to_tensors(weights))


def load_model(path, cfg: ModelConfig) -> list[EncoderWeights]:
    return tensors_to_model(load_tensors(path), cfg)


def generate_inputs(cfg: ModelConfig, seed: int, batch: int) -> list[Array]:
    """Deterministic standard-normal input batch keyed by the run seed."""
    base = NoiseSpec(seed=seed, stream=0).child("inputs")
    return [base.child(f"s{i}").standard_normal((cfg.tokens, cfg.embed_dim))
            for i in range(batch)]
