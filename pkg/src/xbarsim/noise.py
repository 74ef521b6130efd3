"""Stochastic conductance non-idealities: multiplicative read noise and
state-dependent additive write noise, plus their closed-form weight-domain
perturbation predictions.

Randomness is counter-based: every draw site owns a Philox stream keyed by
(seed, stream_id), with stream ids derived by hashing human-readable labels.
Identical (seed, stream label, shape) always reproduces the identical
realization, bitwise, regardless of evaluation order or thread schedule.
Noisy conductances are never clamped back into [g_min, g_max]; decodes see
the raw perturbed values.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace

import numpy as np

from .linalg import Array
from .mapping import CrossbarConfig


def stream_id(label: str) -> int:
    """Stable 64-bit stream id from a human-readable label."""
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _derive(parent: int, tag: str) -> int:
    payload = parent.to_bytes(8, "little") + tag.encode("utf-8")
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class NoiseSpec:
    """Noise parameters plus the (seed, stream) pair that keys the draws.

    ``apply_read`` / ``apply_write`` gate whether each mechanism consumes
    draws at all; zero sigma (or zero gamma for writes) with the gate open
    still evaluates to an exact identity.
    """

    sigma_read: float = 0.05
    sigma_write: float = 0.1
    gamma: float = 4.0
    apply_read: bool = True
    apply_write: bool = True
    seed: int = 0
    stream: int = 0

    def __post_init__(self) -> None:
        if self.sigma_read < 0.0 or self.sigma_write < 0.0 or self.gamma < 0.0:
            raise ValueError("noise parameters must be non-negative")

    @classmethod
    def from_crossbar(cls, cfg: CrossbarConfig, seed: int = 0,
                      apply_read: bool = True, apply_write: bool = True,
                      label: str = "run") -> "NoiseSpec":
        return cls(sigma_read=cfg.sigma_read, sigma_write=cfg.sigma_write,
                   gamma=cfg.gamma, apply_read=apply_read,
                   apply_write=apply_write, seed=seed, stream=stream_id(label))

    def child(self, tag: str) -> "NoiseSpec":
        """Same parameters, independent stream derived from ``tag``."""
        return replace(self, stream=_derive(self.stream, tag))

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed & 0xFFFFFFFFFFFFFFFF,
                        self.stream & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def standard_normal(self, shape) -> Array:
        return self.generator().standard_normal(shape)


OFF = NoiseSpec(sigma_read=0.0, sigma_write=0.0, gamma=0.0,
                apply_read=False, apply_write=False)


def apply_read_noise(g, spec: NoiseSpec, cfg: CrossbarConfig) -> Array:
    """Multiplicative read disturbance: ``G' = G * (1 + n)`` with
    n ~ N(0, sigma_read^2) drawn per element."""
    g = np.asarray(g, dtype=np.float64)
    if not spec.apply_read:
        return g.copy()
    n = spec.standard_normal(g.shape) * spec.sigma_read
    return g * (1.0 + n)


def apply_write_noise(g, spec: NoiseSpec, cfg: CrossbarConfig) -> Array:
    """State-dependent programming error:
    ``G' = G + gamma * sqrt((G - g_min) * (g_max - g_min)) * n`` with
    n ~ N(0, sigma_write^2). Exactly zero at G = g_min for any gamma."""
    g = np.asarray(g, dtype=np.float64)
    if np.any(g < cfg.g_min):
        raise ValueError("write noise needs conductances >= g_min")
    if not spec.apply_write:
        return g.copy()
    n = spec.standard_normal(g.shape) * spec.sigma_write
    return g + spec.gamma * np.sqrt((g - cfg.g_min) * cfg.g_span) * n


def apply_write_then_read(g, spec: NoiseSpec, cfg: CrossbarConfig) -> Array:
    """Composition in physical order: program first, then disturb the read."""
    written = apply_write_noise(g, spec.child("write"), cfg)
    return apply_read_noise(written, spec.child("read"), cfg)


def predicted_read_perturbation(w, w_max: float, cfg: CrossbarConfig) -> Array:
    """Closed-form std of the decoded read perturbation:
    ``sigma_read * (w + w_max / (on_off - 1))``; shrinks as ON/OFF grows."""
    w = np.asarray(w, dtype=np.float64)
    if w_max <= 0.0:
        raise ValueError(f"w_max must be positive, got {w_max}")
    if np.any(w < 0.0) or np.any(w > w_max):
        raise ValueError("weights must lie in [0, w_max]")
    return cfg.sigma_read * (w + w_max / (cfg.on_off_ratio - 1.0))


def predicted_write_perturbation(w, w_max: float, spec: NoiseSpec) -> Array:
    """Closed-form std of the decoded write perturbation:
    ``gamma * sigma_write * sqrt(w_max * w)``; no ON/OFF dependence."""
    w = np.asarray(w, dtype=np.float64)
    if w_max <= 0.0:
        raise ValueError(f"w_max must be positive, got {w_max}")
    if np.any(w < 0.0) or np.any(w > w_max):
        raise ValueError("weights must lie in [0, w_max]")
    return spec.gamma * spec.sigma_write * np.sqrt(w_max * w)


def predicted_read_std_conductance(g, cfg: CrossbarConfig) -> Array:
    """Std of the raw conductance read disturbance, sigma_read * G."""
    return cfg.sigma_read * np.abs(np.asarray(g, dtype=np.float64))


def write_noise_scale(g, spec: NoiseSpec, cfg: CrossbarConfig) -> Array:
    """Std of the raw conductance write error at state G."""
    g = np.asarray(g, dtype=np.float64)
    return spec.gamma * spec.sigma_write * np.sqrt(
        np.maximum(g - cfg.g_min, 0.0) * cfg.g_span)
