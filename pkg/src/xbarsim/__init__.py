"""Transformer attention inference on modeled non-ideal memristive crossbars.

The package models analog matrix-vector multiplies on 64x64 RRAM tiles
(differential conductance pairs, 2-bit cells, bit-serial 8-bit inputs, 6-bit
ADCs), injects stochastic read and write noise, optionally clips the dynamic
K/V conductances to trade a small deterministic distortion for a large noise
reduction, and reports attention signal-to-noise alongside analytic area and
energy estimates.
"""

from .config import ConfigError, ExperimentSpec, SweepPoint, load_config
from .engine import (MvmStats, TileStack, map_operand, mvm, mvm_ideal,
                     quantized_matmul_reference)
from .estimator import HwReport, count_crossbars, estimate, estimate_static
from .linalg import (QuantSpec, gelu, layernorm, matmul, quantize,
                     softmax_rows)
from .mapping import (ClipParams, ConductancePlane, CrossbarConfig,
                      SliceStack, clip_conductances, conductance_to_weight,
                      decode_plane, encode_signed, required_slices,
                      slice_conductances, weight_to_conductance)
from .model import (EncoderWeights, ModelConfig, generate_inputs,
                    generate_synthetic_model, load_model, save_model)
from .noise import (NoiseSpec, apply_read_noise, apply_write_noise,
                    predicted_read_perturbation, predicted_write_perturbation)
from .pipeline import (AttentionProbe, RunStats, SnrReport, attention_block,
                       compute_snr, encoder_forward, run_inference)
from .tensorfile import TensorFileError, load_tensors, save_tensors

__version__ = "0.1.0"

__all__ = [
    "AttentionProbe", "ClipParams", "ConductancePlane", "ConfigError",
    "CrossbarConfig",
    "EncoderWeights", "ExperimentSpec", "HwReport", "ModelConfig", "MvmStats",
    "NoiseSpec", "QuantSpec", "RunStats", "SliceStack", "SnrReport",
    "SweepPoint", "TensorFileError", "TileStack", "apply_read_noise",
    "apply_write_noise", "attention_block", "clip_conductances",
    "compute_snr", "conductance_to_weight", "count_crossbars", "decode_plane",
    "encode_signed", "encoder_forward", "estimate", "estimate_static", "gelu",
    "generate_inputs", "generate_synthetic_model", "layernorm", "load_config",
    "load_model",
    "load_tensors", "map_operand", "matmul", "mvm", "mvm_ideal",
    "predicted_read_perturbation", "predicted_write_perturbation", "quantize",
    "quantized_matmul_reference", "required_slices", "run_inference",
    "save_model", "save_tensors", "slice_conductances", "softmax_rows",
    "weight_to_conductance",
]
