"""Encoder stack on the crossbar engine, with per-block signal-to-noise probes.

Operand roles follow the deployment model: the projection matrices W_Q, W_K,
W_V, the output projection and both MLP matrices are stationary (programmed
once), while each head's K^T and V matrices are dynamic (rewritten every
inference, write + read noise, eligible for conductance clipping).

Each attention block evaluates two branches from the same input: the exact
path (quantization and ADC included, no noise, no clip) and the deployed
path (clip plus configured noise). SNR compares the pair per block, so every
probe isolates that block's own non-ideality rather than accumulated drift,
and the exact path is bit-identical no matter which noise is enabled; the
forward state continues along the exact path. A zero-noise unclipped
deployment reproduces the exact branch bitwise (infinite SNR).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .engine import MvmStats, map_operand, mapping_write_events, mvm
from .linalg import Array, as_matrix, gelu, layernorm, matmul, softmax_rows
from .mapping import ClipParams, CrossbarConfig
from .model import EncoderWeights, ModelConfig
from .noise import NoiseSpec

OPERAND_CLASSES = ("qkv", "kv", "proj", "mlp")


@dataclass
class RunStats:
    """Per-operand-class event bookkeeping for one or more inferences."""

    per_class: dict[str, MvmStats] = field(
        default_factory=lambda: {c: MvmStats() for c in OPERAND_CLASSES})
    kv_dw_sq_sum: float = 0.0
    kv_dw_count: int = 0

    def record_mvm(self, cls: str, stats: MvmStats) -> None:
        self.per_class[cls].add(stats)

    def record_mapping(self, cls: str, tiles) -> None:
        agg = self.per_class[cls]
        agg.n_write_events += mapping_write_events(tiles)
        for t in tiles:
            agg.n_write_draws += t.write_draws
            self.kv_dw_sq_sum += t.write_dw_sq_sum
            self.kv_dw_count += t.write_dw_count

    @property
    def kv_write_dw_rms(self) -> float:
        """RMS of decoded dynamic-operand write perturbations, in w_max units."""
        if self.kv_dw_count == 0:
            return 0.0
        return math.sqrt(self.kv_dw_sq_sum / self.kv_dw_count)

    def total(self) -> MvmStats:
        out = MvmStats()
        for st in self.per_class.values():
            out.add(st)
        return out


@dataclass
class AttentionProbe:
    """The per-block SNR probe pair: exact-path and deployed attention."""

    ideal: Array
    nonideal: Array


@dataclass
class SnrReport:
    """Per-encoder attention SNR in dB, averaged over the input batch."""

    per_block_snr: list[float]
    mean_snr: float
    per_input_snr: list[list[float]]


def compute_snr(x_ideal, x_nonideal) -> float:
    """``10 log10(|X_ideal|^2 / |X_ideal - X_nonideal|^2)`` in dB; +inf when
    the two coincide, error on an all-zero reference."""
    xi = as_matrix(x_ideal, "x_ideal")
    xn = as_matrix(x_nonideal, "x_nonideal")
    if xi.shape != xn.shape:
        raise ValueError(f"shape mismatch {xi.shape} vs {xn.shape}")
    signal = float(np.sum(np.square(xi)))
    if signal == 0.0:
        raise ValueError("SNR undefined for an all-zero reference signal")
    error = float(np.sum(np.square(xi - xn)))
    if error == 0.0:
        return math.inf
    return 10.0 * math.log10(signal / error)


def _dynamic_mvm(x: Array, operand: Array, tag: str, cfg: CrossbarConfig,
                 clip: ClipParams | None, noise: NoiseSpec | None,
                 stats: RunStats | None) -> Array:
    spec = noise.child(tag) if noise is not None else None
    tiles = map_operand(operand, cfg, clip=clip, dynamic=True, noise=spec)
    y, st = mvm(x, tiles, cfg, noise=spec)
    if stats is not None:
        stats.record_mapping("kv", tiles)
        stats.record_mvm("kv", st)
    return y


def _heads(m: Array, model: ModelConfig, h: int) -> Array:
    hd = model.head_dim
    return m[:, h * hd:(h + 1) * hd]


def attention_block(x, w: EncoderWeights, model: ModelConfig,
                    cfg: CrossbarConfig, clip: ClipParams | None = None,
                    noise: NoiseSpec | None = None,
                    static_noise: NoiseSpec | None = None,
                    stats: RunStats | None = None
                    ) -> tuple[Array, AttentionProbe]:
    """Multi-head attention on crossbars; returns (output, probe pair).

    Both branches share the input and the stationary QKV mappings: the exact
    branch runs them noise-free and keeps its K/V unclipped; the deployed
    branch reads them under ``static_noise`` (falling back to ``noise``) and
    maps its own K/V dynamically with ``clip`` applied and write noise drawn.
    Scores are scaled by 1/sqrt(embed_dim) and softmaxed digitally; head
    outputs are concatenated (the output projection lives in the encoder's
    feed-forward branch). The returned output is the exact branch, which the
    encoder's residual path consumes; the deployed branch is observable
    through the probe and the event ``stats``, which record it alone.
    """
    x = as_matrix(x, "attention input")
    if x.shape[1] != model.embed_dim:
        raise ValueError(
            f"input width {x.shape[1]} != embed_dim {model.embed_dim}")
    sn = static_noise if static_noise is not None else noise
    scale = 1.0 / math.sqrt(model.embed_dim)

    qkv_ideal: dict[str, Array] = {}
    qkv_dep: dict[str, Array] = {}
    for name in ("w_q", "w_k", "w_v"):
        tiles = map_operand(getattr(w, name), cfg, dynamic=False)
        qkv_ideal[name], _ = mvm(x, tiles, cfg)
        qkv_dep[name], st = mvm(
            x, tiles, cfg, noise=sn.child(name) if sn is not None else None)
        if stats is not None:
            stats.record_mvm("qkv", st)

    ideal_heads = []
    dep_heads = []
    for h in range(model.n_heads):
        q_i = _heads(qkv_ideal["w_q"], model, h)
        k_i = _heads(qkv_ideal["w_k"], model, h)
        v_i = _heads(qkv_ideal["w_v"], model, h)
        scores = _dynamic_mvm(q_i, k_i.T, f"h{h}/kt", cfg, None, None, None)
        attn = softmax_rows(scores * scale)
        ideal_heads.append(
            _dynamic_mvm(attn, v_i, f"h{h}/v", cfg, None, None, None))

        q_d = _heads(qkv_dep["w_q"], model, h)
        k_d = _heads(qkv_dep["w_k"], model, h)
        v_d = _heads(qkv_dep["w_v"], model, h)
        scores_d = _dynamic_mvm(q_d, k_d.T, f"h{h}/kt", cfg, clip, noise,
                                stats)
        attn_d = softmax_rows(scores_d * scale)
        dep_heads.append(
            _dynamic_mvm(attn_d, v_d, f"h{h}/v", cfg, clip, noise, stats))

    probe = AttentionProbe(ideal=np.concatenate(ideal_heads, axis=1),
                           nonideal=np.concatenate(dep_heads, axis=1))
    return probe.ideal, probe


def encoder_forward(x, w: EncoderWeights, model: ModelConfig,
                    cfg: CrossbarConfig, clip: ClipParams | None = None,
                    noise: NoiseSpec | None = None,
                    static_noise: NoiseSpec | None = None,
                    stats: RunStats | None = None
                    ) -> tuple[Array, AttentionProbe]:
    """One encoder: pre-layernorm attention with residual, then a layernormed
    projection + MLP branch with residual. The state follows the exact path;
    the probe carries both attention branches."""
    x = as_matrix(x, "encoder input")
    attn, probe = attention_block(layernorm(x, w.ln1_gain, w.ln1_bias), w,
                                  model, cfg, clip=clip, noise=noise,
                                  static_noise=static_noise, stats=stats)
    h = x + attn
    branch = layernorm(h, w.ln2_gain, w.ln2_bias)
    for name, cls in (("w_proj", "proj"), ("mlp_in", "mlp"),
                      ("mlp_out", "mlp")):
        tiles = map_operand(getattr(w, name), cfg, dynamic=False)
        branch, st = mvm(branch, tiles, cfg)
        if stats is not None:
            stats.record_mvm(cls, st)
        if name == "mlp_in":
            branch = gelu(branch)
    return h + branch, probe


def run_inference(inputs, weights: list[EncoderWeights], model: ModelConfig,
                  cfg: CrossbarConfig, clip: ClipParams | None = None,
                  noise: NoiseSpec | None = None, freeze_read: bool = False,
                  ) -> tuple[list[Array], SnrReport, RunStats]:
    """Run a batch through the encoder stack, probing SNR at every block.

    ``freeze_read`` keeps one read-noise realization for stationary operands
    across the whole batch (per-deployment) instead of redrawing per input;
    dynamic operands are always rewritten, and redrawn, per input.
    """
    if not inputs:
        raise ValueError("empty input batch")
    for x in inputs:
        x = as_matrix(x, "input")
        if x.shape != (model.tokens, model.embed_dim):
            raise ValueError(
                f"input shape {x.shape} != "
                f"({model.tokens}, {model.embed_dim})")
    if len(weights) != model.n_encoders:
        raise ValueError(
            f"{len(weights)} encoder weight sets for {model.n_encoders} "
            "encoders")
    for w in weights:
        w.validate(model)

    stats = RunStats()
    outputs: list[Array] = []
    per_input: list[list[float]] = []
    for i, x0 in enumerate(inputs):
        sample_noise = noise.child(f"s{i}") if noise is not None else None
        state = as_matrix(x0)
        sample_snr: list[float] = []
        for e, w in enumerate(weights):
            enc_noise = (sample_noise.child(f"enc{e}")
                         if sample_noise is not None else None)
            static = enc_noise
            if freeze_read and noise is not None:
                static = noise.child(f"deploy/enc{e}")
            state, probe = encoder_forward(state, w, model, cfg, clip=clip,
                                           noise=enc_noise,
                                           static_noise=static, stats=stats)
            sample_snr.append(compute_snr(probe.ideal, probe.nonideal))
        outputs.append(state)
        per_input.append(sample_snr)

    per_block = [float(np.mean([snr[e] for snr in per_input]))
                 for e in range(model.n_encoders)]
    return outputs, SnrReport(per_block_snr=per_block,
                              mean_snr=float(np.mean(per_block)),
                              per_input_snr=per_input), stats


def reference_attention(x, w: EncoderWeights, model: ModelConfig) -> Array:
    """Pure-math attention (no quantization, no crossbars) for bound checks."""
    x = as_matrix(x)
    q = matmul(x, w.w_q)
    k = matmul(x, w.w_k)
    v = matmul(x, w.w_v)
    scale = 1.0 / math.sqrt(model.embed_dim)
    outs = []
    for h in range(model.n_heads):
        q_i, k_i, v_i = (_heads(q, model, h), _heads(k, model, h),
                         _heads(v, model, h))
        attn = softmax_rows(matmul(q_i, k_i.T) * scale)
        outs.append(matmul(attn, v_i))
    return np.concatenate(outs, axis=1)
