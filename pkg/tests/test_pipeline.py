"""Encoder stack orchestration and the per-block SNR probes."""

import math
from dataclasses import replace

import numpy as np
import pytest

from xbarsim.engine import quantized_matmul_reference
from xbarsim.linalg import layernorm, softmax_rows
from xbarsim.mapping import ClipParams, CrossbarConfig
from xbarsim.model import (EncoderWeights, ModelConfig, generate_inputs,
                           generate_synthetic_model)
from xbarsim.noise import NoiseSpec
from xbarsim.pipeline import (OPERAND_CLASSES, RunStats, attention_block,
                              compute_snr, encoder_forward,
                              reference_attention, run_inference)

MODEL = ModelConfig()
CFG = CrossbarConfig()
IDEAL_ADC = replace(CFG, adc_bits=None)
WEIGHTS = generate_synthetic_model(MODEL, seed=7)
INPUTS = generate_inputs(MODEL, seed=11, batch=2)


def _noise(seed=20, **kw):
    return NoiseSpec.from_crossbar(CFG, seed=seed, **kw)


def _zero_weights(model: ModelConfig) -> EncoderWeights:
    d, m = model.embed_dim, model.mlp_dim
    return EncoderWeights(
        w_q=np.zeros((d, d)), w_k=np.zeros((d, d)), w_v=np.zeros((d, d)),
        w_proj=np.zeros((d, d)), mlp_in=np.zeros((d, m)),
        mlp_out=np.zeros((m, d)), ln1_gain=np.ones(d), ln1_bias=np.zeros(d),
        ln2_gain=np.ones(d), ln2_bias=np.zeros(d))


def test_compute_snr_identities():
    xi = np.array([[3.0, 4.0]])
    assert compute_snr(xi, xi) == math.inf
    # error norm equal to signal norm is exactly 0 dB
    assert compute_snr(xi, xi - np.array([[0.0, 5.0]])) == 0.0
    gain = compute_snr(xi, xi - np.array([[0.0, 2.5]]))
    assert abs(gain - 20.0 * math.log10(2.0)) < 1e-12


def test_compute_snr_rejections():
    with pytest.raises(ValueError):
        compute_snr(np.zeros((2, 2)), np.ones((2, 2)))
    with pytest.raises(ValueError):
        compute_snr(np.ones((2, 2)), np.ones((2, 3)))


def test_exact_branch_matches_quantized_reference_bitwise():
    """The attention orchestration, mirrored operand by operand."""
    x = layernorm(INPUTS[0], WEIGHTS[0].ln1_gain, WEIGHTS[0].ln1_bias)
    w = WEIGHTS[0]
    out, probe = attention_block(x, w, MODEL, IDEAL_ADC)
    q = quantized_matmul_reference(x, w.w_q, IDEAL_ADC)
    k = quantized_matmul_reference(x, w.w_k, IDEAL_ADC)
    v = quantized_matmul_reference(x, w.w_v, IDEAL_ADC)
    scale = 1.0 / math.sqrt(MODEL.embed_dim)
    hd = MODEL.head_dim
    heads = []
    for h in range(MODEL.n_heads):
        sl = slice(h * hd, (h + 1) * hd)
        scores = quantized_matmul_reference(q[:, sl], k[:, sl].T, IDEAL_ADC)
        attn = softmax_rows(scores * scale)
        heads.append(quantized_matmul_reference(attn, v[:, sl], IDEAL_ADC))
    expected = np.concatenate(heads, axis=1)
    assert np.array_equal(out, expected)
    assert np.array_equal(probe.ideal, expected)


def test_exact_branch_near_pure_math():
    x = layernorm(INPUTS[0], WEIGHTS[0].ln1_gain, WEIGHTS[0].ln1_bias)
    out, _ = attention_block(x, WEIGHTS[0], MODEL, IDEAL_ADC)
    ref = reference_attention(x, WEIGHTS[0], MODEL)
    rel = np.linalg.norm(out - ref) / np.linalg.norm(ref)
    assert rel < 0.03  # 8-bit data quantization floor


def test_zero_noise_deployment_is_exact():
    outs, report, _ = run_inference(INPUTS, WEIGHTS, MODEL, CFG)
    assert all(snr == math.inf for row in report.per_input_snr for snr in row)
    assert report.mean_snr == math.inf
    assert len(outs) == 2


def test_forward_state_invariant_to_noise_and_clip():
    """Enabling any noise or clip leaves the exact-path outputs bitwise."""
    base, _, _ = run_inference(INPUTS, WEIGHTS, MODEL, CFG)
    noisy, _, _ = run_inference(INPUTS, WEIGHTS, MODEL, CFG,
                                clip=ClipParams(1.0, 0.25), noise=_noise())
    other, _, _ = run_inference(INPUTS, WEIGHTS, MODEL, CFG,
                                noise=_noise(seed=99))
    for a, b, c in zip(base, noisy, other):
        assert np.array_equal(a, b)
        assert np.array_equal(a, c)


def test_noisy_run_reproducible_and_finite():
    _, r1, _ = run_inference(INPUTS, WEIGHTS, MODEL, CFG, noise=_noise())
    _, r2, _ = run_inference(INPUTS, WEIGHTS, MODEL, CFG, noise=_noise())
    assert r1.per_input_snr == r2.per_input_snr
    assert r1.per_block_snr == r2.per_block_snr
    assert len(r1.per_block_snr) == MODEL.n_encoders
    assert len(r1.per_input_snr) == len(INPUTS)
    for snr in r1.per_block_snr:
        assert 0.0 < snr < 60.0
    assert np.isclose(r1.mean_snr, np.mean(r1.per_block_snr))


def test_single_mechanism_runs_finite():
    read_only = _noise(apply_write=False)
    write_only = _noise(apply_read=False)
    _, rr, _ = run_inference(INPUTS[:1], WEIGHTS, MODEL, CFG, noise=read_only)
    _, rw, _ = run_inference(INPUTS[:1], WEIGHTS, MODEL, CFG, noise=write_only)
    assert all(math.isfinite(s) for s in rr.per_block_snr)
    assert all(math.isfinite(s) for s in rw.per_block_snr)
    assert rr.per_block_snr != rw.per_block_snr


def test_static_noise_defaults_to_noise():
    x = layernorm(INPUTS[0], WEIGHTS[0].ln1_gain, WEIGHTS[0].ln1_bias)
    spec = _noise()
    _, pa = attention_block(x, WEIGHTS[0], MODEL, CFG, noise=spec)
    _, pb = attention_block(x, WEIGHTS[0], MODEL, CFG, noise=spec,
                            static_noise=spec)
    assert np.array_equal(pa.nonideal, pb.nonideal)


def test_static_noise_isolated_from_dynamic_path():
    # no dynamic noise: the deployed branch varies only through static reads
    x = layernorm(INPUTS[0], WEIGHTS[0].ln1_gain, WEIGHTS[0].ln1_bias)
    _, pa = attention_block(x, WEIGHTS[0], MODEL, CFG,
                            static_noise=_noise().child("deploy"))
    _, pb = attention_block(x, WEIGHTS[0], MODEL, CFG,
                            static_noise=_noise().child("deploy"))
    _, pc = attention_block(x, WEIGHTS[0], MODEL, CFG,
                            static_noise=_noise(seed=21).child("deploy"))
    assert np.array_equal(pa.nonideal, pb.nonideal)
    assert not np.array_equal(pa.nonideal, pc.nonideal)
    assert np.array_equal(pa.ideal, pc.ideal)


def test_freeze_read_reproducible_and_distinct():
    _, r1, _ = run_inference(INPUTS, WEIGHTS, MODEL, CFG, noise=_noise(),
                             freeze_read=True)
    _, r2, _ = run_inference(INPUTS, WEIGHTS, MODEL, CFG, noise=_noise(),
                             freeze_read=True)
    _, r3, _ = run_inference(INPUTS, WEIGHTS, MODEL, CFG, noise=_noise())
    assert r1.per_input_snr == r2.per_input_snr
    assert r1.per_input_snr != r3.per_input_snr


def test_zero_weight_encoder_is_identity():
    x = INPUTS[0]
    y, probe = encoder_forward(x, _zero_weights(MODEL), MODEL, CFG)
    assert np.array_equal(y, x)
    assert not probe.ideal.any()


def test_token_permutation_equivariance():
    # exact through the integer-path engine; the softmax row sum reorders
    # its additions under permutation, so allow last-ulp slack
    perm = np.random.default_rng(0).permutation(MODEL.tokens)
    x = INPUTS[0]
    y, _ = encoder_forward(x, WEIGHTS[0], MODEL, CFG)
    yp, _ = encoder_forward(x[perm], WEIGHTS[0], MODEL, CFG)
    np.testing.assert_allclose(yp, y[perm], rtol=0.0, atol=1e-12)


def test_tiny_geometry_runs():
    model = ModelConfig(n_encoders=1, tokens=1, embed_dim=16, n_heads=1)
    weights = generate_synthetic_model(model, seed=0)
    xs = generate_inputs(model, seed=1, batch=1)
    outs, report, _ = run_inference(xs, weights, model, CFG, noise=_noise())
    assert outs[0].shape == (1, 16)
    assert len(report.per_block_snr) == 1


def test_run_inference_validation():
    with pytest.raises(ValueError):
        run_inference([], WEIGHTS, MODEL, CFG)
    with pytest.raises(ValueError):
        run_inference([np.zeros((3, 64))], WEIGHTS, MODEL, CFG)
    with pytest.raises(ValueError):
        run_inference(INPUTS, WEIGHTS[:2], MODEL, CFG)


def test_run_stats_event_accounting():
    _, _, stats = run_inference(INPUTS[:1], WEIGHTS, MODEL, CFG,
                                noise=_noise())
    assert set(stats.per_class) == set(OPERAND_CLASSES)
    qkv, kv = stats.per_class["qkv"], stats.per_class["kv"]
    proj, mlp = stats.per_class["proj"], stats.per_class["mlp"]
    # stationary classes never rewrite
    assert qkv.n_write_events == proj.n_write_events == mlp.n_write_events == 0
    assert qkv.n_write_draws == 0
    # 4 heads x (K^T, V) x 8 crossbars x 4 encoders, rewritten per inference
    assert kv.n_write_events == 256
    assert kv.n_write_draws == 256 * 16 * 16
    # 3 stationary QKV multiplies per encoder: 8 crossbars x 8 bits x 16 rows
    assert qkv.n_read_cycles == 4 * 3 * 8 * 8 * 16
    assert proj.n_read_cycles == 4 * 1 * 8 * 8 * 16
    assert mlp.n_read_cycles == 4 * 2 * 32 * 8 * 16
    assert kv.n_read_cycles == 4 * 8 * 8 * 8 * 16
    total = stats.total()
    assert total.n_read_cycles == sum(
        stats.per_class[c].n_read_cycles for c in OPERAND_CLASSES)
    assert stats.kv_write_dw_rms > 0.0


def test_run_stats_without_write_noise():
    _, _, stats = run_inference(INPUTS[:1], WEIGHTS, MODEL, CFG,
                                noise=_noise(apply_write=False))
    assert stats.per_class["kv"].n_write_events == 256
    assert stats.per_class["kv"].n_write_draws == 0
    assert stats.kv_write_dw_rms == 0.0


def test_run_stats_scale_with_batch():
    _, _, s1 = run_inference(INPUTS[:1], WEIGHTS, MODEL, CFG, noise=_noise())
    _, _, s2 = run_inference(INPUTS, WEIGHTS, MODEL, CFG, noise=_noise())
    assert s2.per_class["kv"].n_write_events == \
        2 * s1.per_class["kv"].n_write_events
    assert s2.total().n_read_cycles == 2 * s1.total().n_read_cycles


def test_stats_record_only_deployed_branch():
    # the exact branch runs the same operands but must not inflate events
    stats = RunStats()
    x = layernorm(INPUTS[0], WEIGHTS[0].ln1_gain, WEIGHTS[0].ln1_bias)
    attention_block(x, WEIGHTS[0], MODEL, CFG, noise=_noise(), stats=stats)
    assert stats.per_class["qkv"].n_read_cycles == 3 * 8 * 8 * 16
    assert stats.per_class["kv"].n_write_events == 64
