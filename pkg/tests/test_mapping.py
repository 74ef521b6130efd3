"""Conductance mapping, differential encoding, clipping, bit-slicing."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xbarsim.mapping import (ClipParams, ConductancePlane, CrossbarConfig,
                             clip_conductances, conductance_codes,
                             conductance_to_weight, decode_plane,
                             encode_signed, required_slices,
                             slice_conductances, slice_plane, slice_weights,
                             weight_to_conductance)

CFG = CrossbarConfig()


def test_config_defaults_match_device_card():
    assert CFG.g_min == 0.1 and CFG.g_max == 10.0
    assert CFG.on_off_ratio == 100.0
    assert CFG.tile_rows == CFG.tile_cols == 64
    assert CFG.weight_bits == CFG.input_bits == 8
    assert CFG.bits_per_cell == 2 and CFG.adc_bits == 6
    assert CFG.sigma_read == 0.05 and CFG.sigma_write == 0.1
    assert CFG.gamma == 4.0
    assert (CFG.e_read, CFG.e_write, CFG.a_xbar) == (25.0, 118.0, 0.03)
    assert CFG.n_slices_full == 4 and CFG.cell_levels == 4
    assert CFG.max_weight_code == 255


def test_config_validation():
    with pytest.raises(ValueError):
        CrossbarConfig(g_min=0.0)
    with pytest.raises(ValueError):
        CrossbarConfig(g_min=2.0, g_max=1.0)
    with pytest.raises(ValueError):
        CrossbarConfig(weight_bits=7, bits_per_cell=2)
    with pytest.raises(ValueError):
        CrossbarConfig(adc_bits=0)
    with pytest.raises(ValueError):
        CrossbarConfig(sigma_read=-0.1)


def test_with_on_off_ratio_moves_g_max_only():
    cfg = CFG.with_on_off_ratio(25.0)
    assert cfg.g_min == 0.1 and cfg.g_max == 2.5
    assert cfg.on_off_ratio == 25.0
    with pytest.raises(ValueError):
        CFG.with_on_off_ratio(1.0)


def test_clip_params_invariants():
    ClipParams(1.0, 1.0)
    ClipParams(2.0, 0.25)
    with pytest.raises(ValueError):
        ClipParams(0.5, 1.0)
    with pytest.raises(ValueError):
        ClipParams(1.0, 0.0)
    with pytest.raises(ValueError):
        ClipParams(1.0, 1.5)


def test_weight_conductance_round_trip_endpoints():
    # zero weight sits exactly at g_min, full scale exactly at g_max
    g = weight_to_conductance(np.array([0.0, 0.5, 1.0]), 1.0, CFG)
    np.testing.assert_allclose(g, [0.1, 5.05, 10.0], rtol=0, atol=1e-12)
    w = conductance_to_weight(g, 1.0, CFG)
    np.testing.assert_allclose(w, [0.0, 0.5, 1.0], rtol=0, atol=1e-15)
    with pytest.raises(ValueError):
        weight_to_conductance(np.array([-0.1]), 1.0, CFG)
    with pytest.raises(ValueError):
        weight_to_conductance(np.array([0.1]), 0.0, CFG)


def test_conductance_to_weight_accepts_off_range():
    # noisy reads can leave [g_min, g_max]; the decode never re-clips
    w = conductance_to_weight(np.array([0.05, 12.0]), 1.0, CFG)
    assert w[0] < 0.0 and w[1] > 1.0


def test_encode_signed_differential_structure():
    w = np.array([[0.5, -1.0], [0.0, 0.25]])
    plane = encode_signed(w, CFG)
    assert plane.w_max == 1.0
    # at most one plane above g_min per coordinate
    above = (plane.pos > CFG.g_min) & (plane.neg > CFG.g_min)
    assert not above.any()
    decoded = decode_plane(plane, CFG)
    # codes are exact at representable magnitudes k/255
    step = 1.0 / 255.0
    expected = np.round(np.abs(w) / step) * step * np.sign(w)
    np.testing.assert_allclose(decoded, expected, rtol=0, atol=1e-12)


def test_encode_signed_zero_matrix_uses_unit_scale():
    plane = encode_signed(np.zeros((2, 2)), CFG)
    assert plane.w_max == 1.0
    assert np.array_equal(plane.pos, np.full((2, 2), CFG.g_min))
    assert np.array_equal(decode_plane(plane, CFG), np.zeros((2, 2)))


def test_encode_decode_quantization_error_bound():
    rng = np.random.default_rng(4)
    w = rng.normal(scale=0.02, size=(32, 32))
    plane = encode_signed(w, CFG)
    err = np.abs(decode_plane(plane, CFG) - w)
    assert err.max() <= plane.w_max / 255.0 / 2.0 + 1e-15


def test_clip_stage_one_subtracts_alpha_g_min():
    g = np.array([[0.1, 0.2, 5.0, 10.0]])
    plane = ConductancePlane(pos=g.copy(), neg=np.full_like(g, 0.1),
                             w_max=1.0)
    out = clip_conductances(plane, ClipParams(alpha=1.0, beta=1.0), CFG)
    np.testing.assert_allclose(out.pos, [[0.1, 0.1, 4.9, 9.9]], atol=1e-12)
    # the device floor is a hard floor for any alpha
    out2 = clip_conductances(plane, ClipParams(alpha=2.0, beta=1.0), CFG)
    np.testing.assert_allclose(out2.pos, [[0.1, 0.1, 4.8, 9.8]], atol=1e-12)


def test_clip_stage_two_caps_at_beta_g_max():
    g = np.array([[0.1, 2.0, 6.0, 10.0]])
    plane = ConductancePlane(pos=g.copy(), neg=np.full_like(g, 0.1),
                             w_max=1.0)
    out = clip_conductances(plane, ClipParams(alpha=1.0, beta=0.25), CFG)
    assert out.pos.max() <= 0.25 * CFG.g_max
    np.testing.assert_allclose(out.pos, [[0.1, 1.9, 2.5, 2.5]], atol=1e-12)


def test_clip_beta_one_never_caps():
    g = np.array([[10.0]])
    plane = ConductancePlane(pos=g, neg=g.copy(), w_max=1.0)
    out = clip_conductances(plane, ClipParams(alpha=1.0, beta=1.0), CFG)
    assert float(out.pos[0, 0]) == 9.9


def test_slice_weights_big_endian():
    assert slice_weights(4, 2) == (64, 16, 4, 1)
    assert slice_weights(3, 2) == (16, 4, 1)


def test_slice_digits_oracle():
    # code 108 = 1*64 + 2*16 + 3*4 + 0
    g = np.array([[CFG.g_min + 108 * CFG.weight_grid_step]])
    stack = slice_conductances(g, CFG, 4)
    digits = [int(lv) for lv in (s[0, 0] for s in stack.levels)]
    assert digits == [1, 2, 3, 0]
    assert int(stack.recombine_codes()[0, 0]) == 108


def test_slice_recombine_identity_all_codes():
    codes = np.arange(256).reshape(16, 16)
    g = CFG.g_min + codes * CFG.weight_grid_step
    stack = slice_conductances(g, CFG, 4)
    assert np.array_equal(stack.recombine_codes(), codes)
    for lv in stack.levels:
        assert lv.min() >= 0 and lv.max() <= CFG.cell_levels - 1
    # materialized slices sit exactly on the cell grid
    for s in stack.slices:
        back = (s - CFG.g_min) / CFG.cell_step
        assert np.allclose(back, np.round(back), atol=1e-9)


def test_slice_overflow_raises():
    g = np.array([[CFG.g_max]])  # code 255 needs 4 slices
    with pytest.raises(ValueError):
        slice_conductances(g, CFG, 3)


def test_slice_plane_covers_both_planes():
    plane = encode_signed(np.array([[0.7, -0.3]]), CFG)
    pos, neg = slice_plane(plane, CFG, 4)
    diff = pos.recombine_codes() - neg.recombine_codes()
    decoded = diff * plane.w_max / CFG.max_weight_code
    np.testing.assert_allclose(decoded, decode_plane(plane, CFG), atol=1e-12)


def test_conductance_codes_round_onto_preclip_grid():
    # 2.5 uS (the beta=0.25 cap) lands on code 62 of the 8-bit grid
    assert int(conductance_codes(np.array([[2.5]]), CFG)[0, 0]) == 62
    assert int(conductance_codes(np.array([[CFG.g_min]]), CFG)[0, 0]) == 0
    assert int(conductance_codes(np.array([[CFG.g_max]]), CFG)[0, 0]) == 255


@pytest.mark.parametrize("clip,expected", [
    (None, 4),
    (ClipParams(1.0, 1.0), 4),
    (ClipParams(2.0, 1.0), 4),
    (ClipParams(1.0, 0.5), 4),   # cap 5 uS -> code 126 -> 7 bits
    (ClipParams(1.0, 0.25), 3),  # cap 2.5 uS -> code 62 -> 6 bits
    (ClipParams(2.0, 0.25), 3),
])
def test_required_slices(clip, expected):
    assert required_slices(clip, CFG) == expected


def test_required_slices_tiny_beta_floor():
    assert required_slices(ClipParams(1.0, 0.011), CFG) >= 1


@given(st.integers(min_value=0, max_value=255))
@settings(max_examples=100, deadline=None)
def test_slice_recombine_round_trip(code: int):
    g = np.array([[CFG.g_min + code * CFG.weight_grid_step]])
    stack = slice_conductances(g, CFG, 4)
    assert int(stack.recombine_codes()[0, 0]) == code
