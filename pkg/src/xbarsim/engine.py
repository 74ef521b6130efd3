"""Tiled, bit-serial, bit-sliced matrix-vector multiply on modeled crossbars.

Signal chain per tile: the input matrix is quantized to unsigned codes over
its observed range, streamed one bit plane per read cycle; each 2-bit slice
of each differential plane accumulates a column current; the ADC quantizes
every column current against a fixed full scale of ``tile_rows * g_max``;
digital logic recombines slices (powers of 2**bits_per_cell) and bit planes
(powers of 2), cancels the differential pair, and finally applies the affine
decode, including the offset-correction term for signed inputs computed
digitally from stored column code sums.

Exactness discipline: cell levels are the canonical stored data and the
physical conductance is their affine image ``g_min + level * cell_step``.
Tiles with no noise drawn are therefore evaluated in integer code space
(every float op on the small integers involved is exact), which makes the
zero-noise engine equal the quantized-matmul reference bitwise without any
special casing; tiles carrying write or read noise take the literal
conductance-domain path through the same ADC model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import Array, QuantSpec, as_matrix, matmul, quantize, quantize_codes
from .mapping import (ClipParams, CrossbarConfig, SliceStack, clip_conductances,
                      encode_signed, conductance_codes, required_slices,
                      slice_conductances)
from .noise import NoiseSpec, apply_read_noise, apply_write_noise


@dataclass
class MvmStats:
    """Event bookkeeping for one or more multiply calls.

    ``n_tiles`` counts engaged physical crossbars (planes x slices x tile
    positions); the identity ``n_read_cycles = n_tiles * input_bits * n_rows``
    holds exactly for a single call. Draw counters track consumed noise
    realizations, not energy events.
    """

    n_tiles: int = 0
    n_write_events: int = 0
    n_read_cycles: int = 0
    n_read_draws: int = 0
    n_write_draws: int = 0

    def add(self, other: "MvmStats") -> None:
        self.n_tiles += other.n_tiles
        self.n_write_events += other.n_write_events
        self.n_read_cycles += other.n_read_cycles
        self.n_read_draws += other.n_read_draws
        self.n_write_draws += other.n_write_draws


@dataclass
class TileStack:
    """One logical tile position: a differential pair of slice stacks plus
    the physically programmed (possibly write-noisy) conductances."""

    row_offset: int
    col_offset: int
    rows: int
    cols: int
    pos: SliceStack
    neg: SliceStack
    w_max: float
    is_dynamic: bool
    tag: str
    programmed_pos: list[Array] | None = None
    programmed_neg: list[Array] | None = None
    write_draws: int = 0
    write_dw_sq_sum: float = 0.0
    write_dw_count: int = 0

    @property
    def n_slices(self) -> int:
        return self.pos.n_slices

    @property
    def n_crossbars(self) -> int:
        return 2 * self.n_slices

    @property
    def has_write_noise(self) -> bool:
        return self.programmed_pos is not None


def _noisy_write(stacks: SliceStack, spec: NoiseSpec, cfg: CrossbarConfig,
                 plane_tag: str) -> tuple[list[Array], Array, int]:
    """Program one plane's slices with write noise; returns the conductance
    arrays, the recombined code-domain perturbation, and the draw count."""
    out: list[Array] = []
    delta_codes = None
    draws = 0
    for k, clean in enumerate(stacks.slices):
        noisy = apply_write_noise(clean, spec.child(f"{plane_tag}{k}"), cfg)
        out.append(noisy)
        d = (noisy - clean) * (stacks.slice_weights[k] / cfg.cell_step)
        delta_codes = d if delta_codes is None else delta_codes + d
        draws += clean.size
    return out, delta_codes, draws


def map_operand(w, cfg: CrossbarConfig, clip: ClipParams | None = None,
                dynamic: bool = False,
                noise: NoiseSpec | None = None) -> list[TileStack]:
    """Encode, optionally clip, slice and tile a signed operand matrix.

    Clipping only ever touches dynamic operands; stationary weights keep the
    full slice count. Write noise is drawn once per dynamic tile at mapping
    time (one programming event per physical crossbar), using streams derived
    from the tile position so schedules cannot reorder realizations.
    """
    w = as_matrix(w, "operand")
    plane = encode_signed(w, cfg)
    if dynamic and clip is not None:
        plane = clip_conductances(plane, clip, cfg)
        n_slices = required_slices(clip, cfg)
    else:
        n_slices = cfg.n_slices_full

    draw_write = (dynamic and noise is not None and noise.apply_write
                  and noise.sigma_write > 0.0 and noise.gamma > 0.0)

    tiles: list[TileStack] = []
    n_rows, n_cols = w.shape
    for ti, r0 in enumerate(range(0, n_rows, cfg.tile_rows)):
        r1 = min(r0 + cfg.tile_rows, n_rows)
        for tj, c0 in enumerate(range(0, n_cols, cfg.tile_cols)):
            c1 = min(c0 + cfg.tile_cols, n_cols)
            pos = slice_conductances(plane.pos[r0:r1, c0:c1], cfg, n_slices)
            neg = slice_conductances(plane.neg[r0:r1, c0:c1], cfg, n_slices)
            tile = TileStack(row_offset=r0, col_offset=c0, rows=r1 - r0,
                             cols=c1 - c0, pos=pos, neg=neg,
                             w_max=plane.w_max, is_dynamic=dynamic,
                             tag=f"t{ti}_{tj}")
            if draw_write:
                wspec = noise.child(f"{tile.tag}/write")
                gp, dcode_p, dp = _noisy_write(pos, wspec, cfg, "pos")
                gn, dcode_n, dn = _noisy_write(neg, wspec, cfg, "neg")
                tile.programmed_pos = gp
                tile.programmed_neg = gn
                tile.write_draws = dp + dn
                # Differential decoded perturbation, pooled in w_max-relative
                # units so operands of different scale can mix.
                dw_rel = (dcode_p - dcode_n) / cfg.max_weight_code
                tile.write_dw_sq_sum = float(np.sum(np.square(dw_rel)))
                tile.write_dw_count = tile.rows * tile.cols
            tiles.append(tile)
    return tiles


def operand_shape(tiles: list[TileStack]) -> tuple[int, int]:
    if not tiles:
        raise ValueError("no tiles mapped")
    return (max(t.row_offset + t.rows for t in tiles),
            max(t.col_offset + t.cols for t in tiles))


def input_quant(x: Array, cfg: CrossbarConfig) -> tuple[np.ndarray, float, float]:
    """Unsigned input codes over the observed per-tensor range.

    Returns (codes, range_min, step); a constant input degenerates to all-zero
    codes with zero step, leaving only the digital offset term.
    """
    spec = QuantSpec(cfg.input_bits, float(x.min()), float(x.max()))
    codes = quantize_codes(x, spec).astype(np.int64)
    return codes, spec.min_val, spec.step


def decode_output(acc: Array, colsum_codes: Array, range_min: float,
                  in_step: float, w_step: float) -> Array:
    """Shared affine decode from code-domain accumulation to weight units.

    ``acc`` is the bit/slice-recombined analog result in code units;
    ``colsum_codes`` carries the digitally known column code sums that
    correct for the unsigned input offset.
    """
    return (acc * in_step + range_min * colsum_codes) * w_step


def _adc_spec(cfg: CrossbarConfig) -> QuantSpec | None:
    if cfg.adc_bits is None:
        return None
    return QuantSpec(cfg.adc_bits, 0.0, cfg.tile_rows * cfg.g_max)


def _combine(diff: Array, weights: tuple[int, ...], n_bits: int) -> Array:
    """Recombine (bits, rows, slices, cols) differentials into code units."""
    w = np.asarray(weights, dtype=np.float64)
    per_bit = np.einsum("bnkc,k->bnc", diff, w)
    scale = np.power(2.0, np.arange(n_bits, dtype=np.float64))
    return np.einsum("bnc,b->nc", per_bit, scale)


def mvm(x, tiles: list[TileStack], cfg: CrossbarConfig,
        noise: NoiseSpec | None = None) -> tuple[Array, MvmStats]:
    """Multiply ``x`` by a mapped operand through the full analog model."""
    x = as_matrix(x, "input")
    op_rows, op_cols = operand_shape(tiles)
    if x.shape[1] != op_rows:
        raise ValueError(
            f"input has {x.shape[1]} columns, operand has {op_rows} rows")
    w_max = tiles[0].w_max
    if any(t.w_max != w_max for t in tiles):
        raise ValueError("tiles come from different operand mappings")

    codes, range_min, in_step = input_quant(x, cfg)
    n_rows = x.shape[0]
    n_bits = cfg.input_bits
    adc = _adc_spec(cfg)
    draw_read = (noise is not None and noise.apply_read
                 and noise.sigma_read > 0.0)

    acc = np.zeros((n_rows, op_cols))
    colsum = np.zeros(op_cols)
    stats = MvmStats()

    bit_index = np.arange(n_bits, dtype=np.int64).reshape(-1, 1, 1)
    # Canonical accumulation order: float sums stay bitwise identical even if
    # the caller reordered the tile list.
    for tile in sorted(tiles, key=lambda t: (t.row_offset, t.col_offset)):
        blk = codes[:, tile.row_offset:tile.row_offset + tile.rows]
        bits = ((blk[np.newaxis, :, :] >> bit_index) & 1).astype(np.float64)
        n_sl = tile.n_slices
        physical = tile.n_crossbars

        if tile.has_write_noise or draw_read:
            g_pos = tile.programmed_pos or tile.pos.slices
            g_neg = tile.programmed_neg or tile.neg.slices
            if draw_read:
                rspec = noise.child(f"{tile.tag}/read")
                g_pos = [apply_read_noise(g, rspec.child(f"pos{k}"), cfg)
                         for k, g in enumerate(g_pos)]
                g_neg = [apply_read_noise(g, rspec.child(f"neg{k}"), cfg)
                         for k, g in enumerate(g_neg)]
                stats.n_read_draws += physical * tile.rows * tile.cols
            stacked = np.concatenate(
                [g.reshape(tile.rows, tile.cols) for g in g_pos + g_neg],
                axis=1)
            currents = (bits.reshape(-1, tile.rows) @ stacked).reshape(
                n_bits, n_rows, 2 * n_sl, tile.cols)
            if adc is not None:
                currents = quantize(currents, adc)
            diff = currents[:, :, :n_sl, :] - currents[:, :, n_sl:, :]
            contrib = _combine(diff, tile.pos.slice_weights, n_bits)
            contrib /= cfg.cell_step
        else:
            levels = np.concatenate(
                [lv.astype(np.float64) for lv in tile.pos.levels
                 + tile.neg.levels], axis=1)
            prod = (bits.reshape(-1, tile.rows) @ levels).reshape(
                n_bits, n_rows, 2 * n_sl, tile.cols)
            if adc is None:
                diff = prod[:, :, :n_sl, :] - prod[:, :, n_sl:, :]
                contrib = _combine(diff, tile.pos.slice_weights, n_bits)
            else:
                ones_sum = bits.sum(axis=2)
                currents = (cfg.g_min * ones_sum[:, :, np.newaxis, np.newaxis]
                            + cfg.cell_step * prod)
                currents = quantize(currents, adc)
                diff = currents[:, :, :n_sl, :] - currents[:, :, n_sl:, :]
                contrib = _combine(diff, tile.pos.slice_weights, n_bits)
                contrib /= cfg.cell_step

        sl = slice(tile.col_offset, tile.col_offset + tile.cols)
        acc[:, sl] += contrib
        colsum[sl] += (tile.pos.recombine_codes()
                       - tile.neg.recombine_codes()).sum(axis=0)
        stats.n_tiles += physical
        stats.n_read_cycles += physical * n_bits * n_rows

    y = decode_output(acc, colsum, range_min, in_step,
                      w_max / cfg.max_weight_code)
    return y, stats


def mvm_ideal(x, w) -> Array:
    """Noise-free, quantization-free reference: the exact matrix product."""
    return matmul(x, w)


def quantized_matmul_reference(x, w, cfg: CrossbarConfig,
                               clip: ClipParams | None = None,
                               dynamic: bool = False) -> Array:
    """Exact value of the zero-noise engine: integer-code matmul plus the
    same affine decode the engine applies. Bypasses tiling, bit-serial
    streaming, slicing and the ADC entirely."""
    x = as_matrix(x, "input")
    w = as_matrix(w, "operand")
    plane = encode_signed(w, cfg)
    if dynamic and clip is not None:
        plane = clip_conductances(plane, clip, cfg)
    wcodes = (conductance_codes(plane.pos, cfg)
              - conductance_codes(plane.neg, cfg)).astype(np.float64)
    codes, range_min, in_step = input_quant(x, cfg)
    acc = codes.astype(np.float64) @ wcodes
    return decode_output(acc, wcodes.sum(axis=0), range_min, in_step,
                         plane.w_max / cfg.max_weight_code)


def mapping_write_events(tiles: list[TileStack]) -> int:
    """Physical write events represented by one dynamic mapping."""
    return sum(t.n_crossbars for t in tiles if t.is_dynamic)
