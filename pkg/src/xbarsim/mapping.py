"""Weight-to-conductance mapping, differential signed encoding, conductance
clipping, and bit-slicing onto multi-level cells.

Conventions baked in here and relied on everywhere else:

* A non-negative weight w in [0, w_max] maps linearly onto [g_min, g_max]:
  ``G = w * (g_max - g_min) / w_max + g_min``; the inverse decode is
  ``w = (G - g_min) / (g_max - g_min) * w_max``. Zero weight sits at g_min,
  never at zero conductance.
* Signed matrices use a differential pair of planes: pos stores max(w, 0),
  neg stores max(-w, 0), each snapped to the ``weight_bits`` grid, so at most
  one plane is above g_min at any coordinate.
* Clipping rewrites conductances in place of the values (stage one subtracts
  ``alpha * g_min`` and floors at g_min; stage two caps at ``beta * g_max``)
  and is applied before slicing; slicing always rounds onto the *pre-clip*
  grid, which is what lets an aggressive cap drop whole slices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .linalg import Array, QuantSpec, as_matrix, quantize_codes, round_half_away


@dataclass(frozen=True)
class CrossbarConfig:
    """Device, array and converter parameters (defaults: 64x64 RRAM tiles,
    0.1-10 uS conductance window, 8-bit data, 2-bit cells, 6-bit ADC)."""

    g_min: float = 0.1          # uS
    g_max: float = 10.0         # uS
    tile_rows: int = 64
    tile_cols: int = 64
    bits_per_cell: int = 2
    weight_bits: int = 8
    input_bits: int = 8
    adc_bits: int | None = 6    # None = ideal (lossless) converter
    sigma_read: float = 0.05
    sigma_write: float = 0.1
    gamma: float = 4.0
    e_read: float = 25.0        # pJ per crossbar per read cycle
    e_write: float = 118.0      # pJ per crossbar-slice write event
    a_xbar: float = 0.03        # mm^2 per crossbar

    def __post_init__(self) -> None:
        if self.g_min <= 0.0 or self.g_max <= self.g_min:
            raise ValueError(
                f"need 0 < g_min < g_max, got [{self.g_min}, {self.g_max}]")
        if self.tile_rows < 1 or self.tile_cols < 1:
            raise ValueError("tile dimensions must be positive")
        if self.bits_per_cell < 1 or self.weight_bits < 1 or self.input_bits < 1:
            raise ValueError("bit widths must be positive")
        if self.weight_bits % self.bits_per_cell != 0:
            raise ValueError(
                f"weight_bits {self.weight_bits} must be a multiple of "
                f"bits_per_cell {self.bits_per_cell}")
        if self.adc_bits is not None and self.adc_bits < 1:
            raise ValueError("adc_bits must be positive or None for ideal")
        if self.sigma_read < 0.0 or self.sigma_write < 0.0 or self.gamma < 0.0:
            raise ValueError("noise parameters must be non-negative")
        if self.e_read < 0.0 or self.e_write < 0.0 or self.a_xbar < 0.0:
            raise ValueError("cost parameters must be non-negative")

    @property
    def on_off_ratio(self) -> float:
        return self.g_max / self.g_min

    @property
    def g_span(self) -> float:
        return self.g_max - self.g_min

    @property
    def n_slices_full(self) -> int:
        return self.weight_bits // self.bits_per_cell

    @property
    def cell_levels(self) -> int:
        return 1 << self.bits_per_cell

    @property
    def max_weight_code(self) -> int:
        return (1 << self.weight_bits) - 1

    @property
    def weight_grid_step(self) -> float:
        """Conductance distance between adjacent weight codes."""
        return self.g_span / self.max_weight_code

    @property
    def cell_step(self) -> float:
        """Conductance distance between adjacent cell levels within a slice."""
        return self.g_span / (self.cell_levels - 1)

    def with_on_off_ratio(self, ratio: float) -> "CrossbarConfig":
        """Same device floor, g_max scaled to hit the requested ON/OFF ratio."""
        if ratio <= 1.0:
            raise ValueError(f"ON/OFF ratio must exceed 1, got {ratio}")
        return replace(self, g_max=ratio * self.g_min)


@dataclass(frozen=True)
class ClipParams:
    """Two-stage conductance clip: subtract ``alpha * g_min`` (floored at
    g_min), then cap at ``beta * g_max``. ``beta = 1`` skips the cap."""

    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self) -> None:
        if self.alpha < 1.0:
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")
        if not (0.0 < self.beta <= 1.0):
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")


@dataclass
class ConductancePlane:
    """Differential pos/neg conductance matrices plus the frozen decode scale."""

    pos: Array
    neg: Array
    w_max: float

    def __post_init__(self) -> None:
        if self.pos.shape != self.neg.shape:
            raise ValueError("pos/neg plane shapes differ")
        if self.w_max <= 0.0:
            raise ValueError(f"w_max must be positive, got {self.w_max}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.pos.shape


def weight_to_conductance(w, w_max: float, cfg: CrossbarConfig) -> Array:
    """Linear map of non-negative weights onto [g_min, g_max]."""
    w = np.asarray(w, dtype=np.float64)
    if w_max <= 0.0:
        raise ValueError(f"w_max must be positive, got {w_max}")
    if np.any(w < 0.0) or np.any(w > w_max):
        raise ValueError("weights must lie in [0, w_max]")
    return w * (cfg.g_span / w_max) + cfg.g_min


def conductance_to_weight(g, w_max: float, cfg: CrossbarConfig) -> Array:
    """Inverse of :func:`weight_to_conductance`; accepts off-range conductances
    (noisy reads decode through the same line, never re-clipped)."""
    g = np.asarray(g, dtype=np.float64)
    if w_max <= 0.0:
        raise ValueError(f"w_max must be positive, got {w_max}")
    return (g - cfg.g_min) * (w_max / cfg.g_span)


def weight_quant_spec(w_max: float, cfg: CrossbarConfig) -> QuantSpec:
    """Per-plane magnitude grid: ``weight_bits`` levels over [0, w_max]."""
    return QuantSpec(cfg.weight_bits, 0.0, w_max)


def encode_signed(w, cfg: CrossbarConfig) -> ConductancePlane:
    """Encode a signed matrix as a differential conductance-plane pair.

    The scale w_max = max|w| is frozen here (1.0 for an all-zero matrix);
    each plane's magnitude is snapped onto the ``weight_bits`` grid before
    the linear conductance map, so the stored conductances are exactly the
    programmable levels.
    """
    w = as_matrix(w, "weights")
    w_max = float(np.max(np.abs(w)))
    if w_max == 0.0:
        w_max = 1.0
    spec = weight_quant_spec(w_max, cfg)
    pos_codes = quantize_codes(np.maximum(w, 0.0), spec)
    neg_codes = quantize_codes(np.maximum(-w, 0.0), spec)
    pos = pos_codes * cfg.weight_grid_step + cfg.g_min
    neg = neg_codes * cfg.weight_grid_step + cfg.g_min
    return ConductancePlane(pos=pos, neg=neg, w_max=w_max)


def decode_plane(plane: ConductancePlane, cfg: CrossbarConfig) -> Array:
    """Differential decode back to signed weights."""
    return (conductance_to_weight(plane.pos, plane.w_max, cfg)
            - conductance_to_weight(plane.neg, plane.w_max, cfg))


def clip_conductances(plane: ConductancePlane, params: ClipParams,
                      cfg: CrossbarConfig) -> ConductancePlane:
    """Apply the two-stage clip to both planes; returns a new plane pair."""
    def _clip(g: Array) -> Array:
        out = np.maximum(g - params.alpha * cfg.g_min, cfg.g_min)
        if params.beta < 1.0:
            out = np.minimum(out, params.beta * cfg.g_max)
        return out

    return ConductancePlane(pos=_clip(plane.pos), neg=_clip(plane.neg),
                            w_max=plane.w_max)


def conductance_codes(g, cfg: CrossbarConfig) -> np.ndarray:
    """Round conductances onto the pre-clip ``weight_bits`` grid and return
    integer codes relative to g_min."""
    g = np.asarray(g, dtype=np.float64)
    codes = round_half_away((g - cfg.g_min) / cfg.weight_grid_step)
    codes = np.clip(codes, 0.0, float(cfg.max_weight_code))
    return codes.astype(np.int64)


@dataclass
class SliceStack:
    """One conductance matrix split across multi-level cells, MSB slice first.

    ``levels`` holds the per-slice integer cell levels (the canonical data);
    ``slices`` materializes them as on-grid conductances. ``slice_weights``
    are the positional powers of 2**bits_per_cell that recombine the levels
    into the original code.
    """

    levels: list[np.ndarray]
    slice_weights: tuple[int, ...]
    cfg: CrossbarConfig

    @property
    def n_slices(self) -> int:
        return len(self.levels)

    @property
    def slices(self) -> list[Array]:
        step = self.cfg.cell_step
        return [lv * step + self.cfg.g_min for lv in self.levels]

    def recombine_codes(self) -> np.ndarray:
        """Weighted level sum; exactly the pre-slicing integer codes."""
        total = np.zeros(self.levels[0].shape, dtype=np.int64)
        for lv, wt in zip(self.levels, self.slice_weights):
            total += lv * wt
        return total


def slice_weights(n_slices: int, bits_per_cell: int) -> tuple[int, ...]:
    """Positional weights, most significant slice first."""
    base = 1 << bits_per_cell
    return tuple(base ** (n_slices - 1 - k) for k in range(n_slices))


def slice_conductances(g, cfg: CrossbarConfig, n_slices: int) -> SliceStack:
    """Split one plane's conductances into ``n_slices`` multi-level cells.

    Conductances are first rounded onto the pre-clip ``weight_bits`` grid;
    the code is then written big-endian in base 2**bits_per_cell. Raises if
    any code needs more than ``n_slices * bits_per_cell`` bits.
    """
    if n_slices < 1:
        raise ValueError("need at least one slice")
    codes = conductance_codes(g, cfg)
    capacity = n_slices * cfg.bits_per_cell
    overflow = int(codes.max(initial=0)) >> capacity
    if overflow:
        raise ValueError(
            f"code {int(codes.max())} does not fit in {capacity} bits "
            f"({n_slices} slices of {cfg.bits_per_cell} bits)")
    mask = cfg.cell_levels - 1
    levels = []
    for k in range(n_slices):
        shift = cfg.bits_per_cell * (n_slices - 1 - k)
        levels.append(((codes >> shift) & mask).astype(np.int64))
    return SliceStack(levels=levels,
                      slice_weights=slice_weights(n_slices, cfg.bits_per_cell),
                      cfg=cfg)


def slice_plane(plane: ConductancePlane, cfg: CrossbarConfig,
                n_slices: int) -> tuple[SliceStack, SliceStack]:
    """Slice both planes of a differential pair."""
    return (slice_conductances(plane.pos, cfg, n_slices),
            slice_conductances(plane.neg, cfg, n_slices))


def required_slices(params: ClipParams | None, cfg: CrossbarConfig) -> int:
    """Smallest slice count whose bit capacity covers the post-clip ceiling.

    The ceiling is ``beta * g_max`` expressed on the unclipped grid; with no
    clip (or beta = 1) this is the full ``weight_bits / bits_per_cell``.
    """
    if params is None or params.beta == 1.0:
        return cfg.n_slices_full
    ceiling = max(cfg.g_min, params.beta * cfg.g_max)
    max_code = int(round_half_away(
        np.asarray((ceiling - cfg.g_min) / cfg.weight_grid_step)))
    max_code = min(max_code, cfg.max_weight_code)
    bits_needed = max(1, max_code.bit_length())
    return max(1, math.ceil(bits_needed / cfg.bits_per_cell))
