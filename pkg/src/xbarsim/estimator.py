"""Analytical area and energy model for the crossbar deployment.

Area is installed hardware: every mapped operand owns its tile grid of
physical crossbars (two differential planes times the slice count per tile
position), counted once regardless of batch. Energy is event-driven:
``n_read_cycles * e_read + n_write_events * e_write``, nothing else; digital
softmax/layernorm/GELU are treated as exact and free.

"Attention" totals cover the W_Q/W_K/W_V crossbars plus the dynamic K/V
crossbars; the output projection and the MLP belong to the feed-forward
group and appear only in the breakdown. Clipping with beta <= 0.25 drops the
top slice of every dynamic operand, scaling exactly the K/V class by the
reduced slice count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .engine import MvmStats
from .mapping import ClipParams, CrossbarConfig, required_slices
from .model import ModelConfig

ATTENTION_CLASSES = ("qkv", "kv")


@dataclass(frozen=True)
class ClassCost:
    n_crossbars: int
    n_read_cycles: int
    n_write_events: int
    area: float
    energy: float


@dataclass(frozen=True)
class HwReport:
    """Attention-scope totals plus the per-class cost breakdown."""

    n_crossbars: int
    attention_area: float
    attention_energy: float
    breakdown: dict[str, ClassCost]

    @property
    def total_area(self) -> float:
        return sum(c.area for c in self.breakdown.values())

    @property
    def total_energy(self) -> float:
        return sum(c.energy for c in self.breakdown.values())


def _tile_grid(rows: int, cols: int, cfg: CrossbarConfig) -> int:
    return math.ceil(rows / cfg.tile_rows) * math.ceil(cols / cfg.tile_cols)


def _operand_crossbars(rows: int, cols: int, n_slices: int,
                       cfg: CrossbarConfig) -> int:
    return 2 * _tile_grid(rows, cols, cfg) * n_slices


def count_crossbars(model: ModelConfig, cfg: CrossbarConfig,
                    clip: ClipParams | None = None) -> dict[str, int]:
    """Installed physical crossbars per operand class for the whole stack."""
    d, m, t, hd = (model.embed_dim, model.mlp_dim, model.tokens,
                   model.head_dim)
    s_full = cfg.n_slices_full
    s_dyn = required_slices(clip, cfg)
    square = _operand_crossbars(d, d, s_full, cfg)
    per_head = (_operand_crossbars(hd, t, s_dyn, cfg)
                + _operand_crossbars(t, hd, s_dyn, cfg))
    per_encoder = {
        "qkv": 3 * square,
        "proj": square,
        "mlp": (_operand_crossbars(d, m, s_full, cfg)
                + _operand_crossbars(m, d, s_full, cfg)),
        "kv": model.n_heads * per_head,
    }
    return {cls: model.n_encoders * n for cls, n in per_encoder.items()}


def count_run_events(model: ModelConfig, cfg: CrossbarConfig,
                     clip: ClipParams | None = None,
                     n_inputs: int = 1) -> dict[str, MvmStats]:
    """Event counts for ``n_inputs`` inferences, without running the engine.

    Mirrors the engine bookkeeping exactly: every multiply costs
    ``crossbars * input_bits * input_rows`` read cycles, and every dynamic
    crossbar is rewritten once per input.
    """
    if n_inputs < 1:
        raise ValueError("need at least one input")
    counts = count_crossbars(model, cfg, clip)
    t = model.tokens
    bits = cfg.input_bits
    out: dict[str, MvmStats] = {}
    for cls, n_xbars in counts.items():
        # Every operand class happens to consume t-row inputs: the token
        # matrix for QKV/proj/MLP, per-head Q and softmax scores for K/V.
        cycles = n_xbars * bits * t * n_inputs
        writes = n_xbars * n_inputs if cls == "kv" else 0
        out[cls] = MvmStats(n_tiles=n_xbars * n_inputs,
                            n_write_events=writes, n_read_cycles=cycles)
    return out


def estimate(stats, model: ModelConfig, cfg: CrossbarConfig,
             clip: ClipParams | None = None) -> HwReport:
    """Cost report from per-class event stats (measured or counted).

    ``stats`` is a mapping from operand class to :class:`MvmStats`, or any
    object exposing one as ``per_class`` (a pipeline ``RunStats``). Energy
    covers exactly the events in ``stats``; area is batch-independent.
    """
    per_class = getattr(stats, "per_class", stats)
    counts = count_crossbars(model, cfg, clip)
    breakdown: dict[str, ClassCost] = {}
    for cls, n_xbars in counts.items():
        st = per_class.get(cls, MvmStats())
        breakdown[cls] = ClassCost(
            n_crossbars=n_xbars,
            n_read_cycles=st.n_read_cycles,
            n_write_events=st.n_write_events,
            area=n_xbars * cfg.a_xbar,
            energy=st.n_read_cycles * cfg.e_read
            + st.n_write_events * cfg.e_write)
    attn = [breakdown[c] for c in ATTENTION_CLASSES]
    return HwReport(
        n_crossbars=sum(c.n_crossbars for c in attn),
        attention_area=sum(c.n_crossbars for c in attn) * cfg.a_xbar,
        attention_energy=sum(c.energy for c in attn),
        breakdown=breakdown)


def estimate_static(model: ModelConfig, cfg: CrossbarConfig,
                    clip: ClipParams | None = None,
                    n_inputs: int = 1) -> HwReport:
    """Counting-only estimate for ``n_inputs`` inferences."""
    return estimate(count_run_events(model, cfg, clip, n_inputs), model, cfg,
                    clip)
