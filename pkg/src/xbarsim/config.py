"""Experiment configuration: a strict, flat ``key = value`` text format.

Lines are ``section.key = value`` with ``#`` comments; every key is optional
(defaults reproduce the reference device table and the desk-scale model), but
unknown keys, duplicate keys, malformed values and empty sweep axes are fatal
with the offending line number. Lists are comma-separated; clip settings are
``none`` or ``(alpha, beta)`` pairs; seed lists accept ``a:b`` ranges;
``crossbar.adc_bits = ideal`` selects the lossless converter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .mapping import ClipParams, CrossbarConfig
from .model import ModelConfig


class ConfigError(Exception):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class SweepPoint:
    gamma: float
    clip: ClipParams | None
    on_off: float


@dataclass
class ExperimentSpec:
    model: ModelConfig = field(default_factory=ModelConfig)
    model_seed: int = 0
    weights_path: Path | None = None
    crossbar: CrossbarConfig = field(default_factory=CrossbarConfig)
    apply_read: bool = True
    apply_write: bool = True
    freeze_read: bool = False
    gammas: list[float] = field(default_factory=lambda: [3.0, 4.0, 5.0])
    clips: list[ClipParams | None] = field(default_factory=lambda: [None])
    on_off_ratios: list[float] | None = None
    seeds: list[int] = field(default_factory=lambda: [0])
    batch: int = 1
    csv_path: Path = Path("results.csv")
    summary_path: Path = Path("summary.json")
    figures_dir: Path | None = None
    workers: int = 1

    def __post_init__(self) -> None:
        if self.on_off_ratios is None:
            ratio = self.crossbar.on_off_ratio
            nearest = float(round(ratio))
            self.on_off_ratios = [nearest if math.isclose(
                ratio, nearest, rel_tol=1e-9) else ratio]

    def grid(self) -> list[SweepPoint]:
        """Sweep points in deterministic order: gamma, clip, ON/OFF."""
        return [SweepPoint(g, c, r) for g in self.gammas
                for c in self.clips for r in self.on_off_ratios]


def point_crossbar(spec: ExperimentSpec, point: SweepPoint) -> CrossbarConfig:
    """Crossbar parameters for one sweep point. The configured g_max is kept
    bit-exact when the requested ratio already matches it; other ratios move
    g_max at fixed g_min."""
    cfg = spec.crossbar
    if not math.isclose(point.on_off, cfg.on_off_ratio, rel_tol=1e-9):
        cfg = cfg.with_on_off_ratio(point.on_off)
    return replace(cfg, gamma=point.gamma)


def _strip(line: str) -> str:
    if "#" in line:
        line = line[:line.index("#")]
    return line.strip()


def _split_list(value: str, lineno: int) -> list[str]:
    """Split on top-level commas, keeping parenthesized pairs together."""
    items, depth, current = [], 0, ""
    for ch in value:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise ConfigError(f"line {lineno}: unbalanced ')'")
        if ch == "," and depth == 0:
            items.append(current.strip())
            current = ""
        else:
            current += ch
    if depth != 0:
        raise ConfigError(f"line {lineno}: unbalanced '('")
    items.append(current.strip())
    items = [i for i in items if i]
    if not items:
        raise ConfigError(f"line {lineno}: empty list")
    return items


def _parse_float(value: str, lineno: int) -> float:
    try:
        out = float(value)
    except ValueError:
        raise ConfigError(f"line {lineno}: {value!r} is not a number") from None
    if not math.isfinite(out):
        raise ConfigError(f"line {lineno}: {value!r} is not finite")
    return out


def _parse_int(value: str, lineno: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(
            f"line {lineno}: {value!r} is not an integer") from None


def _parse_bool(value: str, lineno: int) -> bool:
    lowered = value.lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"line {lineno}: {value!r} is not a boolean")


def _parse_clip(item: str, lineno: int) -> ClipParams | None:
    if item.lower() == "none":
        return None
    if not (item.startswith("(") and item.endswith(")")):
        raise ConfigError(
            f"line {lineno}: clip must be 'none' or '(alpha, beta)', "
            f"got {item!r}")
    parts = [p.strip() for p in item[1:-1].split(",")]
    if len(parts) != 2:
        raise ConfigError(f"line {lineno}: clip pair needs two values")
    alpha = _parse_float(parts[0], lineno)
    beta = _parse_float(parts[1], lineno)
    try:
        return ClipParams(alpha=alpha, beta=beta)
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: {exc}") from None


def _parse_seeds(value: str, lineno: int) -> list[int]:
    seeds: list[int] = []
    for item in _split_list(value, lineno):
        if ":" in item:
            lo_s, _, hi_s = item.partition(":")
            lo, hi = _parse_int(lo_s, lineno), _parse_int(hi_s, lineno)
            if hi <= lo:
                raise ConfigError(
                    f"line {lineno}: empty seed range {item!r}")
            seeds.extend(range(lo, hi))
        else:
            seeds.append(_parse_int(item, lineno))
    return seeds


def _parse_adc(value: str, lineno: int) -> int | None:
    if value.lower() == "ideal":
        return None
    return _parse_int(value, lineno)


# key -> (target dict name, field, value parser)
_SCALAR_KEYS = {
    "model.n_encoders": ("model", "n_encoders", _parse_int),
    "model.tokens": ("model", "tokens", _parse_int),
    "model.embed_dim": ("model", "embed_dim", _parse_int),
    "model.n_heads": ("model", "n_heads", _parse_int),
    "model.mlp_ratio": ("model", "mlp_ratio", _parse_float),
    "model.seed": ("top", "model_seed", _parse_int),
    "model.weights": ("top", "weights_path", None),
    "crossbar.g_min": ("crossbar", "g_min", _parse_float),
    "crossbar.g_max": ("crossbar", "g_max", _parse_float),
    "crossbar.tile_rows": ("crossbar", "tile_rows", _parse_int),
    "crossbar.tile_cols": ("crossbar", "tile_cols", _parse_int),
    "crossbar.bits_per_cell": ("crossbar", "bits_per_cell", _parse_int),
    "crossbar.weight_bits": ("crossbar", "weight_bits", _parse_int),
    "crossbar.input_bits": ("crossbar", "input_bits", _parse_int),
    "crossbar.adc_bits": ("crossbar", "adc_bits", _parse_adc),
    "crossbar.sigma_read": ("crossbar", "sigma_read", _parse_float),
    "crossbar.sigma_write": ("crossbar", "sigma_write", _parse_float),
    "crossbar.e_read": ("crossbar", "e_read", _parse_float),
    "crossbar.e_write": ("crossbar", "e_write", _parse_float),
    "crossbar.a_xbar": ("crossbar", "a_xbar", _parse_float),
    "noise.apply_read": ("top", "apply_read", _parse_bool),
    "noise.apply_write": ("top", "apply_write", _parse_bool),
    "noise.freeze_read": ("top", "freeze_read", _parse_bool),
    "sweep.batch": ("top", "batch", _parse_int),
    "output.csv": ("top", "csv_path", None),
    "output.summary": ("top", "summary_path", None),
    "output.figures": ("top", "figures_dir", None),
    "run.workers": ("top", "workers", _parse_int),
}

_LIST_KEYS = {"sweep.gammas", "sweep.clips", "sweep.on_off_ratios",
              "sweep.seeds"}


def load_config(path) -> ExperimentSpec:
    """Parse and validate an experiment config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None

    model_kw: dict = {}
    crossbar_kw: dict = {}
    top_kw: dict = {}
    seen: dict[str, int] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip(raw)
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', "
                              f"got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in seen:
            raise ConfigError(
                f"line {lineno}: duplicate key {key!r} "
                f"(first set on line {seen[key]})")
        seen[key] = lineno
        if not value:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")

        if key in _LIST_KEYS:
            items = _split_list(value, lineno)
            if key == "sweep.gammas":
                top_kw["gammas"] = [_parse_float(i, lineno) for i in items]
            elif key == "sweep.clips":
                top_kw["clips"] = [_parse_clip(i, lineno) for i in items]
            elif key == "sweep.on_off_ratios":
                ratios = [_parse_float(i, lineno) for i in items]
                if any(r <= 1.0 for r in ratios):
                    raise ConfigError(
                        f"line {lineno}: ON/OFF ratios must exceed 1")
                top_kw["on_off_ratios"] = ratios
            else:
                top_kw["seeds"] = _parse_seeds(value, lineno)
            continue

        if key not in _SCALAR_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        target, name, parser = _SCALAR_KEYS[key]
        parsed = value if parser is None else parser(value, lineno)
        if name.endswith("path") or name in ("weights_path", "figures_dir"):
            parsed = Path(parsed)
        dest = {"model": model_kw, "crossbar": crossbar_kw,
                "top": top_kw}[target]
        dest[name] = parsed

    try:
        model = ModelConfig(**model_kw)
        crossbar = CrossbarConfig(**crossbar_kw)
        spec = ExperimentSpec(model=model, crossbar=crossbar, **top_kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    if spec.batch < 1:
        raise ConfigError("sweep.batch must be at least 1")
    if spec.workers < 1:
        raise ConfigError("run.workers must be at least 1")
    if not spec.seeds:
        raise ConfigError("sweep.seeds is empty")
    # Relative paths resolve against the config file, not the CWD.
    for attr in ("csv_path", "summary_path", "figures_dir", "weights_path"):
        value = getattr(spec, attr)
        if value is not None and not value.is_absolute():
            setattr(spec, attr, path.parent / value)
    if spec.weights_path is not None and not spec.weights_path.exists():
        raise ConfigError(
            f"model.weights file not found: {spec.weights_path}")
    return spec
