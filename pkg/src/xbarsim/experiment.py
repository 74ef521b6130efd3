"""Sweep execution and report writing.

One row per (sweep point, seed), computed from content-keyed noise streams,
so results are bit-identical for any worker count and any completion order;
rows are always written in grid order. The CSV carries a timestamp comment
on its first line and is otherwise deterministic; the JSON summary and the
rendered figures are derived from the same rows.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .config import ExperimentSpec, SweepPoint, point_crossbar
from .estimator import estimate
from .model import (EncoderWeights, generate_inputs, generate_synthetic_model,
                    load_model)
from .noise import NoiseSpec, stream_id
from .pipeline import run_inference

WORKERS_ENV = "XBARSIM_WORKERS"


@dataclass
class RunRow:
    gamma: float
    alpha: float | None
    beta: float | None
    on_off: float
    seed: int
    mean_snr: float
    per_block_snr: list[float]
    n_crossbars: int
    attention_area: float
    attention_energy: float
    kv_write_dw_rms: float


@dataclass
class ExperimentResult:
    rows: list[RunRow]
    csv_path: Path
    summary_path: Path
    figure_paths: list[Path]


def resolve_workers(spec: ExperimentSpec) -> int:
    """Worker count: the environment variable overrides the config."""
    override = os.environ.get(WORKERS_ENV)
    if override is not None:
        try:
            workers = int(override)
        except ValueError:
            raise RuntimeError(
                f"{WORKERS_ENV}={override!r} is not an integer") from None
        if workers < 1:
            raise RuntimeError(f"{WORKERS_ENV} must be at least 1")
        return workers
    return spec.workers


def load_weights(spec: ExperimentSpec) -> list[EncoderWeights]:
    if spec.weights_path is not None:
        return load_model(spec.weights_path, spec.model)
    return generate_synthetic_model(spec.model, seed=spec.model_seed)


def run_point(spec: ExperimentSpec, weights: list[EncoderWeights],
              point: SweepPoint, seed: int) -> RunRow:
    """Compute one report row; pure function of (spec, weights, point, seed)."""
    cfg = point_crossbar(spec, point)
    inputs = generate_inputs(spec.model, seed=seed, batch=spec.batch)
    noise = NoiseSpec(sigma_read=cfg.sigma_read, sigma_write=cfg.sigma_write,
                      gamma=point.gamma, apply_read=spec.apply_read,
                      apply_write=spec.apply_write, seed=seed,
                      stream=stream_id("deployment"))
    _, snr, stats = run_inference(inputs, weights, spec.model, cfg,
                                  clip=point.clip, noise=noise,
                                  freeze_read=spec.freeze_read)
    hw = estimate(stats, spec.model, cfg, clip=point.clip)
    return RunRow(
        gamma=point.gamma,
        alpha=None if point.clip is None else point.clip.alpha,
        beta=None if point.clip is None else point.clip.beta,
        on_off=point.on_off,
        seed=seed,
        mean_snr=snr.mean_snr,
        per_block_snr=snr.per_block_snr,
        n_crossbars=hw.n_crossbars,
        attention_area=hw.attention_area,
        attention_energy=hw.attention_energy,
        kv_write_dw_rms=stats.kv_write_dw_rms)


_WORKER_STATE: dict = {}


def _worker_init(spec: ExperimentSpec, weights: list[EncoderWeights]) -> None:
    _WORKER_STATE["spec"] = spec
    _WORKER_STATE["weights"] = weights


def _worker_run(task: tuple[SweepPoint, int]) -> RunRow:
    point, seed = task
    return run_point(_WORKER_STATE["spec"], _WORKER_STATE["weights"], point,
                     seed)


def csv_header(spec: ExperimentSpec) -> list[str]:
    blocks = [f"snr_block_{i}" for i in range(spec.model.n_encoders)]
    return (["gamma", "alpha", "beta", "on_off", "seed", "mean_snr"] + blocks
            + ["n_crossbars", "attention_area_mm2", "attention_energy_pj",
               "kv_write_dw_rms"])


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def row_cells(row: RunRow) -> list[str]:
    cells = [_cell(row.gamma), _cell(row.alpha), _cell(row.beta),
             _cell(row.on_off), _cell(row.seed), _cell(row.mean_snr)]
    cells += [_cell(v) for v in row.per_block_snr]
    cells += [_cell(row.n_crossbars), _cell(row.attention_area),
              _cell(row.attention_energy), _cell(row.kv_write_dw_rms)]
    return cells


def write_csv(path: Path, spec: ExperimentSpec, rows: list[RunRow]) -> None:
    stamp = datetime.now(timezone.utc).isoformat()
    lines = [f"# generated {stamp}", ",".join(csv_header(spec))]
    lines += [",".join(row_cells(r)) for r in rows]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def _point_key(row: RunRow) -> tuple:
    return (row.gamma, row.alpha, row.beta, row.on_off)


def summarize(spec: ExperimentSpec, rows: list[RunRow]) -> dict:
    """Aggregate rows per sweep point; means match CSV columns exactly."""
    points = []
    for point in spec.grid():
        alpha = None if point.clip is None else point.clip.alpha
        beta = None if point.clip is None else point.clip.beta
        group = [r for r in rows
                 if _point_key(r) == (point.gamma, alpha, beta, point.on_off)]
        if not group:
            continue
        snrs = np.array([r.mean_snr for r in group])
        points.append({
            "gamma": point.gamma,
            "alpha": alpha,
            "beta": beta,
            "on_off": point.on_off,
            "n_seeds": len(group),
            "mean_snr_mean": float(np.mean(snrs)),
            "mean_snr_std": float(np.std(snrs)),
            "n_crossbars": group[0].n_crossbars,
            "attention_area_mm2": group[0].attention_area,
            "attention_energy_pj_mean": float(
                np.mean([r.attention_energy for r in group])),
            "kv_write_dw_rms_mean": float(
                np.mean([r.kv_write_dw_rms for r in group])),
        })
    return {
        "n_rows": len(rows),
        "model": {"n_encoders": spec.model.n_encoders,
                  "tokens": spec.model.tokens,
                  "embed_dim": spec.model.embed_dim,
                  "n_heads": spec.model.n_heads,
                  "mlp_ratio": spec.model.mlp_ratio},
        "batch": spec.batch,
        "points": points,
    }


def write_summary(path: Path, summary: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def run_experiment(spec: ExperimentSpec,
                   workers: int | None = None) -> ExperimentResult:
    """Run the full sweep and write the CSV, summary and any figures.

    On failure partway, rows completed so far are still flushed to the CSV
    before the error propagates.
    """
    weights = load_weights(spec)
    tasks = [(point, seed) for point in spec.grid() for seed in spec.seeds]
    if workers is None:
        workers = resolve_workers(spec)

    rows: list[RunRow] = []
    try:
        if workers <= 1:
            for point, seed in tasks:
                rows.append(run_point(spec, weights, point, seed))
        else:
            with ProcessPoolExecutor(
                    max_workers=workers, initializer=_worker_init,
                    initargs=(spec, weights)) as pool:
                for row in pool.map(_worker_run, tasks):
                    rows.append(row)
    except Exception:
        if rows:
            write_csv(spec.csv_path, spec, rows)
        raise

    write_csv(spec.csv_path, spec, rows)
    write_summary(spec.summary_path, summarize(spec, rows))

    figure_paths: list[Path] = []
    if spec.figures_dir is not None:
        from .figures import render_figures
        figure_paths = render_figures(spec, rows, spec.figures_dir)
    return ExperimentResult(rows=rows, csv_path=spec.csv_path,
                            summary_path=spec.summary_path,
                            figure_paths=figure_paths)
