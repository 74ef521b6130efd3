"""Command-line interface.

Subcommands: ``run`` executes a sweep and writes the CSV/JSON reports (plus
figures when configured), ``gen-model`` writes a synthetic weight file,
``validate`` checks a config without running, ``sweep-grid`` prints the
expanded sweep. Exit codes: 0 success, 1 configuration error, 2 runtime
error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .model import generate_synthetic_model, save_model


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xbarsim",
        description="Transformer attention on modeled non-ideal crossbars")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the configured sweep")
    run.add_argument("config", type=Path)
    run.add_argument("--figures", type=Path, default=None, metavar="DIR",
                     help="render figures into DIR (overrides the config)")
    run.add_argument("--workers", type=int, default=None,
                     help="parallel workers (overrides config, not the "
                          "XBARSIM_WORKERS environment variable)")

    gen = sub.add_parser("gen-model", help="write a synthetic weight file")
    gen.add_argument("config", type=Path)
    gen.add_argument("out", type=Path)

    val = sub.add_parser("validate", help="check a config and print the plan")
    val.add_argument("config", type=Path)

    grid = sub.add_parser("sweep-grid", help="print the expanded sweep grid")
    grid.add_argument("config", type=Path)
    return parser


def _describe(spec) -> str:
    m = spec.model
    return (f"model: {m.n_encoders} encoders, {m.tokens} tokens, "
            f"embed {m.embed_dim}, {m.n_heads} heads\n"
            f"sweep: {len(spec.gammas)} gamma x {len(spec.clips)} clip x "
            f"{len(spec.on_off_ratios)} ratio, {len(spec.seeds)} seeds, "
            f"batch {spec.batch} -> {len(spec.grid()) * len(spec.seeds)} rows")


def _cmd_run(args) -> int:
    from .experiment import resolve_workers, run_experiment

    spec = load_config(args.config)
    if args.figures is not None:
        spec.figures_dir = args.figures
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        spec.workers = args.workers
    print(_describe(spec))
    result = run_experiment(spec, workers=resolve_workers(spec))
    print(f"wrote {len(result.rows)} rows to {result.csv_path}")
    print(f"wrote summary to {result.summary_path}")
    for fig in result.figure_paths:
        print(f"wrote figure {fig}")
    return 0


def _cmd_gen_model(args) -> int:
    spec = load_config(args.config)
    weights = generate_synthetic_model(spec.model, seed=spec.model_seed)
    save_model(args.out, weights)
    n = sum(getattr(w, f).size for w in weights
            for f in ("w_q", "w_k", "w_v", "w_proj", "mlp_in", "mlp_out",
                      "ln1_gain", "ln1_bias", "ln2_gain", "ln2_bias"))
    print(f"wrote {spec.model.n_encoders} encoders ({n} values) to {args.out}")
    return 0


def _cmd_validate(args) -> int:
    spec = load_config(args.config)
    print(f"{args.config}: OK")
    print(_describe(spec))
    return 0


def _cmd_sweep_grid(args) -> int:
    spec = load_config(args.config)
    print("gamma,alpha,beta,on_off")
    for point in spec.grid():
        alpha = "" if point.clip is None else repr(point.clip.alpha)
        beta = "" if point.clip is None else repr(point.clip.beta)
        print(f"{point.gamma!r},{alpha},{beta},{point.on_off!r}")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "gen-model": _cmd_gen_model,
    "validate": _cmd_validate,
    "sweep-grid": _cmd_sweep_grid,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001  (CLI boundary)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
