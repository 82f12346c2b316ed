"""Command-line entry point: ``clmi3d <subcommand> ...``.

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .data_io import read_eegb, read_header, write_eegb
from .errors import ClmiError, ConfigError, IoFailure
from .harness.experiments import (
    SWEEP_AXES,
    SWEEP_GRIDS,
    evaluate_dataset,
    export_features,
    format_table,
    run_ablation,
    run_experiment,
    run_sweep,
    table_rows,
    train_full,
)
from .harness.runconfig import PROFILES, RunConfig, load_config, load_dataset
from .model import CLMIModel
from .preprocess import preprocess_pipeline
from .synthgen import generate_dataset

log = logging.getLogger("clmi3d")


def _write_text(path, text: str) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    try:
        Path(path).write_text(text if text.endswith("\n") else text + "\n")
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def _config(args) -> RunConfig:
    cfg = load_config(args.config, args.profile)
    if args.seed is not None:
        cfg = replace(
            cfg,
            run=replace(cfg.run, seed=args.seed),
            model=replace(cfg.model, seed=args.seed),
            hyper=replace(cfg.hyper, seed=args.seed),
        )
    return cfg


def _dataset(args, cfg: RunConfig):
    return load_dataset(cfg, getattr(args, "data", None))


def cmd_synth(args) -> int:
    cfg = _config(args)
    if cfg.data.synth is None:
        raise ConfigError("synth needs a data.synth section (or --profile ci)")
    spec = cfg.data.synth if args.seed is None else replace(cfg.data.synth, seed=args.seed)
    write_eegb(generate_dataset(spec), args.out)
    return 0


def cmd_preprocess(args) -> int:
    cfg = _config(args)
    ds = read_eegb(args.input)
    cfg.preprocess.check_band(ds.fs)
    write_eegb(preprocess_pipeline(ds, cfg.preprocess, augment=not args.no_augment), args.out)
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    model, history = train_full(_dataset(args, cfg), cfg)
    try:
        model.save(args.out)
    except OSError as e:
        raise IoFailure(f"cannot write {args.out}: {e}") from e
    if args.history:
        _write_text(args.history, _dump({"history": history, "config": cfg.to_dict()}))
    return 0


def _load_model(cfg: RunConfig, path) -> CLMIModel:
    model = CLMIModel(cfg.model)
    try:
        model.load(path)
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    return model


def cmd_eval(args) -> int:
    cfg = _config(args)
    ds = _dataset(args, cfg)
    cfg.check_dataset(ds)
    _, metrics = evaluate_dataset(_load_model(cfg, args.checkpoint), ds, cfg)
    _write_text(args.out, _dump({**metrics.to_dict(), "config": cfg.to_dict()}))
    return 0


def cmd_cv(args) -> int:
    cfg = _config(args)
    if args.mode:
        cfg = replace(cfg, run=replace(cfg.run, mode=args.mode))
    if args.k:
        cfg = replace(cfg, run=replace(cfg.run, k=args.k))
    if args.baseline:
        cfg = replace(cfg, run=replace(cfg.run, classifier="csp_lda"))
    result = run_experiment(_dataset(args, cfg), cfg)
    _write_text(args.out, result.to_json())
    cv = result.cv
    log.info("accuracy %.4f +/- %.4f over %d fold(s)", cv.mean(), cv.std(), len(cv.folds))
    return 0


def _table_doc(kind: str, key: str, rows, cfg: RunConfig) -> dict:
    return {
        kind: table_rows(rows),
        "key": key,
        "runs": {str(k): result.to_dict() for k, result in rows},
        "config": cfg.to_dict(),
    }


def cmd_ablate(args) -> int:
    cfg = _config(args)
    rows = run_ablation(_dataset(args, cfg), cfg)
    _write_text(args.out, _dump(_table_doc("variants", "variant", rows, cfg)))
    print(format_table(rows, "variant"), file=sys.stderr)
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    values = args.values
    if values is not None:
        values = [float(v) if args.axis == "lr" else int(v) for v in values]
    rows = run_sweep(_dataset(args, cfg), cfg, args.axis, values)
    _write_text(args.out, _dump(_table_doc("rows", args.axis, rows, cfg)))
    print(format_table(rows, args.axis), file=sys.stderr)
    return 0


def cmd_features(args) -> int:
    cfg = _config(args)
    ds = _dataset(args, cfg)
    cfg.check_dataset(ds)
    export_features(_load_model(cfg, args.checkpoint), ds, args.out, cfg.preprocess)
    return 0


def cmd_inspect(args) -> int:
    _write_text(None, _dump(read_header(args.path)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clmi3d", description="Motor-imagery EEG classification pipeline")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", help="JSON run-config overlaid on the profile")
        p.add_argument("--profile", choices=sorted(PROFILES), default="full")
        p.add_argument("--seed", type=int, help="override every seed in the config")
        return p

    p = with_config(sub.add_parser("synth", help="generate a synthetic EEGB dataset"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = with_config(sub.add_parser("preprocess", help="CAR, bandpass and window an EEGB file"))
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--no-augment", action="store_true", help="keep only the first window of each trial")
    p.set_defaults(func=cmd_preprocess)

    p = with_config(sub.add_parser("train", help="train on a whole dataset and save a checkpoint"))
    p.add_argument("--data", help="EEGB file (default: data section of the config)")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--history", help="per-epoch history JSON path")
    p.set_defaults(func=cmd_train)

    p = with_config(sub.add_parser("eval", help="evaluate a checkpoint on a dataset"))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data")
    p.add_argument("--out", help="metrics JSON path (default stdout)")
    p.set_defaults(func=cmd_eval)

    p = with_config(sub.add_parser("cv", help="cross validation or holdout run"))
    p.add_argument("--data")
    p.add_argument("--mode", choices=["cv", "holdout"])
    p.add_argument("--k", type=int)
    p.add_argument("--baseline", action="store_true", help="use the CSP+LDA classifier")
    p.add_argument("--out", help="metrics JSON path (default stdout)")
    p.set_defaults(func=cmd_cv)

    p = with_config(sub.add_parser("ablate", help="run the three ablation variants"))
    p.add_argument("--data")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ablate)

    p = with_config(sub.add_parser("sweep", help="one run per value of a hyperparameter"))
    p.add_argument("--data")
    p.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p.add_argument("--values", nargs="+", help="default grids: " + "; ".join(f"{a}={list(v)}" for a, v in SWEEP_GRIDS.items()))
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = with_config(sub.add_parser("features", help="export penultimate features as CSV"))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("inspect", help="print an EEGB header")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ClmiError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except ValueError as e:
        # argument values that only fail deep inside (e.g. a malformed sweep value)
        print(f"error: {e}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
