"""Command-line entry point: ``tent {train,evaluate,predict,attention}``.

Exit codes: 0 success, 2 configuration/data errors, 3 training diverged,
4 output I/O errors.  Set ``TENT_LOG`` (e.g. ``INFO``) for progress logs.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import checkpoint as ckpt_io
from .attention import AttentionRecord, collect_attention, export_attention
from .config import ConfigError, RunConfig, load_config
from .metrics import mae, mse
from .model import init_params, predict
from .pipeline import (IngestionError, PreparedData, ScalingSpec, manifest, prepare_files,
                       window_features)
from .training import TrainingError, train

log = logging.getLogger("tent")


class CliError(Exception):
    def __init__(self, message: str, code: int = 2):
        super().__init__(message)
        self.code = code


def _resolve(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None) is not None:
        cfg.paths.out_dir = args.out
    if getattr(args, "horizon", None) is not None:
        cfg.pipeline.horizon = args.horizon
    if getattr(args, "target", None) is not None:
        cfg.pipeline.target_station = args.target
    return cfg


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.paths.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc}", 4) from exc
    return out


def _prepare(cfg: RunConfig, spec: ScalingSpec | None = None) -> PreparedData:
    for p in (cfg.paths.data_csv, cfg.paths.coords_csv):
        if not Path(p).is_file():
            raise CliError(f"input file not found: {p}")
    return prepare_files(cfg.paths.data_csv, cfg.paths.coords_csv, cfg.pipeline, spec)


def _load_checkpoint(path):
    if not path or not Path(path).is_file():
        raise CliError(f"checkpoint not found: {path}")
    return ckpt_io.load(path)


def _compatible_data(cfg: RunConfig, ck) -> PreparedData:
    meta = ck.data
    p = cfg.pipeline
    for key, want in (("lag", p.lag), ("horizon", p.horizon)):
        if meta.get(key) != want:
            raise CliError(f"checkpoint {key}={meta.get(key)} but config has {want}")
    if meta.get("target") != {"station": p.target_station, "feature": p.target_feature}:
        raise CliError(f"checkpoint target {meta.get('target')} differs from config")
    data = _prepare(cfg, ScalingSpec.from_dict(meta["scaling"]))
    if data.shape != (ck.config.T, ck.config.C, ck.config.F):
        raise CliError(f"data windows {data.shape} do not match the checkpoint model "
                       f"{(ck.config.T, ck.config.C, ck.config.F)}")
    return data


def _write(path: Path, text: str):
    try:
        path.write_text(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", 4) from exc


def cmd_train(args) -> int:
    cfg = _resolve(args)
    data = _prepare(cfg)
    T, C, F = data.shape
    model_cfg = cfg.model_config(C, F)
    train_cfg = cfg.train_config()
    out = _out_dir(cfg)
    params = init_params(model_cfg, cfg.seed)
    try:
        result = train(params, model_cfg, data.train, data.val, train_cfg,
                       log_path=out / "train_log.csv")
    except TrainingError as exc:
        raise CliError(str(exc), 3) from exc
    meta = manifest(data, cfg.pipeline, {"data_csv": str(cfg.paths.data_csv),
                                         "coords_csv": str(cfg.paths.coords_csv)})
    ck = ckpt_io.Checkpoint(model_cfg, result.params, cfg.seed, meta)
    try:
        ckpt_io.save(ck, out / "checkpoint.json")
    except OSError as exc:
        raise CliError(f"cannot write checkpoint: {exc}", 4) from exc
    _write(out / "manifest.json", json.dumps(meta, indent=2))
    print(f"best epoch {result.best_epoch}, val_mse {result.best_val_mse:.6g}; "
          f"wrote {out / 'checkpoint.json'}")
    return 0


def evaluate_split(data: PreparedData, ck, split: str = "test") -> dict:
    ds = getattr(data, split)
    pred = data.inverse_target(predict(ds.X, ck.params, ck.config)[:, 0])
    return {"mae": mae(pred, ds.y_raw), "mse": mse(pred, ds.y_raw),
            "horizon": ds.horizon, "target": ds.target_station,
            "feature": ds.target_feature, "split": split, "n_samples": len(ds)}


def cmd_evaluate(args) -> int:
    cfg = _resolve(args)
    ck = _load_checkpoint(args.checkpoint)
    data = _compatible_data(cfg, ck)
    report = evaluate_split(data, ck, args.split)
    out = _out_dir(cfg)
    text = json.dumps(report, indent=2)
    _write(out / f"metrics_{args.split}.json", text)
    print(text)
    return 0


def _read_windows(path) -> list[tuple[object, pd.DataFrame]]:
    path = Path(path)
    if not path.is_file():
        raise CliError(f"input file not found: {path}")
    df = pd.read_csv(path)
    ts = pd.to_datetime(df.iloc[:, 0], utc=True)
    df = df.iloc[:, 1:]
    df.index = pd.DatetimeIndex(ts, name="timestamp")
    if "window" in df.columns:
        return [(w, g.drop(columns="window")) for w, g in df.groupby("window", sort=False)]
    return [(0, df)]


def cmd_predict(args) -> int:
    ck = _load_checkpoint(args.checkpoint)
    meta = ck.data
    spec = ScalingSpec.from_dict(meta["scaling"])
    stations, feats = spec.stations, spec.features
    target = (stations.index(meta["target"]["station"]), feats.index(meta["target"]["feature"]))
    fitted = {"stations": stations, "raw_features": meta["raw_features"], "spec": spec,
              "coords": {k: tuple(v) for k, v in meta["coordinates"].items()}}
    step = pd.Timedelta(seconds=meta["step_seconds"])
    horizon = meta["horizon"]
    T = ck.config.T
    rows = []
    for w, frame in _read_windows(args.input):
        if len(frame) != T:
            raise CliError(f"window {w!r} has {len(frame)} rows; exactly T={T} required")
        try:
            X = window_features(frame, fitted, meta["granularity"], meta["cartesian"],
                                meta["periodicity"])
        except (IngestionError, KeyError) as exc:
            raise CliError(f"window {w!r}: {exc}") from exc
        scaled = float(predict(X[None], ck.params, ck.config)[0, 0])
        rows.append({
            "window": w,
            "timestamp": (frame.index[-1] + horizon * step).strftime("%Y-%m-%dT%H:%M:%SZ"),
            "prediction": float(spec.inverse_one(scaled, *target)),
            "prediction_scaled": scaled,
            "horizon": horizon,
        })
    out = Path(args.out) if args.out else Path("predictions.csv")
    try:
        pd.DataFrame(rows).to_csv(out, index=False, float_format="%.17g")
    except OSError as exc:
        raise CliError(f"cannot write {out}: {exc}", 4) from exc
    print(f"wrote {len(rows)} predictions to {out}")
    return 0


def cmd_attention(args) -> int:
    cfg = _resolve(args)
    ck = _load_checkpoint(args.checkpoint)
    data = _compatible_data(cfg, ck)
    a = cfg.attention
    S = collect_attention(data.test.X, ck.params, ck.config, mode=a.mode, sample=a.sample,
                          layer=a.layer)
    record = AttentionRecord(S, data.stations, data.test.horizon, data.test.target_station,
                             data.coords)
    out = _out_dir(cfg)
    try:
        export_attention(record, out / "attention.json", out / "attention.svg", a.top_k)
    except OSError as exc:
        raise CliError(f"cannot write attention files: {exc}", 4) from exc
    print(f"wrote {out / 'attention.json'} and {out / 'attention.svg'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tent", description="Train, evaluate and inspect tensorial attention forecasters.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--horizon", type=int)
        p.add_argument("--target", help="target station")
        if checkpoint:
            p.add_argument("--checkpoint", required=True)

    common(sub.add_parser("train", help="train a model"))
    p = sub.add_parser("evaluate", help="test-split MAE/MSE in physical units")
    common(p, checkpoint=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p = sub.add_parser("predict", help="predict from input windows")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="CSV of one or more windows")
    p.add_argument("--out", help="predictions CSV path")
    common(sub.add_parser("attention", help="export attention scores"), checkpoint=True)
    return parser


COMMANDS = {"train": cmd_train, "evaluate": cmd_evaluate, "predict": cmd_predict,
            "attention": cmd_attention}


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("TENT_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (IngestionError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
