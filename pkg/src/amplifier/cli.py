"""Command-line entry point: ``amplifier <command> [flags]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import config as cfgmod
from . import experiments as ex
from .baselines import (CopyForecaster, DLinearForecaster, EATWrapper,
                        LinearForecaster)
from .config import ConfigError, RunConfig
from .data import DataError, Splits, load_csv, protocol_ratios, windows, write_csv
from .model import AmplifierConfig, AmplifierModel, Forecaster
from .training import (CheckpointError, NumericalError, evaluate, load_checkpoint,
                       predict, train, write_history)

log = logging.getLogger("amplifier")

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4
CLI_MODEL_KINDS = ("amplifier", "linear", "dlinear", "copy", "eat+linear", "eat+dlinear")


# ---------------------------------------------------------------------------
# shared plumbing


def build_from_config(cfg: RunConfig, channels: int, seed: int) -> Forecaster:
    m = cfg.model
    L, H = m.lookback, m.horizon
    if m.kind == "amplifier":
        return AmplifierModel(AmplifierConfig(channels, L, H, **cfg.model_kwargs()), seed)
    if m.kind == "linear":
        return LinearForecaster(channels, L, H, seed=seed, norm_eps=m.norm_eps)
    if m.kind == "dlinear":
        return DLinearForecaster(channels, L, H, seed=seed, ma_kernel=m.ma_kernel,
                                 norm_eps=m.norm_eps)
    if m.kind == "copy":
        return CopyForecaster(channels, L, H)
    if m.kind in ("eat+linear", "eat+dlinear"):
        inner_kind = m.kind.split("+")[1]
        inner = (LinearForecaster(channels, L, H, seed=seed) if inner_kind == "linear"
                 else DLinearForecaster(channels, L, H, seed=seed, ma_kernel=m.ma_kernel))
        return EATWrapper(inner, seed=seed, norm_eps=m.norm_eps)
    raise ConfigError(f"model.kind: unknown kind {m.kind!r}; valid kinds: {', '.join(CLI_MODEL_KINDS)}")


def task_from_config(cfg: RunConfig) -> ex.TwoToneTask:
    t = cfg.task
    return ex.TwoToneTask(cfg.model.lookback, cfg.model.horizon, t.periods, t.strong_amp,
                          t.weak_amp, t.low_bin, t.high_bin, t.noise_std, t.placement)


def load_splits(cfg: RunConfig, lookback: int | None = None,
                horizon: int | None = None) -> tuple[Splits, list[str]]:
    """Standardized splits from ``data.path``, or the two-tone task if unset."""
    L = lookback or cfg.model.lookback
    H = horizon or cfg.model.horizon
    try:
        if cfg.data.path:
            frame = load_csv(cfg.data.path)
            ratios = protocol_ratios(cfg.data.protocol, cfg.data.path)
            return ex.prepare(frame, L, H, ratios), [cfg.data.path]
        task = task_from_config(cfg)
        task.lookback, task.horizon = L, H
        return task.splits(cfg.train.seed), []
    except DataError:
        raise
    except ValueError as exc:
        raise DataError(str(exc)) from None


def split_frame(splits: Splits, name: str):
    if name not in ("train", "val", "test"):
        raise ConfigError(f"data.split must be train, val or test, got {name!r}")
    return getattr(splits, name)


def prepare_out(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def finish(args, cfg: RunConfig, inputs, started: float) -> None:
    ex.write_manifest(os.path.join(args.out, "manifest.json"), args.command,
                      cfg.flat(), cfg.train.seed, inputs)
    log.info("%s finished in %.2fs", args.command, time.perf_counter() - started)


def resolve_config(args) -> RunConfig:
    cfg = cfgmod.load(args.config, args.set or ())
    if args.seed is not None:
        cfgmod.apply(cfg, {"train.seed": args.seed})
    return cfg


# ---------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    started = time.perf_counter()
    cfg = resolve_config(args)
    splits, inputs = load_splits(cfg)
    model = build_from_config(cfg, splits.train.n_channels, cfg.train.seed)
    prepare_out(args.out)
    result = train(model, splits.train, splits.val, cfg.train)
    result.best.save(os.path.join(args.out, "model.ckpt"))
    write_history(result.history, os.path.join(args.out, "metrics.csv"))
    finish(args, cfg, inputs, started)
    best = min(result.history, key=lambda r: r["val_mse"])
    print(json.dumps({"epoch": best["epoch"], "val_mse": best["val_mse"],
                      "val_mae": best["val_mae"]}))
    return 0


def _checkpoint_and_frame(args):
    cfg = resolve_config(args)
    try:
        model = load_checkpoint(args.checkpoint)
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {args.checkpoint}: {exc.strerror}") from None
    if getattr(args, "horizon", None) is not None and args.horizon != model.horizon:
        raise ConfigError(f"--horizon {args.horizon} does not match the checkpoint horizon "
                          f"{model.horizon}")
    if getattr(args, "data", None):
        cfgmod.apply(cfg, {"data.path": args.data})
    splits, inputs = load_splits(cfg, model.lookback, model.horizon)
    if splits.train.n_channels != model.channels:
        raise ConfigError(f"checkpoint expects {model.channels} channels, dataset has "
                          f"{splits.train.n_channels}")
    frame = split_frame(splits, args.split or cfg.data.split)
    return cfg, model, frame, inputs + [args.checkpoint]


def cmd_eval(args) -> int:
    cfg, model, frame, _ = _checkpoint_and_frame(args)
    metrics = evaluate(model, frame)
    if args.dump_predictions:
        preds, targets = predict(model, frame)
        np.savez(args.dump_predictions, predictions=preds, targets=targets)
    print(json.dumps(metrics))
    return 0


def cmd_spectrum(args) -> int:
    started = time.perf_counter()
    cfg, model, frame, inputs = _checkpoint_and_frame(args)
    if args.window is None:
        rows = ex.frame_spectrum_report(model, frame)
    else:
        batch = next(windows(frame, model.lookback, model.horizon, 1 << 30))
        if not 0 <= args.window < len(batch.starts):
            raise ConfigError(f"--window must be in [0, {len(batch.starts)})")
        w = slice(args.window, args.window + 1)
        rows = ex.spectrum_report(model, batch.inputs[w], batch.targets[w])
    prepare_out(args.out)
    ex.write_rows(rows, os.path.join(args.out, "spectrum.csv"))
    finish(args, cfg, inputs, started)
    return 0


def cmd_ablate(args) -> int:
    started = time.perf_counter()
    cfg = resolve_config(args)
    if args.variants:
        cfgmod.apply(cfg, {"experiment.variants": args.variants})
    variants = cfg.variants()
    bad = [v for v in variants if v not in ex.VARIANTS]
    if bad or not variants:
        raise ConfigError(f"unknown variant(s) {', '.join(bad) or '(none given)'}; "
                          f"valid variants: {', '.join(ex.VARIANTS)}")
    splits, inputs = load_splits(cfg)
    rows, boosts = ex.ablation_run(splits, variants, cfg.train, workers=cfg.experiment.workers,
                                   lookback=cfg.model.lookback, horizon=cfg.model.horizon,
                                   **cfg.model_kwargs())
    prepare_out(args.out)
    ex.write_rows(rows, os.path.join(args.out, "ablation.csv"))
    if boosts:
        ex.write_rows(boosts, os.path.join(args.out, "boost.csv"))
    finish(args, cfg, inputs, started)
    return 0


def parse_tones(text: str) -> list[ex.Tone]:
    tones = []
    for item in text.split(","):
        parts = item.strip().split(":")
        if len(parts) not in (2, 3):
            raise ConfigError(f"--tones: expected freq:amp[:phase], got {item!r}")
        try:
            tones.append(ex.Tone(*(float(p) for p in parts)))
        except ValueError:
            raise ConfigError(f"--tones: bad number in {item!r}") from None
    return tones


def cmd_synth(args) -> int:
    started = time.perf_counter()
    cfg = resolve_config(args)
    try:
        spec = ex.SyntheticSpec(args.len, parse_tones(args.tones), args.noise, cfg.train.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    prepare_out(args.out)
    write_csv(ex.gen_synthetic(spec), os.path.join(args.out, "synthetic.csv"))
    ex.write_manifest(os.path.join(args.out, "manifest.json"), "synth",
                      {**cfg.flat(), "synth.tones": args.tones, "synth.len": args.len,
                       "synth.noise": args.noise}, cfg.train.seed)
    log.info("synth finished in %.2fs", time.perf_counter() - started)
    return 0


def cmd_probe(args) -> int:
    started = time.perf_counter()
    cfg = resolve_config(args)
    splits, inputs = load_splits(cfg)
    model = build_from_config(cfg, splits.train.n_channels, cfg.train.seed)
    report = ex.theorem_probes(model, splits, cfg.train)
    prepare_out(args.out)
    ex.write_rows(report.rows, os.path.join(args.out, "probe.csv"))
    ex.write_rows([{"band": "high", "bins": " ".join(map(str, report.bands.high))},
                   {"band": "low", "bins": " ".join(map(str, report.bands.low))},
                   {"band": "gradient_proxy", "bins": report.gradient_proxy}],
                  os.path.join(args.out, "bands.csv"))
    finish(args, cfg, inputs, started)
    return 0


def cmd_lowpass(args) -> int:
    started = time.perf_counter()
    cfg = resolve_config(args)
    fractions = cfg.keep_fractions()
    if any(not 0 < p <= 1 for p in fractions):
        raise ConfigError("keep fractions must lie in (0, 1]")
    splits, inputs = load_splits(cfg)
    model = build_from_config(cfg, splits.train.n_channels, cfg.train.seed)
    train(model, splits.train, splits.val, cfg.train)
    rows = ex.lowpass_ablation(model, splits.test, fractions)
    prepare_out(args.out)
    ex.write_rows(rows, os.path.join(args.out, "lowpass.csv"))
    finish(args, cfg, inputs, started)
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH",
                   help="flat 'section.key = value' file, or a run manifest JSON to rerun")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config key (repeatable); wins over --config")
    p.add_argument("--seed", type=int, default=None,
                   help="root seed for initialization, shuffling and synthetic data "
                        "(default 2021)")
    p.add_argument("--out", default="out", metavar="DIR",
                   help="output directory (default: ./out)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _checkpoint_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--checkpoint", required=True, metavar="PATH", help="checkpoint file")
    p.add_argument("--data", metavar="CSV",
                   help="dataset CSV (default: data.path, else the two-tone task)")
    p.add_argument("--split", choices=("train", "val", "test"),
                   help="split to score (default: data.split)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="amplifier", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model; writes model.ckpt, metrics.csv, manifest.json")
    _shared(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint; prints {mse, mae, n_windows}")
    _shared(p)
    _checkpoint_flags(p)
    p.add_argument("--horizon", type=int, help="expected horizon; must match the checkpoint")
    p.add_argument("--dump-predictions", metavar="NPZ",
                   help="also save predictions and targets to this .npz file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train variants and write ablation.csv and boost.csv")
    _shared(p)
    p.add_argument("--variants", metavar="LIST",
                   help=f"comma-separated subset of {','.join(ex.VARIANTS)}")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synth", help="write a sum-of-sines series to synthetic.csv")
    _shared(p)
    p.add_argument("--tones", required=True, metavar="F:A[:P],...",
                   help="tones as cycles-per-series:amplitude[:phase]")
    p.add_argument("--len", type=int, required=True, help="number of rows")
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian noise std (default 0)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("probe", help="train while logging band loss shares and gradients")
    _shared(p)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("spectrum", help="per-bin |DFT| of truth and prediction")
    _shared(p)
    _checkpoint_flags(p)
    p.add_argument("--window", type=int, help="single window index (default: mean over all)")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("lowpass", help="test MSE under input band filtering")
    _shared(p)
    p.set_defaults(func=cmd_lowpass)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
