"""Losses, Adam, the training loop and checkpoint files."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .baselines import build_model
from .data import SeriesFrame, windows
from .model import Forecaster
from .nn import substream

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


class NumericalError(FloatingPointError):
    def __init__(self, epoch: int, batch: int, value: float):
        super().__init__(f"non-finite training loss {value} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class CheckpointError(ValueError):
    pass


# ---------------------------------------------------------------------------
# metrics


def _pair(pred, target) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(ad.as_tensor(pred).data)
    target = np.asarray(ad.as_tensor(target).data)
    if pred.shape != target.shape:
        raise ValueError(f"metric: prediction shape {pred.shape} != target shape {target.shape}")
    return pred, target


def mse(pred, target) -> float:
    pred, target = _pair(pred, target)
    return float(np.mean((pred - target) ** 2))


def mae(pred, target) -> float:
    pred, target = _pair(pred, target)
    return float(np.mean(np.abs(pred - target)))


def mse_loss(pred: Tensor, target) -> Tensor:
    target = ad.as_tensor(target)
    if pred.shape != target.shape:
        raise ValueError(f"mse_loss: prediction shape {pred.shape} != target shape {target.shape}")
    return ad.mean(ad.square(pred - target))


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 30
    patience: int = 5
    seed: int = 2021
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")


class Adam:
    """Bias-corrected Adam; moments are keyed by parameter name."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {p.name: np.zeros_like(p.data) for p in self.params}
        self.v = {p.name: np.zeros_like(p.data) for p in self.params}
        self.t = 0

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p in self.params:
            g = p.grad
            m, v = self.m[p.name], self.v[p.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state_snapshot(self) -> dict:
        return {"t": self.t,
                "m": {k: a.copy() for k, a in self.m.items()},
                "v": {k: a.copy() for k, a in self.v.items()}}


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    kind: str
    init_args: dict
    seed: int
    params: dict[str, np.ndarray]
    best_val_loss: float = float("nan")
    epoch: int = -1
    format_version: int = FORMAT_VERSION

    @classmethod
    def from_model(cls, model: Forecaster, best_val_loss=float("nan"), epoch=-1) -> "Checkpoint":
        return cls(model.kind, model.init_args(), int(getattr(model, "seed", 0)),
                   {p.name: p.data.copy() for p in model.parameters()},
                   float(best_val_loss), int(epoch))

    def to_model(self) -> Forecaster:
        model = build_model(self.kind, self.init_args, seed=self.seed)
        load_params(model, self.params)
        return model

    def save(self, path) -> None:
        manifest, offset = [], 0
        for name, arr in self.params.items():
            nbytes = arr.size * 8
            manifest.append({"name": name, "shape": list(arr.shape),
                             "offset": offset, "nbytes": nbytes})
            offset += nbytes
        header = {"kind": self.kind, "seed": self.seed, "config": self.init_args,
                  "best_val_loss": self.best_val_loss, "epoch": self.epoch,
                  "payload_bytes": offset, "params": manifest}
        with open(path, "wb") as fh:
            fh.write(f"{self.format_version}\n".encode())
            fh.write(json.dumps(header).encode() + b"\n")
            for arr in self.params.values():
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path, "rb") as fh:
            raw = fh.read()
        try:
            version_line, rest = raw.split(b"\n", 1)
            version = int(version_line)
        except ValueError:
            raise CheckpointError(f"{path}: missing format version line") from None
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"{path}: checkpoint format {version}, this build reads {FORMAT_VERSION}")
        try:
            header_line, payload = rest.split(b"\n", 1)
            header = json.loads(header_line)
            manifest = header["params"]
        except (ValueError, KeyError):
            raise CheckpointError(f"{path}: corrupt header") from None
        if len(payload) != header.get("payload_bytes"):
            raise CheckpointError(
                f"{path}: payload has {len(payload)} bytes, header declares "
                f"{header.get('payload_bytes')} (truncated file?)")
        params, expected = {}, 0
        for entry in manifest:
            shape = tuple(entry["shape"])
            nbytes = int(np.prod(shape, dtype=np.int64)) * 8
            if entry["offset"] != expected or entry["nbytes"] != nbytes:
                raise CheckpointError(f"{path}: manifest entry {entry['name']!r} is inconsistent")
            chunk = payload[expected:expected + nbytes]
            params[entry["name"]] = np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(shape)
            expected += nbytes
        if expected != len(payload):
            raise CheckpointError(f"{path}: manifest does not cover the payload")
        ckpt = cls(header["kind"], header["config"], int(header["seed"]), params,
                   float(header["best_val_loss"]), int(header["epoch"]), version)
        ckpt.to_model()  # validates names and shapes against the config
        return ckpt


def load_params(model: Forecaster, params: dict[str, np.ndarray]) -> None:
    own = model.named_parameters()
    if set(own) != set(params):
        missing = sorted(set(own) - set(params))
        extra = sorted(set(params) - set(own))
        raise CheckpointError(f"parameter mismatch: missing {missing}, unexpected {extra}")
    for name, p in own.items():
        if p.data.shape != params[name].shape:
            raise CheckpointError(
                f"{name}: checkpoint shape {params[name].shape} != model shape {p.data.shape}")
        p.data = np.array(params[name], dtype=np.float64)


def save_checkpoint(model: Forecaster, path, **meta) -> None:
    Checkpoint.from_model(model, **meta).save(path)


def load_checkpoint(path) -> Forecaster:
    return Checkpoint.load(path).to_model()


# ---------------------------------------------------------------------------
# training loop


def predict(model: Forecaster, frame, batch_size: int = 256):
    """Predictions and targets for every window of ``frame``, chronological."""
    preds, targets = [], []
    for batch in windows(frame, model.lookback, model.horizon, batch_size):
        preds.append(model(batch.inputs).data)
        targets.append(batch.targets)
    if not preds:
        raise ValueError("frame is too short for a single window")
    return np.concatenate(preds), np.concatenate(targets)


def evaluate(model: Forecaster, frame, batch_size: int = 256,
             input_transform: Callable[[np.ndarray], np.ndarray] | None = None) -> dict:
    """MSE/MAE over every window; ``input_transform`` edits inputs first."""
    sq = ab = 0.0
    count = n_windows = 0
    for batch in windows(frame, model.lookback, model.horizon, batch_size):
        inputs = batch.inputs if input_transform is None else input_transform(batch.inputs)
        err = model(inputs).data - batch.targets
        sq += float(np.sum(err * err))
        ab += float(np.sum(np.abs(err)))
        count += err.size
        n_windows += len(batch.starts)
    if count == 0:
        raise ValueError("frame is too short for a single window")
    return {"mse": sq / count, "mae": ab / count, "n_windows": n_windows}


@dataclass
class TrainResult:
    best: Checkpoint
    history: list[dict] = field(default_factory=list)


def train(model: Forecaster, train_frame: SeriesFrame, val_frame: SeriesFrame,
          cfg: TrainConfig | None = None,
          validate: Callable[[Forecaster], dict] | None = None) -> TrainResult:
    """Adam on MSE with early stopping on validation MSE.

    Stops after ``patience`` consecutive epochs without a strict improvement.
    The model is left holding the best parameters, which are also returned
    as a checkpoint.
    """
    cfg = cfg or TrainConfig()
    validate = validate or (lambda m: evaluate(m, val_frame))
    params = model.parameters()
    opt = Adam(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    shuffle_rng = substream(cfg.seed, "shuffle")
    history: list[dict] = []
    best: Checkpoint | None = None
    stale = 0
    for epoch in range(cfg.max_epochs):
        epoch_seed = int(shuffle_rng.integers(2**32))
        total, count = 0.0, 0
        for b, batch in enumerate(windows(train_frame, model.lookback, model.horizon,
                                          cfg.batch_size, shuffle_seed=epoch_seed)):
            with Tape() as tape:
                loss = mse_loss(model(batch.inputs), batch.targets)
                value = float(loss.data)
                if not np.isfinite(value):
                    raise NumericalError(epoch, b, value)
                tape.backward(loss, params)
            opt.step()
            total += value * len(batch.starts)
            count += len(batch.starts)
        metrics = validate(model)
        row = {"epoch": epoch, "train_mse": total / max(count, 1),
               "val_mse": metrics["mse"], "val_mae": metrics["mae"]}
        history.append(row)
        log.info("epoch %d train %.6f val %.6f", epoch, row["train_mse"], row["val_mse"])
        if best is None or metrics["mse"] < best.best_val_loss:
            best = Checkpoint.from_model(model, metrics["mse"], epoch)
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    load_params(model, best.params)
    return TrainResult(best, history)


def write_history(history: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_mse", "val_mse", "val_mae"])
        for row in history:
            writer.writerow([row["epoch"], repr(row["train_mse"]),
                             repr(row["val_mse"]), repr(row["val_mae"])])


def train_config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
