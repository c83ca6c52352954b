"""CSV ingestion, chronological splits, scaling and sliding windows."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class DataError(ValueError):
    """Raised for unreadable or malformed datasets."""


@dataclass
class SeriesFrame:
    timestamps: list[str]
    values: np.ndarray  # (C, N)
    channels: list[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError(f"values must be (C, N), got shape {self.values.shape}")
        if len(self.channels) != self.values.shape[0]:
            raise DataError("channel names do not match the value rows")
        if len(self.timestamps) != self.values.shape[1]:
            raise DataError("timestamps do not match the series length")

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]

    def __len__(self) -> int:
        return self.values.shape[1]

    def rows(self, start: int, stop: int) -> "SeriesFrame":
        return SeriesFrame(self.timestamps[start:stop], self.values[:, start:stop].copy(),
                           list(self.channels))

    def with_values(self, values: np.ndarray) -> "SeriesFrame":
        return SeriesFrame(list(self.timestamps), values, list(self.channels))


def load_csv(path) -> SeriesFrame:
    """Read a ``date,<ch1>,<ch2>,...`` file into a channels-first frame."""
    if not os.path.isfile(path):
        raise DataError(f"dataset not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        if not header or header[0].strip() != "date":
            raise DataError(f"{path}: first column must be named 'date'")
        channels = [h.strip() for h in header[1:]]
        if not channels:
            raise DataError(f"{path}: no value columns")
        stamps, rows = [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {line_no} has {len(row)} fields, expected {len(header)}")
            values = []
            for col, cell in enumerate(row[1:], start=1):
                if not cell.strip():
                    raise DataError(
                        f"{path}: row {line_no}, column {col} ({header[col]!r}): missing value")
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {line_no}, column {col} ({header[col]!r}): "
                        f"not a number: {cell!r}") from None
                if not math.isfinite(v):
                    raise DataError(
                        f"{path}: row {line_no}, column {col} ({header[col]!r}): missing value")
                values.append(v)
            stamps.append(row[0])
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return SeriesFrame(stamps, np.array(rows).T, channels)


def write_csv(frame: SeriesFrame, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", *frame.channels])
        for t, column in zip(frame.timestamps, frame.values.T):
            writer.writerow([t, *(repr(float(v)) for v in column)])


# ---------------------------------------------------------------------------
# splits


PROTOCOLS = {"ett": (0.6, 0.2, 0.2), "standard": (0.7, 0.1, 0.2)}


def protocol_ratios(protocol: str, name: str = "") -> tuple[float, float, float]:
    """``auto`` picks the ETT ratios for files whose name starts with ``ETT``."""
    if protocol == "auto":
        protocol = "ett" if os.path.basename(str(name)).upper().startswith("ETT") else "standard"
    try:
        return PROTOCOLS[protocol]
    except KeyError:
        raise ValueError(f"unknown split protocol {protocol!r}") from None


@dataclass
class Splits:
    train: SeriesFrame
    val: SeriesFrame
    test: SeriesFrame
    bounds: dict[str, tuple[int, int]]


def chrono_split(frame: SeriesFrame, lookback: int, horizon: int,
                 ratios=(0.7, 0.1, 0.2)) -> Splits:
    """Contiguous train/val/test segments.

    Validation and test segments start ``lookback`` rows early so their first
    target window begins exactly at the split boundary.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1) > 1e-9:
        raise ValueError(f"split ratios must be three non-negative numbers summing to 1, got {ratios}")
    n = len(frame)
    n_train = math.floor(n * ratios[0] + 1e-9)
    n_test = math.floor(n * ratios[2] + 1e-9)
    n_val = n - n_train - n_test
    bounds = {
        "train": (0, n_train),
        "val": (max(n_train - lookback, 0), n_train + n_val),
        "test": (max(n_train + n_val - lookback, 0), n),
    }
    for name, (a, b) in bounds.items():
        own = {"train": n_train, "val": n_val, "test": n_test}[name]
        if own <= 0:
            raise ValueError(f"{name} split is empty for ratios {ratios}")
        if b - a < lookback + horizon:
            raise ValueError(
                f"{name} split has {b - a} rows, needs at least {lookback + horizon}")
    return Splits(*(frame.rows(*bounds[k]) for k in ("train", "val", "test")), bounds=bounds)


# ---------------------------------------------------------------------------
# scaling


@dataclass
class ScalerStats:
    mean: np.ndarray  # (C,)
    std: np.ndarray

    @classmethod
    def fit(cls, frame: SeriesFrame, floor: float = 1e-8) -> "ScalerStats":
        return cls(frame.values.mean(axis=1), np.maximum(frame.values.std(axis=1), floor))

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean[:, None]) / self.std[:, None]

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return values * self.std[:, None] + self.mean[:, None]

    def apply(self, frame: SeriesFrame) -> SeriesFrame:
        return frame.with_values(self.transform(frame.values))


def standardize(splits: Splits) -> tuple[Splits, ScalerStats]:
    """Scale every split with statistics from the training split only."""
    stats = ScalerStats.fit(splits.train)
    return Splits(stats.apply(splits.train), stats.apply(splits.val),
                  stats.apply(splits.test), splits.bounds), stats


# ---------------------------------------------------------------------------
# windows


@dataclass
class WindowBatch:
    inputs: np.ndarray   # (B, C, L)
    targets: np.ndarray  # (B, C, horizon)
    starts: np.ndarray   # (B,)


def window_starts(length: int, lookback: int, horizon: int) -> np.ndarray:
    return np.arange(max(length - lookback - horizon + 1, 0))


def window_count(length: int, lookback: int, horizon: int) -> int:
    return len(window_starts(length, lookback, horizon))


def windows(frame, lookback: int, horizon: int, batch_size: int = 32,
            shuffle_seed: int | None = None) -> Iterator[WindowBatch]:
    """Yield every admissible window once; the last batch may be short.

    ``shuffle_seed`` fixes a permutation of start indices; ``None`` keeps
    chronological order.
    """
    values = frame.values if isinstance(frame, SeriesFrame) else np.asarray(frame)
    starts = window_starts(values.shape[1], lookback, horizon)
    if shuffle_seed is not None:
        starts = np.random.default_rng(shuffle_seed).permutation(starts)
    if not len(starts):
        return
    view = sliding_window_view(values, lookback + horizon, axis=1)  # (C, S, L+h)
    for i in range(0, len(starts), batch_size):
        idx = starts[i:i + batch_size]
        block = np.ascontiguousarray(view[:, idx, :].transpose(1, 0, 2))
        yield WindowBatch(block[..., :lookback], block[..., lookback:], idx)
