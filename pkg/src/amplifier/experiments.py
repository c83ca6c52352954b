"""Desk-scale diagnostic experiments.

Synthetic tone signals, input low-pass degradation, loss-share and gradient
probes, ablations and prediction spectra. Every runner is deterministic in
``(seed, config)`` and returns plain rows that the CLI writes as CSV.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta

import numpy as np

from . import spectral
from .autodiff import Tape
from .baselines import EATWrapper, LinearForecaster
from .data import SeriesFrame, Splits, chrono_split, standardize, windows
from .model import AmplifierConfig, AmplifierModel, Forecaster
from .training import TrainConfig, evaluate, mse_loss, predict, train


# ---------------------------------------------------------------------------
# synthetic signals


@dataclass
class Tone:
    freq: float  # cycles over the whole series
    amp: float
    phase: float = 0.0


@dataclass
class SyntheticSpec:
    length: int
    tones: list[Tone]
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.tones = [t if isinstance(t, Tone) else Tone(*t) for t in self.tones]
        for t in self.tones:
            if not 0 <= t.freq < self.length / 2:
                raise ValueError(f"tone frequency {t.freq} must be in [0, {self.length / 2})")
            if t.amp < 0:
                raise ValueError(f"tone amplitude {t.amp} must be >= 0")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")


def _timestamps(n: int) -> list[str]:
    start = datetime(2016, 7, 1)
    return [(start + timedelta(hours=i)).strftime("%Y-%m-%d %H:%M:%S") for i in range(n)]


def gen_synthetic(spec: SyntheticSpec) -> SeriesFrame:
    """Sum of sines plus Gaussian noise, one channel."""
    n = np.arange(spec.length)
    x = np.zeros(spec.length)
    for t in spec.tones:
        x += t.amp * np.sin(2 * np.pi * t.freq * n / spec.length + t.phase)
    if spec.noise_std > 0:
        x += spec.noise_std * np.random.default_rng(spec.seed).normal(size=spec.length)
    return SeriesFrame(_timestamps(spec.length), x[None, :], ["x"])


@dataclass
class TwoToneTask:
    """A strong and a weak tone plus white noise.

    With integer ``low_bin``/``high_bin`` both tones are periodic in the
    lookback window; fractional values leak energy across every bin.

    ``placement="low-high"`` puts the strong tone at the low frequency;
    ``"high-low"`` swaps the two.
    """

    lookback: int = 96
    horizon: int = 96
    periods: int = 40
    strong_amp: float = 10.0
    weak_amp: float = 0.1
    low_bin: float = 2
    high_bin: float = 30
    noise_std: float = 0.1
    placement: str = "low-high"

    def bins(self) -> tuple[float, float]:
        """(strong, weak) cycles per lookback window; integers sit on DFT bins."""
        if self.placement == "low-high":
            return self.low_bin, self.high_bin
        if self.placement == "high-low":
            return self.high_bin, self.low_bin
        raise ValueError(f"unknown placement {self.placement!r}")

    def spec(self, seed: int) -> SyntheticSpec:
        strong, weak = self.bins()
        n = self.lookback * self.periods
        phases = np.random.default_rng([seed, 7]).uniform(0, 2 * np.pi, 2)
        scale = n // self.lookback
        return SyntheticSpec(n, [Tone(strong * scale, self.strong_amp, phases[0]),
                                 Tone(weak * scale, self.weak_amp, phases[1])],
                             self.noise_std, seed)

    def splits(self, seed: int) -> Splits:
        frame = gen_synthetic(self.spec(seed))
        return prepare(frame, self.lookback, self.horizon, (0.7, 0.1, 0.2))


def prepare(frame: SeriesFrame, lookback: int, horizon: int, ratios) -> Splits:
    splits, _ = standardize(chrono_split(frame, lookback, horizon, ratios))
    return splits


# ---------------------------------------------------------------------------
# models used by the runners


VARIANTS = ("full", "wo-eat", "wo-sci", "baseline", "baseline+eat")


def make_variant(variant: str, channels: int, lookback: int, horizon: int,
                 seed: int, **model_kw) -> Forecaster:
    if variant == "full":
        return AmplifierModel(AmplifierConfig(channels, lookback, horizon, **model_kw), seed)
    if variant == "wo-eat":
        kw = {**model_kw, "eat_enabled": False}
        return AmplifierModel(AmplifierConfig(channels, lookback, horizon, **kw), seed)
    if variant == "wo-sci":
        kw = {**model_kw, "sci_enabled": False}
        return AmplifierModel(AmplifierConfig(channels, lookback, horizon, **kw), seed)
    if variant == "baseline":
        return LinearForecaster(channels, lookback, horizon, seed=seed)
    if variant == "baseline+eat":
        return EATWrapper(LinearForecaster(channels, lookback, horizon, seed=seed), seed=seed)
    raise ValueError(f"unknown variant {variant!r}; valid variants: {', '.join(VARIANTS)}")


# ---------------------------------------------------------------------------
# low-pass filtering


def lowpass_ablation(model: Forecaster, frame: SeriesFrame, keep_fractions) -> list[dict]:
    """Test metrics when inputs are band-filtered at inference time."""
    rows = []
    for p in keep_fractions:
        if p == 1:
            metrics = evaluate(model, frame)
        else:
            metrics = evaluate(model, frame,
                               input_transform=lambda x, p=p: spectral.band_filter(x, p).data)
        rows.append({"keep_fraction": float(p), "mse": metrics["mse"], "mae": metrics["mae"]})
    return rows


# ---------------------------------------------------------------------------
# loss-share and gradient probes


def reference_bands(frame: SeriesFrame, lookback: int, horizon: int,
                    fraction: float = 0.99) -> spectral.BandPartition:
    """Bands from the mean per-bin energy of target windows in ``frame``."""
    total, count = None, 0
    for batch in windows(frame, lookback, horizon, 512):
        e = np.abs(spectral.fft(batch.targets)) ** 2
        s = e.reshape(-1, horizon).sum(axis=0)
        total = s if total is None else total + s
        count += e.shape[0] * e.shape[1]
    return spectral.BandPartition.from_energy(total / count, fraction)


@dataclass
class ProbeReport:
    bands: spectral.BandPartition
    rows: list[dict] = field(default_factory=list)
    gradient_proxy: str = "proxy: mean |dL/dW| of restoration.W columns grouped by output-bin band"

    def shares(self) -> np.ndarray:
        return np.array([[r["share_high"], r["share_low"]] for r in self.rows])


def _restoration(model: Forecaster):
    return getattr(model, "restoration", None)


def band_gradients(model: Forecaster, inputs, targets,
                   bands: spectral.BandPartition) -> tuple[float, float]:
    """Mean |dL/dW| over restoration columns whose output bin is in each band."""
    rest = _restoration(model)
    if rest is None:
        return float("nan"), float("nan")
    params = model.parameters()
    with Tape() as tape:
        tape.backward(mse_loss(model(inputs), targets), params)
    g = np.abs(rest.w_re.grad) + np.abs(rest.w_im.grad)
    hi = float(g[:, list(bands.high)].mean()) if bands.high else float("nan")
    lo = float(g[:, list(bands.low)].mean()) if bands.low else float("nan")
    for p in params:
        p.zero_grad()
    return hi, lo


def probe_row(model: Forecaster, frame: SeriesFrame, bands: spectral.BandPartition,
              epoch: int, probe_windows: int = 256) -> dict:
    preds, targets = predict(model, frame)
    split = spectral.parseval_loss_split(targets - preds, bands)
    grad_hi, grad_lo = band_gradients(model, preds_input(frame, model, probe_windows),
                                      targets[:probe_windows], bands)
    return {"epoch": epoch, "loss_high": split.high, "loss_low": split.low,
            "share_high": split.high_share, "share_low": split.low_share,
            "grad_high": grad_hi, "grad_low": grad_lo}


def preds_input(frame: SeriesFrame, model: Forecaster, limit: int) -> np.ndarray:
    batch = next(windows(frame, model.lookback, model.horizon, limit))
    return batch.inputs


def theorem_probes(model: Forecaster, splits: Splits, cfg: TrainConfig,
                   bands: spectral.BandPartition | None = None) -> ProbeReport:
    """Train ``model`` and record band loss shares and band gradients per epoch.

    Epoch ``-1`` is the untrained model. Bands default to the training
    split's target spectrum.
    """
    bands = bands or reference_bands(splits.train, model.lookback, model.horizon)
    report = ProbeReport(bands)
    report.rows.append(probe_row(model, splits.val, bands, -1))

    def validate(m):
        report.rows.append(probe_row(m, splits.val, bands, len(report.rows) - 1))
        return evaluate(m, splits.val)

    train(model, splits.train, splits.val, cfg, validate=validate)
    return report


# ---------------------------------------------------------------------------
# ablations


def boost(before: float, after: float) -> float:
    """Relative improvement in percent: (before - after) / before * 100."""
    return (before - after) / before * 100.0


BOOST_PAIRS = (("wo-eat", "full", "EAT"), ("wo-sci", "full", "SCI"),
               ("baseline", "baseline+eat", "baseline EAT"))


def ablation_run(splits: Splits, variants, cfg: TrainConfig, workers: int = 1,
                 **model_kw) -> tuple[list[dict], list[dict]]:
    """Train each variant under one seed/config; returns (rows, boosts)."""
    variants = list(variants)
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}; valid variants: {', '.join(VARIANTS)}")
    channels = splits.train.n_channels
    lookback = model_kw.pop("lookback")
    horizon = model_kw.pop("horizon")

    def run(variant):
        model = make_variant(variant, channels, lookback, horizon, cfg.seed, **model_kw)
        train(model, splits.train, splits.val, cfg)
        m = evaluate(model, splits.test)
        return {"variant": variant, "mse": m["mse"], "mae": m["mae"]}

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(run, variants))
    else:
        rows = [run(v) for v in variants]
    by_name = {r["variant"]: r for r in rows}
    boosts = []
    for before, after, label in BOOST_PAIRS:
        if before in by_name and after in by_name:
            boosts.append({"component": label,
                           "mse_boost_pct": boost(by_name[before]["mse"], by_name[after]["mse"]),
                           "mae_boost_pct": boost(by_name[before]["mae"], by_name[after]["mae"])})
    return rows, boosts


# ---------------------------------------------------------------------------
# prediction spectra


def spectrum_report(model: Forecaster, inputs, targets) -> list[dict]:
    """Mean |DFT| of truth and prediction per horizon bin, averaged over series.

    ``rel_error`` is ``|pred - truth| / truth`` on magnitudes, NaN where the
    truth has no energy.
    """
    pred = model(np.asarray(inputs)).data
    targets = np.asarray(targets)
    n = targets.shape[-1]
    truth_mag = np.abs(spectral.fft(targets)).reshape(-1, n).mean(axis=0)
    pred_mag = np.abs(spectral.fft(pred)).reshape(-1, n).mean(axis=0)
    floor = 1e-12 * max(truth_mag.max(initial=0.0), 1.0)
    rows = []
    for k in range(n):
        rel = abs(pred_mag[k] - truth_mag[k]) / truth_mag[k] if truth_mag[k] > floor else float("nan")
        rows.append({"bin": k, "truth": float(truth_mag[k]), "pred": float(pred_mag[k]),
                     "rel_error": float(rel)})
    return rows


def frame_spectrum_report(model: Forecaster, frame: SeriesFrame) -> list[dict]:
    batch = next(windows(frame, model.lookback, model.horizon, 1 << 30))
    return spectrum_report(model, batch.inputs, batch.targets)


def amplitude_ratio(rows: list[dict], k: int) -> float:
    return rows[k]["pred"] / rows[k]["truth"]


# ---------------------------------------------------------------------------
# output files


def write_rows(rows: list[dict], path) -> None:
    if not rows:
        raise ValueError("no rows to write")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(rows[0]))
        for r in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in r.values()])


def file_digest(paths) -> str:
    h = hashlib.sha256()
    for p in sorted(str(p) for p in paths if p):
        h.update(os.path.basename(p).encode())
        with open(p, "rb") as fh:
            h.update(fh.read())
    return h.hexdigest()


def write_manifest(path, command: str, config: dict, seed: int, inputs=()) -> None:
    manifest = {"command": command, "seed": seed, "config": config,
                "input_hash": file_digest(inputs) if inputs else None}
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def task_dict(task: TwoToneTask) -> dict:
    return asdict(task)
