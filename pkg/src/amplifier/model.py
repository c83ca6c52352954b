"""The Amplifier forecaster and the blocks it is assembled from.

Data flow for one window ``x`` of shape ``(..., C, L)``::

    instance_norm -> amplify -> SCI -> seasonal-trend FFNs -> restore -> denorm

Every block is also usable on its own.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from . import spectral
from .autodiff import Parameter, Tensor
from .nn import FFN, Module, ffn_size, substream


class Forecaster(Module):
    """Maps ``(..., C, L)`` to ``(..., C, horizon)``."""

    kind = "abstract"

    def __init__(self, channels: int, lookback: int, horizon: int):
        super().__init__()
        self.channels = channels
        self.lookback = lookback
        self.horizon = horizon

    def init_args(self) -> dict:
        raise NotImplementedError

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def __call__(self, x) -> Tensor:
        x = ad.as_tensor(x)
        expected = (self.channels, self.lookback)
        if x.ndim < 2 or x.shape[-2:] != expected:
            raise ad.ShapeError(
                f"{self.kind}: expected input (..., {expected[0]}, {expected[1]}), got {x.shape}")
        return self.forward(x)


# ---------------------------------------------------------------------------
# instance normalization


@dataclass
class InstanceNormState:
    mean: Tensor
    std: Tensor


def instance_norm(x, eps: float = 1e-5) -> tuple[Tensor, InstanceNormState]:
    """Standardize each channel over its window; std is floored at ``eps``."""
    x = ad.as_tensor(x)
    mu = ad.mean(x, axis=-1, keepdims=True)
    # floor the variance, not the std: sqrt has no usable gradient at 0
    sigma = ad.sqrt(ad.clamp_min(ad.var(x, axis=-1, keepdims=True), eps * eps))
    return (x - mu) / sigma, InstanceNormState(mu, sigma)


def inverse_instance_norm(y, state: InstanceNormState) -> Tensor:
    return ad.as_tensor(y) * state.std + state.mean


# ---------------------------------------------------------------------------
# seasonal-trend decomposition


@lru_cache(maxsize=32)
def moving_average_matrix(length: int, kernel: int) -> np.ndarray:
    """Matrix ``M`` with ``trend = x @ M``: centered mean, edge-replicate padding."""
    if kernel % 2 == 0 or kernel < 1:
        raise ValueError(f"moving-average kernel must be odd and positive, got {kernel}")
    if kernel > length:
        raise ValueError(f"moving-average kernel {kernel} exceeds window length {length}")
    half = (kernel - 1) // 2
    m = np.zeros((length, length))
    for j in range(length):
        for offset in range(-half, half + 1):
            src = min(max(j + offset, 0), length - 1)
            m[src, j] += 1.0 / kernel
    m.setflags(write=False)
    return m


def std_decompose(x, kernel: int) -> tuple[Tensor, Tensor]:
    """Split into moving-average trend and residual season."""
    x = ad.as_tensor(x)
    trend = ad.matmul(x, moving_average_matrix(x.shape[-1], kernel))
    return trend, x - trend


# ---------------------------------------------------------------------------
# config


@dataclass
class AmplifierConfig:
    channels: int
    lookback: int
    horizon: int
    sci_enabled: bool = True
    eat_enabled: bool = True
    sci_channel_hidden: int | None = None
    ffn_hidden: int | None = None
    ma_kernel: int | None = None
    leaky_slope: float = 0.01
    norm_eps: float = 1e-5

    def __post_init__(self):
        for name in ("channels", "lookback", "horizon"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.sci_channel_hidden is None:
            self.sci_channel_hidden = max(math.ceil(self.channels / 2), 1)
        if self.ffn_hidden is None:
            self.ffn_hidden = 2 * self.lookback
        if self.ma_kernel is None:
            self.ma_kernel = default_kernel(self.lookback)
        if self.sci_channel_hidden < 1 or self.ffn_hidden < 1:
            raise ValueError("hidden sizes must be >= 1")
        if self.ma_kernel % 2 == 0 or not 1 <= self.ma_kernel <= self.lookback:
            raise ValueError(
                f"ma_kernel must be odd and <= lookback ({self.lookback}), got {self.ma_kernel}")

    def parameter_count(self) -> int:
        c, L, tau = self.channels, self.lookback, self.horizon
        hc, h = self.sci_channel_hidden, self.ffn_hidden
        total = ffn_size(c, hc, 1) + 2 * ffn_size(L, h, L) + 2 * ffn_size(L, h, tau)
        if self.eat_enabled:
            total += 2 * L * tau + 2 * tau
        return total


def default_kernel(lookback: int) -> int:
    """25, or the largest odd width that fits a shorter window."""
    if lookback >= 25:
        return 25
    return lookback if lookback % 2 else lookback - 1


# ---------------------------------------------------------------------------
# blocks


class SCIBlock(Module):
    """Semi-channel interaction: one shared pattern plus per-channel residuals."""

    def __init__(self, cfg: AmplifierConfig, rng: np.random.Generator):
        super().__init__()
        L, slope = cfg.lookback, cfg.leaky_slope
        self.compress = self.add_child(
            FFN(cfg.channels, cfg.sci_channel_hidden, 1, "sci.compress", rng, slope))
        self.common = self.add_child(FFN(L, cfg.ffn_hidden, L, "sci.common", rng, slope))
        self.specific = self.add_child(FFN(L, cfg.ffn_hidden, L, "sci.specific", rng, slope))

    def __call__(self, x: Tensor) -> Tensor:
        # channels -> 1 at every time step
        commonality = ad.transpose(self.compress(ad.transpose(x)))
        common_pattern = self.common(commonality)
        specific_pattern = self.specific(x - common_pattern)
        return common_pattern + specific_pattern


class SeasonalTrendForecaster(Module):
    def __init__(self, cfg: AmplifierConfig, rng: np.random.Generator):
        super().__init__()
        self.kernel = cfg.ma_kernel
        L, h, tau, slope = cfg.lookback, cfg.ffn_hidden, cfg.horizon, cfg.leaky_slope
        self.trend_ffn = self.add_child(FFN(L, h, tau, "forecaster.trend", rng, slope))
        self.season_ffn = self.add_child(FFN(L, h, tau, "forecaster.season", rng, slope))

    def __call__(self, x: Tensor) -> Tensor:
        trend, season = std_decompose(x, self.kernel)
        return self.trend_ffn(trend) + self.season_ffn(season)


class Restoration(Module):
    """Learned complex map from the flipped input spectrum to horizon bins.

    ``W`` is ``L x horizon`` and ``B`` has ``horizon`` entries, both shared by
    all channels and stored as real/imaginary parameter pairs.
    """

    def __init__(self, lookback: int, horizon: int, rng: np.random.Generator):
        super().__init__()
        bound = 1.0 / math.sqrt(2 * lookback)
        shape = (lookback, horizon)
        self.w_re = self.add_param(Parameter(rng.uniform(-bound, bound, shape), "restoration.W.re"))
        self.w_im = self.add_param(Parameter(rng.uniform(-bound, bound, shape), "restoration.W.im"))
        self.b_re = self.add_param(Parameter(np.zeros(horizon), "restoration.B.re"))
        self.b_im = self.add_param(Parameter(np.zeros(horizon), "restoration.B.im"))

    def extra_spectrum(self, flipped: spectral.Spectrum) -> spectral.Spectrum:
        re, im = spectral.complex_matmul(flipped.re, flipped.im, self.w_re, self.w_im)
        return spectral.Spectrum(re + self.b_re, im + self.b_im, self.w_re.shape[1])

    def __call__(self, y_amp: Tensor, flipped: spectral.Spectrum) -> Tensor:
        return restore(y_amp, flipped, self)


def restore(y_amp, flipped: spectral.Spectrum, restoration: Restoration,
            return_residue: bool = False):
    """Subtract the learned image of ``flipped`` from ``y_amp``'s spectrum."""
    extra = restoration.extra_spectrum(flipped)
    return spectral.idft(spectral.dft(ad.as_tensor(y_amp)) - extra, return_residue)


# ---------------------------------------------------------------------------
# the model


class AmplifierModel(Forecaster):
    kind = "amplifier"

    def __init__(self, config: AmplifierConfig, seed: int = 2021):
        super().__init__(config.channels, config.lookback, config.horizon)
        self.config = config
        self.seed = seed
        rng = substream(seed, "init")
        # SCI weights exist even when the block is switched off so that
        # checkpoints and parameter counts do not depend on the flag
        self.sci = self.add_child(SCIBlock(config, rng))
        self.forecaster = self.add_child(SeasonalTrendForecaster(config, rng))
        self.restoration = (
            self.add_child(Restoration(config.lookback, config.horizon, rng))
            if config.eat_enabled else None)
        names = [p.name for p in self.parameters()]
        if len(set(names)) != len(names):
            raise RuntimeError("duplicate parameter names")
        if self.num_parameters() != config.parameter_count():
            raise RuntimeError(
                f"parameter count {self.num_parameters()} != expected {config.parameter_count()}")

    def init_args(self) -> dict:
        return asdict(self.config)

    def forward(self, x: Tensor) -> Tensor:
        cfg = self.config
        z, state = instance_norm(x, cfg.norm_eps)
        flipped = None
        if cfg.eat_enabled:
            z, flipped = spectral.amplify(z)
        if cfg.sci_enabled:
            z = self.sci(z)
        y = self.forecaster(z)
        if cfg.eat_enabled:
            y = self.restoration(y, flipped)
        return inverse_instance_norm(y, state)
