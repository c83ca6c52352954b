"""Linear baselines, the energy-amplification wrapper and the model registry."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import spectral
from .autodiff import Tensor
from .model import (AmplifierConfig, AmplifierModel, Forecaster, Restoration,
                    default_kernel, instance_norm, inverse_instance_norm,
                    std_decompose)
from .nn import Linear, substream


class LinearForecaster(Forecaster):
    """Instance norm, one linear map L -> horizon shared by channels, denorm.

    With ``normalize=False`` the map runs on the raw window.
    """

    kind = "linear"

    def __init__(self, channels: int, lookback: int, horizon: int, seed: int = 2021,
                 normalize: bool = True, norm_eps: float = 1e-5):
        super().__init__(channels, lookback, horizon)
        self.seed = seed
        self.normalize = normalize
        self.norm_eps = norm_eps
        self.linear = self.add_child(Linear(lookback, horizon, "linear", substream(seed, "init")))

    def init_args(self) -> dict:
        return dict(channels=self.channels, lookback=self.lookback, horizon=self.horizon,
                    normalize=self.normalize, norm_eps=self.norm_eps)

    def forward(self, x: Tensor) -> Tensor:
        if not self.normalize:
            return self.linear(x)
        z, state = instance_norm(x, self.norm_eps)
        return inverse_instance_norm(self.linear(z), state)


class DLinearForecaster(Forecaster):
    """Trend and season of the window, each through its own linear map, summed."""

    kind = "dlinear"

    def __init__(self, channels: int, lookback: int, horizon: int, seed: int = 2021,
                 ma_kernel: int | None = None, normalize: bool = False,
                 norm_eps: float = 1e-5):
        super().__init__(channels, lookback, horizon)
        self.seed = seed
        self.ma_kernel = default_kernel(lookback) if ma_kernel is None else ma_kernel
        self.normalize = normalize
        self.norm_eps = norm_eps
        rng = substream(seed, "init")
        self.trend = self.add_child(Linear(lookback, horizon, "dlinear.trend", rng))
        self.season = self.add_child(Linear(lookback, horizon, "dlinear.season", rng))

    def init_args(self) -> dict:
        return dict(channels=self.channels, lookback=self.lookback, horizon=self.horizon,
                    ma_kernel=self.ma_kernel, normalize=self.normalize,
                    norm_eps=self.norm_eps)

    def _core(self, x: Tensor) -> Tensor:
        trend, season = std_decompose(x, self.ma_kernel)
        return self.trend(trend) + self.season(season)

    def forward(self, x: Tensor) -> Tensor:
        if not self.normalize:
            return self._core(x)
        z, state = instance_norm(x, self.norm_eps)
        return inverse_instance_norm(self._core(z), state)


class CopyForecaster(Forecaster):
    """Parameter-free seasonal-naive oracle: ``y[j] = x[j mod L]``.

    Exact for any signal whose period divides the lookback.
    """

    kind = "copy"

    def init_args(self) -> dict:
        return dict(channels=self.channels, lookback=self.lookback, horizon=self.horizon)

    def forward(self, x: Tensor) -> Tensor:
        return ad.take(x, np.arange(self.horizon) % self.lookback, axis=-1)


class EATWrapper(Forecaster):
    """Energy amplification around an arbitrary inner forecaster.

    The wrapper owns instance normalization, so a norm-bearing inner model is
    switched to raw mode when ``own_norm`` is set (the default).
    """

    kind = "eat"

    def __init__(self, inner: Forecaster, seed: int = 2021, own_norm: bool = True,
                 norm_eps: float = 1e-5):
        super().__init__(inner.channels, inner.lookback, inner.horizon)
        self.inner = self.add_child(inner)
        self.seed = seed
        self.own_norm = own_norm
        self.norm_eps = norm_eps
        if own_norm and getattr(inner, "normalize", False):
            inner.normalize = False
        self.restoration = self.add_child(
            Restoration(inner.lookback, inner.horizon, substream(seed, "eat.init")))

    def init_args(self) -> dict:
        return dict(inner_kind=self.inner.kind, inner=self.inner.init_args(),
                    own_norm=self.own_norm, norm_eps=self.norm_eps)

    def forward(self, x: Tensor) -> Tensor:
        if self.own_norm:
            x, state = instance_norm(x, self.norm_eps)
        x_amp, flipped = spectral.amplify(x)
        y = self.restoration(self.inner(x_amp), flipped)
        return inverse_instance_norm(y, state) if self.own_norm else y


MODEL_KINDS = ("amplifier", "linear", "dlinear", "copy", "eat")


def build_model(kind: str, args: dict, seed: int = 2021) -> Forecaster:
    """Construct a forecaster from its ``kind`` and ``init_args()`` dict."""
    args = dict(args)
    if kind == "amplifier":
        return AmplifierModel(AmplifierConfig(**args), seed=seed)
    if kind == "linear":
        return LinearForecaster(seed=seed, **args)
    if kind == "dlinear":
        return DLinearForecaster(seed=seed, **args)
    if kind == "copy":
        return CopyForecaster(**args)
    if kind == "eat":
        inner = build_model(args.pop("inner_kind"), args.pop("inner"), seed=seed)
        return EATWrapper(inner, seed=seed, **args)
    raise ValueError(f"unknown model kind {kind!r}; valid kinds: {', '.join(MODEL_KINDS)}")
