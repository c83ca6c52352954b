"""Layers and parameter plumbing shared by every forecaster."""

from __future__ import annotations

import zlib

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator derived from one root seed and a stream name."""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(zlib.crc32(name.encode()),))
    return np.random.default_rng(seq)


class Module:
    """Anything that owns parameters; registration order is stable."""

    def __init__(self):
        self._children: list[Module] = []
        self._params: list[Parameter] = []

    def add_param(self, param: Parameter) -> Parameter:
        self._params.append(param)
        return param

    def add_child(self, child: "Module") -> "Module":
        self._children.append(child)
        return child

    def parameters(self) -> list[Parameter]:
        out = list(self._params)
        for child in self._children:
            out.extend(child.parameters())
        return out

    def named_parameters(self) -> dict[str, Parameter]:
        return {p.name: p for p in self.parameters()}

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())


class Linear(Module):
    """``x @ W + b`` on the last axis, W of shape (in, out)."""

    def __init__(self, n_in: int, n_out: int, name: str, rng: np.random.Generator):
        super().__init__()
        bound = 1.0 / np.sqrt(n_in)
        self.weight = self.add_param(
            Parameter(rng.uniform(-bound, bound, (n_in, n_out)), f"{name}.weight"))
        self.bias = self.add_param(
            Parameter(rng.uniform(-bound, bound, n_out), f"{name}.bias"))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.matmul(x, self.weight) + self.bias


class FFN(Module):
    """Two linear layers with a LeakyReLU in between."""

    def __init__(self, n_in: int, hidden: int, n_out: int, name: str,
                 rng: np.random.Generator, slope: float = 0.01):
        super().__init__()
        self.slope = slope
        self.first = self.add_child(Linear(n_in, hidden, f"{name}.0", rng))
        self.second = self.add_child(Linear(hidden, n_out, f"{name}.1", rng))

    def __call__(self, x: Tensor) -> Tensor:
        return self.second(ad.leaky_relu(self.first(x), self.slope))


def ffn_size(n_in: int, hidden: int, n_out: int) -> int:
    return n_in * hidden + hidden + hidden * n_out + n_out
