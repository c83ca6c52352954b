"""Fourier transforms, spectrum flipping and energy bookkeeping.

Conventions: the forward transform is unnormalized,
``X[k] = sum_n x[n] exp(-2j pi k n / L)``, and the inverse carries ``1/L``.
Transforms act on the last axis, so ``(C, L)`` and ``(B, C, L)`` both work.
Complex values travel as a pair of real tensors (``re``, ``im``).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


# ---------------------------------------------------------------------------
# raw complex transforms on numpy arrays


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@lru_cache(maxsize=None)
def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=None)
def _twiddles(size: int) -> np.ndarray:
    half = size // 2
    return np.exp(-2j * np.pi * np.arange(half) / size)


NAIVE_MAX = 1024


@lru_cache(maxsize=16)
def _dft_matrix(n: int) -> np.ndarray:
    # reduce k*n mod L in integers so the phase stays exact for large L
    kn = np.outer(np.arange(n), np.arange(n)) % n
    return np.exp(-2j * np.pi * kn / n)


def _fft_radix2(z: np.ndarray) -> np.ndarray:
    n = z.shape[-1]
    lead = z.shape[:-1]
    a = z[..., _bit_reversal(n)]
    size = 2
    while size <= n:
        half = size // 2
        a = a.reshape(*lead, n // size, size)
        even = a[..., :half]
        odd = a[..., half:] * _twiddles(size)
        a = np.concatenate([even + odd, even - odd], axis=-1)
        size *= 2
    return a.reshape(*lead, n)


@lru_cache(maxsize=16)
def _chirp(n: int) -> tuple[np.ndarray, np.ndarray, int]:
    m = 1 << (2 * n - 2).bit_length()
    k = np.arange(n)
    w = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
    kernel = np.zeros(m, dtype=np.complex128)
    kernel[:n] = np.conj(w)
    kernel[m - n + 1:] = np.conj(w[1:])[::-1]
    return w, _fft_radix2(kernel), m


def _fft_bluestein(z: np.ndarray) -> np.ndarray:
    """Arbitrary-length DFT as a chirp convolution of power-of-two transforms."""
    n = z.shape[-1]
    w, kernel_hat, m = _chirp(n)
    padded = np.zeros(z.shape[:-1] + (m,), dtype=np.complex128)
    padded[..., :n] = z * w
    conv = np.conj(_fft_radix2(np.conj(_fft_radix2(padded) * kernel_hat))) / m
    return conv[..., :n] * w


def fft(z: np.ndarray) -> np.ndarray:
    """Forward DFT along the last axis.

    Radix-2 for powers of two, the O(L^2) matrix product up to ``NAIVE_MAX``,
    and a chirp-z transform beyond that.
    """
    z = np.asarray(z, dtype=np.complex128)
    n = z.shape[-1]
    if n == 0:
        raise ValueError("fft: empty transform axis")
    if _is_pow2(n):
        return _fft_radix2(z)
    if n <= NAIVE_MAX:
        return z @ _dft_matrix(n).T
    return _fft_bluestein(z)


def ifft(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.complex128)
    return np.conj(fft(np.conj(z))) / z.shape[-1]


# ---------------------------------------------------------------------------
# differentiable transforms


@dataclass
class Spectrum:
    """Full-length spectrum; ``re``/``im`` have shape ``(..., K)``."""

    re: Tensor
    im: Tensor
    length: int

    def __post_init__(self):
        if self.re.shape != self.im.shape:
            raise ad.ShapeError(
                f"spectrum: re shape {self.re.shape} != im shape {self.im.shape}")

    @property
    def shape(self):
        return self.re.shape

    def complex(self) -> np.ndarray:
        return self.re.data + 1j * self.im.data

    @classmethod
    def from_complex(cls, z: np.ndarray) -> "Spectrum":
        z = np.asarray(z)
        return cls(Tensor(z.real.copy()), Tensor(z.imag.copy()), z.shape[-1])

    def __add__(self, other: "Spectrum") -> "Spectrum":
        return Spectrum(self.re + other.re, self.im + other.im, self.length)

    def __sub__(self, other: "Spectrum") -> "Spectrum":
        return Spectrum(self.re - other.re, self.im - other.im, self.length)


def dft(x: Tensor, imag: Tensor | None = None) -> Spectrum:
    """Unnormalized DFT of a real (or ``x + i*imag``) signal along the last axis."""
    x = ad.as_tensor(x)
    if x.ndim < 1 or x.shape[-1] < 1:
        raise ad.ShapeError(f"dft: needs a non-empty last axis, got shape {x.shape}")
    n = x.shape[-1]
    if imag is None:
        inputs = (x,)
        z = fft(x.data)
    else:
        imag = ad.as_tensor(imag)
        if imag.shape != x.shape:
            raise ad.ShapeError(f"dft: re shape {x.shape} != im shape {imag.shape}")
        inputs = (x, imag)
        z = fft(x.data + 1j * imag.data)

    def backward(g_re, g_im):
        # adjoint of F is conj(F)^T = L * ifft
        back = ifft(g_re + 1j * g_im) * n
        if imag is None:
            return (back.real,)
        return back.real, back.imag

    re, im = ad.custom("dft", inputs, (z.real.copy(), z.imag.copy()), backward)
    return Spectrum(re, im, n)


def idft_pair(s: Spectrum) -> tuple[Tensor, Tensor]:
    """Inverse transform returning real and imaginary time-domain parts."""
    n = s.shape[-1]
    z = ifft(s.complex())

    def backward(g_re, g_im):
        back = fft(g_re + 1j * g_im) / n
        return back.real, back.imag

    return ad.custom("idft", (s.re, s.im), (z.real.copy(), z.imag.copy()), backward)


def idft(s: Spectrum, return_residue: bool = False):
    """Real part of the inverse transform.

    With ``return_residue`` the peak discarded imaginary magnitude is returned
    too; it is ~0 for conjugate-symmetric input.
    """
    re, im = idft_pair(s)
    if return_residue:
        return re, float(np.abs(im.data).max(initial=0.0))
    return re


@lru_cache(maxsize=None)
def flip_index(n: int) -> np.ndarray:
    return (-np.arange(n)) % n


def flip_spectrum(s: Spectrum) -> Spectrum:
    """``out[k] = s[(L - k) mod L]``; DC stays in place."""
    idx = flip_index(s.shape[-1])
    return Spectrum(ad.take(s.re, idx, axis=-1), ad.take(s.im, idx, axis=-1), s.length)


def energy(s: Spectrum) -> tuple[Tensor, Tensor]:
    """Return ``(total, per_bin)``; total sums |bin|^2 over the last axis."""
    per_bin = ad.square(s.re) + ad.square(s.im)
    return per_bin.sum(axis=-1), per_bin


def amplify(x: Tensor) -> tuple[Tensor, Spectrum]:
    """Add the flipped spectrum to the signal's own spectrum.

    Returns the amplified series and the flipped spectrum, which the
    restoration step later needs. For real input this equals
    ``x[n] + x[(L - n) mod L]``.
    """
    spec = dft(x)
    flipped = flip_spectrum(spec)
    return idft(spec + flipped), flipped


def complex_matmul(re: Tensor, im: Tensor, w_re: Tensor, w_im: Tensor) -> tuple[Tensor, Tensor]:
    """(re + i im) @ (w_re + i w_im) with four real products."""
    out_re = ad.matmul(re, w_re) - ad.matmul(im, w_im)
    out_im = ad.matmul(re, w_im) + ad.matmul(im, w_re)
    return out_re, out_im


# ---------------------------------------------------------------------------
# band partitions and Parseval split


@dataclass(frozen=True)
class BandPartition:
    """Disjoint split of ``length`` bin indices into high- and low-energy sets."""

    high: tuple[int, ...]
    low: tuple[int, ...]
    length: int
    criterion: str = "explicit"

    def __post_init__(self):
        hi, lo = set(self.high), set(self.low)
        if hi & lo:
            raise ValueError(f"band partition overlaps on bins {sorted(hi & lo)}")
        if hi | lo != set(range(self.length)):
            raise ValueError("band partition must cover every bin exactly once")
        if not self.high and not self.low:
            raise ValueError("band partition is empty")

    @classmethod
    def explicit(cls, high, length: int) -> "BandPartition":
        high = tuple(sorted(int(k) for k in high))
        low = tuple(k for k in range(length) if k not in set(high))
        return cls(high, low, length)

    @classmethod
    def from_energy(cls, per_bin: np.ndarray, fraction: float = 0.99) -> "BandPartition":
        """Smallest set of mirror-paired bins holding ``fraction`` of non-DC energy.

        DC is ranked separately: it joins the high set only if it does not
        undercut the largest energy left in the low set.
        """
        per_bin = np.asarray(per_bin, dtype=np.float64)
        n = per_bin.shape[-1]
        groups = mirror_groups(n)[1:]
        group_energy = np.array([per_bin[list(g)].sum() for g in groups])
        total = group_energy.sum()
        high: list[int] = []
        if total > 0:
            order = np.argsort(-group_energy, kind="stable")
            acc = 0.0
            for gi in order:
                if acc >= fraction * total:
                    break
                high.extend(groups[gi])
                acc += group_energy[gi]
        low_non_dc = [k for k in range(1, n) if k not in set(high)]
        low_max = per_bin[low_non_dc].max(initial=0.0)
        if n and per_bin[0] > 0 and per_bin[0] >= low_max:
            high.append(0)
        part = cls.explicit(high, n)
        return cls(part.high, part.low, n, f"energy>={fraction:g}")


@lru_cache(maxsize=None)
def mirror_groups(n: int) -> tuple[tuple[int, ...], ...]:
    """Bins grouped with their mirror ``L - k``; DC (and Nyquist) stand alone."""
    groups = [(0,)] if n else []
    for k in range(1, n // 2 + 1):
        mirror = n - k
        groups.append((k,) if mirror == k else (k, mirror))
    return tuple(groups)


@dataclass(frozen=True)
class LossSplit:
    high: float
    low: float

    @property
    def total(self) -> float:
        return self.high + self.low

    @property
    def high_share(self) -> float:
        return self.high / self.total if self.total > 0 else 0.0

    @property
    def low_share(self) -> float:
        return self.low / self.total if self.total > 0 else 0.0


def parseval_loss_split(err, bands: BandPartition) -> LossSplit:
    """Split the summed squared error of ``err`` (last axis = time) by band."""
    err = np.asarray(ad.as_tensor(err).data)
    n = err.shape[-1]
    if bands.length != n:
        raise ValueError(f"band partition has {bands.length} bins, error has {n}")
    power = np.abs(fft(err)) ** 2 / n
    per_bin = power.reshape(-1, n).sum(axis=0)
    high = float(per_bin[list(bands.high)].sum()) if bands.high else 0.0
    low = float(per_bin[list(bands.low)].sum()) if bands.low else 0.0
    return LossSplit(high, low)


def band_filter(x, keep_fraction: float) -> Tensor:
    """Zero the weakest bins of each series, keeping ``keep_fraction`` of them.

    Bins are ranked per series by energy in mirror pairs so the output stays
    real; pairs are kept strongest-first until the kept bin count reaches
    ``ceil(keep_fraction * L)``.
    """
    if not 0 < keep_fraction <= 1:
        raise ValueError(f"keep_fraction must be in (0, 1], got {keep_fraction}")
    data = np.asarray(ad.as_tensor(x).data)
    n = data.shape[-1]
    if keep_fraction == 1:
        return Tensor(data.copy())
    z = fft(data)
    groups = mirror_groups(n)
    sizes = np.array([len(g) for g in groups])
    member = np.zeros((len(groups), n))
    for gi, g in enumerate(groups):
        member[gi, list(g)] = 1.0
    group_energy = (np.abs(z) ** 2) @ member.T
    order = np.argsort(-group_energy, axis=-1, kind="stable")
    ranked_sizes = sizes[order]
    kept_before = np.cumsum(ranked_sizes, axis=-1) - ranked_sizes
    budget = int(np.ceil(keep_fraction * n - 1e-9))
    keep_ranked = kept_before < budget
    keep_group = np.zeros_like(keep_ranked)
    np.put_along_axis(keep_group, order, keep_ranked, axis=-1)
    mask = keep_group.astype(np.float64) @ member
    return Tensor(ifft(z * mask).real)
