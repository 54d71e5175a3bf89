"""Image fields, periodic convolution, and basic signal metrics.

A *field* is a dense (height, width, channels) float64 array with finite
entries; pixel values nominally live in [0, 1] but are not clamped. All
boundary handling in this package is periodic (circular), which makes blur
operators diagonal in the 2-D DFT basis. The DFT convention is numpy's
unnormalized forward transform: the DC entry of ``fft2`` is the plain sum
over pixels.

Everything here is a pure function of its inputs; nothing mutates its
arguments, so concurrent use is safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np


def as_field(x) -> np.ndarray:
    """Validate and return ``x`` as an (H, W, C) float64 field.

    Raises ValueError on wrong rank, empty axes, or non-finite entries.
    """
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 3:
        raise ValueError(f"field must be (H, W, C), got shape {a.shape}")
    if min(a.shape) < 1:
        raise ValueError(f"field axes must be non-empty, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("field contains non-finite entries")
    return a


@dataclass(frozen=True, eq=False)
class Kernel:
    """Small 2-D filter with an explicit center tap.

    ``taps`` is a (kh, kw) float64 array; ``center`` is the (row, col) index
    of the tap that sits on the output pixel. Blur and anti-aliasing kernels
    are normalized to sum 1; that is a property of the constructors in
    :mod:`gspnp.kernels`, not of this container.
    """

    taps: np.ndarray
    center: tuple[int, int] = dataclass_field(default=(0, 0))

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        if taps.ndim != 2 or min(taps.shape) < 1:
            raise ValueError(f"kernel taps must be 2-D, got shape {taps.shape}")
        if not np.all(np.isfinite(taps)):
            raise ValueError("kernel taps contain non-finite entries")
        cr, cc = self.center
        if not (0 <= cr < taps.shape[0] and 0 <= cc < taps.shape[1]):
            raise ValueError(f"center {self.center} outside taps of shape {taps.shape}")
        taps = taps.copy()
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)
        object.__setattr__(self, "center", (int(cr), int(cc)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.taps.shape

    def sum(self) -> float:
        return float(self.taps.sum())

    def flipped(self) -> "Kernel":
        """Kernel reflected through its center (adjoint of convolution)."""
        kh, kw = self.taps.shape
        cr, cc = self.center
        return Kernel(self.taps[::-1, ::-1], (kh - 1 - cr, kw - 1 - cc))


def identity_kernel() -> Kernel:
    return Kernel(np.ones((1, 1)), (0, 0))


def kernel_spectrum(kernel: Kernel, shape_hw: tuple[int, int]) -> np.ndarray:
    """Complex (H, W) DFT diagonal of periodic convolution with ``kernel``.

    The taps are zero-padded to the field size and cyclically shifted so the
    center tap lands at the origin; ``conv_periodic`` is then multiplication
    by this array in the DFT domain, one channel at a time.
    """
    h, w = int(shape_hw[0]), int(shape_hw[1])
    kh, kw = kernel.shape
    if kh > h or kw > w:
        raise ValueError(f"kernel {kernel.shape} larger than field ({h}, {w})")
    padded = np.zeros((h, w))
    padded[:kh, :kw] = kernel.taps
    padded = np.roll(padded, (-kernel.center[0], -kernel.center[1]), axis=(0, 1))
    return np.fft.fft2(padded)


def fft2(x: np.ndarray) -> np.ndarray:
    """Per-channel 2-D DFT of a field; returns complex (H, W, C)."""
    x = as_field(x)
    return np.fft.fft2(x, axes=(0, 1))


def ifft2(spectrum: np.ndarray) -> np.ndarray:
    """Inverse of :func:`fft2`; imaginary round-off is discarded."""
    s = np.asarray(spectrum)
    if s.ndim != 3:
        raise ValueError(f"spectrum must be (H, W, C), got shape {s.shape}")
    return np.real(np.fft.ifft2(s, axes=(0, 1)))


def conv_periodic(x: np.ndarray, kernel: Kernel) -> np.ndarray:
    """Circular convolution of a field with a kernel, per channel.

    Output pixel p receives sum_t taps[t] * x[p - (t - center)] with
    periodic indexing, so the kernel's center tap aligns with p.
    """
    x = as_field(x)
    lam = kernel_spectrum(kernel, x.shape[:2])
    return ifft2(fft2(x) * lam[:, :, None])


def mse(x: np.ndarray, ref: np.ndarray) -> float:
    x = as_field(x)
    ref = as_field(ref)
    if x.shape != ref.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {ref.shape}")
    d = x - ref
    return float(np.mean(d * d))


def psnr(x: np.ndarray, ref: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB, jointly over all channels.

    A zero-MSE pair returns math.inf (documented sentinel, not an error).
    """
    if peak <= 0:
        raise ValueError(f"peak must be positive, got {peak}")
    m = mse(x, ref)
    if m == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / m)


def add_gaussian_noise(x: np.ndarray, nu: float, seed: int) -> np.ndarray:
    """Field plus i.i.d. N(0, nu^2) noise drawn from a seeded generator.

    nu = 0 returns an exact copy. Identical (seed, shape, nu) always produce
    the identical noise realization.
    """
    x = as_field(x)
    if nu < 0:
        raise ValueError(f"noise level must be >= 0, got {nu}")
    if nu == 0.0:
        return x.copy()
    rng = np.random.default_rng(seed)
    return x + nu * rng.standard_normal(x.shape)
