"""Bundled evaluation images and synthetic texture generation."""

from __future__ import annotations

from importlib import resources

import numpy as np

from .fileio import load_png


def desk_images() -> dict[str, np.ndarray]:
    """The bundled 64x64 RGB set, name -> (64, 64, 3) field in [0, 1].

    Sorted by name so iteration order is stable across platforms.
    """
    images: dict[str, np.ndarray] = {}
    root = resources.files("gspnp").joinpath("data/images")
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if not entry.name.endswith(".png"):
            continue
        with resources.as_file(entry) as path:
            images[entry.name[:-4]] = load_png(str(path))
    if not images:
        raise RuntimeError("bundled image data is missing; reinstall the package")
    return images


def synthetic_texture(seed: int, size: int = 64, channels: int = 3) -> np.ndarray:
    """Seeded band-limited random field in [0, 1], shape (size, size, channels).

    Spectra decay like 1/(1 + r^2), giving patches with natural-image-like
    correlation instead of white noise.
    """
    if size < 2:
        raise ValueError(f"size must be >= 2, got {size}")
    if channels < 1:
        raise ValueError(f"channels must be >= 1, got {channels}")
    rng = np.random.default_rng(seed)
    out = np.zeros((size, size, channels))
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.fftfreq(size)[None, :]
    envelope = 1.0 / (1.0 + (np.sqrt(fy * fy + fx * fx) * 24.0) ** 2)
    for c in range(channels):
        spec = (rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))) * envelope
        field = np.fft.ifft2(spec).real
        lo, hi = field.min(), field.max()
        out[..., c] = (field - lo) / (hi - lo) if hi > lo else 0.5
    return out
