"""Blur kernel constructors and the benchmark kernel bank."""

from __future__ import annotations

import math

import numpy as np

from .field import Kernel


def gaussian_kernel(size: int, sigma_x: float, sigma_y: float | None = None,
                    angle: float = 0.0) -> Kernel:
    """Normalized (possibly anisotropic, rotated) Gaussian on a size x size grid.

    ``angle`` is in radians, rotating the sigma_x axis counterclockwise.
    size = 1 gives the identity kernel regardless of the widths.
    """
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 1, got {size}")
    if sigma_y is None:
        sigma_y = sigma_x
    if sigma_x <= 0 or sigma_y <= 0:
        raise ValueError("Gaussian widths must be positive")
    if size == 1:
        return Kernel(taps=np.ones((1, 1)), center=(0, 0))
    c = size // 2
    ii, jj = np.meshgrid(np.arange(size) - c, np.arange(size) - c, indexing="ij")
    ca, sa = math.cos(angle), math.sin(angle)
    # rotate coordinates into the kernel frame, then apply axis-aligned widths
    u = ca * jj + sa * ii
    v = -sa * jj + ca * ii
    taps = np.exp(-0.5 * ((u / sigma_x) ** 2 + (v / sigma_y) ** 2))
    taps /= taps.sum()
    return Kernel(taps=taps, center=(c, c))


def motion_kernel(size: int, seed: int, length: int = 40, wiggle: float = 0.6) -> Kernel:
    """Pseudo motion blur: a seeded random walk splatted bilinearly on the grid.

    The walk keeps a slowly turning heading so trajectories look like camera
    shake rather than diffusion. length = 1 collapses to the identity kernel.
    Always normalized to unit sum.
    """
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 1, got {size}")
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    c = size // 2
    taps = np.zeros((size, size))
    if length == 1 or size == 1:
        taps = np.zeros((size, size))
        taps[c, c] = 1.0
        return Kernel(taps=taps, center=(c, c))
    rng = np.random.default_rng(seed)
    pos = np.array([c, c], dtype=float)
    heading = rng.uniform(0.0, 2.0 * math.pi)
    step = max(0.25, (size - 1) / (2.0 * length) * 3.0)
    for _ in range(length):
        r, q = pos
        r = min(max(r, 0.0), size - 1.0)
        q = min(max(q, 0.0), size - 1.0)
        r0, q0 = int(r), int(q)
        fr, fq = r - r0, q - q0
        r1, q1 = min(r0 + 1, size - 1), min(q0 + 1, size - 1)
        taps[r0, q0] += (1 - fr) * (1 - fq)
        taps[r0, q1] += (1 - fr) * fq
        taps[r1, q0] += fr * (1 - fq)
        taps[r1, q1] += fr * fq
        heading += rng.normal(0.0, wiggle)
        pos = pos + step * np.array([math.sin(heading), math.cos(heading)])
        # reflect off the grid edges to keep mass inside the support
        for a in range(2):
            if pos[a] < 0:
                pos[a] = -pos[a]
                heading += math.pi / 2
            elif pos[a] > size - 1:
                pos[a] = 2 * (size - 1) - pos[a]
                heading += math.pi / 2
    taps /= taps.sum()
    return Kernel(taps=taps, center=(c, c))


def kernel_bank(size: int = 9) -> list[Kernel]:
    """Sixteen benchmark kernels: 4 isotropic Gaussians, 4 anisotropic
    rotated Gaussians, 8 seeded motion trajectories."""
    bank = [gaussian_kernel(size, s) for s in (0.6, 1.0, 1.5, 2.0)]
    bank += [
        gaussian_kernel(size, 1.8, 0.6, angle=0.0),
        gaussian_kernel(size, 1.8, 0.6, angle=math.pi / 4),
        gaussian_kernel(size, 2.4, 0.8, angle=math.pi / 2),
        gaussian_kernel(size, 2.4, 0.8, angle=3 * math.pi / 4),
    ]
    bank += [motion_kernel(size, seed) for seed in range(8)]
    return bank
