"""File formats: PNG and PFM images, kernel text files, binary masks.

PNG covers 8-bit gray/RGB and 16-bit grayscale, rescaled to [0, 1] on load
and quantized on save. PFM (portable float map, little-endian, scale -1.0)
carries raw float32 values for lossless-at-float32 fixtures. Kernels travel
as whitespace text with a "rows cols centerRow centerCol" header line.
"""

from __future__ import annotations

import os
import tempfile

import numpy as np
from PIL import Image

from .field import Kernel, as_field


def atomic_write_bytes(path: str, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


# ---------------------------------------------------------------- PNG


def load_png(path: str) -> np.ndarray:
    """Load a PNG as an (H, W, C) float64 field in [0, 1].

    8-bit images divide by 255; 16-bit grayscale divides by 65535. Alpha
    channels are dropped.
    """
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I;16L", "I"):
            a = np.asarray(im, dtype=np.float64) / 65535.0
            a = a[:, :, None]
        else:
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB" if ("A" in im.mode or im.mode == "P") else "L")
            a = np.asarray(im, dtype=np.float64) / 255.0
            if a.ndim == 2:
                a = a[:, :, None]
            elif a.shape[2] == 4:
                a = a[:, :, :3]
    return as_field(a)


def save_png(path: str, x: np.ndarray, bitdepth: int = 8) -> None:
    """Save a field as PNG; values are clipped to [0, 1] before quantizing.

    bitdepth 16 is supported for single-channel fields only.
    """
    x = as_field(x)
    c = np.clip(x, 0.0, 1.0)
    if bitdepth == 8:
        q = np.round(c * 255.0).astype(np.uint8)
        im = Image.fromarray(q[:, :, 0], "L") if x.shape[2] == 1 else Image.fromarray(q, "RGB")
    elif bitdepth == 16:
        if x.shape[2] != 1:
            raise ValueError("16-bit PNG output is grayscale only")
        q = np.round(c[:, :, 0] * 65535.0).astype(np.uint16)
        im = Image.fromarray(q)  # uint16 maps to mode I;16
    else:
        raise ValueError(f"bitdepth must be 8 or 16, got {bitdepth}")
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".png")
    os.close(fd)
    try:
        im.save(tmp, format="PNG")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------- PFM


def save_pfm(path: str, x: np.ndarray) -> None:
    """Save a 1- or 3-channel field as little-endian PFM (scale -1.0).

    PFM stores float32 bottom row first; round trips are bit-exact at
    float32 precision.
    """
    x = as_field(x)
    if x.shape[2] not in (1, 3):
        raise ValueError(f"PFM supports 1 or 3 channels, got {x.shape[2]}")
    header = ("Pf\n" if x.shape[2] == 1 else "PF\n").encode("ascii")
    h, w = x.shape[:2]
    header += f"{w} {h}\n".encode("ascii") + b"-1.0\n"
    data = np.flipud(x).astype("<f4")
    if x.shape[2] == 1:
        data = data[:, :, 0]
    atomic_write_bytes(path, header + data.tobytes())


def load_pfm(path: str) -> np.ndarray:
    """Load a PFM file as an (H, W, C) float64 field."""
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic == b"PF":
            channels = 3
        elif magic == b"Pf":
            channels = 1
        else:
            raise ValueError(f"not a PFM file: magic {magic!r}")
        dims = f.readline().split()
        w, h = int(dims[0]), int(dims[1])
        scale = float(f.readline().strip())
        dtype = "<f4" if scale < 0 else ">f4"
        count = h * w * channels
        raw = np.frombuffer(f.read(count * 4), dtype=dtype, count=count)
    a = raw.reshape(h, w, channels).astype(np.float64)
    if abs(scale) not in (0.0, 1.0):
        a = a * abs(scale)
    return as_field(np.flipud(a))


# ---------------------------------------------------------------- kernels


def save_kernel(path: str, kernel: Kernel) -> None:
    """Text format: header "rows cols centerRow centerCol", then tap rows."""
    kh, kw = kernel.shape
    cr, cc = kernel.center
    lines = [f"{kh} {kw} {cr} {cc}"]
    for row in kernel.taps:
        lines.append(" ".join(repr(float(v)) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_kernel(path: str) -> Kernel:
    with open(path, "r", encoding="utf-8") as f:
        tokens = f.read().split()
    if len(tokens) < 4:
        raise ValueError(f"kernel file {path} missing header")
    kh, kw, cr, cc = (int(t) for t in tokens[:4])
    taps = np.array([float(t) for t in tokens[4:]], dtype=np.float64)
    if taps.size != kh * kw:
        raise ValueError(f"kernel file {path}: expected {kh * kw} taps, got {taps.size}")
    return Kernel(taps.reshape(kh, kw), (cr, cc))


# ---------------------------------------------------------------- masks


def save_mask(path: str, mask: np.ndarray) -> None:
    """Save a boolean (H, W) mask as an 8-bit PNG (255 = observed)."""
    m = np.asarray(mask)
    if m.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {m.shape}")
    save_png(path, m.astype(np.float64)[:, :, None])


def load_mask(path: str) -> np.ndarray:
    a = load_png(path)
    return a[:, :, 0] >= 0.5
