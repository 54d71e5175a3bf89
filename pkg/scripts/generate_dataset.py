"""Regenerate the bundled 64x64 test images.

Sources are the permissively licensed sample photographs that ship with
scikit-image (astronaut, chelsea, coffee, rocket, hubble deep field,
immunohistochemistry) plus seeded synthetic textures, so the package stays
license-clean. Run from the repository root:

    python3 scripts/generate_dataset.py
"""

import pathlib

import numpy as np
from PIL import Image
from skimage import data
from skimage.transform import resize

OUT = pathlib.Path(__file__).resolve().parents[1] / "src" / "gspnp" / "data" / "images"


def to_rgb64(img: np.ndarray) -> np.ndarray:
    if img.ndim == 2:
        img = np.stack([img] * 3, axis=-1)
    h, w = img.shape[:2]
    s = min(h, w)
    top, left = (h - s) // 2, (w - s) // 2
    img = img[top:top + s, left:left + s]
    img = resize(img.astype(float) / 255.0, (64, 64, 3), anti_aliasing=True)
    return (np.clip(img, 0.0, 1.0) * 255.0).round().astype(np.uint8)


def texture(seed: int) -> np.ndarray:
    """Band-limited random field, a stand-in for natural texture patches."""
    rng = np.random.default_rng(seed)
    out = np.zeros((64, 64, 3))
    fy = np.fft.fftfreq(64)[:, None]
    fx = np.fft.fftfreq(64)[None, :]
    radius = np.sqrt(fy * fy + fx * fx)
    envelope = 1.0 / (1.0 + (radius * 24.0) ** 2)
    for c in range(3):
        spec = (rng.standard_normal((64, 64)) + 1j * rng.standard_normal((64, 64))) * envelope
        field = np.fft.ifft2(spec).real
        field = (field - field.min()) / (field.max() - field.min())
        out[..., c] = field
    return (out * 255.0).round().astype(np.uint8)


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    photos = {
        "astronaut": data.astronaut(),
        "chelsea": data.chelsea(),
        "coffee": data.coffee(),
        "rocket": data.rocket(),
        "hubble": data.hubble_deep_field(),
        "ihc": data.immunohistochemistry(),
    }
    names = []
    for name, img in photos.items():
        arr = to_rgb64(img)
        Image.fromarray(arr).save(OUT / f"{name}.png")
        names.append(name)
    for seed in range(6):
        arr = texture(seed)
        Image.fromarray(arr).save(OUT / f"texture{seed}.png")
        names.append(f"texture{seed}")
    print(f"wrote {len(names)} images to {OUT}")


if __name__ == "__main__":
    main()
