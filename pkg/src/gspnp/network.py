"""Small periodic convolutional network behind the learned denoiser.

The net maps a field plus a constant noise-level channel through a few
periodic conv layers with a smooth activation between them (none after the
last). The noise channel is appended to every layer input, not only the
first, and carries the level scaled up to pixel range; at this parameter
count a single raw-scale entry point leaves the net essentially blind to
the level. Spatial size is preserved; default geometry is 5x5 taps with
widths in_channels+1 -> 16 -> 16 -> in_channels. Activations must be at least C^1
so the induced potential is differentiable: ELU for gradient-step training,
Softplus when the proximal fine-tuning (which differentiates a
Hessian-vector product) needs extra smoothness.

Weights live in persistent graph leaves; optimizers update the leaf values
in place and each loss evaluation builds a fresh graph over them.
"""

from __future__ import annotations

import struct

import numpy as np

from . import autodiff as ad
from .fileio import atomic_write_bytes

_MAGIC = b"GSPNP-NET-1\n"
_ACT_TAGS = {"elu": 0, "softplus": 1}
_TAG_ACTS = {v: k for k, v in _ACT_TAGS.items()}

# Noise levels sit an order of magnitude below pixel scale (50/255 at the
# top of the training range); the plane is scaled up so the conditioning
# input swings across the activation's nonlinear region.
NOISE_PLANE_GAIN = 5.0


class SmoothNet:
    def __init__(
        self,
        channels: int = 3,
        widths: tuple[int, ...] = (16, 16),
        ksize: int = 5,
        activation: str = "softplus",
        noise_channel: bool = True,
        seed: int = 0,
        zero_init: bool = False,
    ):
        if channels < 1:
            raise ValueError(f"channels must be >= 1, got {channels}")
        if ksize < 1 or ksize % 2 == 0:
            raise ValueError(f"ksize must be odd and positive, got {ksize}")
        if activation not in _ACT_TAGS:
            raise ValueError(f"activation must be one of {sorted(_ACT_TAGS)}, got {activation!r}")
        if len(widths) < 1:
            raise ValueError("need at least one hidden width")
        self.channels = int(channels)
        self.widths = tuple(int(w) for w in widths)
        self.ksize = int(ksize)
        self.activation = activation
        self.noise_channel = bool(noise_channel)
        self.center = (ksize // 2, ksize // 2)
        # training metadata, filled in by the training loops
        self.meta = {"sigma_min": 0.0, "sigma_max": 0.0, "mu": 0.0, "epochs": 0.0}

        extra = 1 if self.noise_channel else 0
        chain = (self.channels,) + self.widths + (self.channels,)
        rng = np.random.default_rng(seed)
        self.layers: list[tuple[ad.Node, ad.Node]] = []
        for lin, lout in zip(chain[:-1], chain[1:]):
            lin = lin + extra
            if zero_init:
                w = np.zeros((lout, lin, ksize, ksize))
            else:
                std = np.sqrt(2.0 / ((lin + lout) * ksize * ksize))
                w = std * rng.standard_normal((lout, lin, ksize, ksize))
            b = np.zeros(lout)
            self.layers.append((ad.leaf(w), ad.leaf(b)))

    # ------------------------------------------------------------ forward

    def forward_node(self, x: ad.Node, sigma: float) -> ad.Node:
        """Graph for N_sigma(x); x is (B, C, H, W)."""
        if sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {sigma}")
        h = x
        bsz, _, hh, ww = x.value.shape
        smap = np.full((bsz, 1, hh, ww), float(sigma) * NOISE_PLANE_GAIN)
        last = len(self.layers) - 1
        for i, (w, b) in enumerate(self.layers):
            if self.noise_channel:
                h = ad.concat_channel_const(h, smap)
            h = ad.conv(h, w, b, self.center)
            if i < last:
                h = ad.elementwise(self.activation, 0, h)
        return h

    def forward_array(self, x: np.ndarray, sigma: float) -> np.ndarray:
        """Plain evaluation of N_sigma on an (B, C, H, W) array."""
        return self.forward_node(ad.constant(x), sigma).value

    # ------------------------------------------------------------ parameters

    def param_nodes(self) -> list[ad.Node]:
        out = []
        for w, b in self.layers:
            out.extend((w, b))
        return out

    def num_params(self) -> int:
        return sum(p.value.size for p in self.param_nodes())

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.value.ravel() for p in self.param_nodes()])

    def set_flat(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.num_params():
            raise ValueError(f"expected {self.num_params()} parameters, got {vec.size}")
        at = 0
        for p in self.param_nodes():
            n = p.value.size
            p.value = vec[at : at + n].reshape(p.value.shape).copy()
            at += n

    def clone(self) -> "SmoothNet":
        other = SmoothNet(
            self.channels, self.widths, self.ksize, self.activation, self.noise_channel, seed=0
        )
        other.set_flat(self.get_flat())
        other.meta = dict(self.meta)
        return other

    # ------------------------------------------------------------ model files
    #
    # Layout (little-endian throughout):
    #   magic "GSPNP-NET-1\n"
    #   uint8  activation tag, uint8 noise-channel flag
    #   uint32 channels, uint32 ksize, uint32 n_layers
    #   per layer: uint32 cout, uint32 cin
    #   float64 x4 metadata: sigma_min, sigma_max, mu, epochs
    #   per layer: weights (cout*cin*k*k float64) then bias (cout float64)

    def save(self, path: str) -> None:
        parts = [_MAGIC]
        parts.append(struct.pack("<BB", _ACT_TAGS[self.activation], int(self.noise_channel)))
        parts.append(struct.pack("<III", self.channels, self.ksize, len(self.layers)))
        for w, _ in self.layers:
            parts.append(struct.pack("<II", w.value.shape[0], w.value.shape[1]))
        parts.append(
            struct.pack(
                "<dddd",
                float(self.meta.get("sigma_min", 0.0)),
                float(self.meta.get("sigma_max", 0.0)),
                float(self.meta.get("mu", 0.0)),
                float(self.meta.get("epochs", 0.0)),
            )
        )
        for w, b in self.layers:
            parts.append(np.ascontiguousarray(w.value, dtype="<f8").tobytes())
            parts.append(np.ascontiguousarray(b.value, dtype="<f8").tobytes())
        atomic_write_bytes(path, b"".join(parts))

    @classmethod
    def load(cls, path: str) -> "SmoothNet":
        with open(path, "rb") as f:
            raw = f.read()
        if not raw.startswith(_MAGIC):
            raise ValueError(f"{path}: not a denoiser model file")
        at = len(_MAGIC)
        act_tag, noise_flag = struct.unpack_from("<BB", raw, at)
        at += 2
        channels, ksize, n_layers = struct.unpack_from("<III", raw, at)
        at += 12
        dims = []
        for _ in range(n_layers):
            cout, cin = struct.unpack_from("<II", raw, at)
            at += 8
            dims.append((cout, cin))
        sigma_min, sigma_max, mu, epochs = struct.unpack_from("<dddd", raw, at)
        at += 32
        if act_tag not in _TAG_ACTS:
            raise ValueError(f"{path}: unknown activation tag {act_tag}")
        widths = tuple(cout for cout, _ in dims[:-1])
        net = cls(
            channels=channels,
            widths=widths,
            ksize=ksize,
            activation=_TAG_ACTS[act_tag],
            noise_channel=bool(noise_flag),
            seed=0,
        )
        for (w, b), (cout, cin) in zip(net.layers, dims):
            if w.value.shape[:2] != (cout, cin):
                raise ValueError(f"{path}: layer table inconsistent with geometry")
            n = cout * cin * ksize * ksize
            w.value = np.frombuffer(raw, dtype="<f8", count=n, offset=at).reshape(w.value.shape).copy()
            at += n * 8
            b.value = np.frombuffer(raw, dtype="<f8", count=cout, offset=at).copy()
            at += cout * 8
        if at != len(raw):
            raise ValueError(f"{path}: trailing bytes in model file")
        net.meta = {"sigma_min": sigma_min, "sigma_max": sigma_max, "mu": mu, "epochs": epochs}
        return net
