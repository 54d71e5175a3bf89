"""Training for the gradient-step denoiser and its proximal fine-tuning.

Stage one minimizes the mean squared denoising error of D = Id - grad g over
noisy patches (the weight gradient flows through grad g, i.e. through one
differentiation of the network). Stage two adds a spectral penalty
mu * max(|||hess g(x + xi)|||, 1 - eps) per sample, estimated by power
iteration; the penalty's weight gradient is taken through the Rayleigh
quotient at the converged power-iteration vector, with that vector treated
as a constant.

Noise levels are drawn uniformly per batch (every image in a batch shares
one sigma). The optimizer is Adam with a halving learning-rate schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field, replace

import numpy as np

from . import autodiff as ad
from .denoiser import NetworkPotential, PotentialDenoiser
from .errors import NumericalError
from .field import as_field
from .fileio import atomic_write_text
from .network import SmoothNet


@dataclass
class TrainConfig:
    channels: int = 3
    widths: tuple[int, ...] = (16, 16)
    ksize: int = 5
    activation: str = "softplus"
    sigma_min: float = 0.0
    sigma_max: float = 50.0 / 255.0
    batch_size: int = 16
    patch_size: int = 32
    epochs: int = 50
    batches_per_epoch: int | None = None
    learning_rate: float = 1e-4
    lr_halve_every: int = 10
    mu: float = 1e-3
    epsilon: float = 0.05
    power_iters: int = 50
    seed: int = 0

    def validate(self) -> None:
        if not (0.0 <= self.sigma_min <= self.sigma_max):
            raise ValueError(f"need 0 <= sigma_min <= sigma_max, got [{self.sigma_min}, {self.sigma_max}]")
        if self.batch_size < 1 or self.patch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size/patch_size must be positive, epochs non-negative")
        if self.patch_size < self.ksize:
            raise ValueError(f"patch_size {self.patch_size} smaller than kernel {self.ksize}")
        if self.learning_rate <= 0 or self.lr_halve_every < 1:
            raise ValueError("learning_rate must be positive, lr_halve_every >= 1")
        if self.mu < 0 or not (0.0 < self.epsilon < 1.0):
            raise ValueError("need mu >= 0 and epsilon in (0, 1)")
        if self.power_iters < 1:
            raise ValueError(f"power_iters must be >= 1, got {self.power_iters}")


@dataclass
class Batch:
    clean: np.ndarray  # (B, C, H, W)
    noisy: np.ndarray  # clean + sigma * xi
    sigma: float


@dataclass
class EpochRow:
    epoch: int
    loss: float
    penalty_mean: float | None = None
    spec_norm_mean: float | None = None


def sample_batch(images: list[np.ndarray], config: TrainConfig, rng: np.random.Generator) -> Batch:
    """Seeded uniform patch crops; one noise level per batch."""
    ps = config.patch_size
    clean = np.empty((config.batch_size, config.channels, ps, ps))
    for b in range(config.batch_size):
        img = images[int(rng.integers(len(images)))]
        h, w, c = img.shape
        if h < ps or w < ps:
            raise ValueError(f"image {img.shape} smaller than patch size {ps}")
        if c != config.channels:
            raise ValueError(f"image has {c} channels, config says {config.channels}")
        r = int(rng.integers(h - ps + 1))
        col = int(rng.integers(w - ps + 1))
        clean[b] = np.moveaxis(img[r : r + ps, col : col + ps], 2, 0)
    sigma = float(rng.uniform(config.sigma_min, config.sigma_max))
    noisy = clean + sigma * rng.standard_normal(clean.shape)
    return Batch(clean=clean, noisy=noisy, sigma=sigma)


def _grad_g_graph(net: SmoothNet, noisy: np.ndarray, sigma: float):
    """Graph nodes (u, grad_u g) over a batch; g sums over the batch, so the
    gradient stacks the per-sample gradients."""
    u = ad.leaf(noisy)
    n = net.forward_node(u, sigma)
    r = ad.sub(u, n)
    g = ad.smul(0.5, ad.dot(r, r))
    (gu,) = ad.gradients(g, [u])
    return u, gu


def _denoise_loss_node(net: SmoothNet, batch: Batch):
    u, gu = _grad_g_graph(net, batch.noisy, batch.sigma)
    d = ad.sub(u, gu)
    e = ad.sub(d, ad.constant(batch.clean))
    loss = ad.smul(1.0 / batch.clean.shape[0], ad.dot(e, e))
    return u, gu, loss


def loss_gs(net: SmoothNet, batch: Batch) -> tuple[float, list[np.ndarray]]:
    """Mean over the batch of ||D(x + xi) - x||^2 and its weight gradient."""
    _, _, loss = _denoise_loss_node(net, batch)
    grads = ad.gradients(loss, net.param_nodes())
    return float(loss.value), [g.value for g in grads]


def _batched_power_vectors(u: ad.Node, gu: ad.Node, batch: Batch, iters: int, rng: np.random.Generator):
    """Converged per-sample power-iteration vectors for hess g at the noisy
    batch. The Hessian is block-diagonal across samples, so one batched
    apply with per-sample normalization runs all iterations at once."""

    def apply_h(v: np.ndarray) -> np.ndarray:
        s = ad.dot(gu, ad.constant(v))
        (hv,) = ad.gradients(s, [u])
        return hv.value

    bsz = batch.clean.shape[0]
    v = rng.standard_normal(batch.clean.shape)
    flat = v.reshape(bsz, -1)
    flat /= np.linalg.norm(flat, axis=1, keepdims=True)
    for _ in range(iters):
        hv = apply_h(v)
        norms = np.linalg.norm(hv.reshape(bsz, -1), axis=1)
        dead = norms == 0.0
        if np.any(dead):
            # zero Hessian block: any unit vector gives Rayleigh quotient 0
            hv = hv.copy()
            hv.reshape(bsz, -1)[dead] = v.reshape(bsz, -1)[dead]
            norms = np.where(dead, 1.0, norms)
        v = hv / norms[:, None, None, None]
    return v


def loss_prox(
    net: SmoothNet,
    batch: Batch,
    mu: float,
    epsilon: float = 0.05,
    power_iters: int = 50,
    seed: int = 0,
) -> tuple[float, list[np.ndarray], dict]:
    """lossGS plus the per-sample spectral penalty mu * max(|||hess g|||, 1 - eps).

    mu = 0 reduces exactly to :func:`loss_gs` (the penalty branch is not
    built at all). Returns (value, weight gradients, stats) with stats
    carrying the mean penalty and the mean spectral-norm estimate.
    """
    if mu < 0:
        raise ValueError(f"mu must be >= 0, got {mu}")
    u, gu, base = _denoise_loss_node(net, batch)
    if mu == 0.0:
        grads = ad.gradients(base, net.param_nodes())
        return float(base.value), [g.value for g in grads], {"penalty_mean": 0.0, "spec_norm_mean": None}

    rng = np.random.default_rng(seed)
    v = _batched_power_vectors(u, gu, batch, power_iters, rng)
    bsz = batch.clean.shape[0]
    s = ad.dot(gu, ad.constant(v))
    (hv,) = ad.gradients(s, [u])

    total = base
    floor = 1.0 - epsilon
    estimates = []
    penalties = []
    for b in range(bsz):
        mask = np.zeros_like(v)
        mask[b] = 1.0
        vb_norm2 = float(np.vdot(v[b], v[b]).real)
        q = ad.smul(1.0 / vb_norm2, ad.dot(ad.mul(hv, ad.constant(mask)), ad.constant(v)))
        pen = ad.max_const(q, floor)
        estimates.append(float(q.value))
        penalties.append(float(pen.value))
        total = ad.add(total, ad.smul(mu / bsz, pen))

    grads = ad.gradients(total, net.param_nodes())
    stats = {
        "penalty_mean": float(np.mean(penalties)),
        "spec_norm_mean": float(np.mean(estimates)),
    }
    return float(total.value), [g.value for g in grads], stats


class Adam:
    """Adam with bias correction; state is per parameter tensor."""

    def __init__(self, shapes: list[tuple], beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0

    def step(self, params: list[ad.Node], grads: list[np.ndarray], lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p.value = p.value - lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _run_epochs(
    net: SmoothNet,
    images: list[np.ndarray],
    config: TrainConfig,
    use_penalty: bool,
) -> list[EpochRow]:
    images = [as_field(im) for im in images]
    if not images:
        raise ValueError("training needs at least one image")
    rng = np.random.default_rng(config.seed)
    adam = Adam([p.value.shape for p in net.param_nodes()])
    n_batches = config.batches_per_epoch or max(1, len(images) // config.batch_size)
    rows: list[EpochRow] = []
    for epoch in range(config.epochs):
        lr = config.learning_rate * 0.5 ** (epoch // config.lr_halve_every)
        losses, pens, norms = [], [], []
        for _ in range(n_batches):
            batch = sample_batch(images, config, rng)
            if use_penalty:
                val, grads, stats = loss_prox(
                    net, batch, config.mu, config.epsilon, config.power_iters, seed=int(rng.integers(2**31))
                )
                if stats["penalty_mean"] is not None:
                    pens.append(stats["penalty_mean"])
                if stats["spec_norm_mean"] is not None:
                    norms.append(stats["spec_norm_mean"])
            else:
                val, grads = loss_gs(net, batch)
            if not np.isfinite(val):
                raise NumericalError(f"training loss became non-finite at epoch {epoch}")
            adam.step(net.param_nodes(), grads, lr)
            losses.append(val)
        rows.append(
            EpochRow(
                epoch=epoch,
                loss=float(np.mean(losses)),
                penalty_mean=float(np.mean(pens)) if pens else None,
                spec_norm_mean=float(np.mean(norms)) if norms else None,
            )
        )
    return rows


def train_gs(config: TrainConfig, images: list[np.ndarray]) -> tuple[PotentialDenoiser, list[EpochRow]]:
    """Train a gradient-step denoiser from scratch on image patches."""
    config.validate()
    net = SmoothNet(
        channels=config.channels,
        widths=config.widths,
        ksize=config.ksize,
        activation=config.activation,
        noise_channel=True,
        seed=config.seed,
    )
    rows = _run_epochs(net, images, config, use_penalty=False)
    net.meta = {
        "sigma_min": config.sigma_min,
        "sigma_max": config.sigma_max,
        "mu": 0.0,
        "epochs": float(config.epochs),
    }
    den = PotentialDenoiser(NetworkPotential(net), sigma=0.5 * (config.sigma_min + config.sigma_max))
    return den, rows


def fine_tune_prox(
    config: TrainConfig, den: PotentialDenoiser, images: list[np.ndarray]
) -> tuple[PotentialDenoiser, list[EpochRow]]:
    """Continue training with the spectral penalty; the input denoiser is not
    modified (its network is cloned)."""
    config.validate()
    core = den.core
    if not isinstance(core, NetworkPotential):
        raise ValueError("proximal fine-tuning needs a network-backed denoiser")
    net = core.net.clone()
    rows = _run_epochs(net, images, config, use_penalty=True)
    net.meta = {
        "sigma_min": config.sigma_min,
        "sigma_max": config.sigma_max,
        "mu": config.mu,
        "epochs": float(net.meta.get("epochs", 0.0) + config.epochs),
    }
    out = PotentialDenoiser(NetworkPotential(net), sigma=den.sigma, alpha=den.alpha, coercive=den.coercive)
    return out, rows


def write_train_trace(path: str, rows: list[EpochRow]) -> None:
    """CSV with columns epoch, loss, penaltyMean, specNormMean."""
    lines = ["epoch,loss,penaltyMean,specNormMean"]
    for r in rows:
        pen = "" if r.penalty_mean is None else repr(r.penalty_mean)
        nrm = "" if r.spec_norm_mean is None else repr(r.spec_norm_mean)
        lines.append(f"{r.epoch},{r.loss!r},{pen},{nrm}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def default_prox_config(config: TrainConfig) -> TrainConfig:
    """Fine-tuning defaults: 5 epochs on top of the stage-one config."""
    return replace(config, epochs=5)
