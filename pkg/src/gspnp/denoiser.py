"""Gradient-step denoisers D = Id - grad g and their induced potentials.

The potential g_sigma(x) = 1/2 ||x - N_sigma(x)||^2 comes either from a
SmoothNet (learned) or from a linear map N(x) = A x with symmetric A
(analytic, used as a verification oracle: every quantity has a dense closed
form). The denoiser is D_sigma = Id - grad g_sigma; with relaxation
0 < alpha <= 1 the potential is scaled, D^alpha = Id - alpha grad g_sigma.

When grad g_sigma is L-Lipschitz with L < 1, D_sigma is the proximal map of
an (L/(L+1))-weakly-convex potential phi; phi is only ever evaluated through
its pre-image form phi(D(z)) = g(z) - 1/2 ||z - D(z)||^2 (additive constant
fixed to zero), which is what the fixed-point algorithms monitor.

A coercive variant adds 1/2 ||x - proj_C(x)||^2 to the potential, C = [-1, 2]
per entry, which pulls far-out iterates back toward the pixel range.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import UnsupportedOperationError
from .field import as_field
from .network import SmoothNet
from .spectral import power_iteration

_BOX_LO, _BOX_HI = -1.0, 2.0


def _to_net(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.moveaxis(x, 2, 0))[None]


def _from_net(a: np.ndarray) -> np.ndarray:
    return np.moveaxis(a[0], 0, 2)


class NetworkPotential:
    """g_sigma(x) = 1/2 ||x - N_sigma(x)||^2 for a SmoothNet N."""

    def __init__(self, net: SmoothNet):
        self.net = net

    @property
    def channels(self) -> int:
        return self.net.channels

    def _g_graph(self, x: np.ndarray, sigma: float):
        x_leaf = ad.leaf(_to_net(x))
        n = self.net.forward_node(x_leaf, sigma)
        r = ad.sub(x_leaf, n)
        g = ad.smul(0.5, ad.dot(r, r))
        return x_leaf, n, g

    def g(self, x: np.ndarray, sigma: float) -> float:
        _, _, g = self._g_graph(x, sigma)
        return float(g.value)

    def g_and_grad(self, x: np.ndarray, sigma: float) -> tuple[float, np.ndarray]:
        x_leaf, _, g = self._g_graph(x, sigma)
        (gx,) = ad.gradients(g, [x_leaf])
        return float(g.value), _from_net(gx.value)

    def grad(self, x: np.ndarray, sigma: float) -> np.ndarray:
        return self.g_and_grad(x, sigma)[1]

    def hvp_operator(self, x: np.ndarray, sigma: float):
        """v -> hess(g_sigma)(x) v; the graph over x is built once."""
        x_leaf, _, g = self._g_graph(x, sigma)
        (gx,) = ad.gradients(g, [x_leaf])

        def hvp(v: np.ndarray) -> np.ndarray:
            s = ad.dot(gx, ad.constant(_to_net(v)))
            (hv,) = ad.gradients(s, [x_leaf])
            return _from_net(hv.value)

        return hvp

    def n_apply(self, x: np.ndarray, sigma: float) -> np.ndarray:
        return _from_net(self.net.forward_array(_to_net(x), sigma))

    def expansion(self, x: np.ndarray, sigma: float) -> np.ndarray:
        """N(x) + J_N(x)^T (x - N(x)) with the residual held constant.

        Computationally independent route to Id - grad g (the residual is not
        differentiated through here), used as a consistency check.
        """
        x_leaf = ad.leaf(_to_net(x))
        n = self.net.forward_node(x_leaf, sigma)
        r_const = ad.constant(x_leaf.value - n.value)
        s = ad.dot(n, r_const)
        (jtr,) = ad.gradients(s, [x_leaf])
        return _from_net(n.value + jtr.value)


class LinearPotential:
    """g(x) = 1/2 ||(I - A) x||^2 for dense symmetric A on flattened fields.

    grad g = (I - A)^2 x, so the denoiser is x -> (I - (I - A)^2) x and its
    Lipschitz constant is the largest eigenvalue of (I - A)^2. Construction
    requires that spectrum to sit strictly inside [0, 1). The noise level is
    carried as metadata only.
    """

    def __init__(self, a_matrix: np.ndarray, shape: tuple[int, int, int]):
        a = np.asarray(a_matrix, dtype=np.float64)
        n = int(np.prod(shape))
        if a.shape != (n, n):
            raise ValueError(f"A must be {n}x{n} for field shape {shape}, got {a.shape}")
        if not np.allclose(a, a.T, atol=1e-12):
            raise ValueError("A must be symmetric")
        self.shape = tuple(int(s) for s in shape)
        self.a = 0.5 * (a + a.T)
        eigvals, eigvecs = np.linalg.eigh(self.a)
        self.h2_eigs = (1.0 - eigvals) ** 2
        self.eigvecs = eigvecs
        lip = float(self.h2_eigs.max())
        if lip >= 1.0:
            raise ValueError(f"spectrum of (I - A)^2 must lie strictly inside [0, 1), max is {lip}")
        self.lipschitz = lip
        self._h2 = eigvecs @ (self.h2_eigs[:, None] * eigvecs.T)

    @property
    def channels(self) -> int:
        return self.shape[2]

    def _flat(self, x: np.ndarray) -> np.ndarray:
        if x.shape != self.shape:
            raise ValueError(f"expected field of shape {self.shape}, got {x.shape}")
        return x.reshape(-1)

    def g(self, x: np.ndarray, sigma: float) -> float:
        v = self._flat(x)
        return 0.5 * float(v @ self._h2 @ v)

    def grad(self, x: np.ndarray, sigma: float) -> np.ndarray:
        return (self._h2 @ self._flat(x)).reshape(self.shape)

    def g_and_grad(self, x: np.ndarray, sigma: float) -> tuple[float, np.ndarray]:
        v = self._flat(x)
        h2v = self._h2 @ v
        return 0.5 * float(v @ h2v), h2v.reshape(self.shape)

    def hvp_operator(self, x: np.ndarray, sigma: float):
        def hvp(v: np.ndarray) -> np.ndarray:
            return (self._h2 @ self._flat(v)).reshape(self.shape)

        return hvp

    def n_apply(self, x: np.ndarray, sigma: float) -> np.ndarray:
        return (self.a @ self._flat(x)).reshape(self.shape)

    def expansion(self, x: np.ndarray, sigma: float) -> np.ndarray:
        v = self._flat(x)
        nv = self.a @ v
        return (nv + self.a @ (v - nv)).reshape(self.shape)

    def denoiser_matrix(self, alpha: float = 1.0) -> np.ndarray:
        """Dense matrix of the relaxed denoiser I - alpha (I - A)^2."""
        return np.eye(self._h2.shape[0]) - alpha * self._h2

    def inverse_denoise(self, x: np.ndarray, alpha: float = 1.0) -> np.ndarray:
        """(I - alpha (I - A)^2)^{-1} x; well defined since alpha * L < 1."""
        coeff = 1.0 / (1.0 - alpha * self.h2_eigs)
        v = self.eigvecs.T @ self._flat(x)
        return (self.eigvecs @ (coeff * v)).reshape(self.shape)


class PotentialDenoiser:
    """A gradient-step denoiser with optional relaxation and coercive box term.

    ``denoise`` applies D^alpha = Id - alpha grad g_sigma (implemented as the
    exact convex blend alpha * D(x) + (1 - alpha) * x). The coercive variant
    must be requested at construction; it changes the effective potential, so
    phi evaluations stay consistent with whichever map the algorithms use.
    """

    def __init__(self, core, sigma: float, alpha: float = 1.0, coercive: bool = False):
        if sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {sigma}")
        if not (0.0 < alpha <= 1.0):
            raise ValueError(f"alpha must be in (0, 1], got {alpha}")
        self.core = core
        self.sigma = float(sigma)
        self.alpha = float(alpha)
        self.coercive = bool(coercive)

    def with_sigma(self, sigma: float) -> "PotentialDenoiser":
        return PotentialDenoiser(self.core, sigma, self.alpha, self.coercive)

    def with_alpha(self, alpha: float) -> "PotentialDenoiser":
        return PotentialDenoiser(self.core, self.sigma, alpha, self.coercive)

    # ------------------------------------------------------------ potential

    def g(self, x: np.ndarray) -> float:
        """alpha * g_sigma(x), plus the box term when coercive."""
        x = as_field(x)
        val = self.alpha * self.core.g(x, self.sigma)
        if self.coercive:
            d = x - np.clip(x, _BOX_LO, _BOX_HI)
            val += 0.5 * float(np.vdot(d, d).real)
        return val

    def grad_g(self, x: np.ndarray) -> np.ndarray:
        """Gradient of the effective potential (includes the box term)."""
        x = as_field(x)
        out = self.alpha * self.core.grad(x, self.sigma)
        if self.coercive:
            out = out + (x - np.clip(x, _BOX_LO, _BOX_HI))
        return out

    # ------------------------------------------------------------ denoisers

    def denoise(self, x: np.ndarray) -> np.ndarray:
        """D^alpha(x) = alpha * (x - grad g_sigma(x)) + (1 - alpha) * x."""
        x = as_field(x)
        base = x - self.core.grad(x, self.sigma)
        return self.alpha * base + (1.0 - self.alpha) * x

    def denoise_coercive(self, x: np.ndarray) -> np.ndarray:
        """Denoiser of the coercive potential: denoise(x) - (x - proj_C(x))."""
        if not self.coercive:
            raise UnsupportedOperationError("denoiser was not built with the coercive term")
        x = as_field(x)
        return self.denoise(x) - (x - np.clip(x, _BOX_LO, _BOX_HI))

    def apply(self, x: np.ndarray) -> np.ndarray:
        """The map the algorithms iterate: coercive variant when enabled."""
        return self.denoise_coercive(x) if self.coercive else self.denoise(x)

    def projection_active_count(self, x: np.ndarray) -> int:
        """Entries outside the box C = [-1, 2] (coercive term activity)."""
        x = as_field(x)
        return int(np.count_nonzero((x < _BOX_LO) | (x > _BOX_HI)))

    def denoise_expansion(self, x: np.ndarray) -> np.ndarray:
        """Alternative route via N + J_N^T (x - N), blended by alpha."""
        x = as_field(x)
        base = self.core.expansion(x, self.sigma)
        return self.alpha * base + (1.0 - self.alpha) * x

    # ------------------------------------------------------------ phi

    def phi_at_denoised(self, z: np.ndarray) -> float:
        """phi(D(z)) = g(z) - 1/2 ||z - D(z)||^2 (additive constant zero).

        Only pre-images are ever needed: the algorithms evaluate phi at
        points they themselves produced by denoising.
        """
        z = as_field(z)
        d = self.apply(z)
        r = z - d
        return self.g(z) - 0.5 * float(np.vdot(r, r).real)

    # ------------------------------------------------------------ curvature

    def hvp_operator(self, x: np.ndarray):
        """v -> hess of the effective potential at x, applied to v."""
        x = as_field(x)
        core_hvp = self.core.hvp_operator(x, self.sigma)
        if not self.coercive:
            alpha = self.alpha
            return lambda v: alpha * core_hvp(v)
        outside = ((x < _BOX_LO) | (x > _BOX_HI)).astype(np.float64)
        alpha = self.alpha

        def hvp(v: np.ndarray) -> np.ndarray:
            return alpha * core_hvp(v) + outside * v

        return hvp

    def hessian_vec(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return self.hvp_operator(x)(np.asarray(v, dtype=np.float64))

    def lipschitz_bound(self) -> float | None:
        """Known Lipschitz constant of grad g, when the core provides one."""
        lip = getattr(self.core, "lipschitz", None)
        if lip is None:
            return None
        val = self.alpha * lip
        if self.coercive:
            val += 1.0
        return val


def analytic_linear_denoiser(
    a_matrix: np.ndarray | None = None,
    *,
    shape: tuple[int, int, int],
    sigma: float = 0.0,
    alpha: float = 1.0,
    coercive: bool = False,
    spectrum: tuple[float, float] | None = None,
    seed: int = 0,
) -> PotentialDenoiser:
    """Denoiser with N(x) = A x for symmetric A; every quantity closed-form.

    Either pass a dense symmetric ``a_matrix`` or a ``spectrum`` interval
    (lo, hi) for the eigenvalues of (I - A)^2; the eigenbasis is then a
    seeded random orthogonal matrix. The spectrum must sit inside [0, 1).
    """
    n = int(np.prod(shape))
    if a_matrix is None:
        if spectrum is None:
            raise ValueError("need a_matrix or spectrum")
        lo, hi = float(spectrum[0]), float(spectrum[1])
        if not (0.0 <= lo <= hi < 1.0):
            raise ValueError(f"spectrum interval must sit inside [0, 1), got ({lo}, {hi})")
        rng = np.random.default_rng(seed)
        q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        h2 = lo + (hi - lo) * rng.random(n)
        if n >= 1:
            h2[0] = hi  # pin the Lipschitz constant to the interval edge
        # A = I - sqrt(h2) in the q basis (symmetric, eigenvalues 1 - sqrt(h2))
        a_matrix = q @ ((1.0 - np.sqrt(h2))[:, None] * q.T)
        a_matrix = 0.5 * (a_matrix + a_matrix.T)
    core = LinearPotential(a_matrix, shape)
    return PotentialDenoiser(core, sigma, alpha=alpha, coercive=coercive)


def jacobian_spectral_norm(den: PotentialDenoiser, x: np.ndarray, iters: int = 50, seed: int = 0) -> float:
    """Spectral norm of J_{Id - D}(x) = hess of the effective potential.

    Power-iteration estimate (Rayleigh quotient after ``iters`` steps);
    deterministic given the seed.
    """
    x = as_field(x)
    hvp = den.hvp_operator(x)
    return power_iteration(hvp, x.shape, iters=iters, seed=seed)
