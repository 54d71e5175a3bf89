"""Degradation operators y = A x + noise and their data-fidelity terms.

Three operator kinds share one periodic-boundary convention:

* ``Deblur``      -- A = H, circular convolution with a blur kernel.
* ``SuperRes``    -- A = D H, blur followed by s-fold decimation at offsets
                     (0, 0), so input height/width must be multiples of s.
* ``Inpaint``     -- A = M, pixelwise masking (one mask plane shared by all
                     channels; masked entries of y are zero).

``DataFidelity`` wraps (A, y) as f(x) = 1/2 ||A x - y||^2, or for inpainting
as the hard constraint A x = y (indicator fidelity, the default there). The
quadratic proxes are closed-form in the DFT domain; the decimated case uses
the block (aliasing) structure of D H in frequency space. Both are checked
against dense normal-equation solves in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedOperationError
from .field import Kernel, as_field, kernel_spectrum
from .spectral import power_iteration_tol

_INDICATOR_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Deblur:
    kernel: Kernel


@dataclass(frozen=True, eq=False)
class SuperRes:
    kernel: Kernel
    scale: int

    def __post_init__(self):
        if int(self.scale) < 1:
            raise ValueError(f"scale must be >= 1, got {self.scale}")
        object.__setattr__(self, "scale", int(self.scale))


@dataclass(frozen=True, eq=False)
class Inpaint:
    mask: np.ndarray  # (H, W) bool; True = observed

    def __post_init__(self):
        m = np.asarray(self.mask)
        if m.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {m.shape}")
        if m.dtype != np.bool_:
            vals = np.unique(m)
            if not np.all(np.isin(vals, (0, 1))):
                raise ValueError("mask must be binary")
            m = m.astype(bool)
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)


@dataclass(frozen=True, eq=False)
class DegradationModel:
    kind: Deblur | SuperRes | Inpaint
    nu: float = 0.0

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError(f"noise level must be >= 0, got {self.nu}")


def _spectrum_for(x_shape_hw, kernel: Kernel) -> np.ndarray:
    return kernel_spectrum(kernel, x_shape_hw)


def _conv_spec(x: np.ndarray, lam: np.ndarray) -> np.ndarray:
    return np.real(np.fft.ifft2(np.fft.fft2(x, axes=(0, 1)) * lam[:, :, None], axes=(0, 1)))


def apply_model(model: DegradationModel, x: np.ndarray) -> np.ndarray:
    """Forward map A x (noiseless)."""
    x = as_field(x)
    kind = model.kind
    if isinstance(kind, Deblur):
        return _conv_spec(x, _spectrum_for(x.shape[:2], kind.kernel))
    if isinstance(kind, SuperRes):
        s = kind.scale
        if x.shape[0] % s or x.shape[1] % s:
            raise ValueError(f"field {x.shape[:2]} not divisible by scale {s}")
        blurred = _conv_spec(x, _spectrum_for(x.shape[:2], kind.kernel))
        return blurred[::s, ::s, :]
    if isinstance(kind, Inpaint):
        if x.shape[:2] != kind.mask.shape:
            raise ValueError(f"field {x.shape[:2]} does not match mask {kind.mask.shape}")
        return x * kind.mask[:, :, None]
    raise TypeError(f"unknown model kind {type(kind).__name__}")


def apply_model_adjoint(model: DegradationModel, r: np.ndarray, x_shape: tuple | None = None) -> np.ndarray:
    """Adjoint map A^T r; satisfies <A x, r> = <x, A^T r> exactly up to round-off."""
    r = as_field(r)
    kind = model.kind
    if isinstance(kind, Deblur):
        lam = _spectrum_for(r.shape[:2], kind.kernel)
        return np.real(np.fft.ifft2(np.fft.fft2(r, axes=(0, 1)) * np.conj(lam)[:, :, None], axes=(0, 1)))
    if isinstance(kind, SuperRes):
        s = kind.scale
        h, w = r.shape[0] * s, r.shape[1] * s
        up = np.zeros((h, w, r.shape[2]))
        up[::s, ::s, :] = r
        lam = _spectrum_for((h, w), kind.kernel)
        return np.real(np.fft.ifft2(np.fft.fft2(up, axes=(0, 1)) * np.conj(lam)[:, :, None], axes=(0, 1)))
    if isinstance(kind, Inpaint):
        return r * kind.mask[:, :, None]
    raise TypeError(f"unknown model kind {type(kind).__name__}")


def model_x_shape(model: DegradationModel, y: np.ndarray) -> tuple[int, int, int]:
    """Shape of the restoration variable given an observation of shape y."""
    kind = model.kind
    if isinstance(kind, SuperRes):
        return (y.shape[0] * kind.scale, y.shape[1] * kind.scale, y.shape[2])
    return tuple(y.shape)


class DataFidelity:
    """f(x) = 1/2 ||A x - y||^2, or for inpainting the constraint A x = y.

    ``indicator`` defaults to True for Inpaint and False otherwise; a
    quadratic masked fidelity (indicator=False on Inpaint) is available for
    noisy inpainting. The Lipschitz constant of grad f (that of A^T A) is
    estimated spectrally on first use of :attr:`lf`.
    """

    def __init__(self, model: DegradationModel, y: np.ndarray, indicator: bool | None = None):
        self.model = model
        self.y = as_field(y)
        kind = model.kind
        if indicator is None:
            indicator = isinstance(kind, Inpaint)
        if indicator and not isinstance(kind, Inpaint):
            raise ValueError("indicator fidelity is only defined for inpainting")
        self.indicator = bool(indicator)
        if isinstance(kind, Inpaint):
            if self.y.shape[:2] != kind.mask.shape:
                raise ValueError(f"observation {self.y.shape[:2]} does not match mask {kind.mask.shape}")
            off = self.y * (~kind.mask)[:, :, None]
            if self.indicator and np.any(off != 0.0):
                raise ValueError("indicator inpainting requires y to vanish at masked pixels")
        if isinstance(kind, Deblur):
            kh, kw = kind.kernel.shape
            if kh > self.y.shape[0] or kw > self.y.shape[1]:
                raise ValueError(f"kernel {kind.kernel.shape} larger than observation {self.y.shape[:2]}")
        self._lf: float | None = None

    @property
    def x_shape(self) -> tuple[int, int, int]:
        return model_x_shape(self.model, self.y)

    def residual(self, x: np.ndarray) -> np.ndarray:
        return apply_model(self.model, x) - self.y

    def value(self, x: np.ndarray) -> float:
        r = self.residual(x)
        if self.indicator:
            return 0.0 if float(np.max(np.abs(r))) <= _INDICATOR_TOL else math.inf
        return 0.5 * float(np.vdot(r, r).real)

    def grad(self, x: np.ndarray) -> np.ndarray:
        """A^T (A x - y); undefined (raises) for the indicator fidelity."""
        if self.indicator:
            raise UnsupportedOperationError("indicator fidelity has no gradient")
        return apply_model_adjoint(self.model, self.residual(x))

    @property
    def lf(self) -> float:
        """Operator norm of A^T A, via power iteration on the composition."""
        if self.indicator:
            raise UnsupportedOperationError("indicator fidelity has no smoothness constant")
        if self._lf is None:
            shape = self.x_shape

            def ata(v):
                f = v.reshape(shape)
                return apply_model_adjoint(self.model, apply_model(self.model, f)).ravel()

            self._lf = power_iteration_tol(ata, (shape[0] * shape[1] * shape[2],), tol=1e-13, seed=0)
        return self._lf

    # ---------------------------------------------------------- proxes

    def prox(self, z: np.ndarray, tau: float) -> np.ndarray:
        """argmin_p tau*f(p) + 1/2 ||p - z||^2 (exact, closed form)."""
        z = as_field(z)
        if z.shape != self.x_shape:
            raise ValueError(f"prox argument {z.shape} does not match variable shape {self.x_shape}")
        kind = self.model.kind
        if isinstance(kind, Inpaint):
            if self.indicator:
                return prox_inpaint(self, z)
            if tau <= 0:
                raise ValueError(f"tau must be positive, got {tau}")
            m = kind.mask[:, :, None]
            return np.where(m, (z + tau * self.y) / (1.0 + tau), z)
        if tau <= 0:
            raise ValueError(f"tau must be positive, got {tau}")
        if isinstance(kind, Deblur):
            return prox_deblur(self, z, tau)
        return prox_superres(self, z, tau)

    def rprox(self, z: np.ndarray, tau: float) -> np.ndarray:
        """Reflected prox 2 prox(z) - z."""
        return 2.0 * self.prox(z, tau) - as_field(z)


def prox_deblur(fid: DataFidelity, z: np.ndarray, tau: float) -> np.ndarray:
    """Prox of tau/2 ||H p - y||^2: (I + tau H^T H)^{-1} (tau H^T y + z) in the DFT basis."""
    kind = fid.model.kind
    lam = _spectrum_for(z.shape[:2], kind.kernel)[:, :, None]
    yhat = np.fft.fft2(fid.y, axes=(0, 1))
    zhat = np.fft.fft2(z, axes=(0, 1))
    phat = (tau * np.conj(lam) * yhat + zhat) / (1.0 + tau * np.abs(lam) ** 2)
    return np.real(np.fft.ifft2(phat, axes=(0, 1)))


def prox_superres(fid: DataFidelity, z: np.ndarray, tau: float) -> np.ndarray:
    """Prox of tau/2 ||D H p - y||^2 via the s x s aliasing-block identity.

    With zhat = tau A^T y + z, the solution in frequency space is

        P = Zhat - (tau/s^2) conj(L) * (sum_b L_b Zhat_b) / (1 + (tau/s^2) sum_b |L_b|^2)

    applied blockwise, where L_b are the s x s aliased sub-grids of the
    kernel spectrum. At s = 1 this reduces to the deblurring prox.
    """
    kind = fid.model.kind
    s = kind.scale
    h, w, c = z.shape
    mh, mw = h // s, w // s
    lam = _spectrum_for((h, w), kind.kernel)
    lb = lam.reshape(s, mh, s, mw)
    den = 1.0 + (tau / s**2) * np.sum(np.abs(lb) ** 2, axis=(0, 2))  # (mh, mw)
    out = np.empty_like(z)
    for ch in range(c):
        yhat = np.fft.fft2(fid.y[:, :, ch])
        zhat = tau * np.conj(lam) * np.tile(yhat, (s, s)) + np.fft.fft2(z[:, :, ch])
        zb = zhat.reshape(s, mh, s, mw)
        num = np.einsum("akbl,akbl->kl", lb, zb)
        pb = zb - (tau / s**2) * np.conj(lb) * (num / den)[None, :, None, :]
        out[:, :, ch] = np.real(np.fft.ifft2(pb.reshape(h, w)))
    return out


def prox_inpaint(fid: DataFidelity, z: np.ndarray) -> np.ndarray:
    """Projection onto {x : M x = y}: observed pixels from y, rest from z."""
    kind = fid.model.kind
    m = kind.mask[:, :, None]
    return np.where(m, fid.y, z)


def estimate_lf(fid: DataFidelity) -> float:
    """Spectral norm of A^T A (see :attr:`DataFidelity.lf`)."""
    return fid.lf


def cubic_upsample(y: np.ndarray, s: int) -> np.ndarray:
    """Separable periodic cubic (Catmull-Rom) s-fold upsampling.

    Output sample i*s coincides with input sample i, so upsample followed by
    decimation at offset 0 is the identity.
    """
    y = as_field(y)
    if s < 1:
        raise ValueError(f"scale must be >= 1, got {s}")
    if s == 1:
        return y.copy()

    def axis_up(a: np.ndarray, axis: int) -> np.ndarray:
        a = np.moveaxis(a, axis, 0)
        m = a.shape[0]
        out = np.empty((m * s,) + a.shape[1:])
        for r in range(s):
            f = r / s
            w_m1 = -0.5 * f**3 + f**2 - 0.5 * f
            w_0 = 1.5 * f**3 - 2.5 * f**2 + 1.0
            w_1 = -1.5 * f**3 + 2.0 * f**2 + 0.5 * f
            w_2 = 0.5 * f**3 - 0.5 * f**2
            out[r::s] = (
                w_m1 * np.roll(a, 1, axis=0)
                + w_0 * a
                + w_1 * np.roll(a, -1, axis=0)
                + w_2 * np.roll(a, -2, axis=0)
            )
        return np.moveaxis(out, 0, axis)

    return axis_up(axis_up(y, 0), 1)


def initial_guess(fid: DataFidelity) -> np.ndarray:
    """Problem-specific starting point for the restoration algorithms.

    Deblurring starts from the observation, super-resolution from a cubic
    upsample, inpainting from y with masked pixels set to 0.5.
    """
    kind = fid.model.kind
    if isinstance(kind, Deblur):
        return fid.y.copy()
    if isinstance(kind, SuperRes):
        return cubic_upsample(fid.y, kind.scale)
    m = kind.mask[:, :, None]
    return np.where(m, fid.y, 0.5)
