"""Fixed-point restoration schemes built around a gradient-step denoiser.

Four algorithms, each returning (restored field, iterate trace):

* ``run_gs_pnp``      -- half-quadratic splitting with backtracking on the
                         step size; monitors F = (1/lambda) f + g and
                         enforces sufficient decrease each iteration.
* ``run_prox_pgd``    -- proximal-gradient with the denoiser as prox;
                         monitors F = (1/lambda) f + phi.
* ``run_prox_drs_diff`` -- Douglas-Rachford with the prox on f first;
                         monitors the envelope
                         phi(v) + (1/lambda) f(u) + <u - x, u - v> + 1/2||u - v||^2.
* ``run_prox_drs``    -- Douglas-Rachford with the denoiser first; same
                         envelope with the roles of u and v swapped.

phi is always evaluated through pre-images the scheme itself produces, so no
denoiser inversion is ever required. Traces carry one row per iterate with
columns k, F, lyapunov, residual, psnr, tau, shrinks; the lyapunov column is
the quantity each convergence statement says is non-increasing.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .denoiser import PotentialDenoiser
from .errors import NumericalError, UnsupportedOperationError
from .field import as_field, psnr
from .fileio import atomic_write_text
from .operators import DataFidelity, initial_guess


@dataclass
class PnPParams:
    """Shared knob set; per-algorithm factories below fill in the defaults."""

    lam: float
    sigma: float
    max_iters: int
    tau0: float = 0.0  # only GS-PnP uses a step size
    gamma: float = 0.1
    eta: float = 0.9
    beta: float = 0.5
    eps_delta: float = 0.0
    eps_tau: float = 1e-6
    eps_res: float = 0.0  # optional stop on the step residual; 0 disables
    max_shrinks: int = 100

    def validate(self) -> None:
        if self.lam <= 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be >= 0, got {self.max_iters}")
        if not (0.0 < self.gamma < 0.5):
            raise ValueError(f"gamma must be in (0, 0.5), got {self.gamma}")
        if not (0.0 < self.eta < 1.0):
            raise ValueError(f"eta must be in (0, 1), got {self.eta}")
        if not (0.0 < self.beta <= 1.0):
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")
        if self.eps_delta < 0 or self.eps_tau < 0 or self.eps_res < 0:
            raise ValueError("tolerances must be >= 0")


def gs_params(sigma: float, lam: float = 0.065, tau0: float | None = None, max_iters: int = 400,
              eps_delta: float = 1e-6, gamma: float = 0.1, eta: float = 0.9,
              eps_tau: float = 1e-6) -> PnPParams:
    """GS-PnP defaults: lambda 0.065, K 400, tau0 ~ lambda, relative-decrease stop 1e-6."""
    return PnPParams(lam=lam, sigma=sigma, max_iters=max_iters, tau0=lam if tau0 is None else tau0,
                     gamma=gamma, eta=eta, eps_delta=eps_delta, eps_tau=eps_tau)


def pgd_params(sigma: float, lam: float = 1.0 / 0.99, max_iters: int = 1000,
               eps_delta: float = 0.0) -> PnPParams:
    """Proximal-denoiser PGD defaults: lambda 1/0.99, K 1000, no early stop."""
    return PnPParams(lam=lam, sigma=sigma, max_iters=max_iters, eps_delta=eps_delta)


def drs_diff_params(sigma: float, lam: float = 1.0 / 0.99, max_iters: int = 1000,
                    beta: float = 1.0, eps_delta: float = 0.0) -> PnPParams:
    return PnPParams(lam=lam, sigma=sigma, max_iters=max_iters, beta=beta, eps_delta=eps_delta)


def drs_params(sigma: float, lam: float = 1.0 / 0.99, max_iters: int = 1000,
               beta: float = 0.5, eps_delta: float = 0.0) -> PnPParams:
    return PnPParams(lam=lam, sigma=sigma, max_iters=max_iters, beta=beta, eps_delta=eps_delta)


# ---------------------------------------------------------------- objectives


@dataclass
class ObjectiveGS:
    """F(x) = (1/lambda) f(x) + g(x); evaluable anywhere."""

    fidelity: DataFidelity
    denoiser: PotentialDenoiser
    lam: float

    def value(self, x: np.ndarray) -> float:
        return self.fidelity.value(x) / self.lam + self.denoiser.g(x)


@dataclass
class ObjectiveProx:
    """F(x) = (1/lambda) f(x) + phi(x), evaluable only at x = D(z) via the
    pre-image z."""

    fidelity: DataFidelity
    denoiser: PotentialDenoiser
    lam: float

    def value_at(self, preimage: np.ndarray) -> tuple[float, np.ndarray]:
        d = self.denoiser.apply(preimage)
        return self.fidelity.value(d) / self.lam + self.denoiser.phi_at_denoised(preimage), d


def evaluate_objective(obj, x: np.ndarray | None = None, preimage: np.ndarray | None = None) -> float:
    """Evaluate a restoration objective.

    ObjectiveGS needs ``x``; ObjectiveProx needs the denoiser ``preimage``
    (phi has no general closed form away from denoiser outputs).
    """
    if isinstance(obj, ObjectiveGS):
        if x is None:
            raise ValueError("ObjectiveGS needs the point x")
        return obj.value(as_field(x))
    if isinstance(obj, ObjectiveProx):
        if preimage is None:
            raise ValueError("ObjectiveProx needs a pre-image z with x = D(z)")
        return obj.value_at(as_field(preimage))[0]
    raise TypeError(f"unknown objective type {type(obj).__name__}")


# ---------------------------------------------------------------- traces


@dataclass
class TraceRow:
    k: int
    f: float | None
    lyapunov: float | None
    residual: float | None
    psnr: float | None
    tau: float | None
    shrinks: int


@dataclass
class IterateTrace:
    algorithm: str
    rows: list[TraceRow] = dataclass_field(default_factory=list)

    def add(self, **kw) -> None:
        self.rows.append(TraceRow(**kw))

    def column(self, name: str) -> np.ndarray:
        vals = [getattr(r, name) for r in self.rows]
        return np.array([math.nan if v is None else float(v) for v in vals])

    def to_csv_text(self) -> str:
        def cell(v):
            if v is None:
                return ""
            if isinstance(v, int):
                return str(v)
            return repr(float(v))

        lines = ["k,F,lyapunov,residual,psnr,tau,shrinks"]
        for r in self.rows:
            lines.append(
                ",".join(
                    [str(r.k), cell(r.f), cell(r.lyapunov), cell(r.residual), cell(r.psnr), cell(r.tau), str(r.shrinks)]
                )
            )
        return "\n".join(lines) + "\n"

    def write_csv(self, path: str) -> None:
        atomic_write_text(path, self.to_csv_text())

    @staticmethod
    def read_csv(path: str) -> "IterateTrace":
        trace = IterateTrace(algorithm="")
        with open(path, "r", encoding="utf-8") as f:
            header = f.readline().strip()
            if header != "k,F,lyapunov,residual,psnr,tau,shrinks":
                raise ValueError(f"{path}: unexpected trace header {header!r}")
            for line in f:
                parts = line.rstrip("\n").split(",")
                if len(parts) != 7:
                    raise ValueError(f"{path}: malformed row {line!r}")
                opt = lambda s: None if s == "" else float(s)
                trace.add(
                    k=int(parts[0]), f=opt(parts[1]), lyapunov=opt(parts[2]), residual=opt(parts[3]),
                    psnr=opt(parts[4]), tau=opt(parts[5]), shrinks=int(parts[6]),
                )
        return trace


def check_trace_descent(trace: IterateTrace, slack: float = 1e-9) -> bool:
    """True iff the lyapunov column is non-increasing within ``slack``."""
    vals = [r.lyapunov for r in trace.rows if r.lyapunov is not None]
    return all(b <= a + slack for a, b in zip(vals, vals[1:]))


def _finite_or_none(v: float) -> float | None:
    return float(v) if math.isfinite(v) else None


def _maybe_psnr(x: np.ndarray, truth: np.ndarray | None) -> float | None:
    if truth is None:
        return None
    return psnr(x, truth)


def _l2(x: np.ndarray) -> float:
    return float(np.sqrt(np.vdot(x, x).real))


# ---------------------------------------------------------------- GS-PnP


def run_gs_pnp(
    params: PnPParams,
    fidelity: DataFidelity,
    denoiser: PotentialDenoiser,
    x_init: np.ndarray | None = None,
    ground_truth: np.ndarray | None = None,
    init_sigma: float | None = None,
) -> tuple[np.ndarray, IterateTrace]:
    """Backtracked half-quadratic scheme on F = (1/lambda) f + g.

    One iteration forms z = tau D(x) + (1 - tau) x, then x+ = prox_{(tau/
    lambda) f}(z), accepted iff F(x) - F(x+) >= (gamma/tau) ||x - x+||^2;
    otherwise tau <- eta tau and the step is retried (at most max_shrinks
    times, then NumericalError). Stops at max_iters, or when the relative
    decrease falls to eps_delta, or when tau falls to eps_tau. The initial
    point is prox_{(tau0/lambda) f} of the input denoised once at an enlarged
    level (10 nu by default, ``init_sigma`` overrides). The returned image is
    the final tau D(x) + (1 - tau) x.
    """
    params.validate()
    if params.tau0 <= 0:
        raise ValueError(f"tau0 must be positive, got {params.tau0}")
    den = denoiser.with_sigma(params.sigma)
    x0 = initial_guess(fidelity) if x_init is None else as_field(x_init)
    level = 10.0 * fidelity.model.nu if init_sigma is None else float(init_sigma)
    z0 = den.with_sigma(level).apply(x0)

    obj = ObjectiveGS(fidelity, den, params.lam)
    tau = params.tau0
    x = fidelity.prox(z0, tau / params.lam)
    f_cur = obj.value(x)
    if not math.isfinite(f_cur):
        raise NumericalError("objective non-finite at the initial iterate")
    f0 = f_cur if f_cur > 0 else 1.0

    trace = IterateTrace(algorithm="gs")
    trace.add(k=0, f=f_cur, lyapunov=f_cur, residual=None, psnr=_maybe_psnr(x, ground_truth),
              tau=tau, shrinks=0)

    for k in range(1, params.max_iters + 1):
        dx = den.apply(x)
        shrinks = 0
        tau_dead = False
        while True:
            z = tau * dx + (1.0 - tau) * x
            x_next = fidelity.prox(z, tau / params.lam)
            f_next = obj.value(x_next)
            if not math.isfinite(f_next):
                raise NumericalError(f"objective non-finite at iteration {k}")
            step = x - x_next
            if f_cur - f_next >= (params.gamma / tau) * float(np.vdot(step, step).real):
                break
            shrinks += 1
            if shrinks > params.max_shrinks:
                raise NumericalError(
                    f"backtracking exceeded {params.max_shrinks} shrinks at iteration {k}"
                )
            tau *= params.eta
            if tau <= params.eps_tau:
                tau_dead = True
                break
        if tau_dead:
            break
        decrease = f_cur - f_next
        x, f_cur = x_next, f_next
        trace.add(k=k, f=f_cur, lyapunov=f_cur, residual=_l2(step), psnr=_maybe_psnr(x, ground_truth),
                  tau=tau, shrinks=shrinks)
        if params.eps_delta > 0 and decrease / f0 <= params.eps_delta:
            break
        if params.eps_res > 0 and _l2(step) <= params.eps_res:
            break
        if tau <= params.eps_tau:
            break

    out = tau * den.apply(x) + (1.0 - tau) * x
    return out, trace


# ---------------------------------------------------------------- Prox-PnP


def _warn_if_weak_convexity_uncovered(params: PnPParams, fidelity: DataFidelity, name: str) -> None:
    try:
        lf = fidelity.lf
    except Exception:
        return
    if params.lam <= lf:
        warnings.warn(
            f"{name}: lambda = {params.lam} <= L_f = {lf}; the convergence guarantee needs lambda > L_f",
            stacklevel=3,
        )


def run_prox_pgd(
    params: PnPParams,
    fidelity: DataFidelity,
    denoiser: PotentialDenoiser,
    x_init: np.ndarray | None = None,
    ground_truth: np.ndarray | None = None,
) -> tuple[np.ndarray, IterateTrace]:
    """Proximal-gradient with the denoiser as proximal map.

    x+ = D(x - (1/lambda) grad f(x)); monitors F = (1/lambda) f + phi via the
    pre-image of each new iterate. Runs to max_iters unless eps_delta > 0
    triggers the relative-decrease stop.
    """
    params.validate()
    if fidelity.indicator:
        raise UnsupportedOperationError("prox-pnp-pgd needs a differentiable fidelity, not an indicator")
    den = denoiser.with_sigma(params.sigma)
    _warn_if_weak_convexity_uncovered(params, fidelity, "prox-pnp-pgd")
    x = initial_guess(fidelity) if x_init is None else as_field(x_init)
    obj = ObjectiveProx(fidelity, den, params.lam)
    trace = IterateTrace(algorithm="pgd")
    f_ref = None
    f_prev = None
    for k in range(1, params.max_iters + 1):
        z = x - fidelity.grad(x) / params.lam
        f_val, x_next = obj.value_at(z)
        if not math.isfinite(f_val):
            raise NumericalError(f"objective non-finite at iteration {k}")
        res = _l2(x_next - x)
        x = x_next
        trace.add(k=k, f=f_val, lyapunov=f_val, residual=res, psnr=_maybe_psnr(x, ground_truth),
                  tau=1.0, shrinks=0)
        if params.eps_delta > 0 and f_prev is not None:
            if f_ref is None:
                f_ref = abs(f_prev) if f_prev != 0 else 1.0
            if (f_prev - f_val) / f_ref <= params.eps_delta:
                break
        f_prev = f_val
    return x, trace


def run_prox_drs_diff(
    params: PnPParams,
    fidelity: DataFidelity,
    denoiser: PotentialDenoiser,
    x_init: np.ndarray | None = None,
    ground_truth: np.ndarray | None = None,
) -> tuple[np.ndarray, IterateTrace]:
    """Douglas-Rachford iteration taking the prox of f before the denoiser.

    u = prox_{(1/lambda) f}(x); v = D(2u - x); x+ = x + 2 beta (v - u).
    Monitors phi(v) + (1/lambda) f(u) + <u - x, u - v> + 1/2 ||u - v||^2
    (phi through the pre-image 2u - x); residual is ||u - v||; returns v.
    """
    params.validate()
    if fidelity.indicator:
        raise UnsupportedOperationError("prox-pnp-drsdiff needs a smooth fidelity, not an indicator")
    den = denoiser.with_sigma(params.sigma)
    _warn_if_weak_convexity_uncovered(params, fidelity, "prox-pnp-drsdiff")
    x = initial_guess(fidelity) if x_init is None else as_field(x_init)
    trace = IterateTrace(algorithm="drsdiff")
    v = x
    for k in range(1, params.max_iters + 1):
        u = fidelity.prox(x, 1.0 / params.lam)
        pre = 2.0 * u - x
        v = den.apply(pre)
        phi_v = den.phi_at_denoised(pre)
        duv = u - v
        cross = float(np.vdot(u - x, duv).real)
        nrm2 = float(np.vdot(duv, duv).real)
        lyap = phi_v + fidelity.value(u) / params.lam + cross + 0.5 * nrm2
        if not math.isfinite(lyap):
            raise NumericalError(f"envelope non-finite at iteration {k}")
        f_val = _finite_or_none(fidelity.value(v) / params.lam + phi_v)
        x = x + 2.0 * params.beta * (v - u)
        trace.add(k=k, f=f_val, lyapunov=lyap, residual=math.sqrt(nrm2),
                  psnr=_maybe_psnr(v, ground_truth), tau=1.0, shrinks=0)
    return v, trace


def run_prox_drs(
    params: PnPParams,
    fidelity: DataFidelity,
    denoiser: PotentialDenoiser,
    x_init: np.ndarray | None = None,
    ground_truth: np.ndarray | None = None,
) -> tuple[np.ndarray, IterateTrace]:
    """Douglas-Rachford iteration taking the denoiser before the prox of f.

    u = D(x); v = prox_{(1/lambda) f}(2u - x); x+ = x + 2 beta (v - u).
    Monitors phi(u) + (1/lambda) f(v) + <u - x, u - v> + 1/2 ||u - v||^2
    (phi through the pre-image x); residual is ||u - v||; returns u. The
    first iterate is prox_{(1/lambda) f} of the starting point.
    """
    params.validate()
    den = denoiser.with_sigma(params.sigma)
    x = initial_guess(fidelity) if x_init is None else as_field(x_init)
    x = fidelity.prox(x, 1.0 / params.lam)
    trace = IterateTrace(algorithm="drs")
    u = x
    for k in range(1, params.max_iters + 1):
        u = den.apply(x)
        phi_u = den.phi_at_denoised(x)
        v = fidelity.prox(2.0 * u - x, 1.0 / params.lam)
        duv = u - v
        cross = float(np.vdot(u - x, duv).real)
        nrm2 = float(np.vdot(duv, duv).real)
        lyap = phi_u + fidelity.value(v) / params.lam + cross + 0.5 * nrm2
        if not math.isfinite(lyap):
            raise NumericalError(f"envelope non-finite at iteration {k}")
        f_val = _finite_or_none(fidelity.value(u) / params.lam + phi_u)
        x = x + 2.0 * params.beta * (v - u)
        trace.add(k=k, f=f_val, lyapunov=lyap, residual=math.sqrt(nrm2),
                  psnr=_maybe_psnr(u, ground_truth), tau=1.0, shrinks=0)
    return u, trace
