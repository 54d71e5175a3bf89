"""Power iteration for the largest eigenvalue of a symmetric operator.

Used to estimate operator norms of A^T A compositions and of denoiser
Hessians. The operator is passed as a callable on arrays of a fixed shape;
it must be linear and symmetric (the Rayleigh quotient of the final iterate
is returned, which for symmetric PSD operators increases monotonically in
the iteration count).
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import NumericalError

_MAX_RESTARTS = 3


def power_iteration(
    apply_a: Callable[[np.ndarray], np.ndarray],
    shape: tuple,
    iters: int = 50,
    seed: int = 0,
    b0: np.ndarray | None = None,
) -> float:
    """Rayleigh-quotient estimate of the dominant eigenvalue after ``iters`` steps.

    The start vector is drawn from a generator seeded with ``seed`` (or taken
    from ``b0``); its sign and scale do not affect the estimate. A zero
    iterate triggers a fresh seeded restart, at most 3 times, then raises
    NumericalError.
    """
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")
    rng = np.random.default_rng(seed)
    b = rng.standard_normal(shape) if b0 is None else np.asarray(b0, dtype=np.float64).copy()
    restarts = 0
    while float(np.linalg.norm(b)) == 0.0:
        restarts += 1
        if restarts > _MAX_RESTARTS:
            raise NumericalError("power iteration: start vector kept collapsing to zero")
        b = rng.standard_normal(shape)
    b = b / np.linalg.norm(b)
    k = 0
    while k < iters:
        ab = np.asarray(apply_a(b), dtype=np.float64)
        n = float(np.linalg.norm(ab))
        if n == 0.0:
            restarts += 1
            if restarts > _MAX_RESTARTS:
                raise NumericalError("power iteration: iterate vanished (operator may be zero)")
            b = rng.standard_normal(shape)
            b = b / np.linalg.norm(b)
            continue
        b = ab / n
        k += 1
    ab = np.asarray(apply_a(b), dtype=np.float64)
    return float(np.vdot(b, ab).real / np.vdot(b, b).real)


def power_iteration_tol(
    apply_a: Callable[[np.ndarray], np.ndarray],
    shape: tuple,
    tol: float = 1e-12,
    max_iters: int = 5000,
    seed: int = 0,
) -> float:
    """Power iteration run until the Rayleigh quotient stabilizes.

    Stops when successive estimates differ by less than ``tol`` relative
    (checked every iteration) or after ``max_iters`` steps.
    """
    rng = np.random.default_rng(seed)
    b = rng.standard_normal(shape)
    b = b / np.linalg.norm(b)
    prev = None
    for _ in range(max_iters):
        ab = np.asarray(apply_a(b), dtype=np.float64)
        n = float(np.linalg.norm(ab))
        if n == 0.0:
            return 0.0
        est = float(np.vdot(b, ab).real)
        b = ab / n
        if prev is not None and abs(est - prev) <= tol * max(1.0, abs(est)):
            return est
        prev = est
    return prev if prev is not None else 0.0
