"""Plug-and-play image restoration with gradient-step and proximal denoisers.

The package is organized bottom-up:

* ``field``      -- image fields, kernels, FFT helpers, PSNR, noise
* ``fileio``     -- PNG/PFM/kernel/mask serialization (atomic writes)
* ``autodiff``   -- reverse-mode engine with differentiable backward passes
* ``network``    -- the small periodic convolutional denoising network
* ``denoiser``   -- potentials g, the denoiser D = Id - grad g, phi evaluation
* ``spectral``   -- power iteration
* ``training``   -- denoising loss, spectral penalty, Adam loop
* ``operators``  -- degradation models and data-fidelity proxes
* ``algorithms`` -- the four restoration schemes and their traces
* ``kernels``    -- Gaussian / motion kernel constructors and the bank
* ``datasets``   -- bundled images and synthetic textures
* ``experiment`` -- configs, single runs, parameter sweeps
* ``cli``        -- the ``pnp`` command
"""

from .algorithms import (
    IterateTrace,
    ObjectiveGS,
    ObjectiveProx,
    PnPParams,
    check_trace_descent,
    drs_diff_params,
    drs_params,
    evaluate_objective,
    gs_params,
    pgd_params,
    run_gs_pnp,
    run_prox_drs,
    run_prox_drs_diff,
    run_prox_pgd,
)
from .datasets import desk_images, synthetic_texture
from .denoiser import (
    LinearPotential,
    NetworkPotential,
    PotentialDenoiser,
    analytic_linear_denoiser,
    jacobian_spectral_norm,
)
from .errors import ConfigError, NumericalError, UnsupportedOperationError
from .experiment import (
    ExperimentConfig,
    bernoulli_mask,
    build_denoiser,
    load_config,
    parse_config_text,
    restore_once,
    run_sweep,
)
from .field import Kernel, add_gaussian_noise, as_field, conv_periodic, mse, psnr
from .fileio import (
    load_kernel,
    load_mask,
    load_pfm,
    load_png,
    save_kernel,
    save_mask,
    save_pfm,
    save_png,
)
from .kernels import gaussian_kernel, kernel_bank, motion_kernel
from .network import SmoothNet
from .operators import (
    DataFidelity,
    Deblur,
    DegradationModel,
    Inpaint,
    SuperRes,
    apply_model,
    apply_model_adjoint,
    cubic_upsample,
    estimate_lf,
    initial_guess,
)
from .spectral import power_iteration
from .training import TrainConfig, fine_tune_prox, loss_gs, loss_prox, train_gs

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataFidelity",
    "Deblur",
    "DegradationModel",
    "ExperimentConfig",
    "Inpaint",
    "IterateTrace",
    "Kernel",
    "LinearPotential",
    "NetworkPotential",
    "NumericalError",
    "ObjectiveGS",
    "ObjectiveProx",
    "PnPParams",
    "PotentialDenoiser",
    "SmoothNet",
    "SuperRes",
    "TrainConfig",
    "UnsupportedOperationError",
    "add_gaussian_noise",
    "analytic_linear_denoiser",
    "apply_model",
    "apply_model_adjoint",
    "as_field",
    "bernoulli_mask",
    "build_denoiser",
    "check_trace_descent",
    "conv_periodic",
    "cubic_upsample",
    "desk_images",
    "drs_diff_params",
    "drs_params",
    "estimate_lf",
    "evaluate_objective",
    "fine_tune_prox",
    "gaussian_kernel",
    "gs_params",
    "initial_guess",
    "jacobian_spectral_norm",
    "kernel_bank",
    "load_config",
    "load_kernel",
    "load_mask",
    "load_pfm",
    "load_png",
    "loss_gs",
    "loss_prox",
    "motion_kernel",
    "mse",
    "parse_config_text",
    "pgd_params",
    "power_iteration",
    "psnr",
    "restore_once",
    "run_gs_pnp",
    "run_prox_drs",
    "run_prox_drs_diff",
    "run_prox_pgd",
    "run_sweep",
    "save_kernel",
    "save_mask",
    "save_pfm",
    "save_png",
    "synthetic_texture",
    "train_gs",
    "__version__",
]
