"""Experiment orchestration: problem setup, sweeps, metric aggregation.

An :class:`ExperimentConfig` (built in code, from a flat ``key = value`` file,
or from CLI flags) fully determines a run. ``restore_once`` restores a single
image; ``run_sweep`` fans one axis (c, lambda, tau0, p, nu) out over the
image set and the kernel bank, writing one trace CSV per run plus a summary
CSV of PSNR aggregates.
"""

from __future__ import annotations

import dataclasses
import math
import os
import warnings
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import algorithms as alg
from .datasets import desk_images, synthetic_texture
from .denoiser import PotentialDenoiser, analytic_linear_denoiser
from .errors import ConfigError
from .field import Kernel, add_gaussian_noise, as_field, identity_kernel, psnr
from .fileio import atomic_write_text, load_kernel, load_png, save_png
from .kernels import gaussian_kernel, kernel_bank, motion_kernel
from .network import SmoothNet
from .denoiser import NetworkPotential
from .operators import (
    DataFidelity,
    Deblur,
    DegradationModel,
    Inpaint,
    SuperRes,
    apply_model,
    initial_guess,
)

SWEEP_AXES = ("c", "lambda", "tau0", "p", "nu")
PROBLEMS = ("deblur", "sr", "inpaint")
ALGOS = ("gs", "pgd", "drsdiff", "drs")


@dataclass
class ExperimentConfig:
    problem: str = "deblur"
    algo: str = "gs"
    nu: float = 0.03
    sigma_coeff: float = 2.0
    sigma: float | None = None
    lam: float | None = None
    tau0: float | None = None
    gamma: float = 0.1
    eta: float = 0.9
    beta: float | None = None
    alpha: float | None = None
    scale: int = 2
    mask_p: float = 0.5
    kernel: str = "gauss:1.0"
    model: str = "analytic:lo=0.1,hi=0.8,seed=0"
    max_iters: int | None = None
    eps_delta: float | None = None
    eps_tau: float = 1e-6
    init_sigma_factor: float = 10.0
    seed: int = 0
    images: str = "desk"
    image_size: int = 64
    sweep: str | None = None
    sweep_values: tuple[float, ...] = ()
    workers: int = 4
    out: str = "out"
    indicator: bool | None = None
    coercive: bool = False

    def validate(self) -> None:
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        if self.algo not in ALGOS:
            raise ConfigError(f"algo must be one of {ALGOS}, got {self.algo!r}")
        if self.nu < 0:
            raise ConfigError(f"nu must be >= 0, got {self.nu}")
        if self.sigma_coeff <= 0:
            raise ConfigError(f"sigma_coeff must be positive, got {self.sigma_coeff}")
        if not (0.0 <= self.mask_p < 1.0):
            raise ConfigError(f"mask_p must be in [0, 1), got {self.mask_p}")
        if self.scale < 1:
            raise ConfigError(f"scale must be >= 1, got {self.scale}")
        if self.sweep is not None:
            if self.sweep not in SWEEP_AXES:
                raise ConfigError(f"sweep must be one of {SWEEP_AXES}, got {self.sweep!r}")
            if not self.sweep_values:
                raise ConfigError("sweep requires sweep_values")
            if len(set(self.sweep_values)) != len(self.sweep_values):
                raise ConfigError("sweep_values must be distinct")
        if self.problem == "inpaint" and self.algo in ("pgd", "drsdiff") and self.indicator is not False:
            raise ConfigError(
                f"algo {self.algo!r} needs a smooth fidelity; inpainting defaults to the "
                "indicator, set indicator = false to use the quadratic masked term"
            )
        if self.sigma is not None and self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        if self.alpha is not None and not (0.0 < self.alpha <= 1.0):
            raise ConfigError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.tau0 is not None and self.tau0 <= 0:
            raise ConfigError(f"tau0 must be positive, got {self.tau0}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.image_size < 8:
            raise ConfigError(f"image_size must be >= 8, got {self.image_size}")
        if self.model.startswith("analytic:"):
            _parse_analytic_spec(self.model)  # raises on malformed specs
        elif not os.path.exists(self.model):
            raise ConfigError(f"model file not found: {self.model}")
        _resolve_kernel_spec(self.kernel, check_only=True)


_BOOL_WORDS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}

# config-file key -> dataclass field (lambda is a keyword, hence the alias)
_KEY_TO_FIELD = {f.name: f.name for f in dataclasses.fields(ExperimentConfig)}
_KEY_TO_FIELD["lambda"] = "lam"
del _KEY_TO_FIELD["lam"]

_OPTIONAL_FLOATS = {"sigma", "lam", "tau0", "beta", "alpha", "eps_delta"}
_OPTIONAL_INTS = {"max_iters"}
_FLOATS = {"nu", "sigma_coeff", "gamma", "eta", "mask_p", "eps_tau", "init_sigma_factor"}
_INTS = {"scale", "seed", "image_size", "workers"}
_STRINGS = {"problem", "algo", "kernel", "model", "images", "out"}


def _parse_value(field_name: str, raw: str):
    raw = raw.strip()
    if field_name in _STRINGS:
        return raw
    if field_name == "sweep":
        return None if raw.lower() in ("", "none") else raw
    if field_name == "sweep_values":
        if not raw:
            return ()
        try:
            return tuple(float(v) for v in raw.split(","))
        except ValueError:
            raise ConfigError(f"sweep_values must be comma-separated numbers, got {raw!r}")
    if field_name == "indicator":
        if raw.lower() in ("", "none", "auto"):
            return None
        if raw.lower() in _BOOL_WORDS:
            return _BOOL_WORDS[raw.lower()]
        raise ConfigError(f"indicator must be true/false/auto, got {raw!r}")
    if field_name == "coercive":
        if raw.lower() in _BOOL_WORDS:
            return _BOOL_WORDS[raw.lower()]
        raise ConfigError(f"coercive must be true/false, got {raw!r}")
    try:
        if field_name in _INTS:
            return int(raw)
        if field_name in _OPTIONAL_INTS:
            return None if raw.lower() == "none" else int(raw)
        if field_name in _FLOATS:
            return float(raw)
        if field_name in _OPTIONAL_FLOATS:
            return None if raw.lower() == "none" else float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {field_name}: {raw!r}")
    raise ConfigError(f"unhandled config field {field_name}")


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse a flat ``key = value`` document (# comments, blank lines ok)."""
    cfg = dataclasses.replace(base) if base is not None else ExperimentConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key not in _KEY_TO_FIELD:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        field_name = _KEY_TO_FIELD[key]
        setattr(cfg, field_name, _parse_value(field_name, raw))
    return cfg


def load_config(path: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}")
    return parse_config_text(text, base=base)


def config_to_text(cfg: ExperimentConfig) -> str:
    """Serialize a config back to the flat key = value format."""
    lines = []
    for f in dataclasses.fields(ExperimentConfig):
        key = "lambda" if f.name == "lam" else f.name
        v = getattr(cfg, f.name)
        if v is None:
            v = "none"
        elif isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, tuple):
            v = ",".join(repr(float(x)) for x in v)
        lines.append(f"{key} = {v}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- pieces


def bernoulli_mask(shape: tuple[int, int], p: float, seed: int) -> np.ndarray:
    """Observation mask with independent per-pixel masking probability p.

    True marks an observed pixel; the expected observed fraction is 1 - p.
    """
    if not (0.0 <= p < 1.0):
        raise ConfigError(f"mask probability must be in [0, 1), got {p}")
    rng = np.random.default_rng(seed)
    return rng.random(shape) >= p


def _resolve_kernel_spec(spec: str, size: int = 9, check_only: bool = False) -> Kernel | None:
    if spec == "bank":
        return None  # whole problem-appropriate bank, sweep only
    if spec == "identity":
        return identity_kernel()
    if spec.startswith("gauss:"):
        parts = spec[len("gauss:"):].split(",")
        try:
            if len(parts) == 1:
                return gaussian_kernel(size, float(parts[0]))
            if len(parts) == 3:
                return gaussian_kernel(size, float(parts[0]), float(parts[1]),
                                       angle=math.radians(float(parts[2])))
        except ValueError:
            pass
        raise ConfigError(f"bad kernel spec {spec!r}; want gauss:SIGMA or gauss:SX,SY,DEG")
    if spec.startswith("motion:"):
        try:
            return motion_kernel(size, int(spec[len("motion:"):]))
        except ValueError:
            raise ConfigError(f"bad kernel spec {spec!r}; want motion:SEED")
    if spec.startswith("bank:"):
        try:
            idx = int(spec[len("bank:"):])
        except ValueError:
            raise ConfigError(f"bad kernel spec {spec!r}; want bank:INDEX")
        bank = kernel_bank(size)
        if not (0 <= idx < len(bank)):
            raise ConfigError(f"kernel bank index {idx} out of range 0..{len(bank) - 1}")
        return bank[idx]
    if not os.path.exists(spec):
        raise ConfigError(f"kernel file not found: {spec}")
    if check_only:
        return None
    return load_kernel(spec)


def _parse_analytic_spec(spec: str) -> dict:
    """``analytic:lo=0.1,hi=0.8,seed=0`` -> dict of the spectrum parameters."""
    params = {"lo": 0.1, "hi": 0.8, "seed": 0}
    body = spec[len("analytic:"):]
    for part in body.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ConfigError(f"bad analytic denoiser spec {spec!r}")
        key, raw = part.split("=", 1)
        key = key.strip()
        if key not in params:
            raise ConfigError(f"unknown analytic denoiser key {key!r} in {spec!r}")
        try:
            params[key] = int(raw) if key == "seed" else float(raw)
        except ValueError:
            raise ConfigError(f"bad analytic denoiser value {raw!r} in {spec!r}")
    if not (0.0 <= params["lo"] <= params["hi"] < 1.0):
        raise ConfigError(f"analytic spectrum must satisfy 0 <= lo <= hi < 1, got {spec!r}")
    return params


_ANALYTIC_MAX_N = 4096  # dense n x n matrices beyond this are impractical


def build_denoiser(model_spec: str, sigma: float, alpha: float, coercive: bool,
                   shape: tuple[int, int, int]) -> PotentialDenoiser:
    """Instantiate the denoiser named by a model path or an analytic spec."""
    if model_spec.startswith("analytic:"):
        params = _parse_analytic_spec(model_spec)
        n = shape[0] * shape[1] * shape[2]
        if n > _ANALYTIC_MAX_N:
            raise ConfigError(
                f"analytic denoiser needs a dense {n}x{n} matrix; "
                f"use images of at most {_ANALYTIC_MAX_N} scalars"
            )
        try:
            return analytic_linear_denoiser(
                shape=shape, spectrum=(params["lo"], params["hi"]), seed=params["seed"],
                sigma=sigma, alpha=alpha, coercive=coercive,
            )
        except ValueError as e:
            raise ConfigError(str(e))
    if not os.path.exists(model_spec):
        raise ConfigError(f"model file not found: {model_spec}")
    net = SmoothNet.load(model_spec)
    if net.channels != shape[2]:
        raise ConfigError(
            f"model expects {net.channels}-channel images, got {shape[2]} channels"
        )
    try:
        return PotentialDenoiser(NetworkPotential(net), sigma=sigma, alpha=alpha, coercive=coercive)
    except ValueError as e:
        raise ConfigError(str(e))


def _stable_seed(config_seed: int, *parts) -> int:
    """Seed derived from run identity (not list position), so reordering the
    kernel bank or the image set cannot change any individual run."""
    text = "|".join(str(p) for p in parts)
    return (config_seed * 1000003 + zlib.crc32(text.encode("utf-8"))) % (2 ** 31)


def build_problem(cfg: ExperimentConfig, truth: np.ndarray, kernel: Kernel | None,
                  mask_seed: int, noise_seed: int) -> DataFidelity:
    """Degrade ``truth`` per the config and wrap observation + operator."""
    truth = as_field(truth)
    if kernel is not None and (kernel.shape[0] > truth.shape[0] or kernel.shape[1] > truth.shape[1]):
        raise ConfigError(
            f"kernel {kernel.shape} does not fit the {truth.shape[0]}x{truth.shape[1]} image; "
            "enlarge the image or shrink the kernel"
        )
    if cfg.problem == "deblur":
        model = DegradationModel(kind=Deblur(kernel=kernel), nu=cfg.nu)
        y = add_gaussian_noise(apply_model(model, truth), cfg.nu, seed=noise_seed)
        return DataFidelity(model=model, y=y, indicator=cfg.indicator)
    if cfg.problem == "sr":
        model = DegradationModel(kind=SuperRes(kernel=kernel, scale=cfg.scale), nu=cfg.nu)
        y = add_gaussian_noise(apply_model(model, truth), cfg.nu, seed=noise_seed)
        return DataFidelity(model=model, y=y, indicator=cfg.indicator)
    # inpaint: noise (if any) is applied before masking so the observation
    # stays feasible for the indicator fidelity
    mask = bernoulli_mask(truth.shape[:2], cfg.mask_p, seed=mask_seed)
    model = DegradationModel(kind=Inpaint(mask=mask), nu=cfg.nu)
    noisy = add_gaussian_noise(truth, cfg.nu, seed=noise_seed)
    y = apply_model(model, noisy)
    return DataFidelity(model=model, y=y, indicator=cfg.indicator)


def _effective_sigma(cfg: ExperimentConfig) -> float:
    if cfg.sigma is not None:
        return cfg.sigma
    sigma = cfg.sigma_coeff * cfg.nu
    if sigma == 0.0:
        return 10.0 / 255.0  # noiseless problems still want a working denoiser level
    return sigma


def _effective_alpha(cfg: ExperimentConfig) -> float:
    if cfg.alpha is not None:
        return cfg.alpha
    if cfg.algo == "drs" and cfg.problem == "inpaint":
        return 0.5  # halves the contraction factor, as the indicator case needs
    return 1.0


def build_params(cfg: ExperimentConfig, sigma: float | None = None) -> alg.PnPParams:
    sig = _effective_sigma(cfg) if sigma is None else sigma
    if cfg.algo == "gs":
        p = alg.gs_params(sig)
    elif cfg.algo == "pgd":
        p = alg.pgd_params(sig)
    elif cfg.algo == "drsdiff":
        p = alg.drs_diff_params(sig)
    else:
        p = alg.drs_params(sig)
    if cfg.lam is not None:
        p.lam = cfg.lam
        if cfg.algo == "gs" and cfg.tau0 is None:
            p.tau0 = cfg.lam
    if cfg.tau0 is not None:
        p.tau0 = cfg.tau0
    if cfg.beta is not None:
        p.beta = cfg.beta
    if cfg.max_iters is not None:
        p.max_iters = cfg.max_iters
    if cfg.eps_delta is not None:
        p.eps_delta = cfg.eps_delta
    p.gamma = cfg.gamma
    p.eta = cfg.eta
    p.eps_tau = cfg.eps_tau
    try:
        p.validate()
    except ValueError as e:
        raise ConfigError(str(e))
    return p


def _dispatch(cfg: ExperimentConfig, params: alg.PnPParams, fidelity: DataFidelity,
              den: PotentialDenoiser, truth: np.ndarray) -> tuple[np.ndarray, alg.IterateTrace]:
    if cfg.algo == "gs":
        init_sigma = cfg.init_sigma_factor * fidelity.model.nu
        if fidelity.model.nu == 0.0:
            init_sigma = cfg.init_sigma_factor * params.sigma
        return alg.run_gs_pnp(params, fidelity, den, ground_truth=truth, init_sigma=init_sigma)
    if cfg.algo == "pgd":
        return alg.run_prox_pgd(params, fidelity, den, ground_truth=truth)
    if cfg.algo == "drsdiff":
        return alg.run_prox_drs_diff(params, fidelity, den, ground_truth=truth)
    return alg.run_prox_drs(params, fidelity, den, ground_truth=truth)


def resolve_images(cfg: ExperimentConfig) -> list[tuple[str, np.ndarray]]:
    spec = cfg.images
    if spec == "desk":
        return sorted(desk_images().items())
    if spec.startswith("desk:"):
        bank = desk_images()
        names = spec[len("desk:"):].split("+")
        missing = [n for n in names if n not in bank]
        if missing:
            raise ConfigError(f"unknown bundled images {missing}; have {sorted(bank)}")
        return [(n, bank[n]) for n in names]
    if spec.startswith("texture:"):
        try:
            count = int(spec[len("texture:"):])
        except ValueError:
            raise ConfigError(f"bad images spec {spec!r}; want texture:COUNT")
        if count < 1:
            raise ConfigError("texture count must be >= 1")
        return [(f"texture{i}", synthetic_texture(i, size=cfg.image_size)) for i in range(count)]
    if os.path.isdir(spec):
        names = sorted(n for n in os.listdir(spec) if n.endswith(".png"))
        if not names:
            raise ConfigError(f"no .png files in {spec}")
        return [(n[:-4], load_png(os.path.join(spec, n))) for n in names]
    if os.path.exists(spec):
        name = os.path.splitext(os.path.basename(spec))[0]
        return [(name, load_png(spec))]
    raise ConfigError(f"images spec {spec!r} is not desk/desk:NAMES/texture:N or a path")


def _crop_for_problem(cfg: ExperimentConfig, x: np.ndarray) -> np.ndarray:
    """Trim so super-resolution decimation divides evenly."""
    if cfg.problem != "sr" or cfg.scale == 1:
        return x
    s = cfg.scale
    h = (x.shape[0] // s) * s
    w = (x.shape[1] // s) * s
    if h == 0 or w == 0:
        raise ConfigError(f"image too small for scale {s}")
    return x[:h, :w]


# ---------------------------------------------------------------- running


def _run_single(cfg: ExperimentConfig, name: str, truth: np.ndarray, kernel: Kernel | None,
                sigma: float, params: alg.PnPParams, run_tag: str) -> tuple[np.ndarray, dict]:
    truth = _crop_for_problem(cfg, truth)
    kernel_tag = "none" if kernel is None else f"{zlib.crc32(kernel.taps.tobytes()):08x}"
    mask_seed = _stable_seed(cfg.seed, "mask", name, kernel_tag, run_tag)
    noise_seed = _stable_seed(cfg.seed, "noise", name, kernel_tag, run_tag)
    fidelity = build_problem(cfg, truth, kernel, mask_seed=mask_seed, noise_seed=noise_seed)
    den = build_denoiser(cfg.model, sigma, _effective_alpha(cfg), cfg.coercive, truth.shape)

    observed_as_image = initial_guess(fidelity)
    restored, trace = _dispatch(cfg, params, fidelity, den, truth)

    os.makedirs(cfg.out, exist_ok=True)
    base = f"{run_tag}_{name}_{kernel_tag}" if run_tag else f"{name}_{kernel_tag}"
    trace_path = os.path.join(cfg.out, f"trace_{base}.csv")
    trace.write_csv(trace_path)
    save_png(os.path.join(cfg.out, f"restored_{base}.png"), restored)

    reread = alg.IterateTrace.read_csv(trace_path)
    descent_ok = alg.check_trace_descent(reread)
    if not descent_ok:
        warnings.warn(f"run {base}: monitored objective increased along the trace")

    psnrs = [r.psnr for r in trace.rows if r.psnr is not None]
    metrics = {
        "name": name,
        "kernel": kernel_tag,
        "psnr_input": psnr(observed_as_image, truth),
        "psnr_final": psnr(restored, truth),
        "psnr_best": max(psnrs) if psnrs else psnr(restored, truth),
        "iters": trace.rows[-1].k,
        "descent_ok": descent_ok,
        "trace_path": trace_path,
    }
    return restored, metrics


def restore_once(cfg: ExperimentConfig) -> tuple[np.ndarray, dict]:
    """Run the configured problem on the first configured image.

    Writes ``restored_*.png`` and ``trace_*.csv`` under ``cfg.out`` and
    returns the restored field plus a metrics dict (psnr_input, psnr_final,
    psnr_best, iters, descent_ok, trace_path).
    """
    cfg.validate()
    if cfg.sweep is not None:
        raise ConfigError("restore_once runs a single configuration; use run_sweep for sweeps")
    name, truth = resolve_images(cfg)[0]
    kernel = None if cfg.problem == "inpaint" else _resolve_kernel(cfg)
    sigma = _effective_sigma(cfg)
    params = build_params(cfg, sigma)
    return _run_single(cfg, name, truth, kernel, sigma, params, run_tag="")


def _resolve_kernel(cfg: ExperimentConfig) -> Kernel:
    k = _resolve_kernel_spec(cfg.kernel)
    if k is None:
        raise ConfigError("kernel spec 'bank' is only valid inside run_sweep")
    return k


def _sweep_kernels(cfg: ExperimentConfig) -> list[Kernel | None]:
    if cfg.problem == "inpaint":
        return [None]
    if cfg.kernel != "bank":
        return [_resolve_kernel(cfg)]
    bank = kernel_bank()
    # Gaussians act as anti-aliasing filters for decimation; the motion
    # trajectories are the blur bank.
    return bank[8:] if cfg.problem == "deblur" else bank[:8]


def _config_for_value(cfg: ExperimentConfig, axis: str, value: float) -> ExperimentConfig:
    run = dataclasses.replace(cfg, sweep=None, sweep_values=())
    if axis == "c":
        run.sigma_coeff = value
        run.sigma = None
    elif axis == "lambda":
        run.lam = value
    elif axis == "tau0":
        run.tau0 = value
    elif axis == "p":
        run.mask_p = value
    elif axis == "nu":
        run.nu = value
    return run


def run_sweep(cfg: ExperimentConfig) -> list[dict]:
    """Fan the sweep axis out over images x kernel bank, in a worker pool.

    Writes per-run trace CSVs plus ``summary.csv`` with columns
    value,psnr_final_mean,psnr_best_mean,iters_mean,runs,failures. Failed
    runs are counted and skipped in the aggregates; the sweep continues.
    """
    cfg.validate()
    if cfg.sweep is None:
        raise ConfigError("run_sweep needs a sweep axis; use restore_once otherwise")
    axis, values = cfg.sweep, cfg.sweep_values
    images = resolve_images(cfg)

    tasks = []
    for value in values:
        run_cfg = _config_for_value(cfg, axis, value)
        kernels = _sweep_kernels(run_cfg)
        for name, truth in images:
            for kernel in kernels:
                tag = f"{axis}={value:g}"
                tasks.append((value, run_cfg, name, truth, kernel, tag))

    def work(task):
        value, run_cfg, name, truth, kernel, tag = task
        sigma = _effective_sigma(run_cfg)
        params = build_params(run_cfg, sigma)
        _, metrics = _run_single(run_cfg, name, truth, kernel, sigma, params, run_tag=tag)
        return value, metrics

    results: dict[float, list[dict]] = {v: [] for v in values}
    failures: dict[float, int] = {v: 0 for v in values}
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        futures = [pool.submit(work, t) for t in tasks]
        for task, fut in zip(tasks, futures):
            try:
                value, metrics = fut.result()
            except Exception as e:  # per-run failure; sweep continues
                failures[task[0]] += 1
                warnings.warn(f"sweep run failed for {task[5]}/{task[2]}: {e}")
                continue
            if not metrics["descent_ok"]:
                failures[value] += 1
            else:
                results[value].append(metrics)

    def sorted_mean(vals: list[float]) -> float:
        # summing in sorted order makes the aggregate independent of the
        # kernel bank / completion ordering down to the last bit
        return math.fsum(sorted(vals)) / len(vals) if vals else math.nan

    summary = []
    for value in values:
        rows = results[value]
        summary.append({
            "value": value,
            "psnr_final_mean": sorted_mean([m["psnr_final"] for m in rows]),
            "psnr_best_mean": sorted_mean([m["psnr_best"] for m in rows]),
            "iters_mean": sorted_mean([float(m["iters"]) for m in rows]),
            "runs": len(rows),
            "failures": failures[value],
        })

    os.makedirs(cfg.out, exist_ok=True)
    lines = ["value,psnr_final_mean,psnr_best_mean,iters_mean,runs,failures"]
    for row in summary:
        lines.append(",".join([
            repr(float(row["value"])),
            repr(float(row["psnr_final_mean"])),
            repr(float(row["psnr_best_mean"])),
            repr(float(row["iters_mean"])),
            str(row["runs"]),
            str(row["failures"]),
        ]))
    atomic_write_text(os.path.join(cfg.out, "summary.csv"), "\n".join(lines) + "\n")
    return summary
