"""Command-line surface: restore, sweep, train, denoise, make-kernels.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from . import experiment as expmod
from .datasets import desk_images
from .denoiser import NetworkPotential
from .errors import ConfigError, NumericalError, UnsupportedOperationError
from .experiment import ExperimentConfig, load_config, restore_once, run_sweep
from .field import psnr
from .fileio import load_png, save_kernel, save_png
from .kernels import kernel_bank
from .network import SmoothNet
from .training import TrainConfig, fine_tune_prox, train_gs, write_train_trace


def _add_shared_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file; flags override it")
    p.add_argument("--problem", choices=expmod.PROBLEMS)
    p.add_argument("--algo", choices=expmod.ALGOS)
    p.add_argument("--nu", type=float)
    p.add_argument("--sigma-coeff", dest="sigma_coeff", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--tau0", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--scale", type=int)
    p.add_argument("--mask-p", dest="mask_p", type=float)
    p.add_argument("--kernel")
    p.add_argument("--model")
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--images")
    p.add_argument("--out")


def _build_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    for field in dataclasses.fields(ExperimentConfig):
        if hasattr(args, field.name) and getattr(args, field.name) is not None:
            setattr(cfg, field.name, getattr(args, field.name))
    return cfg


def _cmd_restore(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    _, metrics = restore_once(cfg)
    print(f"image {metrics['name']}  kernel {metrics['kernel']}")
    print(f"psnr_input {metrics['psnr_input']:.2f} dB")
    print(f"psnr_final {metrics['psnr_final']:.2f} dB")
    print(f"psnr_best  {metrics['psnr_best']:.2f} dB")
    print(f"iters {metrics['iters']}  descent_ok {metrics['descent_ok']}")
    print(f"trace {metrics['trace_path']}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    if args.sweep is not None:
        cfg.sweep = args.sweep
    if args.values is not None:
        try:
            cfg.sweep_values = tuple(float(v) for v in args.values.split(","))
        except ValueError:
            raise ConfigError(f"--values must be comma-separated numbers, got {args.values!r}")
    if args.workers is not None:
        cfg.workers = args.workers
    summary = run_sweep(cfg)
    print("value,psnr_final_mean,psnr_best_mean,iters_mean,runs,failures")
    for row in summary:
        print(f"{row['value']:g},{row['psnr_final_mean']:.4f},{row['psnr_best_mean']:.4f},"
              f"{row['iters_mean']:.1f},{row['runs']},{row['failures']}")
    print(f"summary {os.path.join(cfg.out, 'summary.csv')}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    tc = TrainConfig(
        channels=args.channels,
        epochs=args.epochs,
        batch_size=args.batch,
        patch_size=args.patch,
        learning_rate=args.lr,
        mu=args.mu,
        seed=args.seed if args.seed is not None else 0,
        activation=args.activation,
    )
    if args.batches_per_epoch is not None:
        tc.batches_per_epoch = args.batches_per_epoch
    try:
        tc.validate()
    except ValueError as e:
        raise ConfigError(str(e))
    images = list(desk_images().values())
    if args.channels == 1:
        images = [img.mean(axis=2, keepdims=True) for img in images]
    den, rows = train_gs(tc, images)
    if args.prox_epochs > 0:
        prox_tc = dataclasses.replace(tc, epochs=args.prox_epochs)
        den, prox_rows = fine_tune_prox(prox_tc, den, images)
        rows = rows + prox_rows
    core = den.core
    assert isinstance(core, NetworkPotential)
    core.net.save(args.out)
    if args.trace:
        write_train_trace(args.trace, rows)
        print(f"trace {args.trace}")
    print(f"model {args.out}  params {core.net.num_params()}  final_loss {rows[-1].loss:.6f}")
    return 0


def _cmd_denoise(args: argparse.Namespace) -> int:
    x = load_png(args.input)
    den = expmod.build_denoiser(args.model, args.sigma, args.alpha, args.coercive, x.shape)
    out = den.apply(x)
    save_png(args.out, out)
    msg = f"wrote {args.out}"
    if args.reference:
        ref = load_png(args.reference)
        msg += f"  psnr_in {psnr(x, ref):.2f} dB  psnr_out {psnr(out, ref):.2f} dB"
    print(msg)
    return 0


def _cmd_make_kernels(args: argparse.Namespace) -> int:
    os.makedirs(args.out, exist_ok=True)
    bank = kernel_bank(size=args.size)
    for i, k in enumerate(bank):
        path = os.path.join(args.out, f"kernel_{i:02d}.txt")
        save_kernel(path, k)
    print(f"wrote {len(bank)} kernels to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pnp",
        description="Plug-and-play image restoration with a gradient-step denoiser",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_restore = sub.add_parser("restore", help="restore a single image")
    _add_shared_flags(p_restore)
    p_restore.set_defaults(func=_cmd_restore)

    p_sweep = sub.add_parser("sweep", help="sweep one parameter axis over the image set")
    _add_shared_flags(p_sweep)
    p_sweep.add_argument("--sweep", choices=expmod.SWEEP_AXES)
    p_sweep.add_argument("--values", help="comma-separated sweep values")
    p_sweep.add_argument("--workers", type=int)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_train = sub.add_parser("train", help="train the denoiser on the bundled images")
    p_train.add_argument("--out", required=True, help="output model file")
    p_train.add_argument("--trace", help="optional training trace CSV")
    p_train.add_argument("--channels", type=int, default=3)
    p_train.add_argument("--epochs", type=int, default=50)
    p_train.add_argument("--batch", type=int, default=16)
    p_train.add_argument("--patch", type=int, default=32)
    p_train.add_argument("--batches-per-epoch", dest="batches_per_epoch", type=int)
    p_train.add_argument("--lr", type=float, default=1e-4)
    p_train.add_argument("--mu", type=float, default=1e-3)
    p_train.add_argument("--activation", choices=("elu", "softplus"), default="softplus")
    p_train.add_argument("--prox-epochs", dest="prox_epochs", type=int, default=0,
                         help="fine-tune with the spectral penalty for this many epochs")
    p_train.add_argument("--seed", type=int)
    p_train.set_defaults(func=_cmd_train)

    p_denoise = sub.add_parser("denoise", help="apply the denoiser to one image")
    p_denoise.add_argument("input", help="input PNG")
    p_denoise.add_argument("--model", required=True)
    p_denoise.add_argument("--sigma", type=float, required=True)
    p_denoise.add_argument("--alpha", type=float, default=1.0)
    p_denoise.add_argument("--coercive", action="store_true")
    p_denoise.add_argument("--reference", help="clean PNG for PSNR reporting")
    p_denoise.add_argument("--out", required=True)
    p_denoise.set_defaults(func=_cmd_denoise)

    p_mk = sub.add_parser("make-kernels", help="write the benchmark kernel bank")
    p_mk.add_argument("--out", required=True)
    p_mk.add_argument("--size", type=int, default=9)
    p_mk.set_defaults(func=_cmd_make_kernels)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except UnsupportedOperationError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
