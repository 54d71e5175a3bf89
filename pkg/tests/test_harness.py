"""Experiment configs, kernels, problem assembly, sweeps, and the CLI."""

import math
import os

import numpy as np
import pytest

from gspnp.cli import main
from gspnp.datasets import synthetic_texture
from gspnp.errors import ConfigError
from gspnp.experiment import (
    ExperimentConfig,
    _effective_alpha,
    _effective_sigma,
    _resolve_kernel_spec,
    _stable_seed,
    bernoulli_mask,
    build_denoiser,
    build_params,
    build_problem,
    config_to_text,
    load_config,
    parse_config_text,
    resolve_images,
    restore_once,
    run_sweep,
)
from gspnp.field import add_gaussian_noise, psnr
from gspnp.fileio import load_kernel, load_png, save_png
from gspnp.kernels import gaussian_kernel, kernel_bank, motion_kernel
from gspnp.network import SmoothNet
from gspnp.operators import Inpaint, SuperRes, apply_model


def write_cfg(tmp_path, name="run.cfg", **kv):
    lines = [f"{k} = {v}" for k, v in kv.items()]
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n")
    return str(path)


# ---------------------------------------------------------------- config text


def test_parse_config_basics():
    cfg = parse_config_text(
        """
        # a comment line
        problem = sr          # trailing comment
        algo = pgd
        nu = 0.01
        lambda = 1.25
        scale = 3
        indicator = false
        coercive = true
        sweep = c
        sweep_values = 0.5, 1.0, 2.0
        max_iters = none
        """
    )
    assert cfg.problem == "sr" and cfg.algo == "pgd"
    assert cfg.nu == 0.01 and cfg.lam == 1.25 and cfg.scale == 3
    assert cfg.indicator is False and cfg.coercive is True
    assert cfg.sweep == "c" and cfg.sweep_values == (0.5, 1.0, 2.0)
    assert cfg.max_iters is None


def test_parse_config_error_reports_line_number():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config_text("problem = deblur\nnot a config line\n")


def test_parse_config_unknown_key():
    with pytest.raises(ConfigError, match="unknown config key"):
        parse_config_text("blur_level = 3\n")


def test_parse_config_lam_key_is_rejected():
    # only the spelled-out alias is a valid key
    with pytest.raises(ConfigError, match="unknown config key"):
        parse_config_text("lam = 1.0\n")


def test_parse_config_bad_values():
    for line in ["nu = fast", "scale = 2.5", "indicator = maybe", "coercive = maybe",
                 "sweep_values = 1.0;2.0"]:
        with pytest.raises(ConfigError):
            parse_config_text(line + "\n")


def test_parse_config_indicator_states():
    assert parse_config_text("indicator = auto\n").indicator is None
    assert parse_config_text("indicator = none\n").indicator is None
    assert parse_config_text("indicator = true\n").indicator is True
    assert parse_config_text("indicator = no\n").indicator is False


def test_parse_config_base_overlay():
    base = ExperimentConfig(nu=0.05, algo="drs")
    cfg = parse_config_text("nu = 0.02\n", base=base)
    assert cfg.nu == 0.02 and cfg.algo == "drs"
    assert base.nu == 0.05  # the base is not mutated


def test_config_text_round_trip():
    cfg = ExperimentConfig(
        problem="inpaint", algo="drs", nu=0.01, lam=0.7, sigma=None, mask_p=0.3,
        sweep="p", sweep_values=(0.1, 0.5), indicator=True, coercive=False,
        model="analytic:lo=0.2,hi=0.5,seed=3", images="texture:2", out="results",
    )
    back = parse_config_text(config_to_text(cfg))
    assert back == cfg


def test_load_config_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("/nonexistent/path.cfg")


# ---------------------------------------------------------------- validation


def test_validate_catches_bad_fields():
    bad = [
        dict(problem="denoise"),
        dict(algo="admm"),
        dict(nu=-0.1),
        dict(sigma_coeff=0.0),
        dict(mask_p=1.0),
        dict(scale=0),
        dict(sweep="q", sweep_values=(1.0,)),
        dict(sweep="c"),  # no values
        dict(sweep="c", sweep_values=(1.0, 1.0)),  # duplicates
        dict(workers=0),
        dict(image_size=4),
        dict(model="analytic:lo=0.5,hi=0.2"),
        dict(model="/nonexistent/model.net"),
        dict(kernel="gauss:abc"),
        dict(kernel="/nonexistent/kernel.txt"),
        dict(sigma=-0.5),
        dict(alpha=1.5),
        dict(tau0=0.0),
    ]
    for kw in bad:
        with pytest.raises(ConfigError):
            ExperimentConfig(**kw).validate()
    ExperimentConfig().validate()


def test_validate_inpaint_needs_smooth_fidelity_for_pgd():
    with pytest.raises(ConfigError, match="smooth fidelity|indicator"):
        ExperimentConfig(problem="inpaint", algo="pgd").validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(problem="inpaint", algo="drsdiff", indicator=True).validate()
    ExperimentConfig(problem="inpaint", algo="pgd", indicator=False).validate()
    ExperimentConfig(problem="inpaint", algo="drs").validate()


# ---------------------------------------------------------------- kernels


def test_gaussian_kernel_against_direct_formula():
    size, sx, sy, ang = 7, 1.4, 0.7, 0.6
    k = gaussian_kernel(size, sx, sy, angle=ang)
    c = size // 2
    taps = np.empty((size, size))
    for i in range(size):
        for j in range(size):
            u = math.cos(ang) * (j - c) + math.sin(ang) * (i - c)
            v = -math.sin(ang) * (j - c) + math.cos(ang) * (i - c)
            taps[i, j] = math.exp(-0.5 * ((u / sx) ** 2 + (v / sy) ** 2))
    taps /= taps.sum()
    assert np.abs(k.taps - taps).max() < 1e-15
    assert k.center == (c, c)
    assert k.taps.sum() == pytest.approx(1.0)


def test_gaussian_kernel_isotropic_rotation_invariant():
    a = gaussian_kernel(9, 1.3, 1.3, angle=0.0)
    b = gaussian_kernel(9, 1.3, 1.3, angle=math.pi / 4)
    assert np.abs(a.taps - b.taps).max() < 1e-12


def test_gaussian_kernel_size_one_is_identity():
    k = gaussian_kernel(1, 5.0)
    assert k.taps.shape == (1, 1) and k.taps[0, 0] == 1.0
    assert k.center == (0, 0)


def test_gaussian_kernel_validation():
    with pytest.raises(ValueError):
        gaussian_kernel(4, 1.0)
    with pytest.raises(ValueError):
        gaussian_kernel(5, 0.0)
    with pytest.raises(ValueError):
        gaussian_kernel(5, 1.0, -1.0)


def test_motion_kernel_properties():
    k = motion_kernel(9, seed=3)
    assert k.taps.shape == (9, 9)
    assert np.all(k.taps >= 0.0)
    assert k.taps.sum() == pytest.approx(1.0)
    assert np.array_equal(k.taps, motion_kernel(9, seed=3).taps)
    assert not np.array_equal(k.taps, motion_kernel(9, seed=4).taps)


def test_motion_kernel_length_one_is_impulse():
    k = motion_kernel(9, seed=0, length=1)
    want = np.zeros((9, 9))
    want[4, 4] = 1.0
    assert np.array_equal(k.taps, want)


def test_motion_kernel_validation():
    with pytest.raises(ValueError):
        motion_kernel(8, seed=0)
    with pytest.raises(ValueError):
        motion_kernel(9, seed=0, length=0)


def test_kernel_bank_composition():
    bank = kernel_bank()
    assert len(bank) == 16
    for k in bank:
        assert k.taps.shape == (9, 9)
        assert k.center == (4, 4)
        assert k.taps.sum() == pytest.approx(1.0)
        assert np.all(k.taps >= 0.0)
    # first eight are Gaussians (symmetric under 180-degree rotation)
    for k in bank[:8]:
        assert np.abs(k.taps - k.taps[::-1, ::-1]).max() < 1e-12


def test_kernel_spec_resolution(tmp_path):
    assert _resolve_kernel_spec("identity").taps.shape == (1, 1)
    assert _resolve_kernel_spec("gauss:1.0").taps.shape == (9, 9)
    aniso = _resolve_kernel_spec("gauss:1.8,0.6,45")
    assert np.abs(aniso.taps - gaussian_kernel(9, 1.8, 0.6, angle=math.radians(45)).taps).max() == 0.0
    assert _resolve_kernel_spec("motion:5").taps.shape == (9, 9)
    assert np.array_equal(_resolve_kernel_spec("bank:3").taps, kernel_bank()[3].taps)
    assert _resolve_kernel_spec("bank") is None
    for bad in ("gauss:", "gauss:1,2", "motion:x", "bank:99", "bank:-1", "/missing.txt"):
        with pytest.raises(ConfigError):
            _resolve_kernel_spec(bad)


# ---------------------------------------------------------------- masks and seeds


def test_bernoulli_mask_deterministic_and_unbiased():
    m1 = bernoulli_mask((128, 128), p=0.3, seed=7)
    m2 = bernoulli_mask((128, 128), p=0.3, seed=7)
    assert np.array_equal(m1, m2)
    assert m1.dtype == np.bool_
    assert abs(m1.mean() - 0.7) < 0.02  # observed fraction is 1 - p
    assert not np.array_equal(m1, bernoulli_mask((128, 128), p=0.3, seed=8))


def test_bernoulli_mask_p_zero_observes_everything():
    assert bernoulli_mask((16, 16), p=0.0, seed=0).all()


def test_bernoulli_mask_validation():
    with pytest.raises(ConfigError):
        bernoulli_mask((8, 8), p=1.0, seed=0)
    with pytest.raises(ConfigError):
        bernoulli_mask((8, 8), p=-0.1, seed=0)


def test_stable_seed_depends_on_identity_not_order():
    a = _stable_seed(0, "noise", "astronaut", "abcd1234", "")
    assert a == _stable_seed(0, "noise", "astronaut", "abcd1234", "")
    assert a != _stable_seed(1, "noise", "astronaut", "abcd1234", "")
    assert a != _stable_seed(0, "mask", "astronaut", "abcd1234", "")
    assert a != _stable_seed(0, "noise", "chelsea", "abcd1234", "")
    assert 0 <= a < 2**31


# ---------------------------------------------------------------- images


def test_resolve_images_desk():
    imgs = resolve_images(ExperimentConfig(images="desk"))
    names = [n for n, _ in imgs]
    assert len(imgs) == 12
    assert names == sorted(names)
    assert names[0] == "astronaut"
    for _, im in imgs:
        assert im.shape == (64, 64, 3)
        assert 0.0 <= im.min() and im.max() <= 1.0


def test_resolve_images_desk_subset_and_missing():
    imgs = resolve_images(ExperimentConfig(images="desk:chelsea+rocket"))
    assert [n for n, _ in imgs] == ["chelsea", "rocket"]
    with pytest.raises(ConfigError, match="unknown bundled images"):
        resolve_images(ExperimentConfig(images="desk:nosuch"))


def test_resolve_images_texture():
    cfg = ExperimentConfig(images="texture:2", image_size=32)
    imgs = resolve_images(cfg)
    assert [n for n, _ in imgs] == ["texture0", "texture1"]
    for i, (_, im) in enumerate(imgs):
        assert im.shape == (32, 32, 3)
        assert np.array_equal(im, synthetic_texture(i, size=32))
    with pytest.raises(ConfigError):
        resolve_images(ExperimentConfig(images="texture:0"))
    with pytest.raises(ConfigError):
        resolve_images(ExperimentConfig(images="texture:x"))


def test_resolve_images_directory_and_file(tmp_path):
    for i, name in enumerate(("b.png", "a.png")):
        save_png(str(tmp_path / name), synthetic_texture(i, size=16))
    imgs = resolve_images(ExperimentConfig(images=str(tmp_path)))
    assert [n for n, _ in imgs] == ["a", "b"]  # sorted by filename
    single = resolve_images(ExperimentConfig(images=str(tmp_path / "b.png")))
    assert [n for n, _ in single] == ["b"]
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(ConfigError, match="no .png files"):
        resolve_images(ExperimentConfig(images=str(empty)))
    with pytest.raises(ConfigError):
        resolve_images(ExperimentConfig(images="not-a-spec"))


# ---------------------------------------------------------------- denoiser assembly


def test_build_denoiser_analytic():
    den = build_denoiser("analytic:lo=0.2,hi=0.5,seed=1", sigma=0.1, alpha=1.0,
                         coercive=False, shape=(8, 8, 1))
    assert den.lipschitz_bound() == pytest.approx(0.5)
    assert den.sigma == 0.1


def test_build_denoiser_analytic_size_cap():
    with pytest.raises(ConfigError, match="dense"):
        build_denoiser("analytic:lo=0.1,hi=0.5", sigma=0.1, alpha=1.0,
                       coercive=False, shape=(64, 64, 3))


def test_build_denoiser_rejects_bad_scalar_params():
    with pytest.raises(ConfigError):
        build_denoiser("analytic:lo=0.1,hi=0.5", sigma=-0.1, alpha=1.0,
                       coercive=False, shape=(8, 8, 1))


def test_build_denoiser_network_file(tmp_path):
    net = SmoothNet(channels=1, widths=(3,), ksize=3, seed=2)
    path = tmp_path / "m.net"
    net.save(str(path))
    den = build_denoiser(str(path), sigma=0.05, alpha=0.5, coercive=True, shape=(8, 8, 1))
    assert den.alpha == 0.5 and den.coercive
    out = den.apply(np.random.default_rng(0).random((8, 8, 1)))
    assert out.shape == (8, 8, 1)
    with pytest.raises(ConfigError, match="channel"):
        build_denoiser(str(path), sigma=0.05, alpha=1.0, coercive=False, shape=(8, 8, 3))
    with pytest.raises(ConfigError, match="not found"):
        build_denoiser(str(tmp_path / "missing.net"), sigma=0.05, alpha=1.0,
                       coercive=False, shape=(8, 8, 1))


def test_analytic_spec_parsing_errors():
    for bad in ("analytic:junk", "analytic:lo=0.1,zz=3", "analytic:lo=abc",
                "analytic:lo=0.2,hi=1.0"):
        with pytest.raises(ConfigError):
            ExperimentConfig(model=bad).validate()


# ---------------------------------------------------------------- parameter assembly


def test_effective_sigma_rules():
    assert _effective_sigma(ExperimentConfig(sigma=0.2, nu=0.03)) == 0.2
    assert _effective_sigma(ExperimentConfig(nu=0.03, sigma_coeff=2.0)) == pytest.approx(0.06)
    assert _effective_sigma(ExperimentConfig(nu=0.0)) == pytest.approx(10.0 / 255.0)


def test_effective_alpha_rules():
    assert _effective_alpha(ExperimentConfig(algo="drs", problem="inpaint")) == 0.5
    assert _effective_alpha(ExperimentConfig(algo="drs", problem="deblur")) == 1.0
    assert _effective_alpha(ExperimentConfig(algo="gs", problem="inpaint")) == 1.0
    assert _effective_alpha(ExperimentConfig(algo="drs", problem="inpaint", alpha=0.8)) == 0.8


def test_build_params_per_algorithm():
    p = build_params(ExperimentConfig(algo="gs", nu=0.03))
    assert p.lam == 0.065 and p.tau0 == 0.065 and p.max_iters == 400
    assert p.sigma == pytest.approx(0.06)

    p = build_params(ExperimentConfig(algo="gs", lam=0.5))
    assert p.lam == 0.5 and p.tau0 == 0.5  # tau0 follows lambda

    p = build_params(ExperimentConfig(algo="gs", lam=0.5, tau0=2.0))
    assert p.tau0 == 2.0  # explicit tau0 wins

    p = build_params(ExperimentConfig(algo="pgd"))
    assert p.lam == pytest.approx(1.0 / 0.99) and p.max_iters == 1000

    assert build_params(ExperimentConfig(algo="drsdiff")).beta == 1.0
    assert build_params(ExperimentConfig(algo="drs")).beta == 0.5
    assert build_params(ExperimentConfig(algo="drsdiff", beta=0.7)).beta == 0.7

    p = build_params(ExperimentConfig(algo="pgd", max_iters=7, eps_delta=1e-4))
    assert p.max_iters == 7 and p.eps_delta == 1e-4

    assert build_params(ExperimentConfig(), sigma=0.11).sigma == 0.11


def test_build_params_maps_validation_to_config_error():
    with pytest.raises(ConfigError):
        build_params(ExperimentConfig(gamma=0.7))
    with pytest.raises(ConfigError):
        build_params(ExperimentConfig(lam=-1.0))


# ---------------------------------------------------------------- problem assembly


def test_build_problem_deblur_reproducible():
    cfg = ExperimentConfig(problem="deblur", nu=0.02)
    truth = synthetic_texture(0, size=16)
    k = gaussian_kernel(5, 1.0)
    f1 = build_problem(cfg, truth, k, mask_seed=1, noise_seed=2)
    f2 = build_problem(cfg, truth, k, mask_seed=1, noise_seed=2)
    f3 = build_problem(cfg, truth, k, mask_seed=1, noise_seed=3)
    assert np.array_equal(f1.y, f2.y)
    assert not np.array_equal(f1.y, f3.y)
    want = add_gaussian_noise(apply_model(f1.model, truth), 0.02, seed=2)
    assert np.array_equal(f1.y, want)


def test_build_problem_inpaint_feasible_observation():
    cfg = ExperimentConfig(problem="inpaint", nu=0.05, mask_p=0.4)
    truth = synthetic_texture(1, size=16)
    fid = build_problem(cfg, truth, None, mask_seed=11, noise_seed=12)
    mask = fid.model.kind.mask
    assert isinstance(fid.model.kind, Inpaint)
    assert fid.indicator  # auto-selected
    off = fid.y * (~mask)[:, :, None]
    assert np.all(off == 0.0)
    # noise lands before the mask: observed pixels match the noisy truth
    noisy = add_gaussian_noise(truth, 0.05, seed=12)
    assert np.array_equal(fid.y * mask[:, :, None], noisy * mask[:, :, None])
    assert np.array_equal(mask, bernoulli_mask((16, 16), 0.4, seed=11))


def test_build_problem_sr_shapes():
    cfg = ExperimentConfig(problem="sr", scale=2, nu=0.0)
    truth = synthetic_texture(2, size=16)
    fid = build_problem(cfg, truth, gaussian_kernel(5, 1.0), mask_seed=0, noise_seed=0)
    assert isinstance(fid.model.kind, SuperRes)
    assert fid.y.shape == (8, 8, 3)
    assert fid.x_shape == (16, 16, 3)


def test_build_problem_kernel_must_fit():
    cfg = ExperimentConfig(problem="deblur")
    with pytest.raises(ConfigError, match="does not fit"):
        build_problem(cfg, synthetic_texture(0, size=8), gaussian_kernel(9, 1.0),
                      mask_seed=0, noise_seed=0)


# ---------------------------------------------------------------- restore_once


def test_restore_once_exact_inpainting(tmp_path):
    # everything observed, no noise, identity denoiser: restoration is exact
    cfg = ExperimentConfig(
        problem="inpaint", algo="drs", nu=0.0, mask_p=0.0,
        model="analytic:lo=0,hi=0,seed=0", images="texture:1", image_size=16,
        max_iters=5, out=str(tmp_path / "out"),
    )
    restored, metrics = restore_once(cfg)
    assert metrics["psnr_final"] == math.inf
    assert metrics["descent_ok"]
    assert os.path.exists(metrics["trace_path"])
    assert os.path.exists(os.path.join(cfg.out, f"restored_texture0_{metrics['kernel']}.png"))
    truth = synthetic_texture(0, size=16)
    assert np.abs(restored - truth).max() < 1e-12


def test_restore_once_smoke_deblur(tmp_path):
    cfg = ExperimentConfig(
        problem="deblur", algo="gs", nu=0.03, kernel="gauss:1.0",
        model="analytic:lo=0.1,hi=0.4,seed=0", images="texture:1", image_size=16,
        out=str(tmp_path / "out"),
    )
    restored, metrics = restore_once(cfg)
    assert restored.shape == (16, 16, 3)
    assert metrics["iters"] >= 1
    assert metrics["descent_ok"]
    assert set(metrics) >= {"name", "kernel", "psnr_input", "psnr_final", "psnr_best",
                            "iters", "descent_ok", "trace_path"}


def test_restore_once_rejects_sweep_and_bank(tmp_path):
    cfg = ExperimentConfig(sweep="c", sweep_values=(1.0, 2.0), out=str(tmp_path))
    with pytest.raises(ConfigError, match="single configuration"):
        restore_once(cfg)
    cfg2 = ExperimentConfig(kernel="bank", images="texture:1", image_size=16,
                            model="analytic:lo=0.1,hi=0.4", out=str(tmp_path))
    with pytest.raises(ConfigError, match="bank"):
        restore_once(cfg2)


def test_restore_once_desk_model_margin(desk_model_path, tmp_path):
    # trained-denoiser deblurring clears the observation by a wide margin
    cfg = ExperimentConfig(
        problem="deblur", algo="gs", nu=0.03, kernel="gauss:1.0",
        model=desk_model_path, images="desk:astronaut", out=str(tmp_path / "out"),
    )
    _, metrics = restore_once(cfg)
    assert metrics["psnr_final"] - metrics["psnr_input"] >= 2.4
    assert metrics["descent_ok"]


# ---------------------------------------------------------------- run_sweep


def sweep_cfg(tmp_path, sub, **kw):
    base = dict(
        problem="deblur", algo="gs", nu=0.03, kernel="gauss:1.0",
        model="analytic:lo=0.1,hi=0.4,seed=0", images="texture:1", image_size=16,
        max_iters=40, out=str(tmp_path / sub),
    )
    base.update(kw)
    return ExperimentConfig(**base)


def test_run_sweep_single_value(tmp_path):
    cfg = sweep_cfg(tmp_path, "s1", sweep="lambda", sweep_values=(1.0,))
    summary = run_sweep(cfg)
    assert len(summary) == 1
    row = summary[0]
    assert row["value"] == 1.0 and row["runs"] == 1 and row["failures"] == 0
    assert math.isfinite(row["psnr_final_mean"])
    text = open(os.path.join(cfg.out, "summary.csv")).read()
    lines = text.splitlines()
    assert lines[0] == "value,psnr_final_mean,psnr_best_mean,iters_mean,runs,failures"
    cells = lines[1].split(",")
    assert float(cells[0]) == 1.0 and cells[4] == "1" and cells[5] == "0"
    traces = [n for n in os.listdir(cfg.out) if n.startswith("trace_")]
    assert len(traces) == 1 and traces[0].startswith("trace_lambda=1")


def test_run_sweep_needs_axis(tmp_path):
    with pytest.raises(ConfigError, match="sweep axis"):
        run_sweep(sweep_cfg(tmp_path, "s2"))


def test_run_sweep_tau0_iteration_counts_decrease(tmp_path):
    cfg = sweep_cfg(
        tmp_path, "s3", sweep="tau0", sweep_values=(0.1, 1.0, 2.0),
        lam=1.0, eps_delta=1e-6, max_iters=400, image_size=24,
        model="analytic:lo=0.1,hi=0.3,seed=0",
    )
    summary = run_sweep(cfg)
    iters = [row["iters_mean"] for row in summary]
    assert iters[0] > iters[1] > iters[2]
    assert all(row["failures"] == 0 for row in summary)


def test_run_sweep_worker_count_does_not_change_results(tmp_path):
    kw = dict(sweep="nu", sweep_values=(0.01, 0.05), images="texture:2")
    s1 = run_sweep(sweep_cfg(tmp_path, "w1", workers=1, **kw))
    s4 = run_sweep(sweep_cfg(tmp_path, "w4", workers=4, **kw))
    b1 = open(os.path.join(str(tmp_path / "w1"), "summary.csv"), "rb").read()
    b4 = open(os.path.join(str(tmp_path / "w4"), "summary.csv"), "rb").read()
    assert b1 == b4
    assert s1 == s4


def test_run_sweep_kernel_bank_fan_out(tmp_path):
    cfg = sweep_cfg(tmp_path, "s5", sweep="nu", sweep_values=(0.02,), kernel="bank",
                    max_iters=10)
    summary = run_sweep(cfg)
    assert summary[0]["runs"] == 8  # motion half of the bank for deblurring
    traces = [n for n in os.listdir(cfg.out) if n.startswith("trace_")]
    assert len(traces) == 8


def test_run_sweep_sigma_coeff_curve_with_desk_model(desk_model_path, tmp_path):
    # denoiser strength c = sigma/nu has an interior optimum
    cfg = ExperimentConfig(
        problem="deblur", algo="gs", nu=0.03, kernel="gauss:1.0",
        model=desk_model_path, images="desk:astronaut",
        sweep="c", sweep_values=(0.1, 2.0, 10.0), workers=3,
        out=str(tmp_path / "csweep"),
    )
    summary = run_sweep(cfg)
    psnrs = {row["value"]: row["psnr_final_mean"] for row in summary}
    assert psnrs[2.0] > psnrs[0.1]
    assert psnrs[2.0] > psnrs[10.0]
    assert all(row["failures"] == 0 for row in summary)


# ---------------------------------------------------------------- CLI


def cli_cfg_file(tmp_path, **kv):
    return write_cfg(tmp_path, **kv)


def small_image_file(tmp_path):
    path = str(tmp_path / "small.png")
    save_png(path, synthetic_texture(0, size=16))
    return path


def test_cli_restore_success(tmp_path, capsys):
    out = str(tmp_path / "out")
    code = main([
        "restore", "--problem", "deblur", "--algo", "gs", "--nu", "0.03",
        "--kernel", "gauss:1.0", "--model", "analytic:lo=0.1,hi=0.4,seed=0",
        "--images", small_image_file(tmp_path), "--max-iters", "30", "--out", out,
    ])
    captured = capsys.readouterr()
    assert code == 0
    assert "psnr_final" in captured.out and "iters" in captured.out
    assert os.path.exists(os.path.join(out, "summary.csv")) is False
    assert any(n.startswith("trace_") for n in os.listdir(out))


def test_cli_restore_reads_config_file(tmp_path, capsys):
    out = str(tmp_path / "out")
    cfg = cli_cfg_file(
        tmp_path, problem="deblur", algo="gs", nu=0.03,
        model="analytic:lo=0.1,hi=0.4,seed=0", images="texture:1",
        image_size=16, max_iters=20, out=out,
    )
    code = main(["restore", "--config", cfg])
    assert code == 0
    assert "psnr_input" in capsys.readouterr().out


def test_cli_flag_overrides_config(tmp_path, capsys):
    out = str(tmp_path / "out")
    cfg = cli_cfg_file(
        tmp_path, problem="deblur", algo="gs", nu=0.03,
        model="analytic:lo=0.1,hi=0.4,seed=0", images="texture:1",
        image_size=16, max_iters=500, out=out,
    )
    code = main(["restore", "--config", cfg, "--max-iters", "3"])
    assert code == 0
    assert "iters 3" in capsys.readouterr().out


def test_cli_exit_two_on_config_errors(tmp_path, capsys):
    # unknown key in the config file
    bad = write_cfg(tmp_path, name="bad.cfg", blur="yes")
    assert main(["restore", "--config", bad]) == 2
    assert "config error" in capsys.readouterr().err

    # kernel larger than the image
    cfg = cli_cfg_file(
        tmp_path, problem="deblur", algo="gs", model="analytic:lo=0.1,hi=0.4",
        images="texture:1", image_size=8, out=str(tmp_path / "o2"),
    )
    assert main(["restore", "--config", cfg]) == 2
    assert "config error" in capsys.readouterr().err

    # indicator fidelity with a gradient-based scheme
    assert main([
        "restore", "--problem", "inpaint", "--algo", "pgd",
        "--model", "analytic:lo=0.1,hi=0.4", "--images", "texture:1",
        "--out", str(tmp_path / "o3"),
    ]) == 2
    assert "config error" in capsys.readouterr().err

    # missing config file
    assert main(["restore", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_cli_exit_three_on_numerical_failure(tmp_path, capsys):
    cfg = cli_cfg_file(
        tmp_path, name="blowup.cfg", problem="deblur", algo="gs", nu=0.03,
        kernel="gauss:1.0", model="analytic:lo=0.1,hi=0.8,seed=0",
        images="texture:1", image_size=16, out=str(tmp_path / "o4"),
        **{"lambda": "1e-308"},
    )
    assert main(["restore", "--config", cfg]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_cli_sweep_success(tmp_path, capsys):
    out = str(tmp_path / "out")
    code = main([
        "sweep", "--problem", "deblur", "--algo", "gs", "--nu", "0.03",
        "--kernel", "gauss:1.0", "--model", "analytic:lo=0.1,hi=0.4,seed=0",
        "--images", small_image_file(tmp_path), "--max-iters", "20",
        "--sweep", "lambda", "--values", "0.5,1.0", "--workers", "2", "--out", out,
    ])
    captured = capsys.readouterr()
    assert code == 0
    assert "value,psnr_final_mean" in captured.out
    summary = open(os.path.join(out, "summary.csv")).read()
    for line in summary.splitlines()[1:]:
        assert line.endswith(",1,0")  # one run per value, no failures


def test_cli_sweep_bad_values(tmp_path, capsys):
    assert main([
        "sweep", "--model", "analytic:lo=0.1,hi=0.4", "--images", "texture:1",
        "--sweep", "lambda", "--values", "a,b", "--out", str(tmp_path / "o"),
    ]) == 2


def test_cli_make_kernels(tmp_path, capsys):
    out = str(tmp_path / "kernels")
    assert main(["make-kernels", "--out", out]) == 0
    files = sorted(os.listdir(out))
    assert files == [f"kernel_{i:02d}.txt" for i in range(16)]
    for name in files:
        k = load_kernel(os.path.join(out, name))
        assert k.taps.sum() == pytest.approx(1.0, abs=1e-9)


def test_cli_denoise(tmp_path, capsys):
    src = str(tmp_path / "in.png")
    save_png(src, synthetic_texture(0, size=16))
    out = str(tmp_path / "out.png")
    code = main([
        "denoise", src, "--model", "analytic:lo=0.1,hi=0.4,seed=0",
        "--sigma", "0.1", "--reference", src, "--out", out,
    ])
    captured = capsys.readouterr()
    assert code == 0
    assert os.path.exists(out)
    assert "psnr_in" in captured.out and "psnr_out" in captured.out
    assert load_png(out).shape == (16, 16, 3)


def test_cli_train_writes_model_and_trace(tmp_path, capsys):
    model_path = str(tmp_path / "tiny.net")
    trace_path = str(tmp_path / "trace.csv")
    code = main([
        "train", "--out", model_path, "--trace", trace_path, "--channels", "1",
        "--epochs", "1", "--batch", "2", "--patch", "8", "--batches-per-epoch", "1",
        "--lr", "1e-3", "--seed", "0",
    ])
    captured = capsys.readouterr()
    assert code == 0
    assert "model" in captured.out and "final_loss" in captured.out
    net = SmoothNet.load(model_path)
    assert net.channels == 1
    lines = open(trace_path).read().splitlines()
    assert lines[0] == "epoch,loss,penaltyMean,specNormMean"
    assert len(lines) == 2


def test_cli_train_validates_arguments(tmp_path, capsys):
    assert main([
        "train", "--out", str(tmp_path / "m.net"), "--epochs", "-1",
    ]) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_requires_subcommand(capsys):
    assert main([]) == 2
    assert main(["no-such-command"]) == 2
