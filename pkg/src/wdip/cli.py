"""Command-line interface: ``wdip {deblur,init-kernel,simulate,bench,demo-lag}``.

Configuration precedence: built-in defaults < ``--config`` file (JSON or
YAML) < command-line flags. The resolved configuration is written into every
output directory as ``config.json``.
"""

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import OptimizationAborted, WDIPError
from .io import read_image, read_kernel, write_grid, write_image, write_json, write_kernel_png, write_kernel_text

log = logging.getLogger("wdip")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_ABORTED = 3

OUTPUT_ROOT_ENV = "WDIP_OUTPUT_ROOT"

SOLVE_DEFAULTS = {
    "iterations": 5000,
    "kernel_size": None,
    "mode": "wdip",
    "alpha": 1e-3,
    "beta": 1e-4,
    "lam": 1e-3,
    "wiener_c": 0.025,
    "ssim_switch_iter": 1000,
    "lr_net": 1e-4,
    "lr_image": None,
    "lr_kernel": 1e-6,
    "profile": "reference",
    "seed": 0,
    "kernel_init": "psd",
    "mass_fraction": 0.9,
    "sigma_k": None,
}
BENCH_DEFAULTS = {**SOLVE_DEFAULTS, "seeds": [0, 1, 2], "workers": 1, "preset": "compare", "sizes": None}


class UsageError(Exception):
    pass


def output_root():
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def load_config_file(path):
    text = Path(path).read_text()
    if str(path).endswith((".yaml", ".yml")):
        import yaml

        doc = yaml.safe_load(text)
    else:
        doc = json.loads(text)
    if not isinstance(doc, dict):
        raise UsageError(f"config file {path} must hold a mapping")
    return doc


def resolve(defaults, args):
    """Merge defaults, the optional config file and explicitly given flags."""
    cfg = dict(defaults)
    if getattr(args, "config", None):
        doc = load_config_file(args.config)
        unknown = sorted(set(doc) - set(defaults))
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        cfg.update(doc)
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _add_solve_flags(p):
    g = p.add_argument_group("solver")
    g.add_argument("--iterations", type=int)
    g.add_argument("--kernel-size", dest="kernel_size", type=int)
    g.add_argument("--mode", choices=("wdip", "selfdeblur"))
    g.add_argument("--alpha", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--lambda", dest="lam", type=float)
    g.add_argument("--wiener-c", dest="wiener_c", type=float)
    g.add_argument("--ssim-switch-iter", dest="ssim_switch_iter", type=int)
    g.add_argument("--lr-net", dest="lr_net", type=float)
    g.add_argument("--lr-image", dest="lr_image", type=float)
    g.add_argument("--lr-kernel", dest="lr_kernel", type=float)
    g.add_argument("--profile", choices=("reference", "desk", "miniature"))
    g.add_argument("--seed", type=int)
    g.add_argument("--kernel-init", dest="kernel_init", choices=("psd", "uniform"))
    g.add_argument("--mass-fraction", dest="mass_fraction", type=float)
    g.add_argument("--sigma-k", dest="sigma_k", type=float)
    p.add_argument("--config", help="JSON or YAML file with config overrides")


def _estimator(cfg, aux_init=None):
    from .estimators import WienerGuidedDIP

    keys = set(WienerGuidedDIP().get_params())
    params = {k: v for k, v in cfg.items() if k in keys}
    if aux_init is not None:
        params["kernel_init"] = aux_init
    return WienerGuidedDIP(**params)


# -- deblur -----------------------------------------------------------------

def cmd_deblur(args):
    from .bench import to_y_channel
    from .metrics import error_ratio, psnr, ssim

    cfg = resolve(SOLVE_DEFAULTS, args)
    blurred = read_image(args.input)
    aux_init = None
    if args.kernel:
        aux_init = read_kernel(args.kernel)
        if cfg["kernel_size"] is None:
            cfg["kernel_size"] = aux_init.shape[0]
        elif cfg["kernel_size"] != aux_init.shape[0]:
            raise UsageError("--kernel-size disagrees with the size of --kernel")
    if cfg["kernel_size"] is None:
        raise UsageError("give --kernel-size or --kernel")
    out = Path(args.output) if args.output else output_root() / Path(args.input).stem
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config.json", {**cfg, "input": str(args.input), "kernel": args.kernel})

    est = _estimator(cfg, aux_init)
    try:
        est.fit(blurred)
    except OptimizationAborted as exc:
        if exc.trace is not None:
            exc.trace.write_csv(out / "trace.csv")
        print(f"optimization aborted: {exc}", file=sys.stderr)
        return EXIT_ABORTED

    write_image(out / "sharp.png", est.image_)
    write_grid(out / "sharp.npy", est.image_)
    write_kernel_png(out / "kernel.png", est.kernel_)
    write_kernel_text(out / "kernel.txt", est.kernel_)
    write_kernel_text(out / "aux_kernel.txt", est.aux_kernel_)
    est.trace_.write_csv(out / "trace.csv")
    if args.truth:
        truth = read_image(args.truth)
        t_luma = to_y_channel(truth)[0] if truth.ndim == 3 else truth
        metrics = {"psnr": psnr(est.luma_, t_luma), "ssim": ssim(est.luma_, t_luma)}
        if args.true_kernel:
            b_luma = to_y_channel(blurred)[0] if blurred.ndim == 3 else blurred
            metrics["error_ratio"] = error_ratio(b_luma, t_luma, est.kernel_, read_kernel(args.true_kernel),
                                                 cfg["wiener_c"] or 0.025)
        write_json(out / "metrics.json", metrics)
        print(f"PSNR {metrics['psnr']:.2f} dB  SSIM {metrics['ssim']:.4f}")
    print(f"wrote {out}")
    return EXIT_OK


# -- init-kernel --------------------------------------------------------------

IMAGE_SUFFIXES = (".png", ".tif", ".tiff", ".jpg", ".jpeg", ".bmp", ".npy")


def _read_sizes(path):
    sizes = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#") or row[0].strip() in ("image", "filename", "name"):
                continue
            sizes[row[0].strip()] = int(row[1])
    return sizes


def cmd_init_kernel(args):
    from .bench import to_y_channel
    from .kernel_init import dataset_sigma, init_kernel

    directory = Path(args.images)
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise UsageError(f"no images found in {directory}")
    if args.sizes:
        table = _read_sizes(args.sizes)
        missing = [p.name for p in files if p.name not in table and p.stem not in table]
        if missing:
            raise UsageError(f"no kernel size for: {', '.join(missing)}")
        sizes = [table.get(p.name, table.get(p.stem)) for p in files]
    elif args.kernel_size:
        sizes = [args.kernel_size] * len(files)
    else:
        raise UsageError("give --sizes or --kernel-size")
    images = []
    for p in files:
        im = read_image(p)
        images.append(to_y_channel(im)[0] if im.ndim == 3 else im)
    spec = dataset_sigma(images, sizes, args.mass_fraction)
    n = args.kernel_size or sizes[0]
    kernel = init_kernel(spec, n)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_kernel_text(out, kernel)
    report = Path(args.report) if args.report else out.with_suffix(".spec.txt")
    with open(report, "w") as fh:
        fh.write(f"sigma_k = {spec.sigma_k!r}\n")
        fh.write(f"kernel_size = {n}\n")
        fh.write(f"kernel_std_px = {spec.sigma_k * n!r}\n")
        fh.write(f"mass_fraction = {args.mass_fraction!r}\n")
        fh.write(f"num_images = {len(files)}\n")
        for p, s, v in zip(files, sizes, spec.per_image_sigmas):
            fh.write(f"image.{p.name} = {v!r}  # kernel_size {s}\n")
    print(f"sigma_k = {spec.sigma_k:.6g}; kernel written to {out}")
    return EXIT_OK


# -- simulate ---------------------------------------------------------------

def cmd_simulate(args):
    from . import synthetic
    from .bench import save_dataset, synthesize_blur
    from .imagefreq import gaussian_kernel

    if args.preset:
        entries = simulate_preset(args.preset, args.noise_sigma, args.seed)
    else:
        if args.sharp:
            sharp = read_image(args.sharp)
            if sharp.ndim == 3:
                sharp = sharp @ np.array([0.299, 0.587, 0.114])
        else:
            sharp = synthetic.load_scene(args.scene, args.size)
        if args.kernel:
            k = read_kernel(args.kernel)
        elif args.gaussian:
            k = gaussian_kernel(args.kernel_size, args.gaussian)
        else:
            k = synthetic.motion_kernel(args.kernel_size, args.seed)
        entries = [synthesize_blur(sharp, k, args.noise_sigma, args.seed, id=args.id)]
    out = Path(args.output) if args.output else output_root() / "dataset"
    manifest = save_dataset(entries, out)
    print(f"wrote {len(entries)} entries; manifest {manifest}")
    return EXIT_OK


def simulate_preset(name, noise_sigma=0.01, seed=0):
    """Named synthetic datasets used by the benchmark and acceptance suite."""
    from . import synthetic
    from .bench import synthesize_blur

    if name == "desk":
        return [synthesize_blur(synthetic.load_scene("camera", 128), synthetic.motion_kernel(13, seed),
                                noise_sigma, seed + 1, id="desk_camera")]
    if name == "mini-suite":
        return [
            synthesize_blur(synthetic.load_scene("camera", 64), synthetic.motion_kernel(9, seed), noise_sigma,
                            seed + 1, id="mini_camera"),
            synthesize_blur(synthetic.load_scene("astronaut", 64), synthetic.motion_kernel(9, seed + 1),
                            noise_sigma, seed + 2, id="mini_astronaut"),
        ]
    if name == "microscopy":
        entries = []
        for i in range(4):
            img, _ = synthetic.vessel_image(255, seed=seed + i)
            for j, k in enumerate(synthetic.microscopy_kernels()):
                entries.append(synthesize_blur(img, k, noise_sigma, seed + 10 * i + j, id=f"vessel{i}_k{j}",
                                               microscopy=True))
        return entries
    raise UsageError(f"unknown preset {name!r}")


# -- bench ------------------------------------------------------------------

def cmd_bench(args):
    from .bench import ABLATION_VARIANTS, COMPARE_VARIANTS, ExperimentPlan, format_table, kernel_size_sensitivity
    from .bench import load_manifest
    from .solver import SolveConfig
    from .objective import HQSWeights

    cfg = resolve(BENCH_DEFAULTS, args)
    entries = load_manifest(args.manifest)
    if not entries:
        raise UsageError(f"manifest {args.manifest} has no entries")
    out = Path(args.output) if args.output else output_root() / "bench"
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config.json", {**cfg, "manifest": str(args.manifest)})
    base = SolveConfig(
        iterations=cfg["iterations"], kernel_size=entries[0].kernel_size_estimate,
        weights=HQSWeights(cfg["alpha"], cfg["beta"], cfg["lam"], cfg["wiener_c"], cfg["ssim_switch_iter"]),
        profile=cfg["profile"], lr_net=cfg["lr_net"], lr_image=cfg["lr_image"], lr_kernel=cfg["lr_kernel"],
        snapshot_stride=0)
    seeds = tuple(cfg["seeds"])
    preset = cfg["preset"]
    if preset == "kernel-size":
        if not cfg["sizes"]:
            raise UsageError("kernel-size preset needs --sizes")
        report = kernel_size_sensitivity(entries[0], cfg["sizes"], base, seeds, output_dir=out,
                                         workers=cfg["workers"], mass_fraction=cfg["mass_fraction"])
        for row in report["sensitivity"]:
            print(f"{row['mode']}\tn={row['kernel_size']}\tPSNR {row['psnr']:.3f}\tΔ {row['difference']:+.3f}")
    else:
        variants = {"compare": COMPARE_VARIANTS, "ablation": ABLATION_VARIANTS,
                    "seeds": {"wdip": {}}}.get(preset)
        if variants is None:
            raise UsageError(f"unknown preset {preset!r}")
        variants = {k: dict(v) for k, v in variants.items()}
        if cfg["kernel_init"] == "uniform":
            for v in variants.values():
                v.setdefault("init", "uniform")
        plan = ExperimentPlan(entries, variants, seeds, base, cfg["mass_fraction"], out, cfg["workers"])
        from .bench import run_experiment

        report = run_experiment(plan)
        print(format_table(report["rows"]))
    failures = [r for r in report["runs"] if "error" in r]
    for r in failures:
        print(f"FAILED {r['entry']}/{r['variant']}/seed{r['seed']}: {r['error']}", file=sys.stderr)
    return EXIT_FAILURE if failures else EXIT_OK


# -- demo-lag ---------------------------------------------------------------

def cmd_demo_lag(args):
    from .kernel_init import dataset_sigma, init_kernel
    from .solver import dip_fit_demo, wiener_target

    blurred = read_image(args.input)
    if blurred.ndim == 3:
        from .bench import to_y_channel

        blurred = to_y_channel(blurred)[0]
    if args.kernel:
        kernel = read_kernel(args.kernel)
    else:
        if not args.kernel_size:
            raise UsageError("give --kernel or --kernel-size")
        kernel = init_kernel(dataset_sigma([blurred], [args.kernel_size]), args.kernel_size)
    target = wiener_target(blurred, kernel, args.wiener_c)
    fit_b = dip_fit_demo(blurred, args.iterations, args.seed, args.profile, args.lr)
    fit_w = dip_fit_demo(target, args.iterations, args.seed, args.profile, args.lr)

    out = Path(args.output) if args.output else output_root() / "demo-lag"
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config.json", {k: v for k, v in vars(args).items() if k != "func"})
    with open(out / "curves.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "mse_blur_target", "mse_wiener_target", "low_band", "high_band",
                    "low_band_blur", "high_band_blur"])
        for i in range(len(fit_w.full)):
            w.writerow([i] + [repr(float(v[i])) for v in (fit_b.full, fit_w.full, fit_w.low, fit_w.high,
                                                          fit_b.low, fit_b.high)])
    summary = lag_summary(fit_b, fit_w, args.threshold, args.band_threshold)
    write_json(out / "summary.json", summary)
    for name, val in summary.items():
        print(f"{name}: {val}")
    _plot_curves(out / "curves.png", fit_b, fit_w, args.threshold)
    return EXIT_OK


def lag_summary(fit_blur, fit_wiener, threshold, band_threshold=0.1):
    """First iteration each curve drops below its threshold (None if never).

    Full-band curves use the absolute MSE ``threshold``; band curves are
    relative errors and use ``band_threshold``.
    """
    res = {"threshold": threshold, "band_threshold": band_threshold,
           "cross_blur_target": fit_blur.first_below(threshold),
           "cross_wiener_target": fit_wiener.first_below(threshold)}
    for tag, fit in (("blur", fit_blur), ("wiener", fit_wiener)):
        res[f"low_band_cross_{tag}"] = fit.first_below(band_threshold, "low")
        res[f"high_band_cross_{tag}"] = fit.first_below(band_threshold, "high")
    return res


def _plot_curves(path, fit_b, fit_w, threshold):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    axes[0].semilogy(fit_b.full, label="target: blurry")
    axes[0].semilogy(fit_w.full, label="target: Wiener")
    axes[0].axhline(threshold, color="k", lw=0.5, ls="--")
    axes[0].set_xlabel("iteration")
    axes[0].set_ylabel("MSE")
    axes[0].legend()
    for fit, tag in ((fit_b, "blurry"), (fit_w, "Wiener")):
        axes[1].semilogy(fit.low, label=f"low band ({tag})")
        axes[1].semilogy(fit.high, label=f"high band ({tag})", ls="--")
    axes[1].set_xlabel("iteration")
    axes[1].set_ylabel("relative band error")
    axes[1].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def build_parser():
    p = argparse.ArgumentParser(prog="wdip", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("deblur", help="blind-deblur one image")
    d.add_argument("--input", required=True)
    d.add_argument("--output", help=f"output directory (default ${OUTPUT_ROOT_ENV}/<input stem>)")
    d.add_argument("--kernel", help="initial auxiliary kernel file; also fixes the kernel size")
    d.add_argument("--truth", help="ground-truth sharp image for metrics")
    d.add_argument("--true-kernel", dest="true_kernel", help="ground-truth kernel for the error ratio")
    _add_solve_flags(d)
    d.set_defaults(func=cmd_deblur)

    k = sub.add_parser("init-kernel", help="PSD-based Gaussian kernel initialization over an image directory")
    k.add_argument("--images", required=True)
    k.add_argument("--sizes", help="CSV of <image file>,<kernel size>")
    k.add_argument("--kernel-size", dest="kernel_size", type=int, help="output kernel size (and default per image)")
    k.add_argument("--mass-fraction", dest="mass_fraction", type=float, default=0.9)
    k.add_argument("--output", required=True, help="kernel text file")
    k.add_argument("--report", help="key = value report (default <output>.spec.txt)")
    k.set_defaults(func=cmd_init_kernel)

    s = sub.add_parser("simulate", help="synthesize blurred datasets")
    s.add_argument("--preset", choices=("desk", "mini-suite", "microscopy"))
    s.add_argument("--sharp", help="sharp image file (default: a bundled scene)")
    s.add_argument("--scene", default="camera")
    s.add_argument("--size", type=int, default=128)
    s.add_argument("--kernel", help="kernel file")
    s.add_argument("--kernel-size", dest="kernel_size", type=int, default=13)
    s.add_argument("--gaussian", type=float, help="use a Gaussian kernel with this std")
    s.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=0.01)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--id", default="synthetic")
    s.add_argument("--output")
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bench", help="run comparison, ablation, seed or kernel-size experiments")
    b.add_argument("--manifest", required=True)
    b.add_argument("--preset", choices=("compare", "ablation", "seeds", "kernel-size"))
    b.add_argument("--seeds", type=int, nargs="+")
    b.add_argument("--sizes", type=int, nargs="+")
    b.add_argument("--workers", type=int)
    b.add_argument("--output")
    _add_solve_flags(b)
    b.set_defaults(func=cmd_bench)

    m = sub.add_parser("demo-lag", help="fit plain DIP to the blurry and the Wiener-deconvolved image")
    m.add_argument("--input", required=True)
    m.add_argument("--kernel")
    m.add_argument("--kernel-size", dest="kernel_size", type=int)
    m.add_argument("--wiener-c", dest="wiener_c", type=float, default=0.025)
    m.add_argument("--iterations", type=int, default=1000)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--profile", default="desk", choices=("reference", "desk", "miniature"))
    m.add_argument("--lr", type=float, default=1e-2)
    m.add_argument("--threshold", type=float, default=3e-3, help="full-band MSE threshold")
    m.add_argument("--band-threshold", dest="band_threshold", type=float, default=0.1,
                   help="relative band-error threshold")
    m.add_argument("--output")
    m.set_defaults(func=cmd_demo_lag)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, FileNotFoundError) as exc:
        print(f"wdip {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (WDIPError, ValueError) as exc:
        print(f"wdip {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
