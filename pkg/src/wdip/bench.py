"""Dataset synthesis, colour handling and the experiment harness."""

import csv
import json
import logging
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .exceptions import DimensionError, OptimizationAborted
from .imagefreq import check_image, check_kernel, circular_convolve, uniform_kernel
from .io import read_image, read_kernel, write_grid, write_image, write_json, write_kernel_text
from .kernel_init import dataset_sigma, init_kernel
from .metrics import MetricReport, error_ratio, psnr, segmentation_dice, ssim
from .solver import SolveConfig, run

log = logging.getLogger(__name__)

# ITU-R BT.601, full range, chroma centred on 0.5
_RGB2YCC = np.array([
    [0.299, 0.587, 0.114],
    [-0.168736, -0.331264, 0.5],
    [0.5, -0.418688, -0.081312],
])
_YCC2RGB = np.linalg.inv(_RGB2YCC)


@dataclass
class DatasetEntry:
    id: str
    blurred: np.ndarray
    sharp: np.ndarray = None
    true_kernel: np.ndarray = None
    noise_sigma: float = 0.0
    kernel_size_estimate: int = None
    seed: int = None
    microscopy: bool = False

    def __post_init__(self):
        if self.kernel_size_estimate is None:
            if self.true_kernel is None:
                raise ValueError(f"entry {self.id}: need a kernel size estimate or a true kernel")
            self.kernel_size_estimate = int(np.shape(self.true_kernel)[0])


def synthesize_blur(sharp, kernel, noise_sigma=0.01, seed=0, id="synthetic", kernel_size_estimate=None,
                    microscopy=False):
    """``clamp(sharp * kernel + N(0, noise_sigma^2), 0, 1)`` with provenance."""
    x = check_image(sharp, channels=(1,))
    k = check_kernel(kernel, normalized=True)
    rng = np.random.default_rng(seed)
    clean = circular_convolve(x, k)
    noisy = clean + noise_sigma * rng.standard_normal(x.shape) if noise_sigma > 0 else clean
    return DatasetEntry(id=id, blurred=np.clip(noisy, 0, 1), sharp=x, true_kernel=k, noise_sigma=float(noise_sigma),
                        kernel_size_estimate=kernel_size_estimate or k.shape[0], seed=seed, microscopy=microscopy)


def to_y_channel(image):
    """Split RGB into luma ``y`` and the (Cb, Cr) chroma planes."""
    rgb = np.asarray(image, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise DimensionError(f"expected H x W x 3 image, got {rgb.shape}")
    ycc = rgb @ _RGB2YCC.T
    ycc[..., 1:] += 0.5
    return ycc[..., 0], ycc[..., 1:]


def recombine(y, chroma):
    ycc = np.concatenate([np.asarray(y, dtype=np.float64)[..., None], np.asarray(chroma) - 0.5], axis=-1)
    return ycc @ _YCC2RGB.T


# -- manifests --------------------------------------------------------------

def load_manifest(path):
    """Dataset manifest: JSON with an ``entries`` list.

    Each record holds ``id``, ``blurred`` and optionally ``sharp``, ``kernel``
    (paths relative to the manifest), ``noise_sigma``, ``kernel_size`` and
    ``microscopy``.
    """
    path = Path(path)
    with open(path) as fh:
        doc = json.load(fh)
    root = path.parent
    entries = []
    for rec in doc.get("entries", []):
        sharp = read_image(root / rec["sharp"]) if rec.get("sharp") else None
        kernel = read_kernel(root / rec["kernel"]) if rec.get("kernel") else None
        entries.append(DatasetEntry(
            id=str(rec["id"]), blurred=read_image(root / rec["blurred"]), sharp=sharp, true_kernel=kernel,
            noise_sigma=float(rec.get("noise_sigma", 0.0)), kernel_size_estimate=rec.get("kernel_size"),
            seed=rec.get("seed"), microscopy=bool(rec.get("microscopy", False))))
    return entries


def save_dataset(entries, directory):
    """Write entries as float grids + kernel text files and a manifest.json."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    recs = []
    for e in entries:
        rec = {"id": e.id, "blurred": f"{e.id}_blurred.npy", "noise_sigma": e.noise_sigma,
               "kernel_size": int(e.kernel_size_estimate), "microscopy": e.microscopy, "seed": e.seed}
        write_grid(d / rec["blurred"], e.blurred)
        write_image(d / f"{e.id}_blurred.png", e.blurred)
        if e.sharp is not None:
            rec["sharp"] = f"{e.id}_sharp.npy"
            write_grid(d / rec["sharp"], e.sharp)
        if e.true_kernel is not None:
            rec["kernel"] = f"{e.id}_kernel.txt"
            write_kernel_text(d / rec["kernel"], e.true_kernel)
        recs.append(rec)
    write_json(d / "manifest.json", {"entries": recs})
    return d / "manifest.json"


# -- experiment plans ------------------------------------------------------

ABLATION_VARIANTS = {
    "full": {},
    "α=0": {"alpha": 0.0},
    "β=0": {"beta": 0.0},
    "λ=0": {"lam": 0.0},
    "k₀=Uni": {"init": "uniform"},
}
COMPARE_VARIANTS = {"selfdeblur": {"mode": "selfdeblur"}, "wdip": {}}


@dataclass
class ExperimentPlan:
    """Every (entry, variant, seed) triple is one run.

    A variant is a dict of overrides on ``base``: any ``SolveConfig`` field,
    any ``HQSWeights`` field, or ``init`` in {"psd", "uniform"}.
    """

    entries: list
    variants: dict = field(default_factory=lambda: dict(COMPARE_VARIANTS))
    seeds: tuple = (0, 1, 2)
    base: SolveConfig = field(default_factory=SolveConfig)
    mass_fraction: float = 0.9
    output_dir: object = None
    workers: int = 1

    def __post_init__(self):
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("entry ids must be unique")
        if not self.entries:
            raise ValueError("plan has no entries")

    def kernel_spec(self):
        return dataset_sigma([e.blurred if e.blurred.ndim == 2 else to_y_channel(e.blurred)[0]
                              for e in self.entries],
                             [e.kernel_size_estimate for e in self.entries], self.mass_fraction)

    def config_for(self, entry, variant, seed, spec=None):
        over = dict(self.variants[variant])
        init = over.pop("init", "psd")
        n = over.pop("kernel_size", entry.kernel_size_estimate)
        wfields = {k: over.pop(k) for k in list(over) if k in ("alpha", "beta", "lam", "wiener_c", "ssim_switch_iter")}
        if init == "uniform":
            k0 = uniform_kernel(n)
        else:
            k0 = init_kernel(spec or self.kernel_spec(), n)
        weights = replace(self.base.weights, **wfields)
        return replace(self.base, kernel_size=n, seed=seed, weights=weights, aux_kernel_init=k0, **over)


def _run_dir(root, entry_id, variant, seed):
    if root is None:
        return None
    safe = variant.encode("ascii", "backslashreplace").decode().replace("\\", "_").replace("=", "-")
    return Path(root) / entry_id / safe / f"seed{seed}"


def evaluate(entry, sharp_est, kernel_est, seed, c=0.025):
    """MetricReport for one run (metrics needing ground truth are None when absent)."""
    if entry.sharp is None:
        return MetricReport(entry.id, seed, math.nan, math.nan)
    truth = entry.sharp if entry.sharp.ndim == 2 else to_y_channel(entry.sharp)[0]
    blurred = entry.blurred if entry.blurred.ndim == 2 else to_y_channel(entry.blurred)[0]
    rep = MetricReport(entry.id, seed, psnr(sharp_est, truth), ssim(sharp_est, truth))
    if entry.true_kernel is not None:
        rep.error_ratio = error_ratio(blurred, truth, kernel_est, entry.true_kernel, c)
    if entry.microscopy:
        rep.dice = segmentation_dice(sharp_est, truth)
    return rep


def run_case(entry, variant, seed, config, out_dir=None):
    """One solver run plus scoring; failures are returned, never raised."""
    blurred = entry.blurred if entry.blurred.ndim == 2 else to_y_channel(entry.blurred)[0]
    try:
        sharp, kernel, trace = run(config, blurred)
    except (OptimizationAborted, ValueError, RuntimeError) as exc:
        if out_dir is not None and getattr(exc, "trace", None) is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            exc.trace.write_csv(out_dir / "trace.csv")
        return {"entry": entry.id, "variant": variant, "seed": seed, "error": f"{type(exc).__name__}: {exc}",
                "traceback": traceback.format_exc()}
    rep = evaluate(entry, sharp, kernel, seed, config.weights.wiener_c or 0.025)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        trace.write_csv(out_dir / "trace.csv")
        write_grid(out_dir / "sharp.npy", sharp)
        write_image(out_dir / "sharp.png", sharp)
        write_kernel_text(out_dir / "kernel.txt", kernel)
        write_kernel_text(out_dir / "aux_kernel.txt", trace.aux_kernel)
        write_json(out_dir / "config.json", config.to_dict())
        write_json(out_dir / "metrics.json", rep.to_dict())
    return {"entry": entry.id, "variant": variant, "seed": seed, "metrics": rep.to_dict(),
            "final_trace_row": list(trace.rows[-1])}


def _run_case_star(args):
    return run_case(*args)


def _mean(vals):
    vals = [v for v in vals if v is not None and not math.isnan(v)]
    return float(np.mean(vals)) if vals else None


def aggregate(results, variants, metrics=("psnr", "ssim", "error_ratio", "dice")):
    """Per variant: mean over all runs and the seed variance averaged over entries.

    Variance is the sample variance (ddof=1) across seeds of one entry, never
    pooled across entries; with one seed it is 0.
    """
    rows = []
    for v in variants:
        ok = [r for r in results if r["variant"] == v and "metrics" in r]
        row = {"variant": v, "runs": len(ok), "failures": sum(1 for r in results if r["variant"] == v and "error" in r)}
        for m in metrics:
            vals = [r["metrics"][m] for r in ok]
            row[f"{m}_mean"] = _mean(vals)
            variances = []
            for eid in sorted({r["entry"] for r in ok}):
                xs = [r["metrics"][m] for r in ok if r["entry"] == eid and r["metrics"][m] is not None]
                xs = [x for x in xs if not math.isnan(x)]
                if xs:
                    variances.append(float(np.var(xs, ddof=1)) if len(xs) > 1 else 0.0)
            row[f"{m}_var"] = float(np.mean(variances)) if variances else None
        rows.append(row)
    return rows


def run_experiment(plan):
    """Run every (entry, variant, seed) of ``plan``; returns ``{"rows", "runs"}``."""
    spec = plan.kernel_spec()
    jobs = []
    for e in plan.entries:
        for v in plan.variants:
            for s in plan.seeds:
                jobs.append((e, v, s, plan.config_for(e, v, s, spec), _run_dir(plan.output_dir, e.id, v, s)))
    if plan.workers > 1:
        with ProcessPoolExecutor(max_workers=plan.workers) as ex:
            results = list(ex.map(_run_case_star, jobs))
    else:
        results = [run_case(*j) for j in jobs]
    for r in results:
        if "error" in r:
            log.warning("run %s/%s/seed%s failed: %s", r["entry"], r["variant"], r["seed"], r["error"])
    report = {"rows": aggregate(results, list(plan.variants)), "runs": results,
              "kernel_init": {"sigma_k": spec.sigma_k, "per_image": spec.per_image_sigmas}}
    if plan.output_dir is not None:
        write_report(report, plan.output_dir)
    return report


def kernel_size_sensitivity(entry, sizes, base=None, seeds=(0,), modes=("selfdeblur", "wdip"), output_dir=None,
                            workers=1, mass_fraction=0.9):
    """Run each mode at each kernel size; PSNR change relative to the first (tight) size.

    The auxiliary kernel for size ``n`` is the PSD initializer scaled by ``n``.
    """
    if entry.sharp is None:
        raise ValueError("kernel_size_sensitivity needs ground truth")
    variants = {}
    for m in modes:
        for n in sizes:
            over = {"kernel_size": int(n)}
            if m == "selfdeblur":
                over["mode"] = "selfdeblur"
            variants[f"{m}@{n}"] = over
    plan = ExperimentPlan([entry], variants, tuple(seeds), base or SolveConfig(), mass_fraction, output_dir, workers)
    report = run_experiment(plan)
    by = {r["variant"]: r for r in report["rows"]}
    diffs = []
    for m in modes:
        ref = by[f"{m}@{sizes[0]}"]["psnr_mean"]
        for n in sizes:
            p = by[f"{m}@{n}"]["psnr_mean"]
            diffs.append({"mode": m, "kernel_size": int(n), "psnr": p,
                          "difference": None if p is None or ref is None else p - ref})
    report["sensitivity"] = diffs
    if output_dir is not None:
        write_report(report, output_dir)
    return report


def format_table(rows, metrics=("psnr", "ssim", "error_ratio", "dice")):
    """Plain-text table with ``mean±variance`` cells."""
    header = ["variant"] + list(metrics)
    lines = ["\t".join(header)]
    for r in rows:
        cells = [r["variant"]]
        for m in metrics:
            mu, var = r.get(f"{m}_mean"), r.get(f"{m}_var")
            cells.append("-" if mu is None else f"{mu:.4g}±{var:.2g}")
        lines.append("\t".join(cells))
    return "\n".join(lines)


def write_report(report, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    rows = report["rows"]
    if rows:
        with open(d / "report.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    with open(d / "runs.jsonl", "w") as fh:
        for r in report["runs"]:
            fh.write(json.dumps({k: v for k, v in r.items() if k != "traceback"}, default=float) + "\n")
    write_json(d / "report.json", {k: v for k, v in report.items() if k != "runs"})
