"""Alternating (half-quadratic splitting) optimization of the generators and
the auxiliary kernel, plus the plain-DIP spectral-lag demonstration.

Each outer iteration takes one Adam step on the network parameters with the
auxiliary kernel frozen, then (W-DIP mode only) one Adam step on the
auxiliary kernel with the networks frozen.
"""

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import torch

from .exceptions import DimensionError, OptimizationAborted
from .generators import GeneratorState
from .imagefreq import check_image, check_kernel, uniform_kernel, wiener_deconvolve
from .objective import (
    HQSWeights,
    LossBreakdown,
    data_term,
    image_match_term,
    kernel_l2,
    kernel_match_term,
    mse,
)

log = logging.getLogger(__name__)

MODES = ("wdip", "selfdeblur")
TRACE_COLUMNS = ("iter", "data", "image_match", "kernel_match", "kernel_l2", "total",
                 "shift_y", "shift_x", "lr_net", "lr_k")


def lr_schedule_networks(iteration, base=1e-4, milestones=(2000, 3000, 4000), gamma=0.5):
    """Step decay: ``base`` halved at each milestone already reached."""
    if iteration < 0:
        raise ValueError("iteration must be nonnegative")
    return base * gamma ** sum(iteration >= m for m in milestones)


def kernel_boosts(n):
    """Iterations at which the kernel learning rate is multiplied by 10."""
    first = -(-70 * n // 10)
    step = -(-50 * n // 10)
    return (first, first + step, first + 2 * step)


def lr_schedule_kernel(iteration, n, base=1e-6):
    """1e-6, then x10 after ``ceil(7n)`` and after each of the next two ``ceil(5n)`` blocks."""
    if iteration < 0 or n < 1:
        raise ValueError("iteration must be >= 0 and n >= 1")
    return base * 10 ** sum(iteration >= b for b in kernel_boosts(n))


@dataclass
class SolveConfig:
    iterations: int = 5000
    kernel_size: int = 15
    weights: HQSWeights = field(default_factory=HQSWeights)
    seed: int = 0
    mode: str = "wdip"
    aux_kernel_init: object = None
    profile: object = "reference"
    lr_net: float = 1e-4
    lr_image: float = None
    lr_kernel: float = 1e-6
    kernel_steps: int = 1
    renormalize_aux: bool = False
    snapshot_stride: int = 500

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.kernel_size % 2 == 0:
            raise DimensionError("kernel_size must be odd")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if isinstance(self.weights, dict):
            self.weights = HQSWeights(**self.weights)
        if self.mode == "selfdeblur":
            self.weights = replace(self.weights, alpha=0.0, beta=0.0, lam=0.0)

    def to_dict(self):
        d = asdict(self)
        d["aux_kernel_init"] = None if self.aux_kernel_init is None else np.asarray(self.aux_kernel_init).tolist()
        return d


class AuxKernel:
    """Free auxiliary kernel with its own Adam optimizer; clipped to >= 0 after each step."""

    def __init__(self, init, dtype=torch.float32):
        arr = check_kernel(init)
        self.k = torch.tensor(arr, dtype=dtype, requires_grad=True)
        self.optimizer = torch.optim.Adam([self.k], lr=1e-6)

    def project(self, renormalize=False):
        with torch.no_grad():
            self.k.clamp_(min=0)
            if renormalize and self.k.sum() > 0:
                self.k.div_(self.k.sum())

    def numpy(self):
        return self.k.detach().double().numpy().copy()


@dataclass
class RunTrace:
    rows: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    mode: str = "wdip"
    seed: int = 0
    aux_kernel: np.ndarray = None

    def __len__(self):
        return len(self.rows)

    def append(self, iteration, b, lr_net, lr_k):
        self.rows.append((iteration, b.data, b.image_match, b.kernel_match, b.kernel_l2, b.total,
                          b.shift[0], b.shift[1], lr_net, lr_k))

    def column(self, name):
        i = TRACE_COLUMNS.index(name)
        return np.array([r[i] for r in self.rows])

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self.rows:
            w.writerow([r[0]] + [repr(float(v)) for v in r[1:6]] + [r[6], r[7], repr(r[8]), repr(r[9])])
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    @classmethod
    def read_csv(cls, path):
        out = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            for r in reader:
                out.rows.append((int(r[0]), *map(float, r[1:6]), int(r[6]), int(r[7]), float(r[8]), float(r[9])))
        return out


def make_network_optimizer(state):
    """Adam over two parameter groups: image network first, kernel network second."""
    state.optimizer = torch.optim.Adam(
        [{"params": state.image_net.parameters()}, {"params": state.kernel_net.parameters()}], lr=1e-4)
    return state.optimizer


def _set_lr(optimizer, lr):
    lrs = lr if isinstance(lr, (tuple, list)) else [lr] * len(optimizer.param_groups)
    for g, v in zip(optimizer.param_groups, lrs):
        g["lr"] = v


def _check_finite(value, what, iteration):
    if not math.isfinite(float(value.detach())):
        raise OptimizationAborted(f"non-finite {what} at iteration {iteration}", iteration=iteration)


def hqs_step_networks(state, aux, blurred, weights, iteration, lr=None, mode="wdip"):
    """One Adam step on (theta, phi) with the auxiliary kernel held fixed.

    Returns the loss breakdown evaluated before the step.
    """
    if not hasattr(state, "optimizer"):
        make_network_optimizer(state)
    lr = lr_schedule_networks(iteration) if lr is None else lr
    _set_lr(state.optimizer, lr)
    state.optimizer.zero_grad(set_to_none=True)
    x = state.image()
    g = state.kernel()
    d = data_term(x, g, blurred, iteration, weights)
    loss = d
    zero = torch.zeros((), dtype=x.dtype)
    im = km = l2 = zero
    shift = (0, 0)
    if mode == "wdip":
        k = aux.k.detach()
        im = image_match_term(x, blurred, k, weights)
        km, shift = kernel_match_term(g, k, return_shift=True)
        l2 = kernel_l2(k)
        if weights.alpha:
            loss = loss + weights.alpha * im
        if weights.beta:
            loss = loss + weights.beta * km
    _check_finite(loss, "network loss", iteration)
    loss.backward()
    state.optimizer.step()
    total = d + weights.alpha * im + weights.beta * km + weights.lam * l2
    return LossBreakdown(d, im, km, l2, total, shift).as_floats()


def kernel_objective(gen_image, gen_kernel, blurred, k, weights):
    """alpha * image_match + beta * kernel_match + lambda * ||k||^2 as a function of ``k``."""
    return (weights.alpha * image_match_term(gen_image, blurred, k, weights)
            + weights.beta * kernel_match_term(gen_kernel, k)
            + weights.lam * kernel_l2(k))


def hqs_step_kernel(state, aux, blurred, weights, iteration, lr=None, renormalize=False):
    """One Adam step on the auxiliary kernel with the networks held fixed."""
    lr = lr_schedule_kernel(iteration, state.kernel_size) if lr is None else lr
    _set_lr(aux.optimizer, lr)
    with torch.no_grad():
        x = state.image()
        g = state.kernel()
    aux.optimizer.zero_grad(set_to_none=True)
    loss = kernel_objective(x, g, blurred, aux.k, weights)
    _check_finite(loss, "kernel loss", iteration)
    loss.backward()
    aux.optimizer.step()
    aux.project(renormalize)
    return float(loss.detach())


class HQSSolver:
    """Stateful driver for one run; supports checkpoint and resume."""

    def __init__(self, config, blurred, dtype=torch.float32):
        self.config = config
        y = check_image(blurred, channels=(1,))
        if config.kernel_size > min(y.shape):
            raise DimensionError("kernel larger than image")
        self.blurred = torch.as_tensor(y, dtype=dtype)
        self.state = GeneratorState(y.shape, config.kernel_size, config.profile, config.seed, dtype=dtype)
        make_network_optimizer(self.state)
        init = config.aux_kernel_init
        if init is None:
            init = uniform_kernel(config.kernel_size)
        if np.asarray(init).shape != (config.kernel_size, config.kernel_size):
            raise DimensionError("aux_kernel_init does not match kernel_size")
        self.aux = AuxKernel(init, dtype=dtype)
        self.iteration = 0
        self.trace = RunTrace(mode=config.mode, seed=config.seed)

    def step(self):
        cfg, it = self.config, self.iteration
        lr_net = lr_schedule_networks(it, base=cfg.lr_net)
        lr_img = lr_net if cfg.lr_image is None else lr_schedule_networks(it, base=cfg.lr_image)
        lr_k = lr_schedule_kernel(it, cfg.kernel_size, base=cfg.lr_kernel) if cfg.mode == "wdip" else 0.0
        b = hqs_step_networks(self.state, self.aux, self.blurred, cfg.weights, it, lr=(lr_img, lr_net),
                              mode=cfg.mode)
        if cfg.mode == "wdip":
            for _ in range(cfg.kernel_steps):
                hqs_step_kernel(self.state, self.aux, self.blurred, cfg.weights, it, lr=lr_k,
                                renormalize=cfg.renormalize_aux)
        self.trace.append(it, b, lr_net, lr_k)
        self.iteration += 1
        stride = cfg.snapshot_stride
        if stride and (self.iteration % stride == 0 or self.iteration == cfg.iterations):
            self.trace.snapshots.append((self.iteration, *self.outputs()))

    def outputs(self):
        with torch.no_grad():
            x = self.state.image().double().clamp(0, 1).numpy().copy()
            g = self.state.kernel().double().numpy().copy()
        return x, g, self.aux.numpy()

    def run(self, callback=None):
        while self.iteration < self.config.iterations:
            try:
                self.step()
            except OptimizationAborted as exc:
                exc.trace = self.trace
                raise
            if callback is not None:
                callback(self)
        return self.outputs()

    def checkpoint(self):
        return {
            "generators": self.state.state_dict(),
            "net_optimizer": self.state.optimizer.state_dict(),
            "aux_k": self.aux.k.detach().clone(),
            "aux_optimizer": self.aux.optimizer.state_dict(),
            "iteration": self.iteration,
            "seed": self.config.seed,
            "config": self.config.to_dict(),
            "trace_rows": list(self.trace.rows),
        }

    def save(self, path):
        torch.save(self.checkpoint(), path)

    @classmethod
    def resume(cls, path_or_ckpt, blurred):
        ck = path_or_ckpt if isinstance(path_or_ckpt, dict) else torch.load(path_or_ckpt, weights_only=False)
        cfg = dict(ck["config"])
        cfg["weights"] = HQSWeights(**cfg["weights"])
        cfg = SolveConfig(**cfg)
        dtype = ck["generators"]["z_image"].dtype
        obj = cls(cfg, blurred, dtype=dtype)
        obj.state.load_state_dict(ck["generators"])
        obj.state.optimizer.load_state_dict(ck["net_optimizer"])
        with torch.no_grad():
            obj.aux.k.copy_(ck["aux_k"])
        obj.aux.optimizer.load_state_dict(ck["aux_optimizer"])
        obj.iteration = ck["iteration"]
        obj.trace.rows = list(ck["trace_rows"])
        return obj


def run(config, blurred):
    """Run the full optimization; returns ``(sharp, kernel, trace)``.

    ``sharp`` is the generated image clamped to [0, 1], ``kernel`` the
    generated kernel. The projected auxiliary kernel is ``trace.aux_kernel``.
    """
    solver = HQSSolver(config, blurred)
    sharp, kernel, aux = solver.run()
    solver.trace.aux_kernel = aux
    return sharp, kernel, solver.trace


# -- spectral-lag demonstration ------------------------------------------

@dataclass
class FitTrace:
    full: np.ndarray
    low: np.ndarray
    high: np.ndarray

    def first_below(self, threshold, band="full"):
        curve = getattr(self, band)
        idx = np.nonzero(curve < threshold)[0]
        return int(idx[0]) if idx.size else None


def band_masks(shape, low=1 / 8, high=1 / 2):
    """Boolean masks of the low and high frequency bands.

    Radial frequency is normalized so the Nyquist frequency on each axis is 1;
    the low band is ``r <= low`` and the high band ``r > high``.
    """
    h, w = shape
    fy = np.fft.fftfreq(h) / 0.5
    fx = np.fft.fftfreq(w) / 0.5
    r = np.sqrt(fy[:, None] ** 2 + fx[None, :] ** 2)
    return r <= low, r > high


def band_errors(estimate, target, masks):
    """Full-band MSE plus the relative error inside each band.

    The band values are the error energy in the band divided by the target's
    energy in the same band, so 1 means "nothing of that band reproduced yet".
    """
    est = np.asarray(estimate, dtype=np.float64)
    tgt = np.asarray(target, dtype=np.float64)
    err = np.abs(np.fft.fft2(est - tgt)) ** 2
    ref = np.abs(np.fft.fft2(tgt)) ** 2
    full = float(err.sum()) / err.size**2
    return full, *(float(err[m].sum() / max(ref[m].sum(), 1e-30)) for m in masks)


def dip_fit_demo(target, iterations, seed=0, profile="desk", lr=1e-2):
    """Fit the image generator alone to ``target`` by MSE.

    Records the full-band MSE and the relative low-band and high-band errors
    of the generated image at iteration 0 and after every update
    (``iterations + 1`` entries).
    """
    y = check_image(target, channels=(1,))
    state = GeneratorState(y.shape, 1, profile, seed)
    t = torch.as_tensor(y, dtype=torch.float32)
    opt = torch.optim.Adam(state.image_net.parameters(), lr=lr)
    masks = band_masks(y.shape)
    rows = []
    for i in range(iterations + 1):
        opt.zero_grad(set_to_none=True)
        x = state.image()
        rows.append(band_errors(x.detach().double().numpy(), y, masks))
        if i == iterations:
            break
        loss = mse(x, t)
        loss.backward()
        opt.step()
    arr = np.array(rows)
    return FitTrace(arr[:, 0], arr[:, 1], arr[:, 2])


def wiener_target(blurred, kernel, c=0.025):
    return wiener_deconvolve(np.asarray(blurred, dtype=np.float64), kernel, c)
