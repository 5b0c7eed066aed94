"""Offline test material: natural scenes, motion-like kernels, microscopy surrogates."""

import numpy as np
from scipy import ndimage
from skimage import data as skdata
from skimage.transform import resize

from .imagefreq import gaussian_kernel, normalize_kernel

SCENES = ("camera", "astronaut", "coffee", "chelsea", "rocket", "brick", "moon", "coins")


def load_scene(name="camera", size=128, crop=None):
    """Grayscale float scene in [0, 1], optionally cropped, resized to ``size``.

    ``crop`` is ``(y0, x0, side)`` in source pixels; default is the central
    square.
    """
    img = getattr(skdata, name)()
    img = img.astype(np.float64) / 255.0
    if img.ndim == 3:
        img = img[..., :3] @ np.array([0.299, 0.587, 0.114])
    h, w = img.shape
    if crop is None:
        side = min(h, w)
        y0, x0 = (h - side) // 2, (w - side) // 2
    else:
        y0, x0, side = crop
    img = img[y0:y0 + side, x0:x0 + side]
    if isinstance(size, int):
        size = (size, size)
    out = resize(img, size, anti_aliasing=True, order=3, mode="reflect")
    return np.clip(out, 0, 1)


def motion_kernel(n, seed=0, length=None, smooth=0.5):
    """Random camera-shake-like kernel: a momentum random walk splatted onto n x n.

    The trajectory is centred on its centroid so the kernel mass sits at the
    grid centre.
    """
    rng = np.random.default_rng(seed)
    length = 0.75 * n if length is None else length
    steps = 400
    pos = np.zeros((steps, 2))
    vel = rng.normal(size=2)
    vel /= np.linalg.norm(vel)
    for i in range(1, steps):
        vel = 0.9 * vel + 0.35 * rng.normal(size=2)
        vel /= np.linalg.norm(vel)
        pos[i] = pos[i - 1] + vel
    extent = np.ptp(pos, axis=0).max()
    pos *= (length - 1) / max(extent, 1e-9)
    # mass-weighted centring: dwell time is uniform along the walk
    pos -= pos.mean(axis=0)
    pos += (n - 1) / 2
    pos = np.clip(pos, 0, n - 1 - 1e-9)
    k = np.zeros((n, n))
    i0 = np.floor(pos).astype(int)
    f = pos - i0
    for (y, x), (fy, fx) in zip(i0, f):
        k[y, x] += (1 - fy) * (1 - fx)
        k[y, min(x + 1, n - 1)] += (1 - fy) * fx
        k[min(y + 1, n - 1), x] += fy * (1 - fx)
        k[min(y + 1, n - 1), min(x + 1, n - 1)] += fy * fx
    if smooth:
        k = ndimage.gaussian_filter(k, smooth, mode="constant")
    return normalize_kernel(k)


def microscopy_kernels():
    """Anisotropic Gaussian surrogates at the four tight sizes (13, 35, 21, 27)."""
    specs = [(13, 2.0, 1.2, 0.3), (35, 6.0, 3.0, 1.1), (21, 3.5, 2.0, -0.6), (27, 4.5, 2.5, 0.9)]
    return [gaussian_kernel(n, sy, sx, th) for n, sy, sx, th in specs]


def vessel_image(size=255, seed=0, branches=12, width=2.0, background=0.1, foreground=0.8):
    """Synthetic vessel-like tree: branching random walks, dilated and intensity-mapped.

    Returns ``(image, mask)`` where ``mask`` is the binary vessel structure.
    """
    rng = np.random.default_rng(seed)
    mask = np.zeros((size, size), bool)
    starts = [(rng.uniform(0.1, 0.9) * size, 0.0, rng.uniform(-0.3, 0.3))]
    made = 0
    while starts and made < branches:
        y, x, ang = starts.pop(0)
        made += 1
        for step in range(int(size * 1.2)):
            ang += rng.normal(scale=0.12)
            y += np.sin(ang)
            x += np.cos(ang)
            if not (0 <= y < size and 0 <= x < size):
                break
            mask[int(y), int(x)] = True
            if step > 10 and rng.random() < 0.015:
                starts.append((y, x, ang + rng.choice([-1, 1]) * rng.uniform(0.5, 1.1)))
    mask = ndimage.binary_dilation(mask, iterations=max(1, int(round(width))))
    img = np.where(mask, foreground, background)
    img = ndimage.gaussian_filter(img, 0.7)
    return np.clip(img, 0, 1), mask
