"""Reading and writing images, float grids and kernels."""

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .imagefreq import check_kernel


def read_image(path):
    """Load an 8/16-bit PNG (or any Pillow format) as float64 in [0, 1].

    ``.npy`` files are read as float grids without rescaling but are still
    clamped to [0, 1].
    """
    path = Path(path)
    if path.suffix == ".npy":
        return np.clip(np.load(path).astype(np.float64), 0, 1)
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I;16L", "I"):
            arr = np.asarray(im, dtype=np.float64) / 65535.0
        else:
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB" if len(im.getbands()) >= 3 else "L")
            arr = np.asarray(im, dtype=np.float64) / 255.0
    return np.clip(arr, 0, 1)


def write_image(path, image, bits=8):
    arr = np.clip(np.asarray(image, dtype=np.float64), 0, 1)
    if bits == 16:
        if arr.ndim != 2:
            raise ValueError("16-bit output supports single-channel images only")
        Image.fromarray(np.round(arr * 65535).astype(np.uint16)).save(path)
    elif bits == 8:
        Image.fromarray(np.round(arr * 255).astype(np.uint8)).save(path)
    else:
        raise ValueError("bits must be 8 or 16")


def write_grid(path, grid):
    """Lossless float grid (``.npy``)."""
    np.save(path, np.asarray(grid, dtype=np.float64))


def read_grid(path):
    return np.load(path)


def write_kernel_text(path, kernel):
    np.savetxt(path, np.asarray(kernel, dtype=np.float64), fmt="%.10e")


def read_kernel_text(path):
    return check_kernel(np.atleast_2d(np.loadtxt(path, dtype=np.float64)))


def read_kernel(path):
    """Kernel from a text matrix, ``.npy`` grid or image (normalized to unit sum)."""
    path = Path(path)
    if path.suffix in (".txt", ".csv", ".dat"):
        k = read_kernel_text(path)
    elif path.suffix == ".npy":
        k = check_kernel(np.load(path))
    else:
        k = read_image(path)
        if k.ndim == 3:
            k = k.mean(axis=2)
        k = check_kernel(k)
    return k / k.sum()


def write_kernel_png(path, kernel):
    """Kernel scaled so its maximum is white."""
    k = np.clip(np.asarray(kernel, dtype=np.float64), 0, None)
    peak = k.max()
    write_image(path, k / peak if peak > 0 else k)


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")
