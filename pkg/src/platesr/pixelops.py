"""Sub-pixel rearrangement, canonical-size preprocessing, and PNG I/O.

Images are numpy float32 arrays shaped (3, H, W) with values in [0, 1].
The canonical network input size is 120x60 (W x H).
"""

from __future__ import annotations

import math
import os

import numpy as np
from PIL import Image

from .errors import ShapeError

CANONICAL_W = 120
CANONICAL_H = 60


def _check_chw(x: np.ndarray, name: str = "image") -> None:
    if not isinstance(x, np.ndarray):
        raise ShapeError(f"{name} must be a numpy array, got {type(x).__name__}")
    if x.ndim != 3:
        raise ShapeError(f"{name} must have shape (C, H, W), got {x.shape}")


def pixel_shuffle(x: np.ndarray, r: int) -> np.ndarray:
    """Rearrange (C*r^2, H, W) into (C, H*r, W*r), channel-major.

    out[c, h*r + i, w*r + j] == x[c*r*r + i*r + j, h, w]
    """
    _check_chw(x)
    if r < 1:
        raise ShapeError(f"shuffle factor must be >= 1, got {r}")
    c, h, w = x.shape
    if c % (r * r) != 0:
        raise ShapeError(f"channel count {c} not divisible by r^2 = {r * r}")
    cc = c // (r * r)
    out = x.reshape(cc, r, r, h, w).transpose(0, 3, 1, 4, 2).reshape(cc, h * r, w * r)
    return np.ascontiguousarray(out)


def pixel_unshuffle(x: np.ndarray, r: int) -> np.ndarray:
    """Inverse of :func:`pixel_shuffle`: (C, H*r, W*r) into (C*r^2, H, W)."""
    _check_chw(x)
    if r < 1:
        raise ShapeError(f"shuffle factor must be >= 1, got {r}")
    c, h, w = x.shape
    if h % r != 0 or w % r != 0:
        raise ShapeError(f"spatial size {h}x{w} not divisible by r = {r}")
    hh, ww = h // r, w // r
    out = x.reshape(c, hh, r, ww, r).transpose(0, 2, 4, 1, 3).reshape(c * r * r, hh, ww)
    return np.ascontiguousarray(out)


def _resize_axis_weights(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Half-pixel-center sample positions, clamped at the borders.
    pos = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1.0)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    t = pos - lo
    return lo, hi, t


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bilinear resize with half-pixel centers."""
    _check_chw(img)
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"target size must be positive, got {out_h}x{out_w}")
    _, h, w = img.shape
    if (h, w) == (out_h, out_w):
        return img.astype(np.float32, copy=True)
    work = img.astype(np.float64)
    ylo, yhi, ty = _resize_axis_weights(h, out_h)
    work = work[:, ylo, :] * (1.0 - ty)[None, :, None] + work[:, yhi, :] * ty[None, :, None]
    xlo, xhi, tx = _resize_axis_weights(w, out_w)
    work = work[:, :, xlo] * (1.0 - tx)[None, None, :] + work[:, :, xhi] * tx[None, None, :]
    return work.astype(np.float32)


def pad_and_resize(
    img: np.ndarray,
    target_w: int = CANONICAL_W,
    target_h: int = CANONICAL_H,
    pad_mode: str = "zeros",
) -> np.ndarray:
    """Pad the deficient axis to the target aspect ratio, then resize.

    Padding is centered (extra row or column goes after), fills with zeros
    by default or replicates edges with ``pad_mode="edge"``.  An input that
    is already target-sized is returned as an unmodified copy.
    """
    _check_chw(img)
    c, h, w = img.shape
    if c != 3:
        raise ShapeError(f"expected 3 channels, got {c}")
    if h < 1 or w < 1:
        raise ShapeError(f"image has empty axis: shape {img.shape}")
    if pad_mode not in ("zeros", "edge"):
        raise ShapeError(f"unknown pad_mode {pad_mode!r}")
    if (h, w) == (target_h, target_w):
        return img.astype(np.float32, copy=True)

    g = math.gcd(target_w, target_h)
    uw, uh = target_w // g, target_h // g
    k = max(-(-w // uw), -(-h // uh))
    pad_w, pad_h = k * uw - w, k * uh - h
    if pad_w or pad_h:
        left, top = pad_w // 2, pad_h // 2
        widths = ((0, 0), (top, pad_h - top), (left, pad_w - left))
        mode = "constant" if pad_mode == "zeros" else "edge"
        img = np.pad(img, widths, mode=mode)
    return resize_bilinear(img, target_h, target_w)


def quantize_unit(img: np.ndarray) -> np.ndarray:
    """Snap values in [0, 1] onto the 256-level grid used by 8-bit PNG."""
    _check_chw(img)
    u8 = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    return (u8.astype(np.float32) / 255.0).astype(np.float32)


def save_png(img: np.ndarray, path: str | os.PathLike) -> None:
    """Write a (3, H, W) float image in [0, 1] as an 8-bit RGB PNG."""
    _check_chw(img, "image")
    if img.shape[0] != 3:
        raise ShapeError(f"expected 3 channels, got {img.shape[0]}")
    if not np.isfinite(img).all():
        raise ShapeError("image contains non-finite values")
    u8 = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(u8.transpose(1, 2, 0), mode="RGB").save(path, format="PNG")


def load_png(path: str | os.PathLike) -> np.ndarray:
    """Read an image file as a (3, H, W) float32 array in [0, 1]."""
    with Image.open(path) as im:
        rgb = im.convert("RGB")
        u8 = np.asarray(rgb, dtype=np.uint8)
    return (u8.astype(np.float32) / 255.0).transpose(2, 0, 1)
