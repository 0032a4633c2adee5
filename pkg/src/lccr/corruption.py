"""Pixel-space degradations: white noise, random pixel corruption, block occlusion.

All generators are pure functions of (image, parameters, seed) and draw from
numpy's PCG64 generator, so a given seed reproduces bit-identical output on
any platform. Images are float arrays with values in [0, 255].
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DataError

NOISE_SCALE = 255.0


def as_pixel_image(img) -> np.ndarray:
    a = np.array(img, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise DataError(f"pixel image must be a non-empty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)) or a.min() < 0 or a.max() > 255:
        raise DataError("pixel values must be finite and within [0, 255]")
    return a


def image_seed(base: int, index: int) -> int:
    """Per-image seed so parallel corruption of a test set stays deterministic."""
    return int(base) ^ int(index)


def add_white_noise(img, alpha: float, seed: int, sigma_scale: float = NOISE_SCALE) -> np.ndarray:
    """``clip(x + alpha * sigma_scale * n, 0, 255)`` with ``n`` standard normal.

    ``sigma_scale`` defaults to 255 so that ``alpha`` reads as a fraction of
    the pixel range.
    """
    if not 0.0 <= alpha <= 1.0:
        raise DataError(f"alpha must lie in [0, 1], got {alpha}")
    x = as_pixel_image(img)
    if alpha == 0:
        return x
    n = np.random.default_rng(seed).standard_normal(x.shape)
    return np.clip(x + alpha * sigma_scale * n, 0.0, 255.0)


def select_pixels(shape: tuple[int, int], ratio: float, seed: int) -> np.ndarray:
    """Flat (row-major) indices of ``round(ratio * H * W)`` distinct pixels."""
    if not 0.0 <= ratio <= 1.0:
        raise DataError(f"ratio must lie in [0, 1], got {ratio}")
    total = shape[0] * shape[1]
    count = int(math.floor(ratio * total + 0.5))
    rng = np.random.default_rng(seed)
    return rng.choice(total, size=count, replace=False)


def corrupt_random_pixels(img, ratio: float, seed: int, return_positions: bool = False):
    """Replace a random ``ratio`` of the pixels by uniform draws on ``[0, p_max]``.

    ``p_max`` is the largest value of the input image. With
    ``return_positions`` the selected flat indices are returned as well.
    """
    x = as_pixel_image(img)
    pos = select_pixels(x.shape, ratio, seed)
    out = x.copy()
    if pos.size:
        # separate stream so the selected set does not depend on p_max
        values = np.random.default_rng([seed, 1]).uniform(0.0, x.max(), size=pos.size)
        out.ravel()[pos] = values
    return (out, pos) if return_positions else out


def block_side(shape: tuple[int, int], ratio: float) -> int:
    h, w = shape
    side = int(math.floor(math.sqrt(ratio * h * w) + 0.5))
    return max(1, min(side, h, w))


def resize_nearest(patch, shape: tuple[int, int]) -> np.ndarray:
    patch = np.asarray(patch, dtype=np.float64)
    ph, pw = patch.shape
    rows = (np.arange(shape[0]) * ph) // shape[0]
    cols = (np.arange(shape[1]) * pw) // shape[1]
    return patch[np.ix_(rows, cols)]


def occlude_block(img, patch, ratio: float, seed: int):
    """Overwrite a random square block covering ``ratio`` of the image with ``patch``.

    Returns the occluded image and the block as ``(top, left, height, width)``.
    """
    if not 0.0 < ratio < 1.0:
        raise DataError(f"occlusion ratio must lie in (0, 1), got {ratio}")
    x = as_pixel_image(img)
    p = as_pixel_image(patch)
    h, w = x.shape
    side = block_side(x.shape, ratio)
    rng = np.random.default_rng(seed)
    top = int(rng.integers(0, h - side + 1))
    left = int(rng.integers(0, w - side + 1))
    out = x.copy()
    out[top:top + side, left:left + side] = resize_nearest(p, (side, side))
    return out, (top, left, side, side)


def texture_patch(size: int = 64, seed: int = 0) -> np.ndarray:
    """A deterministic high-contrast texture used when no occluder image is given."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size
    t = np.zeros((size, size))
    for _ in range(6):
        fx, fy = rng.uniform(2, 12, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        t += np.sin(2 * np.pi * (fx * xx + fy * yy) + phase)
    t += 0.8 * rng.standard_normal((size, size))
    t -= t.min()
    return np.round(255.0 * t / t.max())


def corrupt(img, kind: str, ratio: float, seed: int, patch=None, sigma_scale: float = NOISE_SCALE) -> np.ndarray:
    """Dispatch by kind: ``noise``, ``pixels`` or ``block``."""
    if kind == "noise":
        return add_white_noise(img, ratio, seed, sigma_scale)
    if kind == "pixels":
        return corrupt_random_pixels(img, ratio, seed)
    if kind == "block":
        return occlude_block(img, texture_patch() if patch is None else patch, ratio, seed)[0]
    raise DataError(f"unknown corruption kind {kind!r}")
