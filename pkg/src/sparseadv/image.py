"""Image arrays, pixel-level distances and single-pixel edits.

Images are numpy arrays of shape ``(height, width, channels)`` with
``channels`` in ``{1, 3}`` and every component in ``[0, 1]``.  The last axis
is the channel axis, so each pixel's channels are contiguous in memory.
"""

import numpy as np


def check_image(x, name="image"):
    """Return ``x`` as a float64 ``(H, W, C)`` array, raising on invalid input."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"{name} must have shape (H, W, C), got {x.shape}")
    if x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError(f"{name} must have positive height and width, got {x.shape}")
    if x.shape[2] not in (1, 3):
        raise ValueError(f"{name} must have 1 or 3 channels, got {x.shape[2]}")
    if not np.all((x >= 0.0) & (x <= 1.0)):
        raise ValueError(f"{name} has components outside [0, 1]")
    return x


def is_gray(x):
    return x.shape[-1] == 1


def num_pixels(x):
    return x.shape[0] * x.shape[1]


def _check_same_shape(a, b):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def changed_pixels(a, b):
    """Boolean ``(H, W)`` mask of pixels where any channel differs."""
    a = np.asarray(a)
    b = np.asarray(b)
    _check_same_shape(a, b)
    return np.any(a != b, axis=-1)


def l0_pixel_distance(a, b):
    """Number of pixels in which ``a`` and ``b`` differ in at least one channel.

    Comparison is exact; no tolerance is applied.
    """
    return int(np.count_nonzero(changed_pixels(a, b)))


def linf_distance(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_same_shape(a, b)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b)))


def set_pixel(x, index, value):
    """Return a copy of ``x`` with pixel ``index = (row, col)`` replaced by ``value``."""
    x = np.asarray(x, dtype=np.float64)
    row, col = index
    height, width, channels = x.shape
    if not (0 <= row < height and 0 <= col < width):
        raise IndexError(f"pixel {index} out of bounds for image {height}x{width}")
    value = np.broadcast_to(np.asarray(value, dtype=np.float64), (channels,))
    if not np.all((value >= 0.0) & (value <= 1.0)):
        raise ValueError("pixel value components must lie in [0, 1]")
    out = x.copy()
    out[row, col] = value
    return out
