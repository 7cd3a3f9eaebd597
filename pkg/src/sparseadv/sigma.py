"""Locally adaptive per-pixel perturbation bounds (the sigma-map).

For every pixel and channel the standard deviation of the 3-pixel window
{neighbour, pixel, neighbour} is taken along each image axis, borders are
handled by replicating the edge pixel, and the map is
``sqrt(min(std_along_row, std_along_column))``.  A pixel lying on a uniform
region or on an axis-aligned edge therefore gets a zero bound.
"""

import numpy as np

from .image import check_image, is_gray

# upper bound of the map: a 3-window in [0, 1] has std <= 0.5
SIGMA_MAX = float(np.sqrt(0.5))


def _window_variance(x, axis):
    # population variance of 3 values as (1/9) * sum of squared pairwise
    # differences, so that a constant window gives exactly 0
    pad = [(0, 0)] * x.ndim
    pad[axis] = (1, 1)
    xp = np.pad(x, pad, mode="edge")
    n = x.shape[axis]
    a = np.take(xp, np.arange(0, n), axis=axis)
    b = np.take(xp, np.arange(1, n + 1), axis=axis)
    c = np.take(xp, np.arange(2, n + 2), axis=axis)
    return ((a - b) ** 2 + (b - c) ** 2 + (a - c) ** 2) / 9.0


def compute_sigma_map(x):
    """Per-pixel, per-channel bound coefficients for image ``x`` (same shape)."""
    x = check_image(x)
    var_row = _window_variance(x, axis=1)
    var_col = _window_variance(x, axis=0)
    # sqrt(min(std_x, std_y)) == min(var_x, var_y) ** (1/4)
    return np.sqrt(np.sqrt(np.minimum(var_row, var_col)))


def check_kappa(kappa):
    kappa = float(kappa)
    if not np.isfinite(kappa) or kappa < 0:
        raise ValueError(f"kappa must be a finite non-negative number, got {kappa}")
    return kappa


def apply_sigma_perturbation(x, lam, sigma, kappa):
    """Apply per-pixel intensity changes ``lam`` under the sigma-map model.

    Color images are scaled multiplicatively, ``(1 + lam * sigma) * x``; gray
    images are shifted additively, ``x + lam * sigma``.  The result is clipped
    to [0, 1].

    Parameters
    ----------
    x : ndarray, shape (H, W, C)
    lam : ndarray, shape (H, W)
        One coefficient per pixel, shared by all channels, with
        ``|lam| <= kappa``.
    sigma : ndarray, shape (H, W, C)
    kappa : float
    """
    x = check_image(x)
    sigma = np.asarray(sigma, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    kappa = check_kappa(kappa)
    if sigma.shape != x.shape:
        raise ValueError(f"sigma shape {sigma.shape} does not match image {x.shape}")
    if lam.shape != x.shape[:2]:
        raise ValueError(f"lambda shape {lam.shape} does not match pixel grid {x.shape[:2]}")
    if np.any(np.abs(lam) > kappa):
        raise ValueError(f"lambda coefficients exceed kappa={kappa}")
    step = lam[..., None] * sigma
    if is_gray(x):
        y = x + step
    else:
        y = (1.0 + step) * x
    y = np.clip(y, 0.0, 1.0)
    # untouched pixels keep their exact stored values
    return np.where((lam == 0)[..., None], x, y)
