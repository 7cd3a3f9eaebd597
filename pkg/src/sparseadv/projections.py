"""Euclidean projections onto sparse feasible sets around an image.

All sets have the form "differs from ``x`` in at most ``k`` pixels" intersected
with per-component constraints:

* ``l0``      -- box ``[0, 1]``
* ``l0_linf`` -- box ``[max(0, x - eps), min(1, x + eps)]``
* ``sigma``   -- sigma-map constraints; multiplicative ``(1 + lam * sigma) * x``
  with a single ``|lam| <= kappa`` per pixel for color images, additive box
  ``[x - kappa * sigma, x + kappa * sigma]`` for gray images.

Each projection first solves the problem pixel by pixel ignoring the sparsity
constraint, then keeps the ``k`` pixels whose change lowers the distance to the
target the most.  Ties are broken in favour of the lower (row-major) pixel
index, and pixels with zero gain are never changed.
"""

from dataclasses import dataclass

import numpy as np

from .image import check_image, is_gray, l0_pixel_distance
from .sigma import check_kappa

MODES = ("l0", "l0_linf", "sigma")

# residual under which a target pixel is taken as already sigma-feasible
_SNAP_TOL = 1e-12


def _check_k(k):
    if int(k) != k or k < 0:
        raise ValueError(f"sparsity budget k must be a non-negative integer, got {k}")
    return int(k)


def _check_target(y, x):
    y = np.asarray(y, dtype=np.float64)
    if y.shape != x.shape:
        raise ValueError(f"shape mismatch: target {y.shape} vs image {x.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("target contains non-finite values")
    return y


def top_k_pixels(gains, k):
    """Boolean mask selecting the ``k`` largest strictly positive gains.

    Ties are resolved by the lower flat index.
    """
    flat = gains.ravel()
    order = np.argsort(-flat, kind="stable")[:k]
    order = order[flat[order] > 0]
    mask = np.zeros(flat.shape, dtype=bool)
    mask[order] = True
    return mask.reshape(gains.shape)


def project_l0_box(y, x, k, lower, upper):
    """Project ``y`` onto {z : lower <= z <= upper, at most k pixels differ from x}.

    Parameters
    ----------
    y : array_like, shape (H, W, C)
        Point to project; any real values.
    x : array_like, shape (H, W, C)
        Reference image, which must itself satisfy the bounds.
    k : int
        Maximum number of pixels allowed to differ from ``x``.
    lower, upper : array_like
        Componentwise bounds, broadcastable to ``x.shape``.

    Returns
    -------
    ndarray
        The projection, of the same shape as ``x``.
    """
    x = check_image(x, "x")
    y = _check_target(y, x)
    k = _check_k(k)
    lower = np.broadcast_to(np.asarray(lower, dtype=np.float64), x.shape)
    upper = np.broadcast_to(np.asarray(upper, dtype=np.float64), x.shape)
    if np.any(lower > upper):
        raise ValueError("lower bound exceeds upper bound")
    if np.any((x < lower) | (x > upper)):
        raise ValueError("reference image x violates the box bounds")

    zstar = np.maximum(lower, np.minimum(y, upper))
    gains = np.sum((y - x) ** 2, axis=-1) - np.sum((y - zstar) ** 2, axis=-1)
    keep = top_k_pixels(gains, k)
    z = x.copy()
    z[keep] = zstar[keep]
    return z


def linf_bounds(x, eps):
    return np.maximum(0.0, x - eps), np.minimum(1.0, x + eps)


def project_l0_linf(y, x, k, eps):
    """Projection onto the l0-ball of radius ``k`` intersected with the
    l-infinity ball of radius ``eps`` around ``x`` and the unit box."""
    x = check_image(x, "x")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    lower, upper = linf_bounds(x, eps)
    return project_l0_box(y, x, k, lower, upper)


def sigma_gray_bounds(x, sigma, kappa):
    step = kappa * sigma
    return np.maximum(x - step, 0.0), np.minimum(x + step, 1.0)


def project_l0_sigma_gray(y, x, k, kappa, sigma):
    x = check_image(x, "x")
    if not is_gray(x):
        raise ValueError("project_l0_sigma_gray expects a single-channel image")
    sigma = _check_sigma(sigma, x)
    kappa = check_kappa(kappa)
    lower, upper = sigma_gray_bounds(x, sigma, kappa)
    return project_l0_box(y, x, k, lower, upper)


def _check_sigma(sigma, x):
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.shape != x.shape:
        raise ValueError(f"sigma shape {sigma.shape} does not match image {x.shape}")
    if np.any(sigma < 0):
        raise ValueError("sigma-map entries must be non-negative")
    return sigma


def sigma_lambda_bounds(x, sigma, kappa):
    """Per-pixel interval ``[lam_lo, lam_hi]`` keeping ``(1 + lam*sigma)*x`` in [0, 1].

    Only channels with ``x != 0`` and ``sigma != 0`` constrain the interval;
    when no channel does, the interval is ``[-kappa, kappa]``.
    """
    active = (x != 0) & (sigma != 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        lo_j = np.where(active, -1.0 / sigma, -np.inf)
        hi_j = np.where(active, (1.0 / x - 1.0) / sigma, np.inf)
    lam_lo = np.maximum(-kappa, lo_j.max(axis=-1))
    lam_hi = np.minimum(kappa, hi_j.min(axis=-1))
    return lam_lo, lam_hi


def project_l0_sigma_color(y, x, k, kappa, sigma):
    """Project ``y`` onto the l0-ball intersected with the color sigma-map set.

    Returns
    -------
    z : ndarray, shape (H, W, 3)
    lam : ndarray, shape (H, W)
        Per-pixel coefficients, zero outside the selected pixels, with
        ``z ~= (1 + lam * sigma) * x`` (exact up to rounding, and exact where
        ``y`` itself already was feasible for the pixel).
    """
    x = check_image(x, "x")
    if is_gray(x):
        raise ValueError("project_l0_sigma_color expects a 3-channel image")
    y = _check_target(y, x)
    k = _check_k(k)
    kappa = check_kappa(kappa)
    sigma = _check_sigma(sigma, x)

    a = sigma * x
    denom = np.sum(a * a, axis=-1)
    movable = denom > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        lam_free = np.where(movable, np.sum(a * (y - x), axis=-1) / denom, 0.0)
    lam_lo, lam_hi = sigma_lambda_bounds(x, sigma, kappa)
    lam_star = np.where(movable, np.maximum(lam_lo, np.minimum(lam_free, lam_hi)), 0.0)
    zstar = np.clip((1.0 + lam_star[..., None] * sigma) * x, 0.0, 1.0)

    # a target pixel that already lies in the set is its own projection;
    # keeping it verbatim makes re-projection exactly idempotent
    residual = np.max(np.abs(y - (1.0 + lam_free[..., None] * sigma) * x), axis=-1)
    fixed_channels_kept = np.all((a != 0) | (y == x), axis=-1)
    snap = (
        movable
        & (lam_free >= lam_lo)
        & (lam_free <= lam_hi)
        & (residual <= _SNAP_TOL)
        & fixed_channels_kept
        & np.all((y >= 0.0) & (y <= 1.0), axis=-1)
    )
    zstar = np.where(snap[..., None], y, zstar)
    lam_star = np.where(snap, lam_free, lam_star)

    gains = np.sum((y - x) ** 2, axis=-1) - np.sum((y - zstar) ** 2, axis=-1)
    keep = top_k_pixels(gains, k)
    z = x.copy()
    z[keep] = zstar[keep]
    lam = np.where(keep, lam_star, 0.0)
    return z, lam


@dataclass(frozen=True)
class ThreatModel:
    """Per-component constraint family shared by the attacks.

    ``mode`` is one of ``"l0"``, ``"l0_linf"`` (needs ``eps``) or ``"sigma"``
    (needs ``kappa``; the sigma-map itself is computed from the image).
    """

    mode: str = "l0"
    eps: float | None = None
    kappa: float | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown threat model {self.mode!r}; expected one of {MODES}")
        if self.mode == "l0_linf" and not (self.eps is not None and self.eps > 0):
            raise ValueError("l0_linf threat model requires eps > 0")
        if self.mode == "sigma":
            if self.kappa is None:
                raise ValueError("sigma threat model requires kappa")
            check_kappa(self.kappa)

    @property
    def needs_sigma(self):
        return self.mode == "sigma"

    def project(self, y, x, k, sigma=None):
        """Project ``y`` onto this model's sparse set of budget ``k`` around ``x``."""
        if self.mode == "l0":
            return project_l0_box(y, x, k, 0.0, 1.0)
        if self.mode == "l0_linf":
            return project_l0_linf(y, x, k, self.eps)
        if sigma is None:
            raise ValueError("sigma-map required for the sigma threat model")
        if np.shape(x)[-1] == 1:
            return project_l0_sigma_gray(y, x, k, self.kappa, sigma)
        return project_l0_sigma_color(y, x, k, self.kappa, sigma)[0]

    def contains(self, z, x, k, sigma=None, atol=1e-9):
        """Check that ``z`` lies in the sparse set of budget ``k`` around ``x``.

        Box-type constraints are checked exactly.  The color sigma-map
        constraint is checked by recovering the per-pixel coefficient by least
        squares and allowing ``atol`` reconstruction error.
        """
        z = np.asarray(z, dtype=np.float64)
        x = np.asarray(x, dtype=np.float64)
        if z.shape != x.shape:
            return False
        if l0_pixel_distance(x, z) > k:
            return False
        if not np.all((z >= 0.0) & (z <= 1.0)):
            return False
        if self.mode == "l0":
            return True
        if self.mode == "l0_linf":
            lower, upper = linf_bounds(x, self.eps)
            return bool(np.all((z >= lower) & (z <= upper)))
        if sigma is None:
            raise ValueError("sigma-map required for the sigma threat model")
        sigma = np.asarray(sigma, dtype=np.float64)
        if x.shape[-1] == 1:
            lower, upper = sigma_gray_bounds(x, sigma, self.kappa)
            return bool(np.all((z >= lower) & (z <= upper)))
        return sigma_color_feasible(z, x, sigma, self.kappa, atol=atol)


def sigma_color_feasible(z, x, sigma, kappa, atol=1e-9):
    """True if every changed pixel of ``z`` is ``(1 + lam*sigma)*x`` with ``|lam| <= kappa``."""
    changed = np.any(z != x, axis=-1)
    if not changed.any():
        return True
    zc, xc, sc = z[changed], x[changed], sigma[changed]
    a = sc * xc
    denom = np.sum(a * a, axis=-1)
    if np.any(denom == 0):
        return False
    lam = np.sum(a * (zc - xc), axis=-1) / denom
    if np.any(np.abs(lam) > kappa + atol):
        return False
    recon = (1.0 + lam[:, None] * sc) * xc
    return bool(np.max(np.abs(recon - zc)) <= atol)
