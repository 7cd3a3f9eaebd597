"""CornerSearch: score-based black-box sparse attack.

The attack needs nothing but logits.  It evaluates every one-pixel change of
the image to an extreme value allowed by the threat model, ranks those changes
per class by the logit margin they produce, and then samples combinations of
``k`` top-ranked changes (favouring the head of each ranking) for increasing
``k`` until the prediction flips.
"""

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .attack import AttackResult
from .image import check_image, is_gray, l0_pixel_distance
from .projections import ThreatModel, linf_bounds, sigma_gray_bounds
from .sigma import compute_sigma_map

log = logging.getLogger(__name__)


@dataclass
class CornerSearchConfig:
    """Parameters of one CornerSearch run.

    ``n`` is the size of the candidate pool sampled from in each ranking,
    ``k_max`` the largest number of pixels tried, and ``n_iter`` the number
    of sampled combinations per (k, class) pair.
    """

    threat: ThreatModel = field(default_factory=ThreatModel)
    n: int = 100
    k_max: int = 10
    n_iter: int = 1000
    seed: int = 0
    batch_size: int = 256

    def __post_init__(self):
        if self.n < 1 or self.k_max < 1 or self.n_iter < 1 or self.batch_size < 1:
            raise ValueError("n, k_max, n_iter and batch_size must all be >= 1")

    @property
    def budget(self):
        return self.k_max

    def feasible(self, x, z, sigma=None):
        """Independent check that ``z`` is a valid output of this attack on ``x``.

        Every changed pixel must take a value this attack can produce:
        anything in [0, 1] for ``l0``, the clipped eps-box for ``l0_linf``,
        and one of the two clipped sigma extremes for ``sigma``.
        """
        x = np.asarray(x, dtype=np.float64)
        z = np.asarray(z, dtype=np.float64)
        if z.shape != x.shape or l0_pixel_distance(x, z) > self.k_max:
            return False
        if not np.all((z >= 0.0) & (z <= 1.0)):
            return False
        mode = self.threat.mode
        if mode == "l0":
            return True
        if mode == "l0_linf":
            lower, upper = linf_bounds(x, self.threat.eps)
            return bool(np.all((z >= lower) & (z <= upper)))
        if sigma is None:
            sigma = compute_sigma_map(x)
        plus, minus = _sigma_extremes(x, sigma, self.threat.kappa)
        changed = np.any(z != x, axis=-1)
        ok = np.all(z == plus, axis=-1) | np.all(z == minus, axis=-1)
        return bool(np.all(ok[changed]))


@dataclass
class CandidateSet:
    """One-pixel modifications of an image.

    Candidate ``j`` sets pixel ``pixels[j] = (row, col)`` to ``values[j]``.
    ``collapsed[j]`` flags candidates that clipping turned back into the
    original pixel.
    """

    pixels: np.ndarray
    values: np.ndarray
    collapsed: np.ndarray

    def __len__(self):
        return len(self.pixels)

    def apply(self, x, index_rows):
        """Images obtained by applying, for each row of ``index_rows``, its
        candidates in order to ``x`` (later candidates overwrite earlier ones
        on the same pixel)."""
        index_rows = np.asarray(index_rows)
        if index_rows.ndim == 1:
            index_rows = index_rows[:, None]
        out = np.repeat(x[None], index_rows.shape[0], axis=0)
        batch = np.arange(index_rows.shape[0])
        for t in range(index_rows.shape[1]):
            j = index_rows[:, t]
            out[batch, self.pixels[j, 0], self.pixels[j, 1]] = self.values[j]
        return out


def _sigma_extremes(x, sigma, kappa):
    if is_gray(x):
        lower, upper = sigma_gray_bounds(x, sigma, kappa)
        return upper, lower
    plus = np.clip((1.0 + kappa * sigma) * x, 0.0, 1.0)
    minus = np.clip((1.0 - kappa * sigma) * x, 0.0, 1.0)
    return plus, minus


def one_pixel_candidates(x, threat, sigma=None):
    """All one-pixel modifications of ``x`` probed by CornerSearch.

    Candidates are ordered pixel-major (row-major pixel order), and within a
    pixel by corner: for color images the corners of the RGB cube (or of
    the eps-cube) in lexicographic order with the low value first; for gray
    images low then high; for the sigma model ``+`` then ``-``.
    """
    x = check_image(x)
    if isinstance(threat, str):
        threat = ThreatModel(threat)
    if threat.needs_sigma and sigma is None:
        raise ValueError("sigma-map required for the sigma threat model")
    height, width, channels = x.shape
    flat = x.reshape(-1, channels)
    d = flat.shape[0]

    if threat.mode == "sigma":
        plus, minus = _sigma_extremes(x, np.asarray(sigma, dtype=np.float64), threat.kappa)
        per_pixel = np.stack([plus.reshape(-1, channels), minus.reshape(-1, channels)], axis=1)
    else:
        signs = np.array(list(itertools.product((0.0, 1.0), repeat=channels)))
        if threat.mode == "l0":
            per_pixel = np.broadcast_to(signs, (d, *signs.shape))
        else:
            lower, upper = linf_bounds(flat, threat.eps)
            per_pixel = np.where(signs[None] == 0.0, lower[:, None, :], upper[:, None, :])

    n_per = per_pixel.shape[1]
    values = np.ascontiguousarray(per_pixel.reshape(-1, channels), dtype=np.float64)
    pix = np.repeat(np.arange(d), n_per)
    pixels = np.stack([pix // width, pix % width], axis=1)
    collapsed = np.all(values == flat[pix], axis=1)
    return CandidateSet(pixels=pixels, values=values, collapsed=collapsed)


def build_orderings(candidate_logits, label):
    """Rankings of the candidates, one row per class.

    Row ``r != label`` sorts candidates by ``f_r - f_label`` in decreasing
    order; row ``label`` sorts by ``max_{r != label} f_r - f_label``.  Ties
    keep the lower candidate index first.  Indices are 0-based.
    """
    z = np.asarray(candidate_logits, dtype=np.float64)
    n_classes = z.shape[1]
    if not 0 <= label < n_classes:
        raise ValueError(f"label {label} out of range for {n_classes} classes")
    margins = z - z[:, [label]]
    others = np.delete(margins, label, axis=1)
    margins[:, label] = others.max(axis=1) if others.shape[1] else -np.inf
    return np.stack([np.argsort(-margins[:, r], kind="stable") for r in range(n_classes)])


def sample_indices(n, k, rng):
    """Draw ``k`` ranks in ``{1, ..., n}`` with ``P(i) = (2n - 2i + 1) / n**2``.

    Uses the inverse of the CDF ``F(i) = 1 - (1 - i/n)**2``.  ``k`` may be an
    int or a shape tuple.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    u = rng.random(k)
    ranks = np.ceil(n * (1.0 - np.sqrt(1.0 - u))).astype(np.int64)
    return np.clip(ranks, 1, n)


class _Counter:
    def __init__(self, oracle, batch_size):
        self.oracle = oracle
        self.batch_size = batch_size
        self.queries = 0

    def first_flip(self, make_images, count, label):
        """Index of the first image (in order) not classified as ``label``."""
        for start in range(0, count, self.batch_size):
            stop = min(start + self.batch_size, count)
            images = make_images(start, stop)
            logits = np.asarray(self.oracle.logits(images))
            self.queries += stop - start
            pred = np.argmax(logits, axis=1)
            hits = np.flatnonzero(pred != label)
            if hits.size:
                return start + int(hits[0]), images[hits[0]], int(pred[hits[0]])
        return None


def corner_search(x, oracle, cfg, sigma=None):
    """Run CornerSearch on image ``x`` against a logit oracle.

    The original class is the oracle's prediction on ``x`` (this initial
    query is not counted).  Returns an :class:`AttackResult`.
    """
    x = check_image(x)
    rng = np.random.default_rng(cfg.seed)
    if cfg.threat.needs_sigma and sigma is None:
        sigma = compute_sigma_map(x)
    label = int(np.argmax(oracle.logits(x[None])[0]))
    counter = _Counter(oracle, cfg.batch_size)

    cands = one_pixel_candidates(x, cfg.threat, sigma)
    m = len(cands)
    single = np.arange(m)

    # stage 1: every one-pixel change; keep the logits for the rankings
    logits = []
    for start in range(0, m, cfg.batch_size):
        stop = min(start + cfg.batch_size, m)
        images = cands.apply(x, single[start:stop])
        z = np.asarray(oracle.logits(images))
        counter.queries += stop - start
        flipped = np.flatnonzero(np.argmax(z, axis=1) != label)
        if flipped.size:
            adv = images[flipped[0]]
            return AttackResult(True, adv, l0_pixel_distance(x, adv), int(np.argmax(z[flipped[0]])), counter.queries)
        logits.append(z)
    logits = np.concatenate(logits)
    orderings = build_orderings(logits, label)
    n_classes = logits.shape[1]
    pool = min(cfg.n, m)

    # stage 2: sampled k-pixel combinations, ascending k, then class, then sample
    for k in range(2, cfg.k_max + 1):
        for r in range(n_classes):
            ranks = sample_indices(pool, (cfg.n_iter, k), rng)
            combos = orderings[r][ranks - 1]
            hit = counter.first_flip(lambda a, b: cands.apply(x, combos[a:b]), cfg.n_iter, label)
            if hit is not None:
                _, adv, adv_label = hit
                log.debug("corner search succeeded at k=%d, class %d", k, r)
                return AttackResult(True, adv, l0_pixel_distance(x, adv), adv_label, counter.queries)
    return AttackResult(False, queries=counter.queries)
