"""White-box projected gradient ascent on the cross-entropy loss for sparse
threat models (PGD0 and its sigma-map variant)."""

from dataclasses import dataclass, field

import numpy as np

from .attack import AttackResult
from .image import check_image, l0_pixel_distance
from .projections import ThreatModel
from .sigma import compute_sigma_map

# step size used for l0 adversarial training in the reference experiments
DEFAULT_ETA = 30000 / 255


@dataclass
class PgdConfig:
    k: int = 10
    eta: float = DEFAULT_ETA
    iterations: int = 20
    restarts: int = 10
    threat: ThreatModel = field(default_factory=ThreatModel)
    seed: int = 0

    def __post_init__(self):
        if self.k < 0 or int(self.k) != self.k:
            raise ValueError("k must be a non-negative integer")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.iterations < 1 or self.restarts < 1:
            raise ValueError("iterations and restarts must be >= 1")

    @property
    def budget(self):
        return self.k

    def feasible(self, x, z, sigma=None):
        if self.threat.needs_sigma and sigma is None:
            sigma = compute_sigma_map(x)
        return self.threat.contains(z, x, self.k, sigma)


def _step(x_cur, grad, eta):
    norm = np.sum(np.abs(grad))
    if norm == 0:
        return None
    return x_cur + eta * grad / norm


def pgd_attack(x, label, model, cfg, sigma=None, on_iterate=None):
    """Attack ``x`` (correctly classified as ``label``) with sparse PGD.

    Restart 1 starts from ``x``; later restarts start from the projection of
    ``x`` plus uniform noise in [-1, 1].  Each iteration takes an
    l1-normalised gradient step and projects back onto the threat model's
    set of budget ``cfg.k``.  The first projected iterate classified
    differently from ``label`` is returned.

    ``on_iterate``, if given, is called with every projected iterate.
    """
    x = check_image(x)
    if not hasattr(model, "input_gradient"):
        raise TypeError("PGD needs a model exposing input_gradient")
    if cfg.threat.needs_sigma and sigma is None:
        sigma = compute_sigma_map(x)
    rng = np.random.default_rng(cfg.seed)
    project = lambda y: cfg.threat.project(y, x, cfg.k, sigma)
    queries = 0

    for restart in range(cfg.restarts):
        if restart == 0:
            x_cur = x.copy()
        else:
            x_cur = project(x + rng.uniform(-1.0, 1.0, size=x.shape))
            if on_iterate is not None:
                on_iterate(x_cur)
        for _ in range(cfg.iterations):
            z = _step(x_cur, model.input_gradient(x_cur, label), cfg.eta)
            if z is not None:
                x_cur = project(z)
            if on_iterate is not None:
                on_iterate(x_cur)
            pred = int(np.argmax(model.logits(x_cur[None])[0]))
            queries += 1
            if pred != label:
                return AttackResult(True, x_cur, l0_pixel_distance(x, x_cur), pred, queries)
    return AttackResult(False, queries=queries)


def pgd_perturb_batch(images, labels, model, cfg, sigmas=None):
    """Final PGD iterates for a batch, without early stopping.

    Used as the inner maximisation of adversarial training: every image runs
    ``cfg.iterations`` steps from its clean version (one trajectory, no
    restarts) and the last projected iterate is returned.
    """
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels)
    if cfg.threat.needs_sigma and sigmas is None:
        sigmas = [compute_sigma_map(img) for img in images]
    current = images.copy()
    for _ in range(cfg.iterations):
        _, _, grads = model.loss_and_gradients(current, labels, need_params=False)
        for i in range(len(images)):
            z = _step(current[i], grads[i], cfg.eta)
            if z is not None:
                sigma = None if sigmas is None else sigmas[i]
                current[i] = cfg.threat.project(z, images[i], cfg.k, sigma)
    return current


def robust_accuracy_point(dataset, model, cfg, predictions=None):
    """Fraction of points classified correctly and not broken by PGD at budget ``cfg.k``.

    Misclassified points count as non-robust.  ``predictions`` may carry a
    precomputed clean prediction pass.
    """
    if len(dataset) == 0:
        return 0.0
    if predictions is None:
        predictions = model.predict(dataset.images)
    robust = 0
    for x, y, pred in zip(dataset.images, dataset.labels, predictions):
        if pred != y:
            continue
        if not pgd_attack(x, int(y), model, cfg).success:
            robust += 1
    return robust / len(dataset)
