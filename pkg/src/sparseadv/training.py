"""Plain and adversarial minibatch training of reference models."""

import logging
from dataclasses import dataclass

import numpy as np

from .models import AdamState, adam_step, sgd_step
from .pgd import PgdConfig, pgd_perturb_batch
from .sigma import compute_sigma_map

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    lr: float = 1e-3
    attack: PgdConfig | None = None
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class EpochMetrics:
    epoch: int
    clean_accuracy: float
    loss: float


def adversarial_train(model, dataset, cfg):
    """Train ``model`` in place, replacing every minibatch by its PGD iterates.

    With ``cfg.attack = None`` this is plain training.  The data order comes
    from a shuffling stream seeded by ``cfg.seed``, separate from anything the
    inner attack uses.  Returns ``(model, metrics)`` with one
    :class:`EpochMetrics` per epoch (clean training accuracy after the epoch,
    mean training loss over the epoch's batches).
    """
    if len(dataset) and dataset.labels.max() >= model.n_classes:
        raise ValueError("dataset labels exceed the model's number of classes")
    shuffle_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(1)[0])
    state = AdamState(lr=cfg.lr)
    params = model.parameters()
    sigmas = None
    if cfg.attack is not None and cfg.attack.threat.needs_sigma:
        sigmas = np.stack([compute_sigma_map(img) for img in dataset.images])

    metrics = []
    n = len(dataset)
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch, labels = dataset.images[idx], dataset.labels[idx]
            if cfg.attack is not None:
                batch = pgd_perturb_batch(
                    batch, labels, model, cfg.attack, None if sigmas is None else sigmas[idx]
                )
            loss, grads, _ = model.loss_and_gradients(batch, labels)
            if cfg.optimizer == "adam":
                adam_step(params, grads, state)
            else:
                sgd_step(params, grads, cfg.lr)
            losses.append(loss)
        acc = float(np.mean(model.predict(dataset.images) == dataset.labels)) if n else 0.0
        metrics.append(EpochMetrics(epoch + 1, acc, float(np.mean(losses)) if losses else 0.0))
        log.info("epoch %d: clean accuracy %.4f, loss %.4f", epoch + 1, acc, metrics[-1].loss)
    return model, metrics


def plain_train(model, dataset, cfg):
    if cfg.attack is not None:
        cfg = TrainConfig(cfg.epochs, cfg.batch_size, cfg.lr, None, cfg.optimizer, cfg.seed)
    return adversarial_train(model, dataset, cfg)
