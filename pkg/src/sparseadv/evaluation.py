"""Attack evaluation: success rate, pixel statistics and robust accuracy."""

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .cornersearch import CornerSearchConfig, corner_search
from .image import l0_pixel_distance
from .pgd import PgdConfig, pgd_attack

CSV_HEADER = ["index", "clean_label", "pred_label", "correct", "success", "pixels_changed", "queries"]


class VerificationError(RuntimeError):
    """An attack reported a success that does not hold up on re-checking."""


@dataclass
class PointRecord:
    index: int
    clean_label: int
    pred_label: int
    correct: bool
    success: bool = False
    pixels_changed: int | None = None
    queries: int = 0
    adversarial: np.ndarray | None = field(default=None, repr=False)
    adversarial_label: int | None = None


@dataclass
class EvalReport:
    n_points: int
    n_correct: int
    n_success: int
    success_rate: float | None
    mean_pixels: float | None
    median_pixels: int | None
    records: list = field(default_factory=list, repr=False)

    @property
    def robust_accuracy(self):
        if self.n_points == 0:
            return 0.0
        return (self.n_correct - self.n_success) / self.n_points

    def robust_accuracy_at(self, k):
        """Robust accuracy counting only successes that changed at most ``k`` pixels."""
        if self.n_points == 0:
            return 0.0
        broken = sum(1 for r in self.records if r.success and r.pixels_changed <= k)
        return (self.n_correct - broken) / self.n_points

    def summary(self):
        return {
            "n_points": self.n_points,
            "n_correct": self.n_correct,
            "n_success": self.n_success,
            "success_rate": self.success_rate,
            "mean_pixels": self.mean_pixels,
            "median_pixels": self.median_pixels,
            "robust_accuracy": self.robust_accuracy,
        }

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for r in self.records:
                writer.writerow([
                    r.index, r.clean_label, r.pred_label, int(r.correct), int(r.success),
                    "" if r.pixels_changed is None else r.pixels_changed, r.queries,
                ])

    def write_summary(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)


def lower_median(values):
    values = sorted(values)
    return values[(len(values) - 1) // 2]


def make_attack(model, cfg):
    """Closure ``(image, label) -> AttackResult`` for a PGD or CornerSearch config."""
    if isinstance(cfg, PgdConfig):
        return lambda x, y: pgd_attack(x, y, model, cfg)
    if isinstance(cfg, CornerSearchConfig):
        return lambda x, y: corner_search(x, model, cfg)
    raise TypeError(f"unsupported attack config {type(cfg).__name__}")


def evaluate_attack(dataset, model, attack, verify=None, workers=1, predictions=None):
    """Run ``attack`` on every correctly classified point and aggregate.

    Parameters
    ----------
    dataset : Dataset
    model : logit oracle with ``predict``
    attack : callable
        ``attack(image, label) -> AttackResult``.
    verify : callable, optional
        ``verify(image, adversarial) -> bool`` checking the threat model's
        constraints independently of the attack.  Every reported success is
        also re-classified; a success failing either check raises
        :class:`VerificationError`.
    workers : int
        Number of points attacked concurrently.
    """
    if predictions is None:
        predictions = model.predict(dataset.images) if len(dataset) else np.zeros(0, dtype=int)
    records = [
        PointRecord(i, int(y), int(p), bool(p == y))
        for i, (y, p) in enumerate(zip(dataset.labels, predictions))
    ]
    todo = [r for r in records if r.correct]

    def run(record):
        return attack(dataset.images[record.index], record.clean_label)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, todo))
    else:
        results = [run(r) for r in todo]

    for record, result in zip(todo, results):
        record.queries = result.queries
        if not result.success:
            continue
        x = dataset.images[record.index]
        adv = result.adversarial
        adv_pred = int(model.predict(adv[None])[0])
        if adv_pred == record.clean_label:
            raise VerificationError(f"point {record.index}: adversarial image is still classified as {adv_pred}")
        changed = l0_pixel_distance(x, adv)
        if changed != result.pixels_changed:
            raise VerificationError(
                f"point {record.index}: attack reported {result.pixels_changed} changed pixels, found {changed}"
            )
        if verify is not None and not verify(x, adv):
            raise VerificationError(f"point {record.index}: adversarial image violates the threat model")
        record.success = True
        record.pixels_changed = changed
        record.adversarial = adv
        record.adversarial_label = adv_pred

    pixels = [r.pixels_changed for r in records if r.success]
    n_correct = len(todo)
    return EvalReport(
        n_points=len(records),
        n_correct=n_correct,
        n_success=len(pixels),
        success_rate=len(pixels) / n_correct if n_correct else None,
        mean_pixels=float(np.mean(pixels)) if pixels else None,
        median_pixels=int(lower_median(pixels)) if pixels else None,
        records=records,
    )


def with_budget(cfg, k):
    if isinstance(cfg, PgdConfig):
        return replace(cfg, k=k)
    if isinstance(cfg, CornerSearchConfig):
        return replace(cfg, k_max=k)
    raise TypeError(f"unsupported attack config {type(cfg).__name__}")


def robust_accuracy_curve(dataset, model, template, k_list, workers=1):
    """Robust accuracy for each budget in ``k_list`` (strictly increasing).

    ``template`` is a :class:`PgdConfig` (its ``k`` is replaced) or a
    :class:`CornerSearchConfig` (its ``k_max`` is replaced).  Returns a list of
    ``(k, robust_accuracy)`` pairs.
    """
    k_list = [int(k) for k in k_list]
    if any(b <= a for a, b in zip(k_list, k_list[1:])):
        raise ValueError("k_list must be strictly increasing")
    predictions = model.predict(dataset.images) if len(dataset) else np.zeros(0, dtype=int)
    curve = []
    for k in k_list:
        cfg = with_budget(template, k)
        report = evaluate_attack(dataset, model, make_attack(model, cfg), cfg.feasible, workers, predictions)
        curve.append((k, report.robust_accuracy))
    return curve

