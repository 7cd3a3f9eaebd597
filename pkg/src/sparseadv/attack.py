"""Result record shared by the attacks."""

from dataclasses import dataclass

import numpy as np


@dataclass
class AttackResult:
    """Outcome of attacking one image.

    On failure ``adversarial``, ``pixels_changed`` and ``label`` are ``None``.
    ``queries`` counts images passed to the model's logit oracle.
    """

    success: bool
    adversarial: np.ndarray | None = None
    pixels_changed: int | None = None
    label: int | None = None
    queries: int = 0
