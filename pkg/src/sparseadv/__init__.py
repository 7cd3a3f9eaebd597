"""Sparse and imperceivable adversarial attacks on image classifiers.

Black-box CornerSearch, white-box PGD0 / sigma-PGD, exact projections onto
sparse feasible sets, and adversarial training of small reference models.
"""

from .attack import AttackResult
from .cornersearch import CornerSearchConfig, corner_search, one_pixel_candidates, sample_indices
from .data import Dataset, gen_synthetic, gen_synthetic_split, read_idx
from .evaluation import EvalReport, evaluate_attack, robust_accuracy_curve
from .image import l0_pixel_distance, linf_distance, set_pixel
from .models import ReferenceModel, cross_entropy
from .pgd import PgdConfig, pgd_attack, robust_accuracy_point
from .projections import (
    ThreatModel,
    project_l0_box,
    project_l0_linf,
    project_l0_sigma_color,
    project_l0_sigma_gray,
)
from .sigma import apply_sigma_perturbation, compute_sigma_map
from .training import TrainConfig, adversarial_train, plain_train

__version__ = "0.1.0"
