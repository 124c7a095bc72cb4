"""Vascular-feature optimised loss and evaluation toolkit.

Core pieces: raster I/O for label/probability maps (`raster_io`), mask
geometry (`morphology`), clinical features (`features`), the combined
cross-entropy + box-count training loss (`loss`), evaluation metrics and
agreement statistics (`metrics`), misclassification scenario synthesis
(`simulate`), and the incidence-prediction harness (`downstream`).
"""

__version__ = "0.1.0"

from .features import FeatureRecord, feature_record
from .loss import LossConfig, LossValue, vafo_loss
from .metrics import betti_error, icc, mann_whitney_u, roc_pr_auc, seg_scores
from .raster_io import harden, load_label_png, load_probmap, one_hot, save_label_png, save_probmap
from .simulate import ScenarioSpec, generate_scenario, predicted_errors

__all__ = [
    "__version__",
    "FeatureRecord",
    "feature_record",
    "LossConfig",
    "LossValue",
    "vafo_loss",
    "betti_error",
    "icc",
    "mann_whitney_u",
    "roc_pr_auc",
    "seg_scores",
    "harden",
    "load_label_png",
    "load_probmap",
    "one_hot",
    "save_label_png",
    "save_probmap",
    "ScenarioSpec",
    "generate_scenario",
    "predicted_errors",
]
