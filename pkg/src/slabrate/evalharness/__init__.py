from .metrics import (ConfusionMatrix, FoldSpec, SpatialError, confusion_matrix, mask_spatial_error,
                      pixel_accuracy, profile_uncertainty, rate_error, spatial_error)
from .protocols import (FoldResult, SequenceEval, StudyResult, evaluate_classical, evaluate_unet,
                        make_folds, run_flux_study, run_loocv, score_masks, train_model)

__all__ = [
    "ConfusionMatrix", "FoldSpec", "SpatialError", "confusion_matrix", "mask_spatial_error",
    "pixel_accuracy", "profile_uncertainty", "rate_error", "spatial_error", "FoldResult",
    "SequenceEval", "StudyResult", "evaluate_classical", "evaluate_unet", "make_folds",
    "run_flux_study", "run_loocv", "score_masks", "train_model",
]
