"""Online group-structured dictionary learning for collaborative filtering."""

__version__ = "0.1.0"

from .groups import GroupStructure, toroid_groups, tree_groups, validate
from .coder import CoderConfig, SparseCode, loss, omega, optimal_z, solve_code
from .learner import (Dictionary, LearnerConfig, LearnerStats, bcd_step, init_dictionary,
                      project_column, train, update_stats)
from .recommender import (CorrectionConfig, Prediction, correct, fit_gammas, predict_base,
                          predict_user, similarity, similarity_matrix)
from .evaluation import (GridSpec, SplitSpec, TrialConfig, TrialResult, grid_search, mae,
                         rmse, split)
from .data import RatingDataset, gen_synthetic, load_jester

__all__ = [
    "GroupStructure", "toroid_groups", "tree_groups", "validate",
    "CoderConfig", "SparseCode", "loss", "omega", "optimal_z", "solve_code",
    "Dictionary", "LearnerConfig", "LearnerStats", "bcd_step", "init_dictionary",
    "project_column", "train", "update_stats",
    "CorrectionConfig", "Prediction", "correct", "fit_gammas", "predict_base", "predict_user",
    "similarity", "similarity_matrix",
    "GridSpec", "SplitSpec", "TrialConfig", "TrialResult", "grid_search", "mae", "rmse", "split",
    "RatingDataset", "gen_synthetic", "load_jester",
]
