"""Covariance-aware regularization for neural networks and linear models."""

from ._core import (
    DEFAULT_DELTA,
    DataError,
    SolverError,
    StabilizedGram,
    __version__,
    anova_f_select,
    balanced_accuracy,
    build_gram,
    compute_metrics,
    contour_grid,
    covridge_asym_cov,
    covridge_closed_form,
    gen_dataset,
    kfold_split,
    limit_criterion_minimize,
    penalty_grad,
    penalty_value,
    shrunken_target,
    soft_threshold,
    sparridge_solve,
    split,
    standardize,
    train_mlp,
    validate_theorem1,
)

__all__ = [
    "DEFAULT_DELTA",
    "DataError",
    "SolverError",
    "StabilizedGram",
    "__version__",
    "anova_f_select",
    "balanced_accuracy",
    "build_gram",
    "compute_metrics",
    "contour_grid",
    "covridge_asym_cov",
    "covridge_closed_form",
    "gen_dataset",
    "kfold_split",
    "limit_criterion_minimize",
    "penalty_grad",
    "penalty_value",
    "shrunken_target",
    "soft_threshold",
    "sparridge_solve",
    "split",
    "standardize",
    "train_mlp",
    "validate_theorem1",
]
