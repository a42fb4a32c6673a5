"""Factor analysis of multivariate count data.

Builds dependent Poisson factor models in which groups of variables share
a common latent Poisson factor (Y_j = U + X_j), fits them by maximum
likelihood (with a truncated-Poisson variant for ordinal data), selects
the factor structure by a forward AIC search over set partitions, and
computes heuristic asymptotic selection probabilities alongside Monte
Carlo selection-probability studies.
"""

__version__ = "0.1.0"

from .partitions import (
    ModelPartition,
    bell_number,
    enumerate_partitions,
    max_forward_tests,
    merge_groups,
    param_count,
    parse_partition,
    successor_models,
)
from .dists import PoissonSpec, TruncPoissonSpec, log_pmf, moments, sample
from .likelihood import (
    CountMatrix,
    GroupParams,
    MixedModelSpec,
    group_loglik,
    joint_pmf,
    mixed_loglik,
    model_loglik,
)
from .estimation import (
    FitOptions,
    FittedModel,
    fit_group_poisson,
    fit_group_truncated,
    fit_mixed,
    fit_model,
    standard_errors,
)
from .selection import SelectionTrace, aic, select_exhaustive, select_forward
from .asymptotics import AspResult, asp_correct_selection, asp_table, gamma_constant
from .simulation import SimDesign, StudyResult, generate, run_study, study_report

__all__ = [
    "ModelPartition",
    "bell_number",
    "enumerate_partitions",
    "max_forward_tests",
    "merge_groups",
    "param_count",
    "parse_partition",
    "successor_models",
    "PoissonSpec",
    "TruncPoissonSpec",
    "log_pmf",
    "moments",
    "sample",
    "CountMatrix",
    "GroupParams",
    "MixedModelSpec",
    "group_loglik",
    "joint_pmf",
    "mixed_loglik",
    "model_loglik",
    "FitOptions",
    "FittedModel",
    "fit_group_poisson",
    "fit_group_truncated",
    "fit_mixed",
    "fit_model",
    "standard_errors",
    "SelectionTrace",
    "aic",
    "select_exhaustive",
    "select_forward",
    "AspResult",
    "asp_correct_selection",
    "asp_table",
    "gamma_constant",
    "SimDesign",
    "StudyResult",
    "generate",
    "run_study",
    "study_report",
]
