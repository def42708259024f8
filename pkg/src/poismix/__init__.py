"""Conditional finite mixtures of independent Poisson distributions.

Fit context-dependent, correlated spike-count models with EM, SGD or the
Hybrid closed-form/SGD algorithm, generate synthetic ground truth, and pick
the number of components by cross-validation.
"""

from .cmp import (
    CmpParams,
    SpikeDataset,
    conditional_log_likelihood,
    conditioned_moments,
    encode_stimulus,
    responsibilities,
    tuning_curves,
    weight_curve,
)
from .errors import PoismixError
from .evaluation import empirical_correlations, kfold_cv, one_component_fit, select_components
from .mixture import HarmoniumParams, MixtureParams, harmonium_to_mixture, mixture_to_harmonium
from .synth import GroundTruthSpec, SamplingPlan, generate_ground_truth, sample_dataset
from .training import FitReport, TrainConfig, fit

__version__ = "0.1.0"

__all__ = [
    "CmpParams",
    "FitReport",
    "GroundTruthSpec",
    "HarmoniumParams",
    "MixtureParams",
    "PoismixError",
    "SamplingPlan",
    "SpikeDataset",
    "TrainConfig",
    "conditional_log_likelihood",
    "conditioned_moments",
    "empirical_correlations",
    "encode_stimulus",
    "fit",
    "generate_ground_truth",
    "harmonium_to_mixture",
    "kfold_cv",
    "mixture_to_harmonium",
    "one_component_fit",
    "responsibilities",
    "sample_dataset",
    "select_components",
    "tuning_curves",
    "weight_curve",
]
