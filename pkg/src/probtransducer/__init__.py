"""Bayesian probability transducer for classifier outputs.

Fit a nonparametric mixture to (true class, classifier output) pairs,
then turn new outputs into class probabilities with uncertainty,
choose decisions that maximize expected utility, and evaluate
classifiers by their utility yield.
"""

from .calibrate import SamplerConfig, diagnostics, fit
from .decide import (
    DecisionOutcome,
    Threshold,
    TieRule,
    canonical_form,
    choose,
    decision_threshold,
    expected_utilities,
    sample_utility_space,
)
from .errors import (
    CoverageError,
    DiagnosticUnavailableError,
    DimensionError,
    EmptyDataError,
    InvalidOutputError,
    NoScaleError,
    ParseError,
    TransducerError,
    UndefinedConditionalError,
    VersionMismatchError,
)
from .evaluate import (
    ConfusionMatrix,
    OutputGrid,
    accumulate_confusion,
    achievable_bounds,
    algorithm_expected_utility,
    evaluate_algorithm,
    prob_superior,
    rescaled_yield,
    utility_yield,
    variability_band,
)
from .io import load_model, save_model
from .model import CalibrationSet, FrequencySample, MixtureComponent, TransducerModel

__version__ = "0.1.0"
