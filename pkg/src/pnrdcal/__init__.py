"""Absolute efficiency calibration of two photon-number-resolving detectors."""

__version__ = "0.1.0"

from .background import (
    BackgroundModel,
    EquivalencePoint,
    SubtractionResult,
    add_background,
    background_matrix,
    convolve_click_statistics,
    photon_level_statistics,
    solve_loss_background_equivalence,
    subtract_background,
)
from .detector_model import (
    MultiplexConfig,
    build_convolution_matrix,
    build_loss_matrix,
    compose_povm_diagonals,
    detector_response,
)
from .errors import (
    AmbiguousEstimateError,
    CalibrationError,
    DimensionError,
    NormalizationError,
    SingularResponseError,
    UndefinedEstimateError,
)
from .estimation import (
    CalibrationResult,
    JointReconstruction,
    KlyshkoRates,
    biased_klyshko,
    estimate_efficiencies,
    find_basins,
    fit_diagonal_state,
    klyshko_efficiency,
    reconstruct_joint_statistics,
    scan_residual_landscape,
)
from .forward_model import ClickHistogram, as_probabilities, predict_joint, predict_single
from .nnls import nnls
from .simulation import (
    DetectorConfig,
    ExperimentConfig,
    SourceConfig,
    make_source_state,
    simulate_clicks_exact,
    simulate_clicks_mc,
)

__all__ = [
    "add_background",
    "AmbiguousEstimateError",
    "as_probabilities",
    "background_matrix",
    "BackgroundModel",
    "biased_klyshko",
    "build_convolution_matrix",
    "build_loss_matrix",
    "CalibrationError",
    "CalibrationResult",
    "ClickHistogram",
    "compose_povm_diagonals",
    "convolve_click_statistics",
    "detector_response",
    "DetectorConfig",
    "DimensionError",
    "EquivalencePoint",
    "estimate_efficiencies",
    "ExperimentConfig",
    "find_basins",
    "fit_diagonal_state",
    "JointReconstruction",
    "klyshko_efficiency",
    "KlyshkoRates",
    "make_source_state",
    "MultiplexConfig",
    "nnls",
    "NormalizationError",
    "photon_level_statistics",
    "predict_joint",
    "predict_single",
    "reconstruct_joint_statistics",
    "scan_residual_landscape",
    "simulate_clicks_exact",
    "simulate_clicks_mc",
    "SingularResponseError",
    "solve_loss_background_equivalence",
    "SourceConfig",
    "subtract_background",
    "SubtractionResult",
    "UndefinedEstimateError",
]
