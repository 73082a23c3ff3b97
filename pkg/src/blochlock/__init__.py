"""blochlock: homodyne-feedback stabilization of a two-level atom.

Library for designing photocurrent-feedback parameters that lock a
continuously monitored atom to a target Bloch direction, analyzing the
stability and stationary purity of the resulting dynamics, and
integrating the conditioned stochastic Bloch equations.
"""

from .bloch import (
    GROUND_STATE,
    BlochVector,
    PolarState,
    Purity,
    bloch_to_density,
    bloch_to_polar,
    density_to_bloch,
    polar_to_bloch,
    purity,
)
from .design import (
    EquatorSingularityError,
    FeedbackDesign,
    GainSingularityError,
    LocusRow,
    LocusTable,
    SearchConfig,
    build_locus,
    constrained_drive,
    ideal_drive,
    ideal_gain,
    noise_power,
    optimize_noise,
    optimize_purity,
)
from .sde import (
    EnsembleStats,
    EquatorReport,
    SimConfig,
    TimeAverage,
    Trajectory,
    ensemble,
    equator_diagnostic,
    photocurrent_increment,
    sbe_step,
    simulate,
    substream,
    time_average,
    wiener_increments,
)
from .steady_state import (
    DegenerateSteadyStateError,
    DriftModel,
    InvalidParamsError,
    StabilityReport,
    SystemParams,
    deterministic_solution,
    drift_model,
    driving_only_steady_state,
    feedback_steady_state,
    kappa,
    stability_eigenvalues,
)

__version__ = "0.1.0"

__all__ = [
    "BlochVector", "PolarState", "Purity", "GROUND_STATE",
    "bloch_to_density", "density_to_bloch", "polar_to_bloch",
    "bloch_to_polar", "purity",
    "SystemParams", "DriftModel", "StabilityReport",
    "InvalidParamsError", "DegenerateSteadyStateError",
    "drift_model", "kappa", "driving_only_steady_state",
    "feedback_steady_state", "stability_eigenvalues",
    "deterministic_solution",
    "FeedbackDesign", "SearchConfig", "LocusRow", "LocusTable",
    "EquatorSingularityError", "GainSingularityError",
    "ideal_gain", "ideal_drive", "constrained_drive", "noise_power",
    "optimize_purity", "optimize_noise", "build_locus",
    "SimConfig", "Trajectory", "EnsembleStats", "EquatorReport",
    "TimeAverage", "simulate", "ensemble", "equator_diagnostic",
    "sbe_step", "photocurrent_increment", "wiener_increments",
    "substream", "time_average",
    "__version__",
]
