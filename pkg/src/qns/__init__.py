"""Qubit noise spectroscopy toolkit.

Simulates coherence decay under dynamical-decoupling sequences from
parametric noise spectra, inverts measured decays back to spectra
(classical baselines and recurrent-network estimators), denoises noisy
decays, and synthesizes pulse sequences that maximize residual
coherence.
"""

from .errors import (
    CorruptionError,
    DivergenceError,
    FitFailure,
    MigrationError,
    NumericalError,
    ValidationError,
)
from .grids import COHERENCE_FLOOR, GRID_POINTS, FrequencyGrid, TimeGrid
from .spectra import (
    CompositeModel,
    LorentzianFeatureParams,
    LorentzianParams,
    ModelKind,
    NoiseSpectrum,
    OneOverFParams,
    StretchedDecayParams,
    eval_lorentzian,
    eval_one_over_f,
    evaluate_model,
    fit_double_lorentzian,
    sample_spectrum,
)
from .sequences import PulseSequence, SequenceFamily, cpmg, filter_function, hahn, udd
from .simulate import (
    ACCURATE,
    FAST,
    CoherenceCurve,
    QuadratureConfig,
    StretchedExpParams,
    coherence_curve,
    decoherence_integral,
    measured_t2,
    stretched_exponential,
)
from .inversion import (
    SensitivitySet,
    alvarez_suter,
    default_tau_grid,
    delta_inversion,
    harmonic_sensitivities,
    phenomenological_roundtrip,
    stretched_decay_spectrum,
)
from .dataset import (
    DatasetRecord,
    GridConfig,
    add_measurement_noise,
    curves_matrix,
    generate,
    load,
    save,
    spectra_matrix,
    split,
)
from .metrics import (
    ErrorReport,
    build_report,
    load_report,
    log_curve_error,
    spectrum_error,
    stretched_exp_fit,
    write_report,
)
from .network import (
    CurveDenoiser,
    Head,
    NetworkParameters,
    SpectrumRegressor,
    TrainingConfig,
    mape_loss,
    network_forward,
)
from .optimize import OptimizationProblem, OptimizationResult, benchmark, optimize_pulses

__version__ = "0.1.0"

__all__ = [
    "ACCURATE",
    "COHERENCE_FLOOR",
    "CoherenceCurve",
    "CompositeModel",
    "CorruptionError",
    "CurveDenoiser",
    "DatasetRecord",
    "DivergenceError",
    "ErrorReport",
    "FAST",
    "FitFailure",
    "FrequencyGrid",
    "GRID_POINTS",
    "GridConfig",
    "Head",
    "LorentzianFeatureParams",
    "LorentzianParams",
    "MigrationError",
    "ModelKind",
    "NetworkParameters",
    "NoiseSpectrum",
    "NumericalError",
    "OneOverFParams",
    "OptimizationProblem",
    "OptimizationResult",
    "PulseSequence",
    "QuadratureConfig",
    "SensitivitySet",
    "SequenceFamily",
    "SpectrumRegressor",
    "StretchedDecayParams",
    "StretchedExpParams",
    "TimeGrid",
    "TrainingConfig",
    "ValidationError",
    "add_measurement_noise",
    "alvarez_suter",
    "benchmark",
    "build_report",
    "coherence_curve",
    "cpmg",
    "curves_matrix",
    "decoherence_integral",
    "default_tau_grid",
    "delta_inversion",
    "eval_lorentzian",
    "eval_one_over_f",
    "evaluate_model",
    "filter_function",
    "fit_double_lorentzian",
    "generate",
    "hahn",
    "harmonic_sensitivities",
    "load",
    "load_report",
    "log_curve_error",
    "mape_loss",
    "measured_t2",
    "network_forward",
    "optimize_pulses",
    "phenomenological_roundtrip",
    "sample_spectrum",
    "save",
    "spectra_matrix",
    "spectrum_error",
    "split",
    "stretched_decay_spectrum",
    "stretched_exp_fit",
    "stretched_exponential",
    "udd",
]
