"""Frequency-domain identification of fractional-order battery impedance models.

Pipeline: design an excitation (`excitation`), simulate or measure a
current/voltage record (`simulate`, `recordio`), average per-period spectra
with errors-in-variables covariances (`spectra`), estimate the half-power
rational impedance by iteratively reweighted total least squares
(`estimator`), and recover Randles circuit values (`ecmfit`).
"""

from .ecmfit import EcmFitResult, fit_randles, init_from_coefficients
from .errors import FracimpError, NumericsError, SchemaError
from .estimator import (
    EstimateResult,
    EstimationConfig,
    build_regressor,
    equation_error_sigma,
    parametric_impedance,
    relative_error_curve,
    tls_solve,
    wtls_estimate,
)
from .excitation import (
    MultisineSpec,
    TimeRecord,
    design_odd_quasilog,
    generate_periodic_noise,
    scale_to_rms,
    synthesize_multisine,
)
from .model import (
    HalfOrderRational,
    ImpedanceCurve,
    RandlesParams,
    SocTrace,
    coulomb_count,
    eval_rational,
    randles_impedance,
    randles_to_rational,
    resonance_frequency,
    warburg_impedance,
)
from .recordio import read_record, write_record
from .simulate import NoiseSpec, add_noise, simulate_response
from .spectra import SpectralSet, dft, nonparametric_impedance, per_period_spectra

__version__ = "0.1.0"

__all__ = [
    "EcmFitResult",
    "EstimateResult",
    "EstimationConfig",
    "FracimpError",
    "HalfOrderRational",
    "ImpedanceCurve",
    "MultisineSpec",
    "NoiseSpec",
    "NumericsError",
    "RandlesParams",
    "SchemaError",
    "SocTrace",
    "SpectralSet",
    "TimeRecord",
    "add_noise",
    "build_regressor",
    "coulomb_count",
    "design_odd_quasilog",
    "dft",
    "equation_error_sigma",
    "eval_rational",
    "fit_randles",
    "generate_periodic_noise",
    "init_from_coefficients",
    "nonparametric_impedance",
    "parametric_impedance",
    "per_period_spectra",
    "randles_impedance",
    "randles_to_rational",
    "read_record",
    "relative_error_curve",
    "resonance_frequency",
    "scale_to_rms",
    "simulate_response",
    "synthesize_multisine",
    "tls_solve",
    "warburg_impedance",
    "write_record",
    "wtls_estimate",
]
