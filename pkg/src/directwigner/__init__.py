"""Wigner-function reconstruction of pulsed light by direct detection, in silico."""

from .calibration import CalibrationResult, FanoPoint, calibrate, fano_point, fit_gamma, rebin
from .detector import DetectorModel, ShotRecord, acquire, amplify, detect
from .errors import CalibrationError, ConfigError, DomainError, FitError, QuadratureError, TruncationWarning
from .field_states import (
    Coherent,
    PhaseAveragedCoherent,
    ProbeSetting,
    Thermal,
    Vacuum,
    sample_mixed_photons,
    theoretical_mixed_dist,
)
from .photon_statistics import (
    Moments,
    ProbDist,
    bernoulli_loss,
    convolve,
    displaced_thermal_dist,
    fidelity,
    moments,
    phase_avg_coherent_dist,
    poisson_dist,
    thermal_dist,
)
from .wigner import (
    PhaseSpacePoint,
    WignerSample,
    WignerSection,
    analytic_gaussian_wigner,
    analytic_phase_avg_wigner,
    loss_smoothed_wigner,
    mean_error,
    mismatch_corrected_wigner,
    reconstruct_section,
    wigner_from_dist,
)

__version__ = "0.1.0"
