"""Quantile and expected-shortfall estimation by minimum contrast, with limit laws."""

from .asymptotics import (
    JointLaw,
    PsiForm,
    Shape,
    joint_law,
    limit_joint_cdf,
    limit_joint_density,
    limit_quantile_cdf,
    oracle_variance_gap,
    psi_inverse,
    sigma_joint,
    sigma_multi,
    spectral_limit_variance,
)
from .estimators import (
    ConsistencyError,
    SpectralMeasure,
    contrast_es,
    empirical_es,
    empirical_quantile,
    minimize_contrast,
    smoothed_es,
    smoothed_quantile,
    spectral_estimate,
)
from .models import DistributionModel, get_model, kinked, cubic, piecewise, standard_normal
from .montecarlo import SimulationConfig, run_simulation
from .scoring import ScoringSpec, logistic_spec, score

__version__ = "0.1.0"
