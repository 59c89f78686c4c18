"""Empirical-likelihood tests for partially linear single-index time series models."""

from .core import Family, Identification, ModelSpec, Series, Theta
from .el import ELResult, OracleNuisance, Status, chi2_sf, solve_lambda, wilks_test
from .estimate import FitResult, profile_ls_fit, variance_ls_fit
from .harness import ExperimentConfig, RejectionReport, prep_observed_ar, run_mc
from .kernel import EtaProfile, KernelConfig, estimate_eta, oracle_eta
from .moments import MomentMatrix, build_psi
from .simulate import Innovation, Preset, SimDesign, simulate

__version__ = "0.1.0"
