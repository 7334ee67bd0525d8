"""Bayesian optimal experimental design with an unbiased information-gain lower bound.

Modules: :mod:`~oedkit.models` (priors, likelihood, forward models),
:mod:`~oedkit.eig` (estimators), :mod:`~oedkit.spsa` (optimizer),
:mod:`~oedkit.pce` (surrogates), :mod:`~oedkit.mcmc` (posterior sampling),
:mod:`~oedkit.gp` (reference fields) and :mod:`~oedkit.cli`.
"""
from .eig import EigEstimate, SampleBudget, dlmc, grid_scan, lower_bound_core, lower_bound_gain
from .models import (
    DesignSpace,
    GaussianLikelihood,
    GriddedField,
    LinearModel,
    LogNormal,
    Normal,
    PlumeModel,
    PriorSpec,
    ToyModel,
    Uniform,
)

__version__ = "0.1.0"

__all__ = [
    "DesignSpace",
    "EigEstimate",
    "GaussianLikelihood",
    "GriddedField",
    "LinearModel",
    "LogNormal",
    "Normal",
    "PlumeModel",
    "PriorSpec",
    "SampleBudget",
    "ToyModel",
    "Uniform",
    "dlmc",
    "grid_scan",
    "lower_bound_core",
    "lower_bound_gain",
]
