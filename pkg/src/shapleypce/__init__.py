"""Polynomial chaos surrogates, Sobol indices and Shapley effects.

Static models are fitted by spectral projection or regression; ODE models with
affine uncertain parameters are expanded intrusively by Galerkin projection.
"""
from .basis import BasisTooLargeError, PceBasis, all_subsets, enumerate_indices, n_terms
from .galerkin_ode import (
    BlowUpError,
    CoefficientTrajectory,
    StochasticOdeModel,
    StructuralError,
    Term,
    expand,
    integrate,
    mc_baseline,
    moments_at,
    peak_heatmap,
    sensitivity_series,
)
from .models import BenchmarkSpec, MissingParameterError, bergman, builtin, ishigami, load_spec, quartic, seir
from .orthopoly import Family, Normal, Uniform, gauss_rule
from .sensitivity import (
    SensitivityReport,
    SobolDecomposition,
    ZeroVarianceError,
    borgonovo_all,
    borgonovo_delta,
    mc_sobol_pick_freeze,
    rank_variables,
    shapley_from_sobol,
    shapley_from_worths,
    sobol_from_pce,
    worths_from_sobol,
)
from .surrogate import (
    DomainError,
    IllConditionedError,
    ModelFunction,
    PceSurrogate,
    fit_projection,
    fit_regression,
)

__version__ = "0.1.0"

__all__ = [
    "BasisTooLargeError",
    "BenchmarkSpec",
    "BlowUpError",
    "CoefficientTrajectory",
    "DomainError",
    "Family",
    "IllConditionedError",
    "MissingParameterError",
    "ModelFunction",
    "Normal",
    "PceBasis",
    "PceSurrogate",
    "SensitivityReport",
    "SobolDecomposition",
    "StochasticOdeModel",
    "StructuralError",
    "Term",
    "Uniform",
    "ZeroVarianceError",
    "all_subsets",
    "bergman",
    "borgonovo_all",
    "borgonovo_delta",
    "builtin",
    "enumerate_indices",
    "expand",
    "fit_projection",
    "fit_regression",
    "gauss_rule",
    "integrate",
    "ishigami",
    "load_spec",
    "mc_baseline",
    "mc_sobol_pick_freeze",
    "moments_at",
    "n_terms",
    "peak_heatmap",
    "quartic",
    "rank_variables",
    "seir",
    "sensitivity_series",
    "shapley_from_sobol",
    "shapley_from_worths",
    "sobol_from_pce",
    "worths_from_sobol",
]
