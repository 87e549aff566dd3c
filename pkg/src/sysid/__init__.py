"""Identification of polynomial stochastic differential equations from one trajectory.

Drift and diffusion are recovered by fitting a generator matrix over a
monomial dictionary (generator EDMD) to kernel-averaged Kramers-Moyal
estimates.
"""

from .dictionary import Dictionary, build_dictionary
from .gedmd import (
    ExtractedCoefficients,
    GeneratorMatrix,
    extract_coefficients,
    fit_generator_lasso,
    fit_generator_ols,
    reconstruct_model,
)
from .pipeline import PipelineConfig, Report, compare_generators, run_pipeline
from .simulate import SdeModel, Trajectory, euler_maruyama, make_builtin

__all__ = [
    "Dictionary",
    "ExtractedCoefficients",
    "GeneratorMatrix",
    "PipelineConfig",
    "Report",
    "SdeModel",
    "Trajectory",
    "build_dictionary",
    "compare_generators",
    "euler_maruyama",
    "extract_coefficients",
    "fit_generator_lasso",
    "fit_generator_ols",
    "make_builtin",
    "reconstruct_model",
    "run_pipeline",
]

__version__ = "0.1.0"
