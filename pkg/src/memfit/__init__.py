"""Bayesian regression with covariate measurement error and missing data.

The joint model couples a main regression with classical/Berkson error
levels, an imputation level, and an optional missingness level, all fit by a
blocked Gibbs sampler with Pólya-Gamma augmentation for logit likelihoods.
"""

__version__ = "0.1.0"

from .data import Dataset, load_csv, write_csv
from .estimator import MeasurementErrorRegression
from .exceptions import (
    DataFormatError,
    FormulaError,
    InsufficientDraws,
    MemfitError,
    NumericalError,
    SpecError,
)
from .formula import Formula, Term, build_design, parse_formula
from .inference import (
    FitSummary,
    credible_interval,
    effective_sample_size,
    render_summary,
    split_rhat,
    summarize,
)
from .model import (
    ErrorSpec,
    FixedPrecision,
    GammaPrior,
    JointModel,
    ModelSpec,
    PriorSet,
    assemble_joint_model,
    resolve_priors,
    validate_spec,
)
from .sampler import (
    ChainConfig,
    Draws,
    SamplerState,
    gibbs_sweep,
    initial_state,
    pg_draw,
    run_chains,
    update_gaussian_coefficients,
    update_latent_x,
    update_pg_auxiliaries,
    update_precision,
)
from .simulate import (
    NaiveFit,
    ScenarioTruth,
    attenuation_factor,
    naive_fit,
    simulate_classical_repeats,
    simulate_missing_scenario,
)

__all__ = [
    "__version__",
    "Dataset",
    "load_csv",
    "write_csv",
    "MeasurementErrorRegression",
    "MemfitError",
    "FormulaError",
    "SpecError",
    "DataFormatError",
    "NumericalError",
    "InsufficientDraws",
    "Formula",
    "Term",
    "parse_formula",
    "build_design",
    "FitSummary",
    "summarize",
    "render_summary",
    "split_rhat",
    "effective_sample_size",
    "credible_interval",
    "ErrorSpec",
    "ModelSpec",
    "PriorSet",
    "GammaPrior",
    "FixedPrecision",
    "JointModel",
    "validate_spec",
    "assemble_joint_model",
    "resolve_priors",
    "ChainConfig",
    "SamplerState",
    "Draws",
    "pg_draw",
    "initial_state",
    "gibbs_sweep",
    "run_chains",
    "update_gaussian_coefficients",
    "update_latent_x",
    "update_pg_auxiliaries",
    "update_precision",
    "ScenarioTruth",
    "NaiveFit",
    "simulate_missing_scenario",
    "simulate_classical_repeats",
    "naive_fit",
    "attenuation_factor",
]
