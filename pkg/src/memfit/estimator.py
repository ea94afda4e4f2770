"""Sklearn-style estimator wrapping the full fit pipeline.

The constructor mirrors the configuration schema (formulas, error types,
priors, sampler settings); ``fit`` accepts a Dataset or a pandas DataFrame.
Fitted state lands in trailing-underscore attributes, and ``get_params`` /
``set_params`` come from scikit-learn's BaseEstimator so the model plugs into
that ecosystem's tooling.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .config import FitConfig, config_from_mapping, spec_from_config
from .data import Dataset
from .exceptions import SpecError
from .formula import build_design, parse_formula
from .inference import FitSummary, render_summary, summarize
from .model import JointModel, assemble_joint_model, validate_spec, validation_errors
from .sampler import Draws, run_chains


def _as_dataset(data) -> Dataset:
    if isinstance(data, Dataset):
        return data
    if hasattr(data, "columns") and hasattr(data, "__getitem__"):
        return Dataset.from_pandas(data)
    raise SpecError(f"cannot interpret {type(data).__name__} as a dataset")


class MeasurementErrorRegression(BaseEstimator):
    """Bayesian regression correcting for covariate error and missingness.

    Parameters mirror the config-file keys; anything list-valued may be given
    as a scalar when there is a single error variable.

    Examples
    --------
    >>> model = MeasurementErrorRegression(
    ...     formula_moi="y ~ x + z1 + z2",
    ...     formula_imp="x ~ z1 + z2",
    ...     formula_mis="m ~ z1 + z2 + x",
    ...     family_moi="gaussian",
    ...     error_variable="x",
    ...     error_type="missing",
    ... )
    >>> fitted = model.fit(data)        # doctest: +SKIP
    >>> print(fitted.summary_text())    # doctest: +SKIP
    """

    def __init__(
        self,
        formula_moi=None,
        formula_imp=None,
        formula_mis=None,
        family_moi="gaussian",
        error_variable=None,
        error_type="classical",
        repeated_observations=False,
        classical_error_scaling=None,
        prior_beta_error=None,
        prior_gamma_error=None,
        prior_prec=None,
        initial_prec=None,
        fixed_prec=None,
        prior_coefficients=None,
        iterations=5000,
        burnin=1000,
        thin=1,
        chains=4,
        seed=0,
        threads=None,
    ):
        self.formula_moi = formula_moi
        self.formula_imp = formula_imp
        self.formula_mis = formula_mis
        self.family_moi = family_moi
        self.error_variable = error_variable
        self.error_type = error_type
        self.repeated_observations = repeated_observations
        self.classical_error_scaling = classical_error_scaling
        self.prior_beta_error = prior_beta_error
        self.prior_gamma_error = prior_gamma_error
        self.prior_prec = prior_prec
        self.initial_prec = initial_prec
        self.fixed_prec = fixed_prec
        self.prior_coefficients = prior_coefficients
        self.iterations = iterations
        self.burnin = burnin
        self.thin = thin
        self.chains = chains
        self.seed = seed
        self.threads = threads

    def _to_config(self) -> FitConfig:
        if self.formula_moi is None:
            raise SpecError("formula_moi is required")
        if self.error_variable is None:
            raise SpecError("error_variable is required")
        mapping: dict = {
            "formula_moi": self.formula_moi,
            "family_moi": self.family_moi,
            "error_variable": self.error_variable,
            "error_type": self.error_type,
        }
        if self.formula_imp is not None:
            mapping["formula_imp"] = self.formula_imp
        if self.formula_mis is not None:
            mapping["formula_mis"] = self.formula_mis
        if self.repeated_observations:
            mapping["repeated_observations"] = self.repeated_observations
        if self.classical_error_scaling is not None:
            mapping["classical_error_scaling"] = self.classical_error_scaling
        if self.prior_beta_error is not None:
            mapping["prior_beta_error"] = self.prior_beta_error
        if self.prior_gamma_error is not None:
            mapping["prior_gamma_error"] = self.prior_gamma_error
        for prefix, value in (
            ("prior_prec", self.prior_prec),
            ("initial_prec", self.initial_prec),
            ("fixed_prec", self.fixed_prec),
        ):
            for level, entry in (value or {}).items():
                mapping[f"{prefix}_{level}"] = entry
        if self.prior_coefficients:
            mapping["prior_coefficients"] = self.prior_coefficients
        mapping["sampler"] = {
            "iterations": self.iterations,
            "burnin": self.burnin,
            "thin": self.thin,
            "chains": self.chains,
            "seed": self.seed,
        }
        return config_from_mapping(mapping)

    def validate(self, data) -> list:
        """Diagnostics (errors and warnings) without running the sampler."""
        config = self._to_config()
        dataset = _as_dataset(data)
        spec = spec_from_config(config, dataset)
        return validate_spec(spec, dataset)

    def fit(self, data, y=None) -> "MeasurementErrorRegression":
        """Assemble the joint model and run the Gibbs sampler.

        ``y`` is ignored (the response is named inside ``formula_moi``); it is
        accepted for pipeline compatibility only.
        """
        config = self._to_config()
        dataset = _as_dataset(data)
        spec = spec_from_config(config, dataset)
        diags = validate_spec(spec, dataset)
        errors = validation_errors(diags)
        if errors:
            raise SpecError("; ".join(errors))
        model = assemble_joint_model(spec, dataset)
        draws = run_chains(model, config.chain_config(), threads=self.threads)
        self.config_ = config
        self.model_: JointModel = model
        self.draws_: Draws = draws
        self.summary_: FitSummary = summarize(draws, model)
        self.diagnostics_ = diags
        return self

    def _check_fitted(self):
        if not hasattr(self, "draws_"):
            raise SpecError("this estimator is not fitted; call fit(data) first")

    def summary(self) -> FitSummary:
        self._check_fitted()
        return self.summary_

    def summary_text(self) -> str:
        self._check_fitted()
        return render_summary(self.summary_)

    def posterior_mean(self, name: str) -> float:
        self._check_fitted()
        return self.summary_.row(name).mean

    def credible_interval(self, name: str, level: float = 0.95) -> tuple[float, float]:
        from .inference import credible_interval

        self._check_fitted()
        return credible_interval(self.draws_.pooled(name), level)

    def predict(self, data) -> np.ndarray:
        """Posterior-mean prediction of the response for fully observed rows.

        Gaussian family returns the linear predictor, binomial the probability.
        Error-prone covariates must be present (their own column or repeat
        means are used directly; no error correction applies to new rows).
        """
        self._check_fitted()
        dataset = _as_dataset(data)
        formula = parse_formula(self.config_.formula_moi)
        from .simulate import repeat_mean_proxies

        substitute = repeat_mean_proxies(formula, dataset)
        X, names = build_design(formula, dataset, substitute=substitute)
        coef = np.array([self.posterior_mean(name) for name in names])
        eta = X @ coef
        if self.model_.family == "binomial":
            from scipy.special import expit

            return expit(eta)
        return eta
