"""Scenario generators with known ground truth, plus analytic comparison fits.

The missing-data scenario follows the worked example exactly (MAR missingness
driven by z2); the repeated-measurements scenario mirrors the blood-pressure
study structure. Both are deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .data import Dataset
from .exceptions import NumericalError, SpecError
from .formula import Formula, build_design, parse_formula


@dataclass
class ScenarioTruth:
    """Generating parameters keyed by coefficient name, plus latent vectors."""

    params: dict[str, float]
    x_true: np.ndarray
    missing: np.ndarray
    seed: int
    n: int
    extra: dict[str, float] = field(default_factory=dict)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def simulate_missing_scenario(seed: int, n: int) -> tuple[Dataset, ScenarioTruth]:
    """Gaussian response with one MAR-missing covariate.

    z1, z2 ~ N(0,1); x ~ N(1 + 0.3 z1, 1); P(missing) = logistic(-1.5 - 0.5 z2);
    y = 1 + 2x + 2 z1 + 2 z2 + N(0,1). Columns: y, x (masked), x_true, z1, z2.
    """
    if n < 10:
        raise SpecError(f"n must be at least 10, got {n}")
    rng = _rng(seed)
    z1 = rng.standard_normal(n)
    z2 = rng.standard_normal(n)
    x = 1.0 + 0.3 * z1 + rng.standard_normal(n)
    m_prob = expit(-1.5 - 0.5 * z2)
    missing = rng.random(n) < m_prob
    x_obs = x.copy()
    x_obs[missing] = np.nan
    y = 1.0 + 2.0 * x + 2.0 * z1 + 2.0 * z2 + rng.standard_normal(n)
    data = Dataset({"y": y, "x": x_obs, "x_true": x, "z1": z1, "z2": z2})
    truth = ScenarioTruth(
        params={
            "beta.0": 1.0,
            "beta.x": 2.0,
            "beta.z1": 2.0,
            "beta.z2": 2.0,
            "alpha.x.0": 1.0,
            "alpha.x.z1": 0.3,
            "alpha.x.z2": 0.0,
            "gamma.x.0": -1.5,
            "gamma.x.z1": 0.0,
            "gamma.x.z2": -0.5,
            "gamma.x": 0.0,
            "tau.moi": 1.0,
            "tau.x.imp": 1.0,
        },
        x_true=x,
        missing=missing,
        seed=seed,
        n=n,
    )
    return data, truth


def simulate_classical_repeats(
    seed: int,
    n: int,
    k_repeats: int = 2,
    family: str = "binomial",
    beta: tuple[float, float, float] = (-2.4, 1.9, 0.4),
    alpha: tuple[float, float] = (0.0, 0.0),
    tau_u: float = 76.0,
    tau_x: float = 20.0,
    tau_y: float = 1.0,
    error_name: str = "x",
    covariate_name: str = "z",
    covariate_prob: float = 0.5,
) -> tuple[Dataset, ScenarioTruth]:
    """Covariate observed through k noisy repeats, binary or Gaussian response.

    A binary covariate (smoking-style) drives the exposure of the latent true
    value; each repeat adds independent Gaussian error with precision tau_u.
    Columns: y, <covariate>, <error_name>1..<error_name>k, <error_name>_true.
    """
    if k_repeats < 1:
        raise SpecError(f"k_repeats must be >= 1, got {k_repeats}")
    if family not in ("gaussian", "binomial"):
        raise SpecError(f"invalid family {family!r}")
    rng = _rng(seed)
    beta0, beta_x, beta_z = beta
    alpha0, alpha_z = alpha
    z = (rng.random(n) < covariate_prob).astype(np.float64)
    x = alpha0 + alpha_z * z + rng.standard_normal(n) / np.sqrt(tau_x)
    repeats = {
        f"{error_name}{r + 1}": x + rng.standard_normal(n) / np.sqrt(tau_u)
        for r in range(k_repeats)
    }
    eta = beta0 + beta_x * x + beta_z * z
    if family == "binomial":
        y = (rng.random(n) < expit(eta)).astype(np.float64)
    else:
        y = eta + rng.standard_normal(n) / np.sqrt(tau_y)
    columns = {"y": y, covariate_name: z}
    columns.update(repeats)
    columns[f"{error_name}_true"] = x
    data = Dataset(columns)
    params = {
        "beta.0": beta0,
        f"beta.{error_name}": beta_x,
        f"beta.{covariate_name}": beta_z,
        f"alpha.{error_name}.0": alpha0,
        f"alpha.{error_name}.{covariate_name}": alpha_z,
        f"tau.{error_name}.classical": tau_u,
        f"tau.{error_name}.imp": tau_x,
    }
    if family == "gaussian":
        params["tau.moi"] = tau_y
    truth = ScenarioTruth(
        params=params,
        x_true=x,
        missing=np.zeros(n, dtype=bool),
        seed=seed,
        n=n,
        extra={"k_repeats": float(k_repeats)},
    )
    return data, truth


@dataclass
class NaiveFit:
    names: list[str]
    estimates: np.ndarray
    standard_errors: np.ndarray
    n_used: int

    def coef(self, name: str) -> float:
        return float(self.estimates[self.names.index(name)])

    def se(self, name: str) -> float:
        return float(self.standard_errors[self.names.index(name)])

    def interval(self, name: str, level: float = 0.95) -> tuple[float, float]:
        from scipy.stats import norm

        z = norm.ppf(0.5 + level / 2.0)
        j = self.names.index(name)
        half = z * self.standard_errors[j]
        return float(self.estimates[j] - half), float(self.estimates[j] + half)


def repeat_mean_proxies(formula: Formula, data: Dataset) -> dict[str, np.ndarray]:
    """Per-row repeat means for formula variables stored as <name>1..<name>K."""
    substitute = {}
    for var in formula.variables:
        if var in data:
            continue
        repeat_cols = data.repeat_columns(var)
        if not repeat_cols:
            continue
        stacked = np.column_stack([data.column(c) for c in repeat_cols])
        observed = ~np.isnan(stacked)
        counts = observed.sum(axis=1)
        sums = np.where(observed, stacked, 0.0).sum(axis=1)
        substitute[var] = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return substitute


def naive_fit(formula, data: Dataset, family: str = "gaussian") -> NaiveFit:
    """Complete-case fit that ignores measurement error.

    Repeated error columns are replaced by their per-row mean; rows with any
    missing value among the formula variables are dropped. Gaussian responses
    use closed-form least squares, binomial uses logistic IRLS.
    """
    if isinstance(formula, str):
        formula = parse_formula(formula)
    if family not in ("gaussian", "binomial"):
        raise SpecError(f"invalid family {family!r}")
    substitute = repeat_mean_proxies(formula, data)
    y = data.column(formula.response)
    used = [y]
    for var in formula.variables:
        used.append(substitute[var] if var in substitute else data.column(var))
    complete = ~np.isnan(np.column_stack(used)).any(axis=1)
    rows = np.flatnonzero(complete)
    subset = Dataset({name: data.column(name)[rows] for name in data.names})
    sub_substitute = {k: v[rows] for k, v in substitute.items()}
    X, names = build_design(formula, subset, substitute=sub_substitute)
    y = y[rows]
    n, p = X.shape
    if n <= p:
        raise NumericalError(f"too few complete rows ({n}) to fit {p} coefficients")
    if family == "gaussian":
        coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
        if rank < p:
            raise NumericalError("singular design in least-squares fit")
        resid = y - X @ coef
        sigma2 = float(resid @ resid) / (n - p)
        cov = sigma2 * np.linalg.inv(X.T @ X)
        se = np.sqrt(np.diag(cov))
        return NaiveFit(names=names, estimates=coef, standard_errors=se, n_used=n)
    return _logistic_irls(X, y, names)


def _logistic_irls(X: np.ndarray, y: np.ndarray, names: list[str]) -> NaiveFit:
    n, p = X.shape
    coef = np.zeros(p)
    for _ in range(100):
        eta = X @ coef
        mu = expit(eta)
        w = mu * (1.0 - mu)
        if w.max() < 1e-10:
            raise NumericalError("separation in logistic fit (weights collapsed)")
        wz = w * eta + (y - mu)
        xtwx = (X.T * w) @ X
        try:
            new = np.linalg.solve(xtwx, X.T @ wz)
        except np.linalg.LinAlgError:
            raise NumericalError("singular design in logistic fit") from None
        if not np.isfinite(new).all():
            raise NumericalError("logistic fit diverged (separation?)")
        step = np.abs(new - coef).max()
        coef = new
        if step < 1e-10:
            break
    else:
        raise NumericalError("logistic fit did not converge in 100 iterations")
    mu = expit(X @ coef)
    w = mu * (1.0 - mu)
    cov = np.linalg.inv((X.T * w) @ X)
    return NaiveFit(
        names=names, estimates=coef, standard_errors=np.sqrt(np.diag(cov)), n_used=n
    )


def attenuation_factor(var_x: float, var_u_effective: float) -> float:
    """Reliability lambda = var_x / (var_x + var_u/k); the expected naive-slope
    shrinkage in a single-covariate Gaussian model."""
    if not (var_x > 0 and var_u_effective > 0):
        raise ValueError("variances must be positive")
    return var_x / (var_x + var_u_effective)
