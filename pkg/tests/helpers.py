"""Shared oracles and model builders for the sampler and acceptance tests.

The conjugate-regression oracle is analytic and never touches the sampler:
with an (effectively) flat coefficient prior and a Gamma prior on the noise
precision, the posterior is Normal-inverse-Gamma with ordinary-least-squares
center, so posterior means and sds have closed forms.
"""

import numpy as np

from memfit import (
    Dataset,
    ErrorSpec,
    GammaPrior,
    ModelSpec,
    PriorSet,
    parse_formula,
)

FLAT = 1e-6  # coefficient prior precision used for "flat" fits


def conjugate_posterior(X, y, gamma_shape, gamma_rate):
    """Exact flat-prior posterior moments for Gaussian regression.

    beta | tau, y ~ N(beta_ols, (tau X'X)^-1) and
    tau | y ~ Gamma(shape + (n-p)/2, rate + SSR/2); the marginal for beta is a
    multivariate t with mean beta_ols and covariance (X'X)^-1 rate'/(shape'-1).
    Returns (beta mean, beta sd, tau mean, tau sd).
    """
    n, p = X.shape
    xtx_inv = np.linalg.inv(X.T @ X)
    beta_hat = xtx_inv @ (X.T @ y)
    ssr = float((y - X @ beta_hat) @ (y - X @ beta_hat))
    shape = gamma_shape + (n - p) / 2.0
    rate = gamma_rate + ssr / 2.0
    beta_cov = xtx_inv * rate / (shape - 1.0)
    return (
        beta_hat,
        np.sqrt(np.diag(beta_cov)),
        shape / rate,
        np.sqrt(shape) / rate,
    )


def mc_se_mean(pooled_sd, ess):
    return pooled_sd / np.sqrt(max(ess, 1.0))


def mc_se_sd(pooled_sd, ess):
    # Slightly inflated vs the Gaussian sqrt(1/(2*ess)) to cover t tails.
    return pooled_sd * np.sqrt(0.75 / max(ess, 1.0))


def plain_regression_spec(tau_prior=(3.0, 2.0), coef_names=("beta.0", "beta.z")):
    return ModelSpec(
        formula_moi=parse_formula("y ~ z"),
        family_moi="gaussian",
        errors=[],
        priors=PriorSet(
            coefficients={name: (0.0, FLAT) for name in coef_names},
            precisions={"tau.moi": GammaPrior(*tau_prior)},
        ),
    )


def fixed_dataset_20():
    """The fixed 20-point dataset used by the conjugate-oracle checks."""
    rng = np.random.Generator(np.random.Philox(20240101))
    z = rng.standard_normal(20)
    y = 0.7 + 1.8 * z + rng.standard_normal(20) * 0.9
    return Dataset({"y": y, "z": z})


def missing_mar_spec(priors=None):
    """The missing-data worked example: MOI + pinned x + imputation + missingness."""
    return ModelSpec(
        formula_moi=parse_formula("y ~ x + z1 + z2"),
        family_moi="gaussian",
        errors=[ErrorSpec(variable="x", types=("missing",))],
        formula_imp=[parse_formula("x ~ z1 + z2")],
        formula_mis=[parse_formula("m ~ z1 + z2 + x")],
        priors=priors
        or PriorSet(
            coefficients={"beta.x": (0.0, 0.001), "gamma.x": (0.0, 0.001)},
            precisions={
                "tau.moi": GammaPrior(0.01, 0.01),
                "tau.x.imp": GammaPrior(1.0, 5e-5),
            },
            initial_precisions={"tau.moi": 4.0, "tau.x.imp": 4.0},
        ),
    )
