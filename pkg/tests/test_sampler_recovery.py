"""Distribution-level checks of the Gibbs sampler against independent oracles."""

import numpy as np
import pytest
from scipy.stats import chi2

from memfit import (
    ChainConfig,
    Dataset,
    ErrorSpec,
    FixedPrecision,
    GammaPrior,
    ModelSpec,
    PriorSet,
    assemble_joint_model,
    effective_sample_size,
    parse_formula,
    run_chains,
    summarize,
)
from memfit.formula import build_design
from memfit.sampler import chain_rng, gibbs_sweep, initial_state

from helpers import (
    FLAT,
    conjugate_posterior,
    fixed_dataset_20,
    mc_se_mean,
    mc_se_sd,
    missing_mar_spec,
    plain_regression_spec,
)


def test_conjugate_oracle_plain_regression():
    data = fixed_dataset_20()
    spec = plain_regression_spec(tau_prior=(3.0, 2.0))
    model = assemble_joint_model(spec, data)
    draws = run_chains(
        model, ChainConfig(iterations=4000, burnin=500, thin=1, chains=4, seed=17)
    )
    X, names = build_design(spec.formula_moi, data)
    beta_mean, beta_sd, tau_mean, tau_sd = conjugate_posterior(X, data.column("y"), 3.0, 2.0)
    for j, name in enumerate(names):
        per_chain = draws.parameter(name)
        pooled = per_chain.reshape(-1)
        ess = effective_sample_size(per_chain)
        assert abs(pooled.mean() - beta_mean[j]) < 3 * mc_se_mean(beta_sd[j], ess)
        assert abs(pooled.std(ddof=1) - beta_sd[j]) < 3 * mc_se_sd(beta_sd[j], ess)
    tau = draws.parameter("tau.moi")
    ess_tau = effective_sample_size(tau)
    assert abs(tau.mean() - tau_mean) < 3 * mc_se_mean(tau_sd, ess_tau)


def _repeats_data(seed=101, n=400, swap=False):
    rng = np.random.Generator(np.random.Philox(seed))
    smoking = (rng.random(n) < 0.5).astype(float)
    sbp = 0.1 + 0.1 * smoking + rng.standard_normal(n) * 0.25
    u1 = rng.standard_normal(n) * 0.12
    u2 = rng.standard_normal(n) * 0.12
    disease = (rng.random(n) < 1.0 / (1.0 + np.exp(-(-1.0 + 1.5 * sbp)))).astype(float)
    cols = {
        "disease": disease,
        "smoking": smoking,
        "sbp1": sbp + u1,
        "sbp2": sbp + u2,
    }
    if swap:
        cols["sbp1"], cols["sbp2"] = cols["sbp2"], cols["sbp1"]
    return Dataset(cols)


def _repeats_spec():
    return ModelSpec(
        formula_moi=parse_formula("disease ~ sbp + smoking"),
        family_moi="binomial",
        errors=[ErrorSpec(variable="sbp", types=("classical",), repeated=True)],
        formula_imp=[parse_formula("sbp ~ smoking")],
        priors=PriorSet(
            coefficients={"beta.sbp": (0.0, 0.01)},
            precisions={
                "tau.sbp.classical": GammaPrior(70, 1),
                "tau.sbp.imp": GammaPrior(16, 1),
            },
        ),
    )


def test_repeat_exchangeability():
    config = ChainConfig(iterations=3000, burnin=500, thin=1, chains=2, seed=11)
    base = summarize(
        run_chains(assemble_joint_model(_repeats_spec(), _repeats_data()), config)
    )
    swapped = summarize(
        run_chains(
            assemble_joint_model(_repeats_spec(), _repeats_data(swap=True)), config
        )
    )
    for row in base.rows:
        other = swapped.row(row.name)
        se = mc_se_mean(max(row.sd, 1e-12), row.ess if np.isfinite(row.ess) else 100)
        assert abs(row.mean - other.mean) <= max(3 * se, 1e-9), row.name


def test_limit_consistency_tiny_error_matches_no_error_fit():
    # Classical precision fixed at 1e8 with no missing entries: the corrected
    # posterior for beta must match the plain conjugate fit on the observed w.
    rng = np.random.Generator(np.random.Philox(55))
    n = 150
    z = rng.standard_normal(n)
    x = 0.5 + 0.8 * z + rng.standard_normal(n)
    w = x + rng.standard_normal(n) * 1e-4
    y = 1.0 + 2.0 * x + 0.7 * z + rng.standard_normal(n) * 0.8
    data = Dataset({"y": y, "w": w, "z": z})
    spec = ModelSpec(
        formula_moi=parse_formula("y ~ w + z"),
        family_moi="gaussian",
        errors=[ErrorSpec(variable="w", types=("classical",))],
        formula_imp=[parse_formula("w ~ z")],
        priors=PriorSet(
            coefficients={name: (0.0, FLAT) for name in ("beta.0", "beta.w", "beta.z")},
            precisions={
                "tau.moi": GammaPrior(3.0, 2.0),
                "tau.w.classical": FixedPrecision(1e8),
                "tau.w.imp": GammaPrior(2.0, 2.0),
            },
        ),
    )
    model = assemble_joint_model(spec, data)
    draws = run_chains(
        model, ChainConfig(iterations=4000, burnin=500, thin=1, chains=2, seed=23)
    )
    X, names = build_design(spec.formula_moi, data)
    beta_mean, beta_sd, _, _ = conjugate_posterior(X, y, 3.0, 2.0)
    for j, name in enumerate(names):
        per_chain = draws.parameter(name)
        ess = effective_sample_size(per_chain)
        diff = abs(per_chain.mean() - beta_mean[j])
        assert diff < 3 * mc_se_mean(beta_sd[j], ess), (name, diff)


def test_missing_imputation_coverage():
    # Posterior 95% intervals of the imputed entries should cover the stored
    # truth at roughly the nominal rate, and 2000 sweeps recover the slope.
    from memfit import simulate_missing_scenario

    data, truth = simulate_missing_scenario(seed=3, n=1000)
    model = assemble_joint_model(missing_mar_spec(), data)
    draws = run_chains(
        model, ChainConfig(iterations=2000, burnin=500, thin=1, chains=2, seed=31)
    )
    assert abs(float(draws.pooled("beta.x").mean()) - 2.0) < 0.1
    imp = draws.imputations["x"]
    pooled = np.concatenate(imp.chains, axis=0)
    lo = np.quantile(pooled, 0.025, axis=0)
    hi = np.quantile(pooled, 0.975, axis=0)
    correct = truth.x_true[imp.rows]
    coverage = float(((lo <= correct) & (correct <= hi)).mean())
    assert 0.91 <= coverage <= 0.99


def test_classical_precision_posterior_lands_near_truth():
    # Data generated with error precision 76 and a Gamma(100, 1) prior: the
    # pair-difference information dominates and the posterior mean must land
    # in [65, 90].
    from memfit import simulate_classical_repeats
    from memfit.config import config_from_mapping, spec_from_config

    data, _ = simulate_classical_repeats(
        seed=42, n=641, k_repeats=2, family="binomial",
        beta=(-2.4, 1.9, 0.4), alpha=(0.0, 0.0), tau_u=76.0, tau_x=20.0,
        error_name="sbp", covariate_name="smoking",
    )
    config = config_from_mapping(
        {
            "formula_moi": "y ~ sbp + smoking",
            "formula_imp": "sbp ~ smoking",
            "family_moi": "binomial",
            "error_variable": "sbp",
            "error_type": "classical",
            "repeated_observations": True,
            "prior_beta_error": [0, 0.01],
            "prior_prec_classical": [100, 1],
            "prior_prec_imp": [10, 1],
            "initial_prec_classical": 100,
            "initial_prec_imp": 10,
            "sampler": {"iterations": 1500, "burnin": 500, "chains": 2, "seed": 6},
        }
    )
    model = assemble_joint_model(spec_from_config(config, data), data)
    draws = run_chains(model, config.chain_config())
    tau_mean = float(draws.pooled("tau.sbp.classical").mean())
    assert 65.0 <= tau_mean <= 90.0


def test_berkson_only_recovery():
    rng = np.random.Generator(np.random.Philox(77))
    n = 2000
    w = rng.standard_normal(n)
    x = w + rng.standard_normal(n) * 0.5  # Berkson noise, precision 4
    y = 1.0 + 2.0 * x + rng.standard_normal(n) * 0.5
    data = Dataset({"y": y, "w": w})
    spec = ModelSpec(
        formula_moi=parse_formula("y ~ w"),
        family_moi="gaussian",
        errors=[ErrorSpec(variable="w", types=("berkson",))],
        priors=PriorSet(
            precisions={
                "tau.w.berkson": FixedPrecision(4.0),
                "tau.moi": GammaPrior(2.0, 0.5),
            },
        ),
    )
    model = assemble_joint_model(spec, data)
    assert model.level_names == ["moi", "w.berkson"]
    draws = run_chains(
        model, ChainConfig(iterations=2500, burnin=500, thin=1, chains=2, seed=3)
    )
    pooled = draws.pooled("beta.w")
    assert abs(pooled.mean() - 2.0) < 0.15
    assert np.isfinite(np.concatenate(draws.chains, axis=None)).all()


def test_four_level_classical_berkson_runs_and_recovers():
    rng = np.random.Generator(np.random.Philox(88))
    n = 1500
    z = rng.standard_normal(n)
    r = 1.0 + 0.5 * z + rng.standard_normal(n)
    w = r + rng.standard_normal(n) * np.sqrt(1 / 2.0)   # classical, tau_c = 2
    x = r + rng.standard_normal(n) * np.sqrt(1 / 4.0)   # Berkson, tau_b = 4
    y = 1.0 + 2.0 * x + 0.5 * z + rng.standard_normal(n) * np.sqrt(1 / 2.0)
    data = Dataset({"y": y, "w": w, "z": z})
    spec = ModelSpec(
        formula_moi=parse_formula("y ~ w + z"),
        family_moi="gaussian",
        errors=[ErrorSpec(variable="w", types=("classical", "berkson"))],
        formula_imp=[parse_formula("w ~ z")],
        priors=PriorSet(
            precisions={
                "tau.w.classical": GammaPrior(20, 10),  # informative near 2
                "tau.w.berkson": FixedPrecision(4.0),
                "tau.moi": GammaPrior(2.0, 1.0),
                "tau.w.imp": GammaPrior(2.0, 2.0),
            },
        ),
    )
    model = assemble_joint_model(spec, data)
    ev = model.error_vars[0]
    assert ev.two_latent
    draws = run_chains(
        model, ChainConfig(iterations=3000, burnin=1000, thin=1, chains=2, seed=9)
    )
    pooled = draws.pooled("beta.w")
    lo, hi = np.quantile(pooled, [0.025, 0.975])
    assert lo < 2.0 < hi or abs(pooled.mean() - 2.0) < 0.2
    assert (draws.pooled("tau.w.classical") > 0).all()


def _three_point_model():
    data = Dataset({"y": np.array([1.0, -0.5, 2.0]), "w": np.array([0.8, -0.2, 1.5])})
    spec = ModelSpec(
        formula_moi=parse_formula("y ~ -1 + w"),
        family_moi="gaussian",
        errors=[ErrorSpec(variable="w", types=("classical",))],
        formula_imp=[parse_formula("w ~ -1")],
        priors=PriorSet(
            coefficients={"beta.w": (0.0, 1.0)},
            precisions={
                "tau.moi": GammaPrior(2.0, 2.0),
                "tau.w.classical": FixedPrecision(1.0),
                "tau.w.imp": FixedPrecision(1.0),
            },
        ),
    )
    return data, assemble_joint_model(spec, data)


def test_berkson_with_missing_pins_and_recovers():
    # Berkson + missing: observed entries pin the intermediate latent, missing
    # ones are imputed, and the Berkson level still separates x from it.
    rng = np.random.Generator(np.random.Philox(13))
    n = 800
    z = rng.standard_normal(n)
    r = 0.5 + 0.6 * z + rng.standard_normal(n)
    x = r + rng.standard_normal(n) * 0.5  # Berkson noise, precision 4
    y = 1.0 + 2.0 * x + rng.standard_normal(n) * 0.7
    w = r.copy()
    w[rng.random(n) < 0.2] = np.nan
    data = Dataset({"y": y, "w": w, "z": z})
    spec = ModelSpec(
        formula_moi=parse_formula("y ~ w + z"),
        family_moi="gaussian",
        errors=[ErrorSpec(variable="w", types=("berkson", "missing"))],
        formula_imp=[parse_formula("w ~ z")],
        priors=PriorSet(
            precisions={
                "tau.w.berkson": FixedPrecision(4.0),
                "tau.moi": GammaPrior(2.0, 1.0),
                "tau.w.imp": GammaPrior(2.0, 2.0),
            },
        ),
    )
    model = assemble_joint_model(spec, data)
    ev = model.error_vars[0]
    assert ev.pinned and ev.two_latent
    assert model.level_names == ["moi", "w.pinned", "w.berkson", "w.imp"]

    observed = ~ev.missing_mask
    original = data.column("w")[observed].copy()
    state = initial_state(model)
    rng2 = chain_rng(5, 0)
    for _ in range(10):
        gibbs_sweep(state, model, rng2)
    np.testing.assert_array_equal(state.r_latent["w"][observed], original)

    draws = run_chains(
        model, ChainConfig(iterations=1200, burnin=400, thin=1, chains=2, seed=4)
    )
    pooled = draws.pooled("beta.w")
    lo, hi = np.quantile(pooled, [0.025, 0.975])
    assert lo < 2.0 < hi
    imp = draws.pooled("tau.w.imp")
    assert abs(imp.mean() - 1.0) < 0.2


def test_corrected_exceeds_naive_under_attenuation():
    # With positive beta_x and classical attenuating error, the corrected
    # posterior mean should exceed the attenuated naive slope in the large
    # majority of replications (the attenuation oracle predicts naive ~ 2/3
    # of the truth here). Majority rule over 20 seeds, need >= 18.
    from memfit import naive_fit, simulate_classical_repeats
    from memfit.config import config_from_mapping, spec_from_config

    wins = 0
    for seed in range(20):
        data, _ = simulate_classical_repeats(
            seed=200 + seed, n=1000, k_repeats=2, family="gaussian",
            beta=(0.5, 2.0, 0.0), alpha=(0.0, 0.0),
            tau_u=1.0, tau_x=1.0, tau_y=1.0,
        )
        naive = naive_fit("y ~ x", data, family="gaussian")
        config = config_from_mapping(
            {
                "formula_moi": "y ~ x",
                "formula_imp": "x ~ z",
                "family_moi": "gaussian",
                "error_variable": "x",
                "error_type": "classical",
                "repeated_observations": True,
                "prior_prec_moi": [1, 1],
                "prior_prec_classical": [1, 1],
                "prior_prec_imp": [1, 1],
                "sampler": {"iterations": 800, "burnin": 300, "chains": 1,
                            "seed": 4000 + seed},
            }
        )
        model = assemble_joint_model(spec_from_config(config, data), data)
        draws = run_chains(model, config.chain_config())
        if float(draws.pooled("beta.x").mean()) > naive.coef("beta.x"):
            wins += 1
    assert wins >= 18, f"corrected exceeded naive in only {wins}/20 seeds"


def test_detailed_balance_three_point_grid():
    """Empirical stationary law of (beta_w, tau_moi) vs exact grid quadrature.

    Collapsing the latent covariate analytically, each observation contributes
    N(y_i; beta w_i / 2, 1/tau + beta^2/2) to the exact posterior of
    (beta, tau). One long chain, thinned to near-independence, is binned on a
    coarse grid whose cell probabilities come from quadrature of that exact
    density; a chi-square test at the 1% level must not reject.
    """
    data, model = _three_point_model()
    y, w = data.column("y"), data.column("w")

    sweeps = 1_000_000
    thin = 20
    burnin = 2000
    rng = chain_rng(424242, 0)
    state = initial_state(model)
    kept_beta = np.empty((sweeps - burnin) // thin)
    kept_tau = np.empty_like(kept_beta)
    k = 0
    for it in range(sweeps):
        gibbs_sweep(state, model, rng)
        if it >= burnin and (it - burnin) % thin == 0 and k < kept_beta.size:
            kept_beta[k] = state.beta[0]
            kept_tau[k] = state.precisions["tau.moi"]
            k += 1
    kept_beta, kept_tau = kept_beta[:k], kept_tau[:k]

    # Thinned series should be close to independent for the chi-square test.
    assert effective_sample_size(kept_beta) > 0.5 * k
    assert effective_sample_size(kept_tau) > 0.5 * k

    # Wide bounding box: mass outside is far below one expected count.
    beta_edges_outer = (kept_beta.min() - 2.0, kept_beta.max() + 2.0)
    tau_edges_outer = (1e-6, kept_tau.max() + 5.0)
    n_cells = 5
    beta_edges = np.concatenate(
        [
            [beta_edges_outer[0]],
            np.quantile(kept_beta, np.linspace(0.0, 1.0, n_cells + 1)[1:-1]),
            [beta_edges_outer[1]],
        ]
    )
    tau_edges = np.concatenate(
        [
            [tau_edges_outer[0]],
            np.quantile(kept_tau, np.linspace(0.0, 1.0, n_cells + 1)[1:-1]),
            [tau_edges_outer[1]],
        ]
    )

    # Cell probabilities by fine-mesh Simpson quadrature of the exact density.
    fine = 1200
    beta_grid = np.linspace(beta_edges[0], beta_edges[-1], fine)
    tau_grid = np.linspace(tau_edges[0], tau_edges[-1], fine)
    bb, tt = np.meshgrid(beta_grid, tau_grid, indexing="ij")
    var = 1.0 / tt + bb**2 / 2.0
    logp = -0.5 * bb**2 + np.log(tt) - 2.0 * tt
    for yi, wi in zip(y, w):
        logp += -0.5 * np.log(2 * np.pi * var) - 0.5 * (yi - bb * wi / 2.0) ** 2 / var
    dens = np.exp(logp - logp.max())
    cell_prob = np.empty((n_cells, n_cells))
    beta_idx = np.searchsorted(beta_edges, beta_grid, side="right") - 1
    tau_idx = np.searchsorted(tau_edges, tau_grid, side="right") - 1
    beta_idx = np.clip(beta_idx, 0, n_cells - 1)
    tau_idx = np.clip(tau_idx, 0, n_cells - 1)
    for i in range(n_cells):
        for j in range(n_cells):
            mask = (beta_idx[:, None] == i) & (tau_idx[None, :] == j)
            cell_prob[i, j] = dens[mask].sum()
    cell_prob /= cell_prob.sum()

    counts = np.zeros((n_cells, n_cells))
    bi = np.clip(np.searchsorted(beta_edges, kept_beta, side="right") - 1, 0, n_cells - 1)
    ti = np.clip(np.searchsorted(tau_edges, kept_tau, side="right") - 1, 0, n_cells - 1)
    for i, j in zip(bi, ti):
        counts[i, j] += 1

    expected = cell_prob * k
    assert expected.min() > 20  # chi-square validity
    stat = float(((counts - expected) ** 2 / expected).sum())
    dof = n_cells * n_cells - 1
    threshold = chi2.ppf(0.99, dof)
    assert stat < threshold, f"chi2={stat:.1f} > {threshold:.1f} (dof={dof})"
