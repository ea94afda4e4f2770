"""Blocked Gibbs sampler for the joint measurement-error model.

All full conditionals are exact: Gaussian draws for coefficient blocks and
latent covariates, Gamma draws for precisions, and Pólya-Gamma auxiliaries
for every Bernoulli-logit level (binomial model of interest, missingness
models). One sweep visits the blocks in a fixed order, so runs are exactly
reproducible given the seed.
"""

from __future__ import annotations

import pickle
from concurrent.futures import ProcessPoolExecutor
from concurrent.futures.process import BrokenProcessPool as BrokenProcessError
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .exceptions import NumericalError, SpecError
from .model import ErrorVariableModel, FixedPrecision, GammaPrior, JointModel
from .polyagamma import pg_draw, pg_draw_batch  # noqa: F401

__all__ = [
    "ChainConfig",
    "SamplerState",
    "Draws",
    "ImputationDraws",
    "pg_draw",
    "gaussian_conditional",
    "update_gaussian_coefficients",
    "update_pg_auxiliaries",
    "update_precision",
    "update_latent_x",
    "initial_state",
    "gibbs_sweep",
    "run_chains",
]


@dataclass(frozen=True)
class ChainConfig:
    iterations: int = 5000
    burnin: int = 1000
    thin: int = 1
    chains: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise SpecError("iterations must be positive")
        if not 0 <= self.burnin < self.iterations:
            raise SpecError("burnin must satisfy 0 <= burnin < iterations")
        if self.thin < 1:
            raise SpecError("thin must be >= 1")
        if self.chains < 1:
            raise SpecError("chains must be >= 1")

    @property
    def retained(self) -> int:
        return (self.iterations - self.burnin + self.thin - 1) // self.thin


@dataclass
class SamplerState:
    """Current values of every sampled quantity for one chain."""

    beta: np.ndarray
    alpha: dict[str, np.ndarray]
    gamma: dict[str, np.ndarray]
    x_latent: dict[str, np.ndarray]
    r_latent: dict[str, np.ndarray]
    precisions: dict[str, float]
    omega_moi: np.ndarray | None = None
    omega_mis: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class ImputationDraws:
    rows: np.ndarray  # row indices of the missing entries
    chains: list[np.ndarray]  # per chain: (retained, n_missing)


@dataclass
class Draws:
    """Retained posterior samples: one (retained x parameters) matrix per chain."""

    names: list[str]
    chains: list[np.ndarray]
    imputations: dict[str, ImputationDraws] = field(default_factory=dict)

    @property
    def n_chains(self) -> int:
        return len(self.chains)

    @property
    def n_retained(self) -> int:
        return self.chains[0].shape[0] if self.chains else 0

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"no parameter named {name!r}") from None

    def parameter(self, name: str) -> np.ndarray:
        """Draws for one parameter as a (chains, retained) matrix."""
        j = self.index(name)
        return np.stack([chain[:, j] for chain in self.chains])

    def pooled(self, name: str) -> np.ndarray:
        return self.parameter(name).reshape(-1)


def _prior_arrays(model: JointModel, names: list[str]) -> tuple[np.ndarray, np.ndarray]:
    pairs = [model.priors.coefficients[name] for name in names]
    mean = np.array([p[0] for p in pairs])
    prec = np.array([p[1] for p in pairs])
    return mean, prec


def gaussian_conditional(
    design: np.ndarray,
    response: np.ndarray,
    obs_precisions,
    prior_mean: np.ndarray,
    prior_precision: np.ndarray,
    block: str = "coefficients",
) -> tuple[np.ndarray, np.ndarray]:
    """Mean and precision Cholesky factor of a Gaussian coefficient conditional.

    The conditional has precision ``diag(prior_precision) + X' diag(c) X`` and
    mean solving it against ``prior_precision * prior_mean + X' (c * response)``.
    With zero rows the conditional is exactly the prior.
    """
    p = design.shape[1]
    if p == 0:
        return np.empty(0), np.empty((0, 0))
    c = np.broadcast_to(np.asarray(obs_precisions, dtype=np.float64), (design.shape[0],))
    precision = np.diag(prior_precision) + (design.T * c) @ design
    b = prior_precision * prior_mean + design.T @ (c * response)
    try:
        chol = np.linalg.cholesky(precision)
    except np.linalg.LinAlgError:
        raise NumericalError(
            f"singular conditional precision in block {block!r} (collinear design?)"
        ) from None
    mean = solve_triangular(
        chol.T,
        solve_triangular(chol, b, lower=True, check_finite=False),
        lower=False,
        check_finite=False,
    )
    return mean, chol


def update_gaussian_coefficients(
    design: np.ndarray,
    response: np.ndarray,
    obs_precisions,
    prior_mean: np.ndarray,
    prior_precision: np.ndarray,
    rng: np.random.Generator,
    block: str = "coefficients",
) -> np.ndarray:
    """One exact draw from the Gaussian full conditional of a coefficient block."""
    mean, chol = gaussian_conditional(
        design, response, obs_precisions, prior_mean, prior_precision, block
    )
    if mean.size == 0:
        return mean
    return mean + solve_triangular(
        chol.T, rng.standard_normal(mean.size), lower=False, check_finite=False
    )


def update_pg_auxiliaries(eta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Independent PG(1, eta_i) draws; empty input is a no-op."""
    eta = np.asarray(eta, dtype=np.float64)
    if eta.size == 0:
        return np.empty(0)
    return pg_draw_batch(eta, rng)


def update_precision(
    level: str,
    residuals: np.ndarray,
    scaling: np.ndarray | None,
    prior: GammaPrior | FixedPrecision,
    rng: np.random.Generator,
) -> float:
    """Conjugate Gamma update for one level precision; fixed priors pass through."""
    if isinstance(prior, FixedPrecision):
        return prior.value
    residuals = np.asarray(residuals, dtype=np.float64)
    weighted = residuals * residuals
    if scaling is not None:
        weighted = weighted * scaling
    shape = prior.shape + 0.5 * residuals.size
    rate = prior.rate + 0.5 * float(weighted.sum())
    return float(rng.gamma(shape, 1.0 / rate))


def initial_state(model: JointModel) -> SamplerState:
    """Deterministic starting point: prior means, configured initial precisions,
    latents at observed values (repeat means) or the imputation predictor."""
    beta = _prior_arrays(model, model.moi.names)[0]
    alpha: dict[str, np.ndarray] = {}
    gamma: dict[str, np.ndarray] = {}
    x_latent: dict[str, np.ndarray] = {}
    r_latent: dict[str, np.ndarray] = {}
    for ev in model.error_vars:
        base = ev.observed_base.copy()
        if ev.imputation is not None:
            a0 = _prior_arrays(model, ev.imputation.builder.names)[0]
            alpha[ev.name] = a0
            predictor = ev.imputation.builder.build() @ a0
            base[ev.missing_mask] = predictor[ev.missing_mask]
        if ev.missingness is not None:
            gamma[ev.name] = _prior_arrays(model, ev.missingness.builder.names)[0]
        if ev.two_latent:
            r_latent[ev.name] = base
            x_latent[ev.name] = base.copy()
        else:
            x_latent[ev.name] = base
    return SamplerState(
        beta=beta,
        alpha=alpha,
        gamma=gamma,
        x_latent=x_latent,
        r_latent=r_latent,
        precisions=dict(model.priors.initial),
    )


def _logit_pseudo(indicator: np.ndarray, omega: np.ndarray) -> np.ndarray:
    return (indicator - 0.5) / omega


def _moi_terms(
    state: SamplerState, model: JointModel, ev: ErrorVariableModel
) -> tuple[np.ndarray, np.ndarray]:
    """Natural-parameter contribution of the model of interest to x_v."""
    latents = state.x_latent
    design = model.moi.build(latents)
    eta = design @ state.beta
    c = model.moi.slope(state.beta, ev.name, latents)
    d = eta - c * latents[ev.name]
    if model.family == "gaussian":
        tau_y = state.precisions["tau.moi"]
        return c * c * tau_y, c * tau_y * (model.response - d)
    omega = state.omega_moi
    kappa = model.response - 0.5
    return c * c * omega, c * (kappa - omega * d)


def _missingness_terms(
    state: SamplerState, ev: ErrorVariableModel, latents: dict[str, np.ndarray]
) -> tuple[np.ndarray, np.ndarray]:
    part = ev.missingness
    omega = state.omega_mis[ev.name]
    design = part.builder.build(latents)
    g = state.gamma[ev.name]
    eta = design @ g
    c = part.builder.slope(g, ev.name, latents)
    d = eta - c * latents[ev.name]
    kappa = part.indicator - 0.5
    return c * c * omega, c * (kappa - omega * d)


def _classical_terms(
    state: SamplerState, ev: ErrorVariableModel, n: int
) -> tuple[np.ndarray, np.ndarray]:
    part = ev.classical
    tau_c = state.precisions[part.tau]
    a = np.zeros(n)
    b = np.zeros(n)
    for w in part.observations:
        obs = ~np.isnan(w)
        a[obs] += part.scaling[obs] * tau_c
        b[obs] += part.scaling[obs] * tau_c * w[obs]
    return a, b


def latent_x_conditional(
    state: SamplerState, model: JointModel, ev: ErrorVariableModel
) -> tuple[np.ndarray, np.ndarray]:
    """Precision A and precision-times-mean B of the conditional for x_v."""
    a, b = _moi_terms(state, model, ev)
    if ev.two_latent:
        tau_b = state.precisions[ev.berkson.tau]
        r = state.r_latent[ev.name]
        a = a + tau_b
        b = b + tau_b * r
    elif ev.berkson is not None:
        tau_b = state.precisions[ev.berkson.tau]
        a = a + tau_b
        b = b + tau_b * ev.observed_base
    else:
        if ev.classical is not None:
            ca, cb = _classical_terms(state, ev, model.n)
            a = a + ca
            b = b + cb
        if ev.imputation is not None:
            tau_i = state.precisions[ev.imputation.tau]
            mu = ev.imputation.builder.build() @ state.alpha[ev.name]
            a = a + tau_i
            b = b + tau_i * mu
    if ev.missingness is not None and ev.missingness.has_self_term:
        ma, mb = _missingness_terms(state, ev, state.x_latent)
        a = a + ma
        b = b + mb
    return a, b


def latent_r_conditional(
    state: SamplerState, model: JointModel, ev: ErrorVariableModel
) -> tuple[np.ndarray, np.ndarray]:
    """Conditional for the intermediate latent r_v (Berkson + classical/missing)."""
    tau_b = state.precisions[ev.berkson.tau]
    a = np.full(model.n, tau_b)
    b = tau_b * state.x_latent[ev.name]
    if ev.classical is not None:
        ca, cb = _classical_terms(state, ev, model.n)
        a = a + ca
        b = b + cb
    if ev.imputation is not None:
        tau_i = state.precisions[ev.imputation.tau]
        mu = ev.imputation.builder.build() @ state.alpha[ev.name]
        a = a + tau_i
        b = b + tau_i * mu
    return a, b


def _draw_at(
    vector: np.ndarray,
    a: np.ndarray,
    b: np.ndarray,
    update: np.ndarray,
    rng: np.random.Generator,
    what: str,
) -> None:
    if not update.any():
        return
    a_u = a[update]
    if not (np.isfinite(a_u).all() and (a_u > 0).all()):
        raise NumericalError(f"non-positive conditional precision for {what}")
    sd = 1.0 / np.sqrt(a_u)
    vector[update] = b[update] / a_u + sd * rng.standard_normal(int(update.sum()))


def update_latent_x(
    state: SamplerState,
    model: JointModel,
    rng: np.random.Generator,
    indices: np.ndarray | None = None,
) -> SamplerState:
    """Draw every non-pinned latent entry from its exact Gaussian conditional.

    ``indices`` optionally restricts the update to a subset of rows; pinned
    entries are never touched regardless.
    """
    selected = np.zeros(model.n, dtype=bool)
    if indices is None:
        selected[:] = True
    else:
        selected[np.asarray(indices, dtype=int)] = True
    for ev in model.error_vars:
        free = selected.copy()
        if ev.pinned:
            free &= ev.missing_mask
        if ev.two_latent:
            ra, rb = latent_r_conditional(state, model, ev)
            _draw_at(state.r_latent[ev.name], ra, rb, free, rng, f"r[{ev.name}]")
            xa, xb = latent_x_conditional(state, model, ev)
            _draw_at(state.x_latent[ev.name], xa, xb, selected, rng, f"x[{ev.name}]")
        else:
            xa, xb = latent_x_conditional(state, model, ev)
            _draw_at(state.x_latent[ev.name], xa, xb, free, rng, f"x[{ev.name}]")
    return state


def gibbs_sweep(
    state: SamplerState, model: JointModel, rng: np.random.Generator
) -> SamplerState:
    """One systematic sweep: PG auxiliaries, beta, alpha, gamma, latents, precisions."""
    n = model.n

    # (1) Polya-Gamma auxiliaries for every logit level.
    if model.family == "binomial":
        eta = model.moi.build(state.x_latent) @ state.beta
        state.omega_moi = update_pg_auxiliaries(eta, rng)
    for ev in model.error_vars:
        if ev.missingness is not None:
            eta = ev.missingness.builder.build(state.x_latent) @ state.gamma[ev.name]
            state.omega_mis[ev.name] = update_pg_auxiliaries(eta, rng)

    # (2) Model-of-interest coefficients, one joint Gaussian block.
    design = model.moi.build(state.x_latent)
    m0, p0 = _prior_arrays(model, model.moi.names)
    if model.family == "gaussian":
        obs_prec = np.full(n, state.precisions["tau.moi"])
        response = model.response
    else:
        obs_prec = state.omega_moi
        response = _logit_pseudo(model.response, state.omega_moi)
    state.beta = update_gaussian_coefficients(
        design, response, obs_prec, m0, p0, rng, block="model of interest"
    )

    # (3) Imputation coefficients per error variable.
    for ev in model.error_vars:
        if ev.imputation is None:
            continue
        target = state.r_latent[ev.name] if ev.two_latent else state.x_latent[ev.name]
        m0a, p0a = _prior_arrays(model, ev.imputation.builder.names)
        tau_i = state.precisions[ev.imputation.tau]
        state.alpha[ev.name] = update_gaussian_coefficients(
            ev.imputation.builder.build(),
            target,
            np.full(n, tau_i),
            m0a,
            p0a,
            rng,
            block=f"imputation model for {ev.name}",
        )

    # (4) Missingness coefficients per error variable, jointly with gamma_x.
    for ev in model.error_vars:
        if ev.missingness is None:
            continue
        omega = state.omega_mis[ev.name]
        m0g, p0g = _prior_arrays(model, ev.missingness.builder.names)
        state.gamma[ev.name] = update_gaussian_coefficients(
            ev.missingness.builder.build(state.x_latent),
            _logit_pseudo(ev.missingness.indicator, omega),
            omega,
            m0g,
            p0g,
            rng,
            block=f"missingness model for {ev.name}",
        )

    # (5) Latent covariates.
    update_latent_x(state, model, rng)

    # (6) Level precisions (fixed ones pass through unchanged).
    if model.moi_tau is not None:
        resid = model.response - model.moi.build(state.x_latent) @ state.beta
        state.precisions[model.moi_tau] = update_precision(
            model.moi_tau, resid, None, model.priors.precisions[model.moi_tau], rng
        )
    for ev in model.error_vars:
        target = state.r_latent[ev.name] if ev.two_latent else state.x_latent[ev.name]
        if ev.classical is not None:
            resid_parts = []
            scale_parts = []
            for w in ev.classical.observations:
                obs = ~np.isnan(w)
                resid_parts.append(w[obs] - target[obs])
                scale_parts.append(ev.classical.scaling[obs])
            state.precisions[ev.classical.tau] = update_precision(
                ev.classical.tau,
                np.concatenate(resid_parts),
                np.concatenate(scale_parts),
                model.priors.precisions[ev.classical.tau],
                rng,
            )
        if ev.berkson is not None:
            center = target if ev.two_latent else ev.observed_base
            state.precisions[ev.berkson.tau] = update_precision(
                ev.berkson.tau,
                state.x_latent[ev.name] - center,
                None,
                model.priors.precisions[ev.berkson.tau],
                rng,
            )
        if ev.imputation is not None:
            mu = ev.imputation.builder.build() @ state.alpha[ev.name]
            state.precisions[ev.imputation.tau] = update_precision(
                ev.imputation.tau,
                target - mu,
                None,
                model.priors.precisions[ev.imputation.tau],
                rng,
            )
    return state


def collect_state(state: SamplerState, model: JointModel) -> np.ndarray:
    """Current values of every registry parameter, in registry order."""
    parts = [state.beta]
    for ev in model.error_vars:
        if ev.imputation is not None:
            parts.append(state.alpha[ev.name])
        if ev.missingness is not None:
            parts.append(state.gamma[ev.name])
    taus = [name for name in model.parameter_names if name.startswith("tau.")]
    parts.append(np.array([state.precisions[name] for name in taus]))
    return np.concatenate(parts)


def _check_finite(state: SamplerState, model: JointModel, sweep: int) -> None:
    vector = collect_state(state, model)
    if not np.isfinite(vector).all():
        bad = model.parameter_names[int(np.flatnonzero(~np.isfinite(vector))[0])]
        raise NumericalError(f"non-finite value of {bad!r} at sweep {sweep}")
    for name, latent in state.x_latent.items():
        if not np.isfinite(latent).all():
            raise NumericalError(f"non-finite latent x[{name}] at sweep {sweep}")
    for name, latent in state.r_latent.items():
        if not np.isfinite(latent).all():
            raise NumericalError(f"non-finite latent r[{name}] at sweep {sweep}")


def chain_rng(seed: int, chain_index: int) -> np.random.Generator:
    """Counter-based per-chain stream: chains are independent and reproducible."""
    seq = np.random.SeedSequence(seed, spawn_key=(chain_index,))
    return np.random.Generator(np.random.Philox(seq))


def _run_one_chain(model: JointModel, config: ChainConfig, chain_index: int):
    rng = chain_rng(config.seed, chain_index)
    state = initial_state(model)
    keep = config.retained
    out = np.empty((keep, len(model.parameter_names)))
    imput = {
        ev.name: np.empty((keep, int(ev.missing_mask.sum())))
        for ev in model.error_vars
        if ev.missing_mask.any()
    }
    k = 0
    for it in range(config.iterations):
        gibbs_sweep(state, model, rng)
        _check_finite(state, model, it)
        if it >= config.burnin and (it - config.burnin) % config.thin == 0:
            out[k] = collect_state(state, model)
            for name, store in imput.items():
                ev = next(e for e in model.error_vars if e.name == name)
                store[k] = state.x_latent[name][ev.missing_mask]
            k += 1
    return out, imput


def run_chains(
    model: JointModel, config: ChainConfig, threads: int | None = None
) -> Draws:
    """Run independent chains; results are byte-identical for identical inputs.

    Chains run in worker processes when more than one worker is requested
    (per-chain state is independent, so scheduling cannot affect results);
    anything that prevents that falls back to a sequential loop.
    """
    workers = config.chains if threads is None else max(1, int(threads))
    workers = min(workers, config.chains)
    indices = range(config.chains)
    results = None
    if workers > 1:
        try:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(
                    pool.map(_run_one_chain, [model] * config.chains,
                             [config] * config.chains, indices)
                )
        except (OSError, BrokenProcessError, pickle.PicklingError):
            results = None
    if results is None:
        results = [_run_one_chain(model, config, i) for i in indices]
    chains = [r[0] for r in results]
    imputations: dict[str, ImputationDraws] = {}
    for ev in model.error_vars:
        if ev.missing_mask.any():
            imputations[ev.name] = ImputationDraws(
                rows=np.flatnonzero(ev.missing_mask),
                chains=[r[1][ev.name] for r in results],
            )
    return Draws(
        names=list(model.parameter_names), chains=chains, imputations=imputations
    )
