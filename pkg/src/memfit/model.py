"""Model specification, validation, and assembly of the joint hierarchical model.

A fitted model stacks up to five kinds of levels per error-prone variable:
the main model of interest, classical error levels (one per repeat), a
Berkson level, an imputation level, and a Bernoulli-logit missingness level.
Variables whose only problem is missingness get their observed entries pinned
exactly instead of carrying a classical error level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .exceptions import SpecError
from .formula import DesignBuilder, Formula

ERROR_TYPES = ("classical", "berkson", "missing")
FAMILIES = ("gaussian", "binomial")

DEFAULT_COEF_PRIOR = (0.0, 0.001)


@dataclass(frozen=True)
class GammaPrior:
    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise SpecError(f"Gamma prior parameters must be positive: {self}")

    @property
    def mean(self) -> float:
        return self.shape / self.rate


DEFAULT_PREC_PRIOR = GammaPrior(1.0, 5e-5)


@dataclass(frozen=True)
class FixedPrecision:
    value: float

    def __post_init__(self):
        if not self.value > 0:
            raise SpecError(f"fixed precision must be positive: {self.value}")


@dataclass
class PriorSet:
    """User-specified priors; anything unspecified falls back to defaults.

    ``coefficients`` maps coefficient names (``beta.x``, ``alpha.x.z1``, ...)
    to Gaussian ``(mean, precision)`` pairs. ``precisions`` maps level
    precision names (``tau.moi``, ``tau.x.classical``, ...) to Gamma or fixed
    priors, and ``initial_precisions`` overrides the chain starting values.
    """

    coefficients: dict[str, tuple[float, float]] = field(default_factory=dict)
    precisions: dict[str, GammaPrior | FixedPrecision] = field(default_factory=dict)
    initial_precisions: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for name, (mean, prec) in self.coefficients.items():
            if not (np.isfinite(mean) and prec > 0):
                raise SpecError(f"invalid Gaussian prior for {name}: ({mean}, {prec})")
        for name, value in self.initial_precisions.items():
            if not value > 0:
                raise SpecError(f"initial precision for {name} must be positive")


@dataclass
class ErrorSpec:
    """Error mechanism declaration for one covariate."""

    variable: str
    types: tuple[str, ...]
    repeated: bool = False
    scaling: np.ndarray | None = None

    def __post_init__(self):
        types = tuple(t for t in ERROR_TYPES if t in self.types)
        unknown = set(self.types) - set(ERROR_TYPES)
        if unknown:
            raise SpecError(
                f"unknown error type(s) {sorted(unknown)} for {self.variable!r}"
            )
        if not types:
            raise SpecError(f"empty error types for {self.variable!r}")
        self.types = types
        if self.scaling is not None:
            self.scaling = np.asarray(self.scaling, dtype=np.float64)

    def has(self, kind: str) -> bool:
        return kind in self.types


@dataclass
class ModelSpec:
    """Everything needed to assemble the joint model, short of the data.

    ``formula_imp`` and ``formula_mis`` align with ``errors``; entries may be
    None (no imputation level for Berkson-only variables, missingness model
    optional everywhere).
    """

    formula_moi: Formula
    family_moi: str
    errors: list[ErrorSpec]
    formula_imp: list[Formula | None] = field(default_factory=list)
    formula_mis: list[Formula | None] = field(default_factory=list)
    priors: PriorSet = field(default_factory=PriorSet)

    def __post_init__(self):
        if not self.formula_imp:
            self.formula_imp = [None] * len(self.errors)
        if not self.formula_mis:
            self.formula_mis = [None] * len(self.errors)
        if len(self.formula_imp) != len(self.errors):
            raise SpecError("formula_imp length does not match error_variable")
        if len(self.formula_mis) != len(self.errors):
            raise SpecError("formula_mis length does not match error_variable")

    @property
    def error_variables(self) -> list[str]:
        return [e.variable for e in self.errors]


@dataclass
class Diagnostic:
    severity: str  # "error" | "warning"
    message: str

    def __str__(self):
        return f"{self.severity}: {self.message}"


@dataclass
class ClassicalPart:
    observations: list[np.ndarray]  # one vector per repeat, NaN where masked
    scaling: np.ndarray
    tau: str


@dataclass
class BerksonPart:
    tau: str


@dataclass
class ImputationPart:
    formula: Formula
    builder: DesignBuilder
    tau: str


@dataclass
class MissingnessPart:
    formula: Formula
    builder: DesignBuilder
    indicator: np.ndarray  # 1.0 where the covariate is missing
    has_self_term: bool


@dataclass
class ErrorVariableModel:
    """Assembled level block for one error-prone covariate.

    ``observed_base`` holds the direct observation of the covariate (its own
    column, or the per-row mean of observed repeats), NaN where everything is
    masked; it seeds initial latent values and pins entries when ``pinned``.
    For combined Berkson+classical/missing models a second latent vector sits
    between the observations and the covariate that feeds the main model
    (``two_latent``).
    """

    name: str
    types: tuple[str, ...]
    repeated: bool
    pinned: bool
    two_latent: bool
    observed_base: np.ndarray
    missing_mask: np.ndarray
    classical: ClassicalPart | None
    berkson: BerksonPart | None
    imputation: ImputationPart | None
    missingness: MissingnessPart | None
    level_names: list[str]


@dataclass
class ResolvedPriors:
    coefficients: dict[str, tuple[float, float]]
    precisions: dict[str, GammaPrior | FixedPrecision]
    initial: dict[str, float]


SECTION_MOI = "moi"
SECTION_ERROR_COEF = "error_coefficients"
SECTION_IMPUTATION = "imputation"
SECTION_MISSINGNESS = "missingness"
SECTION_HYPER = "hyperparameters"

SECTION_ORDER = (
    SECTION_MOI,
    SECTION_ERROR_COEF,
    SECTION_IMPUTATION,
    SECTION_MISSINGNESS,
    SECTION_HYPER,
)


@dataclass
class JointModel:
    n: int
    family: str
    response: np.ndarray
    moi: DesignBuilder
    moi_tau: str | None
    error_vars: list[ErrorVariableModel]
    priors: ResolvedPriors
    parameter_names: list[str]
    sections: dict[str, str]
    level_names: list[str]
    spec: ModelSpec

    @property
    def error_variable_names(self) -> list[str]:
        return [ev.name for ev in self.error_vars]


def _observation_columns(spec: ErrorSpec, data: Dataset) -> list[str]:
    if spec.repeated:
        return data.repeat_columns(spec.variable)
    return [spec.variable] if spec.variable in data else []


def _tau_names(spec: ModelSpec) -> list[str]:
    names = []
    if spec.family_moi == "gaussian":
        names.append("tau.moi")
    for err in spec.errors:
        v = err.variable
        if err.has("classical"):
            names.append(f"tau.{v}.classical")
        if err.has("berkson"):
            names.append(f"tau.{v}.berkson")
        if err.has("classical") or err.has("missing"):
            names.append(f"tau.{v}.imp")
    return names


def validate_spec(spec: ModelSpec, data: Dataset) -> list[Diagnostic]:
    """Check a specification against a dataset; returns diagnostics, never raises."""
    diags: list[Diagnostic] = []

    def error(msg):
        diags.append(Diagnostic("error", msg))

    def warning(msg):
        diags.append(Diagnostic("warning", msg))

    if spec.family_moi not in FAMILIES:
        error(f"unknown family {spec.family_moi!r} (expected one of {FAMILIES})")

    error_names = spec.error_variables
    if len(set(error_names)) != len(error_names):
        error("duplicate error variables")

    # Response of the model of interest.
    response = spec.formula_moi.response
    if response not in data:
        error(f"response column {response!r} not in data")
    else:
        y = data.column(response)
        if np.isnan(y).any():
            error(f"response column {response!r} has missing values")
        elif spec.family_moi == "binomial" and not np.isin(
            y[~np.isnan(y)], (0.0, 1.0)
        ).all():
            error(f"binomial response {response!r} must contain only 0/1 values")

    referenced: set[str] = set()

    def check_covariates(formula: Formula, where: str, allow_self: str | None = None):
        for var in formula.variables:
            if var == allow_self:
                continue
            if var in error_names:
                if where == "model of interest":
                    continue
                error(
                    f"error variable {var!r} cannot be a covariate in the {where}"
                    " (covariates there must be observed without error)"
                )
                continue
            referenced.add(var)
            if var not in data:
                error(f"column {var!r} (used in the {where}) not in data")
            elif np.isnan(data.column(var)).any():
                error(
                    f"column {var!r} used in the {where} has missing values"
                    " outside the error variables"
                )

    check_covariates(spec.formula_moi, "model of interest")

    for err, f_imp, f_mis in zip(spec.errors, spec.formula_imp, spec.formula_mis):
        v = err.variable
        if not spec.formula_moi.has_variable(v):
            error(f"error variable {v!r} not in model of interest")

        obs_cols = _observation_columns(err, data)
        if err.repeated:
            if not err.has("classical"):
                error(
                    f"repeated observations for {v!r} require 'classical' among"
                    " its error types"
                )
            if len(obs_cols) < 2:
                error(f"expected at least 2 repeat columns for {v!r} (e.g. {v}1, {v}2)")
        elif not obs_cols:
            error(f"error variable column {v!r} not in data")

        if obs_cols:
            stacked = np.column_stack([data.column(c) for c in obs_cols])
            all_missing = np.isnan(stacked).all(axis=1)
            any_missing = np.isnan(stacked).any(axis=1)
            if all_missing.all():
                error(f"error variable {v!r} has no observed values")
            if any_missing.any() and not err.has("missing"):
                error(
                    f"error variable {v!r} has masked entries but 'missing' is not"
                    " among its error types"
                )
            if err.has("missing") and not any_missing.any():
                warning(
                    f"error variable {v!r} is fully observed while its error types"
                    f" include 'missing'"
                )
            if f_mis is not None and not all_missing.any():
                warning(f"missingness model requested for {v!r} with no missing values")

        if err.scaling is not None:
            if not err.has("classical"):
                error(
                    f"classical_error_scaling given for {v!r} but 'classical' is not"
                    " among its error types"
                )
            if err.scaling.shape != (data.n,):
                error(
                    f"classical_error_scaling for {v!r} has length"
                    f" {err.scaling.shape[0] if err.scaling.ndim == 1 else '?'},"
                    f" expected {data.n}"
                )
            elif not (np.isfinite(err.scaling).all() and (err.scaling > 0).all()):
                error(f"classical_error_scaling for {v!r} must be strictly positive")

        needs_imputation = err.has("classical") or err.has("missing")
        if needs_imputation and f_imp is None:
            error(f"imputation formula required for error variable {v!r}")
        if not needs_imputation and f_imp is not None:
            error(
                f"imputation formula given for Berkson-only error variable {v!r}"
                " (the Berkson level describes the covariate directly)"
            )
        if f_imp is not None:
            if f_imp.response != v:
                error(
                    f"imputation formula response {f_imp.response!r} must be the"
                    f" error variable {v!r}"
                )
            check_covariates(f_imp, "imputation model")
        if f_mis is not None:
            check_covariates(f_mis, "missingness model", allow_self=v)

    # Masked cells in referenced columns were flagged above; unreferenced
    # masked columns are harmless but worth a note.
    in_model = {response} | referenced | set(error_names)
    in_model.update(c for err in spec.errors for c in _observation_columns(err, data))
    for name, count in data.masked_counts().items():
        if count and name not in in_model:
            warning(f"column {name!r} has {count} masked cells but is unused")

    # Precision priors must name levels that exist.
    taus = set(_tau_names(spec))
    for name in set(spec.priors.precisions) | set(spec.priors.initial_precisions):
        if name not in taus:
            if name == "tau.moi" and spec.family_moi == "binomial":
                error(
                    "precision prior given for the model of interest, but a binomial"
                    " family has no dispersion parameter"
                )
            else:
                error(f"precision prior given for absent level {name!r}")

    return diags


def validation_errors(diags: list[Diagnostic]) -> list[str]:
    return [d.message for d in diags if d.severity == "error"]


def resolve_priors(spec: ModelSpec, model: "JointModel") -> ResolvedPriors:
    """Fill in default priors for every coefficient and level precision."""
    coef_names = [n for n in model.parameter_names if not n.startswith("tau.")]
    known = set(coef_names)
    for name in spec.priors.coefficients:
        if name not in known:
            raise SpecError(f"coefficient prior given for unknown parameter {name!r}")
    coefficients = {
        name: spec.priors.coefficients.get(name, DEFAULT_COEF_PRIOR)
        for name in coef_names
    }

    tau_names = [n for n in model.parameter_names if n.startswith("tau.")]
    if spec.family_moi == "binomial" and "tau.moi" in spec.priors.precisions:
        raise SpecError(
            "fixed or Gamma precision requested for the model of interest of a"
            " binomial family (no dispersion parameter exists)"
        )
    precisions: dict[str, GammaPrior | FixedPrecision] = {}
    initial: dict[str, float] = {}
    for name in tau_names:
        prior = spec.priors.precisions.get(name, DEFAULT_PREC_PRIOR)
        precisions[name] = prior
        if name in spec.priors.initial_precisions:
            initial[name] = spec.priors.initial_precisions[name]
        elif isinstance(prior, FixedPrecision):
            initial[name] = prior.value
        else:
            initial[name] = prior.mean
    return ResolvedPriors(coefficients=coefficients, precisions=precisions, initial=initial)


def assemble_joint_model(spec: ModelSpec, data: Dataset) -> JointModel:
    """Assemble the joint model; raises :class:`SpecError` on validation errors."""
    diags = validate_spec(spec, data)
    errors = validation_errors(diags)
    if errors:
        raise SpecError("; ".join(errors))

    n = data.n
    latent_names = tuple(spec.error_variables)
    moi_builder = DesignBuilder(
        spec.formula_moi, data, latent_names=latent_names, prefix="beta"
    )

    error_vars: list[ErrorVariableModel] = []
    level_names = ["moi"]
    for err, f_imp, f_mis in zip(spec.errors, spec.formula_imp, spec.formula_mis):
        v = err.variable
        obs_cols = _observation_columns(err, data)
        stacked = np.column_stack([data.column(c) for c in obs_cols])
        observed = ~np.isnan(stacked)
        missing_mask = ~observed.any(axis=1)
        counts = observed.sum(axis=1)
        sums = np.where(observed, stacked, 0.0).sum(axis=1)
        observed_base = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)

        pinned = err.has("missing") and not err.has("classical")
        two_latent = err.has("berkson") and (err.has("classical") or err.has("missing"))
        ev_levels: list[str] = []

        classical = None
        if err.has("classical"):
            scaling = err.scaling if err.scaling is not None else np.ones(n)
            classical = ClassicalPart(
                observations=[data.column(c) for c in obs_cols],
                scaling=scaling,
                tau=f"tau.{v}.classical",
            )
            if len(obs_cols) == 1:
                ev_levels.append(f"{v}.classical")
            else:
                ev_levels.extend(f"{v}.classical.{r + 1}" for r in range(len(obs_cols)))
        elif pinned:
            ev_levels.append(f"{v}.pinned")

        berkson = BerksonPart(tau=f"tau.{v}.berkson") if err.has("berkson") else None
        if berkson:
            ev_levels.append(f"{v}.berkson")

        imputation = None
        if f_imp is not None:
            imputation = ImputationPart(
                formula=f_imp,
                builder=DesignBuilder(f_imp, data, prefix="alpha", group=v),
                tau=f"tau.{v}.imp",
            )
            ev_levels.append(f"{v}.imp")

        missingness = None
        if f_mis is not None:
            missingness = MissingnessPart(
                formula=f_mis,
                builder=DesignBuilder(
                    f_mis, data, latent_names=latent_names, prefix="gamma", group=v
                ),
                indicator=missing_mask.astype(np.float64),
                has_self_term=f_mis.has_variable(v),
            )
            ev_levels.append(f"{v}.mis")

        error_vars.append(
            ErrorVariableModel(
                name=v,
                types=err.types,
                repeated=err.repeated,
                pinned=pinned,
                two_latent=two_latent,
                observed_base=observed_base,
                missing_mask=missing_mask,
                classical=classical,
                berkson=berkson,
                imputation=imputation,
                missingness=missingness,
                level_names=ev_levels,
            )
        )
        level_names.extend(ev_levels)

    # Parameter registry and summary sections.
    parameter_names: list[str] = []
    sections: dict[str, str] = {}
    error_name_set = set(spec.error_variables)
    for name in moi_builder.names:
        parameter_names.append(name)
        bare = name.split(".", 1)[1]
        sections[name] = (
            SECTION_ERROR_COEF if bare in error_name_set else SECTION_MOI
        )
    for ev in error_vars:
        if ev.imputation:
            for name in ev.imputation.builder.names:
                parameter_names.append(name)
                sections[name] = SECTION_IMPUTATION
        if ev.missingness:
            for name in ev.missingness.builder.names:
                parameter_names.append(name)
                sections[name] = (
                    SECTION_ERROR_COEF
                    if name == f"gamma.{ev.name}"
                    else SECTION_MISSINGNESS
                )
    moi_tau = "tau.moi" if spec.family_moi == "gaussian" else None
    if moi_tau:
        parameter_names.append(moi_tau)
        sections[moi_tau] = SECTION_HYPER
    for ev in error_vars:
        for part in (ev.classical, ev.berkson, ev.imputation):
            if part is not None:
                parameter_names.append(part.tau)
                sections[part.tau] = SECTION_HYPER

    model = JointModel(
        n=n,
        family=spec.family_moi,
        response=data.column(spec.formula_moi.response),
        moi=moi_builder,
        moi_tau=moi_tau,
        error_vars=error_vars,
        priors=ResolvedPriors({}, {}, {}),
        parameter_names=parameter_names,
        sections=sections,
        level_names=level_names,
        spec=spec,
    )
    model.priors = resolve_priors(spec, model)
    return model
