"""Fit configuration files: a YAML schema whose keys mirror the fitting
function's argument names (formula_moi, error_type, prior_prec_classical, ...).

Unknown keys are rejected. ``load_config(render_config(cfg))`` returns an
equal configuration, which is what the provenance record relies on.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
import yaml

from .data import Dataset
from .exceptions import SpecError
from .formula import parse_formula
from .model import ErrorSpec, FixedPrecision, GammaPrior, ModelSpec, PriorSet
from .sampler import ChainConfig

PREC_LEVELS = ("moi", "classical", "berkson", "imp")

MANDATORY_KEYS = ("formula_moi", "family_moi", "error_variable", "error_type")


@dataclass
class FitConfig:
    """Normalized configuration: list-valued fields align with error_variable."""

    formula_moi: str
    family_moi: str
    error_variable: list[str]
    error_type: list[list[str]]
    formula_imp: list[str | None] = field(default_factory=list)
    formula_mis: list[str | None] = field(default_factory=list)
    repeated_observations: list[bool] = field(default_factory=list)
    classical_error_scaling: list[str | list[float] | None] = field(default_factory=list)
    prior_beta_error: list[list[float] | None] = field(default_factory=list)
    prior_gamma_error: list[list[float] | None] = field(default_factory=list)
    prior_prec: dict[str, list[list[float] | None]] = field(default_factory=dict)
    initial_prec: dict[str, list[float | None]] = field(default_factory=dict)
    fixed_prec: dict[str, list[float | None]] = field(default_factory=dict)
    prior_coefficients: dict[str, list[float]] = field(default_factory=dict)
    iterations: int = 5000
    burnin: int = 1000
    thin: int = 1
    chains: int = 4
    seed: int = 0

    def chain_config(self) -> ChainConfig:
        return ChainConfig(
            iterations=self.iterations,
            burnin=self.burnin,
            thin=self.thin,
            chains=self.chains,
            seed=self.seed,
        )


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _is_pair(value) -> bool:
    return (
        isinstance(value, (list, tuple))
        and len(value) == 2
        and all(_is_number(v) for v in value)
    )


def _align(value, n_vars: int, what: str, is_entry) -> list:
    """One entry broadcasts to every error variable; a list aligns per variable."""
    if is_entry(value):
        return [value] * n_vars
    if isinstance(value, list):
        if len(value) != n_vars:
            raise SpecError(
                f"{what} has {len(value)} entries, expected {n_vars}"
                " (one per error variable)"
            )
        for v in value:
            if v is not None and not is_entry(v):
                raise SpecError(f"malformed {what} entry {v!r}")
        return list(value)
    raise SpecError(f"malformed {what}: {value!r}")


def _as_pair(value, what: str) -> list[float]:
    if not _is_pair(value):
        raise SpecError(f"{what} must be a pair of numbers, got {value!r}")
    return [float(value[0]), float(value[1])]


def _normalize_types(raw, n_vars: int) -> list[list[str]]:
    if isinstance(raw, str):
        raw = [raw]
    if not isinstance(raw, list) or not raw:
        raise SpecError(f"error_type must be a string or list, got {raw!r}")
    if n_vars == 1 and all(isinstance(t, str) for t in raw):
        return [list(raw)]
    if len(raw) != n_vars:
        raise SpecError(
            f"error_type has {len(raw)} entries, expected {n_vars}"
            " (one per error variable)"
        )
    out = []
    for entry in raw:
        if isinstance(entry, str):
            out.append([entry])
        elif (
            isinstance(entry, list)
            and entry
            and all(isinstance(t, str) for t in entry)
        ):
            out.append(list(entry))
        else:
            raise SpecError(f"malformed error_type entry {entry!r}")
    return out


def config_from_mapping(raw: dict) -> FitConfig:
    if not isinstance(raw, dict):
        raise SpecError("config must be a mapping of keys to values")
    raw = dict(raw)
    sampler = raw.pop("sampler", {}) or {}
    if not isinstance(sampler, dict):
        raise SpecError("sampler section must be a mapping")
    known_sampler = {"iterations", "burnin", "thin", "chains", "seed"}
    unknown = set(sampler) - known_sampler
    if unknown:
        raise SpecError(f"unknown sampler keys: {sorted(unknown)}")

    for key in MANDATORY_KEYS:
        if key not in raw:
            raise SpecError(f"missing mandatory config key {key!r}")

    error_variable = raw.pop("error_variable")
    if isinstance(error_variable, str):
        error_variable = [error_variable]
    if not isinstance(error_variable, list) or not all(
        isinstance(v, str) for v in error_variable
    ):
        raise SpecError("error_variable must be a string or list of strings")
    n_vars = len(error_variable)

    error_type = _normalize_types(raw.pop("error_type"), n_vars)

    def pop_formulas(key):
        value = raw.pop(key, None)
        if value is None:
            return [None] * n_vars
        entries = _align(value, n_vars, key, lambda v: isinstance(v, str))
        return [None if e is None else str(e) for e in entries]

    formula_imp = pop_formulas("formula_imp")
    formula_mis = pop_formulas("formula_mis")

    repeated = _align(
        raw.pop("repeated_observations", False),
        n_vars,
        "repeated_observations",
        lambda v: isinstance(v, bool),
    )

    def _is_scaling(value) -> bool:
        return isinstance(value, str) or (
            isinstance(value, list) and value and all(_is_number(v) for v in value)
        )

    scaling_raw = raw.pop("classical_error_scaling", None)
    if scaling_raw is None:
        scaling = [None] * n_vars
    else:
        scaling = _align(scaling_raw, n_vars, "classical_error_scaling", _is_scaling)

    def pop_error_pairs(key):
        value = raw.pop(key, None)
        if value is None:
            return [None] * n_vars
        entries = _align(value, n_vars, key, _is_pair)
        return [None if e is None else _as_pair(e, key) for e in entries]

    prior_beta_error = pop_error_pairs("prior_beta_error")
    prior_gamma_error = pop_error_pairs("prior_gamma_error")

    prior_prec: dict[str, list] = {}
    initial_prec: dict[str, list] = {}
    fixed_prec: dict[str, list] = {}
    for level in PREC_LEVELS:
        count = 1 if level == "moi" else n_vars
        value = raw.pop(f"prior_prec_{level}", None)
        if value is not None:
            entries = _align(value, count, f"prior_prec_{level}", _is_pair)
            prior_prec[level] = [
                None if e is None else _as_pair(e, f"prior_prec_{level}")
                for e in entries
            ]
        value = raw.pop(f"initial_prec_{level}", None)
        if value is not None:
            entries = _align(value, count, f"initial_prec_{level}", _is_number)
            initial_prec[level] = [None if e is None else float(e) for e in entries]
        value = raw.pop(f"fixed_prec_{level}", None)
        if value is not None:
            entries = _align(value, count, f"fixed_prec_{level}", _is_number)
            fixed_prec[level] = [None if e is None else float(e) for e in entries]

    prior_coefficients = raw.pop("prior_coefficients", {}) or {}
    if not isinstance(prior_coefficients, dict):
        raise SpecError("prior_coefficients must map coefficient names to pairs")
    prior_coefficients = {
        str(k): _as_pair(v, f"prior_coefficients[{k}]")
        for k, v in prior_coefficients.items()
    }

    formula_moi = raw.pop("formula_moi")
    family_moi = raw.pop("family_moi")
    if raw:
        raise SpecError(f"unknown config keys: {sorted(raw)}")

    return FitConfig(
        formula_moi=str(formula_moi),
        family_moi=str(family_moi),
        error_variable=error_variable,
        error_type=error_type,
        formula_imp=formula_imp,
        formula_mis=formula_mis,
        repeated_observations=repeated,
        classical_error_scaling=scaling,
        prior_beta_error=prior_beta_error,
        prior_gamma_error=prior_gamma_error,
        prior_prec=prior_prec,
        initial_prec=initial_prec,
        fixed_prec=fixed_prec,
        prior_coefficients=prior_coefficients,
        iterations=int(sampler.get("iterations", 5000)),
        burnin=int(sampler.get("burnin", 1000)),
        thin=int(sampler.get("thin", 1)),
        chains=int(sampler.get("chains", 4)),
        seed=int(sampler.get("seed", 0)),
    )


def load_config(path) -> FitConfig:
    """Load and normalize a YAML configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise SpecError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise SpecError(f"malformed config {path}: {exc}") from exc
    if raw is None:
        raise SpecError(f"empty config file {path}")
    return config_from_mapping(raw)


def render_config(config: FitConfig) -> str:
    """Canonical YAML rendering; loading it back yields an equal FitConfig."""
    doc: dict = {
        "formula_moi": config.formula_moi,
        "family_moi": config.family_moi,
        "error_variable": list(config.error_variable),
        "error_type": [list(t) for t in config.error_type],
    }
    if any(f is not None for f in config.formula_imp):
        doc["formula_imp"] = list(config.formula_imp)
    if any(f is not None for f in config.formula_mis):
        doc["formula_mis"] = list(config.formula_mis)
    if any(config.repeated_observations):
        doc["repeated_observations"] = list(config.repeated_observations)
    if any(s is not None for s in config.classical_error_scaling):
        doc["classical_error_scaling"] = list(config.classical_error_scaling)
    if any(p is not None for p in config.prior_beta_error):
        doc["prior_beta_error"] = list(config.prior_beta_error)
    if any(p is not None for p in config.prior_gamma_error):
        doc["prior_gamma_error"] = list(config.prior_gamma_error)
    for level, entries in config.prior_prec.items():
        doc[f"prior_prec_{level}"] = list(entries)
    for level, entries in config.initial_prec.items():
        doc[f"initial_prec_{level}"] = list(entries)
    for level, entries in config.fixed_prec.items():
        doc[f"fixed_prec_{level}"] = list(entries)
    if config.prior_coefficients:
        doc["prior_coefficients"] = dict(config.prior_coefficients)
    doc["sampler"] = {
        "iterations": config.iterations,
        "burnin": config.burnin,
        "thin": config.thin,
        "chains": config.chains,
        "seed": config.seed,
    }
    return yaml.safe_dump(doc, sort_keys=False)


def _resolve_scaling(entry, data: Dataset, variable: str) -> np.ndarray | None:
    if entry is None:
        return None
    if isinstance(entry, str):
        if entry not in data:
            raise SpecError(
                f"classical_error_scaling column {entry!r} (for {variable!r})"
                " not in data"
            )
        return data.column(entry)
    return np.asarray(entry, dtype=np.float64)


def spec_from_config(config: FitConfig, data: Dataset) -> ModelSpec:
    """Translate a configuration plus data into a ModelSpec ready for assembly."""
    n_vars = len(config.error_variable)
    errors = []
    for i, variable in enumerate(config.error_variable):
        errors.append(
            ErrorSpec(
                variable=variable,
                types=tuple(config.error_type[i]),
                repeated=config.repeated_observations[i]
                if config.repeated_observations
                else False,
                scaling=_resolve_scaling(
                    config.classical_error_scaling[i]
                    if config.classical_error_scaling
                    else None,
                    data,
                    variable,
                ),
            )
        )

    coefficients: dict[str, tuple[float, float]] = {}
    for i, variable in enumerate(config.error_variable):
        if config.prior_beta_error and config.prior_beta_error[i] is not None:
            mean, prec = config.prior_beta_error[i]
            coefficients[f"beta.{variable}"] = (mean, prec)
        if config.prior_gamma_error and config.prior_gamma_error[i] is not None:
            mean, prec = config.prior_gamma_error[i]
            coefficients[f"gamma.{variable}"] = (mean, prec)
    for name, (mean, prec) in config.prior_coefficients.items():
        coefficients[name] = (mean, prec)

    def tau_name(level: str, index: int) -> str:
        if level == "moi":
            return "tau.moi"
        return f"tau.{config.error_variable[index]}.{level}"

    precisions: dict[str, GammaPrior | FixedPrecision] = {}
    initial: dict[str, float] = {}
    for level, entries in config.prior_prec.items():
        for i, entry in enumerate(entries):
            if entry is not None:
                precisions[tau_name(level, i)] = GammaPrior(entry[0], entry[1])
    for level, entries in config.fixed_prec.items():
        for i, entry in enumerate(entries):
            if entry is None:
                continue
            name = tau_name(level, i)
            if name in precisions:
                raise SpecError(
                    f"both prior_prec_{level} and fixed_prec_{level} given"
                )
            precisions[name] = FixedPrecision(entry)
    for level, entries in config.initial_prec.items():
        for i, entry in enumerate(entries):
            if entry is not None:
                initial[tau_name(level, i)] = entry

    return ModelSpec(
        formula_moi=parse_formula(config.formula_moi),
        family_moi=config.family_moi,
        errors=errors,
        formula_imp=[
            None if f is None else parse_formula(f) for f in config.formula_imp
        ],
        formula_mis=[
            None if f is None else parse_formula(f) for f in config.formula_mis
        ],
        priors=PriorSet(
            coefficients=coefficients,
            precisions=precisions,
            initial_precisions=initial,
        ),
    )


def config_sha256(config: FitConfig) -> str:
    import hashlib

    return hashlib.sha256(render_config(config).encode("utf-8")).hexdigest()


def read_config_text(text: str) -> FitConfig:
    return config_from_mapping(yaml.safe_load(io.StringIO(text)))
