"""Model formulas of the form ``response ~ term + term`` and design matrices.

Supported syntax is deliberately small: main effects, two-way ``a:b``
interactions, and a leading ``-1`` to drop the intercept. Anything else
(``*`` expansion, nesting, function calls) is rejected with a clear error.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .exceptions import FormulaError

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


@dataclass(frozen=True)
class Term:
    """A main effect (one variable) or a two-way interaction (two variables)."""

    variables: tuple[str, ...]

    def __post_init__(self):
        if len(self.variables) not in (1, 2):
            raise FormulaError(f"term must have 1 or 2 variables, got {self.variables}")
        if len(self.variables) == 2 and self.variables[0] == self.variables[1]:
            raise FormulaError(
                f"interaction variables must be distinct: {self.variables[0]}"
            )

    @property
    def kind(self) -> str:
        return "main-effect" if len(self.variables) == 1 else "interaction"

    def render(self) -> str:
        return ":".join(self.variables)


@dataclass(frozen=True)
class Formula:
    response: str
    terms: tuple[Term, ...]
    intercept: bool = True

    def __post_init__(self):
        if not _IDENT.match(self.response):
            raise FormulaError(f"invalid response name {self.response!r}")
        seen = set()
        for term in self.terms:
            key = frozenset(term.variables)
            if key in seen:
                raise FormulaError(f"duplicate term {term.render()!r}")
            seen.add(key)
            if self.response in term.variables:
                raise FormulaError(
                    f"response {self.response!r} cannot appear on the right-hand side"
                )

    @property
    def variables(self) -> list[str]:
        """Right-hand-side variables, in first-appearance order."""
        out = []
        for term in self.terms:
            for v in term.variables:
                if v not in out:
                    out.append(v)
        return out

    def has_variable(self, name: str) -> bool:
        return any(name in term.variables for term in self.terms)

    def render(self) -> str:
        rhs = []
        if not self.intercept:
            rhs.append("-1")
        rhs.extend(term.render() for term in self.terms)
        if not rhs:
            rhs.append("1")
        return f"{self.response} ~ {' + '.join(rhs)}"


def _parse_token(token: str) -> Term:
    if ":" in token:
        parts = [p.strip() for p in token.split(":")]
        if len(parts) != 2 or not all(_IDENT.match(p) for p in parts):
            raise FormulaError(f"malformed interaction token {token!r}")
        return Term(tuple(parts))
    if not _IDENT.match(token):
        raise FormulaError(f"malformed token {token!r}")
    return Term((token,))


def parse_formula(text: str) -> Formula:
    """Parse ``response ~ term + term + ...``; whitespace-insensitive."""
    if text.count("~") != 1:
        raise FormulaError(f"formula must contain exactly one '~': {text!r}")
    lhs, rhs = (side.strip() for side in text.split("~"))
    if not lhs:
        raise FormulaError("empty response")
    if not _IDENT.match(lhs):
        raise FormulaError(f"invalid response name {lhs!r}")
    tokens = [tok.strip() for tok in rhs.split("+")]
    intercept = True
    terms: list[Term] = []
    for i, token in enumerate(tokens):
        if token == "-1":
            if i != 0:
                raise FormulaError("'-1' is only allowed as the leading term")
            intercept = False
            continue
        if token == "1":
            if not intercept:
                raise FormulaError("cannot combine '-1' with '1'")
            continue
        if not token:
            if len(tokens) == 1:
                raise FormulaError("empty right-hand side")
            raise FormulaError("empty term between '+' separators")
        terms.append(_parse_token(token))
    return Formula(response=lhs, terms=tuple(terms), intercept=intercept)


def coefficient_name(prefix: str, group: str | None, token: str) -> str:
    """Coefficient label: ``beta.<var>``, ``alpha.<errvar>.<var>``, etc.

    In a missingness model the error variable's own main effect drops the
    trailing component (``gamma.x`` rather than ``gamma.x.x``).
    """
    if group is None:
        return f"{prefix}.{token}"
    if prefix == "gamma" and token == group:
        return f"{prefix}.{group}"
    return f"{prefix}.{group}.{token}"


def coefficient_names(
    formula: Formula, prefix: str = "beta", group: str | None = None
) -> list[str]:
    names = []
    if formula.intercept:
        names.append(coefficient_name(prefix, group, "0"))
    for term in formula.terms:
        names.append(coefficient_name(prefix, group, term.render()))
    return names


def _resolve_column(
    var: str, data: Dataset, substitute: dict[str, np.ndarray] | None
) -> np.ndarray:
    if substitute and var in substitute:
        return np.asarray(substitute[var], dtype=np.float64)
    if var in data:
        return data.column(var)
    raise FormulaError(f"unknown variable {var!r}")


def build_design(
    formula: Formula,
    data: Dataset,
    substitute: dict[str, np.ndarray] | None = None,
    prefix: str = "beta",
    group: str | None = None,
) -> tuple[np.ndarray, list[str]]:
    """Design matrix (n x p) plus ordered coefficient names.

    ``substitute`` injects current latent covariate values in place of data
    columns. Every resulting column must be fully observed and finite.
    """
    n = data.n
    cols: list[np.ndarray] = []
    if formula.intercept:
        cols.append(np.ones(n))
    for term in formula.terms:
        col = _resolve_column(term.variables[0], data, substitute)
        for var in term.variables[1:]:
            col = col * _resolve_column(var, data, substitute)
        if not np.isfinite(col).all():
            raise FormulaError(
                f"non-finite values in design column {term.render()!r}"
            )
        cols.append(col)
    matrix = np.column_stack(cols) if cols else np.empty((n, 0))
    return matrix, coefficient_names(formula, prefix, group)


class DesignBuilder:
    """Rebuilds a design matrix as latent covariates change between sweeps.

    Static columns are computed once; columns touching a latent variable are
    refilled on every :meth:`build`. Also exposes the decomposition of the
    linear predictor as ``eta = c * x_v + d`` needed by the latent updates.
    """

    def __init__(
        self,
        formula: Formula,
        data: Dataset,
        latent_names: tuple[str, ...] = (),
        prefix: str = "beta",
        group: str | None = None,
    ):
        self.formula = formula
        self.data = data
        self.latent_names = tuple(latent_names)
        self.names = coefficient_names(formula, prefix, group)
        self.n = data.n
        self._base = np.empty((self.n, len(self.names)))
        self._dynamic: list[tuple[int, Term]] = []
        col = 0
        if formula.intercept:
            self._base[:, col] = 1.0
            col += 1
        for term in formula.terms:
            if any(v in self.latent_names for v in term.variables):
                self._dynamic.append((col, term))
            else:
                self._base[:, col] = self._static_column(term)
            col += 1

    def _static_column(self, term: Term) -> np.ndarray:
        col = self.data.column(term.variables[0])
        for var in term.variables[1:]:
            col = col * self.data.column(var)
        if not np.isfinite(col).all():
            raise FormulaError(f"non-finite values in design column {term.render()!r}")
        return col

    def _value(self, var: str, latents: dict[str, np.ndarray]) -> np.ndarray:
        if var in self.latent_names:
            return latents[var]
        return self.data.column(var)

    def build(self, latents: dict[str, np.ndarray] | None = None) -> np.ndarray:
        X = self._base.copy() if self._dynamic else self._base
        for col, term in self._dynamic:
            value = self._value(term.variables[0], latents or {})
            for var in term.variables[1:]:
                value = value * self._value(var, latents or {})
            X[:, col] = value
        return X

    def slope(
        self, coef: np.ndarray, var: str, latents: dict[str, np.ndarray]
    ) -> np.ndarray:
        """Per-row derivative of the linear predictor with respect to ``var``."""
        c = np.zeros(self.n)
        offset = 1 if self.formula.intercept else 0
        for j, term in enumerate(self.formula.terms):
            if var not in term.variables:
                continue
            multiplier = np.ones(self.n)
            for other in term.variables:
                if other != var:
                    multiplier = multiplier * self._value(other, latents)
            c += coef[offset + j] * multiplier
        return c
