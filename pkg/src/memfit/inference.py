"""Posterior summaries, credible intervals, and convergence diagnostics.

Quantiles use linear interpolation between order statistics (so the median of
an even sample is the midpoint of the two central values). The sample-based
"mode" column printed by some packages is deliberately omitted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InsufficientDraws
from .model import (
    SECTION_ERROR_COEF,
    SECTION_HYPER,
    SECTION_MISSINGNESS,
    SECTION_ORDER,
    JointModel,
)
from .sampler import Draws

RHAT_WARN_THRESHOLD = 1.05

SECTION_HEADERS = {
    "moi": "Fixed effects for model of interest",
    "error_coefficients": "Coefficient for variable with measurement error and/or missingness",
    "imputation": "Fixed effects for imputation model",
    "missingness": "Fixed effects for missingness model",
    "hyperparameters": "Model hyperparameters",
}


@dataclass
class ParameterSummary:
    name: str
    section: str
    mean: float
    sd: float
    q025: float
    q500: float
    q975: float
    rhat: float
    ess: float
    degenerate: bool = False


@dataclass
class FitSummary:
    """Sectioned posterior summary mirroring the printed layout of the fit."""

    rows: list[ParameterSummary]
    formula_moi: str | None = None
    formula_imp: list[str] | None = None
    formula_mis: list[str] | None = None
    error_types: list[str] | None = None

    def row(self, name: str) -> ParameterSummary:
        for row in self.rows:
            if row.name == name:
                return row
        raise KeyError(f"no parameter named {name!r}")

    def section(self, key: str) -> list[ParameterSummary]:
        return [row for row in self.rows if row.section == key]

    @property
    def max_rhat(self) -> float:
        values = [r.rhat for r in self.rows if np.isfinite(r.rhat)]
        return max(values) if values else float("nan")

    @property
    def min_ess(self) -> float:
        values = [r.ess for r in self.rows if np.isfinite(r.ess)]
        return min(values) if values else float("nan")


def _as_chain_list(draws) -> list[np.ndarray]:
    if isinstance(draws, np.ndarray) and draws.ndim == 1:
        return [np.asarray(draws, dtype=np.float64)]
    return [np.asarray(chain, dtype=np.float64).reshape(-1) for chain in draws]


def _split_halves(chains: list[np.ndarray]) -> np.ndarray:
    half = min(len(c) for c in chains) // 2
    parts = []
    for chain in chains:
        parts.append(chain[:half])
        parts.append(chain[len(chain) - half :])
    return np.asarray(parts)


def split_rhat(draws) -> float:
    """Potential scale reduction on half-chains; ~1 at convergence.

    Accepts one chain (split in half) or several; needs at least 4 draws total.
    """
    chains = _as_chain_list(draws)
    total = sum(len(c) for c in chains)
    if len(chains) < 2 and total < 4:
        raise InsufficientDraws("split R-hat needs >= 2 chains or >= 4 draws")
    ary = _split_halves(chains)
    m, n = ary.shape
    if n < 2:
        raise InsufficientDraws("split R-hat needs at least 2 draws per half-chain")
    chain_mean = ary.mean(axis=1)
    chain_var = ary.var(axis=1, ddof=1)
    within = chain_var.mean()
    between = n * chain_mean.var(ddof=1)
    if within == 0.0:
        # All halves constant: identical constants are trivially converged,
        # differing constants can never mix.
        return 1.0 if between == 0.0 else float("inf")
    var_plus = (n - 1) / n * within + between / n
    return float(np.sqrt(var_plus / within))


def _autocovariance(chain: np.ndarray) -> np.ndarray:
    n = len(chain)
    centered = chain - chain.mean()
    # FFT-based autocovariance, biased normalization (divide by n).
    size = 2 ** int(np.ceil(np.log2(2 * n)))
    fft = np.fft.rfft(centered, size)
    acov = np.fft.irfft(fft * np.conj(fft), size)[:n].real / n
    return acov


def effective_sample_size(draws) -> float:
    """Autocorrelation-based ESS with Geyer initial-positive-sequence truncation.

    A zero-variance (constant) series reports the retained draw count; callers
    flag that case as degenerate.
    """
    chains = _as_chain_list(draws)
    total = sum(len(c) for c in chains)
    if total < 10:
        raise InsufficientDraws("effective sample size needs >= 10 retained draws")
    n = min(len(c) for c in chains)
    ary = np.asarray([c[:n] for c in chains])
    m = ary.shape[0]
    acov = np.asarray([_autocovariance(ary[i]) for i in range(m)])
    chain_mean = ary.mean(axis=1)
    mean_var = acov[:, 0].mean() * n / (n - 1.0)
    var_plus = mean_var * (n - 1.0) / n
    if m > 1:
        var_plus += chain_mean.var(ddof=1)
    if var_plus == 0.0:
        return float(total)
    rho = 1.0 - (mean_var - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # Initial positive sequence on pair sums rho[2k] + rho[2k+1].
    tau = 1.0 + 2.0 * rho[1] if n > 1 else 1.0
    t = 1
    while t + 2 < n:
        pair = rho[t + 1] + rho[t + 2]
        if pair < 0.0:
            break
        tau += 2.0 * pair
        t += 2
    tau = max(tau, 1.0 / np.log10(total + 10))
    return float(total / tau)


def credible_interval(draws, level: float = 0.95) -> tuple[float, float]:
    """Equal-tailed empirical interval from pooled draws."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    pooled = np.concatenate(_as_chain_list(draws))
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(pooled, [tail, 1.0 - tail])
    return float(lo), float(hi)


def summarize(draws: Draws, model: JointModel | None = None) -> FitSummary:
    """Pooled moments, quantiles, and diagnostics for every parameter.

    When the model is given, the summary also echoes formulas and error types;
    otherwise sections are inferred from the parameter names alone.
    """
    if draws.n_retained == 0:
        raise InsufficientDraws("empty draws")
    sections = (
        dict(model.sections) if model is not None else infer_sections(draws.names)
    )
    rows = []
    for name in draws.names:
        per_chain = draws.parameter(name)
        # Sorting fixes the summation order, so pooled moments are exactly
        # invariant under chain permutation.
        pooled = np.sort(per_chain.reshape(-1))
        mean = float(pooled.mean())
        sd = float(pooled.std(ddof=1)) if pooled.size > 1 else 0.0
        q025, q500, q975 = (float(q) for q in np.quantile(pooled, [0.025, 0.5, 0.975]))
        degenerate = sd == 0.0
        try:
            rhat = split_rhat(per_chain)
        except InsufficientDraws:
            rhat = float("nan")
        try:
            ess = effective_sample_size(per_chain)
        except InsufficientDraws:
            ess = float("nan")
        rows.append(
            ParameterSummary(
                name=name,
                section=sections[name],
                mean=mean,
                sd=sd,
                q025=q025,
                q500=q500,
                q975=q975,
                rhat=rhat,
                ess=ess,
                degenerate=degenerate,
            )
        )
    order = {key: i for i, key in enumerate(SECTION_ORDER)}
    rows.sort(key=lambda r: order[r.section])

    summary = FitSummary(rows=rows)
    if model is not None:
        spec = model.spec
        summary.formula_moi = spec.formula_moi.render()
        summary.formula_imp = [f.render() for f in spec.formula_imp if f is not None]
        summary.formula_mis = [f.render() for f in spec.formula_mis if f is not None]
        types: list[str] = []
        for err in spec.errors:
            types.extend(t for t in err.types if t not in types)
        summary.error_types = types
    return summary


def infer_sections(names: list[str]) -> dict[str, str]:
    """Best-effort section assignment from coefficient names alone.

    Used when re-rendering a summary from a draws file, where the assembled
    model is no longer available.
    """
    error_vars = set()
    for name in names:
        parts = name.split(".")
        if parts[0] in ("alpha", "gamma", "tau") and len(parts) >= 2 and parts[1] != "moi":
            error_vars.add(parts[1])
    sections = {}
    for name in names:
        parts = name.split(".")
        if parts[0] == "tau":
            sections[name] = "hyperparameters"
        elif parts[0] == "beta":
            bare = name.split(".", 1)[1]
            sections[name] = (
                SECTION_ERROR_COEF if bare in error_vars else "moi"
            )
        elif parts[0] == "alpha":
            sections[name] = "imputation"
        elif parts[0] == "gamma":
            sections[name] = (
                SECTION_ERROR_COEF if len(parts) == 2 else SECTION_MISSINGNESS
            )
        else:
            sections[name] = "moi"
    return sections


def _hyper_label(name: str) -> str:
    parts = name.split(".")
    if name == "tau.moi":
        return "Precision for model of interest"
    if len(parts) == 3:
        return f"Precision for {parts[1]} {parts[2]} model"
    return name


def render_summary(summary: FitSummary) -> str:
    """Fixed-width text summary, sectioned like the package's printed output."""
    lines: list[str] = []
    if summary.formula_moi:
        lines += ["Formula for model of interest:", summary.formula_moi, ""]
    for rendered in summary.formula_imp or []:
        lines += ["Formula for imputation model:", rendered, ""]
    for rendered in summary.formula_mis or []:
        lines += ["Formula for missingness model:", rendered, ""]
    if summary.error_types:
        lines += ["Error types:", ", ".join(f'"{t}"' for t in summary.error_types), ""]

    columns = ["mean", "sd", "0.025quant", "0.5quant", "0.975quant", "rhat", "ess"]
    for key in SECTION_ORDER:
        rows = summary.section(key)
        if not rows:
            continue
        header = SECTION_HEADERS[key]
        if key == SECTION_HYPER:
            apart = [
                r.name
                for r in summary.rows
                if r.section == SECTION_ERROR_COEF
            ]
            if apart:
                header += f" (apart from {', '.join(apart)})"
        lines.append(header + ":")
        labels = [
            _hyper_label(r.name) if key == SECTION_HYPER else r.name for r in rows
        ]
        label_width = max(len(label) for label in labels)
        head = " ".join(f"{c:>12}" for c in columns)
        lines.append(" " * label_width + " " + head)
        for label, row in zip(labels, rows):
            values = [row.mean, row.sd, row.q025, row.q500, row.q975]
            cells = [f"{v:12.5f}" for v in values]
            cells.append(f"{row.rhat:12.3f}" if np.isfinite(row.rhat) else f"{'':>12}")
            cells.append(f"{row.ess:12.0f}" if np.isfinite(row.ess) else f"{'':>12}")
            note = "  (constant)" if row.degenerate else ""
            lines.append(f"{label:<{label_width}} " + " ".join(cells) + note)
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"
