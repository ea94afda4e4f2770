"""Command-line interface: ``fit``, ``simulate``, ``compare``, ``summary``.

Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import __version__
from .artifacts import (
    read_draws_csv,
    write_run_artifacts,
    write_summary_files,
)
from .config import FitConfig, load_config, spec_from_config
from .data import Dataset, load_csv, write_csv
from .exceptions import (
    DataFormatError,
    FormulaError,
    InsufficientDraws,
    NumericalError,
    SpecError,
)
from .formula import Formula, Term, parse_formula
from .inference import RHAT_WARN_THRESHOLD, render_summary, summarize
from .model import assemble_joint_model, validate_spec, validation_errors
from .sampler import run_chains
from .simulate import naive_fit, simulate_classical_repeats, simulate_missing_scenario

EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guard(func):
    """Translate library exceptions into the documented exit codes."""

    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (SpecError, FormulaError, InsufficientDraws) as exc:
            _fail(EXIT_VALIDATION, str(exc))
        except NumericalError as exc:
            _fail(EXIT_NUMERICAL, str(exc))
        except (DataFormatError, OSError) as exc:
            _fail(EXIT_IO, str(exc))

    wrapper.__name__ = func.__name__
    wrapper.__doc__ = func.__doc__
    return wrapper


def _report_masked(data: Dataset) -> None:
    counts = data.masked_counts()
    rendered = ", ".join(f"{name}={count}" for name, count in counts.items())
    click.echo(f"Masked cells per column: {rendered}")


def _load_inputs(config_path, data_path, seed):
    config = load_config(config_path)
    if seed is not None:
        config = replace(config, seed=int(seed))
    data = load_csv(data_path)
    return config, data


def _fit_model(config: FitConfig, data: Dataset, threads, quiet):
    spec = spec_from_config(config, data)
    diags = validate_spec(spec, data)
    for diag in diags:
        if diag.severity == "warning" and not quiet:
            click.echo(f"warning: {diag.message}", err=True)
    errors = validation_errors(diags)
    if errors:
        raise SpecError("; ".join(errors))
    model = assemble_joint_model(spec, data)
    draws = run_chains(model, config.chain_config(), threads=threads)
    summary = summarize(draws, model)
    return model, draws, summary


@click.group()
@click.version_option(version=__version__, prog_name="memfit")
def main():
    """Bayesian regression with measurement error and missing covariates."""


@main.command("fit")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--data", "data_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--threads", type=int, default=None, help="Chain threads (default: #chains).")
@click.option("--quiet", is_flag=True, default=False)
@_guard
def cmd_fit(config_path, data_path, out_dir, seed, threads, quiet):
    """Fit the joint model and write draws, summaries, and provenance."""
    config, data = _load_inputs(config_path, data_path, seed)
    _report_masked(data)
    model, draws, summary = _fit_model(config, data, threads, quiet)
    write_run_artifacts(out_dir, config, data_path, data, model, draws, summary)
    if not quiet:
        click.echo(render_summary(summary))
    max_rhat = summary.max_rhat
    if np.isfinite(max_rhat) and max_rhat > RHAT_WARN_THRESHOLD:
        click.echo(
            f"warning: max split-R-hat {max_rhat:.3f} exceeds"
            f" {RHAT_WARN_THRESHOLD}; chains may not have converged",
            err=True,
        )
    click.echo(f"artifacts written to {out_dir}")


@main.command("simulate")
@click.argument("scenario", type=click.Choice(["missing_mar", "classical_repeats"]))
@click.option("--seed", type=int, default=1, show_default=True)
@click.option("--n", type=int, required=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--repeats", type=int, default=2, show_default=True,
              help="Repeat measurements (classical_repeats only).")
@click.option("--family", type=click.Choice(["gaussian", "binomial"]),
              default="binomial", show_default=True,
              help="Response family (classical_repeats only).")
@_guard
def cmd_simulate(scenario, seed, n, out_path, repeats, family):
    """Generate a scenario dataset plus a ground-truth sidecar file."""
    if n < 1:
        raise SpecError(f"n must be positive, got {n}")
    if scenario == "missing_mar":
        data, truth = simulate_missing_scenario(seed, n)
    else:
        data, truth = simulate_classical_repeats(
            seed, n, k_repeats=repeats, family=family
        )
    write_csv(data, out_path)
    sidecar = Path(str(out_path) + ".truth.json")
    record = {
        "scenario": scenario,
        "seed": truth.seed,
        "n": truth.n,
        "params": truth.params,
        "n_missing": int(truth.missing.sum()),
        **({"extra": truth.extra} if truth.extra else {}),
    }
    sidecar.write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")
    click.echo(f"dataset written to {out_path}; truth sidecar {sidecar}")


def _truth_substituted(formula: Formula, suffix_vars: list[str]) -> Formula:
    terms = []
    for term in formula.terms:
        variables = tuple(
            f"{v}_true" if v in suffix_vars else v for v in term.variables
        )
        terms.append(Term(variables))
    return Formula(formula.response, tuple(terms), formula.intercept)


def _strip_truth_names(names: list[str], error_vars: list[str]) -> list[str]:
    out = []
    for name in names:
        for v in error_vars:
            name = name.replace(f"{v}_true", v)
        out.append(name)
    return out


@main.command("compare")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--data", "data_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--threads", type=int, default=None)
@click.option("--quiet", is_flag=True, default=False)
@_guard
def cmd_compare(config_path, data_path, out_dir, seed, threads, quiet):
    """Corrected fit vs naive/complete-case fit (and correct-covariate fit
    when <variable>_true columns are available)."""
    config, data = _load_inputs(config_path, data_path, seed)
    _report_masked(data)
    model, draws, summary = _fit_model(config, data, threads, quiet)
    out = Path(out_dir)
    write_run_artifacts(out, config, data_path, data, model, draws, summary)
    max_rhat = summary.max_rhat
    if np.isfinite(max_rhat) and max_rhat > RHAT_WARN_THRESHOLD:
        click.echo(
            f"warning: max split-R-hat {max_rhat:.3f} exceeds"
            f" {RHAT_WARN_THRESHOLD}; chains may not have converged",
            err=True,
        )

    formula = parse_formula(config.formula_moi)
    moi_names = list(model.moi.names)
    methods: dict[str, dict[str, tuple[float, float, float]]] = {}

    corrected = {}
    for name in moi_names:
        row = summary.row(name)
        corrected[name] = (row.mean, row.q025, row.q975)
    methods["corrected"] = corrected

    naive = naive_fit(formula, data, family=config.family_moi)
    methods["naive"] = {
        name: (naive.coef(name), *naive.interval(name)) for name in naive.names
    }

    error_vars = list(config.error_variable)
    if all(f"{v}_true" in data for v in error_vars):
        truth_formula = _truth_substituted(formula, error_vars)
        correct = naive_fit(truth_formula, data, family=config.family_moi)
        renamed = _strip_truth_names(correct.names, error_vars)
        methods["correct_x"] = {
            name: (correct.estimates[j], *correct.interval(correct.names[j]))
            for j, name in enumerate(renamed)
        }

    with open(out / "comparison.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        header = ["parameter"]
        for method in methods:
            header += [f"{method}_mean", f"{method}_lo", f"{method}_hi"]
        writer.writerow(header)
        for name in moi_names:
            row = [name]
            for method, table in methods.items():
                if name in table:
                    row += [repr(float(v)) for v in table[name]]
                else:
                    row += ["", "", ""]
            writer.writerow(row)
    with open(out / "comparison_long.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "parameter", "estimate", "lo", "hi"])
        for method, table in methods.items():
            for name in moi_names:
                if name in table:
                    est, lo, hi = table[name]
                    writer.writerow(
                        [method, name, repr(float(est)), repr(float(lo)), repr(float(hi))]
                    )
    if not quiet:
        click.echo(_render_comparison(moi_names, methods))
    click.echo(f"comparison written to {out / 'comparison.csv'}")


def _render_comparison(names, methods) -> str:
    lines = []
    width = max(len(n) for n in names)
    header = f"{'parameter':<{width}}"
    for method in methods:
        header += f" {method + ' (95% CI)':>34}"
    lines.append(header)
    for name in names:
        line = f"{name:<{width}}"
        for table in methods.values():
            if name in table:
                est, lo, hi = table[name]
                line += f" {est:10.4f} [{lo:9.4f}, {hi:9.4f}]"
            else:
                line += " " * 35
        lines.append(line)
    return "\n".join(lines)


@main.command("summary")
@click.option("--draws", "draws_path", required=True, type=click.Path())
@click.option("--out", "out_dir", default=None, type=click.Path())
@_guard
def cmd_summary(draws_path, out_dir):
    """Re-render a posterior summary from a draws.csv file."""
    draws = read_draws_csv(draws_path)
    summary = summarize(draws)
    click.echo(render_summary(summary))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_summary_files(out, summary)
        click.echo(f"summary written to {out}")


if __name__ == "__main__":
    main()
