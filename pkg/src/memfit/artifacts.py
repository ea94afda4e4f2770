"""Run artifacts: draws, summaries, imputation marginals, and provenance.

Every fit emits the same four files. Floats are written with ``repr`` so a
rerun from identical inputs reproduces the files byte for byte, and the
provenance record embeds the effective config so a run can be reproduced from
it alone.
"""

from __future__ import annotations

import csv
import hashlib
import math
from pathlib import Path

import numpy as np

from . import __version__
from .config import FitConfig, config_sha256, render_config
from .data import Dataset
from .exceptions import DataFormatError
from .inference import FitSummary, render_summary
from .model import JointModel
from .sampler import Draws

PROVENANCE_CONFIG_MARKER = "--- config ---"


def _fmt(value: float) -> str:
    return repr(float(value))


def write_draws_csv(path, draws: Draws) -> None:
    """Long format: chain, iteration (retained index), parameter, value."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["chain", "iteration", "parameter", "value"])
        for chain_idx, chain in enumerate(draws.chains):
            for it in range(chain.shape[0]):
                row = chain[it]
                for name, value in zip(draws.names, row):
                    writer.writerow([chain_idx, it, name, _fmt(value)])


def read_draws_csv(path) -> Draws:
    """Rebuild Draws from the long format written by :func:`write_draws_csv`."""
    per_chain: dict[int, dict[int, dict[str, float]]] = {}
    names: list[str] = []
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["chain", "iteration", "parameter", "value"]:
            raise DataFormatError(f"{path} is not a draws file (bad header)")
        for row in reader:
            if len(row) != 4:
                raise DataFormatError(f"ragged row in draws file: {row!r}")
            chain, it, name, value = int(row[0]), int(row[1]), row[2], float(row[3])
            per_chain.setdefault(chain, {}).setdefault(it, {})[name] = value
            if name not in names:
                names.append(name)
    if not per_chain:
        raise DataFormatError(f"no draws found in {path}")
    chains = []
    for chain_idx in sorted(per_chain):
        iters = per_chain[chain_idx]
        matrix = np.empty((len(iters), len(names)))
        for row, it in enumerate(sorted(iters)):
            record = iters[it]
            matrix[row] = [record[name] for name in names]
        chains.append(matrix)
    return Draws(names=names, chains=chains)


def write_summary_files(outdir: Path, summary: FitSummary) -> None:
    (outdir / "summary.txt").write_text(render_summary(summary), encoding="utf-8")
    with open(outdir / "summary.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["parameter", "section", "mean", "sd", "q025", "q500", "q975", "rhat", "ess"]
        )
        for row in summary.rows:
            writer.writerow(
                [
                    row.name,
                    row.section,
                    _fmt(row.mean),
                    _fmt(row.sd),
                    _fmt(row.q025),
                    _fmt(row.q500),
                    _fmt(row.q975),
                    _fmt(row.rhat),
                    _fmt(row.ess),
                ]
            )


def write_imputations_csv(path, draws: Draws, data: Dataset | None = None) -> None:
    """Marginal summaries (mean, sd, 95% bounds) per imputed entry, plus the
    simulation truth when a ``<variable>_true`` column is available."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variable", "row", "mean", "sd", "q025", "q975", "truth"])
        for variable, imp in draws.imputations.items():
            pooled = np.concatenate(imp.chains, axis=0)
            means = pooled.mean(axis=0)
            sds = pooled.std(axis=0, ddof=1)
            q025 = np.quantile(pooled, 0.025, axis=0)
            q975 = np.quantile(pooled, 0.975, axis=0)
            truth_col = None
            if data is not None and f"{variable}_true" in data:
                truth_col = data.column(f"{variable}_true")
            for j, row_idx in enumerate(imp.rows):
                truth = ""
                if truth_col is not None and not math.isnan(truth_col[row_idx]):
                    truth = _fmt(truth_col[row_idx])
                writer.writerow(
                    [
                        variable,
                        int(row_idx),
                        _fmt(means[j]),
                        _fmt(sds[j]),
                        _fmt(q025[j]),
                        _fmt(q975[j]),
                        truth,
                    ]
                )


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def write_provenance(path, config: FitConfig, data_path) -> None:
    lines = [
        f"memfit version: {__version__}",
        f"config sha256: {config_sha256(config)}",
        f"data file: {data_path}",
        f"data sha256: {file_sha256(data_path)}",
        f"seed: {config.seed}",
        PROVENANCE_CONFIG_MARKER,
        render_config(config).rstrip(),
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def config_from_provenance(path) -> FitConfig:
    """Recover the effective config embedded in a provenance record."""
    from .config import read_config_text

    text = Path(path).read_text(encoding="utf-8")
    if PROVENANCE_CONFIG_MARKER not in text:
        raise DataFormatError(f"{path} has no embedded config")
    _, config_text = text.split(PROVENANCE_CONFIG_MARKER, 1)
    return read_config_text(config_text)


def write_run_artifacts(
    outdir,
    config: FitConfig,
    data_path,
    data: Dataset,
    model: JointModel,
    draws: Draws,
    summary: FitSummary,
) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_draws_csv(outdir / "draws.csv", draws)
    write_summary_files(outdir, summary)
    write_imputations_csv(outdir / "imputations.csv", draws, data)
    write_provenance(outdir / "provenance.txt", config, data_path)
