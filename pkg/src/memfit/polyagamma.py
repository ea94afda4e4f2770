"""Exact Pólya-Gamma PG(1, z) sampling via the alternating-series method.

The sampler draws J*(1, z/2) with a two-piece proposal (truncated inverse
Gaussian on (0, t], shifted exponential beyond t) and decides acceptance by
evaluating partial sums of the alternating series for the target density;
PG(1, z) is then J*(1, z/2) / 4. All loops run over the still-undecided
lanes, so batch draws stay fully vectorized.
"""

from __future__ import annotations

import numpy as np
from scipy.special import log_ndtr

from .exceptions import NumericalError

_TRUNC = 0.64


def _series_coef(n: int, x: np.ndarray) -> np.ndarray:
    """n-th coefficient a_n(x) of the alternating series, piecewise in x."""
    k = (n + 0.5) * np.pi
    left = np.exp(
        -1.5 * (np.log(0.5 * np.pi) + np.log(np.maximum(x, 1e-300)))
        + np.log(k)
        - 2.0 * (n + 0.5) ** 2 / np.maximum(x, 1e-300)
    )
    right = k * np.exp(-0.5 * k * k * x)
    return np.where(x > _TRUNC, right, left)


def _right_tail_mass(z: np.ndarray) -> np.ndarray:
    """Probability that the two-piece proposal lands in the exponential tail."""
    t = _TRUNC
    fz = 0.125 * np.pi**2 + 0.5 * z * z
    b = np.sqrt(1.0 / t) * (t * z - 1.0)
    a = -np.sqrt(1.0 / t) * (t * z + 1.0)
    x0 = np.log(fz) + fz * t
    with np.errstate(over="ignore"):
        qdivp = (4.0 / np.pi) * (
            np.exp(x0 - z + log_ndtr(b)) + np.exp(x0 + z + log_ndtr(a))
        )
    return 1.0 / (1.0 + qdivp)


def _truncated_invgauss(z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Inverse Gaussian(mean 1/z, shape 1) truncated to (0, t]; z >= 0."""
    t = _TRUNC
    out = np.empty_like(z)
    # Large-mean branch (mu > t, includes z == 0): rejection from the scaled
    # one-sided stable proposal with acceptance exp(-z^2 x / 2).
    idx = np.flatnonzero(z < 1.0 / t)
    while idx.size:
        e1 = rng.exponential(size=idx.size)
        e2 = rng.exponential(size=idx.size)
        valid = e1 * e1 <= 2.0 * e2 / t
        x = t / (1.0 + t * e1) ** 2
        accept = valid & (rng.random(idx.size) <= np.exp(-0.5 * z[idx] ** 2 * x))
        out[idx[accept]] = x[accept]
        idx = idx[~accept]
    # Small-mean branch: draw inverse Gaussian until it lands below t.
    idx = np.flatnonzero(z >= 1.0 / t)
    while idx.size:
        mu = 1.0 / z[idx]
        y = rng.standard_normal(idx.size) ** 2
        mu_y = mu * y
        x = mu + 0.5 * mu * mu_y - 0.5 * mu * np.sqrt(4.0 * mu_y + mu_y * mu_y)
        flip = rng.random(idx.size) > mu / (mu + x)
        x = np.where(flip, mu * mu / np.maximum(x, 1e-300), x)
        accept = x <= t
        out[idx[accept]] = x[accept]
        idx = idx[~accept]
    return out


def pg_draw_batch(z, rng: np.random.Generator) -> np.ndarray:
    """Independent PG(1, z_i) draws for a vector of tilts."""
    z = np.atleast_1d(np.asarray(z, dtype=np.float64))
    if not np.isfinite(z).all():
        raise NumericalError("non-finite tilt passed to the Polya-Gamma sampler")
    half = 0.5 * np.abs(z)
    fz = 0.125 * np.pi**2 + 0.5 * half * half
    p_right = _right_tail_mass(half)
    out = np.empty_like(half)
    todo = np.arange(half.size)
    while todo.size:
        zt = half[todo]
        right = rng.random(todo.size) < p_right[todo]
        x = np.empty(todo.size)
        n_right = int(right.sum())
        if n_right:
            x[right] = _TRUNC + rng.exponential(size=n_right) / fz[todo][right]
        if n_right < todo.size:
            x[~right] = _truncated_invgauss(zt[~right], rng)
        # Alternating-series squeeze: stop at the first partial sum that decides.
        s = _series_coef(0, x)
        y = rng.random(todo.size) * s
        accepted = np.zeros(todo.size, dtype=bool)
        undecided = np.arange(todo.size)
        n = 0
        while undecided.size:
            n += 1
            coef = _series_coef(n, x[undecided])
            if n % 2 == 1:
                s[undecided] -= coef
                decided = y[undecided] <= s[undecided]
                accepted[undecided[decided]] = True
            else:
                s[undecided] += coef
                decided = y[undecided] > s[undecided]
            undecided = undecided[~decided]
        out[todo[accepted]] = 0.25 * x[accepted]
        todo = todo[~accepted]
    return out


def pg_draw(b: int, z: float, rng: np.random.Generator) -> float:
    """One PG(b, z) draw for integer b >= 1 (sum of b independent PG(1, z))."""
    if b < 1 or int(b) != b:
        raise ValueError(f"shape parameter b must be a positive integer, got {b}")
    if not np.isfinite(z):
        raise NumericalError(f"non-finite tilt z={z}")
    total = 0.0
    for _ in range(int(b)):
        total += float(pg_draw_batch(np.array([z]), rng)[0])
    return total
