"""Checks of the PG(1, z) sampler against an independent density oracle.

The oracle evaluates the tilted alternating-series density directly and
integrates it numerically; the sampler never sees this code path.
"""

import numpy as np
import pytest
from scipy.integrate import quad

from memfit.exceptions import NumericalError
from memfit.polyagamma import pg_draw, pg_draw_batch
from memfit.sampler import chain_rng


def jacobi_density(t: float) -> float:
    """Density of J*(1, 0) via the alternating theta series (both regimes)."""
    if t <= 0:
        return 0.0
    total = 0.0
    for n in range(200):
        if t > 0.64:
            k = (n + 0.5) * np.pi
            term = k * np.exp(-0.5 * k * k * t)
        else:
            term = (
                np.pi
                * (n + 0.5)
                * (2.0 / (np.pi * t)) ** 1.5
                * np.exp(-2.0 * (n + 0.5) ** 2 / t)
            )
        total += term if n % 2 == 0 else -term
        if abs(term) < 1e-16 * max(abs(total), 1e-300):
            break
    return total


def pg1_density(x: float, z: float) -> float:
    """PG(1, z) density: exponential tilting of the z=0 density."""
    if x <= 0:
        return 0.0
    return np.cosh(z / 2.0) * np.exp(-0.5 * z * z * x) * 4.0 * jacobi_density(4.0 * x)


def pg1_moment(z: float, power: int) -> float:
    value, err = quad(
        lambda x: x**power * pg1_density(x, z), 0.0, 4.0, limit=200, epsabs=1e-12
    )
    assert err < 1e-7
    return value


def closed_form_mean(z: float) -> float:
    if z == 0.0:
        return 0.25
    return np.tanh(z / 2.0) / (2.0 * z)


@pytest.mark.parametrize("z", [0.0, 0.1, 1.0, 2.0, 5.0])
def test_oracle_density_normalizes_and_matches_closed_form_mean(z):
    assert pg1_moment(z, 0) == pytest.approx(1.0, abs=1e-7)
    assert pg1_moment(z, 1) == pytest.approx(closed_form_mean(z), abs=1e-7)


# Expected means, frozen after verifying the closed form against the
# quadrature oracle above: tanh(z/2)/(2z).
FROZEN_MEANS = {
    0.0: 0.25,
    2.0: 0.1903985389889412,
    5.0: 0.09866142981514305,
}


@pytest.mark.parametrize("z,expected", sorted(FROZEN_MEANS.items()))
def test_sample_means_match_frozen_values(z, expected):
    rng = chain_rng(2024, 0)
    draws = pg_draw_batch(np.full(1_000_000, z), rng)
    tolerance = 0.002 if z < 5.0 else 0.001
    assert abs(float(draws.mean()) - expected) < tolerance


def test_sample_variance_matches_quadrature_oracle():
    z = 1.5
    rng = chain_rng(7, 0)
    draws = pg_draw_batch(np.full(400_000, z), rng)
    mean = pg1_moment(z, 1)
    var = pg1_moment(z, 2) - mean**2
    sample_var = float(draws.var(ddof=1))
    # MC standard error of a sample variance ~ var * sqrt(2 / (n - 1)).
    se = var * np.sqrt(2.0 / (len(draws) - 1)) * 3.0
    assert abs(sample_var - var) < 5 * se


def test_draws_strictly_positive():
    rng = chain_rng(11, 0)
    draws = pg_draw_batch(np.linspace(-8.0, 8.0, 10_000), rng)
    assert (draws > 0).all()


def test_tilt_symmetry_in_sign():
    rng_a = chain_rng(3, 0)
    rng_b = chain_rng(3, 0)
    a = pg_draw_batch(np.full(2000, 2.5), rng_a)
    b = pg_draw_batch(np.full(2000, -2.5), rng_b)
    np.testing.assert_array_equal(a, b)


def test_scalar_interface_and_additivity():
    rng = chain_rng(5, 0)
    single = pg_draw(1, 0.7, rng)
    assert single > 0
    total = np.mean([pg_draw(3, 1.2, rng) for _ in range(20_000)])
    assert total == pytest.approx(3 * closed_form_mean(1.2), abs=0.01)


def test_rejects_bad_arguments():
    rng = chain_rng(0, 0)
    with pytest.raises(ValueError):
        pg_draw(0, 1.0, rng)
    with pytest.raises(NumericalError):
        pg_draw(1, float("nan"), rng)
    with pytest.raises(NumericalError):
        pg_draw_batch(np.array([1.0, np.inf]), rng)


def test_empty_batch_is_noop():
    rng = chain_rng(0, 0)
    out = pg_draw_batch(np.empty(0), rng)
    assert out.size == 0
