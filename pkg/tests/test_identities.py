import math

import numpy as np
import pytest

from uotlab.identities import (
    GridMeasure,
    balanced_sinkhorn,
    entropy_against_lebesgue,
    grid_measure,
    verify_identities,
    w_eps_1,
    w_eps_2,
    w_eps_3,
)


def test_grid_measure_builder():
    mu = grid_measure(4, 2)
    assert mu.points.shape == (16, 2)
    assert mu.cell_volume == pytest.approx((1 / 4) ** 2)
    assert mu.weights.sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        GridMeasure(mu.points, mu.cell_volume, mu.weights * 2.0)


def test_entropy_against_lebesgue_uniform():
    mu = grid_measure(8, 1)
    # uniform density over a unit-volume box has zero differential entropy
    assert entropy_against_lebesgue(mu) == pytest.approx(0.0, abs=1e-15)


def test_single_cell_value_is_zero():
    mu = grid_measure(1, 1)
    value, gamma = w_eps_2(mu, mu, 0.5)
    assert value == pytest.approx(0.0, abs=1e-14)
    assert gamma[0, 0] == pytest.approx(1.0)


def test_balanced_sinkhorn_marginals():
    rng = np.random.default_rng(90)
    mu = grid_measure(6, 1, rng=rng)
    nu = grid_measure(6, 1, rng=rng)
    cost = np.sum((mu.points[:, None, :] - nu.points[None, :, :]) ** 2, axis=-1)
    gamma, iters, residual = balanced_sinkhorn(mu.weights, nu.weights, cost, 0.3,
                                               np.outer(mu.weights, nu.weights))
    assert residual < 1e-13
    assert np.max(np.abs(gamma.sum(1) - mu.weights)) < 1e-12


@pytest.mark.parametrize("dim,n", [(1, 8), (2, 4)])
@pytest.mark.parametrize("eps", [0.2, 1.0])
def test_identities_residuals(dim, n, eps):
    rng = np.random.default_rng(91)
    mu = grid_measure(n, dim, rng=rng)
    nu = grid_measure(n, dim, rng=rng)
    report = verify_identities(mu, nu, eps)
    assert report["residual_w2"] < 1e-9
    assert report["residual_w3"] < 1e-9
    assert report["plan_residual_w2"] < 1e-9
    assert report["plan_residual_w3"] < 1e-9


def test_constant_term_at_unit_eps_1d():
    rng = np.random.default_rng(92)
    mu = grid_measure(8, 1, rng=rng)
    nu = grid_measure(8, 1, rng=rng)
    report = verify_identities(mu, nu, 1.0)
    shift = report["w3"] - 0.5 * report["w1_double_eps"]
    assert shift == pytest.approx(0.5 * math.log(2.0 * math.pi), abs=1e-10)


def test_identities_with_equal_uniform_measures():
    mu = grid_measure(6, 1)
    report = verify_identities(mu, mu, 0.4)
    assert report["entropy_mu"] == pytest.approx(0.0, abs=1e-14)
    assert report["residual_w2"] < 1e-9
    assert report["residual_w3"] < 1e-9


def test_w1_w2_same_minimizer_distinct_values():
    rng = np.random.default_rng(93)
    mu = grid_measure(5, 1, rng=rng)
    nu = grid_measure(5, 1, rng=rng)
    eps = 0.3
    v1, g1 = w_eps_1(mu, nu, eps)
    v2, g2 = w_eps_2(mu, nu, eps)
    v3, g3 = w_eps_3(mu, nu, eps)
    assert np.max(np.abs(g1 - g2)) < 1e-9
    assert v1 != pytest.approx(v2, abs=1e-6)  # values differ by the entropy shift
    assert v3 == pytest.approx(
        0.5 * w_eps_1(mu, nu, 2 * eps)[0] + 0.5 * eps * math.log(2 * math.pi * eps),
        abs=1e-10,
    )
