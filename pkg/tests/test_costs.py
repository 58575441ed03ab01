import math

import numpy as np
import pytest

from uotlab.costs import (
    CostMatrix,
    hk_cost,
    hk_matrix,
    perspective_H,
    perspective_H_eps,
    perspective_H_p,
    perspective_H_p_eps,
    second_order_H_tilde,
    sqeuclidean_matrix,
)
from uotlab.entropy import BALANCED
from uotlab.measures import GroundSet

from oracles import h_by_minimization, h_eps_by_dual_ascent, h_eps_by_minimization


def test_hk_cost_values():
    assert hk_cost(0.0) == 0.0
    assert hk_cost(math.pi / 4) == pytest.approx(math.log(2.0), abs=1e-12)
    assert hk_cost(math.pi / 2) == math.inf
    assert hk_cost(2.0) == math.inf
    with pytest.raises(ValueError):
        hk_cost(-0.1)


def test_cost_matrices():
    g0 = GroundSet([[0.0, 0.0], [1.0, 0.0]])
    g1 = GroundSet([[0.0, 1.0]])
    sq = sqeuclidean_matrix(g0, g1)
    assert sq.values[0, 0] == pytest.approx(1.0)
    assert sq.values[1, 0] == pytest.approx(2.0)
    hk = hk_matrix(g0, g1)
    assert hk.values[0, 0] == pytest.approx(hk_cost(1.0))
    with pytest.raises(ValueError):
        CostMatrix(np.array([[-1.0]]))


def test_perspective_H_values():
    assert perspective_H(1.0, 1.0, 0.0) == 0.0
    assert perspective_H(1.0, 0.0, 3.7) == 1.0
    assert perspective_H(1.0, 1.0, 2.0) == pytest.approx(2.0 - 2.0 * math.exp(-1.0), abs=1e-14)
    assert perspective_H(1.0, 1.0, 2.0) == pytest.approx(1.2642411, abs=5e-8)
    assert perspective_H(0.5, 2.0, math.inf) == 2.5
    with pytest.raises(ValueError):
        perspective_H(-1.0, 1.0, 0.0)


def test_perspective_H_matches_shared_scale_minimization():
    rng = np.random.default_rng(20)
    for _ in range(100):
        s0, s1 = rng.uniform(0.1, 5.0, 2)
        c = rng.uniform(0.0, 5.0)
        assert perspective_H(s0, s1, c) == pytest.approx(
            h_by_minimization(s0, s1, c), abs=1e-9
        )


def test_perspective_H_balanced_kind():
    assert perspective_H(2.0, 2.0, 1.5, BALANCED) == 3.0
    assert perspective_H(1.0, 2.0, 0.0, BALANCED) == math.inf
    assert perspective_H(0.0, 0.0, math.inf, BALANCED) == 0.0


def test_perspective_H_eps_values():
    assert perspective_H_eps(1.0, 1.0, 1.0, 0.0, 1.0) == 0.0
    assert perspective_H_eps(2.0, 3.0, 0.0, 1.0, 0.5) == 5.0
    assert perspective_H_eps(1.0, 1.0, 1.0, 3.0, 1.0) == pytest.approx(
        3.0 - 3.0 * math.exp(-1.0), abs=1e-14
    )
    assert perspective_H_eps(0.0, 1.0, 1.0, 2.0, 0.5) == pytest.approx(1.5)
    assert perspective_H_eps(1.0, 1.0, 1.0, math.inf, 1.0) == 3.0
    with pytest.raises(ValueError):
        perspective_H_eps(1.0, 1.0, 1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        perspective_H_eps(1.0, -1.0, 1.0, 0.0, 1.0)


def test_perspective_H_eps_matches_shared_scale_minimization():
    rng = np.random.default_rng(21)
    for _ in range(100):
        s0, s1, S = rng.uniform(0.1, 5.0, 3)
        c = rng.uniform(0.0, 5.0)
        eps = rng.uniform(0.01, 2.0)
        assert perspective_H_eps(s0, s1, S, c, eps) == pytest.approx(
            h_eps_by_minimization(s0, s1, S, c, eps), abs=1e-7
        )


def test_perspective_H_eps_dual_representation():
    rng = np.random.default_rng(22)
    for _ in range(25):
        s0, s1, S = rng.uniform(0.2, 3.0, 3)
        c = rng.uniform(0.0, 3.0)
        eps = rng.uniform(0.2, 1.5)
        closed = perspective_H_eps(s0, s1, S, c, eps)
        dual = h_eps_by_dual_ascent(s0, s1, S, c, eps)
        assert dual <= closed + 1e-9
        assert closed - dual < 1e-5


def test_homogeneity():
    rng = np.random.default_rng(23)
    for _ in range(200):
        s0, s1, S = rng.uniform(0.05, 4.0, 3)
        c = rng.uniform(0.0, 4.0)
        eps = rng.uniform(0.05, 2.0)
        lam = rng.uniform(0.1, 10.0)
        h = perspective_H(s0, s1, c)
        assert perspective_H(lam * s0, lam * s1, c) == pytest.approx(lam * h, rel=1e-12)
        he = perspective_H_eps(s0, s1, S, c, eps)
        assert perspective_H_eps(lam * s0, lam * s1, lam * S, c, eps) == pytest.approx(
            lam * he, rel=1e-12
        )


def test_eps_to_zero_consistency_at_optimal_scale():
    # with S at the unregularised optimal scale the regularised cost
    # collapses onto H for every eps, so the eps-path is trivially monotone
    rng = np.random.default_rng(24)
    for _ in range(50):
        s0, s1 = rng.uniform(0.1, 4.0, 2)
        c = rng.uniform(0.0, 4.0)
        h = perspective_H(s0, s1, c)
        s_opt = math.sqrt(s0 * s1) * math.exp(-c / 2.0)
        gaps = []
        for eps in (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6):
            gaps.append(abs(perspective_H_eps(s0, s1, s_opt, c, eps) - h))
        assert max(gaps) < 1e-12
        assert all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:]))


def test_perspective_H_p():
    g0 = GroundSet([[0.0]])
    g1 = GroundSet([[1.0]])
    cost = CostMatrix(np.array([[0.0]]))
    assert perspective_H_p(0, 2.0, 0, 1.0, cost, 2.0) == pytest.approx(1.0, abs=1e-14)
    assert perspective_H_p(0, 1.0, 0, 1.0, cost, 2.0) == perspective_H_p(0, 1.0, 0, 1.0, cost, 1.0)
    rng = np.random.default_rng(25)
    cost2 = CostMatrix(np.array([[0.7]]))
    for _ in range(20):
        s0, s1 = rng.uniform(0.1, 3.0, 2)
        assert perspective_H_p(0, s0, 0, s1, cost2, 1.0) == pytest.approx(
            perspective_H(s0, s1, 0.7), abs=1e-14
        )
    with pytest.raises(ValueError):
        perspective_H_p(0, 1.0, 0, 1.0, cost, 0.0)


def test_perspective_H_p_eps_composition():
    cost = CostMatrix(np.array([[0.9]]))
    rng = np.random.default_rng(26)
    for _ in range(20):
        s0, s1, S = rng.uniform(0.1, 3.0, 3)
        p = rng.uniform(0.5, 3.0)
        eps = rng.uniform(0.1, 1.0)
        assert perspective_H_p_eps(0, s0, 0, s1, S, cost, p, eps) == pytest.approx(
            perspective_H_eps(s0 ** p, s1 ** p, S ** p, 0.9, eps), rel=1e-13
        )


def test_second_order_H_tilde():
    assert second_order_H_tilde(1.0, 1.0, 1.0, 1.0, 4.2) == 4.2
    assert second_order_H_tilde(1.0, 1.0, 2.0, 2.0, 3.0) == 6.0
    assert second_order_H_tilde(1.0, 1.0, 1.0, 2.0, 3.0) == math.inf
    assert second_order_H_tilde(1.0, 1.0, 0.0, 0.0, math.inf) == 0.0
    with pytest.raises(ValueError):
        second_order_H_tilde(1.0, 1.0, -1.0, -1.0, 1.0)


def test_hk_dirac_formula():
    rng = np.random.default_rng(27)
    for _ in range(100):
        m0, m1 = rng.uniform(0.1, 4.0, 2)
        d = rng.uniform(0.0, math.pi / 2 - 1e-6)
        got = perspective_H(m0, m1, hk_cost(d))
        want = m0 + m1 - 2.0 * math.sqrt(m0 * m1) * math.cos(d)
        assert got == pytest.approx(want, abs=1e-12)
