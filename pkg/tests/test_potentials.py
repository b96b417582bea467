import math

import numpy as np
import pytest

from jointdiff.potentials import (
    InteractionPotential,
    PotentialEvaluationError,
    evaluate_potential,
    gaussian_prior,
    postprocess_optimize,
    potential_matrix,
    uniform_box_prior,
)


def _const_potential(jval, gval, lam=1.0):
    return InteractionPotential(
        objective=lambda k, x: np.broadcast_to(
            jval, np.broadcast_shapes(np.shape(k)[:-1], np.shape(x)[:-1])),
        constraint=lambda k, x: np.broadcast_to(
            gval, np.broadcast_shapes(np.shape(k)[:-1], np.shape(x)[:-1])),
        temperature=lam,
    )


def test_infeasible_gives_exact_zero():
    pot = _const_potential(0.0, 1.0)
    assert evaluate_potential(pot, np.zeros(2), np.zeros(2)) == 0.0


def test_zero_objective_gives_one():
    pot = _const_potential(0.0, -1.0)
    assert evaluate_potential(pot, np.zeros(2), np.zeros(2)) == 1.0


def test_unit_objective_gives_exp_minus_one():
    pot = _const_potential(1.0, -1.0, lam=1.0)
    assert evaluate_potential(pot, np.zeros(2), np.zeros(2)) \
        == pytest.approx(math.exp(-1.0))


def test_indicator_hard_zero_no_smoothing():
    pot = InteractionPotential(
        objective=lambda k, x: np.sum(k, axis=-1) * 0.0,
        constraint=lambda k, x: np.sum(k, axis=-1),
    )
    # a barely-positive constraint must yield exactly zero
    assert evaluate_potential(pot, np.zeros(2), np.array([1e-12, 0.0])) == 0.0
    assert evaluate_potential(pot, np.zeros(2), np.array([-1e-12, 0.0])) > 0.0


def test_temperature_monotonicity():
    values = [evaluate_potential(_const_potential(2.0, -1.0, lam=lam),
                                 np.zeros(2), np.zeros(2))
              for lam in (0.5, 1.0, 2.0, 4.0)]
    assert all(a < b for a, b in zip(values, values[1:]))


def test_non_finite_objective_raises():
    pot = _const_potential(np.nan, -1.0)
    with pytest.raises(PotentialEvaluationError):
        evaluate_potential(pot, np.zeros(2), np.zeros(2))
    pot = _const_potential(0.0, np.inf)
    with pytest.raises(PotentialEvaluationError):
        evaluate_potential(pot, np.zeros(2), np.zeros(2))


def test_potential_matrix_matches_pointwise():
    rng = np.random.default_rng(0)
    pot = InteractionPotential(
        objective=lambda k, x: np.sum(k * k, axis=-1) + np.sum(x, axis=-1),
        constraint=lambda k, x: np.sum(k, axis=-1) - np.sum(x, axis=-1),
        temperature=0.7,
    )
    X = rng.standard_normal((4, 3))
    K = rng.standard_normal((5, 2))
    vmat, jmat, gmat = potential_matrix(pot, X, K)
    for n in range(4):
        for m in range(5):
            assert vmat[n, m] == pytest.approx(
                evaluate_potential(pot, X[n], K[m]))


def test_prior_densities():
    unit = uniform_box_prior([0.0, 0.0], [1.0, 1.0])
    assert unit.density(np.array([0.5, 0.5])) == pytest.approx(1.0)
    assert unit.density(np.array([2.0, 0.0])) == 0.0
    wide = uniform_box_prior([-2.0, -2.0], [2.0, 2.0])
    assert wide.density(np.array([0.3, -1.0])) == pytest.approx(1.0 / 16.0)

    gauss = gaussian_prior([0.0], [1.0])
    assert gauss.density(np.array([0.0])) == pytest.approx(1.0 / math.sqrt(2 * math.pi))
    with pytest.raises(ValueError):
        uniform_box_prior([1.0, 0.0], [0.0, 1.0])


def test_prior_sampling_inside_support():
    prior = uniform_box_prior([-1.0, 2.0], [1.0, 3.0])
    draws = prior.sample(1000, np.random.default_rng(1))
    assert np.all(draws >= prior.lower) and np.all(draws <= prior.upper)


def test_postprocess_feasible_any_candidate():
    pot = _const_potential(0.0, -1.0)
    prior = uniform_box_prior([-1.0, -1.0], [1.0, 1.0])
    k, feasible = postprocess_optimize(pot, prior, np.zeros(2),
                                       np.random.default_rng(2), budget=8)
    assert feasible
    assert np.all(np.abs(k) <= 1.0)


def test_postprocess_globally_infeasible():
    pot = _const_potential(0.0, 1.0)
    prior = uniform_box_prior([-1.0, -1.0], [1.0, 1.0])
    _, feasible = postprocess_optimize(pot, prior, np.zeros(2),
                                       np.random.default_rng(3), budget=16)
    assert not feasible


def test_postprocess_argmin_against_grid_oracle():
    pot = InteractionPotential(
        objective=lambda k, x: np.sum(k * k, axis=-1),
        constraint=lambda k, x: -np.ones(np.broadcast_shapes(
            np.shape(k)[:-1], np.shape(x)[:-1])),
    )
    prior = uniform_box_prior([-1.0, -1.0], [1.0, 1.0])
    k, feasible = postprocess_optimize(pot, prior, np.zeros(2),
                                       np.random.default_rng(4), budget=4096)
    assert feasible
    # brute-force oracle: dense grid argmin of |k|^2 is the origin
    grid = np.stack(np.meshgrid(np.linspace(-1, 1, 101),
                                np.linspace(-1, 1, 101)), axis=-1).reshape(-1, 2)
    oracle = grid[int(np.argmin(np.sum(grid * grid, axis=1)))]
    assert np.allclose(oracle, 0.0)
    assert np.linalg.norm(k - oracle) < 0.1


def test_postprocess_infeasible_rate_matches_theory():
    """P(feasible = false) = (1 - p_feas)^budget on a half-box feasible set."""
    pot = InteractionPotential(
        objective=lambda k, x: np.zeros(np.broadcast_shapes(
            np.shape(k)[:-1], np.shape(x)[:-1])),
        constraint=lambda k, x: k[..., 0],   # feasible iff k_x <= 0
    )
    prior = uniform_box_prior([-1.0, -1.0], [1.0, 1.0])
    x0 = np.zeros(2)

    rng = np.random.default_rng(5)
    trials, budget = 20_000, 4
    fails = sum(not postprocess_optimize(pot, prior, x0, rng, budget=budget)[1]
                for _ in range(trials))
    expected = trials * 0.5**budget
    sd = math.sqrt(trials * 0.5**budget * (1 - 0.5**budget))
    assert abs(fails - expected) <= 5.0 * sd

    trials, budget = 100_000, 16
    fails = sum(not postprocess_optimize(pot, prior, x0, rng, budget=budget)[1]
                for _ in range(trials))
    expected = trials * 0.5**budget   # ~1.5 expected failures
    assert fails <= expected + 5.0 * math.sqrt(max(expected, 1.0))


def test_postprocess_budget_validated():
    pot = _const_potential(0.0, -1.0)
    prior = uniform_box_prior([-1.0], [1.0])
    with pytest.raises(ValueError):
        postprocess_optimize(pot, prior, np.zeros(1),
                             np.random.default_rng(0), budget=0)
