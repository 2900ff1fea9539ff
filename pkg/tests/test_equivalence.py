"""Tests for equivalent-game generation and verification."""

import numpy as np
import pytest

from conftest import make_random_game
from lq_inverse.equivalence import generate_equivalent, verify_equivalent
from lq_inverse.exceptions import DimensionMismatch, InvalidParameters, UnstableClosedLoop
from lq_inverse.game import (CostParameters, FeedbackProfile, GameDynamics, LQGame, best_response_gain,
                             solve_forward_ne, value_kernels)


@pytest.fixture(scope="module")
def sim2_equilibrium(sim2_game):
    gains, _ = solve_forward_ne(sim2_game)
    return gains


def _keep_all(N):
    return [[None] * N for _ in range(N)]


def test_unchanged_table_keeps_costs(sim2_game, sim2_equilibrium):
    costs = generate_equivalent(sim2_game, sim2_equilibrium, _keep_all(2))
    for Q, Q0 in zip(costs.Q, sim2_game.costs.Q):
        np.testing.assert_array_equal(Q, Q0)


def test_raising_cross_weight_lowers_state_weight(sim2_game, sim2_equilibrium):
    table = _keep_all(2)
    table[0][1] = sim2_game.costs.R[0][1] + 1.0
    costs = generate_equivalent(sim2_game, sim2_equilibrium, table)
    K_2 = sim2_equilibrium.K[1]
    np.testing.assert_allclose(costs.Q[0], sim2_game.costs.Q[0] - K_2.T @ K_2, atol=1e-14)
    np.testing.assert_array_equal(costs.Q[1], sim2_game.costs.Q[1])
    np.testing.assert_allclose(costs.R[0][1], [[2.0]])

    equivalent, report = verify_equivalent(sim2_game, LQGame(sim2_game.dynamics, costs), sim2_equilibrium)
    assert equivalent
    assert all(report.same_values)


def test_random_perturbations_keep_values_and_best_responses():
    rng = np.random.default_rng(7)
    checked = 0
    for seed in range(40):
        made = make_random_game(seed, n=3, input_dims=(2, 1))
        if made is None:
            continue
        game, observed = made
        L = rng.standard_normal((1, 1))
        M = rng.standard_normal((2, 2))
        table = [[None, game.costs.R[0][1] + L * L.T], [game.costs.R[1][0] + 0.5 * (M + M.T), None]]
        equivalent_costs = generate_equivalent(game, observed, table)
        other = LQGame(game.dynamics, equivalent_costs)
        P1, P2 = value_kernels(game, observed).P, value_kernels(other, observed).P
        for i in range(2):
            assert np.linalg.norm(P1[i] - P2[i]) <= 1e-10 * max(1.0, np.linalg.norm(P1[i]))
            K1 = best_response_gain(game.dynamics, game.costs.R[i][i], P1[i], observed, i)
            K2 = best_response_gain(other.dynamics, other.costs.R[i][i], P2[i], observed, i)
            assert np.linalg.norm(K1 - K2) <= 1e-10
        checked += 1
        if checked == 10:
            break
    assert checked == 10


def test_game_is_equivalent_to_itself(sim2_game, sim2_equilibrium):
    equivalent, report = verify_equivalent(sim2_game, sim2_game, sim2_equilibrium)
    assert equivalent
    assert report.value_differences == [0.0, 0.0]
    assert report.spectral_radius < 1.0


def test_recovered_game_shares_the_equilibrium(sim1_game, sim1_result, sim1_observed):
    recovered = LQGame(sim1_game.dynamics, sim1_result.costs)
    equivalent, report = verify_equivalent(sim1_game, recovered, sim1_observed, gain_tol=0.05)
    assert equivalent
    assert max(report.gain_errors[1]) <= 0.05


def test_shifted_state_weight_is_not_equivalent(sim2_game, sim2_equilibrium):
    costs = sim2_game.costs.with_q((sim2_game.costs.Q[0] + np.eye(2), sim2_game.costs.Q[1]))
    equivalent, report = verify_equivalent(sim2_game, LQGame(sim2_game.dynamics, costs), sim2_equilibrium)
    assert not equivalent
    assert report.gain_errors[1][0] > 1e-8
    assert report.to_dict()["players"][0]["player"] == 1


def test_different_dynamics_rejected(sim2_game, sim2_equilibrium):
    dyn = GameDynamics(sim2_game.dynamics.A * 0.5, sim2_game.dynamics.B)
    with pytest.raises(InvalidParameters):
        verify_equivalent(sim2_game, LQGame(dyn, sim2_game.costs), sim2_equilibrium)


def test_unstable_profile_rejected(sim1_game, sim1_dynamics):
    with pytest.raises(UnstableClosedLoop):
        verify_equivalent(sim1_game, sim1_game, FeedbackProfile.zeros(sim1_dynamics))


def test_indefinite_result_only_rejected_on_request(sim2_game, sim2_equilibrium):
    table = _keep_all(2)
    table[0][1] = 1000.0
    costs = generate_equivalent(sim2_game, sim2_equilibrium, table)
    assert np.min(np.linalg.eigvalsh(costs.Q[0])) < 0.0
    with pytest.raises(InvalidParameters):
        generate_equivalent(sim2_game, sim2_equilibrium, table, require_psd=True)


def test_replacement_table_must_be_square(sim2_game, sim2_equilibrium):
    with pytest.raises(DimensionMismatch):
        generate_equivalent(sim2_game, sim2_equilibrium, [[None, None]])


def test_replacement_weight_must_be_symmetric():
    dyn = GameDynamics(0.5 * np.eye(2), (np.eye(2), np.array([[1.0], [0.0]])))
    costs = CostParameters((np.eye(2), np.eye(2)),
                           ((np.eye(2), 0.5 * np.eye(1)), (0.5 * np.eye(2), np.eye(1))))
    game = LQGame(dyn, costs)
    table = [[None, None], [[[1.0, 2.0], [0.0, 1.0]], None]]
    with pytest.raises(InvalidParameters):
        generate_equivalent(game, FeedbackProfile.zeros(dyn), table)
