"""Tests for the game types, Stein solver, GARE helpers and the forward Nash solver."""

import numpy as np
import pytest

from scipy.linalg import solve_discrete_are

from lq_inverse.exceptions import (DimensionMismatch, DivergenceRisk, InvalidParameters, UnstableClosedLoop)
from lq_inverse.game import (CostParameters, FeedbackProfile, GameDynamics, InverseProblem, LQGame, as_matrix,
                             best_response_gain, certify_nash, closed_loop, evaluate_cost, gare_residual,
                             is_stabilizing, min_eigenvalue, solve_forward_ne, solve_stein, stabilizing_profile,
                             value_kernels)


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

def test_as_matrix_scalar_becomes_1x1():
    X = as_matrix(2.5)
    assert X.shape == (1, 1)
    assert X[0, 0] == 2.5
    assert not X.flags.writeable


def test_dynamics_reshapes_vector_input():
    dyn = GameDynamics(np.eye(2), (np.array([1.0, 2.0]),))
    assert dyn.B[0].shape == (2, 1)
    assert dyn.n_states == 2
    assert dyn.input_dims == (1,)


def test_dynamics_rejects_wrong_input_rows():
    with pytest.raises(DimensionMismatch) as exc:
        GameDynamics(np.eye(2), (np.ones((2, 1)), np.ones((3, 1))))
    assert exc.value.player == 1


def test_profile_dimension_check(sim2_dynamics):
    prof = FeedbackProfile((np.zeros((1, 2)), np.zeros((1, 3))))
    with pytest.raises(DimensionMismatch):
        prof.check_dimensions(sim2_dynamics)


def test_costs_reject_asymmetric_q():
    with pytest.raises(InvalidParameters):
        CostParameters((np.array([[1.0, 2.0], [0.0, 1.0]]),), ((np.eye(1),),))


def test_costs_reject_singular_own_input_weight():
    with pytest.raises(InvalidParameters):
        CostParameters((np.eye(2),), ((np.zeros((1, 1)),),))


def test_costs_validate_rejects_indefinite_q():
    costs = CostParameters((np.diag([1.0, -1.0]),), ((np.eye(1),),))
    with pytest.raises(InvalidParameters):
        costs.validate()


def test_inverse_problem_broadcasts_scalars(sim2_observed):
    problem = InverseProblem.build(sim2_observed, R=[[1.0, 1.0], [1.0, 1.0]], alpha=2.0, rho=1e-3)
    assert problem.alpha == (2.0, 2.0)
    assert problem.rho == (1e-3, 1e-3)
    np.testing.assert_allclose(problem.Q0[0], 0.1 * np.eye(2))


def test_inverse_problem_rejects_nonpositive_rho(sim2_observed):
    with pytest.raises(InvalidParameters):
        InverseProblem.build(sim2_observed, R=[[1.0, 1.0], [1.0, 1.0]], rho=0.0)


def test_inverse_problem_rejects_wrong_alpha_length(sim2_observed):
    with pytest.raises(DimensionMismatch):
        InverseProblem.build(sim2_observed, R=[[1.0, 1.0], [1.0, 1.0]], alpha=[1.0, 1.0, 1.0])


# ---------------------------------------------------------------------------
# Closed loop
# ---------------------------------------------------------------------------

def test_closed_loop_matches_manual_sum(sim2_dynamics, sim2_observed):
    A, (B1, B2), (K1, K2) = sim2_dynamics.A, sim2_dynamics.B, sim2_observed.K
    np.testing.assert_allclose(closed_loop(sim2_dynamics, sim2_observed), A - B1 @ K1 - B2 @ K2)
    np.testing.assert_allclose(closed_loop(sim2_dynamics, sim2_observed, exclude=0), A - B2 @ K2)


def test_observed_gains_stabilize(sim1_dynamics, sim1_observed, sim2_dynamics, sim2_observed):
    assert is_stabilizing(sim1_dynamics, sim1_observed)[0]
    stable, radius = is_stabilizing(sim2_dynamics, sim2_observed)
    assert stable
    assert radius == pytest.approx(0.60, abs=0.02)


def test_zero_gains_do_not_stabilize_unstable_plant(sim1_dynamics):
    stable, radius = is_stabilizing(sim1_dynamics, FeedbackProfile.zeros(sim1_dynamics))
    assert not stable
    assert radius > 1.0


def test_stabilizing_profile_for_unstable_plant(sim1_dynamics):
    prof = stabilizing_profile(sim1_dynamics)
    prof.check_dimensions(sim1_dynamics)
    assert is_stabilizing(sim1_dynamics, prof)[0]


def test_stabilizing_profile_is_zero_for_stable_plant(sim2_dynamics):
    prof = stabilizing_profile(sim2_dynamics)
    assert all(np.all(k == 0.0) for k in prof.K)


# ---------------------------------------------------------------------------
# Stein equations
# ---------------------------------------------------------------------------

def test_stein_scalar():
    P = solve_stein(np.array([[0.5]]), np.array([[1.0]]))
    assert P[0, 0] == pytest.approx(4.0 / 3.0, rel=1e-14)


def test_stein_zero_transition_returns_constant_term():
    M = np.array([[2.0, 0.5], [0.5, 1.0]])
    np.testing.assert_allclose(solve_stein(np.zeros((2, 2)), M), M, atol=1e-14)


def test_stein_rejects_unstable_transition():
    with pytest.raises(UnstableClosedLoop) as exc:
        solve_stein(np.diag([1.2, 0.3]), np.eye(2))
    assert exc.value.spectral_radius == pytest.approx(1.2)


def test_stein_rejects_asymmetric_constant():
    with pytest.raises(InvalidParameters):
        solve_stein(0.5 * np.eye(2), np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_stein_matches_truncated_series():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        n = int(rng.integers(1, 5))
        F = rng.standard_normal((n, n))
        F *= rng.uniform(0.1, 0.9) / max(np.max(np.abs(np.linalg.eigvals(F))), 1e-6)
        L = rng.standard_normal((n, n))
        M = L @ L.T
        series = np.zeros((n, n))
        term = M.copy()
        for _ in range(600):
            series += term
            term = F.T @ term @ F
        P = solve_stein(F, M)
        assert np.linalg.norm(P - series) <= 1e-8 * np.linalg.norm(series)


def test_stein_is_monotone_in_constant_term():
    rng = np.random.default_rng(7)
    for _ in range(50):
        n = int(rng.integers(1, 5))
        F = rng.standard_normal((n, n))
        F *= rng.uniform(0.1, 0.95) / max(np.max(np.abs(np.linalg.eigvals(F))), 1e-6)
        L, E = rng.standard_normal((n, n)), rng.standard_normal((n, n))
        M = L @ L.T
        P_low, P_high = solve_stein(F, M), solve_stein(F, M + E @ E.T)
        assert min_eigenvalue(P_high - P_low) >= -1e-10 * max(1.0, np.linalg.norm(P_high))


# ---------------------------------------------------------------------------
# GAREs and best responses
# ---------------------------------------------------------------------------

def test_value_kernels_zero_gare_residual(sim1_game, sim1_observed):
    values = value_kernels(sim1_game, sim1_observed)
    for i in range(sim1_game.n_players):
        residual = gare_residual(sim1_game, sim1_observed, values.P[i], i)
        assert np.linalg.norm(residual) <= 1e-9 * max(1.0, np.linalg.norm(values.P[i]))
    assert values.is_positive_definite()


def test_forward_solver_matches_printed_gains_two_players(sim2_game, sim2_golden):
    gains, values = solve_forward_ne(sim2_game)
    for K, K_printed in zip(gains.K, sim2_golden["observed_gains"]):
        np.testing.assert_allclose(K, np.array(K_printed), atol=1e-3)
    assert values.is_positive_definite()


def test_forward_solver_matches_printed_gains_four_players(sim1_game, sim1_observed, sim1_golden):
    gains, _ = solve_forward_ne(sim1_game, initial_profile=sim1_observed)
    for K, K_printed in zip(gains.K, sim1_golden["observed_gains"]):
        np.testing.assert_allclose(K, np.array(K_printed), atol=1e-3)


def test_best_response_reproduces_equilibrium(sim2_game):
    gains, values = solve_forward_ne(sim2_game)
    for i in range(sim2_game.n_players):
        K_br = best_response_gain(sim2_game.dynamics, sim2_game.costs.R[i][i], values.P[i], gains, i)
        np.testing.assert_allclose(K_br, gains.K[i], atol=1e-9)


def test_certificate_passes_at_equilibrium(sim2_game):
    gains, _ = solve_forward_ne(sim2_game)
    cert = certify_nash(sim2_game, gains)
    assert cert.passed
    assert cert.to_dict()["players"][0]["player"] == 1


def test_certificate_fails_off_equilibrium(sim2_game):
    gains, _ = solve_forward_ne(sim2_game)
    perturbed = gains.with_gain(0, gains.K[0] + 0.05)
    cert = certify_nash(sim2_game, perturbed)
    assert not cert.passed
    assert not cert.player_passed[0]


def test_certificate_rejects_unstable_profile(sim1_game, sim1_dynamics):
    with pytest.raises(UnstableClosedLoop):
        certify_nash(sim1_game, FeedbackProfile.zeros(sim1_dynamics))


def test_best_response_invariant_under_cost_scaling(sim2_game):
    gains, values = solve_forward_ne(sim2_game)
    c = 7.5
    costs = sim2_game.costs
    scaled = LQGame(sim2_game.dynamics, CostParameters(tuple(c * q for q in costs.Q),
                                                       tuple(tuple(c * r for r in row) for row in costs.R)))
    scaled_values = value_kernels(scaled, gains)
    for i in range(scaled.n_players):
        np.testing.assert_allclose(scaled_values.P[i], c * values.P[i], rtol=1e-10)
        K_scaled = best_response_gain(scaled.dynamics, scaled.costs.R[i][i], scaled_values.P[i], gains, i)
        K = best_response_gain(sim2_game.dynamics, costs.R[i][i], values.P[i], gains, i)
        np.testing.assert_allclose(K_scaled, K, atol=1e-10)
    scaled_gains, _ = solve_forward_ne(scaled)
    for K_scaled, K in zip(scaled_gains.K, gains.K):
        np.testing.assert_allclose(K_scaled, K, atol=1e-8)


def test_single_player_forward_solve_matches_dare(sim2_game):
    A, B = sim2_game.dynamics.A, sim2_game.dynamics.B[0]
    Q, R = sim2_game.costs.Q[0], sim2_game.costs.R[0][0]
    game = LQGame(GameDynamics(A, (B,)), CostParameters((Q,), ((R,),)))
    gains, values = solve_forward_ne(game)
    P = solve_discrete_are(A, B, Q, R)
    K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    np.testing.assert_allclose(values.P[0], P, rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(gains.K[0], K, atol=1e-8)


def test_certificate_passes_exactly_at_forward_fixed_points(sim2_game):
    gains, _ = solve_forward_ne(sim2_game)
    for i, eps in [(0, 0.0), (0, 1e-3), (0, 0.05), (1, 1e-3), (1, 0.05)]:
        prof = gains.with_gain(i, gains.K[i] + eps)
        values = value_kernels(sim2_game, prof)
        proposal = FeedbackProfile(tuple(best_response_gain(sim2_game.dynamics, sim2_game.costs.R[j][j],
                                                            values.P[j], prof, j) for j in range(2)))
        is_fixed_point = max(proposal.distance(prof)) < 1e-8
        assert certify_nash(sim2_game, prof, values=values).passed == is_fixed_point
        assert is_fixed_point == (eps == 0.0)


def test_gare_residual_detects_shifted_value_kernel(sim2_game):
    gains, values = solve_forward_ne(sim2_game)
    for i in range(sim2_game.n_players):
        shifted = values.P[i] + 0.1 * np.eye(2)
        assert np.linalg.norm(gare_residual(sim2_game, gains, shifted, i)) >= 0.05


# ---------------------------------------------------------------------------
# Costs
# ---------------------------------------------------------------------------

def test_long_horizon_cost_matches_value_kernel(sim2_game, sim2_observed):
    x0 = np.array([1.0, -0.5])
    costs = evaluate_cost(sim2_game, sim2_observed, x0, horizon=400)
    values = value_kernels(sim2_game, sim2_observed)
    for c, P in zip(costs, values.P):
        assert c == pytest.approx(x0 @ P @ x0, rel=1e-10)


def test_cost_refuses_long_horizon_when_unstable(sim1_game, sim1_dynamics):
    with pytest.raises(DivergenceRisk):
        evaluate_cost(sim1_game, FeedbackProfile.zeros(sim1_dynamics), [1.0, 0.0], horizon=10 ** 7)


def test_cost_allows_short_horizon_when_unstable(sim1_game, sim1_dynamics):
    costs = evaluate_cost(sim1_game, FeedbackProfile.zeros(sim1_dynamics), [1.0, 0.0], horizon=5)
    assert all(np.isfinite(costs))


def test_unilateral_deviation_never_lowers_own_cost(sim2_game):
    gains, _ = solve_forward_ne(sim2_game)
    rng = np.random.default_rng(11)
    x0 = np.array([1.0, -0.5])
    equilibrium = evaluate_cost(sim2_game, gains, x0, horizon=1000)
    for _ in range(10):
        for i in range(sim2_game.n_players):
            D = rng.standard_normal(gains.K[i].shape)
            deviated = gains.with_gain(i, gains.K[i] + 0.05 * D / np.linalg.norm(D))
            assert is_stabilizing(sim2_game.dynamics, deviated)[0]
            cost = evaluate_cost(sim2_game, deviated, x0, horizon=1000)[i]
            assert cost >= equilibrium[i] - 1e-9 * abs(equilibrium[i])


def test_zero_initial_state_costs_nothing(sim2_game, sim2_observed):
    assert evaluate_cost(sim2_game, sim2_observed, [0.0, 0.0], horizon=50) == [0.0, 0.0]
