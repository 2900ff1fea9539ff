import os
import sys
import json
import pytest
import logging

import numpy as np

# Add the parent directory to the Python path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from lq_inverse.game import CostParameters, GameDynamics, InverseProblem, LQGame, solve_forward_ne
from lq_inverse.exceptions import LQGameError
from lq_inverse.session import build_dynamics, build_game, build_problem, load_session, observed_profile
from lq_inverse.trajectories import NoiseConfig, collect_pairs
from lq_inverse.utils import fixture_path

# Set up logging for tests
logging.basicConfig(level=logging.INFO,
                    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
                    handlers=[logging.StreamHandler()])

SNAPSHOT_DIR = os.path.join(os.path.dirname(__file__), 'golden_snapshots')


def _load_snapshot(name):
    with open(os.path.join(SNAPSHOT_DIR, name)) as f:
        return json.load(f)


# ---------------------------------------------------------------------------
# Four-player game with a model-based inverse setup (sim1)
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def sim1_config():
    return load_session(fixture_path("sim1"))


@pytest.fixture(scope="session")
def sim1_dynamics(sim1_config):
    return build_dynamics(sim1_config.game)


@pytest.fixture(scope="session")
def sim1_game(sim1_config):
    """The game whose equilibrium was observed."""
    return build_game(sim1_config.game)


@pytest.fixture(scope="session")
def sim1_observed(sim1_config):
    return observed_profile(sim1_config)


@pytest.fixture(scope="session")
def sim1_problem(sim1_config, sim1_observed, sim1_dynamics):
    return build_problem(sim1_config, sim1_observed, sim1_dynamics)


@pytest.fixture(scope="session")
def sim1_result(sim1_problem):
    from lq_inverse.model_based import mb_run
    return mb_run(sim1_problem)


@pytest.fixture(scope="session")
def sim1_golden():
    return _load_snapshot('sim1_printed.json')


# ---------------------------------------------------------------------------
# Two-player game with a model-free inverse setup (sim2)
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def sim2_config():
    return load_session(fixture_path("sim2"))


@pytest.fixture(scope="session")
def sim2_dynamics(sim2_config):
    return build_dynamics(sim2_config.game)


@pytest.fixture(scope="session")
def sim2_game(sim2_config):
    return build_game(sim2_config.game)


@pytest.fixture(scope="session")
def sim2_observed(sim2_config):
    return observed_profile(sim2_config)


@pytest.fixture(scope="session")
def sim2_problem(sim2_config, sim2_observed):
    """Inverse problem without the plant, as the model-free solver sees it."""
    return build_problem(sim2_config, sim2_observed)


@pytest.fixture(scope="session")
def sim2_noise():
    return NoiseConfig(kind="sinusoidal-sum", amplitude=5e-5, num_frequencies=10_000, seed=0)


@pytest.fixture(scope="session")
def sim2_data(sim2_dynamics, sim2_observed, sim2_noise):
    return collect_pairs(sim2_dynamics, sim2_observed, length=60, cfg=sim2_noise)


@pytest.fixture(scope="session")
def sim2_golden():
    return _load_snapshot('sim2_printed.json')


# ---------------------------------------------------------------------------
# Random games
# ---------------------------------------------------------------------------

def make_random_game(seed, n=2, input_dims=(1, 1)):
    """Random stable 2-player game and its forward-solved equilibrium, or None if the solve fails."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    A = 0.9 * A / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-3)
    B = [rng.standard_normal((n, m)) for m in input_dims]
    Q = []
    for _ in input_dims:
        L = rng.standard_normal((n, n))
        Q.append(L @ L.T + np.eye(n))
    R = [[np.eye(m) if i == j else 0.5 * np.eye(m) for j, m in enumerate(input_dims)]
         for i in range(len(input_dims))]
    game = LQGame(GameDynamics(A, tuple(B)), CostParameters(tuple(Q), tuple(tuple(r) for r in R)))
    try:
        observed, _ = solve_forward_ne(game)
    except LQGameError:
        return None
    return game, observed


def random_inverse_problem(game, observed, rho=1e-3, alpha=1.0, max_iterations=20_000):
    """Inverse problem on a random game: true R table, Q^(0) = 0.1 I."""
    return InverseProblem.build(observed, R=game.costs.R, q0_scale=0.1, alpha=alpha, rho=rho,
                                max_iterations=max_iterations, dynamics=game.dynamics)


@pytest.fixture
def output_dir(tmp_path):
    out = tmp_path / "results"
    out.mkdir()
    return out
