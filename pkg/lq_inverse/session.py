"""Batch sessions: validate a session file, run one mode, write artifacts.

Artifacts in the output directory:

- ``result.json``: recovered or computed matrices, iteration counts, certificates
- ``trace.csv`` / ``trace.parquet``: per-iteration convergence trace (inverse modes)
- ``trajectories/player_<p>.csv``: simulated data of a model-free run
- ``sweep.csv``: one row per seed when ``seeds`` is set for inverse-mf
- ``error.json``: machine-readable error when a run fails
"""

import json
import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, ValidationError, model_validator

from lq_inverse.const import (DEFAULT_ALPHA, DEFAULT_MAX_ITERATIONS, DEFAULT_NOISE_AMPLITUDE, DEFAULT_NUM_FREQUENCIES,
                              DEFAULT_Q0_SCALE, DEFAULT_RHO, FORWARD_MAX_ITERATIONS, FORWARD_TOL)
from lq_inverse.equivalence import generate_equivalent, verify_equivalent
from lq_inverse.exceptions import ConfigError, LQGameError
from lq_inverse.game import (CostParameters, FeedbackProfile, GameDynamics, InverseProblem, LQGame, certify_nash,
                             solve_forward_ne, spectral_radius, closed_loop)
from lq_inverse.model_based import gain_error_bound, gare_pair_residuals, mb_run
from lq_inverse.model_free import mf_run
from lq_inverse.trace import IterationTrace
from lq_inverse.trajectories import NoiseConfig, Trajectory, collect_pairs, read_trajectory_csv, write_trajectory_csv
from lq_inverse.utils import (get_config, load_json, matrices_to_json, matrix_from_json, matrix_to_json, save_frame,
                              save_json, table_to_json)

logger = logging.getLogger("lq_inverse")

MODES = ("forward", "inverse-mb", "inverse-mf", "equiv-gen", "verify")
EXIT_OK = 0
EXIT_NOT_EQUIVALENT = 7
EXIT_INTERNAL = 6


# ---------------------------------------------------------------------------
# Session schema
# ---------------------------------------------------------------------------

class MatrixObject(BaseModel):
    model_config = ConfigDict(extra="forbid")
    dims: Optional[List[int]] = Field(None, description="[rows, cols]; checked against data when given")
    data: List[List[float]] = Field(..., description="Row-major rows")


MatrixSpec = Union[float, List[List[float]], List[float], MatrixObject]


class GameSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")
    A: MatrixSpec = Field(..., description="State matrix (n x n)")
    B: List[MatrixSpec] = Field(..., min_length=1, description="Input matrix of every player (n x m_i)")
    Q: Optional[List[MatrixSpec]] = Field(None, description="State weights Q_i, needed to solve or verify the game")
    R: Optional[List[List[MatrixSpec]]] = Field(None, description="Input weights R_ij as an N x N table")


class ForwardSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")
    initial_profile: Optional[List[MatrixSpec]] = Field(None, description="Stabilizing starting gains")
    tol: PositiveFloat = FORWARD_TOL
    max_iterations: int = Field(FORWARD_MAX_ITERATIONS, ge=1)
    damping: float = Field(1.0, gt=0.0, le=1.0)


class AlgorithmSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")
    alpha: Union[PositiveFloat, List[PositiveFloat]] = Field(DEFAULT_ALPHA, description="Step size, scalar or per player")
    rho: Union[PositiveFloat, List[PositiveFloat]] = Field(DEFAULT_RHO, description="Stop tolerance on ||Q step||_F")
    max_iterations: int = Field(DEFAULT_MAX_ITERATIONS, ge=1)
    Q0: Optional[List[MatrixSpec]] = Field(None, description="Initial Q_i; q0_scale * I when omitted")
    q0_scale: float = Field(DEFAULT_Q0_SCALE, ge=0.0)
    R: Optional[List[List[MatrixSpec]]] = Field(None, description="Fixed R table of the inverse problem")
    freeze_converged: bool = False
    next_action: Literal["policy", "recorded"] = "policy"


class NoiseSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: Literal["sinusoidal-sum", "gaussian", "decaying"] = "sinusoidal-sum"
    amplitude: float = Field(DEFAULT_NOISE_AMPLITUDE, ge=0.0)
    num_frequencies: int = Field(DEFAULT_NUM_FREQUENCIES, ge=1)
    decay: float = Field(1.0, gt=0.0, le=1.0)


class TrajectorySpec(BaseModel):
    model_config = ConfigDict(extra="forbid")
    excited_player: int = Field(..., ge=1, description="1-based player index")
    csv: Optional[str] = Field(None, description="CSV with columns k, x_*, u_* (relative to the session file)")
    states: Optional[MatrixSpec] = None
    inputs: Optional[MatrixSpec] = None

    @model_validator(mode="after")
    def _one_source(self) -> "TrajectorySpec":
        inline = self.states is not None and self.inputs is not None
        if bool(self.csv) == inline:
            raise ValueError("give either csv or states + inputs")
        return self


class DataSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")
    x0: Optional[List[float]] = None
    length: Optional[int] = Field(None, ge=1)
    noise: NoiseSpec = NoiseSpec()
    trajectories: Optional[List[TrajectorySpec]] = Field(None, description="Recorded data used instead of simulation")


class EquivalenceSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")
    R: List[List[Optional[MatrixSpec]]] = Field(..., description="Replacement R'_ij; null or diagonal keeps R_ij")
    require_psd: bool = False


class VerifySpec(BaseModel):
    model_config = ConfigDict(extra="forbid")
    gain_tol: PositiveFloat = 1e-8
    value_tol: PositiveFloat = 1e-9


class OutputSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")
    dir: Optional[str] = None
    parquet: bool = True
    write_trajectories: bool = True


class SessionConfig(BaseModel):
    """One batch session. Player indices in files are 1-based."""
    model_config = ConfigDict(extra="forbid")

    mode: Literal["forward", "inverse-mb", "inverse-mf", "equiv-gen", "verify"]
    game: Optional[GameSpec] = None
    observed_gains: Optional[List[MatrixSpec]] = Field(None, description="K_io; solved from the game when omitted")
    forward: ForwardSpec = ForwardSpec()
    algorithm: AlgorithmSpec = AlgorithmSpec()
    data: DataSpec = DataSpec()
    equivalence: Optional[EquivalenceSpec] = None
    other_game: Optional[GameSpec] = None
    verify: VerifySpec = VerifySpec()
    seed: int = Field(0, ge=0, lt=2 ** 64)
    seeds: Optional[List[int]] = Field(None, description="Seed sweep for inverse-mf")
    output: OutputSpec = OutputSpec()

    @model_validator(mode="after")
    def _mode_requirements(self) -> "SessionConfig":
        has_costs = self.game is not None and self.game.Q is not None and self.game.R is not None
        if self.mode != "inverse-mf" or not self.data.trajectories:
            if self.game is None:
                raise ValueError(f"mode {self.mode} needs a game")
        if self.mode in ("forward", "verify", "equiv-gen") and not has_costs:
            raise ValueError(f"mode {self.mode} needs game.Q and game.R")
        if self.mode in ("inverse-mb", "inverse-mf"):
            if self.algorithm.R is None:
                raise ValueError(f"mode {self.mode} needs algorithm.R")
            if self.observed_gains is None and not has_costs:
                raise ValueError("observed_gains or game.Q and game.R are required")
        if self.mode == "equiv-gen" and self.equivalence is None:
            raise ValueError("mode equiv-gen needs an equivalence section")
        if self.mode == "verify" and (self.other_game is None or self.other_game.Q is None or self.other_game.R is None):
            raise ValueError("mode verify needs other_game with Q and R")
        if self.seeds is not None and any(not 0 <= s < 2 ** 64 for s in self.seeds):
            raise ValueError("seeds must be unsigned 64-bit integers")
        return self


def session_schema() -> Dict[str, Any]:
    """JSON schema shipped as lq_inverse/schema/session.schema.json."""
    return SessionConfig.model_json_schema()


def parse_session(raw: Dict[str, Any], mode: Optional[str] = None, seed: Optional[int] = None) -> SessionConfig:
    """Validate a session dict; ``mode`` and ``seed`` override the file."""
    raw = dict(raw)
    if mode is not None:
        if raw.get("mode") not in (None, mode):
            logger.warning(f"Session file mode {raw.get('mode')} overridden by {mode}")
        raw["mode"] = mode
    if seed is not None:
        raw["seed"] = seed
    try:
        return SessionConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"invalid session configuration: {e.error_count()} error(s)\n{e}") from e


def load_session(path: Union[str, Path], mode: Optional[str] = None, seed: Optional[int] = None) -> SessionConfig:
    path = Path(path)
    try:
        raw = load_json(path)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from e
    if raw is None:
        raise ConfigError(f"session file not found: {path}")
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} must contain a JSON object")
    config = parse_session(raw, mode=mode, seed=seed)
    # Relative trajectory CSV paths resolve against the session file.
    if config.data.trajectories:
        for entry in config.data.trajectories:
            if entry.csv and not Path(entry.csv).is_absolute():
                entry.csv = str(path.parent / entry.csv)
    return config


# ---------------------------------------------------------------------------
# Domain objects from a session
# ---------------------------------------------------------------------------

def _matrix(value: Any, name: str) -> np.ndarray:
    if isinstance(value, MatrixObject):
        value = value.model_dump()
    return matrix_from_json(value, name)


def _matrices(values: List[Any], name: str) -> Tuple[np.ndarray, ...]:
    return tuple(_matrix(v, f"{name}_{i + 1}") for i, v in enumerate(values))


def _table(rows: List[List[Any]], name: str) -> Tuple[Tuple[np.ndarray, ...], ...]:
    return tuple(tuple(_matrix(v, f"{name}_{i + 1}{j + 1}") for j, v in enumerate(row)) for i, row in enumerate(rows))


def build_dynamics(section: GameSpec) -> GameDynamics:
    return GameDynamics(_matrix(section.A, "A"), _matrices(section.B, "B"))


def build_game(section: GameSpec) -> LQGame:
    costs = CostParameters(_matrices(section.Q, "Q"), _table(section.R, "R")).validate()
    return LQGame(build_dynamics(section), costs)


def game_to_json(dyn: GameDynamics, costs: CostParameters) -> Dict[str, Any]:
    """Game section in the session format, so results can be fed back as ``game`` or ``other_game``."""
    return {"A": matrix_to_json(dyn.A), "B": matrices_to_json(dyn.B),
            "Q": matrices_to_json(costs.Q), "R": table_to_json(costs.R)}


def observed_profile(config: SessionConfig) -> FeedbackProfile:
    """Observed gains from the session, or the Nash equilibrium of the session's game."""
    if config.observed_gains is not None:
        return FeedbackProfile(_matrices(config.observed_gains, "K"))
    game = build_game(config.game)
    initial = None
    if config.forward.initial_profile is not None:
        initial = FeedbackProfile(_matrices(config.forward.initial_profile, "K"))
    logger.info("No observed gains given, solving the game for its Nash equilibrium")
    gains, _ = solve_forward_ne(game, initial, tol=config.forward.tol, max_iterations=config.forward.max_iterations,
                                damping=config.forward.damping)
    return gains


def build_problem(config: SessionConfig, observed: FeedbackProfile,
                  dynamics: Optional[GameDynamics] = None) -> InverseProblem:
    algo = config.algorithm
    return InverseProblem.build(observed,
                                R=_table(algo.R, "R"),
                                Q0=_matrices(algo.Q0, "Q0") if algo.Q0 is not None else None,
                                q0_scale=algo.q0_scale,
                                alpha=algo.alpha,
                                rho=algo.rho,
                                max_iterations=algo.max_iterations,
                                dynamics=dynamics,
                                freeze_converged=algo.freeze_converged)


def load_trajectories(config: SessionConfig, observed: FeedbackProfile) -> List[Trajectory]:
    out = []
    for entry in config.data.trajectories:
        i = entry.excited_player - 1
        if i >= observed.n_players:
            raise ConfigError(f"trajectory for player {entry.excited_player} but only {observed.n_players} players")
        if entry.csv:
            out.append(read_trajectory_csv(entry.csv, i, observed.K[i]))
        else:
            out.append(Trajectory.from_dict({**entry.model_dump(exclude={"csv"}),
                                             "policy_gain": matrix_to_json(observed.K[i])}))
    return out


def validate_session(config: SessionConfig) -> None:
    """Build every domain object the session needs without running any solver."""
    game = None
    if config.game is not None:
        build_dynamics(config.game)
        if config.game.Q is not None and config.game.R is not None:
            game = build_game(config.game)
    if config.mode in ("inverse-mb", "inverse-mf", "equiv-gen") and config.observed_gains is not None:
        observed = FeedbackProfile(_matrices(config.observed_gains, "K"))
        if game is not None:
            observed.check_dimensions(game.dynamics)
        if config.mode != "equiv-gen":
            build_problem(config, observed, build_dynamics(config.game) if config.game else None)
    if config.mode == "verify":
        build_game(config.other_game)


# ---------------------------------------------------------------------------
# Modes
# ---------------------------------------------------------------------------

def _trace_result(trace: IterationTrace) -> Dict[str, Any]:
    summary = trace.summary()
    summary["trace_file"] = "trace.csv"
    return summary


def _write_trace(trace: IterationTrace, out_dir: Path, config: SessionConfig) -> None:
    df = trace.to_frame()
    save_frame(df, out_dir / "trace.csv", out_dir / "trace.parquet" if config.output.parquet else None)


def run_forward(config: SessionConfig, out_dir: Path) -> Tuple[int, Dict[str, Any]]:
    game = build_game(config.game)
    initial = None
    if config.forward.initial_profile is not None:
        initial = FeedbackProfile(_matrices(config.forward.initial_profile, "K"))
    gains, values = solve_forward_ne(game, initial, tol=config.forward.tol,
                                     max_iterations=config.forward.max_iterations, damping=config.forward.damping)
    cert = certify_nash(game, gains, values)
    return EXIT_OK, {
        "game": game_to_json(game.dynamics, game.costs),
        "K": matrices_to_json(gains.K),
        "P": matrices_to_json(values.P),
        "spectral_radius": spectral_radius(closed_loop(game.dynamics, gains)),
        "certificate": cert.to_dict(),
    }


def _certify_recovered(dyn: GameDynamics, costs: CostParameters, observed: FeedbackProfile,
                       problem: InverseProblem) -> Dict[str, Any]:
    # Slack of 2 over the termination bound: the certificate re-solves P from the final Q.
    cert = certify_nash(LQGame(dyn, costs), observed, gain_tol=[2.0 * b for b in gain_error_bound(problem)])
    return cert.to_dict()


def run_inverse_mb(config: SessionConfig, out_dir: Path) -> Tuple[int, Dict[str, Any]]:
    dyn = build_dynamics(config.game)
    observed = observed_profile(config)
    problem = build_problem(config, observed, dyn)
    costs, values, gains, trace = mb_run(problem, progress=get_config().progress)
    _write_trace(trace, out_dir, config)
    residuals = gare_pair_residuals(dyn, observed, costs, values, gains)
    return EXIT_OK, {
        **_trace_result(trace),
        "game": game_to_json(dyn, costs),
        "observed_gains": matrices_to_json(observed.K),
        "Q": matrices_to_json(costs.Q),
        "R": table_to_json(costs.R),
        "P": matrices_to_json(values.P),
        "K": matrices_to_json(gains.K),
        "gain_error_bound": gain_error_bound(problem),
        "gare_pair_residuals": [{"player": i + 1, "modified_gare": a, "modified_gain_gare": b}
                            for i, (a, b) in enumerate(residuals)],
        "certificate": _certify_recovered(dyn, costs, observed, problem),
    }


def _noise_config(config: SessionConfig, seed: int) -> NoiseConfig:
    noise = config.data.noise
    return NoiseConfig(kind=noise.kind, amplitude=noise.amplitude, num_frequencies=noise.num_frequencies,
                       seed=seed, decay=noise.decay)


def run_inverse_mf(config: SessionConfig, out_dir: Optional[Path], seed: Optional[int] = None
                   ) -> Tuple[int, Dict[str, Any]]:
    seed = config.seed if seed is None else seed
    dyn = build_dynamics(config.game) if config.game is not None else None
    observed = observed_profile(config)
    if config.data.trajectories:
        data = load_trajectories(config, observed)
        source = "recorded"
    else:
        data = collect_pairs(dyn, observed, x0=config.data.x0, length=config.data.length,
                             cfg=_noise_config(config, seed))
        source = "simulated"
        if out_dir is not None and config.output.write_trajectories:
            for traj in data:
                write_trajectory_csv(traj, out_dir / "trajectories" / f"player_{traj.excited_player + 1}.csv")
    # The model-free solver gets no plant.
    problem = build_problem(config, observed)
    costs, kernels, gains, trace = mf_run(problem, data, next_action=config.algorithm.next_action,
                                          progress=get_config().progress and out_dir is not None)
    if out_dir is not None:
        _write_trace(trace, out_dir, config)
    result = {
        **_trace_result(trace),
        "seed": seed,
        "data_source": source,
        "samples": [t.length for t in data],
        "observed_gains": matrices_to_json(observed.K),
        "Q": matrices_to_json(costs.Q),
        "R": table_to_json(costs.R),
        "H": matrices_to_json([k.H for k in kernels]),
        "K": matrices_to_json(gains.K),
        "regression_residuals": [k.residual_norm for k in kernels],
        "gain_error_bound": gain_error_bound(problem),
        "certificate": None,
    }
    if dyn is not None:
        result["game"] = game_to_json(dyn, costs)
        result["certificate"] = _certify_recovered(dyn, costs, observed, problem)
    return EXIT_OK, result


def run_equiv_gen(config: SessionConfig, out_dir: Path) -> Tuple[int, Dict[str, Any]]:
    game = build_game(config.game)
    observed = observed_profile(config)
    new_R = [[None if v is None else _matrix(v, "R'") for v in row] for row in config.equivalence.R]
    costs = generate_equivalent(game, observed, new_R, require_psd=config.equivalence.require_psd)
    _, report = verify_equivalent(game, LQGame(game.dynamics, costs), observed, gain_tol=config.verify.gain_tol,
                                  value_tol=config.verify.value_tol)
    return EXIT_OK, {
        "game": game_to_json(game.dynamics, costs),
        "observed_gains": matrices_to_json(observed.K),
        "Q": matrices_to_json(costs.Q),
        "R": table_to_json(costs.R),
        "verification": report.to_dict(),
    }


def run_verify(config: SessionConfig, out_dir: Path) -> Tuple[int, Dict[str, Any]]:
    game1 = build_game(config.game)
    game2 = build_game(config.other_game)
    observed = observed_profile(config)
    equivalent, report = verify_equivalent(game1, game2, observed, gain_tol=config.verify.gain_tol,
                                           value_tol=config.verify.value_tol)
    return (EXIT_OK if equivalent else EXIT_NOT_EQUIVALENT), {
        "equivalent": equivalent,
        "observed_gains": matrices_to_json(observed.K),
        "verification": report.to_dict(),
    }


_HANDLERS = {
    "forward": run_forward,
    "inverse-mb": run_inverse_mb,
    "inverse-mf": run_inverse_mf,
    "equiv-gen": run_equiv_gen,
    "verify": run_verify,
}


# ---------------------------------------------------------------------------
# Seed sweep
# ---------------------------------------------------------------------------

def _sweep_worker(raw_config: Dict[str, Any], seed: int) -> Dict[str, Any]:
    """Run one seed in a worker process and summarise it."""
    config = SessionConfig.model_validate(raw_config)
    row = {"seed": seed, "exit_code": EXIT_OK, "status": None, "iterations": None, "error": None}
    try:
        _, result = run_inverse_mf(config, None, seed=seed)
    except LQGameError as e:
        row.update(exit_code=e.exit_code, status="Error", error=e.code)
        return row
    row.update(status=result["status"], iterations=result["iterations"])
    observed = [matrix_from_json(k) for k in result["observed_gains"]]
    for p, (k, k_o) in enumerate(zip(result["K"], observed), start=1):
        row[f"gain_error_inf_{p}"] = float(np.max(np.abs(matrix_from_json(k) - k_o)))
    return row


def run_sweep(config: SessionConfig, out_dir: Path, max_workers: Optional[int] = None) -> Tuple[int, Dict[str, Any]]:
    seeds = sorted(set(config.seeds))
    raw = config.model_dump(mode="json")
    rows = []
    with ProcessPoolExecutor(max_workers=max_workers) as executor:
        futures = {executor.submit(_sweep_worker, raw, seed): seed for seed in seeds}
        for future in as_completed(futures):
            seed = futures[future]
            try:
                rows.append(future.result())
            except Exception as e:
                logger.error(f"Error running seed {seed}: {e}")
                rows.append({"seed": seed, "exit_code": EXIT_INTERNAL, "status": "Error", "error": str(e)})
    df = pd.DataFrame(rows).sort_values("seed").reset_index(drop=True)
    save_frame(df, out_dir / "sweep.csv")
    failed = df[df["exit_code"] != EXIT_OK]
    code = int(failed["exit_code"].iloc[0]) if len(failed) else EXIT_OK
    logger.info(f"Seed sweep finished: {len(df) - len(failed)}/{len(df)} seeds converged")
    return code, {"sweep_file": "sweep.csv", "seeds": seeds, "converged": int(len(df) - len(failed)),
                  "runs": json.loads(df.to_json(orient="records"))}


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

def run_session(config: SessionConfig, out_dir: Optional[Union[str, Path]] = None) -> int:
    """Run the session's mode, write its artifacts and return the exit status.

    ``out_dir`` defaults to the configured output directory. Exactly one of
    result.json and error.json is left behind.
    """
    out_dir = Path(out_dir) if out_dir is not None else get_config().output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    logger.info(f"Running {config.mode} session, writing to {out_dir}")
    try:
        if config.mode == "inverse-mf" and config.seeds:
            code, result = run_sweep(config, out_dir)
        else:
            code, result = _HANDLERS[config.mode](config, out_dir)
    except LQGameError as e:
        logger.error(f"{config.mode} failed [{e.code}]: {e.message}")
        if isinstance(e.trace, IterationTrace):
            _write_trace(e.trace, out_dir, config)
        _clear_stale(out_dir, "result.json")
        save_json({"mode": config.mode, "error": e.to_dict()}, out_dir / "error.json")
        return e.exit_code
    except Exception as e:
        logger.error(f"{config.mode} failed with an unexpected error: {e}")
        _clear_stale(out_dir, "result.json")
        save_json({"mode": config.mode, "error": {"code": "internal_error", "exit_code": EXIT_INTERNAL,
                                                  "message": str(e)}}, out_dir / "error.json")
        return EXIT_INTERNAL
    _clear_stale(out_dir, "error.json")
    save_json({"mode": config.mode, **result}, out_dir / "result.json")
    return code


def _clear_stale(out_dir: Path, name: str) -> None:
    """Remove an artifact left by an earlier run in the same directory."""
    stale = out_dir / name
    if stale.exists():
        logger.info(f"Removing stale {stale}")
        stale.unlink()
