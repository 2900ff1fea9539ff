"""Excited trajectory collection for the model-free solver.

For every player i one trajectory is simulated on the full game with player i
playing u_i(k) = -K_io x(k) + eps_i(k) and every other player on its observed
feedback. The module also holds the symmetric quadratic regression basis and
the persistence-of-excitation diagnostics built on it.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
import scipy.linalg

from lq_inverse.const import (DEFAULT_LENGTH_FACTOR, DEFAULT_NOISE_AMPLITUDE, DEFAULT_NUM_FREQUENCIES,
                              PE_COND_LIMIT, TRAJECTORY_BLOWUP_FACTOR)
from lq_inverse.exceptions import (DimensionMismatch, DivergentTrajectory, InsufficientData, InvalidParameters,
                                   PersistenceOfExcitationError, UnstableClosedLoop)
from lq_inverse.game import FeedbackProfile, GameDynamics, as_matrix, is_stabilizing
from lq_inverse.utils import atomic_path, matrix_from_json

logger = logging.getLogger("lq_inverse")

NOISE_KINDS = ("sinusoidal-sum", "gaussian", "decaying")


# ---------------------------------------------------------------------------
# Probing noise
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseConfig:
    """Probing noise settings.

    ``sinusoidal-sum``: amplitude * sum_j sin(w_j k), w_j ~ N(0, 1) drawn once per player and channel.
    ``gaussian``: amplitude * N(0, 1) white noise.
    ``decaying``: the sinusoidal sum scaled by decay**k.
    """
    kind: str = "sinusoidal-sum"
    amplitude: float = DEFAULT_NOISE_AMPLITUDE
    num_frequencies: int = DEFAULT_NUM_FREQUENCIES
    seed: int = 0
    decay: float = 1.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise InvalidParameters(f"unknown noise kind {self.kind!r}, expected one of {NOISE_KINDS}")
        if self.amplitude < 0:
            raise InvalidParameters(f"noise amplitude must be >= 0, got {self.amplitude}")
        if self.kind != "gaussian" and self.num_frequencies < 1:
            raise InvalidParameters("sinusoidal noise needs at least one frequency")
        if not 0 <= self.seed < 2 ** 64:
            raise InvalidParameters(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if not 0.0 < self.decay <= 1.0:
            raise InvalidParameters(f"decay must lie in (0, 1], got {self.decay}")


class ProbingNoise:
    """Noise source for one player; deterministic in (cfg, player, k)."""

    def __init__(self, cfg: NoiseConfig, player: int = 0, channels: int = 1):
        self.cfg = cfg
        self.player = player
        self.channels = channels
        self.omegas = None
        if cfg.kind != "gaussian":
            rng = np.random.default_rng([cfg.seed, player])
            self.omegas = rng.standard_normal((channels, cfg.num_frequencies))

    def __call__(self, k: int) -> np.ndarray:
        cfg = self.cfg
        if cfg.amplitude == 0.0:
            return np.zeros(self.channels)
        if cfg.kind == "gaussian":
            return cfg.amplitude * np.random.default_rng([cfg.seed, self.player, k]).standard_normal(self.channels)
        eps = cfg.amplitude * np.sin(self.omegas * k).sum(axis=1)
        if cfg.kind == "decaying":
            eps = eps * cfg.decay ** k
        return eps


def probing_noise(cfg: NoiseConfig, k: int, player: int = 0, channels: int = 1) -> np.ndarray:
    """eps_i(k) for a single time index. Builds the frequency set on every call; use ProbingNoise in loops."""
    return ProbingNoise(cfg, player, channels)(k)


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    """States x(0..L) and the excited player's inputs u_i(0..L-1).

    ``policy_gain`` is the feedback gain the excited player follows apart from
    the noise; it is what the model-free regression evaluates at x(k+1).
    """
    states: np.ndarray
    inputs: np.ndarray
    excited_player: int
    policy_gain: Optional[np.ndarray] = None

    def __post_init__(self):
        states = np.array(self.states, dtype=float)
        inputs = np.array(self.inputs, dtype=float)
        if states.ndim == 1:
            states = states.reshape(-1, 1)
        if inputs.ndim == 1:
            inputs = inputs.reshape(-1, 1)
        if states.shape[0] != inputs.shape[0] + 1:
            raise DimensionMismatch(f"trajectory has {states.shape[0]} states but {inputs.shape[0]} inputs; "
                                    f"expected one more state than inputs", player=self.excited_player)
        states.setflags(write=False)
        inputs.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "inputs", inputs)
        if self.policy_gain is not None:
            gain = as_matrix(self.policy_gain, "policy gain", self.excited_player)
            if gain.shape != (inputs.shape[1], states.shape[1]):
                raise DimensionMismatch(f"policy gain must be {inputs.shape[1]}x{states.shape[1]}",
                                        player=self.excited_player)
            object.__setattr__(self, "policy_gain", gain)

    @property
    def length(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_states(self) -> int:
        return self.states.shape[1]

    @property
    def n_inputs(self) -> int:
        return self.inputs.shape[1]

    def to_frame(self) -> pd.DataFrame:
        """Columns k, x_1..x_n, u_1..u_m; the last row carries x(L) with empty inputs."""
        data = {"k": np.arange(self.length + 1)}
        for a in range(self.n_states):
            data[f"x_{a + 1}"] = self.states[:, a]
        padded = np.vstack([self.inputs, np.full((1, self.n_inputs), np.nan)])
        for b in range(self.n_inputs):
            data[f"u_{b + 1}"] = padded[:, b]
        return pd.DataFrame(data)

    @classmethod
    def from_frame(cls, df: pd.DataFrame, excited_player: int,
                   policy_gain: Optional[np.ndarray] = None) -> "Trajectory":
        df = df.sort_values("k")
        x_cols = sorted((c for c in df.columns if c.startswith("x_")), key=lambda c: int(c[2:]))
        u_cols = sorted((c for c in df.columns if c.startswith("u_")), key=lambda c: int(c[2:]))
        if not x_cols or not u_cols:
            raise DimensionMismatch("trajectory table needs x_* and u_* columns", player=excited_player)
        return cls(states=df[x_cols].to_numpy(dtype=float),
                   inputs=df[u_cols].to_numpy(dtype=float)[:-1],
                   excited_player=excited_player,
                   policy_gain=policy_gain)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Trajectory":
        """Inline session form: 1-based ``excited_player`` and JSON matrices for states, inputs and policy_gain."""
        gain = data.get("policy_gain")
        return cls(states=matrix_from_json(data["states"], "states"),
                   inputs=matrix_from_json(data["inputs"], "inputs"),
                   excited_player=int(data["excited_player"]) - 1,
                   policy_gain=matrix_from_json(gain, "policy_gain") if gain is not None else None)


def write_trajectory_csv(traj: Trajectory, path: Union[str, Path]) -> None:
    with atomic_path(path) as tmp:
        traj.to_frame().to_csv(tmp, index=False)


def read_trajectory_csv(path: Union[str, Path], excited_player: int,
                        policy_gain: Optional[np.ndarray] = None) -> Trajectory:
    return Trajectory.from_frame(pd.read_csv(path), excited_player, policy_gain)


def regression_unknowns(n: int, m: int) -> int:
    """Number of free entries of a symmetric (n+m)x(n+m) kernel."""
    d = n + m
    return d * (d + 1) // 2


def default_length(dyn: GameDynamics) -> int:
    return DEFAULT_LENGTH_FACTOR * regression_unknowns(dyn.n_states, max(dyn.input_dims))


def default_x0(n: int) -> np.ndarray:
    return np.ones(n) / np.sqrt(n)


def collect_pairs(dyn: GameDynamics, observed: FeedbackProfile, x0: Optional[Sequence[float]] = None,
                  length: Optional[int] = None, cfg: Optional[NoiseConfig] = None) -> List[Trajectory]:
    """Simulate one excited trajectory per player.

    Parameters
    ----------
    dyn : GameDynamics
        The plant. Only the data collection touches it; the model-free solver never does.
    observed : FeedbackProfile
        Observed Nash gains; must stabilize the plant.
    x0 : sequence of float, optional
        Initial state, unit-norm all-ones vector by default.
    length : int, optional
        Number of inputs per trajectory, three times the regression unknowns by default.
    cfg : NoiseConfig, optional
        Probing noise, the sinusoidal default when omitted.

    Returns
    -------
    list of Trajectory
        Trajectory i has only player i excited.
    """
    observed.check_dimensions(dyn)
    stable, radius = is_stabilizing(dyn, observed)
    if not stable:
        raise UnstableClosedLoop(f"observed gains do not stabilize the plant (spectral radius {radius:.6f})",
                                 spectral_radius=radius)
    cfg = cfg or NoiseConfig()
    n = dyn.n_states
    x0 = default_x0(n) if x0 is None else np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != n:
        raise DimensionMismatch(f"x0 must have {n} entries, got {x0.shape[0]}")
    length = default_length(dyn) if length is None else int(length)
    needed = regression_unknowns(n, max(dyn.input_dims))
    if length < needed:
        raise InsufficientData(f"trajectory length {length} is below the {needed} regression unknowns")
    bound = TRAJECTORY_BLOWUP_FACTOR * max(1.0, float(np.linalg.norm(x0)))

    K = observed.K
    out = []
    for i in range(dyn.n_players):
        noise = ProbingNoise(cfg, player=i, channels=dyn.input_dims[i])
        states = np.zeros((length + 1, n))
        inputs = np.zeros((length, dyn.input_dims[i]))
        states[0] = x0
        x = x0
        for k in range(length):
            u_i = -K[i] @ x + noise(k)
            x_next = dyn.A @ x + dyn.B[i] @ u_i
            for j in range(dyn.n_players):
                if j != i:
                    x_next = x_next - dyn.B[j] @ (K[j] @ x)
            if not np.all(np.isfinite(x_next)) or np.linalg.norm(x_next) > bound:
                raise DivergentTrajectory(f"state norm exceeded {bound:.3g} at k={k + 1} while exciting "
                                          f"player {i + 1}", player=i)
            inputs[k] = u_i
            states[k + 1] = x_next
            x = x_next
        out.append(Trajectory(states, inputs, excited_player=i, policy_gain=K[i]))
        logger.debug(f"Collected {length} samples for player {i + 1}")
    logger.info(f"Collected {dyn.n_players} excited trajectories of length {length} ({cfg.kind} noise)")
    return out


def dynamics_residual(traj: Trajectory, dyn: GameDynamics, observed: FeedbackProfile) -> float:
    """Largest |x(k+1) - A x(k) - sum_j B_j u_j(k)| with the other players on their observed gains."""
    i = traj.excited_player
    worst = 0.0
    for k in range(traj.length):
        x = traj.states[k]
        x_next = dyn.A @ x + dyn.B[i] @ traj.inputs[k]
        for j in range(dyn.n_players):
            if j != i:
                x_next = x_next - dyn.B[j] @ (observed.K[j] @ x)
        worst = max(worst, float(np.max(np.abs(traj.states[k + 1] - x_next))))
    return worst


# ---------------------------------------------------------------------------
# Regression basis
# ---------------------------------------------------------------------------

def quadratic_features(Z: np.ndarray) -> np.ndarray:
    """Rows z -> coefficients of z^T H z on the upper triangle of a symmetric H.

    Diagonal entries get z_a^2, off-diagonal entries 2 z_a z_b.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    rows, cols = np.triu_indices(Z.shape[1])
    weights = np.where(rows == cols, 1.0, 2.0)
    return Z[:, rows] * Z[:, cols] * weights


def unpack_symmetric(theta: np.ndarray, d: int) -> np.ndarray:
    """Inverse of the upper-triangle parameterization used by quadratic_features."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.shape[0] != d * (d + 1) // 2:
        raise DimensionMismatch(f"{theta.shape[0]} parameters cannot fill a symmetric {d}x{d} matrix")
    H = np.zeros((d, d))
    rows, cols = np.triu_indices(d)
    H[rows, cols] = theta
    H[cols, rows] = theta
    return H


def pack_symmetric(H: np.ndarray) -> np.ndarray:
    H = np.asarray(H, dtype=float)
    return H[np.triu_indices(H.shape[0])]


def pe_condition(psi: np.ndarray) -> float:
    """cond(Psi^T Psi) from the singular values of Psi; inf when rank deficient."""
    psi = np.atleast_2d(psi)
    if psi.shape[0] < psi.shape[1]:
        raise InsufficientData(f"{psi.shape[0]} regression rows for {psi.shape[1]} unknowns")
    s = scipy.linalg.svdvals(psi)
    if s[0] == 0.0 or s[-1] <= s[0] * np.finfo(float).eps:
        return float("inf")
    return float((s[0] / s[-1]) ** 2)


def check_pe(psi: np.ndarray, player: Optional[int] = None, limit: float = PE_COND_LIMIT) -> float:
    cond = pe_condition(psi)
    if cond > limit:
        raise PersistenceOfExcitationError(f"regression matrix fails persistence of excitation "
                                           f"(cond {cond:.3e} > {limit:.0e})", condition_number=cond, player=player)
    return cond


def augmented_pairs(traj: Trajectory, gain: np.ndarray, next_action: str = "policy",
                    window: Optional[int] = None):
    """Stacked [x(k); u(k)] and [x(k+1); u'(k+1)] rows for the Bellman regression.

    ``next_action="policy"`` uses u'(k+1) = -gain x(k+1); ``"recorded"`` uses the
    stored noisy input, dropping the final sample that has none.
    """
    rows = traj.length if window is None else int(window)
    if next_action == "recorded":
        rows = min(rows, traj.length - 1)
    elif next_action != "policy":
        raise InvalidParameters(f"next_action must be 'policy' or 'recorded', got {next_action!r}")
    if rows > traj.length:
        raise InsufficientData(f"window {rows} exceeds the {traj.length} recorded samples")
    x_now = traj.states[:rows]
    x_next = traj.states[1:rows + 1]
    now = np.hstack([x_now, traj.inputs[:rows]])
    if next_action == "policy":
        nxt = np.hstack([x_next, -x_next @ np.asarray(gain).T])
    else:
        nxt = np.hstack([x_next, traj.inputs[1:rows + 1]])
    return now, nxt


def pe_diagnostic(traj: Trajectory, window: Optional[int] = None, gain: Optional[np.ndarray] = None) -> float:
    """cond(Psi_i^T Psi_i) of the Q-function regression built from the first ``window`` samples."""
    gain = traj.policy_gain if gain is None else as_matrix(gain, "gain", traj.excited_player)
    if gain is None:
        raise InvalidParameters("pe_diagnostic needs the excited player's feedback gain", player=traj.excited_player)
    unknowns = regression_unknowns(traj.n_states, traj.n_inputs)
    rows = traj.length if window is None else int(window)
    if rows < unknowns:
        raise InsufficientData(f"window of {rows} samples is shorter than the {unknowns} unknowns",
                               player=traj.excited_player)
    now, nxt = augmented_pairs(traj, gain, window=rows)
    return pe_condition(quadratic_features(now) - quadratic_features(nxt))
