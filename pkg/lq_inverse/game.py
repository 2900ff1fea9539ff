"""Linear-quadratic discrete-time N-player games.

Domain types plus the linear algebra every solver in the package builds on:
closed-loop analysis, Stein equations, GARE residuals, best-response gains,
cost evaluation, and a forward Nash solver used to produce observed profiles.

Players are indexed from 0 in the Python API. Matrices are float64 numpy
arrays; the domain types copy their inputs and mark them read-only.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from lq_inverse.const import (CERT_GAIN_TOL, CERT_RESIDUAL_TOL, COND_LIMIT, DEFAULT_ALPHA, DEFAULT_MAX_ITERATIONS,
                              DEFAULT_Q0_SCALE, DEFAULT_RHO, FORWARD_MAX_ITERATIONS, FORWARD_MIN_DAMPING,
                              FORWARD_TOL, MAX_UNSTABLE_HORIZON, PD_TOL, PD_VALUE_TOL, PSD_TOL, STABILITY_MARGIN,
                              STEIN_RESIDUAL_TOL, SYMMETRY_TOL)
from lq_inverse.exceptions import (DimensionMismatch, DivergenceRisk, IllConditioned, InvalidParameters,
                                   NoConvergence, UnstableClosedLoop)

logger = logging.getLogger("lq_inverse")

MatrixLike = Union[np.ndarray, Sequence[Sequence[float]], float]


# ---------------------------------------------------------------------------
# Matrix helpers
# ---------------------------------------------------------------------------

def as_matrix(value: MatrixLike, name: str = "matrix", player: Optional[int] = None) -> np.ndarray:
    """Return a read-only 2-D float64 copy of ``value``.

    Scalars become 1x1 matrices so single-input games can be written with plain numbers.
    """
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be a 2-D matrix, got shape {arr.shape}", player=player)
    if not np.all(np.isfinite(arr)):
        raise InvalidParameters(f"{name} contains non-finite entries", player=player)
    arr.flags.writeable = False
    return arr


def symmetrize(X: np.ndarray) -> np.ndarray:
    return (X + X.T) / 2.0


def min_eigenvalue(X: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(symmetrize(X))[0])


def is_symmetric(X: np.ndarray, tol: float = SYMMETRY_TOL) -> bool:
    return X.shape[0] == X.shape[1] and float(np.linalg.norm(X - X.T)) <= tol


def is_psd(X: np.ndarray, tol: float = PSD_TOL) -> bool:
    """Scale-aware PSD test: min eigenvalue >= -tol * max(1, ||X||_F)."""
    return min_eigenvalue(X) >= -tol * max(1.0, float(np.linalg.norm(X)))


def spectral_radius(F: np.ndarray) -> float:
    if F.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(F))))


def solve_checked(lhs: np.ndarray, rhs: np.ndarray, what: str = "linear system",
                  player: Optional[int] = None) -> np.ndarray:
    """Solve ``lhs @ X = rhs`` after checking the condition number of ``lhs``."""
    cond = float(np.linalg.cond(lhs))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditioned(f"{what} is ill-conditioned (cond={cond:.3e})", condition_number=cond, player=player)
    return scipy.linalg.solve(lhs, rhs)


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GameDynamics:
    """x(k+1) = A x(k) + sum_i B_i u_i(k)."""
    A: np.ndarray
    B: Tuple[np.ndarray, ...]

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        if A.shape[0] != A.shape[1] or A.shape[0] < 1:
            raise DimensionMismatch(f"A must be square with n >= 1, got shape {A.shape}")
        if len(self.B) < 1:
            raise DimensionMismatch("a game needs at least one player")
        B = []
        for i, b in enumerate(self.B):
            b = np.array(b, dtype=float)
            if b.ndim == 1:
                b = b.reshape(-1, 1)
            b = as_matrix(b, f"B_{i + 1}", player=i)
            if b.shape[0] != A.shape[0] or b.shape[1] < 1:
                raise DimensionMismatch(f"B_{i + 1} must have {A.shape[0]} rows and at least one column, "
                                        f"got shape {b.shape}", player=i)
            B.append(b)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", tuple(B))

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_players(self) -> int:
        return len(self.B)

    @property
    def input_dims(self) -> Tuple[int, ...]:
        return tuple(b.shape[1] for b in self.B)


@dataclass(frozen=True)
class FeedbackProfile:
    """Gains K_i of the laws u_i = -K_i x, one per player."""
    K: Tuple[np.ndarray, ...]

    def __post_init__(self):
        K = []
        for i, k in enumerate(self.K):
            k = np.array(k, dtype=float)
            if k.ndim == 1:
                k = k.reshape(1, -1)
            K.append(as_matrix(k, f"K_{i + 1}", player=i))
        object.__setattr__(self, "K", tuple(K))

    @property
    def n_players(self) -> int:
        return len(self.K)

    @classmethod
    def zeros(cls, dyn: GameDynamics) -> "FeedbackProfile":
        return cls(tuple(np.zeros((m, dyn.n_states)) for m in dyn.input_dims))

    def check_dimensions(self, dyn: GameDynamics) -> None:
        if self.n_players != dyn.n_players:
            raise DimensionMismatch(f"profile has {self.n_players} gains for a {dyn.n_players}-player game")
        for i, (k, m) in enumerate(zip(self.K, dyn.input_dims)):
            if k.shape != (m, dyn.n_states):
                raise DimensionMismatch(f"K_{i + 1} must be {m}x{dyn.n_states}, got {k.shape}", player=i)

    def with_gain(self, i: int, gain: np.ndarray) -> "FeedbackProfile":
        gains = list(self.K)
        gains[i] = gain
        return FeedbackProfile(tuple(gains))

    def distance(self, other: "FeedbackProfile") -> List[float]:
        return [float(np.linalg.norm(a - b)) for a, b in zip(self.K, other.K)]


@dataclass(frozen=True)
class CostParameters:
    """Per-player state weights Q_i and the N x N table of input weights R_ij.

    Construction checks symmetry and R_ii > 0. PSD-ness of Q_i and of the
    cross weights is checked by :meth:`validate`, because equivalent games may
    legitimately carry indefinite Q_i or R_ij (j != i).
    """
    Q: Tuple[np.ndarray, ...]
    R: Tuple[Tuple[np.ndarray, ...], ...]

    def __post_init__(self):
        N = len(self.Q)
        if len(self.R) != N or any(len(row) != N for row in self.R):
            raise DimensionMismatch(f"R must be a {N}x{N} table of matrices")
        Q = tuple(as_matrix(q, f"Q_{i + 1}", player=i) for i, q in enumerate(self.Q))
        R = tuple(tuple(as_matrix(r, f"R_{i + 1}{j + 1}", player=i) for j, r in enumerate(row))
                  for i, row in enumerate(self.R))
        for i, q in enumerate(Q):
            if not is_symmetric(q, SYMMETRY_TOL * max(1.0, float(np.linalg.norm(q)))):
                raise InvalidParameters(f"Q_{i + 1} is not symmetric", player=i)
        for i in range(N):
            for j in range(N):
                r = R[i][j]
                if not is_symmetric(r, SYMMETRY_TOL * max(1.0, float(np.linalg.norm(r)))):
                    raise InvalidParameters(f"R_{i + 1}{j + 1} is not symmetric", player=i)
            if min_eigenvalue(R[i][i]) <= PD_TOL:
                raise InvalidParameters(f"R_{i + 1}{i + 1} must be positive definite", player=i)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)

    @property
    def n_players(self) -> int:
        return len(self.Q)

    def validate(self) -> "CostParameters":
        """Check that every Q_i and every R_ij is PSD."""
        for i, q in enumerate(self.Q):
            if not is_psd(q):
                raise InvalidParameters(f"Q_{i + 1} is not positive semidefinite", player=i,
                                        min_eigenvalue=min_eigenvalue(q))
        for i, row in enumerate(self.R):
            for j, r in enumerate(row):
                if not is_psd(r):
                    raise InvalidParameters(f"R_{i + 1}{j + 1} is not positive semidefinite", player=i)
        return self

    def check_dimensions(self, dyn: GameDynamics) -> None:
        if self.n_players != dyn.n_players:
            raise DimensionMismatch(f"cost data for {self.n_players} players, dynamics for {dyn.n_players}")
        n, dims = dyn.n_states, dyn.input_dims
        for i in range(self.n_players):
            if self.Q[i].shape != (n, n):
                raise DimensionMismatch(f"Q_{i + 1} must be {n}x{n}, got {self.Q[i].shape}", player=i)
            for j in range(self.n_players):
                if self.R[i][j].shape != (dims[j], dims[j]):
                    raise DimensionMismatch(f"R_{i + 1}{j + 1} must be {dims[j]}x{dims[j]}, "
                                            f"got {self.R[i][j].shape}", player=i)

    def with_q(self, Q: Sequence[np.ndarray]) -> "CostParameters":
        return CostParameters(tuple(Q), self.R)


@dataclass(frozen=True)
class ValueSolution:
    """Value kernels P_i with V_i(x) = x^T P_i x."""
    P: Tuple[np.ndarray, ...]

    def __post_init__(self):
        P = []
        for i, p in enumerate(self.P):
            p = as_matrix(p, f"P_{i + 1}", player=i)
            if not is_symmetric(p, SYMMETRY_TOL * max(1.0, float(np.linalg.norm(p)))):
                raise InvalidParameters(f"P_{i + 1} is not symmetric", player=i)
            P.append(p)
        object.__setattr__(self, "P", tuple(P))

    def is_positive_definite(self) -> bool:
        return all(min_eigenvalue(p) > -PD_VALUE_TOL * max(1.0, float(np.linalg.norm(p))) for p in self.P)


@dataclass(frozen=True)
class LQGame:
    """A game (A, B, Q, R)."""
    dynamics: GameDynamics
    costs: CostParameters

    def __post_init__(self):
        self.costs.check_dimensions(self.dynamics)

    @property
    def n_players(self) -> int:
        return self.dynamics.n_players


@dataclass(frozen=True)
class InverseProblem:
    """Inputs of an inverse solve: observed gains, the fixed R table, Q^(0), step sizes and tolerances.

    ``dynamics`` is required by the model-based solver and ignored by the model-free one.
    """
    observed_gains: FeedbackProfile
    R: Tuple[Tuple[np.ndarray, ...], ...]
    Q0: Tuple[np.ndarray, ...]
    alpha: Tuple[float, ...]
    rho: Tuple[float, ...]
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    dynamics: Optional[GameDynamics] = None
    freeze_converged: bool = False

    def __post_init__(self):
        N = self.observed_gains.n_players
        if len(self.Q0) != N or len(self.alpha) != N or len(self.rho) != N:
            raise DimensionMismatch(f"Q0, alpha and rho need one entry per player ({N})")
        if any(a <= 0 for a in self.alpha):
            raise InvalidParameters(f"step sizes must be positive, got {list(self.alpha)}")
        if any(r <= 0 for r in self.rho):
            raise InvalidParameters(f"tolerances must be positive, got {list(self.rho)}")
        if self.max_iterations < 1:
            raise InvalidParameters("max_iterations must be at least 1")
        # CostParameters checks symmetry and R_ii > 0; validate() adds the PSD checks.
        initial = CostParameters(tuple(self.Q0), tuple(tuple(row) for row in self.R)).validate()
        object.__setattr__(self, "Q0", initial.Q)
        object.__setattr__(self, "R", initial.R)
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        object.__setattr__(self, "rho", tuple(float(r) for r in self.rho))
        n = self.observed_gains.K[0].shape[1]
        for i, k in enumerate(self.observed_gains.K):
            if k.shape[1] != n:
                raise DimensionMismatch(f"K_{i + 1} has {k.shape[1]} columns, expected {n}", player=i)
            if self.Q0[i].shape != (n, n):
                raise DimensionMismatch(f"Q0_{i + 1} must be {n}x{n}", player=i)
            for j in range(N):
                m_j = self.observed_gains.K[j].shape[0]
                if self.R[i][j].shape != (m_j, m_j):
                    raise DimensionMismatch(f"R_{i + 1}{j + 1} must be {m_j}x{m_j}", player=i)
        if self.dynamics is not None:
            self.observed_gains.check_dimensions(self.dynamics)

    @classmethod
    def build(cls, observed_gains: FeedbackProfile, R: Sequence[Sequence[MatrixLike]],
              Q0: Optional[Sequence[MatrixLike]] = None, q0_scale: float = DEFAULT_Q0_SCALE,
              alpha: Union[float, Sequence[float]] = DEFAULT_ALPHA,
              rho: Union[float, Sequence[float]] = DEFAULT_RHO,
              max_iterations: int = DEFAULT_MAX_ITERATIONS, dynamics: Optional[GameDynamics] = None,
              freeze_converged: bool = False) -> "InverseProblem":
        """Convenience constructor that broadcasts scalar alpha/rho and defaults Q^(0) to q0_scale * I."""
        N = observed_gains.n_players
        n = observed_gains.K[0].shape[1]
        if Q0 is None:
            Q0 = [q0_scale * np.eye(n) for _ in range(N)]
        return cls(observed_gains=observed_gains,
                   R=tuple(tuple(row) for row in R),
                   Q0=tuple(Q0),
                   alpha=_broadcast(alpha, N, "alpha"),
                   rho=_broadcast(rho, N, "rho"),
                   max_iterations=max_iterations,
                   dynamics=dynamics,
                   freeze_converged=freeze_converged)

    @property
    def n_players(self) -> int:
        return self.observed_gains.n_players

    def costs_at(self, Q: Sequence[np.ndarray]) -> CostParameters:
        return CostParameters(tuple(Q), self.R)


def _broadcast(value: Union[float, Sequence[float]], N: int, name: str) -> Tuple[float, ...]:
    if np.isscalar(value):
        return tuple(float(value) for _ in range(N))
    values = tuple(float(v) for v in value)
    if len(values) != N:
        raise DimensionMismatch(f"{name} needs {N} entries, got {len(values)}")
    return values


# ---------------------------------------------------------------------------
# Closed-loop analysis
# ---------------------------------------------------------------------------

def closed_loop(dyn: GameDynamics, prof: FeedbackProfile, exclude: Optional[int] = None) -> np.ndarray:
    """A - sum_j B_j K_j, skipping player ``exclude`` (giving A_i) when set."""
    prof.check_dimensions(dyn)
    if exclude is not None and not 0 <= exclude < dyn.n_players:
        raise DimensionMismatch(f"no player {exclude + 1} in a {dyn.n_players}-player game", player=exclude)
    F = np.array(dyn.A)
    for j, (B, K) in enumerate(zip(dyn.B, prof.K)):
        if j != exclude:
            F = F - B @ K
    return F


def is_stabilizing(dyn: GameDynamics, prof: FeedbackProfile) -> Tuple[bool, float]:
    """Return (stable, spectral radius) of the full closed loop."""
    radius = spectral_radius(closed_loop(dyn, prof))
    return radius < 1.0 - STABILITY_MARGIN, radius


def stabilizing_profile(dyn: GameDynamics) -> FeedbackProfile:
    """A stabilizing starting profile: zero gains if A is stable, else a joint LQR gain split by player."""
    if spectral_radius(dyn.A) < 1.0 - STABILITY_MARGIN:
        return FeedbackProfile.zeros(dyn)
    B = np.hstack(dyn.B)
    n, m = B.shape
    try:
        P = scipy.linalg.solve_discrete_are(dyn.A, B, np.eye(n), np.eye(m))
    except (np.linalg.LinAlgError, ValueError) as e:
        raise UnstableClosedLoop(f"could not build a stabilizing profile, dynamics may not be stabilizable: {e}",
                                 spectral_radius=spectral_radius(dyn.A))
    K = solve_checked(np.eye(m) + B.T @ P @ B, B.T @ P @ dyn.A, "joint LQR normal matrix")
    splits = np.cumsum(dyn.input_dims)[:-1]
    logger.debug(f"Built stabilizing profile from joint DARE (open-loop radius {spectral_radius(dyn.A):.4f})")
    return FeedbackProfile(tuple(np.split(K, splits, axis=0)))


# ---------------------------------------------------------------------------
# Stein equations and GAREs
# ---------------------------------------------------------------------------

def solve_stein(F: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Solve F^T P F - P + M = 0 for symmetric P.

    Dense Kronecker form: (I - F^T kron F^T) vec(P) = vec(M). Meant for the
    small state dimensions of these games.
    """
    F = np.asarray(F, dtype=float)
    M = np.asarray(M, dtype=float)
    if F.ndim != 2 or F.shape[0] != F.shape[1] or M.shape != F.shape:
        raise DimensionMismatch(f"Stein equation needs square F and M of equal size, got {F.shape} and {M.shape}")
    scale = max(1.0, float(np.linalg.norm(M)))
    if float(np.linalg.norm(M - M.T)) > 1e-8 * scale:
        raise InvalidParameters("Stein constant term is not symmetric")
    radius = spectral_radius(F)
    if radius >= 1.0 - STABILITY_MARGIN:
        raise UnstableClosedLoop(f"Stein equation needs a stable transition matrix (spectral radius {radius:.6f})",
                                 spectral_radius=radius)
    n = F.shape[0]
    lhs = np.eye(n * n) - np.kron(F.T, F.T)
    P = symmetrize(solve_checked(lhs, M.reshape(-1), "Stein operator").reshape(n, n))
    residual = float(np.linalg.norm(F.T @ P @ F - P + M))
    if residual > STEIN_RESIDUAL_TOL * scale:
        logger.warning(f"Stein residual {residual:.3e} exceeds {STEIN_RESIDUAL_TOL:.0e} * {scale:.3e}")
    return P


def stage_kernel(costs: CostParameters, prof: FeedbackProfile, i: int, include_self: bool = True) -> np.ndarray:
    """Q_i + sum_j K_j^T R_ij K_j (the j = i term is skipped when include_self is False)."""
    W = np.array(costs.Q[i])
    for j, K in enumerate(prof.K):
        if include_self or j != i:
            W = W + K.T @ costs.R[i][j] @ K
    return symmetrize(W)


def gare_residual(game: LQGame, prof: FeedbackProfile, P_i: np.ndarray, i: int) -> np.ndarray:
    """Left-hand side of player i's GARE at profile ``prof``."""
    F = closed_loop(game.dynamics, prof)
    return stage_kernel(game.costs, prof, i) - P_i + F.T @ P_i @ F


def value_kernels(game: LQGame, prof: FeedbackProfile) -> ValueSolution:
    """Solve every player's GARE at a fixed profile (one Stein equation each)."""
    F = closed_loop(game.dynamics, prof)
    return ValueSolution(tuple(solve_stein(F, stage_kernel(game.costs, prof, i)) for i in range(game.n_players)))


def best_response_gain(dyn: GameDynamics, R_ii: np.ndarray, P_i: np.ndarray, prof: FeedbackProfile,
                       i: int) -> np.ndarray:
    """(R_ii + B_i^T P_i B_i)^{-1} B_i^T P_i A_i, with A_i built from the other players' gains in ``prof``."""
    A_i = closed_loop(dyn, prof, exclude=i)
    B_i = dyn.B[i]
    return solve_checked(R_ii + B_i.T @ P_i @ B_i, B_i.T @ P_i @ A_i,
                         f"normal matrix R_{i + 1}{i + 1} + B^T P B", player=i)


@dataclass
class NashCertificate:
    """Per-player GARE residuals and best-response gain errors at a profile."""
    values: ValueSolution
    residual_norms: List[float]
    gain_errors: List[float]
    residual_tol: List[float]
    gain_tol: List[float]
    stable: bool
    spectral_radius: float

    @property
    def player_passed(self) -> List[bool]:
        return [r <= rt and g <= gt for r, rt, g, gt in
                zip(self.residual_norms, self.residual_tol, self.gain_errors, self.gain_tol)]

    @property
    def passed(self) -> bool:
        return self.stable and all(self.player_passed)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "stable": self.stable,
            "spectral_radius": self.spectral_radius,
            "players": [{"player": i + 1, "passed": ok, "gare_residual": r, "gain_error": g, "gain_tol": gt}
                        for i, (ok, r, g, gt) in
                        enumerate(zip(self.player_passed, self.residual_norms, self.gain_errors, self.gain_tol))],
        }


def certify_nash(game: LQGame, prof: FeedbackProfile, values: Optional[ValueSolution] = None,
                 residual_tol: float = CERT_RESIDUAL_TOL,
                 gain_tol: Union[float, Sequence[float]] = CERT_GAIN_TOL) -> NashCertificate:
    """Check that ``prof`` is a Nash equilibrium of ``game``.

    Passes when the profile is stabilizing, every GARE residual is within
    residual_tol * max(1, ||P_i||_F), and every best response reproduces K_i
    within gain_tol.
    """
    stable, radius = is_stabilizing(game.dynamics, prof)
    if not stable:
        raise UnstableClosedLoop(f"profile is not stabilizing (spectral radius {radius:.6f})", spectral_radius=radius)
    if values is None:
        values = value_kernels(game, prof)
    gain_tols = list(_broadcast(gain_tol, game.n_players, "gain_tol"))
    residuals, errors, res_tols = [], [], []
    for i in range(game.n_players):
        P_i = values.P[i]
        residuals.append(float(np.linalg.norm(gare_residual(game, prof, P_i, i))))
        res_tols.append(residual_tol * max(1.0, float(np.linalg.norm(P_i))))
        K_br = best_response_gain(game.dynamics, game.costs.R[i][i], P_i, prof, i)
        errors.append(float(np.linalg.norm(K_br - prof.K[i])))
    return NashCertificate(values, residuals, errors, res_tols, gain_tols, stable, radius)


# ---------------------------------------------------------------------------
# Costs
# ---------------------------------------------------------------------------

def evaluate_cost(game: LQGame, prof: FeedbackProfile, x0: Sequence[float], horizon: int) -> List[float]:
    """Truncated costs sum_{t=0}^{horizon} x^T Q_i x + sum_j u_j^T R_ij u_j under u_j = -K_j x."""
    stable, radius = is_stabilizing(game.dynamics, prof)
    if not stable and horizon > MAX_UNSTABLE_HORIZON:
        raise DivergenceRisk(f"refusing a {horizon}-step cost on a non-stabilizing profile "
                             f"(spectral radius {radius:.6f})")
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.shape[0] != game.dynamics.n_states:
        raise DimensionMismatch(f"x0 must have {game.dynamics.n_states} entries, got {x.shape[0]}")
    F = closed_loop(game.dynamics, prof)
    kernels = [stage_kernel(game.costs, prof, i) for i in range(game.n_players)]
    totals = np.zeros(game.n_players)
    for _ in range(horizon + 1):
        totals += [x @ W @ x for W in kernels]
        x = F @ x
    return [float(c) for c in totals]


# ---------------------------------------------------------------------------
# Forward Nash solver
# ---------------------------------------------------------------------------

def solve_forward_ne(game: LQGame, initial_profile: Optional[FeedbackProfile] = None,
                     tol: float = FORWARD_TOL, max_iterations: int = FORWARD_MAX_ITERATIONS,
                     damping: float = 1.0) -> Tuple[FeedbackProfile, ValueSolution]:
    """Compute a feedback Nash equilibrium by Lyapunov iterations.

    Each iteration solves every player's Stein equation on the current closed
    loop and moves every gain toward its best response. A step that would
    leave the stabilizing set is halved until it does not (down to 1/64).
    Stops when the largest best-response change drops below ``tol``.
    """
    dyn = game.dynamics
    prof = initial_profile if initial_profile is not None else stabilizing_profile(dyn)
    prof.check_dimensions(dyn)
    stable, radius = is_stabilizing(dyn, prof)
    if not stable:
        raise UnstableClosedLoop(f"initial profile is not stabilizing (spectral radius {radius:.6f})",
                                 spectral_radius=radius)
    if not 0.0 < damping <= 1.0:
        raise InvalidParameters(f"damping must lie in (0, 1], got {damping}")

    for iteration in range(1, max_iterations + 1):
        values = value_kernels(game, prof)
        proposal = FeedbackProfile(tuple(best_response_gain(dyn, game.costs.R[i][i], values.P[i], prof, i)
                                         for i in range(game.n_players)))
        change = max(proposal.distance(prof))
        logger.debug(f"Forward iteration {iteration}: max gain change {change:.3e}")
        if change < tol:
            solution = value_kernels(game, proposal)
            if not solution.is_positive_definite():
                logger.warning("Forward solution has a value kernel that is not positive definite")
            logger.info(f"Forward Nash solver converged after {iteration} iterations")
            return proposal, solution

        step = damping
        while True:
            candidate = FeedbackProfile(tuple(k + step * (kn - k) for k, kn in zip(prof.K, proposal.K)))
            if is_stabilizing(dyn, candidate)[0]:
                break
            step /= 2.0
            if step < FORWARD_MIN_DAMPING:
                raise UnstableClosedLoop("forward iteration cannot stay inside the stabilizing set",
                                         spectral_radius=is_stabilizing(dyn, candidate)[1])
        prof = candidate

    raise NoConvergence(f"forward Nash solver did not converge in {max_iterations} iterations", last=prof)
