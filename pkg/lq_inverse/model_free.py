"""Model-free inverse solver (Q-learning form).

Each iteration fits, per player, the Q-function kernel

    H_i = [[H_xx, H_xu], [H_ux, H_uu]],   Q_i(x, u) = [x; u]^T H_i [x; u],

from the stored excited trajectory by batch least squares on the Bellman
identity

    z(k)^T H z(k) - z'(k+1)^T H z'(k+1) = x(k)^T (Q_i^(s) + sum_{j!=i} K_jo^T R_ij K_jo) x(k) + u(k)^T R_ii u(k),

with z(k) = [x(k); u(k)] as recorded and z'(k+1) = [x(k+1); -K_io x(k+1)].
The gain K~_i = H_uu^{-1} H_ux then drives the same Q update as the
model-based solver, with Q_i^(s+1) itself fitted from quadratic state features.

Nothing in this module reads the plant matrices; the inputs are trajectories,
observed gains and cost data only.
"""

import logging
import time
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from tqdm import tqdm

from lq_inverse.exceptions import (DimensionMismatch, DivergentIteration, IllConditioned, InsufficientData, LQGameError,
                                   MaxIterations)
from lq_inverse.game import (CostParameters, FeedbackProfile, InverseProblem, is_symmetric, min_eigenvalue,
                             solve_checked, symmetrize)
from lq_inverse.model_based import attach_trace, check_growth, initial_q, q_scale
from lq_inverse.trace import IterationRecord, IterationTrace, TraceStatus
from lq_inverse.trajectories import (Trajectory, augmented_pairs, check_pe, quadratic_features,
                                     regression_unknowns, unpack_symmetric)

logger = logging.getLogger("lq_inverse")


@dataclass(frozen=True)
class QFunctionKernel:
    H: np.ndarray
    n_states: int
    residual_norm: float = 0.0

    def __post_init__(self):
        H = np.array(self.H, dtype=float)
        if H.ndim != 2 or H.shape[0] != H.shape[1] or H.shape[0] <= self.n_states:
            raise DimensionMismatch(f"Q-function kernel of shape {H.shape} does not fit {self.n_states} states")
        if not is_symmetric(H, 1e-8 * max(1.0, float(np.linalg.norm(H)))):
            raise DimensionMismatch("Q-function kernel must be symmetric")
        H = symmetrize(H)
        H.setflags(write=False)
        object.__setattr__(self, "H", H)

    @property
    def n_inputs(self) -> int:
        return self.H.shape[0] - self.n_states

    @property
    def H_xx(self) -> np.ndarray:
        return self.H[:self.n_states, :self.n_states]

    @property
    def H_xu(self) -> np.ndarray:
        return self.H[:self.n_states, self.n_states:]

    @property
    def H_ux(self) -> np.ndarray:
        return self.H[self.n_states:, :self.n_states]

    @property
    def H_uu(self) -> np.ndarray:
        return self.H[self.n_states:, self.n_states:]

    def gain(self, player: Optional[int] = None) -> np.ndarray:
        """K = H_uu^{-1} H_ux."""
        if min_eigenvalue(self.H_uu) <= 0.0:
            raise IllConditioned(f"H_uu is not positive definite (min eigenvalue {min_eigenvalue(self.H_uu):.3e}); "
                                 f"the regression is corrupted by noise or lacks excitation", player=player)
        return solve_checked(self.H_uu, self.H_ux, "H_uu", player=player)


@dataclass(frozen=True)
class RegressionBatch:
    """Stacked regressors and targets. Psi/Phi fit H_i; Theta/EtaStack fit Q_i^(s+1)."""
    Psi: Optional[np.ndarray] = None
    Phi: Optional[np.ndarray] = None
    Theta: Optional[np.ndarray] = None
    EtaStack: Optional[np.ndarray] = None
    n_states: int = 0
    player: Optional[int] = None

    @property
    def sample_count(self) -> int:
        for rows in (self.Psi, self.Theta):
            if rows is not None:
                return rows.shape[0]
        return 0


class MfResult(NamedTuple):
    costs: CostParameters
    kernels: List[QFunctionKernel]
    gains: FeedbackProfile
    trace: IterationTrace


# ---------------------------------------------------------------------------
# Regressions
# ---------------------------------------------------------------------------

def stage_weight(Q_i: np.ndarray, R_row: Sequence[np.ndarray], observed: FeedbackProfile, i: int) -> np.ndarray:
    """Q_i + sum_{j != i} K_jo^T R_ij K_jo."""
    K = observed.K
    return Q_i + sum((K[j].T @ R_row[j] @ K[j] for j in range(observed.n_players) if j != i),
                     np.zeros_like(Q_i))


def build_h_regression(traj: Trajectory, Q_s: np.ndarray, R_row: Sequence[np.ndarray], observed: FeedbackProfile,
                       i: int, next_action: str = "policy", window: Optional[int] = None,
                       check: bool = True) -> RegressionBatch:
    """Bellman regression rows for player i at the current Q_i^(s).

    Targets are rebuilt from the stored samples on every call, so one data
    set serves every iteration.
    """
    K_o = observed.K[i]
    n = traj.n_states
    if K_o.shape != (traj.n_inputs, n):
        raise DimensionMismatch(f"observed gain of player {i + 1} is {K_o.shape}, trajectory needs "
                                f"{(traj.n_inputs, n)}", player=i)
    unknowns = regression_unknowns(n, traj.n_inputs)
    now, nxt = augmented_pairs(traj, K_o, next_action=next_action, window=window)
    if now.shape[0] < unknowns:
        raise InsufficientData(f"{now.shape[0]} samples for {unknowns} Q-function unknowns", player=i)
    psi = quadratic_features(now) - quadratic_features(nxt)
    if check:
        check_pe(psi, player=i)
    W = stage_weight(Q_s, R_row, observed, i)
    x, u = now[:, :n], now[:, n:]
    phi = np.einsum("ka,ab,kb->k", x, W, x) + np.einsum("ka,ab,kb->k", u, R_row[i], u)
    return RegressionBatch(Psi=psi, Phi=phi, n_states=n, player=i)


def _lstsq(X: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, float]:
    solution, _, _, _ = scipy.linalg.lstsq(X, y, lapack_driver="gelsy")
    return solution, float(np.linalg.norm(X @ solution - y))


def solve_h(batch: RegressionBatch) -> QFunctionKernel:
    """Least-squares fit of the symmetric kernel H_i (orthogonal factorization, not normal equations)."""
    check_pe(batch.Psi, player=batch.player)
    d = int(round((np.sqrt(8 * batch.Psi.shape[1] + 1) - 1) / 2))
    theta, residual = _lstsq(batch.Psi, batch.Phi)
    logger.debug(f"Player {(batch.player or 0) + 1}: H regression residual {residual:.3e}")
    return QFunctionKernel(unpack_symmetric(theta, d), batch.n_states, residual)


def delta_from_h(kernel: QFunctionKernel, K_o_i: np.ndarray, player: Optional[int] = None) -> np.ndarray:
    """(H_uu^{-1} H_ux - K_io)^T H_uu (H_uu^{-1} H_ux - K_io)."""
    delta = kernel.gain(player) - K_o_i
    return symmetrize(delta.T @ kernel.H_uu @ delta)


def q_regression(traj: Trajectory, Q_s: np.ndarray, Delta_i: np.ndarray, alpha_i: float) -> RegressionBatch:
    """Rows x(k) -> x(k)^T Q x(k) with targets x^T Q_s x + alpha x^T Delta x."""
    x = traj.states[:traj.length]
    eta = np.einsum("ka,ab,kb->k", x, Q_s + alpha_i * Delta_i, x)
    return RegressionBatch(Theta=quadratic_features(x), EtaStack=eta, n_states=traj.n_states,
                           player=traj.excited_player)


def update_q_lsq(traj: Trajectory, Q_s: np.ndarray, Delta_i: np.ndarray, alpha_i: float) -> np.ndarray:
    """Fit Q_i^(s+1) from the stored states; equals Q_s + alpha * Delta when the states span the quadratic basis."""
    batch = q_regression(traj, Q_s, Delta_i, alpha_i)
    n = traj.n_states
    if batch.Theta.shape[0] < n * (n + 1) // 2:
        raise InsufficientData(f"{batch.Theta.shape[0]} samples for {n * (n + 1) // 2} unknowns of Q",
                               player=traj.excited_player)
    check_pe(batch.Theta, player=traj.excited_player)
    theta, _ = _lstsq(batch.Theta, batch.EtaStack)
    return symmetrize(unpack_symmetric(theta, n))


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------

def _order_data(problem: InverseProblem, data: Sequence[Trajectory]) -> List[Trajectory]:
    N = problem.n_players
    by_player = {t.excited_player: t for t in data}
    if len(data) != N or sorted(by_player) != list(range(N)):
        raise DimensionMismatch(f"need exactly one excited trajectory per player (players 1..{N}), got "
                                f"{sorted(p + 1 for p in by_player)}")
    n = problem.observed_gains.K[0].shape[1]
    for i in range(N):
        traj = by_player[i]
        if traj.n_states != n or traj.n_inputs != problem.observed_gains.K[i].shape[0]:
            raise DimensionMismatch(f"trajectory of player {i + 1} has {traj.n_states} states and "
                                    f"{traj.n_inputs} inputs", player=i)
    return [by_player[i] for i in range(N)]


def mf_player_step(traj: Trajectory, Q_s: np.ndarray, R_row: Sequence[np.ndarray], observed: FeedbackProfile,
                   alpha: float, i: int, next_action: str = "policy"):
    """One update for player i: returns (kernel, K_tilde, Delta, Q^(s+1))."""
    kernel = solve_h(build_h_regression(traj, Q_s, R_row, observed, i, next_action=next_action, check=False))
    K_tilde = kernel.gain(i)
    Delta = delta_from_h(kernel, observed.K[i], i)
    return kernel, K_tilde, Delta, update_q_lsq(traj, Q_s, Delta, alpha)


def mf_run(problem: InverseProblem, data: Sequence[Trajectory], next_action: str = "policy",
           progress: bool = False) -> MfResult:
    """Run the model-free inverse solver on one excited trajectory per player.

    ``problem.dynamics`` is never read. Returns the recovered costs, the final
    Q-function kernels, the gains K_i = H_uu^{-1} H_ux and the trace (whose
    spectral radius columns are NaN). Raises MaxIterations when the cap is reached
    first and DivergentIteration when some Q_i outgrows its scale, both with
    the trace attached.
    """
    data = _order_data(problem, data)
    observed = problem.observed_gains
    N = problem.n_players
    trace = IterationTrace(N)
    for i, a in enumerate(problem.alpha):
        if a > 1.0:
            trace.warn(f"Player {i + 1}: step size {a} > 1, Q updates are no longer convex combinations")

    # Psi does not depend on the iterate; check excitation once up front.
    for i, traj in enumerate(data):
        batch = build_h_regression(traj, problem.Q0[i], problem.R[i], observed, i, next_action=next_action)
        logger.debug(f"Player {i + 1}: {batch.sample_count} regression rows")

    Q = list(initial_q(problem, trace))
    scale = q_scale(problem)
    kernels: List[Optional[QFunctionKernel]] = [None] * N
    K_tilde: List[Optional[np.ndarray]] = [None] * N
    converged = [False] * N
    logger.info(f"Model-free inverse solve: {N} players, {data[0].length} samples each, "
                f"alpha={list(problem.alpha)}, rho={list(problem.rho)}")

    start = time.perf_counter()
    try:
        for iteration in tqdm(range(1, problem.max_iterations + 1), desc="Model-free iterations",
                              disable=not progress):
            steps, distances = [], []
            for i in range(N):
                if problem.freeze_converged and converged[i]:
                    steps.append(0.0)
                    distances.append(float(np.linalg.norm(K_tilde[i] - observed.K[i])))
                    continue
                kernels[i], K_tilde[i], _, Q_next = mf_player_step(data[i], Q[i], problem.R[i], observed,
                                                                   problem.alpha[i], i, next_action)
                step = float(np.linalg.norm(Q_next - Q[i]))
                Q[i] = Q_next
                steps.append(step)
                distances.append(float(np.linalg.norm(K_tilde[i] - observed.K[i])))
                converged[i] = step <= problem.rho[i]
            trace.append(IterationRecord(iteration=iteration,
                                         q_step_norm=tuple(steps),
                                         gain_distance=tuple(distances),
                                         spectral_radius=tuple(float("nan") for _ in range(N)),
                                         gains=tuple(K_tilde),
                                         elapsed_s=time.perf_counter() - start,
                                         Q=tuple(Q)))
            diverged = check_growth(Q, scale, iteration)
            if diverged:
                raise DivergentIteration(f"model-free solver diverged at {diverged}")
            if all(converged):
                trace.finish(TraceStatus.CONVERGED, f"all players within tolerance after {iteration} iterations")
                logger.info(f"Model-free solver converged after {iteration} iterations")
                break
        else:
            trace.finish(TraceStatus.MAX_ITERATIONS, f"no convergence in {problem.max_iterations} iterations")
            raise MaxIterations(f"model-free solver did not converge in {problem.max_iterations} iterations",
                                last=_result(problem, Q, kernels, K_tilde, trace))
    except LQGameError as e:
        attach_trace(e, trace)
        raise
    except np.linalg.LinAlgError as e:
        trace.finish(TraceStatus.ERROR, str(e))
        raise IllConditioned(f"model-free iteration {trace.n_iterations + 1} failed: {e}", trace=trace) from e

    return _result(problem, Q, kernels, K_tilde, trace)


def _result(problem: InverseProblem, Q, kernels, K_tilde, trace: IterationTrace) -> MfResult:
    return MfResult(costs=problem.costs_at(Q), kernels=list(kernels), gains=FeedbackProfile(tuple(K_tilde)),
                    trace=trace)
