"""Model-based inverse solver for LQ games.

Given the plant (A, B_i) and observed Nash gains K_{i,o}, alternate between
solving each player's modified GARE (a Stein equation on the observed closed
loop) for P_i^(s+1) and moving Q_i toward its inverse-optimal value:

    Q_i^(s+1) = Q_i^(s) + alpha_i * delta_i^T (R_ii + B_i^T P_i^(s+1) B_i) delta_i,
    delta_i   = (R_ii + B_i^T P_i^(s+1) B_i)^{-1} B_i^T P_i^(s+1) A_i - K_{i,o}.

The R table stays fixed for the whole run. The run stops once every player's
step ||Q_i^(s+1) - Q_i^(s)||_F is at most rho_i.
"""

import logging
import time
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from lq_inverse.const import PSD_TOL, Q0_JITTER, Q_DIVERGENCE_FACTOR, STABILITY_MARGIN
from lq_inverse.exceptions import (DivergentIteration, IllConditioned, InvalidParameters, LQGameError, MaxIterations,
                                   UnstableClosedLoop)
from lq_inverse.game import (CostParameters, FeedbackProfile, GameDynamics, InverseProblem, ValueSolution,
                             closed_loop, is_psd, is_stabilizing, min_eigenvalue, solve_checked, solve_stein,
                             spectral_radius, symmetrize)
from lq_inverse.trace import IterationRecord, IterationTrace, TraceStatus

logger = logging.getLogger("lq_inverse")


@dataclass(frozen=True)
class MbIterationState:
    """Iterate after ``s`` steps: Q holds Q^(s); P, delta, Delta, K_tilde come from the step that produced it."""
    s: int
    Q: Tuple[np.ndarray, ...]
    P: Tuple[np.ndarray, ...] = ()
    delta: Tuple[np.ndarray, ...] = ()
    Delta: Tuple[np.ndarray, ...] = ()
    K_tilde: Tuple[np.ndarray, ...] = ()
    q_step_norm: Tuple[float, ...] = ()
    converged: Tuple[bool, ...] = ()


class MbResult(NamedTuple):
    costs: CostParameters
    values: ValueSolution
    gains: FeedbackProfile
    trace: IterationTrace


def initial_q(problem: InverseProblem, trace: Optional[IterationTrace] = None) -> Tuple[np.ndarray, ...]:
    """Q^(0), with a tiny jitter where Q_i^(0) + sum_j K_jo^T R_ij K_jo is only semidefinite.

    Needs only the observed gains and the cost data, so both inverse solvers share it.
    """
    K = problem.observed_gains.K
    Q = []
    for i, q in enumerate(problem.Q0):
        M = q + sum(K[j].T @ problem.R[i][j] @ K[j] for j in range(problem.n_players))
        if min_eigenvalue(M) < Q0_JITTER:
            q = q + Q0_JITTER * np.eye(q.shape[0])
            message = f"Player {i + 1}: Q^(0) + sum K^T R K is only semidefinite, added {Q0_JITTER:.0e} * I"
            if trace is not None:
                trace.warn(message)
            else:
                logger.warning(message)
        Q.append(q)
    return tuple(Q)


def initial_state(problem: InverseProblem, trace: Optional[IterationTrace] = None) -> MbIterationState:
    return MbIterationState(s=0, Q=initial_q(problem, trace), converged=tuple(False for _ in problem.Q0))


def player_step(dyn: GameDynamics, observed: FeedbackProfile, R_row: Tuple[np.ndarray, ...], Q_i: np.ndarray,
                alpha: float, i: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """One update for player i: returns (P^(s+1), delta, Delta, K_tilde, Q^(s+1))."""
    K = observed.K
    F = closed_loop(dyn, observed)
    A_i = closed_loop(dyn, observed, exclude=i)
    B_i = dyn.B[i]
    M = Q_i + sum(K[j].T @ R_row[j] @ K[j] for j in range(observed.n_players))
    P = solve_stein(F, symmetrize(M))
    H_uu = R_row[i] + B_i.T @ P @ B_i
    K_tilde = solve_checked(H_uu, B_i.T @ P @ A_i, f"normal matrix of player {i + 1}", player=i)
    delta = K_tilde - K[i]
    Delta = symmetrize(delta.T @ H_uu @ delta)
    return P, delta, Delta, K_tilde, symmetrize(Q_i + alpha * Delta)


def mb_step(problem: InverseProblem, state: MbIterationState) -> MbIterationState:
    """Advance every player by one iteration; players are updated independently."""
    dyn = _require_dynamics(problem)
    P, delta, Delta, K_tilde, Q, steps = [], [], [], [], [], []
    converged = list(state.converged) if state.converged else [False] * problem.n_players
    for i in range(problem.n_players):
        if problem.freeze_converged and converged[i] and state.P:
            P.append(state.P[i])
            delta.append(state.delta[i])
            Delta.append(state.Delta[i])
            K_tilde.append(state.K_tilde[i])
            Q.append(state.Q[i])
            steps.append(0.0)
            continue
        p, d, D, kt, q = player_step(dyn, problem.observed_gains, problem.R[i], state.Q[i], problem.alpha[i], i)
        if not is_psd(D, PSD_TOL):
            logger.warning(f"Player {i + 1}: increment Delta has min eigenvalue {min_eigenvalue(D):.3e}")
        step = float(np.linalg.norm(q - state.Q[i]))
        P.append(p)
        delta.append(d)
        Delta.append(D)
        K_tilde.append(kt)
        Q.append(q)
        steps.append(step)
        converged[i] = step <= problem.rho[i]
    return MbIterationState(s=state.s + 1, Q=tuple(Q), P=tuple(P), delta=tuple(delta), Delta=tuple(Delta),
                            K_tilde=tuple(K_tilde), q_step_norm=tuple(steps), converged=tuple(converged))


def q_scale(problem: InverseProblem) -> Tuple[float, ...]:
    """max(1, ||Q_i^(0) + sum_j K_jo^T R_ij K_jo||_F) per player, the yardstick for divergence."""
    K = problem.observed_gains.K
    return tuple(max(1.0, float(np.linalg.norm(q + sum(K[j].T @ problem.R[i][j] @ K[j]
                                                         for j in range(problem.n_players)))))
                 for i, q in enumerate(problem.Q0))


def check_growth(Q: Sequence[np.ndarray], scale: Sequence[float], iteration: int) -> Optional[str]:
    """Describe the first player whose Q iterate is no longer finite or has outgrown its scale."""
    for i, (q, s) in enumerate(zip(Q, scale)):
        norm = float(np.linalg.norm(q))
        if not np.isfinite(norm) or norm > Q_DIVERGENCE_FACTOR * s:
            return (f"iteration {iteration}: ||Q_{i + 1}|| = {norm:.3e} exceeds {Q_DIVERGENCE_FACTOR:.0e} * {s:.3e}; "
                    f"the Q updates overshot and cannot decrease")
    return None


def mb_run(problem: InverseProblem, progress: bool = False) -> MbResult:
    """Run the model-based inverse solver to tolerance.

    Returns the recovered costs (Q^(s+1) with the fixed R table), the value
    kernels P^(s+1), the gains K_i = (R_ii + B_i^T P_i B_i)^{-1} B_i^T P_i A_i
    and the iteration trace. Every error raised once iterating carries the
    trace: MaxIterations when the cap is reached first, DivergentIteration
    when some Q_i outgrows its scale, UnstableClosedLoop when some
    A_i - B_i K~_i stops being stable.
    """
    dyn = _require_dynamics(problem)
    observed = problem.observed_gains
    stable, radius = is_stabilizing(dyn, observed)
    if not stable:
        raise UnstableClosedLoop(f"observed gains do not stabilize the plant (spectral radius {radius:.6f})",
                                 spectral_radius=radius)

    trace = IterationTrace(problem.n_players)
    for i, a in enumerate(problem.alpha):
        if a > 1.0:
            trace.warn(f"Player {i + 1}: step size {a} > 1, Q updates are no longer convex combinations")
    state = initial_state(problem, trace)
    scale = q_scale(problem)
    logger.info(f"Model-based inverse solve: {problem.n_players} players, n={dyn.n_states}, "
                f"alpha={list(problem.alpha)}, rho={list(problem.rho)}")

    start = time.perf_counter()
    try:
        for _ in tqdm(range(problem.max_iterations), desc="Model-based iterations", disable=not progress):
            state = mb_step(problem, state)
            radii = [spectral_radius(closed_loop(dyn, observed.with_gain(i, kt)))
                     for i, kt in enumerate(state.K_tilde)]
            trace.append(IterationRecord(iteration=state.s,
                                         q_step_norm=state.q_step_norm,
                                         gain_distance=tuple(float(np.linalg.norm(d)) for d in state.delta),
                                         spectral_radius=tuple(radii),
                                         gains=state.K_tilde,
                                         elapsed_s=time.perf_counter() - start,
                                         Q=state.Q))
            for i, r in enumerate(radii):
                if r >= 1.0 - STABILITY_MARGIN:
                    raise UnstableClosedLoop(f"iteration {state.s}: A_{i + 1} - B_{i + 1} K~_{i + 1} has spectral "
                                             f"radius {r:.6f}", spectral_radius=r, player=i)
            diverged = check_growth(state.Q, scale, state.s)
            if diverged:
                raise DivergentIteration(f"model-based solver diverged at {diverged}",
                                         last=_partial_result(problem, state, trace))
            if all(state.converged):
                trace.finish(TraceStatus.CONVERGED, f"all players within tolerance after {state.s} iterations")
                logger.info(f"Model-based solver converged after {state.s} iterations")
                break
        else:
            trace.finish(TraceStatus.MAX_ITERATIONS, f"no convergence in {problem.max_iterations} iterations")
            raise MaxIterations(f"model-based solver did not converge in {problem.max_iterations} iterations",
                                last=_result(problem, state, trace))
    except LQGameError as e:
        attach_trace(e, trace)
        raise
    except np.linalg.LinAlgError as e:
        trace.finish(TraceStatus.ERROR, str(e))
        raise IllConditioned(f"model-based iteration {state.s + 1} failed: {e}", trace=trace) from e

    return _result(problem, state, trace)


def attach_trace(error: LQGameError, trace: IterationTrace) -> None:
    if error.trace is None:
        error.trace = trace
    if trace.status is None:
        trace.finish(TraceStatus.ERROR, error.message)
        logger.error(f"Inverse run stopped after {trace.n_iterations} iterations: {error.message}")


def _result(problem: InverseProblem, state: MbIterationState, trace: IterationTrace) -> MbResult:
    return MbResult(costs=problem.costs_at(state.Q),
                    values=ValueSolution(state.P),
                    gains=FeedbackProfile(state.K_tilde),
                    trace=trace)


def _partial_result(problem: InverseProblem, state: MbIterationState, trace: IterationTrace) -> Optional[MbResult]:
    try:
        return _result(problem, state, trace)
    except LQGameError:
        return None


def _require_dynamics(problem: InverseProblem) -> GameDynamics:
    if problem.dynamics is None:
        raise InvalidParameters("the model-based solver needs the plant dynamics")
    return problem.dynamics


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------

def ioc_target(dyn: GameDynamics, observed: FeedbackProfile, R_row: Tuple[np.ndarray, ...], P_i: np.ndarray,
               i: int) -> np.ndarray:
    """Inverse-optimal target Q~_i for a given P_i, so that Q^(s+1) = (1 - alpha) Q^(s) + alpha Q~."""
    K = observed.K
    A_i = closed_loop(dyn, observed, exclude=i)
    B_i = dyn.B[i]
    H_uu = R_row[i] + B_i.T @ P_i @ B_i
    cross = A_i.T @ P_i @ B_i
    others = sum((K[j].T @ R_row[j] @ K[j] for j in range(observed.n_players) if j != i),
                 np.zeros_like(P_i))
    return symmetrize(-others + P_i - A_i.T @ P_i @ A_i + cross @ solve_checked(H_uu, cross.T, player=i))


def gare_pair_residuals(dyn: GameDynamics, observed: FeedbackProfile, costs: CostParameters, values: ValueSolution,
                    gains: FeedbackProfile) -> List[Tuple[float, float]]:
    """Frobenius residuals of the two modified GAREs whose joint solution forces K_i = K_{i,o}.

    First entry: Q_i + sum_j K_jo^T R_ij K_jo - P_i + (A_i - B_i K_io)^T P_i (A_i - B_i K_io).
    Second entry: the same with K_i in place of K_io for player i's own terms.
    """
    K = observed.K
    out = []
    for i in range(observed.n_players):
        A_i = closed_loop(dyn, observed, exclude=i)
        B_i = dyn.B[i]
        P = values.P[i]
        R_row = costs.R[i]
        others = sum((K[j].T @ R_row[j] @ K[j] for j in range(observed.n_players) if j != i), np.zeros_like(P))
        F_o = A_i - B_i @ K[i]
        first = costs.Q[i] + others + K[i].T @ R_row[i] @ K[i] - P + F_o.T @ P @ F_o
        K_i = gains.K[i]
        F_i = A_i - B_i @ K_i
        second = costs.Q[i] + others + K_i.T @ R_row[i] @ K_i - P + F_i.T @ P @ F_i
        out.append((float(np.linalg.norm(first)), float(np.linalg.norm(second))))
    return out


def gain_error_bound(problem: InverseProblem) -> List[float]:
    """Bound on ||K_i - K_io||_F at termination: sqrt(r_i * rho_i / (alpha_i * lambda_min(R_ii))), r_i = min(m_i, n)."""
    K = problem.observed_gains.K
    return [float(np.sqrt(min(K[i].shape) * rho / (alpha * min_eigenvalue(problem.R[i][i]))))
            for i, (rho, alpha) in enumerate(zip(problem.rho, problem.alpha))]


def q_function_kernel(dyn: GameDynamics, observed: FeedbackProfile, R_row: Tuple[np.ndarray, ...], Q_i: np.ndarray,
                      P_i: np.ndarray, i: int) -> np.ndarray:
    """Q-function kernel H_i assembled from the plant, for cross-checking the model-free regression.

    H_xx = Q_i + sum_{j!=i} K_jo^T R_ij K_jo + A_i^T P_i A_i, H_xu = A_i^T P_i B_i, H_uu = R_ii + B_i^T P_i B_i.
    """
    K = observed.K
    A_i = closed_loop(dyn, observed, exclude=i)
    B_i = dyn.B[i]
    others = sum((K[j].T @ R_row[j] @ K[j] for j in range(observed.n_players) if j != i), np.zeros_like(P_i))
    H_xx = Q_i + others + A_i.T @ P_i @ A_i
    H_xu = A_i.T @ P_i @ B_i
    H_uu = R_row[i] + B_i.T @ P_i @ B_i
    return symmetrize(np.block([[H_xx, H_xu], [H_xu.T, H_uu]]))
