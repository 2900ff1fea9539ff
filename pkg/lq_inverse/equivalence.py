"""Equivalent games: cost parameters that share a Nash equilibrium.

Changing the cross weights R_ij (j != i) and compensating in Q_i so that

    Q'_i + sum_{j!=i} K_jo^T R'_ij K_jo = Q_i + sum_{j!=i} K_jo^T R_ij K_jo

leaves the Stein constant term, hence P_i and every best response, untouched.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from lq_inverse.const import SYMMETRY_TOL
from lq_inverse.exceptions import DimensionMismatch, InvalidParameters, UnstableClosedLoop
from lq_inverse.game import (CostParameters, FeedbackProfile, LQGame, MatrixLike, ValueSolution, as_matrix,
                             best_response_gain, is_psd, is_stabilizing, is_symmetric, min_eigenvalue, symmetrize,
                             value_kernels)

logger = logging.getLogger("lq_inverse")


def generate_equivalent(game: LQGame, observed: FeedbackProfile,
                        new_offdiag_R: Sequence[Sequence[Optional[MatrixLike]]],
                        require_psd: bool = False) -> CostParameters:
    """Swap in new cross weights R'_ij and return the compensated (Q', R').

    ``new_offdiag_R`` is an N x N table; diagonal entries and ``None`` keep the
    current weight. R'_ij only has to be symmetric, so Q' may be indefinite
    unless ``require_psd`` is set.
    """
    N = game.n_players
    observed.check_dimensions(game.dynamics)
    if len(new_offdiag_R) != N or any(len(row) != N for row in new_offdiag_R):
        raise DimensionMismatch(f"replacement R table must be {N}x{N}")
    K = observed.K
    costs = game.costs
    Q_new, R_new = [], []
    for i in range(N):
        row, compensation = [], np.zeros_like(costs.Q[i])
        for j in range(N):
            value = new_offdiag_R[i][j]
            if i == j or value is None:
                row.append(costs.R[i][j])
                continue
            R_ij = as_matrix(value, f"R'_{i + 1}{j + 1}", i)
            if R_ij.shape != costs.R[i][j].shape:
                raise DimensionMismatch(f"R'_{i + 1}{j + 1} must be {costs.R[i][j].shape}, got {R_ij.shape}",
                                        player=i)
            if not is_symmetric(R_ij, SYMMETRY_TOL * max(1.0, float(np.linalg.norm(R_ij)))):
                raise InvalidParameters(f"R'_{i + 1}{j + 1} must be symmetric", player=i)
            R_ij = symmetrize(R_ij)
            compensation += K[j].T @ (costs.R[i][j] - R_ij) @ K[j]
            row.append(R_ij)
        Q_i = symmetrize(costs.Q[i] + compensation)
        if require_psd and not is_psd(Q_i):
            raise InvalidParameters(f"Q'_{i + 1} is indefinite (min eigenvalue {min_eigenvalue(Q_i):.3e})", player=i)
        Q_new.append(Q_i)
        R_new.append(tuple(row))
    logger.info(f"Generated equivalent cost parameters for {N} players")
    return CostParameters(tuple(Q_new), tuple(R_new))


@dataclass
class EquivalenceReport:
    equivalent: bool
    gain_errors: Tuple[List[float], List[float]]
    value_differences: List[float]
    same_values: List[bool]
    gain_tol: float
    value_tol: float
    spectral_radius: float
    values: Tuple[ValueSolution, ValueSolution] = field(repr=False, default=None)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "equivalent": self.equivalent,
            "gain_tol": self.gain_tol,
            "value_tol": self.value_tol,
            "spectral_radius": self.spectral_radius,
            "players": [{"player": i + 1,
                         "gain_error_game1": self.gain_errors[0][i],
                         "gain_error_game2": self.gain_errors[1][i],
                         "value_difference": self.value_differences[i],
                         "same_values": self.same_values[i]}
                        for i in range(len(self.value_differences))],
        }


def verify_equivalent(game1: LQGame, game2: LQGame, observed: FeedbackProfile, gain_tol: float = 1e-8,
                      value_tol: float = 1e-9) -> Tuple[bool, EquivalenceReport]:
    """Check that both games have ``observed`` as a Nash equilibrium.

    Equivalent when every best response reproduces K_io within ``gain_tol`` in
    both games. Whether the value kernels also coincide (within
    ``value_tol * max(1, ||P_i||)``) is reported but not required.
    """
    d1, d2 = game1.dynamics, game2.dynamics
    if d1.A.shape != d2.A.shape or not np.allclose(d1.A, d2.A, rtol=0.0, atol=1e-12) or \
            len(d1.B) != len(d2.B) or \
            any(b1.shape != b2.shape or not np.allclose(b1, b2, rtol=0.0, atol=1e-12) for b1, b2 in zip(d1.B, d2.B)):
        raise InvalidParameters("equivalence is only defined for games with the same dynamics")
    stable, radius = is_stabilizing(d1, observed)
    if not stable:
        raise UnstableClosedLoop(f"observed profile is not stabilizing (spectral radius {radius:.6f})",
                                 spectral_radius=radius)

    values = (value_kernels(game1, observed), value_kernels(game2, observed))
    errors = ([], [])
    for g, (game, vals) in enumerate(zip((game1, game2), values)):
        for i in range(game.n_players):
            K_br = best_response_gain(game.dynamics, game.costs.R[i][i], vals.P[i], observed, i)
            errors[g].append(float(np.linalg.norm(K_br - observed.K[i])))
    diffs = [float(np.linalg.norm(p1 - p2)) for p1, p2 in zip(values[0].P, values[1].P)]
    same = [d <= value_tol * max(1.0, float(np.linalg.norm(p))) for d, p in zip(diffs, values[0].P)]
    equivalent = all(e <= gain_tol for e in errors[0] + errors[1])
    logger.info(f"Equivalence check: {'equivalent' if equivalent else 'not equivalent'} "
                f"(max gain error {max(errors[0] + errors[1]):.3e})")
    report = EquivalenceReport(equivalent, errors, diffs, same, gain_tol, value_tol, radius, values)
    return equivalent, report
