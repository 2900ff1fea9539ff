"""Errors raised by the game solvers.

Every error carries a machine-readable ``code`` and the exit status the CLI
maps it to, so a failed session can be reported as JSON without guessing.
"""

from typing import Any, Dict, Optional


class LQGameError(Exception):
    """Base class for all errors raised by lq_inverse."""

    code = "lq_game_error"
    exit_code = 6

    def __init__(self, message: str, player: Optional[int] = None, trace: Any = None, **details: Any):
        super().__init__(message)
        self.message = message
        self.player = player
        # Iteration history of the solver that failed, when there is one.
        self.trace = trace
        self.details = details

    def to_dict(self) -> Dict[str, Any]:
        """Render the error as the JSON error artifact."""
        out = {"code": self.code, "exit_code": self.exit_code, "message": self.message}
        if self.player is not None:
            out["player"] = self.player + 1
        plain = {k: v for k, v in self.details.items() if isinstance(v, (int, float, str, bool, type(None)))}
        if plain:
            out["details"] = plain
        return out


class DimensionMismatch(LQGameError, ValueError):
    code = "dimension_mismatch"
    exit_code = 2


class InvalidParameters(LQGameError, ValueError):
    code = "invalid_parameters"
    exit_code = 2


class ConfigError(LQGameError, ValueError):
    code = "config_error"
    exit_code = 2


class UnstableClosedLoop(LQGameError):
    code = "unstable_closed_loop"
    exit_code = 5

    def __init__(self, message: str, spectral_radius: float = float("nan"), **kwargs: Any):
        super().__init__(message, spectral_radius=spectral_radius, **kwargs)
        self.spectral_radius = spectral_radius


class IllConditioned(LQGameError):
    code = "ill_conditioned"
    exit_code = 6

    def __init__(self, message: str, condition_number: float = float("inf"), **kwargs: Any):
        super().__init__(message, condition_number=condition_number, **kwargs)
        self.condition_number = condition_number


class PersistenceOfExcitationError(IllConditioned):
    code = "pe_failure"
    exit_code = 4


class InsufficientData(LQGameError):
    code = "insufficient_data"
    exit_code = 4


class NoConvergence(LQGameError):
    """Iteration cap reached; ``last`` holds the last iterate, ``trace`` the history."""

    code = "max_iterations"
    exit_code = 3

    def __init__(self, message: str, last: Any = None, **kwargs: Any):
        super().__init__(message, **kwargs)
        self.last = last


MaxIterations = NoConvergence


class DivergentIteration(NoConvergence):
    """Q iterates grew past any plausible solution; the monotone update cannot come back down."""

    code = "diverged"
    exit_code = 3


class DivergenceRisk(LQGameError):
    code = "divergence_risk"
    exit_code = 6


class DivergentTrajectory(LQGameError):
    code = "divergent_trajectory"
    exit_code = 6
