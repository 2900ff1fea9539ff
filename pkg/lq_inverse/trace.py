"""Per-iteration records shared by the model-based and model-free inverse solvers."""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

logger = logging.getLogger("lq_inverse")


class TraceStatus(str, Enum):
    CONVERGED = "Converged"
    MAX_ITERATIONS = "MaxIterations"
    ERROR = "Error"


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    q_step_norm: Tuple[float, ...]
    gain_distance: Tuple[float, ...]
    # NaN when the solver has no plant to evaluate A_i - B_i K~_i with.
    spectral_radius: Tuple[float, ...]
    gains: Tuple[np.ndarray, ...]
    elapsed_s: float
    # Q_i iterates after this step.
    Q: Tuple[np.ndarray, ...] = ()


@dataclass
class IterationTrace:
    n_players: int
    records: List[IterationRecord] = field(default_factory=list)
    status: Optional[TraceStatus] = None
    message: str = ""
    warnings: List[str] = field(default_factory=list)
    # Iterations where some player's Q step grew compared to the previous one.
    step_increases: int = 0

    def append(self, record: IterationRecord) -> None:
        expected = len(self.records) + 1
        if record.iteration != expected:
            raise ValueError(f"trace record {record.iteration} out of order, expected {expected}")
        if self.records:
            previous = self.records[-1].q_step_norm
            if any(now > before + 1e-12 for now, before in zip(record.q_step_norm, previous)):
                self.step_increases += 1
                logger.debug(f"Q step norm increased at iteration {record.iteration}")
        self.records.append(record)

    def warn(self, message: str) -> None:
        logger.warning(message)
        self.warnings.append(message)

    def finish(self, status: TraceStatus, message: str = "") -> None:
        self.status = status
        self.message = message

    @property
    def n_iterations(self) -> int:
        return len(self.records)

    @property
    def last(self) -> Optional[IterationRecord]:
        return self.records[-1] if self.records else None

    def to_frame(self, include_elapsed: bool = True) -> pd.DataFrame:
        """One row per iteration; player columns are 1-based."""
        rows = []
        for rec in self.records:
            row = {"iteration": rec.iteration}
            for name in ("q_step_norm", "gain_distance", "spectral_radius"):
                for p, value in enumerate(getattr(rec, name), start=1):
                    row[f"{name}_{p}"] = value
            if include_elapsed:
                row["elapsed_s"] = rec.elapsed_s
            rows.append(row)
        columns = ["iteration"] + [f"{name}_{p}" for name in ("q_step_norm", "gain_distance", "spectral_radius")
                                   for p in range(1, self.n_players + 1)]
        if include_elapsed:
            columns.append("elapsed_s")
        return pd.DataFrame(rows, columns=columns)

    def summary(self) -> dict:
        last = self.last
        return {
            "status": self.status.value if self.status else None,
            "iterations": self.n_iterations,
            "message": self.message,
            "warnings": list(self.warnings),
            "step_increases": self.step_increases,
            "final_q_step_norm": list(last.q_step_norm) if last else [],
            "final_gain_distance": list(last.gain_distance) if last else [],
        }
