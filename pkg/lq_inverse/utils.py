"""Utility functions: runtime configuration, paths, matrix (de)serialization and atomic file output."""

import os
import json
import logging
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from dotenv import load_dotenv

from lq_inverse.const import OUTPUT_DIR_ENV
from lq_inverse.exceptions import ConfigError

logger = logging.getLogger("lq_inverse")

# Paths
BASE_DIR = Path(__file__).parent
FIXTURES_DIR = BASE_DIR / "fixtures"
SCHEMA_FILE = BASE_DIR / "schema" / "session.schema.json"
DEFAULT_OUTPUT_DIR = Path("results")


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------

@dataclass
class Config:
    """Central configuration: set once at program start, read everywhere."""
    output_dir: Path = field(default_factory=lambda: DEFAULT_OUTPUT_DIR)
    log_file: str = "lq_inverse.log"
    progress: bool = False

    def __post_init__(self):
        self.output_dir = Path(self.output_dir)


_config = Config()


def configure(output_dir: Union[str, Path] = None, log_file: str = None, progress: bool = None) -> None:
    """Set global configuration. Call once at program start."""
    if output_dir is not None:
        _config.output_dir = Path(output_dir)
    if log_file is not None:
        _config.log_file = log_file
    if progress is not None:
        _config.progress = progress


def get_config() -> Config:
    """Get the current configuration."""
    return _config


def resolve_output_dir(cli_out: Optional[Union[str, Path]] = None,
                       session_out: Optional[Union[str, Path]] = None) -> Path:
    """Pick the output directory: --out, then the environment (.env honoured), then the session file."""
    if cli_out:
        return Path(cli_out)
    load_dotenv()
    env_out = os.environ.get(OUTPUT_DIR_ENV)
    if env_out:
        return Path(env_out)
    if session_out:
        return Path(session_out)
    return DEFAULT_OUTPUT_DIR


def fixture_path(name: str) -> Path:
    """Path of a bundled session fixture, e.g. ``fixture_path("sim1")``."""
    path = FIXTURES_DIR / (name if name.endswith(".json") else f"{name}.json")
    if not path.exists():
        raise ConfigError(f"no bundled fixture named {name}")
    return path


# ---------------------------------------------------------------------------
# Matrices
# ---------------------------------------------------------------------------

def matrix_to_json(X: np.ndarray) -> Dict[str, Any]:
    """Arrays-of-rows with explicit dims."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return {"dims": [int(X.shape[0]), int(X.shape[1])], "data": X.tolist()}


def matrix_from_json(value: Any, name: str = "matrix") -> np.ndarray:
    """Accept a number (1x1), nested rows, or ``{"dims": [r, c], "data": rows}``."""
    dims = None
    if isinstance(value, dict):
        if "data" not in value:
            raise ConfigError(f"{name}: matrix object needs a 'data' field")
        dims = value.get("dims")
        value = value["data"]
    if isinstance(value, (int, float)):
        X = np.array([[float(value)]])
    else:
        rows = list(value)
        if rows and not isinstance(rows[0], (list, tuple)):
            rows = [rows]
        widths = {len(r) for r in rows}
        if len(widths) > 1:
            raise ConfigError(f"{name}: rows have different lengths {sorted(widths)}")
        X = np.array(rows, dtype=float)
        if X.ndim != 2:
            X = X.reshape(len(rows), -1)
    if dims is not None and list(X.shape) != list(dims):
        raise ConfigError(f"{name}: dims {dims} do not match data of shape {list(X.shape)}")
    return X


def matrices_to_json(Xs: Sequence[np.ndarray]) -> List[Dict[str, Any]]:
    return [matrix_to_json(X) for X in Xs]


def table_to_json(table: Sequence[Sequence[np.ndarray]]) -> List[List[Dict[str, Any]]]:
    return [matrices_to_json(row) for row in table]


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

@contextmanager
def atomic_path(file_path: Union[str, Path]) -> Iterator[Path]:
    """Yield a temporary sibling path and move it over ``file_path`` once the block succeeds."""
    file_path = Path(file_path)
    os.makedirs(file_path.parent, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{file_path.name}.", dir=file_path.parent)
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, file_path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def save_json(data: Any, file_path: Union[str, Path]) -> None:
    """Save data as JSON to the specified file path (write to a temp file, then rename)."""
    file_path = Path(file_path)
    with atomic_path(file_path) as tmp:
        with open(tmp, 'w', encoding='utf-8') as f:
            json.dump(data, f, indent=2, sort_keys=True)
    logger.info(f"Data saved to {file_path}")


def load_json(file_path: Union[str, Path]) -> Any:
    """Load JSON data from file."""
    file_path = Path(file_path)
    if not file_path.exists():
        logger.warning(f"File not found: {file_path}")
        return None
    with open(file_path, 'r', encoding='utf-8') as f:
        return json.load(f)


def save_frame(df: pd.DataFrame, csv_path: Union[str, Path], parquet_path: Union[str, Path, None] = None) -> None:
    """Write a DataFrame as CSV and optionally Parquet, each atomically."""
    with atomic_path(csv_path) as tmp:
        df.to_csv(tmp, index=False)
    if parquet_path is not None:
        with atomic_path(parquet_path) as tmp:
            df.to_parquet(tmp, index=False)
    logger.info(f"Table saved to {csv_path}")
