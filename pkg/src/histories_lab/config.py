"""Environment-backed defaults.

Every knob has an in-code default; a ``.env`` file or the process environment
may override it, and CLI flags override both. Only the defaults live here;
nothing in the library reads the environment at call time.
"""

from os import getenv

from dotenv import load_dotenv

load_dotenv()

DEFAULT_ATOL = 1e-9
DEFAULT_MAX_WORKERS = 4
DEFAULT_SEED = 42


def _env_float(name: str, default: float) -> float:
    raw = getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return float(raw)
    except ValueError:
        raise RuntimeError(f"Invalid {name}={raw!r}; expected a float") from None


def _env_int(name: str, default: int) -> int:
    raw = getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise RuntimeError(f"Invalid {name}={raw!r}; expected an integer") from None


def default_atol() -> float:
    """Absolute tolerance (``HISTORIES_LAB_TOL``, default 1e-9)."""
    return _env_float("HISTORIES_LAB_TOL", DEFAULT_ATOL)


def max_workers() -> int:
    """Thread-pool width for scans and restarts (``HISTORIES_LAB_MAX_WORKERS``)."""
    workers = _env_int("HISTORIES_LAB_MAX_WORKERS", DEFAULT_MAX_WORKERS)
    if workers < 1:
        raise RuntimeError(f"Invalid HISTORIES_LAB_MAX_WORKERS={workers}; expected >= 1")
    return workers


def default_seed() -> int:
    """Master seed for searches (``HISTORIES_LAB_SEED``, default 42)."""
    return _env_int("HISTORIES_LAB_SEED", DEFAULT_SEED)
