"""Base class for the end-to-end anomaly demonstrations.

Subclass `Demo` to add a demonstration the CLI can run. Each demo wires the
witness families through one lab and exposes a single ``run()`` entry point.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, ClassVar

from histories_lab.certificates import AnomalyCertificate
from histories_lab.config import DEFAULT_MAX_WORKERS, DEFAULT_SEED
from histories_lab.kernel import Tolerance


@dataclass(frozen=True)
class DemoReport:
    """Narrative lines for stdout and the payload for the report file."""

    name: str
    narrative: tuple[str, ...]
    payload: dict[str, Any]
    certificates: tuple[AnomalyCertificate, ...] = field(default=())

    def to_dict(self) -> dict[str, Any]:
        return {
            "demo": self.name,
            "narrative": list(self.narrative),
            "certificates": [c.to_dict() for c in self.certificates],
            **self.payload,
        }


class Demo(ABC):
    """A runnable anomaly demonstration.

    The CLI addresses demos by their ``name`` class attribute and calls
    ``run()``.
    """

    name: ClassVar[str]

    def __init__(self, tol: Tolerance | None = None, *, seed: int = DEFAULT_SEED, max_workers: int = DEFAULT_MAX_WORKERS) -> None:
        self.tol = tol or Tolerance()
        self.seed = seed
        self.max_workers = max_workers

    @abstractmethod
    def run(self) -> DemoReport: ...
