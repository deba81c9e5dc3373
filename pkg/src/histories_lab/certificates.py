"""Anomaly certificates and the status of an anomaly scan.

A certificate is a self-contained record: ingredient criterion values that
show each ingredient satisfied the weakened condition, the offending histories,
and the violated quantity. :func:`to_dict` gives the JSON shape used in
reports; replaying a certificate lives with the lab that issued it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from histories_lab.errors import InvalidInputError
from histories_lab.histories import HistoryIndex


class AnomalyKind(str, Enum):
    """``str`` mixin so kinds serialise as plain strings in reports."""

    COMPOSITION_WEAK = "composition-weak"
    COMPOSITION_LINEAR = "composition-linear"
    PERTURBATION_WEAK = "perturbation-weak"
    PERTURBATION_LINEAR = "perturbation-linear"


class ScanStatus(str, Enum):
    """Outcome of an anomaly scan."""

    VIOLATED = "violated"
    """A value crossed the criterion by more than 10·atol; a certificate is attached."""
    MARGINAL = "marginal"
    """The extremal value sits within 10·atol of the boundary; never reported as a violation."""
    CLEAN = "clean"
    """Every value is safely inside the criterion."""
    SKIPPED = "skipped"
    """A precondition of the scan was not met; nothing was scanned."""


@dataclass(frozen=True)
class AnomalyCertificate:
    kind: AnomalyKind
    indices: tuple[HistoryIndex, ...]
    quantity: str
    value: float
    ingredients: dict[str, float]
    atol: float
    details: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not abs(self.value) > 10 * self.atol:
            raise InvalidInputError(
                "marginal certificate",
                f"{self.kind.value} certificate value {self.value:.3e} is within 10·atol of zero; not a violation",
                magnitude=abs(self.value),
            )

    @property
    def margin(self) -> float:
        """How far past the criterion the value sits."""
        return abs(self.value)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "indices": [list(index) for index in self.indices],
            "quantity": self.quantity,
            "value": self.value,
            "margin": self.margin,
            "ingredients": dict(sorted(self.ingredients.items())),
            "atol": self.atol,
            "details": self.details,
        }


@dataclass(frozen=True)
class AnomalyScan:
    """Extremal value found by a scan, its status, and the certificate if violated."""

    status: ScanStatus
    value: float
    indices: tuple[HistoryIndex, ...]
    certificate: AnomalyCertificate | None = None
    details: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": self.status.value,
            "value": self.value,
            "indices": [list(index) for index in self.indices],
            "certificate": self.certificate.to_dict() if self.certificate else None,
            "details": self.details,
        }
