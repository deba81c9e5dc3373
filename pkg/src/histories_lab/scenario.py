"""Scenario files: the JSON form of a state, a Hamiltonian and an event schedule.

Complex numbers are ``[re, im]`` pairs and matrices are row-major nested
lists, so a file is diffable and readable from any language. Floats are
written with ``repr`` precision, which makes write-then-read bit-identical.
"""

from __future__ import annotations

import json
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from histories_lab.errors import InvalidInputError
from histories_lab.histories import (
    Event,
    EventSchedule,
    HistoryFamily,
    ProjectorDecomposition,
    build_family,
    computational_basis,
    spin_basis,
    trivial_decomposition,
)
from histories_lab.kernel import ComplexMatrix, Tolerance, as_matrix, ket_projector, validate_density


def encode_matrix(matrix: NDArray[np.complex128]) -> list[list[list[float]]]:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(matrix)]


def decode_matrix(data: Any, name: str) -> ComplexMatrix:
    """``[[[re, im], …], …]`` to a read-only complex matrix."""
    try:
        pairs = np.array(data, dtype=np.float64)
    except (TypeError, ValueError):
        raise InvalidInputError("malformed scenario", f"{name} is not a nested list of [re, im] pairs") from None
    if pairs.ndim != 3 or pairs.shape[-1] != 2:
        raise InvalidInputError("malformed scenario", f"{name} must have shape (dim, dim, 2), got {pairs.shape}")
    # Parts set separately so a signed-zero imaginary part survives.
    matrix = np.empty(pairs.shape[:2], dtype=np.complex128)
    matrix.real = pairs[..., 0]
    matrix.imag = pairs[..., 1]
    return as_matrix(matrix, name)


@dataclass(frozen=True, eq=False)
class Scenario:
    dim: int
    rho: ComplexMatrix
    hamiltonian: ComplexMatrix
    events: tuple[Event, ...]

    @property
    def schedule(self) -> EventSchedule:
        return EventSchedule(self.hamiltonian, self.events)

    def family(self, tol: Tolerance | None = None) -> HistoryFamily:
        return build_family(self.schedule, tol)

    def to_dict(self) -> dict[str, Any]:
        return {
            "dim": self.dim,
            "rho": encode_matrix(self.rho),
            "hamiltonian": encode_matrix(self.hamiltonian),
            "events": [
                {
                    "time": event.time,
                    "labels": list(event.decomposition.labels),
                    "projectors": [encode_matrix(p) for p in event.decomposition.projectors],
                }
                for event in self.events
            ],
        }

    @classmethod
    def from_dict(cls, data: Any) -> Scenario:
        """Parse without validating physics; :func:`validate_scenario` does that."""
        if not isinstance(data, dict):
            raise InvalidInputError("malformed scenario", "top level must be a JSON object")
        missing = [key for key in ("dim", "rho", "events") if key not in data]
        if missing:
            raise InvalidInputError("malformed scenario", f"missing keys {missing}")
        dim = data["dim"]
        if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
            raise InvalidInputError("malformed scenario", f"dim must be a positive integer, got {dim!r}")

        rho = decode_matrix(data["rho"], "rho")
        raw_hamiltonian = data.get("hamiltonian")
        if raw_hamiltonian is None:
            hamiltonian = as_matrix(np.zeros((dim, dim)), "hamiltonian")
        else:
            hamiltonian = decode_matrix(raw_hamiltonian, "hamiltonian")
        for name, matrix in (("rho", rho), ("hamiltonian", hamiltonian)):
            if matrix.shape[0] != dim:
                raise InvalidInputError("dimension mismatch", f"{name} is {matrix.shape[0]}x{matrix.shape[0]}, dim is {dim}")

        if not isinstance(data["events"], list) or not data["events"]:
            raise InvalidInputError("malformed scenario", "events must be a non-empty list")
        events = []
        for k, raw in enumerate(data["events"], start=1):
            try:
                time, labels, projectors = float(raw["time"]), raw["labels"], raw["projectors"]
            except (KeyError, TypeError, ValueError):
                raise InvalidInputError("malformed scenario", f"event {k} needs time, labels and projectors") from None
            matrices = tuple(decode_matrix(p, f"event {k} projector {j}") for j, p in enumerate(projectors))
            for matrix in matrices:
                if matrix.shape[0] != dim:
                    raise InvalidInputError("dimension mismatch", f"event {k} projector is {matrix.shape[0]}x{matrix.shape[0]}, dim is {dim}")
            events.append(Event(time, ProjectorDecomposition(tuple(str(label) for label in labels), matrices)))
        return cls(dim, rho, hamiltonian, tuple(events))


def validate_scenario(scenario: Scenario, tol: Tolerance | None = None) -> EventSchedule:
    """Check the state, then every event; the error names the first failed invariant."""
    tol = tol or Tolerance()
    validate_density(scenario.rho, tol)
    schedule = scenario.schedule
    schedule.validate(tol)
    return schedule


def read_scenario(path: Path, tol: Tolerance | None = None) -> Scenario:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InvalidInputError("unreadable scenario", f"{path} does not exist") from None
    except UnicodeDecodeError as e:
        raise InvalidInputError("unreadable scenario", f"{path} is not UTF-8 text ({e.reason})") from None
    except OSError as e:
        raise InvalidInputError("unreadable scenario", f"{path} cannot be read ({e.strerror})") from None
    except json.JSONDecodeError as e:
        raise InvalidInputError("malformed scenario", f"{path} is not valid JSON ({e.msg} at line {e.lineno})") from None
    scenario = Scenario.from_dict(data)
    validate_scenario(scenario, tol)
    return scenario


def dumps(payload: dict[str, Any]) -> str:
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_scenario(scenario: Scenario, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(scenario.to_dict()), encoding="utf-8")
    return path


def scenario_from_schedule(schedule: EventSchedule, rho: ComplexMatrix) -> Scenario:
    return Scenario(schedule.dim, rho, schedule.hamiltonian, schedule.events)


# -- templates ----------------------------------------------------------------


def _witness() -> Scenario:
    return scenario_from_schedule(EventSchedule.static([spin_basis("x"), spin_basis("y")]), ket_projector([1, 0]))


def _x_then_z() -> Scenario:
    return scenario_from_schedule(
        EventSchedule.static([spin_basis("x"), computational_basis(2)]), ket_projector([1, 0])
    )


def _z_repeated() -> Scenario:
    return scenario_from_schedule(EventSchedule.static([spin_basis("z"), spin_basis("z")]), ket_projector([1, 1]))


def _trivial() -> Scenario:
    return scenario_from_schedule(
        EventSchedule.static([trivial_decomposition(2), computational_basis(2)]), ket_projector([1, 0])
    )


TEMPLATES: dict[str, Callable[[], Scenario]] = {
    "witness": _witness,
    "x-then-z": _x_then_z,
    "z-repeated": _z_repeated,
    "trivial": _trivial,
}


def template(name: str) -> Scenario:
    try:
        return TEMPLATES[name]()
    except KeyError:
        raise InvalidInputError("unknown template", f"choose one of {sorted(TEMPLATES)}, got {name!r}") from None
