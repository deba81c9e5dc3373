"""Projector decompositions, event schedules, class operators and coarse-graining.

The flow mirrors how a family of histories is defined::

    ProjectorDecomposition (Schrödinger picture, one per event)
        -> EventSchedule (times + Hamiltonian)
        -> heisenberg_projectors   P(t) = U†(t) P U(t)
        -> build_family            C_α = P_αn(t_n) ··· P_α1(t_1)
        -> coarse_grain            C̄ = Σ_{α∈cell} C_α

All types are frozen dataclasses over read-only matrices. Index sets are always
enumerated in the Cartesian-product order of the decompositions' labels, so the
same schedule yields the same family, entry for entry, on every run.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from functools import reduce
from itertools import product
from operator import add, matmul

import numpy as np
from loguru import logger
from numpy.typing import ArrayLike

from histories_lab.errors import InvalidInputError, NumericFailure
from histories_lab.kernel import (
    ComplexMatrix,
    Tolerance,
    as_matrix,
    dagger,
    frozen,
    hermitian_defect,
    identity,
    ket_projector,
    matexp_unitary,
    max_abs,
    require_hermitian,
)

HistoryIndex = tuple[str, ...]
"""One outcome label per event, earliest first."""


@dataclass(frozen=True, eq=False)
class ProjectorDecomposition:
    """A labelled set of projectors meant to resolve the identity."""

    labels: tuple[str, ...]
    projectors: tuple[ComplexMatrix, ...]

    def __post_init__(self) -> None:
        if not self.labels:
            raise InvalidInputError("empty decomposition", "a decomposition needs at least one outcome")
        if len(self.labels) != len(self.projectors):
            raise InvalidInputError(
                "label mismatch", f"{len(self.labels)} labels for {len(self.projectors)} projectors"
            )
        if len(set(self.labels)) != len(self.labels):
            raise InvalidInputError("label mismatch", f"labels must be distinct, got {list(self.labels)}")
        dims = {p.shape for p in self.projectors}
        if len(dims) != 1:
            raise InvalidInputError("dimension mismatch", f"projectors have shapes {sorted(dims)}")

    @classmethod
    def from_matrices(cls, labels: Sequence[str], projectors: Sequence[ArrayLike]) -> ProjectorDecomposition:
        return cls(
            labels=tuple(str(label) for label in labels),
            projectors=tuple(as_matrix(p, f"projector {k}") for k, p in enumerate(projectors)),
        )

    @property
    def dim(self) -> int:
        return self.projectors[0].shape[0]

    def projector(self, label: str) -> ComplexMatrix:
        try:
            return self.projectors[self.labels.index(label)]
        except ValueError:
            raise InvalidInputError("label mismatch", f"unknown outcome label {label!r}") from None

    def conjugated(self, unitary: ComplexMatrix) -> ProjectorDecomposition:
        """``U† P U`` for every projector."""
        u_dag = dagger(unitary)
        return ProjectorDecomposition(self.labels, tuple(frozen(u_dag @ p @ unitary) for p in self.projectors))


@dataclass(frozen=True)
class DecompositionReport:
    """Largest violation of each projector-decomposition invariant."""

    hermiticity: float
    idempotency: float
    orthogonality: float
    completeness: float
    zero_projectors: tuple[str, ...]
    atol: float

    @property
    def violations(self) -> dict[str, float]:
        """Failed invariants and their magnitudes, in checking order."""
        measured = {
            "hermiticity violation": self.hermiticity,
            "idempotency violation": self.idempotency,
            "orthogonality violation": self.orthogonality,
            "completeness violation": self.completeness,
        }
        return {name: value for name, value in measured.items() if not value <= self.atol}

    @property
    def passed(self) -> bool:
        return self.first_failure is None

    @property
    def first_failure(self) -> str | None:
        violations = self.violations
        if violations:
            return next(iter(violations))
        if self.zero_projectors:
            return "zero projector"
        return None

    def raise_if_failed(self, where: str = "decomposition") -> None:
        failure = self.first_failure
        if failure is None:
            return
        if failure == "zero projector":
            raise InvalidInputError(failure, f"{where} has zero projectors for outcomes {list(self.zero_projectors)}")
        violations = self.violations
        details = ", ".join(f"{name} {value:.3e}" for name, value in violations.items())
        raise InvalidInputError(failure, f"{where}: {details} (atol {self.atol:.1e})", violations[failure])


def validate_decomposition(d: ProjectorDecomposition, tol: Tolerance | None = None) -> DecompositionReport:
    """Measure hermiticity, idempotency, mutual orthogonality and completeness."""
    tol = tol or Tolerance()
    hermiticity = max(hermitian_defect(p) for p in d.projectors)
    idempotency = max(max_abs(p @ p - p) for p in d.projectors)
    orthogonality = max(
        (max_abs(a @ b) for i, a in enumerate(d.projectors) for j, b in enumerate(d.projectors) if i != j),
        default=0.0,
    )
    completeness = max_abs(reduce(add, d.projectors) - np.eye(d.dim))
    zero = tuple(label for label, p in zip(d.labels, d.projectors, strict=True) if max_abs(p) <= tol.atol)
    return DecompositionReport(
        hermiticity=hermiticity,
        idempotency=idempotency,
        orthogonality=orthogonality,
        completeness=completeness,
        zero_projectors=zero,
        atol=tol.atol,
    )


@dataclass(frozen=True, eq=False)
class Event:
    time: float
    decomposition: ProjectorDecomposition


@dataclass(frozen=True, eq=False)
class EventSchedule:
    """Ordered projective events under a time-independent Hamiltonian.

    Decompositions are given in the Schrödinger picture; see
    :func:`heisenberg_projectors` for the evolved ones.
    """

    hamiltonian: ComplexMatrix
    events: tuple[Event, ...]

    def __post_init__(self) -> None:
        if not self.events:
            raise InvalidInputError("empty schedule", "a schedule needs at least one event")
        times = [e.time for e in self.events]
        if not all(np.isfinite(times)):
            raise InvalidInputError("finiteness", f"event times must be finite, got {times}")
        if any(later <= earlier for earlier, later in zip(times, times[1:], strict=False)):
            raise InvalidInputError("time ordering", f"event times must be strictly increasing, got {times}")
        dim = self.hamiltonian.shape[0]
        for k, event in enumerate(self.events, start=1):
            if event.decomposition.dim != dim:
                raise InvalidInputError(
                    "dimension mismatch", f"event {k} has dimension {event.decomposition.dim}, hamiltonian {dim}"
                )

    @classmethod
    def static(cls, decompositions: Iterable[ProjectorDecomposition], times: Iterable[float] | None = None) -> EventSchedule:
        """Schedule with ``H = 0``; times default to ``0, 1, 2, …``."""
        decompositions = tuple(decompositions)
        times = tuple(times) if times is not None else tuple(float(k) for k in range(len(decompositions)))
        dim = decompositions[0].dim
        return cls(
            hamiltonian=frozen(np.zeros((dim, dim), dtype=np.complex128)),
            events=tuple(Event(float(t), d) for t, d in zip(times, decompositions, strict=True)),
        )

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @property
    def times(self) -> tuple[float, ...]:
        return tuple(e.time for e in self.events)

    @property
    def decompositions(self) -> tuple[ProjectorDecomposition, ...]:
        return tuple(e.decomposition for e in self.events)

    def validate(self, tol: Tolerance | None = None) -> None:
        """Raise :class:`InvalidInputError` on the first failed invariant."""
        tol = tol or Tolerance()
        require_hermitian(self.hamiltonian, tol, "hamiltonian")
        for k, event in enumerate(self.events, start=1):
            validate_decomposition(event.decomposition, tol).raise_if_failed(f"event {k}")


def heisenberg_projectors(schedule: EventSchedule, tol: Tolerance | None = None) -> tuple[ProjectorDecomposition, ...]:
    """``P(t_k) = U†(t_k) P U(t_k)`` with ``U(t) = exp(−iHt)`` for every event."""
    tol = tol or Tolerance()
    schedule.validate(tol)
    if not np.any(schedule.hamiltonian):
        return schedule.decompositions

    evolved = []
    for k, event in enumerate(schedule.events, start=1):
        if event.time == 0:
            evolved.append(event.decomposition)
            continue
        decomposition = event.decomposition.conjugated(matexp_unitary(schedule.hamiltonian, event.time, tol))
        report = validate_decomposition(decomposition, Tolerance(tol.margin))
        if not report.passed:
            raise NumericFailure(f"evolved projectors at event {k} lost their invariants: {report.first_failure}")
        evolved.append(decomposition)
    return tuple(evolved)


@dataclass(frozen=True, eq=False)
class HistoryFamily:
    """Class operators keyed by history index, in enumeration order.

    ``schedule`` is set for families built from an :class:`EventSchedule`;
    coarse-grained, composite and perturbed families carry ``None`` (or the
    schedule they were derived from) and describe their origin in
    ``provenance``. Completeness ``Σ C_α = I`` is a property of built and
    coarse-grained families, not of the type: perturbed families deliberately
    break it.
    """

    indices: tuple[HistoryIndex, ...]
    class_ops: tuple[ComplexMatrix, ...]
    schedule: EventSchedule | None = None
    provenance: str = "schedule"
    _positions: dict[HistoryIndex, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.indices) != len(self.class_ops):
            raise InvalidInputError("label mismatch", f"{len(self.indices)} indices for {len(self.class_ops)} class operators")
        if not self.indices:
            raise InvalidInputError("empty family", "a family needs at least one history")
        if len(set(self.indices)) != len(self.indices):
            raise InvalidInputError("label mismatch", "history indices must be distinct")
        object.__setattr__(self, "_positions", {index: i for i, index in enumerate(self.indices)})

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def dim(self) -> int:
        return self.class_ops[0].shape[0]

    def position(self, index: HistoryIndex) -> int:
        try:
            return self._positions[tuple(index)]
        except KeyError:
            raise InvalidInputError("label mismatch", f"unknown history {index!r}") from None

    def class_op(self, index: HistoryIndex) -> ComplexMatrix:
        return self.class_ops[self.position(index)]

    def stacked(self) -> np.ndarray:
        """Class operators as an ``(N, dim, dim)`` array."""
        return np.stack(self.class_ops)

    def completeness_defect(self) -> float:
        """``max |Σ_α C_α − I|``."""
        return max_abs(reduce(add, self.class_ops) - np.eye(self.dim))


def build_family(schedule: EventSchedule, tol: Tolerance | None = None) -> HistoryFamily:
    """Time-ordered class operators for every history of ``schedule``."""
    tol = tol or Tolerance()
    evolved = heisenberg_projectors(schedule, tol)
    indices: list[HistoryIndex] = []
    class_ops: list[ComplexMatrix] = []
    for index in product(*(d.labels for d in evolved)):
        # Latest time leftmost.
        factors = [d.projector(label) for d, label in zip(reversed(evolved), reversed(index), strict=True)]
        indices.append(index)
        class_ops.append(frozen(reduce(matmul, factors)))
    family = HistoryFamily(tuple(indices), tuple(class_ops), schedule=schedule)
    defect = family.completeness_defect()
    if not defect <= tol.margin:
        raise NumericFailure(f"class operators do not sum to the identity (max deviation {defect:.3e})")
    logger.debug("Built family: {} histories over {} events, dim {}", len(family), len(schedule.events), family.dim)
    return family


@dataclass(frozen=True)
class Partition:
    """Disjoint labelled cells of history indices."""

    cells: tuple[tuple[HistoryIndex, ...], ...]
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.cells) != len(self.labels):
            raise InvalidInputError("partition", f"{len(self.cells)} cells for {len(self.labels)} labels")
        if len(set(self.labels)) != len(self.labels):
            raise InvalidInputError("partition", "cell labels must be distinct")
        if any(not cell for cell in self.cells):
            raise InvalidInputError("partition", "cells must be non-empty")

    @classmethod
    def from_cells(cls, cells: Iterable[Iterable[HistoryIndex]]) -> Partition:
        """Cells with labels derived from their members (``a,b|c,d``)."""
        cells = tuple(tuple(tuple(index) for index in cell) for cell in cells)
        return cls(cells, tuple(cell_label(cell) for cell in cells))

    @classmethod
    def singletons(cls, family: HistoryFamily) -> Partition:
        return cls.from_cells([index] for index in family.indices)

    @classmethod
    def whole(cls, family: HistoryFamily) -> Partition:
        return cls((family.indices,), ("all",))

    @classmethod
    def merging(cls, family: HistoryFamily, members: Iterable[HistoryIndex]) -> Partition:
        """Merge ``members`` into one cell; every other history stays alone.

        The merged cell sits where its earliest member appears in the
        family's enumeration order; members are kept in that order too.
        """
        wanted = {tuple(m) for m in members}
        unknown = wanted - set(family.indices)
        if unknown:
            raise InvalidInputError("partition", f"unknown histories {sorted(unknown)}")
        merged = tuple(index for index in family.indices if index in wanted)
        cells: list[tuple[HistoryIndex, ...]] = []
        for index in family.indices:
            if index not in wanted:
                cells.append((index,))
            elif index == merged[0]:
                cells.append(merged)
        return cls.from_cells(cells)

    def validate_for(self, family: HistoryFamily) -> None:
        seen: list[HistoryIndex] = [index for cell in self.cells for index in cell]
        if len(seen) != len(set(seen)):
            raise InvalidInputError("partition", "cells overlap")
        if set(seen) != set(family.indices):
            missing = set(family.indices) - set(seen)
            extra = set(seen) - set(family.indices)
            raise InvalidInputError("partition", f"not a partition of the family (missing {sorted(missing)}, unknown {sorted(extra)})")


def cell_label(cell: Sequence[HistoryIndex]) -> str:
    return "|".join(",".join(index) for index in cell)


def coarse_grain(family: HistoryFamily, partition: Partition) -> HistoryFamily:
    """Sum class operators within each cell.

    Members are summed left to right in cell order, so a singleton cell
    reproduces its class operator bit for bit.
    """
    partition.validate_for(family)
    class_ops = tuple(frozen(reduce(add, (family.class_op(index) for index in cell))) for cell in partition.cells)
    return HistoryFamily(
        indices=tuple((label,) for label in partition.labels),
        class_ops=class_ops,
        schedule=None,
        provenance="coarse-grained",
    )


# -- standard bases ----------------------------------------------------------

_SPIN_KETS: dict[str, tuple[tuple[complex, complex], tuple[complex, complex]]] = {
    "x": ((1, 1), (1, -1)),
    "y": ((1, 1j), (1, -1j)),
    "z": ((1, 0), (0, 1)),
}


def spin_basis(axis: str) -> ProjectorDecomposition:
    """Spin-½ eigenprojectors along ``x``, ``y`` or ``z``, labelled ``+``/``-``."""
    try:
        plus, minus = _SPIN_KETS[axis]
    except KeyError:
        raise InvalidInputError("unknown basis", f"spin axis must be one of x, y, z, got {axis!r}") from None
    return ProjectorDecomposition(("+", "-"), (ket_projector(plus), ket_projector(minus)))


def computational_basis(dim: int) -> ProjectorDecomposition:
    """Rank-1 projectors onto ``|0⟩ … |dim−1⟩``, labelled ``"0" … "dim−1"``."""
    return ProjectorDecomposition(
        tuple(str(k) for k in range(dim)),
        tuple(ket_projector(np.eye(dim)[k]) for k in range(dim)),
    )


def trivial_decomposition(dim: int) -> ProjectorDecomposition:
    """The one-outcome decomposition ``{I}``, labelled ``"1"``."""
    return ProjectorDecomposition(("1",), (identity(dim),))
