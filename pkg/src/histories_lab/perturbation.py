"""Sudden phase kicks at one event and their effect on each criterion.

A kick at event ``k`` is the impulse ``δH(t) = δ(t − t_k − 0)·Σ λ_a P_a(t_k)``;
it applies ``U = Σ_a e^{−iλ_a} P_a(t_k)`` just after ``t_k``. Later Heisenberg
projectors become ``U† P(t_j) U``, and the product telescopes to

    C_α → e^{−iλ_{α_k}} U† C_α,

so ``D(α′, α) → e^{i(λ_{α′_k} − λ_{α_k})} D(α′, α)``. Moduli are unchanged,
which keeps strong decoherence intact; real parts rotate into imaginary ones
and back, which is how weak decoherence and linear positivity are lost.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import reduce
from itertools import product
from operator import matmul

import numpy as np
from loguru import logger

from histories_lab.certificates import AnomalyCertificate, AnomalyKind, AnomalyScan, ScanStatus
from histories_lab.consistency import (
    ConsistencyReport,
    DecoherenceFunctional,
    classify,
    decoherence_functional,
    first_extremal,
    linear_amplitudes,
)
from histories_lab.config import DEFAULT_MAX_WORKERS
from histories_lab.errors import InvalidInputError, NumericFailure, PreconditionError
from histories_lab.histories import (
    EventSchedule,
    HistoryFamily,
    HistoryIndex,
    ProjectorDecomposition,
    heisenberg_projectors,
)
from histories_lab.kernel import ComplexMatrix, Tolerance, dagger, frozen, max_abs, unitarity_defect

GRID_STEPS = 32
"""Default grid resolution: couplings are multiples of 2π/32 = π/16."""


@dataclass(frozen=True)
class PhaseKick:
    """Couplings ``λ_a`` for every outcome of event ``event`` (1-based)."""

    event: int
    couplings: tuple[tuple[str, float], ...]

    @classmethod
    def from_values(cls, event: int, labels: Sequence[str], values: Sequence[float]) -> PhaseKick:
        if len(labels) != len(values):
            raise InvalidInputError("coupling count", f"{len(values)} couplings for {len(labels)} outcomes")
        return cls(event, tuple((str(label), float(value)) for label, value in zip(labels, values, strict=True)))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.couplings)

    @property
    def values(self) -> tuple[float, ...]:
        return tuple(value for _, value in self.couplings)

    def coupling(self, label: str) -> float:
        for name, value in self.couplings:
            if name == label:
                return value
        raise InvalidInputError("label mismatch", f"no coupling for outcome {label!r}")

    def validate_for(self, schedule: EventSchedule) -> None:
        n = len(schedule.events)
        if not 1 <= self.event <= n:
            raise InvalidInputError("event index", f"kick event {self.event} outside 1..{n}")
        labels = schedule.events[self.event - 1].decomposition.labels
        if sorted(self.labels) != sorted(labels) or len(self.labels) != len(labels):
            raise InvalidInputError(
                "label mismatch", f"kick couplings {list(self.labels)} do not match event {self.event} outcomes {list(labels)}"
            )

    def as_dict(self) -> dict[str, float]:
        return dict(self.couplings)


def kick_unitary(decomposition: ProjectorDecomposition, kick: PhaseKick) -> ComplexMatrix:
    """``U = Σ_a e^{−iλ_a} P_a`` in spectral form."""
    if sorted(kick.labels) != sorted(decomposition.labels):
        raise InvalidInputError(
            "label mismatch", f"kick couplings {list(kick.labels)} do not match outcomes {list(decomposition.labels)}"
        )
    unitary = sum(
        (np.exp(-1j * kick.coupling(label)) * p for label, p in zip(decomposition.labels, decomposition.projectors, strict=True)),
        start=np.zeros((decomposition.dim, decomposition.dim), dtype=np.complex128),
    )
    return frozen(unitary)


@dataclass(frozen=True, eq=False)
class PerturbedFamily:
    """A kicked family with its provenance, so certificates can be replayed."""

    original: HistoryFamily
    kicks: tuple[PhaseKick, ...]
    unitary: ComplexMatrix
    family: HistoryFamily
    completeness_defect: float

    @property
    def kick(self) -> PhaseKick:
        return self.kicks[-1]


def _require_schedule(family: HistoryFamily) -> EventSchedule:
    if family.schedule is None:
        raise PreconditionError("no schedule", f"a {family.provenance} family has no event schedule to kick")
    return family.schedule


def perturb_family(family: HistoryFamily, kick: PhaseKick, tol: Tolerance | None = None) -> PerturbedFamily:
    """Apply ``C_α → e^{−iλ_{α_k}} U† C_α`` to every class operator.

    ``family`` may itself be a kicked family (it keeps the unperturbed
    schedule), so kicks can be applied in sequence; see :func:`apply_kicks`.
    Completeness of the result is recorded, not asserted.
    """
    tol = tol or Tolerance()
    schedule = _require_schedule(family)
    kick.validate_for(schedule)
    k = kick.event - 1
    unitary = kick_unitary(heisenberg_projectors(schedule, tol)[k], kick)
    u_dag = dagger(unitary)
    class_ops = tuple(
        frozen(np.exp(-1j * kick.coupling(index[k])) * (u_dag @ op))
        for index, op in zip(family.indices, family.class_ops, strict=True)
    )
    perturbed = HistoryFamily(family.indices, class_ops, schedule=schedule, provenance="perturbed")
    logger.debug("Kicked event {} with couplings {}", kick.event, kick.as_dict())
    return PerturbedFamily(family, (kick,), unitary, perturbed, perturbed.completeness_defect())


def apply_kicks(family: HistoryFamily, kicks: Iterable[PhaseKick], tol: Tolerance | None = None) -> PerturbedFamily:
    """Apply ``kicks`` in order, each through the unperturbed projectors of its event."""
    kicks = tuple(kicks)
    if not kicks:
        raise InvalidInputError("empty kick sequence", "apply_kicks needs at least one kick")
    perturbed = perturb_family(family, kicks[0], tol)
    for kick in kicks[1:]:
        step = perturb_family(perturbed.family, kick, tol)
        perturbed = PerturbedFamily(family, (*perturbed.kicks, kick), step.unitary, step.family, step.completeness_defect)
    return perturbed


def kicked_dynamics_family(family: HistoryFamily, kick: PhaseKick, tol: Tolerance | None = None) -> HistoryFamily:
    """Class operators rebuilt from the kicked dynamics, without the telescoped law.

    Projectors at events after ``k`` become ``U† P(t_j) U``; earlier ones are
    unchanged. The products are formed from scratch, which makes this an
    independent check of :func:`perturb_family`.
    """
    tol = tol or Tolerance()
    schedule = _require_schedule(family)
    kick.validate_for(schedule)
    evolved = heisenberg_projectors(schedule, tol)
    unitary = kick_unitary(evolved[kick.event - 1], kick)
    kicked = tuple(d.conjugated(unitary) if j >= kick.event else d for j, d in enumerate(evolved))
    indices, class_ops = [], []
    for index in product(*(d.labels for d in kicked)):
        factors = [d.projector(label) for d, label in zip(reversed(kicked), reversed(index), strict=True)]
        indices.append(index)
        class_ops.append(frozen(reduce(matmul, factors)))
    return HistoryFamily(tuple(indices), tuple(class_ops), schedule=schedule, provenance="perturbed")


def phase_law(functional: DecoherenceFunctional, kick: PhaseKick) -> DecoherenceFunctional:
    """``D(α′, α) → e^{i(λ_{α′_k} − λ_{α_k})} D(α′, α)``."""
    k = kick.event - 1
    lam = np.array([kick.coupling(index[k]) for index in functional.indices])
    phases = np.exp(1j * (lam[:, None] - lam[None, :]))
    return DecoherenceFunctional(functional.indices, frozen(functional.matrix * phases))


@dataclass(frozen=True, eq=False)
class PerturbedFunctional:
    """``D′`` computed from the kicked family and by the phase law."""

    direct: DecoherenceFunctional
    by_phase_law: DecoherenceFunctional
    residual: float
    perturbed: PerturbedFamily


def perturbed_dfunc(
    family: HistoryFamily, rho: ComplexMatrix, kick: PhaseKick, tol: Tolerance | None = None
) -> PerturbedFunctional:
    """Compute ``D′`` both ways; a residual above 10·atol is a :class:`NumericFailure`."""
    tol = tol or Tolerance()
    perturbed = perturb_family(family, kick, tol)
    direct = decoherence_functional(perturbed.family, rho, tol)
    by_law = phase_law(decoherence_functional(family, rho, tol), kick)
    residual = max_abs(direct.matrix - by_law.matrix)
    if not residual <= tol.margin:
        raise NumericFailure(f"phase law residual {residual:.3e} exceeds 10·atol at event {kick.event}")
    return PerturbedFunctional(direct, by_law, residual, perturbed)


def default_grid(labels: Sequence[str], steps: int = GRID_STEPS) -> list[tuple[float, ...]]:
    """Coupling vectors with the first outcome pinned at 0.

    Only coupling differences enter the phase law, so the first coupling is
    fixed and the rest sweep ``2πj/steps`` for ``j = 0 … steps−1``.
    """
    sweep = [2 * np.pi * j / steps for j in range(steps)]
    return [(0.0, *rest) for rest in product(sweep, repeat=len(labels) - 1)]


@dataclass(frozen=True, eq=False)
class GridPoint:
    position: int
    kick: PhaseKick
    report: ConsistencyReport


@dataclass(frozen=True, eq=False)
class RobustnessReport:
    """Criterion survival across a coupling grid at one event."""

    event: int
    original: ConsistencyReport
    points: tuple[GridPoint, ...]
    strong_survives: bool
    weak_survives: bool
    linear_survives: bool
    worst_strong: GridPoint
    worst_weak: GridPoint
    worst_linear: GridPoint
    certificates: tuple[AnomalyCertificate, ...] = field(default=())


def _worst(points: Sequence[GridPoint], key, atol: float, *, lowest: bool = False) -> GridPoint:
    """Extremal grid point; the earliest one within ``atol`` of the extreme wins."""
    return points[first_extremal(np.array([key(p) for p in points]), atol, lowest=lowest)]


def robustness_scan(
    family: HistoryFamily,
    rho: ComplexMatrix,
    event: int,
    grid: Sequence[Sequence[float]],
    tol: Tolerance | None = None,
    *,
    max_workers: int = DEFAULT_MAX_WORKERS,
) -> RobustnessReport:
    """Classify the kicked family at every grid point.

    A criterion *survives* when the unperturbed family satisfies it and every
    kicked family does too. Grid points are classified in parallel and folded
    in grid order.
    """
    tol = tol or Tolerance()
    if not grid:
        raise InvalidInputError("empty grid", "robustness_scan needs at least one coupling vector")
    schedule = _require_schedule(family)
    if not 1 <= event <= len(schedule.events):
        raise InvalidInputError("event index", f"kick event {event} outside 1..{len(schedule.events)}")
    labels = schedule.events[event - 1].decomposition.labels
    original = classify(family, rho, tol)

    def classify_point(position: int) -> GridPoint:
        kick = PhaseKick.from_values(event, labels, grid[position])
        perturbed = perturb_family(family, kick, tol)
        report = classify(perturbed.family, rho, tol)
        logger.debug("Grid point {} {}: weak={} |Re D'|={:.3e}", position, kick.values, report.weak.passed, report.weak.value)
        return GridPoint(position, kick, report)

    logger.info("Scanning {} coupling vectors at event {}", len(grid), event)
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        points = tuple(executor.map(classify_point, range(len(grid))))

    worst_strong = _worst(points, lambda p: p.report.strong.value, tol.atol)
    worst_weak = _worst(points, lambda p: p.report.weak.value, tol.atol)
    worst_linear = _worst(points, lambda p: p.report.linear_positive.value, tol.atol, lowest=True)

    certificates = []
    if original.weak.passed and worst_weak.report.weak.value > tol.margin:
        primed, unprimed = worst_weak.report.weak.witness
        value = worst_weak.report.functional.entry(primed, unprimed).real
        certificates.append(
            AnomalyCertificate(
                kind=AnomalyKind.PERTURBATION_WEAK,
                indices=(primed, unprimed),
                quantity="Re D'",
                value=value,
                ingredients={
                    "original.max_abs_re_offdiag": original.weak.value,
                    "original.max_abs_im_offdiag": original.max_imag_off_diagonal,
                },
                atol=tol.atol,
                details={"event": event, "couplings": worst_weak.kick.as_dict(), "grid_position": worst_weak.position},
            )
        )
        logger.info("Kick at event {} breaks weak decoherence: Re D' = {:.6g}", event, value)
    if original.linear_positive.passed and worst_linear.report.linear_positive.value < -tol.margin:
        (index, _) = worst_linear.report.linear_positive.witness
        certificates.append(
            AnomalyCertificate(
                kind=AnomalyKind.PERTURBATION_LINEAR,
                indices=(index,),
                quantity="Re <C'>",
                value=worst_linear.report.linear_positive.value,
                ingredients={"original.min_re_amplitude": original.linear_positive.value},
                atol=tol.atol,
                details={"event": event, "couplings": worst_linear.kick.as_dict(), "grid_position": worst_linear.position},
            )
        )

    return RobustnessReport(
        event=event,
        original=original,
        points=points,
        strong_survives=original.strong.passed and all(p.report.strong.passed for p in points),
        weak_survives=original.weak.passed and all(p.report.weak.passed for p in points),
        linear_survives=original.linear_positive.passed and all(p.report.linear_positive.passed for p in points),
        worst_strong=worst_strong,
        worst_weak=worst_weak,
        worst_linear=worst_linear,
        certificates=tuple(certificates),
    )


def kicked_linear_values(family: HistoryFamily, rho: ComplexMatrix, kick: PhaseKick, tol: Tolerance | None = None) -> np.ndarray:
    """``Re e^{−iλ_{α_k}} ⟨U† C_α⟩`` for every history."""
    tol = tol or Tolerance()
    schedule = _require_schedule(family)
    kick.validate_for(schedule)
    k = kick.event - 1
    unitary = kick_unitary(heisenberg_projectors(schedule, tol)[k], kick)
    if not unitarity_defect(unitary) <= tol.margin:
        raise NumericFailure(f"kick unitary at event {kick.event} is not unitary")
    shifted = HistoryFamily(family.indices, tuple(frozen(dagger(unitary) @ op) for op in family.class_ops))
    prefactors = np.exp(-1j * np.array([kick.coupling(index[k]) for index in family.indices]))
    return np.real(prefactors * linear_amplitudes(shifted, rho))


def _index_key(index: HistoryIndex) -> str:
    return ",".join(index)


def linear_positivity_perturbation(
    family: HistoryFamily, rho: ComplexMatrix, kick: PhaseKick, tol: Tolerance | None = None
) -> AnomalyScan:
    """Minimum kicked linear probability, certified when it drops below −10·atol.

    A certificate is only issued when the unperturbed family was linearly
    positive; otherwise the scan still reports ``violated`` without one.
    """
    tol = tol or Tolerance()
    original = classify(family, rho, tol)
    values = kicked_linear_values(family, rho, kick, tol)
    lowest = first_extremal(values, tol.atol, lowest=True)
    value = float(values[lowest])
    index = family.indices[lowest]
    details = {
        "event": kick.event,
        "couplings": kick.as_dict(),
        "values": {_index_key(i): float(v) for i, v in zip(family.indices, values, strict=True)},
        "original_min_re_amplitude": original.linear_positive.value,
    }
    if value < -tol.margin:
        certificate = None
        if original.linear_positive.passed:
            certificate = AnomalyCertificate(
                kind=AnomalyKind.PERTURBATION_LINEAR,
                indices=(index,),
                quantity="Re <C'>",
                value=value,
                ingredients={"original.min_re_amplitude": original.linear_positive.value},
                atol=tol.atol,
                details={"event": kick.event, "couplings": kick.as_dict()},
            )
            logger.info("Kick {} breaks linear positivity: {} -> {:.6g}", kick.as_dict(), index, value)
        return AnomalyScan(ScanStatus.VIOLATED, value, (index,), certificate, details)
    status = ScanStatus.MARGINAL if value <= tol.margin else ScanStatus.CLEAN
    return AnomalyScan(status, value, (index,), None, details)


def linear_positivity_scan(
    family: HistoryFamily,
    rho: ComplexMatrix,
    event: int,
    grid: Sequence[Sequence[float]],
    tol: Tolerance | None = None,
) -> AnomalyScan:
    """Run :func:`linear_positivity_perturbation` over a grid; keep the lowest point.

    Returns the first certified violation in grid order when there is one.
    """
    tol = tol or Tolerance()
    schedule = _require_schedule(family)
    labels = schedule.events[event - 1].decomposition.labels if 1 <= event <= len(schedule.events) else ()
    best: AnomalyScan | None = None
    for values in grid:
        scan = linear_positivity_perturbation(family, rho, PhaseKick.from_values(event, labels, values), tol)
        if scan.certificate is not None:
            return scan
        if best is None or scan.value < best.value:
            best = scan
    if best is None:
        raise InvalidInputError("empty grid", "linear_positivity_scan needs at least one coupling vector")
    return best


def replay_perturbation_certificate(
    certificate: AnomalyCertificate, family: HistoryFamily, rho: ComplexMatrix
) -> bool:
    """Recompute the kicked verdict a certificate records and compare it exactly."""
    tol = Tolerance(certificate.atol)
    event = certificate.details["event"]
    couplings = certificate.details["couplings"]
    kick = PhaseKick(event, tuple(couplings.items()))
    original = classify(family, rho, tol)
    perturbed = perturb_family(family, kick, tol)
    if certificate.kind is AnomalyKind.PERTURBATION_WEAK:
        primed, unprimed = certificate.indices
        report = classify(perturbed.family, rho, tol)
        return (
            original.weak.passed
            and not report.weak.passed
            and report.functional.entry(primed, unprimed).real == certificate.value
        )
    if certificate.kind is AnomalyKind.PERTURBATION_LINEAR:
        scan = linear_positivity_perturbation(family, rho, kick, tol)
        return original.linear_positive.passed and scan.certificate is not None and scan.value == certificate.value
    raise InvalidInputError("certificate kind", f"{certificate.kind.value} is not a perturbation certificate")
