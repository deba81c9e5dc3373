"""Witness families: the canonical one, seeded random ones, and searches.

Two targets are searched for:

* ``weak-not-strong``: off-diagonal ``|Re D| ≤ atol`` with some off-diagonal
  ``|Im D| ≥ δ``;
* ``linear-positive-phase``: ``Re⟨C_α⟩ ≥ 0`` for every history with some
  amplitude phase ``|arg⟨C_α⟩| ≥ δ``.

Each restart draws Haar bases and a state from a seed derived from the master
seed and the restart index, then runs cyclic coordinate descent over Hermitian
rotation generators with a bounded Brent line search per coordinate. Weak
candidates are finished with a least-squares polish because coordinate descent
only approaches ``Re D = 0`` linearly.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from functools import cache, reduce
from itertools import product
from operator import matmul
from threading import Lock
from typing import Any

import numpy as np
from loguru import logger
from numpy.typing import NDArray
from scipy.optimize import least_squares, minimize_scalar

from histories_lab.config import DEFAULT_MAX_WORKERS, DEFAULT_SEED
from histories_lab.consistency import ConsistencyReport, classify
from histories_lab.errors import InvalidInputError, PreconditionError
from histories_lab.histories import (
    EventSchedule,
    HistoryFamily,
    ProjectorDecomposition,
    build_family,
    spin_basis,
)
from histories_lab.kernel import ComplexMatrix, Tolerance, dagger, frozen, haar_unitary, ket_projector, matexp_unitary

MAX_DIM = 8
MAX_EVENTS = 4
SWEEPS_PER_RESTART = 25
LINE_SEARCH_RADIUS = np.pi / 2
POLISH_THRESHOLD = 1e-4
POLISH_EVALUATIONS = 400
FLOOR_BUFFER = 1e-6
"""Objectives aim this far past the threshold so the verified value clears it."""
POSITIVITY_BUFFER = 1e-7
MIN_AMPLITUDE = 1e-3
"""Amplitudes smaller than this carry no meaningful phase."""


class SearchTarget(str, Enum):
    WEAK_NOT_STRONG = "weak-not-strong"
    LINEAR_POSITIVE_PHASE = "linear-positive-phase"


class SearchStatus(str, Enum):
    """Outcome of a witness search."""

    FOUND = "found"
    """A candidate met the target after a from-scratch reclassification."""
    EXHAUSTED = "exhausted"
    """The iteration budget ran out; the best candidate is reported."""
    PRUNED = "pruned"
    """The threshold is infeasible by a norm bound; nothing was searched."""


@dataclass(frozen=True)
class SearchSpec:
    """What to search for and with which budget.

    ``max_iterations`` counts coordinate-descent sweeps over all restarts;
    each restart gets at most ``sweeps_per_restart`` of them.
    """

    dim: int = 2
    events: int = 2
    outcomes: int = 2
    seed: int = DEFAULT_SEED
    max_iterations: int = 200
    target: SearchTarget = SearchTarget.WEAK_NOT_STRONG
    delta: float = 0.2
    mixed: bool = False
    sweeps_per_restart: int = SWEEPS_PER_RESTART

    def __post_init__(self) -> None:
        object.__setattr__(self, "target", SearchTarget(self.target))
        if not 2 <= self.dim <= MAX_DIM:
            raise InvalidInputError("search size", f"dim must be in 2..{MAX_DIM}, got {self.dim}")
        if not 2 <= self.events <= MAX_EVENTS:
            raise InvalidInputError("search size", f"events must be in 2..{MAX_EVENTS}, got {self.events}")
        if not 2 <= self.outcomes <= self.dim:
            raise InvalidInputError("search size", f"outcomes must be in 2..{self.dim}, got {self.outcomes}")
        if not 0 <= self.seed < 2**64:
            raise InvalidInputError("seed", f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.max_iterations < 0 or self.sweeps_per_restart < 1:
            raise InvalidInputError(
                "iteration budget",
                f"max_iterations must be >= 0 and sweeps_per_restart >= 1, got {self.max_iterations}, {self.sweeps_per_restart}",
            )
        if not np.isfinite(self.delta) or self.delta < 0:
            raise InvalidInputError("phase threshold", f"delta must be a finite non-negative number, got {self.delta}")
        if self.target is SearchTarget.WEAK_NOT_STRONG and self.delta == 0:
            raise InvalidInputError("phase threshold", "weak-not-strong needs delta > 0")

    @property
    def restarts(self) -> int:
        return -(-self.max_iterations // self.sweeps_per_restart)

    def sweeps_for(self, restart: int) -> int:
        return min(self.sweeps_per_restart, self.max_iterations - restart * self.sweeps_per_restart)

    def to_dict(self) -> dict[str, Any]:
        return {
            "dim": self.dim,
            "events": self.events,
            "outcomes": self.outcomes,
            "seed": self.seed,
            "max_iterations": self.max_iterations,
            "target": self.target.value,
            "delta": self.delta,
            "mixed": self.mixed,
            "sweeps_per_restart": self.sweeps_per_restart,
        }


def canonical_witness() -> tuple[HistoryFamily, ComplexMatrix]:
    """Spin-½ in ``|0⟩⟨0|``, ``H = 0``, x basis then y basis.

    Weakly but not strongly decoherent: the nonzero off-diagonal entries are
    ``±i/4``.
    """
    schedule = EventSchedule.static([spin_basis("x"), spin_basis("y")])
    return build_family(schedule), ket_projector([1, 0])


def max_amplitude_phase(amplitudes: NDArray[np.complex128]) -> float:
    """Largest ``|arg⟨C_α⟩|`` among amplitudes of modulus at least ``MIN_AMPLITUDE``."""
    significant = amplitudes[np.abs(amplitudes) >= MIN_AMPLITUDE]
    return float(np.max(np.abs(np.angle(significant)))) if significant.size else 0.0


# -- candidate parametrisation ----------------------------------------------


@cache
def _generators(dim: int) -> NDArray[np.complex128]:
    """Generalised Gell-Mann matrices, stacked: a Hermitian basis of traceless matrices."""
    generators = []
    for j in range(dim):
        for k in range(j + 1, dim):
            symmetric = np.zeros((dim, dim), dtype=np.complex128)
            symmetric[j, k] = symmetric[k, j] = 1
            antisymmetric = np.zeros((dim, dim), dtype=np.complex128)
            antisymmetric[j, k], antisymmetric[k, j] = -1j, 1j
            generators += [symmetric, antisymmetric]
    for level in range(1, dim):
        diagonal = np.zeros(dim)
        diagonal[:level] = 1
        diagonal[level] = -level
        generators.append(np.diag(diagonal * np.sqrt(2 / (level * (level + 1)))).astype(np.complex128))
    stacked = np.stack(generators)
    stacked.flags.writeable = False
    return stacked


def _rng(seed: int, restart: int | None = None) -> np.random.Generator:
    """Counter-based stream: the master seed alone, or its ``restart``-th child."""
    sequence = np.random.SeedSequence(seed) if restart is None else np.random.SeedSequence(seed, spawn_key=(restart,))
    return np.random.default_rng(sequence)


@dataclass(frozen=True, eq=False)
class _Landscape:
    """One restart's starting point and the objective over rotations of it.

    Parameters are a ``(events + 1, dim² − 1)`` array of generator
    coefficients: one row per event basis, the last row for the state basis.
    """

    spec: SearchSpec
    bases: tuple[ComplexMatrix, ...]
    state_basis: ComplexMatrix
    weights: NDArray[np.float64]

    @classmethod
    def draw(cls, spec: SearchSpec, rng: np.random.Generator) -> _Landscape:
        bases = tuple(haar_unitary(rng, spec.dim) for _ in range(spec.events))
        state_basis = haar_unitary(rng, spec.dim)
        if spec.mixed:
            weights = rng.dirichlet(np.ones(spec.dim))
        else:
            weights = np.zeros(spec.dim)
            weights[0] = 1.0
        return cls(spec, bases, state_basis, weights)

    @property
    def shape(self) -> tuple[int, int]:
        return self.spec.events + 1, self.spec.dim**2 - 1

    def _rotate(self, base: ComplexMatrix, coefficients: NDArray[np.float64]) -> ComplexMatrix:
        if not np.any(coefficients):
            return base
        generator = np.einsum("g,gij->ij", coefficients, _generators(self.spec.dim))
        return base @ matexp_unitary(generator, 1.0)

    def _projector_sets(self, params: NDArray[np.float64]) -> list[list[ComplexMatrix]]:
        groups = np.array_split(np.arange(self.spec.dim), self.spec.outcomes)
        sets = []
        for base, coefficients in zip(self.bases, params[:-1], strict=True):
            vectors = self._rotate(base, coefficients)
            projectors = []
            for group in groups:
                block = vectors[:, group]
                projector = block @ dagger(block)
                projectors.append(frozen((projector + dagger(projector)) / 2))
            sets.append(projectors)
        return sets

    def _state(self, params: NDArray[np.float64]) -> ComplexMatrix:
        vectors = self._rotate(self.state_basis, params[-1])
        rho = (vectors * self.weights) @ dagger(vectors)
        return frozen((rho + dagger(rho)) / 2)

    def materialise(self, params: NDArray[np.float64]) -> tuple[EventSchedule, ComplexMatrix]:
        labels = tuple(str(k) for k in range(self.spec.outcomes))
        decompositions = [ProjectorDecomposition(labels, tuple(ps)) for ps in self._projector_sets(params)]
        return EventSchedule.static(decompositions), self._state(params)

    def functional(self, params: NDArray[np.float64]) -> NDArray[np.complex128]:
        """``D`` without validation; only used inside the optimiser."""
        ops = np.stack([reduce(matmul, reversed(factors)) for factors in product(*self._projector_sets(params))])
        return np.einsum("ij,pkj,aki->pa", self._state(params), ops.conj(), ops)

    def residuals(self, params: NDArray[np.float64]) -> NDArray[np.float64]:
        """Weak target: off-diagonal real parts plus the ``|Im D|`` floor shortfall."""
        matrix = self.functional(params)
        upper = np.triu_indices(matrix.shape[0], 1)
        shortfall = max(0.0, self.spec.delta + FLOOR_BUFFER - float(np.max(np.abs(matrix.imag[upper]))))
        return np.concatenate([matrix.real[upper], [shortfall]])

    def objective(self, params: NDArray[np.float64]) -> float:
        if self.spec.target is SearchTarget.WEAK_NOT_STRONG:
            return float(np.sum(self.residuals(params) ** 2))
        amplitudes = self.functional(params).sum(axis=0)
        shortfall = max(0.0, self.spec.delta + FLOOR_BUFFER - max_amplitude_phase(amplitudes))
        negativity = np.maximum(0.0, POSITIVITY_BUFFER - amplitudes.real)
        return float(shortfall**2 + np.sum(negativity**2))


def _meets_target(spec: SearchSpec, report: ConsistencyReport) -> bool:
    if spec.target is SearchTarget.WEAK_NOT_STRONG:
        return report.weak.passed and report.max_imag_off_diagonal >= spec.delta
    return report.linear_positive.passed and max_amplitude_phase(report.amplitudes) >= spec.delta


# -- restarts -----------------------------------------------------------------


class _FirstSuccess:
    """Lowest restart index that has succeeded so far.

    Restarts with a higher index stop early once a lower one succeeds; they
    can no longer win, so the winner does not depend on scheduling.
    """

    def __init__(self) -> None:
        self._lock = Lock()
        self._index: int | None = None

    def record(self, restart: int) -> None:
        with self._lock:
            if self._index is None or restart < self._index:
                self._index = restart

    def supersedes(self, restart: int) -> bool:
        with self._lock:
            return self._index is not None and self._index < restart


@dataclass(frozen=True, eq=False)
class _RestartOutcome:
    restart: int
    found: bool
    objective: float
    params: NDArray[np.float64]
    sweeps: int
    landscape: _Landscape


def _polish(landscape: _Landscape, params: NDArray[np.float64], value: float) -> tuple[NDArray[np.float64], float]:
    fit = least_squares(
        lambda x: landscape.residuals(x.reshape(landscape.shape)),
        params.ravel(),
        method="trf",
        xtol=1e-15,
        ftol=1e-15,
        gtol=1e-15,
        max_nfev=POLISH_EVALUATIONS,
    )
    candidate = fit.x.reshape(landscape.shape)
    candidate_value = landscape.objective(candidate)
    if candidate_value < value:
        return candidate, candidate_value
    return params, value


def _run_restart(spec: SearchSpec, restart: int, tol: Tolerance, first_success: _FirstSuccess) -> _RestartOutcome:
    landscape = _Landscape.draw(spec, _rng(spec.seed, restart))
    params = np.zeros(landscape.shape)
    value = landscape.objective(params)
    sweeps = spec.sweeps_for(restart)

    for sweep in range(1, sweeps + 1):
        for coordinate in np.ndindex(*landscape.shape):
            if first_success.supersedes(restart):
                logger.debug("Restart {} stopped: a lower restart already succeeded", restart)
                return _RestartOutcome(restart, False, value, params, sweep, landscape)
            current = params[coordinate]

            def along(x: float, coordinate: tuple[int, ...] = coordinate) -> float:
                trial = params.copy()
                trial[coordinate] = x
                return landscape.objective(trial)

            result = minimize_scalar(
                along,
                bounds=(current - LINE_SEARCH_RADIUS, current + LINE_SEARCH_RADIUS),
                method="bounded",
                options={"xatol": 1e-12},
            )
            if result.fun < value:
                params[coordinate] = result.x
                value = float(result.fun)

        if spec.target is SearchTarget.WEAK_NOT_STRONG and (value <= POLISH_THRESHOLD or sweep == sweeps):
            params, value = _polish(landscape, params, value)
        schedule, rho = landscape.materialise(params)
        report = classify(build_family(schedule, tol), rho, tol)
        logger.debug("Restart {} sweep {}: objective {:.3e}", restart, sweep, value)
        if _meets_target(spec, report):
            first_success.record(restart)
            logger.info("Restart {} met {} after {} sweeps", restart, spec.target.value, sweep)
            return _RestartOutcome(restart, True, value, params, sweep, landscape)

    logger.info("Restart {} finished without a witness (objective {:.3e})", restart, value)
    return _RestartOutcome(restart, False, value, params, sweeps, landscape)


@dataclass(frozen=True, eq=False)
class SearchResult:
    spec: SearchSpec
    status: SearchStatus
    schedule: EventSchedule | None = None
    state: ComplexMatrix | None = None
    family: HistoryFamily | None = None
    report: ConsistencyReport | None = None
    objective: float | None = None
    restart: int | None = None
    sweeps: int = 0
    note: str = ""

    @property
    def found(self) -> bool:
        return self.status is SearchStatus.FOUND

    @property
    def margins(self) -> dict[str, float]:
        """Criterion values of the returned candidate, as recomputed by :func:`classify`."""
        if self.report is None:
            return {}
        if self.spec.target is SearchTarget.WEAK_NOT_STRONG:
            return {
                "max_abs_re_offdiag": self.report.weak.value,
                "max_abs_im_offdiag": self.report.max_imag_off_diagonal,
                "max_abs_offdiag": self.report.strong.value,
            }
        return {
            "min_re_amplitude": self.report.linear_positive.value,
            "max_amplitude_phase": max_amplitude_phase(self.report.amplitudes),
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": self.status.value,
            "target": self.spec.target.value,
            "spec": self.spec.to_dict(),
            "seed": self.spec.seed,
            "restart": self.restart,
            "spawn_key": None if self.restart is None else [self.restart],
            "sweeps": self.sweeps,
            "objective": self.objective,
            "margins": self.margins,
            "note": self.note,
        }


def _pruning_note(spec: SearchSpec) -> str | None:
    if spec.target is SearchTarget.WEAK_NOT_STRONG and spec.delta > 0.5:
        return (
            f"delta {spec.delta} is infeasible: Cauchy-Schwarz gives |Im D(a', a)| <= sqrt(p_a' p_a) <= 1/2 "
            "for any family"
        )
    if spec.target is SearchTarget.LINEAR_POSITIVE_PHASE and spec.delta > np.pi / 2:
        return f"delta {spec.delta} is infeasible: Re<C> >= 0 confines every amplitude phase to [-pi/2, pi/2]"
    return None


def random_family(spec: SearchSpec, tol: Tolerance | None = None) -> tuple[HistoryFamily, ComplexMatrix]:
    """Haar-random bases and state drawn from ``spec.seed``; bit-for-bit reproducible."""
    landscape = _Landscape.draw(spec, _rng(spec.seed))
    schedule, rho = landscape.materialise(np.zeros(landscape.shape))
    return build_family(schedule, tol), rho


def search(spec: SearchSpec, tol: Tolerance | None = None, *, max_workers: int = DEFAULT_MAX_WORKERS) -> SearchResult:
    """Run every restart the budget allows and pick the winner deterministically.

    The winner is the successful restart with the lowest index; without one,
    the restart with the lowest objective (lowest index on ties) is reported
    as the best candidate of an exhausted search.
    """
    tol = tol or Tolerance()
    note = _pruning_note(spec)
    if note is not None:
        logger.warning("Search pruned: {}", note)
        return SearchResult(spec, SearchStatus.PRUNED, note=note)
    if spec.restarts == 0:
        logger.warning("Search budget is zero; nothing to do")
        return SearchResult(spec, SearchStatus.EXHAUSTED, note="iteration budget is zero")

    logger.info(
        "Searching for {} (dim {}, {} events, delta {}) with {} restarts from seed {}",
        spec.target.value,
        spec.dim,
        spec.events,
        spec.delta,
        spec.restarts,
        spec.seed,
    )
    first_success = _FirstSuccess()
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        outcomes = list(executor.map(lambda r: _run_restart(spec, r, tol, first_success), range(spec.restarts)))

    successes = [o for o in outcomes if o.found]
    if successes:
        winner = min(successes, key=lambda o: o.restart)
    else:
        winner = min(outcomes, key=lambda o: (o.objective, o.restart))
    schedule, rho = winner.landscape.materialise(winner.params)
    family = build_family(schedule, tol)
    report = classify(family, rho, tol)
    status = SearchStatus.FOUND if successes else SearchStatus.EXHAUSTED
    note = "" if successes else f"no restart met the target within {spec.max_iterations} sweeps; best candidate reported"
    if not successes:
        logger.warning("Search exhausted after {} restarts (best objective {:.3e})", spec.restarts, winner.objective)
    return SearchResult(spec, status, schedule, rho, family, report, winner.objective, winner.restart, winner.sweeps, note)


def search_weak_not_strong(spec: SearchSpec, tol: Tolerance | None = None, *, max_workers: int = DEFAULT_MAX_WORKERS) -> SearchResult:
    if spec.target is not SearchTarget.WEAK_NOT_STRONG:
        raise PreconditionError("search target", f"expected weak-not-strong, got {spec.target.value}")
    return search(spec, tol, max_workers=max_workers)


def search_linear_positive_phase(
    spec: SearchSpec, tol: Tolerance | None = None, *, max_workers: int = DEFAULT_MAX_WORKERS
) -> SearchResult:
    if spec.target is not SearchTarget.LINEAR_POSITIVE_PHASE:
        raise PreconditionError("search target", f"expected linear-positive-phase, got {spec.target.value}")
    return search(spec, tol, max_workers=max_workers)
