"""Decoherence functional, probability rules and consistency criteria.

``D(α′, α) = trace(ρ · C†_α′ · C_α)`` is stored as an ``N × N`` matrix whose
row is the primed index. Three criteria are read off it:

* strong decoherence: every off-diagonal entry vanishes;
* weak decoherence: only the real parts of off-diagonal entries vanish;
* linear positivity: ``Re⟨C_α⟩ ≥ 0`` for every history, where
  ``⟨C_α⟩ = Σ_α′ D(α′, α)`` because the class operators resolve the identity.

:func:`brute_force_consistency` is the independent oracle for the weak
criterion: it bunches every pair of histories and checks the sum rule
directly, without looking at ``D``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np
from loguru import logger
from numpy.typing import NDArray

from histories_lab.config import DEFAULT_MAX_WORKERS
from histories_lab.errors import InvalidInputError, PreconditionError
from histories_lab.histories import HistoryFamily, HistoryIndex, Partition, coarse_grain
from histories_lab.kernel import (
    ComplexMatrix,
    Tolerance,
    dagger,
    expectation,
    frozen,
    hermitian_defect,
    psd_check,
    validate_density,
)

BRUTE_FORCE_LIMIT = 64


@dataclass(frozen=True, eq=False)
class DecoherenceFunctional:
    """``D(α′, α)`` over an ordered index list; ``matrix[i, j] = D(indices[i], indices[j])``."""

    indices: tuple[HistoryIndex, ...]
    matrix: ComplexMatrix

    def __post_init__(self) -> None:
        n = len(self.indices)
        if self.matrix.shape != (n, n):
            raise InvalidInputError("dimension mismatch", f"{n} indices for a {self.matrix.shape} functional")

    def __len__(self) -> int:
        return len(self.indices)

    def entry(self, primed: HistoryIndex, unprimed: HistoryIndex) -> complex:
        return complex(self.matrix[self.indices.index(tuple(primed)), self.indices.index(tuple(unprimed))])

    @property
    def diagonal(self) -> NDArray[np.float64]:
        return np.real(np.diag(self.matrix))

    @property
    def off_diagonal_mask(self) -> NDArray[np.bool_]:
        return ~np.eye(len(self.indices), dtype=bool)

    def amplitudes(self) -> NDArray[np.complex128]:
        """``⟨C_α⟩`` as column sums ``Σ_α′ D(α′, α)``."""
        return self.matrix.sum(axis=0)

    def invariant_defects(self) -> dict[str, float]:
        """Measured deviation of every functional invariant (0 means exact)."""
        psd = psd_check((self.matrix + dagger(self.matrix)) / 2)
        return {
            "hermiticity": hermitian_defect(self.matrix),
            "positivity": max(0.0, -psd.min_eigenvalue),
            "normalisation": abs(complex(self.matrix.sum()) - 1),
            "diagonal imaginary part": float(np.max(np.abs(np.imag(np.diag(self.matrix))))),
            "diagonal negativity": max(0.0, -float(np.min(self.diagonal))),
        }


def decoherence_functional(
    family: HistoryFamily, rho: ComplexMatrix, tol: Tolerance | None = None
) -> DecoherenceFunctional:
    """Evaluate ``D(α′, α) = trace(ρ C†_α′ C_α)`` for every pair of histories."""
    tol = tol or Tolerance()
    if rho.shape[0] != family.dim:
        raise InvalidInputError("dimension mismatch", f"state has dimension {rho.shape[0]}, family {family.dim}")
    validate_density(rho, tol)
    ops = family.stacked()
    # trace(ρ C'† C) = Σ ρ_ij conj(C'_kj) C_ki
    matrix = np.einsum("ij,pkj,aki->pa", rho, ops.conj(), ops)
    return DecoherenceFunctional(family.indices, frozen(matrix))


class ProbabilityRule(str, Enum):
    """Which assignment produced a set of probabilities."""

    STANDARD = "standard"
    """``p_α = ⟨C†_α C_α⟩``, the diagonal of ``D``."""
    LINEAR = "linear"
    """``p_α = Re⟨C_α⟩``, linear in the class operators."""


@dataclass(frozen=True)
class ProbabilityAssignment:
    """Probabilities per history; ``raw`` keeps the unclamped values."""

    rule: ProbabilityRule
    indices: tuple[HistoryIndex, ...]
    values: tuple[float, ...]
    raw: tuple[float, ...]
    violations: tuple[HistoryIndex, ...] = ()

    @property
    def total(self) -> float:
        return float(sum(self.raw))

    def as_dict(self) -> dict[HistoryIndex, float]:
        return dict(zip(self.indices, self.values, strict=True))


def _clamp(raw: NDArray[np.float64], tol: Tolerance) -> tuple[float, ...]:
    return tuple(0.0 if -tol.atol <= v < 0 else float(v) for v in raw)


def probabilities_standard(functional: DecoherenceFunctional, tol: Tolerance | None = None) -> ProbabilityAssignment:
    """Diagonal of ``D``; values within atol below zero are clamped to 0."""
    tol = tol or Tolerance()
    raw = functional.diagonal
    if np.any(raw < -tol.atol):
        worst = int(np.argmin(raw))
        raise InvalidInputError(
            "negative probability",
            f"D{functional.indices[worst]} diagonal entry {raw[worst]:.3e} < −atol",
            magnitude=float(raw[worst]),
        )
    return ProbabilityAssignment(
        ProbabilityRule.STANDARD, functional.indices, _clamp(raw, tol), tuple(float(v) for v in raw)
    )


def linear_amplitudes(family: HistoryFamily, rho: ComplexMatrix) -> NDArray[np.complex128]:
    """``⟨C_α⟩ = trace(ρ C_α)`` evaluated directly."""
    return np.array([expectation(rho, op) for op in family.class_ops])


def probabilities_linear(
    family: HistoryFamily, rho: ComplexMatrix, tol: Tolerance | None = None
) -> ProbabilityAssignment:
    """``Re⟨C_α⟩``; values below −atol are flagged as violations, not errors."""
    tol = tol or Tolerance()
    raw = np.real(linear_amplitudes(family, rho))
    violations = tuple(index for index, v in zip(family.indices, raw, strict=True) if v < -tol.atol)
    return ProbabilityAssignment(
        ProbabilityRule.LINEAR, family.indices, _clamp(raw, tol), tuple(float(v) for v in raw), violations
    )


@dataclass(frozen=True)
class CriterionResult:
    """One criterion's verdict, its extremal value and where it was attained.

    ``witness`` is the ``(α′, α)`` pair attaining ``value`` (``(α, α)`` for
    linear positivity); it is only set when the criterion failed.
    """

    name: str
    passed: bool
    value: float
    witness: tuple[HistoryIndex, HistoryIndex] | None = None


@dataclass(frozen=True, eq=False)
class ConsistencyReport:
    strong: CriterionResult
    weak: CriterionResult
    linear_positive: CriterionResult
    max_imag_off_diagonal: float
    atol: float
    functional: DecoherenceFunctional
    amplitudes: NDArray[np.complex128]

    @property
    def verdicts(self) -> dict[str, bool]:
        return {
            "strong": self.strong.passed,
            "weak": self.weak.passed,
            "linear_positive": self.linear_positive.passed,
        }


def first_extremal(values: NDArray[np.float64], atol: float = 0.0, *, lowest: bool = False) -> int:
    """Position of the first entry within ``atol`` of the maximum (or minimum).

    Entries that tie up to rounding noise resolve to the earliest position.
    """
    flat = np.ravel(values)
    if lowest:
        return int(np.flatnonzero(flat <= flat.min() + atol)[0])
    return int(np.flatnonzero(flat >= flat.max() - atol)[0])


def extremal_off_diagonal(values: NDArray[np.float64], atol: float = 0.0) -> tuple[float, int, int]:
    """Largest off-diagonal entry of a non-negative matrix, and where it sits.

    The value is the exact maximum. The position is the row-major first entry
    within ``atol`` of it, i.e. the lexicographically smallest ``(α′, α)``
    pair in enumeration order.
    """
    n = values.shape[0]
    if n < 2:
        return 0.0, 0, 0
    masked = np.where(np.eye(n, dtype=bool), -np.inf, values)
    row, col = divmod(first_extremal(masked, atol), n)
    return float(masked.max()), row, col


def classify_functional(
    functional: DecoherenceFunctional, tol: Tolerance | None = None, amplitudes: NDArray[np.complex128] | None = None
) -> ConsistencyReport:
    """Apply all three criteria to an already computed functional.

    ``amplitudes`` defaults to the functional's column sums, which equal
    ``⟨C_α⟩`` whenever the class operators resolve the identity.
    """
    tol = tol or Tolerance()
    indices = functional.indices
    matrix = functional.matrix

    strong_value, sr, sc = extremal_off_diagonal(np.abs(matrix), tol.atol)
    weak_value, wr, wc = extremal_off_diagonal(np.abs(np.real(matrix)), tol.atol)
    imag_value, _, _ = extremal_off_diagonal(np.abs(np.imag(matrix)), tol.atol)

    if amplitudes is None:
        amplitudes = functional.amplitudes()
    real_amplitudes = np.real(amplitudes)
    lowest = first_extremal(real_amplitudes, tol.atol, lowest=True)
    linear_value = float(real_amplitudes.min())

    strong_ok = strong_value <= tol.atol
    weak_ok = weak_value <= tol.atol
    linear_ok = linear_value >= -tol.atol
    return ConsistencyReport(
        strong=CriterionResult("strong", strong_ok, strong_value, None if strong_ok else (indices[sr], indices[sc])),
        weak=CriterionResult("weak", weak_ok, weak_value, None if weak_ok else (indices[wr], indices[wc])),
        linear_positive=CriterionResult(
            "linear_positive", linear_ok, linear_value, None if linear_ok else (indices[lowest], indices[lowest])
        ),
        max_imag_off_diagonal=imag_value,
        atol=tol.atol,
        functional=functional,
        amplitudes=amplitudes,
    )


def classify(family: HistoryFamily, rho: ComplexMatrix, tol: Tolerance | None = None) -> ConsistencyReport:
    """Strong, weak and linear-positivity verdicts for ``family`` in state ``rho``."""
    tol = tol or Tolerance()
    report = classify_functional(decoherence_functional(family, rho, tol), tol)
    logger.debug(
        "Classified {} histories: strong={} weak={} linear_positive={}",
        len(family),
        report.strong.passed,
        report.weak.passed,
        report.linear_positive.passed,
    )
    return report


@dataclass(frozen=True)
class CellResidual:
    """Sum-rule residual of one coarse-graining cell."""

    label: str
    members: tuple[HistoryIndex, ...]
    coarse_probability: float
    summed_probability: float
    residual: float
    interference: float
    """``Σ_{α≠α′ ∈ cell} Re D(α′, α)``, which the residual must equal."""


def sum_rule_check(
    family: HistoryFamily, rho: ComplexMatrix, partition: Partition, tol: Tolerance | None = None
) -> tuple[CellResidual, ...]:
    """Residual ``p̄(cell) − Σ_{α∈cell} p_α`` of the standard rule per cell."""
    tol = tol or Tolerance()
    partition.validate_for(family)
    fine = decoherence_functional(family, rho, tol)
    coarse = decoherence_functional(coarse_grain(family, partition), rho, tol)
    results = []
    for k, (label, cell) in enumerate(zip(partition.labels, partition.cells, strict=True)):
        positions = [family.position(index) for index in cell]
        block = fine.matrix[np.ix_(positions, positions)]
        coarse_p = float(np.real(coarse.matrix[k, k]))
        summed = float(np.sum(np.real(np.diag(block))))
        interference = float(np.sum(np.real(block)) - summed)
        results.append(CellResidual(label, cell, coarse_p, summed, coarse_p - summed, interference))
    return tuple(results)


def linear_sum_rule_check(
    family: HistoryFamily, rho: ComplexMatrix, partition: Partition, tol: Tolerance | None = None
) -> tuple[CellResidual, ...]:
    """The same residuals for the linear rule; they vanish by linearity of ``⟨C⟩``."""
    tol = tol or Tolerance()
    partition.validate_for(family)
    fine = np.real(linear_amplitudes(family, rho))
    coarse = np.real(linear_amplitudes(coarse_grain(family, partition), rho))
    results = []
    for k, (label, cell) in enumerate(zip(partition.labels, partition.cells, strict=True)):
        summed = float(sum(fine[family.position(index)] for index in cell))
        results.append(CellResidual(label, cell, float(coarse[k]), summed, float(coarse[k]) - summed, 0.0))
    return tuple(results)


def linear_standard_gap(family: HistoryFamily, rho: ComplexMatrix, tol: Tolerance | None = None) -> float:
    """``max_α |Re⟨C_α⟩ − p_α|``; at most 10·atol for weakly decoherent families."""
    tol = tol or Tolerance()
    standard = np.array(probabilities_standard(decoherence_functional(family, rho, tol), tol).raw)
    linear = np.real(linear_amplitudes(family, rho))
    return float(np.max(np.abs(linear - standard)))


@dataclass(frozen=True)
class PairResidual:
    pair: tuple[HistoryIndex, HistoryIndex]
    residual: float


@dataclass(frozen=True)
class BruteForceVerdict:
    """Sum-rule check over every pairwise bunching."""

    consistent: bool
    pairs_checked: int
    worst: PairResidual | None
    failing: tuple[PairResidual, ...]
    atol: float
    residuals: tuple[PairResidual, ...] = ()
    """Every pair in row-major order."""


def brute_force_consistency(
    family: HistoryFamily,
    rho: ComplexMatrix,
    tol: Tolerance | None = None,
    *,
    max_workers: int = DEFAULT_MAX_WORKERS,
) -> BruteForceVerdict:
    """Check ``p̄ = p_α + p_α′`` for every pair, bunching class operators directly.

    Pairs are grouped by their first history and evaluated in parallel; each
    residual is judged on its own, so the verdict does not depend on
    evaluation order.
    """
    tol = tol or Tolerance()
    n = len(family)
    if n > BRUTE_FORCE_LIMIT:
        raise PreconditionError("family size", f"{n} histories exceeds the brute-force limit of {BRUTE_FORCE_LIMIT}")
    validate_density(rho, tol)
    ops = family.class_ops
    probabilities = [float(np.real(expectation(rho, dagger(c) @ c))) for c in ops]

    def residuals_from(i: int) -> list[PairResidual]:
        row = []
        for j in range(i + 1, n):
            merged = ops[i] + ops[j]
            coarse = float(np.real(expectation(rho, dagger(merged) @ merged)))
            row.append(PairResidual((family.indices[i], family.indices[j]), coarse - probabilities[i] - probabilities[j]))
        return row

    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        rows = list(executor.map(residuals_from, range(n)))
    pairs = [pair for row in rows for pair in row]
    failing = tuple(p for p in pairs if not abs(p.residual) <= tol.atol)
    worst = max(pairs, key=lambda p: abs(p.residual), default=None)
    return BruteForceVerdict(
        consistent=not failing,
        pairs_checked=len(pairs),
        worst=worst,
        failing=failing,
        atol=tol.atol,
        residuals=tuple(pairs),
    )
