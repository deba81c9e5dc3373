"""Tensor composition of statistically independent history families.

The composite is defined on class operators, ``C^{AB}_{αβ} = C^A_α ⊗ C^B_β``,
in state ``ρ^A ⊗ ρ^B``; its histories are the concatenated indices ``α + β``
with the left factor's index major. Its decoherence functional factorizes,
``D^{AB}(α′β′, αβ) = D^A(α′, α)·D^B(β′, β)``, so

    Re D^{AB} = Re D^A·Re D^B − Im D^A·Im D^B

and two weakly decoherent factors with imaginary off-diagonal entries produce a
composite whose real part no longer vanishes. The scans below look for exactly
that, and for its analogue in the linear amplitudes ``⟨C^A⟩·⟨C^B⟩``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from loguru import logger

from histories_lab.certificates import AnomalyCertificate, AnomalyKind, AnomalyScan, ScanStatus
from histories_lab.consistency import (
    ConsistencyReport,
    DecoherenceFunctional,
    classify,
    decoherence_functional,
    extremal_off_diagonal,
    first_extremal,
    linear_amplitudes,
)
from histories_lab.errors import InvalidInputError, NumericFailure, PreconditionError
from histories_lab.histories import HistoryFamily, HistoryIndex
from histories_lab.kernel import ComplexMatrix, Tolerance, kron, max_abs, validate_density


@dataclass(frozen=True, eq=False)
class CompositeFamily:
    left: HistoryFamily
    right: HistoryFamily
    left_state: ComplexMatrix
    right_state: ComplexMatrix
    state: ComplexMatrix
    family: HistoryFamily

    @property
    def dim(self) -> int:
        return self.family.dim

    def split(self, index: HistoryIndex) -> tuple[HistoryIndex, HistoryIndex]:
        """Recover ``(α, β)`` from a composite index."""
        cut = len(self.left.indices[0])
        return tuple(index[:cut]), tuple(index[cut:])


def compose(
    left: HistoryFamily,
    left_state: ComplexMatrix,
    right: HistoryFamily,
    right_state: ComplexMatrix,
    tol: Tolerance | None = None,
) -> CompositeFamily:
    """Build the product family ``{C^A_α ⊗ C^B_β}`` in state ``ρ^A ⊗ ρ^B``."""
    tol = tol or Tolerance()
    for name, family, state in (("A", left, left_state), ("B", right, right_state)):
        if state.shape[0] != family.dim:
            raise InvalidInputError(
                "dimension mismatch", f"factor {name}: state dimension {state.shape[0]}, family {family.dim}"
            )
        validate_density(state, tol, f"rho^{name}")

    indices = tuple(a + b for a in left.indices for b in right.indices)
    class_ops = tuple(kron(ca, cb) for ca in left.class_ops for cb in right.class_ops)
    family = HistoryFamily(indices, class_ops, schedule=None, provenance="composite")

    if left.completeness_defect() <= tol.margin and right.completeness_defect() <= tol.margin:
        defect = family.completeness_defect()
        if defect > tol.margin:
            raise NumericFailure(f"composite class operators do not resolve the identity (max deviation {defect:.3e})")

    logger.debug("Composed {}×{} histories into dim {}", len(left), len(right), family.dim)
    return CompositeFamily(left, right, left_state, right_state, kron(left_state, right_state), family)


@dataclass(frozen=True, eq=False)
class FactorizationCheck:
    """Direct composite functional against the product of the factor functionals."""

    max_residual: float
    re_decomposition_residual: float
    functional: DecoherenceFunctional
    left: DecoherenceFunctional
    right: DecoherenceFunctional


def verify_factorization(composite: CompositeFamily, tol: Tolerance | None = None) -> FactorizationCheck:
    tol = tol or Tolerance()
    direct = decoherence_functional(composite.family, composite.state, tol)
    d_left = decoherence_functional(composite.left, composite.left_state, tol)
    d_right = decoherence_functional(composite.right, composite.right_state, tol)
    product = np.kron(d_left.matrix, d_right.matrix)
    re_predicted = np.kron(d_left.matrix.real, d_right.matrix.real) - np.kron(d_left.matrix.imag, d_right.matrix.imag)
    return FactorizationCheck(
        max_residual=max_abs(direct.matrix - product),
        re_decomposition_residual=max_abs(direct.matrix.real - re_predicted),
        functional=direct,
        left=d_left,
        right=d_right,
    )


def _require(report: ConsistencyReport, criterion: str, factor: str) -> None:
    result = getattr(report, criterion)
    if not result.passed:
        raise PreconditionError(
            f"factor not {criterion.replace('_', ' ')}",
            f"factor {factor} fails the {criterion.replace('_', ' ')} criterion (extremal value {result.value:.3e})",
            magnitude=result.value,
        )


def composition_anomaly(
    left: HistoryFamily,
    left_state: ComplexMatrix,
    right: HistoryFamily,
    right_state: ComplexMatrix,
    tol: Tolerance | None = None,
) -> AnomalyScan:
    """Scan the composite for off-diagonal ``|Re D^{AB}|`` above 10·atol.

    Both factors must be weakly decoherent. Every pair is scanned; the
    extremal one (first in enumeration order on ties) is certified.
    """
    tol = tol or Tolerance()
    report_a = classify(left, left_state, tol)
    report_b = classify(right, right_state, tol)
    _require(report_a, "weak", "A")
    _require(report_b, "weak", "B")

    composite = compose(left, left_state, right, right_state, tol)
    check = verify_factorization(composite, tol)
    real = check.functional.matrix.real
    magnitude, row, col = extremal_off_diagonal(np.abs(real), tol.atol)
    primed, unprimed = composite.family.indices[row], composite.family.indices[col]
    signed = float(real[row, col]) if len(composite.family) > 1 else 0.0

    (a_primed, b_primed), (a_unprimed, b_unprimed) = composite.split(primed), composite.split(unprimed)
    d_a = check.left.entry(a_primed, a_unprimed)
    d_b = check.right.entry(b_primed, b_unprimed)
    details = {
        "factor_pairs": {"A": [list(a_primed), list(a_unprimed)], "B": [list(b_primed), list(b_unprimed)]},
        "D_A": [d_a.real, d_a.imag],
        "D_B": [d_b.real, d_b.imag],
        "predicted_re": d_a.real * d_b.real - d_a.imag * d_b.imag,
        "factorization_residual": check.max_residual,
        "re_decomposition_residual": check.re_decomposition_residual,
    }

    if magnitude > tol.margin:
        certificate = AnomalyCertificate(
            kind=AnomalyKind.COMPOSITION_WEAK,
            indices=(primed, unprimed),
            quantity="Re D",
            value=signed,
            ingredients={
                "A.max_abs_re_offdiag": report_a.weak.value,
                "B.max_abs_re_offdiag": report_b.weak.value,
                "A.max_abs_im_offdiag": report_a.max_imag_off_diagonal,
                "B.max_abs_im_offdiag": report_b.max_imag_off_diagonal,
            },
            atol=tol.atol,
            details=details,
        )
        logger.info("Composition breaks weak decoherence: Re D{} = {:.6g}", (primed, unprimed), signed)
        return AnomalyScan(ScanStatus.VIOLATED, signed, (primed, unprimed), certificate, details)
    status = ScanStatus.MARGINAL if magnitude > tol.atol else ScanStatus.CLEAN
    if status is ScanStatus.MARGINAL:
        logger.warning("Composite Re D off-diagonal {:.3e} is marginal (within 10·atol)", signed)
    return AnomalyScan(status, signed, (primed, unprimed), None, details)


def linear_positivity_composition_anomaly(
    left: HistoryFamily,
    left_state: ComplexMatrix,
    right: HistoryFamily,
    right_state: ComplexMatrix,
    tol: Tolerance | None = None,
) -> AnomalyScan:
    """Scan ``Re(⟨C^A_α⟩·⟨C^B_β⟩)`` for values below −10·atol.

    Both factors must be linearly positive. Values within 10·atol of zero are
    reported as marginal, never as violations.
    """
    tol = tol or Tolerance()
    report_a = classify(left, left_state, tol)
    report_b = classify(right, right_state, tol)
    _require(report_a, "linear_positive", "A")
    _require(report_b, "linear_positive", "B")

    composite = compose(left, left_state, right, right_state, tol)
    amplitudes_a = linear_amplitudes(left, left_state)
    amplitudes_b = linear_amplitudes(right, right_state)
    products = np.outer(amplitudes_a, amplitudes_b).ravel()
    direct = linear_amplitudes(composite.family, composite.state)
    multiplicativity = max_abs(direct - products)

    real = products.real
    lowest = first_extremal(real, tol.atol, lowest=True)
    value = float(real[lowest])
    index = composite.family.indices[lowest]
    alpha, beta = composite.split(index)
    a, b = complex(amplitudes_a[left.position(alpha)]), complex(amplitudes_b[right.position(beta)])
    details = {
        "factor_indices": {"A": list(alpha), "B": list(beta)},
        "amplitude_A": [a.real, a.imag],
        "amplitude_B": [b.real, b.imag],
        "phase_A": float(np.angle(a)),
        "phase_B": float(np.angle(b)),
        "multiplicativity_residual": multiplicativity,
    }

    if value < -tol.margin:
        certificate = AnomalyCertificate(
            kind=AnomalyKind.COMPOSITION_LINEAR,
            indices=(index,),
            quantity="Re <C>",
            value=value,
            ingredients={
                "A.min_re_amplitude": report_a.linear_positive.value,
                "B.min_re_amplitude": report_b.linear_positive.value,
            },
            atol=tol.atol,
            details=details,
        )
        logger.info("Composition breaks linear positivity: Re<C{}> = {:.6g}", index, value)
        return AnomalyScan(ScanStatus.VIOLATED, value, (index,), certificate, details)
    status = ScanStatus.MARGINAL if value <= tol.margin else ScanStatus.CLEAN
    if status is ScanStatus.MARGINAL:
        logger.warning("Composite Re<C{}> = {:.3e} is marginal (within 10·atol of zero)", index, value)
    return AnomalyScan(status, value, (index,), None, details)


def replay_composition_certificate(
    certificate: AnomalyCertificate,
    left: HistoryFamily,
    left_state: ComplexMatrix,
    right: HistoryFamily,
    right_state: ComplexMatrix,
) -> bool:
    """Re-run the scan that issued ``certificate`` and compare its verdicts exactly."""
    tol = Tolerance(certificate.atol)
    if certificate.kind is AnomalyKind.COMPOSITION_WEAK:
        scan = composition_anomaly(left, left_state, right, right_state, tol)
    elif certificate.kind is AnomalyKind.COMPOSITION_LINEAR:
        scan = linear_positivity_composition_anomaly(left, left_state, right, right_state, tol)
    else:
        raise InvalidInputError("certificate kind", f"{certificate.kind.value} is not a composition certificate")
    replayed = scan.certificate
    return (
        replayed is not None
        and replayed.indices == certificate.indices
        and replayed.value == certificate.value
        and replayed.ingredients == certificate.ingredients
    )
