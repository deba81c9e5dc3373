"""Tests for decompositions, schedules, class operators and coarse-graining."""

import numpy as np
import pytest

from histories_lab.errors import InvalidInputError
from histories_lab.histories import (
    DecompositionReport,
    Event,
    EventSchedule,
    Partition,
    ProjectorDecomposition,
    build_family,
    coarse_grain,
    computational_basis,
    heisenberg_projectors,
    spin_basis,
    trivial_decomposition,
    validate_decomposition,
)
from histories_lab.kernel import as_matrix, identity, ket_projector, matexp_unitary


def test_spin_bases_are_valid() -> None:
    for axis in "xyz":
        report = validate_decomposition(spin_basis(axis))
        assert report.passed, (axis, report.violations)
    with pytest.raises(InvalidInputError, match="unknown basis"):
        spin_basis("w")


def test_computational_and_trivial_decompositions() -> None:
    assert validate_decomposition(computational_basis(4)).passed
    trivial = trivial_decomposition(3)
    assert trivial.labels == ("1",)
    np.testing.assert_array_equal(trivial.projector("1"), np.eye(3))


def test_incomplete_decomposition_names_completeness() -> None:
    z = spin_basis("z")
    report = validate_decomposition(ProjectorDecomposition(("+",), (z.projector("+"),)))
    assert report.first_failure == "completeness violation"
    assert report.completeness == pytest.approx(1.0)
    with pytest.raises(InvalidInputError) as excinfo:
        report.raise_if_failed("event 1")
    assert excinfo.value.invariant == "completeness violation"


def test_duplicated_projector_fails_orthogonality_first() -> None:
    plus = spin_basis("x").projector("+")
    report = validate_decomposition(ProjectorDecomposition(("a", "b"), (plus, plus)))
    assert report.first_failure == "orthogonality violation"
    assert "completeness violation" in report.violations


def test_zero_projector_is_reported() -> None:
    zero = as_matrix(np.zeros((2, 2)))
    report = validate_decomposition(ProjectorDecomposition(("0", "1"), (identity(2), zero)))
    assert report.first_failure == "zero projector"
    assert report.zero_projectors == ("1",)


def test_decomposition_rejects_duplicate_labels() -> None:
    z = spin_basis("z")
    with pytest.raises(InvalidInputError, match="label mismatch"):
        ProjectorDecomposition(("a", "a"), z.projectors)


def test_schedule_requires_strictly_increasing_times() -> None:
    z = spin_basis("z")
    with pytest.raises(InvalidInputError) as excinfo:
        EventSchedule(as_matrix(np.zeros((2, 2))), (Event(1.0, z), Event(1.0, z)))
    assert excinfo.value.invariant == "time ordering"


@pytest.mark.parametrize("bad", [float("nan"), float("inf")])
def test_schedule_rejects_non_finite_times(bad: float) -> None:
    z = spin_basis("z")
    with pytest.raises(InvalidInputError) as excinfo:
        EventSchedule(as_matrix(np.diag([1.0, -1.0])), (Event(bad, z), Event(1.0, z)))
    assert excinfo.value.invariant == "finiteness"


def test_nan_measurement_counts_as_a_violation() -> None:
    report = DecompositionReport(0.0, 0.0, 0.0, float("nan"), (), atol=1e-9)
    assert not report.passed
    assert report.first_failure == "completeness violation"


def test_schedule_rejects_mixed_dimensions() -> None:
    with pytest.raises(InvalidInputError, match="dimension mismatch"):
        EventSchedule.static([spin_basis("z"), computational_basis(3)])


def test_class_operators_put_latest_time_leftmost() -> None:
    x, y = spin_basis("x"), spin_basis("y")
    family = build_family(EventSchedule.static([x, y]))
    assert family.indices == (("+", "+"), ("+", "-"), ("-", "+"), ("-", "-"))
    np.testing.assert_allclose(family.class_op(("-", "+")), y.projector("+") @ x.projector("-"), atol=1e-15)
    assert family.completeness_defect() <= 1e-15


def test_heisenberg_projectors_evolve_with_hamiltonian() -> None:
    h = as_matrix([[0, 1], [1, 0]])
    z = spin_basis("z")
    schedule = EventSchedule(h, (Event(0.0, z), Event(0.7, z)))
    first, second = heisenberg_projectors(schedule)
    np.testing.assert_array_equal(first.projector("+"), z.projector("+"))
    u = matexp_unitary(h, 0.7)
    np.testing.assert_allclose(second.projector("+"), u.conj().T @ z.projector("+") @ u, atol=1e-14)
    assert validate_decomposition(second).passed


def test_family_with_dynamics_still_resolves_identity() -> None:
    h = as_matrix([[1, 0.5j], [-0.5j, -1]])
    schedule = EventSchedule(h, (Event(0.2, spin_basis("x")), Event(1.3, spin_basis("z")), Event(2.9, spin_basis("y"))))
    family = build_family(schedule)
    assert len(family) == 8
    assert family.completeness_defect() <= 1e-12


def test_merging_partition_places_cell_at_first_member() -> None:
    family = build_family(EventSchedule.static([spin_basis("x"), spin_basis("z")]))
    partition = Partition.merging(family, [("-", "+"), ("+", "+")])
    assert partition.cells == ((("+", "+"), ("-", "+")), (("+", "-"),), (("-", "-"),))
    assert partition.labels == ("+,+|-,+", "+,-", "-,-")


def test_coarse_grain_sums_class_operators() -> None:
    family = build_family(EventSchedule.static([spin_basis("x"), spin_basis("z")]))
    coarse = coarse_grain(family, Partition.merging(family, [("+", "+"), ("-", "+")]))
    assert coarse.provenance == "coarse-grained"
    np.testing.assert_allclose(coarse.class_op(("+,+|-,+",)), spin_basis("z").projector("+"), atol=1e-15)
    whole = coarse_grain(family, Partition.whole(family))
    np.testing.assert_allclose(whole.class_op(("all",)), np.eye(2), atol=1e-15)


def test_singleton_coarse_graining_is_bit_identical() -> None:
    family = build_family(EventSchedule.static([spin_basis("x"), spin_basis("y")]))
    coarse = coarse_grain(family, Partition.singletons(family))
    for fine, grained in zip(family.class_ops, coarse.class_ops, strict=True):
        np.testing.assert_array_equal(fine, grained)


def test_partition_must_cover_family_exactly() -> None:
    family = build_family(EventSchedule.static([spin_basis("z"), spin_basis("z")]))
    with pytest.raises(InvalidInputError, match="partition"):
        coarse_grain(family, Partition.from_cells([[("+", "+")], [("+", "+"), ("-", "-")]]))
    with pytest.raises(InvalidInputError, match="partition"):
        coarse_grain(family, Partition.from_cells([[("+", "+")]]))
    with pytest.raises(InvalidInputError, match="partition"):
        Partition.merging(family, [("x", "y")])


def test_projector_decomposition_conjugation() -> None:
    z = spin_basis("z")
    hadamard = as_matrix(np.array([[1, 1], [1, -1]]) / np.sqrt(2))
    conjugated = z.conjugated(hadamard)
    np.testing.assert_allclose(conjugated.projector("+"), ket_projector([1, 1]), atol=1e-15)
