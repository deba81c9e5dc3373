"""Tests for the canonical witness, seeded random families and witness searches."""

import numpy as np
import pytest

from histories_lab.consistency import classify
from histories_lab.errors import InvalidInputError, PreconditionError
from histories_lab.kernel import validate_density
from histories_lab.search import (
    SearchSpec,
    SearchStatus,
    SearchTarget,
    canonical_witness,
    max_amplitude_phase,
    random_family,
    search,
    search_linear_positive_phase,
    search_weak_not_strong,
)


def test_canonical_witness_is_weak_not_strong() -> None:
    family, rho = canonical_witness()
    report = classify(family, rho)
    assert report.weak.passed
    assert not report.strong.passed
    assert report.max_imag_off_diagonal == pytest.approx(0.25)
    assert max_amplitude_phase(report.amplitudes) == pytest.approx(np.pi / 4)


def test_max_amplitude_phase_ignores_tiny_amplitudes() -> None:
    amplitudes = np.array([0.5, 1e-6j, 0.1 * np.exp(0.3j)])
    assert max_amplitude_phase(amplitudes) == pytest.approx(0.3)
    assert max_amplitude_phase(np.array([1e-9 + 0j])) == 0.0


@pytest.mark.parametrize(
    ("kwargs", "invariant"),
    [
        ({"dim": 1}, "search size"),
        ({"dim": 9}, "search size"),
        ({"events": 5}, "search size"),
        ({"dim": 2, "outcomes": 3}, "search size"),
        ({"seed": -1}, "seed"),
        ({"max_iterations": -1}, "iteration budget"),
        ({"delta": float("nan")}, "phase threshold"),
        ({"delta": 0.0}, "phase threshold"),
    ],
)
def test_search_spec_validation(kwargs: dict, invariant: str) -> None:
    with pytest.raises(InvalidInputError) as excinfo:
        SearchSpec(**kwargs)
    assert excinfo.value.invariant == invariant


def test_search_spec_budget_split() -> None:
    spec = SearchSpec(max_iterations=60)
    assert spec.restarts == 3
    assert [spec.sweeps_for(r) for r in range(spec.restarts)] == [25, 25, 10]
    assert SearchSpec(target="linear-positive-phase", delta=0.0).target is SearchTarget.LINEAR_POSITIVE_PHASE
    assert SearchSpec().to_dict()["target"] == "weak-not-strong"


@pytest.mark.parametrize("mixed", [False, True])
def test_random_family_is_reproducible(mixed: bool) -> None:
    spec = SearchSpec(dim=3, events=3, outcomes=2, seed=7, mixed=mixed)
    family, rho = random_family(spec)
    again, rho_again = random_family(spec)
    np.testing.assert_array_equal(rho, rho_again)
    for a, b in zip(family.class_ops, again.class_ops, strict=True):
        np.testing.assert_array_equal(a, b)
    assert len(family) == 8
    assert family.completeness_defect() <= 1e-12
    validate_density(rho)
    other, _ = random_family(SearchSpec(dim=3, events=3, outcomes=2, seed=8, mixed=mixed))
    assert not np.allclose(other.class_ops[0], family.class_ops[0])


def test_pure_random_families_have_rank_one_states() -> None:
    _, rho = random_family(SearchSpec(dim=4, seed=3))
    assert np.trace(rho @ rho).real == pytest.approx(1.0)
    _, mixed = random_family(SearchSpec(dim=4, seed=3, mixed=True))
    assert np.trace(mixed @ mixed).real < 1.0


def test_weak_search_prunes_infeasible_threshold() -> None:
    result = search(SearchSpec(delta=0.6))
    assert result.status is SearchStatus.PRUNED
    assert "Cauchy-Schwarz" in result.note
    assert result.family is None
    assert result.margins == {}


def test_linear_search_prunes_phases_beyond_quarter_turn() -> None:
    result = search(SearchSpec(target=SearchTarget.LINEAR_POSITIVE_PHASE, delta=2.0))
    assert result.status is SearchStatus.PRUNED


def test_zero_budget_is_exhausted_without_work() -> None:
    result = search(SearchSpec(max_iterations=0))
    assert result.status is SearchStatus.EXHAUSTED
    assert result.restart is None
    assert result.to_dict()["spawn_key"] is None


def test_weak_search_finds_a_witness() -> None:
    spec = SearchSpec(dim=2, events=2, delta=0.2, seed=42, max_iterations=200)
    result = search_weak_not_strong(spec, max_workers=2)
    assert result.found, result.note
    margins = result.margins
    assert margins["max_abs_re_offdiag"] <= 1e-9
    assert margins["max_abs_im_offdiag"] >= 0.2
    assert margins["max_abs_offdiag"] >= 0.2

    report = classify(result.family, result.state)
    assert report.weak.passed
    assert not report.strong.passed
    assert result.family.completeness_defect() <= 1e-10
    assert result.to_dict()["spawn_key"] == [result.restart]


def test_search_is_deterministic() -> None:
    spec = SearchSpec(dim=2, events=2, delta=0.2, seed=42, max_iterations=50)
    first = search(spec, max_workers=4)
    second = search(spec, max_workers=1)
    assert first.to_dict() == second.to_dict()


def test_search_entry_points_check_target() -> None:
    with pytest.raises(PreconditionError, match="search target"):
        search_weak_not_strong(SearchSpec(target=SearchTarget.LINEAR_POSITIVE_PHASE))
    with pytest.raises(PreconditionError, match="search target"):
        search_linear_positive_phase(SearchSpec())
