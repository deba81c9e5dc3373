"""Shared fixtures: the standard spin-½ families and a scratch output directory."""

from pathlib import Path

import numpy as np
import pytest

from histories_lab.histories import (
    EventSchedule,
    HistoryFamily,
    ProjectorDecomposition,
    build_family,
    computational_basis,
    spin_basis,
)
from histories_lab.kernel import ComplexMatrix, haar_unitary, ket_projector
from histories_lab.scenario import template, write_scenario
from histories_lab.search import canonical_witness

Family = tuple[HistoryFamily, ComplexMatrix]


@pytest.fixture
def tmp_output(tmp_path: Path) -> Path:
    """Return a temporary output directory."""
    out = tmp_path / "output"
    out.mkdir()
    return out


@pytest.fixture
def witness() -> Family:
    """x basis then y basis in ``|0⟩⟨0|``: weak but not strong."""
    return canonical_witness()


@pytest.fixture
def x_then_z() -> Family:
    """x basis then z basis in ``|0⟩⟨0|``: linearly positive but not weak."""
    return build_family(EventSchedule.static([spin_basis("x"), computational_basis(2)])), ket_projector([1, 0])


@pytest.fixture
def z_repeated() -> Family:
    """The z basis twice in ``|+x⟩⟨+x|``: strongly decoherent."""
    return build_family(EventSchedule.static([spin_basis("z"), spin_basis("z")])), ket_projector([1, 1])


@pytest.fixture
def witness_file(tmp_output: Path) -> Path:
    return write_scenario(template("witness"), tmp_output / "witness.json")


def strong_family(seed: int, dim: int = 3) -> Family:
    """The same Haar basis measured twice, in a random pure state: always strongly decoherent."""
    rng = np.random.default_rng(seed)
    basis = haar_unitary(rng, dim)
    decomposition = ProjectorDecomposition(
        tuple(str(k) for k in range(dim)), tuple(ket_projector(basis[:, k]) for k in range(dim))
    )
    state = haar_unitary(rng, dim)[:, 0]
    return build_family(EventSchedule.static([decomposition, decomposition])), ket_projector(state)


def tilted_family(phi: float) -> Family:
    """x basis then the basis along angle ``phi`` in the x-y plane, in ``|0⟩⟨0|``.

    Amplitudes are ``(1 ± e^{-iφ})/4``: real parts stay non-negative while the
    anti-aligned ones carry phase ``π/2 − φ/2``.
    """
    tilted = ProjectorDecomposition(
        ("+", "-"), (ket_projector([1, np.exp(1j * phi)]), ket_projector([1, -np.exp(1j * phi)]))
    )
    return build_family(EventSchedule.static([spin_basis("x"), tilted])), ket_projector([1, 0])
