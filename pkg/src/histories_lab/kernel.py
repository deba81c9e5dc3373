"""Dense complex linear algebra used by every other module.

Everything is a plain ``numpy`` ``complex128`` array. :func:`as_matrix` is the
single entry point that turns user data into a matrix: it checks shape and
finiteness and returns a read-only copy. Matrices are shared freely between families, reports
and threads.

Tolerances are absolute and applied to max-abs entry deviations. The matrices
in scope are projectors, density operators and products of those, all O(1), so
an absolute tolerance is meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from histories_lab.config import DEFAULT_ATOL
from histories_lab.errors import InvalidInputError

ComplexMatrix = NDArray[np.complex128]


@dataclass(frozen=True)
class Tolerance:
    """Absolute tolerance on max-abs entry deviations."""

    atol: float = DEFAULT_ATOL

    def __post_init__(self) -> None:
        if not (self.atol > 0 and np.isfinite(self.atol)):
            raise InvalidInputError("tolerance", f"atol must be a positive finite number, got {self.atol!r}")

    @property
    def margin(self) -> float:
        """The 10·atol band used for derived quantities and certificates."""
        return 10 * self.atol


def as_matrix(data: ArrayLike, name: str = "matrix") -> ComplexMatrix:
    """Coerce ``data`` to a read-only square ``complex128`` matrix."""
    matrix = np.array(data, dtype=np.complex128)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] < 1:
        raise InvalidInputError("dimension mismatch", f"{name} must be a non-empty square matrix, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise InvalidInputError("finiteness", f"{name} has NaN or infinite entries")
    matrix.flags.writeable = False
    return matrix


def frozen(matrix: NDArray) -> ComplexMatrix:
    """Mark a freshly computed matrix read-only and return it."""
    matrix = np.asarray(matrix, dtype=np.complex128)
    matrix.flags.writeable = False
    return matrix


def identity(dim: int) -> ComplexMatrix:
    return frozen(np.eye(dim, dtype=np.complex128))


def dagger(matrix: ComplexMatrix) -> ComplexMatrix:
    return matrix.conj().T


def max_abs(matrix: NDArray) -> float:
    """Largest absolute entry (0 for an empty array)."""
    return float(np.max(np.abs(matrix))) if matrix.size else 0.0


def hermitian_defect(matrix: ComplexMatrix) -> float:
    """``max |M − M†|`` over entries."""
    return max_abs(matrix - dagger(matrix))


def require_hermitian(matrix: ComplexMatrix, tol: Tolerance, name: str = "matrix") -> None:
    defect = hermitian_defect(matrix)
    if not defect <= tol.atol:
        raise InvalidInputError(
            "hermiticity",
            f"{name} is not Hermitian (max asymmetry {defect:.3e} > atol {tol.atol:.1e})",
            magnitude=defect,
        )


def unitarity_defect(matrix: ComplexMatrix) -> float:
    """``max |U†U − I|`` over entries."""
    return max_abs(dagger(matrix) @ matrix - np.eye(matrix.shape[0]))


def matexp_unitary(hamiltonian: ComplexMatrix, t: float, tol: Tolerance | None = None) -> ComplexMatrix:
    """``exp(−iHt)`` through the eigendecomposition of a Hermitian ``H``."""
    tol = tol or Tolerance()
    require_hermitian(hamiltonian, tol, "hamiltonian")
    if not np.isfinite(t):
        raise InvalidInputError("finiteness", f"evolution time must be finite, got {t}")
    dim = hamiltonian.shape[0]
    if t == 0:
        return identity(dim)
    # Symmetrise so eigh sees an exactly Hermitian input.
    eigenvalues, eigenvectors = np.linalg.eigh((hamiltonian + dagger(hamiltonian)) / 2)
    phases = np.exp(-1j * eigenvalues * t)
    return frozen((eigenvectors * phases) @ dagger(eigenvectors))


def kron(left: ComplexMatrix, right: ComplexMatrix) -> ComplexMatrix:
    """Tensor product, left factor index major."""
    return frozen(np.kron(left, right))


def expectation(rho: ComplexMatrix, operator: ComplexMatrix) -> complex:
    """``trace(ρ·O)`` without forming the product."""
    return complex(np.einsum("ij,ji->", rho, operator))


@dataclass(frozen=True)
class PsdCheck:
    """Outcome of :func:`psd_check`."""

    ok: bool
    min_eigenvalue: float
    threshold: float


def psd_check(matrix: ComplexMatrix, tol: Tolerance | None = None) -> PsdCheck:
    """Positive-semidefinite test on the smallest eigenvalue.

    Passes iff the smallest eigenvalue is ``≥ −atol·max(max|M_ij|, 1)``.
    """
    tol = tol or Tolerance()
    require_hermitian(matrix, tol)
    eigenvalues = np.linalg.eigvalsh((matrix + dagger(matrix)) / 2)
    min_eigenvalue = float(eigenvalues[0])
    threshold = -tol.atol * max(max_abs(matrix), 1.0)
    return PsdCheck(ok=min_eigenvalue >= threshold, min_eigenvalue=min_eigenvalue, threshold=threshold)


def validate_density(rho: ComplexMatrix, tol: Tolerance | None = None, name: str = "rho") -> None:
    """Raise :class:`InvalidInputError` unless ``rho`` is a density operator.

    Checks run in order hermiticity, positivity, unit trace; the error names
    the first one that failed.
    """
    tol = tol or Tolerance()
    require_hermitian(rho, tol, name)
    check = psd_check(rho, tol)
    if not check.ok:
        raise InvalidInputError(
            "positivity",
            f"{name} has a negative eigenvalue {check.min_eigenvalue:.3e}",
            magnitude=check.min_eigenvalue,
        )
    trace = complex(np.trace(rho))
    if not abs(trace - 1) <= tol.atol:
        raise InvalidInputError("unit trace", f"{name} has trace {trace:.12g}, expected 1", magnitude=abs(trace - 1))


def ket_projector(vector: ArrayLike) -> ComplexMatrix:
    """``|v⟩⟨v|`` for a (normalised copy of) ``vector``."""
    v = np.asarray(vector, dtype=np.complex128)
    v = v / np.linalg.norm(v)
    return frozen(np.outer(v, v.conj()))


def haar_unitary(rng: np.random.Generator, dim: int) -> ComplexMatrix:
    """Haar-random unitary from the QR factorisation of a Ginibre matrix.

    The phases of ``R``'s diagonal are moved into ``Q`` so ``R`` ends up with a
    real positive diagonal, which makes the map from Gaussian draws to
    unitaries single-valued.
    """
    ginibre = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(ginibre)
    diagonal = np.diag(r)
    return frozen(q * (diagonal / np.abs(diagonal)))
