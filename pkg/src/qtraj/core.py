"""Dense complex linear algebra for small Hilbert spaces.

Everything works on plain numpy arrays: operators are square complex
matrices, state vectors are complex 1-d arrays, density matrices are
square complex matrices.  All constructors return read-only arrays so
that models and states can be shared freely between workers.

Units: hbar = 1 everywhere, Hamiltonians in angular frequency.
"""
from __future__ import annotations

import numpy as np

DEFAULT_DIM_CAP = 64

HERMITIAN_ATOL = 1e-12
NORM_ATOL = 1e-10


class DimensionError(ValueError):
    """Operator/state dimensions are incompatible or exceed the cap."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


def operator(entries) -> np.ndarray:
    """Validate and freeze a square complex matrix."""
    a = np.asarray(entries, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"operator must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("operator entries must be finite")
    return _readonly(a)


def state_vector(amplitudes) -> np.ndarray:
    a = np.asarray(amplitudes, dtype=complex).ravel()
    if a.size == 0:
        raise DimensionError("empty state vector")
    if not np.all(np.isfinite(a)):
        raise ValueError("state amplitudes must be finite")
    return _readonly(a)


def density_matrix(entries) -> np.ndarray:
    a = operator(entries)
    if np.abs(a - a.conj().T).max() > HERMITIAN_ATOL:
        raise ValueError("density matrix must be Hermitian to 1e-12")
    return a


def dag(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def is_hermitian(a: np.ndarray, atol: float = HERMITIAN_ATOL) -> bool:
    return bool(np.abs(a - a.conj().T).max() <= atol)


def is_normalized(psi: np.ndarray, atol: float = NORM_ATOL) -> bool:
    return bool(abs(np.vdot(psi, psi).real - 1.0) <= atol)


def expectation(op: np.ndarray, psi: np.ndarray) -> complex:
    """<psi|op|psi> for a (not necessarily normalized) state vector."""
    if op.shape[1] != psi.shape[0]:
        raise DimensionError(
            f"operator dim {op.shape[1]} does not match state dim {psi.shape[0]}"
        )
    return complex(np.vdot(psi, op @ psi))


def tensor_product(a: np.ndarray, b: np.ndarray, *, dim_cap: int = DEFAULT_DIM_CAP) -> np.ndarray:
    """Kronecker product with a configurable total-dimension cap."""
    if a.shape[0] != a.shape[1] or b.shape[0] != b.shape[1]:
        raise DimensionError("tensor_product expects square operators")
    dim = a.shape[0] * b.shape[0]
    if dim > dim_cap:
        raise DimensionError(f"tensor product dim {dim} exceeds cap {dim_cap}")
    return np.kron(a, b)


def normalize(psi: np.ndarray) -> tuple[np.ndarray, float]:
    """Return (psi/||psi||, ||psi||); raises on zero norm.

    A zero norm signals an impossible branch, e.g. applying a collapse
    operator to a state with no amplitude in the decaying subspace.
    """
    n = float(np.linalg.norm(psi))
    if n <= 0.0 or not np.isfinite(n):
        raise ValueError("cannot normalize a zero-norm state")
    return psi / n, n


def basis_state(dim: int, n: int) -> np.ndarray:
    if not 0 <= n < dim:
        raise DimensionError(f"basis index {n} outside dimension {dim}")
    psi = np.zeros(dim, dtype=complex)
    psi[n] = 1.0
    return _readonly(psi)


def projector(psi: np.ndarray) -> np.ndarray:
    return np.outer(psi, psi.conj())


def destroy(dim: int) -> np.ndarray:
    """Bosonic annihilation operator on a Fock space truncated at dim."""
    return _readonly(np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex))


def number_operator(dim: int) -> np.ndarray:
    return _readonly(np.diag(np.arange(dim, dtype=float)).astype(complex))


def coherent_amplitudes(alpha: complex, dim: int) -> np.ndarray:
    """Fock expansion of |alpha>, renormalized after truncation.

    The truncation is reliable only for dim >= |alpha|^2 + 6|alpha|;
    construction refuses smaller spaces.
    """
    amag = abs(alpha)
    if dim < amag * amag + 6.0 * amag:
        raise DimensionError(
            f"dim {dim} too small for |alpha|={amag:.3g}; need >= |alpha|^2 + 6|alpha|"
        )
    n = np.arange(dim)
    # log-space to avoid overflow of alpha^n / sqrt(n!)
    from scipy.special import gammaln

    logmag = n * np.log(amag) - 0.5 * gammaln(n + 1.0) if amag > 0 else np.where(n == 0, 0.0, -np.inf)
    phase = np.angle(alpha) if amag > 0 else 0.0
    amps = np.exp(logmag - 0.5 * amag * amag) * np.exp(1j * phase * n)
    amps = amps / np.linalg.norm(amps)
    return _readonly(amps)


# two-level conveniences: basis order is (|0> ground, |1> excited)
SIGMA_01 = _readonly(np.array([[0, 1], [0, 0]], dtype=complex))  # lowering |0><1|
SIGMA_10 = _readonly(np.array([[0, 0], [1, 0]], dtype=complex))  # raising |1><0|
SIGMA_11 = _readonly(np.array([[0, 0], [0, 1]], dtype=complex))  # excited projector
SIGMA_00 = _readonly(np.array([[1, 0], [0, 0]], dtype=complex))
# inversion with the +-1/2 convention
SIGMA_3 = _readonly(0.5 * np.array([[-1, 0], [0, 1]], dtype=complex))
