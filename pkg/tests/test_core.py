import numpy as np
import pytest

from qtraj.core import (
    DimensionError,
    SIGMA_01,
    SIGMA_11,
    basis_state,
    coherent_amplitudes,
    destroy,
    expectation,
    normalize,
    number_operator,
    operator,
    state_vector,
    tensor_product,
)
from conftest import random_hermitian, random_operator, random_state


def test_expectation_identity(rng):
    psi = random_state(rng, 5)
    assert expectation(np.eye(5, dtype=complex), psi) == pytest.approx(1.0, abs=1e-12)


def test_expectation_orthogonal_projector():
    psi = basis_state(2, 0)
    assert expectation(np.asarray(SIGMA_11), psi) == 0.0


def test_expectation_superposition_photon_number():
    # (|0> + |10>)/sqrt(2) has mean photon number 5
    psi = np.zeros(12, complex)
    psi[0] = psi[10] = 1 / np.sqrt(2)
    assert expectation(np.asarray(number_operator(12)), psi).real == pytest.approx(5.0)


def test_expectation_dimension_mismatch():
    with pytest.raises(DimensionError):
        expectation(np.eye(3, dtype=complex), basis_state(2, 0))


def test_expectation_linearity(rng):
    psi = random_state(rng, 4)
    a = random_operator(rng, 4)
    b = random_operator(rng, 4)
    lhs = expectation(a, psi) + expectation(b, psi)
    assert lhs == pytest.approx(expectation(a + b, psi), abs=1e-12)


def test_expectation_hermitian_real(rng):
    for _ in range(5):
        psi = random_state(rng, 6)
        h = random_hermitian(rng, 6)
        assert abs(expectation(h, psi).imag) < 1e-12


def test_tensor_product_identities():
    assert np.array_equal(
        tensor_product(np.eye(2, dtype=complex), np.eye(3, dtype=complex)),
        np.eye(6, dtype=complex),
    )
    block = tensor_product(np.asarray(SIGMA_11), np.eye(3, dtype=complex))
    assert block.shape == (6, 6)
    assert np.allclose(block, np.diag([0, 0, 0, 1, 1, 1]))


def test_tensor_product_matches_index_arithmetic(rng):
    a = np.asarray(SIGMA_01)
    b = np.asarray(destroy(4))
    out = tensor_product(a, b)
    # brute-force Kronecker by explicit index arithmetic
    ref = np.zeros((8, 8), complex)
    for i in range(2):
        for j in range(2):
            for k in range(4):
                for l in range(4):
                    ref[i * 4 + k, j * 4 + l] = a[i, j] * b[k, l]
    assert np.abs(out - ref).max() == 0.0


def test_tensor_product_associative(rng):
    ops = [random_operator(rng, d) for d in (2, 3, 2)]
    left = tensor_product(tensor_product(ops[0], ops[1]), ops[2])
    right = tensor_product(ops[0], tensor_product(ops[1], ops[2]))
    assert np.abs(left - right).max() < 1e-12


def test_tensor_product_cap():
    with pytest.raises(DimensionError):
        tensor_product(np.eye(16, dtype=complex), np.eye(16, dtype=complex))
    # explicit cap raise allows it
    out = tensor_product(np.eye(16, dtype=complex), np.eye(16, dtype=complex), dim_cap=256)
    assert out.shape == (256, 256)


def test_normalize_basic():
    psi, n = normalize(np.array([2.0, 0.0], complex))
    assert n == 2.0
    assert np.array_equal(psi, np.array([1.0, 0.0], complex))


def test_normalize_already_normalized(rng):
    psi = random_state(rng, 3)
    out, n = normalize(psi)
    assert n == pytest.approx(1.0, abs=1e-12)
    again, n2 = normalize(out)
    assert np.abs(again - out).max() < 1e-15
    assert n2 == pytest.approx(1.0, abs=1e-12)


def test_normalize_lowered_superposition():
    # a (|0> + |10>)/sqrt(2) -> |9>, norm sqrt(10/2)
    psi = np.zeros(12, complex)
    psi[0] = psi[10] = 1 / np.sqrt(2)
    lowered = np.asarray(destroy(12)) @ psi
    out, n = normalize(lowered)
    assert abs(np.vdot(basis_state(12, 9), out)) ** 2 == pytest.approx(1.0)
    assert n == pytest.approx(np.sqrt(5.0))


def test_normalize_zero_norm():
    with pytest.raises(ValueError):
        normalize(np.zeros(3, complex))


def test_operator_rejects_nonsquare_and_nan():
    with pytest.raises(DimensionError):
        operator(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        operator(np.array([[np.nan, 0], [0, 0]]))


def test_state_vector_immutability():
    psi = state_vector([1, 0])
    with pytest.raises(ValueError):
        psi[0] = 2.0


def test_coherent_state_needs_room():
    with pytest.raises(DimensionError):
        coherent_amplitudes(4.0, 20)
    amps = coherent_amplitudes(2.0, 20)
    assert np.vdot(amps, amps).real == pytest.approx(1.0, abs=1e-12)
    # annihilation eigenstate within truncation
    residual = np.asarray(destroy(20)) @ amps - 2.0 * amps
    assert np.linalg.norm(residual[:-1]) < 1e-6
