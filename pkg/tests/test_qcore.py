"""State/operator primitives: frozen oracle values and structural invariants."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from conftest import random_density, random_unitary
from hybridshadow.qcore import (
    BitString,
    DensityMatrix,
    Observable,
    depolarize,
    embed_operator,
    exact_general_function,
    exact_moment,
    exact_obs_moment,
    ghz_state,
    is_hermitian,
    is_unitary,
    matrix_power,
    partial_trace,
    pauli_matrix,
)

ATOL = 1e-10


class TestBitString:
    def test_msb_convention(self):
        b = BitString.from_string("10")
        assert b.value == 2
        assert b.bits == (1, 0)
        assert b.bit(0) == 1 and b.bit(1) == 0
        assert str(b) == "10"
        assert len(b) == 2

    def test_round_trip_all_4bit(self):
        for v in range(16):
            b = BitString(v, 4)
            assert BitString.from_bits(b.bits) == b
            assert BitString.from_string(str(b)) == b

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            BitString(4, 2)
        with pytest.raises(ValueError):
            BitString(-1, 2)
        with pytest.raises(ValueError):
            BitString.from_bits([0, 2])


class TestGhzAndChannels:
    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_ghz_corners(self, n):
        rho = ghz_state(n)
        d = 1 << n
        expected = np.zeros((d, d))
        expected[0, 0] = expected[0, -1] = expected[-1, 0] = expected[-1, -1] = 0.5
        np.testing.assert_allclose(rho.mat, expected, atol=ATOL)
        assert abs(exact_moment(rho, 2) - 1.0) < ATOL

    def test_depolarize_purity_frozen(self):
        # q^2 + (1 - q^2)/d with q=0.8, d=4  ->  0.73
        rho = depolarize(ghz_state(2), 0.8)
        assert abs(exact_moment(rho, 2) - 0.73) < ATOL

    def test_depolarized_ghz_eigenvalues(self):
        # One eigenvalue q + (1-q)/d = 0.85, the rest (1-q)/d = 0.05.
        rho = depolarize(ghz_state(2), 0.8)
        ev = np.sort(np.linalg.eigvalsh(rho.mat))
        np.testing.assert_allclose(ev, [0.05, 0.05, 0.05, 0.85], atol=ATOL)

    def test_depolarize_rejects_bad_q(self):
        rho = ghz_state(1)
        for q in (-0.1, 1.1):
            with pytest.raises(ValueError):
                depolarize(rho, q)

    @pytest.mark.parametrize("n", [2, 3, 4])
    @pytest.mark.parametrize("q", [0.0, 0.35, 0.8, 1.0])
    def test_subsystem_purity_all_proper_subsets(self, n, q):
        # tr(rho_A^2) = q^2/2 + (1 - q^2)/2^|A| for every proper nonempty A.
        rho = depolarize(ghz_state(n), q)
        for size in range(1, n):
            for keep in itertools.combinations(range(n), size):
                red = partial_trace(rho.mat, keep, n)
                purity = float(np.trace(red @ red).real)
                expected = q * q / 2 + (1 - q * q) / (1 << size)
                assert abs(purity - expected) < 1e-9, (keep, q)


class TestMoments:
    def test_moment_frozen_values(self):
        rho = depolarize(ghz_state(2), 0.8)
        # 0.85^3 + 3 * 0.05^3 and 0.85^4 + 3 * 0.05^4
        assert abs(exact_moment(rho, 3) - 0.6145) < ATOL
        assert abs(exact_moment(rho, 4) - 0.522025) < ATOL

    def test_obs_moment_frozen_value(self):
        # tr(ZZ rho^2) = q^2 + q(1-q)/2 = 0.72 at q = 0.8.
        rho = depolarize(ghz_state(2), 0.8)
        zz = Observable.from_pauli("ZZ")
        assert abs(exact_obs_moment(rho, zz, 2) - 0.72) < ATOL

    def test_obs_moment_rejects_non_hermitian(self):
        rho = ghz_state(1)
        op = Observable(np.array([[0, 1], [0, 0]], dtype=complex), (0,))
        assert not op.is_hermitian
        with pytest.raises(ValueError):
            exact_obs_moment(rho, op, 2)

    def test_matrix_power_rejects_zero(self):
        with pytest.raises(ValueError):
            matrix_power(np.eye(2), 0)
        with pytest.raises(ValueError):
            matrix_power(np.eye(2), -1)

    def test_moment_random_vs_eigenvalues(self, rng):
        rho = random_density(rng, 3)
        ev = np.linalg.eigvalsh(rho.mat)
        for m in (2, 3, 4, 5):
            assert abs(exact_moment(rho, m) - np.sum(ev**m)) < 1e-9

    def test_general_function_degenerates_to_moments(self, rng):
        rho = random_density(rng, 2)
        for m in (1, 2, 3, 4):
            val = exact_general_function([rho] * m, [None] * m)
            assert abs(val - exact_moment(rho, m)) < 1e-9
            assert abs(val.imag) < 1e-12

    def test_general_function_interleaved(self, rng):
        # tr(rho1 O1 rho2 O2) against a direct matrix product.
        rho1, rho2 = random_density(rng, 2), random_density(rng, 2)
        o1 = Observable(random_unitary(rng, 4), (0, 1))
        o2 = Observable.from_pauli("XI")
        val = exact_general_function([rho1, rho2], [o1, o2])
        direct = np.trace(rho1.mat @ o1.mat @ rho2.mat @ o2.mat)
        assert abs(val - direct) < 1e-9

    def test_general_function_cyclic(self, rng):
        rho1, rho2 = random_density(rng, 1), random_density(rng, 1)
        o1 = Observable(random_unitary(rng, 2), (0,))
        o2 = Observable(random_unitary(rng, 2), (0,))
        a = exact_general_function([rho1, rho2], [o1, o2])
        b = exact_general_function([rho2, rho1], [o2, o1])
        assert abs(a - b) < 1e-9

    def test_general_function_shape_errors(self, rng):
        rho = random_density(rng, 1)
        with pytest.raises(ValueError):
            exact_general_function([], [])
        with pytest.raises(ValueError):
            exact_general_function([rho], [None, None])


class TestOperators:
    def test_hermitian_unitary_flags(self):
        assert is_hermitian(pauli_matrix("XY"))
        assert is_unitary(pauli_matrix("XY"))
        assert not is_hermitian(np.array([[0, 1], [0, 0]], dtype=complex))
        assert not is_unitary(np.diag([1.0, 2.0]).astype(complex))

    def test_embed_matches_kron(self):
        z, x, i2 = pauli_matrix("Z"), pauli_matrix("X"), np.eye(2)
        np.testing.assert_allclose(embed_operator(z, (0,), 2), np.kron(z, i2), atol=ATOL)
        np.testing.assert_allclose(embed_operator(x, (1,), 2), np.kron(i2, x), atol=ATOL)
        np.testing.assert_allclose(
            embed_operator(pauli_matrix("ZX"), (0, 2), 3),
            np.kron(z, np.kron(i2, x)),
            atol=ATOL,
        )
        np.testing.assert_allclose(
            embed_operator(pauli_matrix("YZ"), (1, 2), 3),
            np.kron(i2, pauli_matrix("YZ")),
            atol=ATOL,
        )

    def test_observable_embedding_and_flags(self):
        zz = Observable.from_pauli("ZZ", (0, 1))
        assert zz.is_hermitian and zz.is_unitary
        full = zz.embedded(3)
        np.testing.assert_allclose(full, pauli_matrix("ZZI"), atol=ATOL)
        with pytest.raises(ValueError):
            zz.embedded(1)

    def test_observable_validation(self):
        with pytest.raises(ValueError):
            Observable(np.eye(2), (0, 1))  # dim mismatch
        with pytest.raises(ValueError):
            Observable(np.eye(4), (1, 0))  # unsorted support
        with pytest.raises(ValueError):
            Observable(np.eye(4), (0, 0))  # duplicate

    def test_partial_trace_product_state(self, rng):
        a, b = random_density(rng, 1), random_density(rng, 2)
        joint = np.kron(a.mat, b.mat)
        np.testing.assert_allclose(partial_trace(joint, (0,), 3), a.mat, atol=1e-12)
        np.testing.assert_allclose(partial_trace(joint, (1, 2), 3), b.mat, atol=1e-12)
        np.testing.assert_allclose(
            partial_trace(joint, (0, 2), 3), np.kron(a.mat, partial_trace(b.mat, (1,), 2)), atol=1e-12
        )


class TestDensityMatrixValidation:
    def test_rejects_bad_trace(self):
        with pytest.raises(ValueError):
            DensityMatrix(np.eye(2, dtype=complex))

    def test_rejects_non_hermitian(self):
        m = np.array([[0.5, 0.5], [0.0, 0.5]], dtype=complex)
        with pytest.raises(ValueError):
            DensityMatrix(m)

    def test_psd_check_is_opt_in(self):
        m = np.diag([1.5, -0.5]).astype(complex)
        DensityMatrix(m)  # structural checks only: accepted
        with pytest.raises(ValueError):
            DensityMatrix(m, check_psd=True)

    def test_rejects_non_power_of_two(self):
        m = np.eye(3, dtype=complex) / 3
        with pytest.raises(ValueError):
            DensityMatrix(m)
