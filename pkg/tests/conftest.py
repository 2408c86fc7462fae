"""Shared fixtures/helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from hybridshadow.qcore import DensityMatrix


def random_density(rng: np.random.Generator, n_qubits: int, rank: int | None = None) -> DensityMatrix:
    """Haar-ish random full(ish)-rank density matrix for oracle tests."""
    d = 1 << n_qubits
    r = d if rank is None else rank
    a = rng.normal(size=(d, r)) + 1j * rng.normal(size=(d, r))
    m = a @ a.conj().T
    m /= m.trace()
    m = 0.5 * (m + m.conj().T)
    m /= m.trace().real
    return DensityMatrix(m, check_psd=True)


def random_pure(rng: np.random.Generator, n_qubits: int) -> DensityMatrix:
    return random_density(rng, n_qubits, rank=1)


def random_unitary(rng: np.random.Generator, d: int) -> np.ndarray:
    """Haar-random unitary via QR with phase fix."""
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(a)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_hermitian(rng: np.random.Generator, d: int) -> np.ndarray:
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return 0.5 * (a + a.conj().T)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260815)
