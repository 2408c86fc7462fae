"""Measurement-basis ensembles and the inverse shadow channel.

Two ensembles are supported:

* ``local_clifford`` — independent per-qubit choice among the three basis
  rotations (Z: identity, X: H, Y: H S^dagger), descriptor is a base-3 digit
  string with ``0 -> Z, 1 -> X, 2 -> Y``, qubit 0 first;
* ``global_clifford`` — exactly uniform over the n-qubit Clifford group modulo
  phase, sampled as (uniform binary-symplectic tableau, uniform sign bits) and
  converted to a dense matrix with a canonical global phase. The descriptor is
  the hex-packed tableau (rows = images of X_0..X_{n-1}, Z_0..Z_{n-1} in
  (x | z) block order, one sign bit per row).

The inverse channel ``M^{-1}`` turns a measured pair (U, b) into the standard
unbiased single-copy snapshot.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from . import _symplectic
from .qcore import HADAMARD, S_GATE, BitString, ComplexMatrix, Observable

MAX_GLOBAL_QUBITS = 8

_LOCAL_LETTERS = "ZXY"
_LOCAL_ROTATIONS = (
    np.eye(2, dtype=np.complex128),  # Z basis
    HADAMARD.copy(),  # X basis
    HADAMARD @ S_GATE.conj().T,  # Y basis: maps |+i> -> |0>
)


class EnsembleTag(str, Enum):
    LOCAL_CLIFFORD = "local_clifford"
    GLOBAL_CLIFFORD = "global_clifford"


@dataclass(frozen=True)
class EnsembleKind:
    tag: EnsembleTag
    n_qubits: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "tag", EnsembleTag(self.tag))
        if self.n_qubits < 1:
            raise ValueError("ensemble needs at least one qubit")
        if self.tag is EnsembleTag.GLOBAL_CLIFFORD and self.n_qubits > MAX_GLOBAL_QUBITS:
            raise ValueError(
                f"global Clifford dense conversion capped at {MAX_GLOBAL_QUBITS} qubits"
            )

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits


def local_clifford(n_qubits: int) -> EnsembleKind:
    return EnsembleKind(EnsembleTag.LOCAL_CLIFFORD, n_qubits)


def global_clifford(n_qubits: int) -> EnsembleKind:
    return EnsembleKind(EnsembleTag.GLOBAL_CLIFFORD, n_qubits)


class SampledUnitary:
    """A drawn measurement rotation; the dense matrix is built lazily."""

    __slots__ = ("kind", "descriptor", "_matrix")

    def __init__(self, kind: EnsembleKind, descriptor: str, matrix: ComplexMatrix | None = None):
        self.kind = kind
        self.descriptor = descriptor
        self._matrix = matrix

    @property
    def matrix(self) -> ComplexMatrix:
        if self._matrix is None:
            self._matrix = _matrix_from_descriptor(self.kind, self.descriptor)
        return self._matrix

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SampledUnitary):
            return NotImplemented
        return self.kind == other.kind and self.descriptor == other.descriptor

    def __hash__(self) -> int:
        return hash((self.kind, self.descriptor))

    def __repr__(self) -> str:
        return f"SampledUnitary({self.kind.tag.value}, n={self.kind.n_qubits}, {self.descriptor!r})"


# ---------------------------------------------------------------------------
# global-Clifford tableau machinery
#
# Hermitian Pauli convention: P(x, z) = i^{x.z} X^x Z^z (per qubit), so every
# (x, z, sign in {+1, -1}) triple is a valid Hermitian-unitary Pauli and the
# Clifford group mod phase is exactly {symplectic tableau} x {sign vectors}.
# ---------------------------------------------------------------------------


def _pack_bits_int(x_bits: np.ndarray) -> int:
    """Pack a qubit-0-first bit vector into a basis-index integer (qubit 0 = MSB)."""
    value = 0
    for b in x_bits:
        value = (value << 1) | int(b)
    return value


def _apply_pauli_vec(x_int: int, z_int: int, phase: complex, vec: np.ndarray, n: int) -> np.ndarray:
    """Apply phase * i^{x.z} X^x Z^z to a state vector in O(d)."""
    d = 1 << n
    idx = np.arange(d)
    front = phase * (1j ** int(np.bitwise_count(np.uint64(x_int & z_int))))
    signs = 1.0 - 2.0 * (np.bitwise_count(idx & z_int) & 1)
    out = np.empty(d, dtype=np.complex128)
    out[idx ^ x_int] = front * signs * vec
    return out


def _pauli_dense(x_int: int, z_int: int, phase: complex, n: int) -> ComplexMatrix:
    d = 1 << n
    idx = np.arange(d)
    front = phase * (1j ** int(np.bitwise_count(np.uint64(x_int & z_int))))
    signs = 1.0 - 2.0 * (np.bitwise_count(idx & z_int) & 1)
    out = np.zeros((d, d), dtype=np.complex128)
    out[idx ^ x_int, idx] = front * signs
    return out


def _row_pauli(xz: np.ndarray, r: np.ndarray, row: int, n: int) -> tuple[int, int, float]:
    x_int = _pack_bits_int(xz[row, :n])
    z_int = _pack_bits_int(xz[row, n:])
    return x_int, z_int, (-1.0 if r[row] else 1.0)


def _clifford_matrix(xz: np.ndarray, r: np.ndarray, n: int) -> ComplexMatrix:
    """Dense unitary realizing the tableau, canonical global phase.

    Column 0 is the joint +1 eigenvector of the Z-row Paulis (the stabilizer
    state U|0...0>), built by projector application; column b is the product of
    the X-row Pauli images selected by the bits of b applied to column 0.
    """
    d = 1 << n
    psi = None
    for seed in range(d):
        v = np.zeros(d, dtype=np.complex128)
        v[seed] = 1.0
        for j in range(n):
            x_int, z_int, sign = _row_pauli(xz, r, n + j, n)
            v = 0.5 * (v + _apply_pauli_vec(x_int, z_int, sign, v, n))
            if np.linalg.norm(v) < 1e-9:
                break
        norm = np.linalg.norm(v)
        if norm > 1e-9:
            psi = v / norm
            break
    if psi is None:  # impossible for a valid symplectic tableau
        raise ValueError("tableau does not stabilize any state")
    k0 = int(np.flatnonzero(np.abs(psi) > 1e-6)[0])
    psi = psi * (psi[k0].conj() / abs(psi[k0]))

    x_images = [_row_pauli(xz, r, j, n) for j in range(n)]
    mat = np.empty((d, d), dtype=np.complex128)
    mat[:, 0] = psi
    for b in range(1, d):
        low = b & (-b)
        qubit = n - low.bit_length()
        x_int, z_int, sign = x_images[qubit]
        mat[:, b] = _apply_pauli_vec(x_int, z_int, sign, mat[:, b ^ low], n)
    return mat


def _blocked_symplectic_ok(xz: np.ndarray, n: int) -> bool:
    lam = np.zeros((2 * n, 2 * n), dtype=np.int8)
    lam[:n, n:] = np.eye(n, dtype=np.int8)
    lam[n:, :n] = np.eye(n, dtype=np.int8)
    return np.array_equal((xz @ lam @ xz.T) % 2, lam)


def _interleaved_to_blocked(g: np.ndarray, n: int) -> np.ndarray:
    perm = list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2))
    return np.ascontiguousarray(g[np.ix_(perm, perm)])


def _encode_global(xz: np.ndarray, r: np.ndarray, n: int) -> str:
    bits = list(xz.reshape(-1)) + list(r)
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    width = (len(bits) + 3) // 4
    return f"{value:0{width}x}"


def _decode_global(descriptor: str, n: int) -> tuple[np.ndarray, np.ndarray]:
    n_bits = 4 * n * n + 2 * n
    width = (n_bits + 3) // 4
    if len(descriptor) != width:
        raise ValueError(
            f"global descriptor length {len(descriptor)} != expected {width} for n={n}"
        )
    try:
        value = int(descriptor, 16)
    except ValueError:
        raise ValueError(f"global descriptor is not hex: {descriptor!r}") from None
    if value >= (1 << n_bits):
        raise ValueError("global descriptor has stray high bits")
    bits = [(value >> (n_bits - 1 - t)) & 1 for t in range(n_bits)]
    xz = np.array(bits[: 4 * n * n], dtype=np.int8).reshape(2 * n, 2 * n)
    r = np.array(bits[4 * n * n :], dtype=np.int8)
    if not _blocked_symplectic_ok(xz, n):
        raise ValueError("global descriptor does not encode a symplectic tableau")
    return xz, r


@lru_cache(maxsize=512)
def _cached_global_matrix(descriptor: str, n: int) -> ComplexMatrix:
    xz, r = _decode_global(descriptor, n)
    return _clifford_matrix(xz, r, n)


def _local_digits(descriptor: str, n: int) -> list[int]:
    if len(descriptor) != n or any(c not in "012" for c in descriptor):
        raise ValueError(f"local descriptor {descriptor!r} invalid for n={n}")
    return [int(c) for c in descriptor]


def _matrix_from_descriptor(kind: EnsembleKind, descriptor: str) -> ComplexMatrix:
    if kind.tag is EnsembleTag.LOCAL_CLIFFORD:
        digits = _local_digits(descriptor, kind.n_qubits)
        mat = np.array([[1.0 + 0.0j]])
        for dgt in digits:
            mat = np.kron(mat, _LOCAL_ROTATIONS[dgt])
        return mat
    return _cached_global_matrix(descriptor, kind.n_qubits)


def local_basis_letters(descriptor: str) -> str:
    """Human-readable basis letters for a local descriptor ('0121' -> 'ZXYX')."""
    return "".join(_LOCAL_LETTERS[int(c)] for c in descriptor)


# ---------------------------------------------------------------------------
# sampling / enumeration
# ---------------------------------------------------------------------------


def sample_unitary(kind: EnsembleKind, rng: np.random.Generator) -> SampledUnitary:
    """Draw one uniform element of the ensemble (deterministic given rng)."""
    n = kind.n_qubits
    if kind.tag is EnsembleTag.LOCAL_CLIFFORD:
        digits = rng.integers(0, 3, size=n)
        return SampledUnitary(kind, "".join(str(int(dgt)) for dgt in digits))
    g = _symplectic.random_symplectic(rng, n)
    xz = _interleaved_to_blocked(g, n)
    r = rng.integers(0, 2, size=2 * n).astype(np.int8)
    return SampledUnitary(kind, _encode_global(xz, r, n))


def unitary_from_descriptor(kind: EnsembleKind, descriptor: str) -> SampledUnitary:
    """Rebuild a SampledUnitary from its serialized descriptor (validated)."""
    if kind.tag is EnsembleTag.LOCAL_CLIFFORD:
        _local_digits(descriptor, kind.n_qubits)
    else:
        _decode_global(descriptor, kind.n_qubits)
    return SampledUnitary(kind, descriptor)


def enumerate_ensemble(kind: EnsembleKind) -> list[tuple[SampledUnitary, float]]:
    """Exhaustive (unitary, probability) list for exact-expectation oracles."""
    n = kind.n_qubits
    if kind.tag is EnsembleTag.LOCAL_CLIFFORD:
        if n > 4:
            raise ValueError(f"local enumeration capped at 4 qubits, got {n}")
        total = 3**n
        out = []
        for code in range(total):
            digits, c = [], code
            for _ in range(n):
                digits.append(c % 3)
                c //= 3
            desc = "".join(str(dgt) for dgt in reversed(digits))
            out.append((SampledUnitary(kind, desc), 1.0 / total))
        return out
    if n > 2:
        raise ValueError(f"global enumeration capped at 2 qubits, got {n}")
    order = _symplectic.group_order(n)
    total = order * (1 << (2 * n))
    out = []
    for idx in range(order):
        xz = _interleaved_to_blocked(_symplectic.symplectic_from_index(idx, n), n)
        for rbits in range(1 << (2 * n)):
            r = np.array([(rbits >> (2 * n - 1 - t)) & 1 for t in range(2 * n)], dtype=np.int8)
            out.append((SampledUnitary(kind, _encode_global(xz, r, n)), 1.0 / total))
    return out


# ---------------------------------------------------------------------------
# inverse channel and rotated diagonals
# ---------------------------------------------------------------------------


def inverse_channel(kind: EnsembleKind, u: SampledUnitary, b: BitString) -> ComplexMatrix:
    """Unbiased single-copy snapshot M^{-1}(U^dagger |b><b| U); Hermitian, trace 1."""
    if u.kind != kind:
        raise ValueError(f"unitary kind {u.kind} does not match ensemble {kind}")
    if b.n != kind.n_qubits:
        raise ValueError(f"outcome has {b.n} bits, ensemble has {kind.n_qubits} qubits")
    if kind.tag is EnsembleTag.LOCAL_CLIFFORD:
        digits = _local_digits(u.descriptor, kind.n_qubits)
        mat = np.array([[1.0 + 0.0j]])
        eye2 = np.eye(2)
        for k, dgt in enumerate(digits):
            col = _LOCAL_ROTATIONS[dgt][b.bit(k), :].conj()
            mat = np.kron(mat, 3.0 * np.outer(col, col.conj()) - eye2)
        return mat
    d = kind.dim
    col = u.matrix[b.value, :].conj()  # U^dagger |b>
    return (d + 1.0) * np.outer(col, col.conj()) - np.eye(d)


def rotated_diagonal(u: SampledUnitary, mat: ComplexMatrix) -> np.ndarray:
    """diag(U mat U^dagger) as a complex vector, without forming the product.

    For the local ensemble this contracts one qubit axis at a time, O(n d^2);
    for the global ensemble it uses one matmul against the cached dense U.
    """
    n = u.kind.n_qubits
    if u.kind.tag is EnsembleTag.LOCAL_CLIFFORD:
        digits = _local_digits(u.descriptor, n)
        t = mat.reshape((2,) * (2 * n))
        for k, dgt in enumerate(digits):
            rot = _LOCAL_ROTATIONS[dgt]
            t = np.moveaxis(np.tensordot(rot, t, axes=(1, k)), 0, k)
            t = np.moveaxis(np.tensordot(rot.conj(), t, axes=(1, n + k)), 0, n + k)
        d = 1 << n
        return np.einsum("ii->i", t.reshape(d, d)).copy()
    full = u.matrix
    return np.einsum("ij,ij->i", full @ mat, full.conj())


def shadow_norm_bound(kind: EnsembleKind, obs: Observable) -> float:
    """Shadow-norm upper bound of the measurement primitive for observable O.

    Global Clifford: 3 tr(O^2) over the full register; local Clifford:
    2^{|support|} ||O~||_2^2 with O~ the restriction of O to its support.
    Callers wanting the traceless-part bound pass the traceless observable.
    """
    if kind.tag is EnsembleTag.GLOBAL_CLIFFORD:
        full = obs.embedded(kind.n_qubits)
        return 3.0 * float(np.trace(full @ full).real)
    tilde = obs.mat
    return float((1 << obs.n_support) * np.trace(tilde @ tilde).real)
