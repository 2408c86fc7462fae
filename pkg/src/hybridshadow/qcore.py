"""Dense state/operator primitives for small qubit registers.

Conventions used across the package:

* qubit 0 is the most significant bit of a computational-basis index, so the
  basis state ``|b_0 b_1 ... b_{n-1}>`` has index ``sum_k b_k << (n-1-k)``
  (matching ``numpy.kron`` applied left to right);
* all dense operators are ``complex128`` NumPy arrays;
* structural checks (trace, hermiticity) use an absolute tolerance of 1e-10.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ComplexMatrix = np.ndarray

ATOL_STRUCT = 1e-10

PAULI_I = np.eye(2, dtype=np.complex128)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
PAULIS = {"I": PAULI_I, "X": PAULI_X, "Y": PAULI_Y, "Z": PAULI_Z}

HADAMARD = np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2.0)
S_GATE = np.array([[1, 0], [0, 1j]], dtype=np.complex128)


def _as_matrix(mat: np.ndarray) -> np.ndarray:
    out = np.asarray(mat, dtype=np.complex128)
    if out.ndim != 2 or out.shape[0] != out.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {out.shape}")
    return out


def _n_qubits_of(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if dim <= 0 or (1 << n) != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


def is_hermitian(mat: np.ndarray, atol: float = ATOL_STRUCT) -> bool:
    """Return True if ``mat`` equals its conjugate transpose within ``atol``."""
    m = _as_matrix(mat)
    return bool(np.max(np.abs(m - m.conj().T)) <= atol)


def is_unitary(mat: np.ndarray, atol: float = ATOL_STRUCT) -> bool:
    """Return True if ``mat @ mat^dagger`` equals the identity within ``atol``."""
    m = _as_matrix(mat)
    return bool(np.max(np.abs(m @ m.conj().T - np.eye(m.shape[0]))) <= atol)


@dataclass(frozen=True)
class BitString:
    """Measurement outcome on ``n`` qubits; bit of qubit 0 comes first.

    ``value`` is the computational-basis index with qubit 0 as the most
    significant bit, so ``BitString.from_string("10")`` has ``value == 2``.
    """

    value: int
    n: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("BitString needs at least one qubit")
        if not 0 <= self.value < (1 << self.n):
            raise ValueError(f"value {self.value} out of range for {self.n} qubits")

    @classmethod
    def from_bits(cls, bits: "list[int] | tuple[int, ...]") -> "BitString":
        value = 0
        for b in bits:
            if b not in (0, 1):
                raise ValueError(f"bits must be 0/1, got {b!r}")
            value = (value << 1) | b
        return cls(value, len(bits))

    @classmethod
    def from_string(cls, s: str) -> "BitString":
        return cls.from_bits([int(c) for c in s])

    @property
    def bits(self) -> tuple[int, ...]:
        return tuple((self.value >> (self.n - 1 - k)) & 1 for k in range(self.n))

    def bit(self, k: int) -> int:
        return (self.value >> (self.n - 1 - k)) & 1

    def __str__(self) -> str:
        return "".join(str(b) for b in self.bits)

    def __len__(self) -> int:
        return self.n


@dataclass(frozen=True)
class DensityMatrix:
    """Validated density matrix on ``n_qubits`` qubits.

    Hermiticity and unit trace are always enforced; positivity is an opt-in
    check (``check_psd=True``) because eigendecompositions are comparatively
    expensive in tight sampling loops.
    """

    mat: ComplexMatrix
    n_qubits: int = field(init=False)
    check_psd: bool = False

    def __post_init__(self) -> None:
        m = _as_matrix(self.mat)
        object.__setattr__(self, "mat", m)
        object.__setattr__(self, "n_qubits", _n_qubits_of(m.shape[0]))
        if abs(m.trace() - 1.0) > ATOL_STRUCT:
            raise ValueError(f"trace {m.trace():.12g} is not 1")
        if not is_hermitian(m):
            raise ValueError("density matrix is not Hermitian")
        if self.check_psd:
            lo = float(np.linalg.eigvalsh(m).min())
            if lo < -ATOL_STRUCT:
                raise ValueError(f"density matrix has negative eigenvalue {lo:.3g}")

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DensityMatrix):
            return NotImplemented
        return self.n_qubits == other.n_qubits and np.array_equal(self.mat, other.mat)


@dataclass(frozen=True)
class Observable:
    """Operator acting on the qubits listed in ``support``.

    ``mat`` has dimension ``2**len(support)``; :meth:`embedded` tensors it with
    identities on the remaining qubits. The ``is_hermitian`` / ``is_unitary``
    flags are computed once at construction so estimator code can branch on
    them cheaply.
    """

    mat: ComplexMatrix
    support: tuple[int, ...]
    is_hermitian: bool = field(init=False)
    is_unitary: bool = field(init=False)

    def __post_init__(self) -> None:
        m = _as_matrix(self.mat)
        support = tuple(int(q) for q in self.support)
        if len(set(support)) != len(support) or any(q < 0 for q in support):
            raise ValueError(f"support must be distinct non-negative qubits, got {support}")
        if tuple(sorted(support)) != support:
            raise ValueError(f"support must be sorted ascending, got {support}")
        if m.shape[0] != 1 << len(support):
            raise ValueError(
                f"matrix dim {m.shape[0]} does not match support size {len(support)}"
            )
        object.__setattr__(self, "mat", m)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "is_hermitian", is_hermitian(m))
        object.__setattr__(self, "is_unitary", is_unitary(m))

    @classmethod
    def from_pauli(cls, letters: str, support: "tuple[int, ...] | None" = None) -> "Observable":
        """Pauli-string observable, e.g. ``from_pauli("ZZ", (0, 1))``."""
        if support is None:
            support = tuple(range(len(letters)))
        if len(letters) != len(support):
            raise ValueError("one Pauli letter per supported qubit")
        return cls(pauli_matrix(letters), tuple(support))

    @property
    def n_support(self) -> int:
        return len(self.support)

    def embedded(self, n_qubits: int) -> ComplexMatrix:
        """Dense ``2**n_qubits`` matrix acting as ``mat`` on ``support``."""
        if self.support and self.support[-1] >= n_qubits:
            raise ValueError(f"support {self.support} does not fit in {n_qubits} qubits")
        return embed_operator(self.mat, self.support, n_qubits)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Observable):
            return NotImplemented
        return self.support == other.support and np.array_equal(self.mat, other.mat)


def pauli_matrix(letters: str) -> ComplexMatrix:
    """Kronecker product of single-qubit Paulis, first letter on qubit 0."""
    if not letters:
        raise ValueError("empty Pauli string")
    out = np.array([[1.0 + 0.0j]])
    for c in letters:
        try:
            out = np.kron(out, PAULIS[c])
        except KeyError:
            raise ValueError(f"unknown Pauli letter {c!r}") from None
    return out


def embed_operator(mat: np.ndarray, support: "tuple[int, ...]", n_qubits: int) -> ComplexMatrix:
    """Embed ``mat`` (acting on ``support``) into the full ``n_qubits`` register."""
    m = _as_matrix(mat)
    k = len(support)
    if m.shape[0] != 1 << k:
        raise ValueError("matrix dimension does not match support size")
    if k == n_qubits:
        return m.copy()
    others = [q for q in range(n_qubits) if q not in support]
    if len(others) != n_qubits - k:
        raise ValueError("support qubits out of range or duplicated")
    big = np.kron(m, np.eye(1 << (n_qubits - k), dtype=np.complex128))
    # big's qubit order is support + others; permute axes back to 0..n-1.
    perm = list(support) + others
    pos = np.argsort(perm)
    t = big.reshape((2,) * (2 * n_qubits))
    axes = tuple(pos) + tuple(n_qubits + pos)
    d = 1 << n_qubits
    return np.ascontiguousarray(t.transpose(axes).reshape(d, d))


def partial_trace(mat: np.ndarray, keep: "tuple[int, ...]", n_qubits: int) -> ComplexMatrix:
    """Trace out all qubits not in ``keep`` from an ``n_qubits`` operator."""
    m = _as_matrix(mat)
    if m.shape[0] != 1 << n_qubits:
        raise ValueError("matrix dimension does not match qubit count")
    keep = tuple(sorted(keep))
    if any(q < 0 or q >= n_qubits for q in keep):
        raise ValueError(f"keep qubits {keep} out of range")
    t = m.reshape((2,) * (2 * n_qubits))
    removed = 0
    for q in range(n_qubits - 1, -1, -1):
        if q in keep:
            continue
        t = np.trace(t, axis1=q, axis2=q + n_qubits - removed)
        removed += 1
    dk = 1 << len(keep)
    return t.reshape(dk, dk)


def ghz_state(n_qubits: int) -> DensityMatrix:
    """GHZ state ``(|0...0> + |1...1>)/sqrt(2)`` as a density matrix."""
    if n_qubits < 1:
        raise ValueError("need at least one qubit")
    d = 1 << n_qubits
    psi = np.zeros(d, dtype=np.complex128)
    psi[0] = psi[-1] = 1.0 / np.sqrt(2.0)
    return DensityMatrix(np.outer(psi, psi.conj()))


def depolarize(rho: DensityMatrix, q: float) -> DensityMatrix:
    """Global depolarizing channel ``q * rho + (1 - q) * I/d``."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"depolarizing weight q={q} outside [0, 1]")
    d = rho.dim
    mat = q * rho.mat + (1.0 - q) * np.eye(d) / d
    return DensityMatrix(mat)


def matrix_power(mat: np.ndarray, t: int) -> ComplexMatrix:
    """``mat ** t`` for integer ``t >= 1`` (t = 0 is rejected, not I)."""
    if int(t) != t or t < 1:
        raise ValueError(f"power t={t} must be a positive integer")
    return np.linalg.matrix_power(_as_matrix(mat), int(t))


def _real_trace(value: complex, what: str, atol: float = 1e-9) -> float:
    if abs(value.imag) > atol * max(1.0, abs(value.real)):
        raise ValueError(f"{what} has non-negligible imaginary part {value.imag:.3g}")
    return float(value.real)


def exact_moment(rho: DensityMatrix, m: int) -> float:
    """State moment ``tr(rho^m)``."""
    return _real_trace(complex(np.trace(matrix_power(rho.mat, m))), f"tr(rho^{m})")


def exact_obs_moment(rho: DensityMatrix, obs: Observable, m: int) -> float:
    """Observable moment ``tr(O rho^m)`` for Hermitian ``O``."""
    if not obs.is_hermitian:
        raise ValueError("observable moment requires a Hermitian observable")
    full = obs.embedded(rho.n_qubits)
    return _real_trace(complex(np.trace(full @ matrix_power(rho.mat, m))), "tr(O rho^m)")


def exact_general_function(
    states: "list[DensityMatrix]", ops: "list[Observable | None]"
) -> complex:
    """General product functional ``tr(rho_1 O_1 rho_2 O_2 ... rho_m O_m)``.

    ``ops[i] is None`` inserts an identity after ``states[i]``. The result is
    complex in general; no hermiticity is required of the interleaved ops.
    """
    if not states:
        raise ValueError("need at least one state")
    if len(ops) != len(states):
        raise ValueError(f"got {len(states)} states but {len(ops)} ops")
    n = states[0].n_qubits
    if any(s.n_qubits != n for s in states):
        raise ValueError("all states must act on the same number of qubits")
    acc = np.eye(states[0].dim, dtype=np.complex128)
    for state, op in zip(states, ops):
        acc = acc @ state.mat
        if op is not None:
            acc = acc @ op.embedded(n)
    return complex(np.trace(acc))
