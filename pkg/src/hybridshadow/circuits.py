"""Exact outcome distributions and seeded samplers for every circuit family.

Control-measurement convention (fixed package-wide): control outcome
``b_c = 0`` corresponds to the +1 eigenvector of the measured control Pauli,
``|+> = (|0>+|1>)/sqrt(2)`` for X and ``|+i> = (|0>+i|1>)/sqrt(2)`` for Y.
With the control prepared in ``|+>`` and a controlled product operator ``W``
whose register trace gives the cross term ``s``, the joint probabilities are

    Pr(b_c, b | c=X) = half_diag(b) + (-1)^{b_c} * Re s(b) / 2
    Pr(b_c, b | c=Y) = half_diag(b) + (-1)^{b_c} * Im s(b) / 2

This sign choice is the one under which the sigma-snapshot estimator is
exactly unbiased (verified by enumeration in the tests); it also makes the
swap test reconstruct F_m as E_X[(-1)^{b_c}] + i E_Y[(-1)^{b_c}].

Outcomes are sampled from these analytic joints by inverse CDF (one uniform
per shot, cumulative sums in extended precision); the (nt+1)-qubit register is
never simulated gate by gate outside the brute-force test oracle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .ensembles import (
    EnsembleKind,
    SampledUnitary,
    rotated_diagonal,
    sample_unitary,
    unitary_from_descriptor,
)
from .qcore import (
    BitString,
    ComplexMatrix,
    DensityMatrix,
    Observable,
    exact_general_function,
    is_unitary,
    matrix_power,
)
from .streams import TAG_CONTROL_BASIS, TAG_OUTCOME, TAG_UNITARY, substream

MAX_SINGLE_REGISTER_QUBITS = 12  # PlainRM / HybridMoment / SwapTest
MAX_PRODUCT_REGISTER_QUBITS = 10  # HybridSigma / ControlledVO / SpectralO


class CircuitFamily(str, Enum):
    PLAIN_RM = "plain_rm"
    SWAP_TEST = "swap_test"
    HYBRID_MOMENT = "hybrid_moment"
    HYBRID_SIGMA = "hybrid_sigma"
    CONTROLLED_VO = "controlled_vo"
    SPECTRAL_O = "spectral_o"


class ControlBasis(str, Enum):
    X = "X"
    Y = "Y"


_FAMILY_CODES = {fam: code for code, fam in enumerate(CircuitFamily)}


@dataclass(eq=False)
class CircuitSpec:
    """A measurement circuit: copies, interleaved ops, and family-specific data."""

    family: CircuitFamily
    t: int
    states: tuple[DensityMatrix, ...]
    interleaved_ops: tuple["Observable | None", ...] = ()
    v_op: ComplexMatrix | None = None
    spectral_v: ComplexMatrix | None = None
    spectral_lambda: np.ndarray | None = None
    control_basis: ControlBasis = ControlBasis.X
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self.family = CircuitFamily(self.family)
        self.control_basis = ControlBasis(self.control_basis)
        if self.t < 1 or self.t != int(self.t):
            raise ValueError(f"copy count t={self.t} must be a positive integer")
        if len(self.states) != self.t:
            raise ValueError(f"need {self.t} states, got {len(self.states)}")
        n = self.states[0].n_qubits
        if any(s.n_qubits != n for s in self.states):
            raise ValueError("all copies must have the same qubit count")

        fam = self.family
        if fam is CircuitFamily.HYBRID_MOMENT or fam is CircuitFamily.PLAIN_RM:
            first = self.states[0].mat
            if any(not np.array_equal(s.mat, first) for s in self.states[1:]):
                raise ValueError(f"{fam.value} requires identical copies")
        if fam is CircuitFamily.HYBRID_SIGMA:
            if len(self.interleaved_ops) != self.t - 1:
                raise ValueError(f"need {self.t - 1} interleaved ops, got {len(self.interleaved_ops)}")
            for op in self.interleaved_ops:
                if op is None:
                    continue
                if not op.is_hermitian or not op.is_unitary:
                    raise ValueError("interleaved ops must be unitary and Hermitian")
        elif fam is CircuitFamily.SWAP_TEST:
            if self.t < 2:
                raise ValueError("swap test needs at least two copies")
            if self.interleaved_ops and len(self.interleaved_ops) != self.t:
                raise ValueError(f"need {self.t} boundary ops (or none), got {len(self.interleaved_ops)}")
            for op in self.interleaved_ops:
                if op is not None and (not op.is_hermitian or not op.is_unitary):
                    raise ValueError("swap-test ops must be unitary and Hermitian")
        elif self.interleaved_ops:
            raise ValueError(f"{fam.value} takes no interleaved ops")

        if fam is CircuitFamily.CONTROLLED_VO:
            if self.t != 2:
                raise ValueError("controlled-V_O circuit uses exactly two copies")
            if self.v_op is None or not is_unitary(self.v_op):
                raise ValueError("v_op must be a unitary matrix")
        elif self.v_op is not None:
            raise ValueError(f"{fam.value} takes no v_op")

        if fam is CircuitFamily.SPECTRAL_O:
            if self.t != 2:
                raise ValueError("spectral circuit uses exactly two copies")
            if self.spectral_v is None or not is_unitary(self.spectral_v):
                raise ValueError("spectral_v must be a unitary matrix")
            lam = np.asarray(self.spectral_lambda, dtype=np.float64)
            if lam.shape != (self.states[0].dim,):
                raise ValueError("spectral_lambda must list one real eigenvalue per basis state")
            self.spectral_lambda = lam
        elif self.spectral_v is not None or self.spectral_lambda is not None:
            raise ValueError(f"{fam.value} takes no spectral data")

    @property
    def n_qubits(self) -> int:
        return self.states[0].n_qubits

    @property
    def dim(self) -> int:
        return self.states[0].dim

    def power_matrix(self) -> ComplexMatrix:
        """rho^t (HybridMoment)."""
        if "power" not in self._cache:
            self._cache["power"] = matrix_power(self.states[0].mat, self.t)
        return self._cache["power"]

    def sigma_matrix(self) -> ComplexMatrix:
        """sigma = rho_1 O_1 rho_2 ... O_{t-1} rho_t (HybridSigma)."""
        if "sigma" not in self._cache:
            n = self.n_qubits
            acc = self.states[0].mat
            for op, state in zip(self.interleaved_ops, self.states[1:]):
                if op is not None:
                    acc = acc @ op.embedded(n)
                acc = acc @ state.mat
            self._cache["sigma"] = acc
        return self._cache["sigma"]

    def edge_mixture(self) -> ComplexMatrix:
        """(rho_1 + rho_t)/2 — the marginal seen by the measured register."""
        if "mix" not in self._cache:
            self._cache["mix"] = 0.5 * (self.states[0].mat + self.states[-1].mat)
        return self._cache["mix"]

    def vo_cross_matrix(self) -> ComplexMatrix:
        """rho V_O rho (ControlledVO)."""
        if "vo_cross" not in self._cache:
            rho = self.states[0].mat
            self._cache["vo_cross"] = rho @ self.v_op @ rho
        return self._cache["vo_cross"]


def plain_rm(rho: DensityMatrix) -> CircuitSpec:
    return CircuitSpec(CircuitFamily.PLAIN_RM, 1, (rho,))


def hybrid_moment(rho: DensityMatrix, t: int) -> CircuitSpec:
    return CircuitSpec(CircuitFamily.HYBRID_MOMENT, t, (rho,) * t)


def hybrid_sigma(states: "list[DensityMatrix]", ops: "list[Observable | None]") -> CircuitSpec:
    return CircuitSpec(CircuitFamily.HYBRID_SIGMA, len(states), tuple(states), tuple(ops))


def swap_test(
    states: "list[DensityMatrix]",
    ops: "list[Observable | None] | None" = None,
    basis: ControlBasis = ControlBasis.X,
) -> CircuitSpec:
    ops_t = () if ops is None else tuple(ops)
    return CircuitSpec(
        CircuitFamily.SWAP_TEST, len(states), tuple(states), ops_t, control_basis=basis
    )


def controlled_vo(rho: DensityMatrix, v_op: ComplexMatrix) -> CircuitSpec:
    return CircuitSpec(CircuitFamily.CONTROLLED_VO, 2, (rho, rho), v_op=np.asarray(v_op, dtype=np.complex128))


def spectral_o(rho: DensityMatrix, v: ComplexMatrix, lam: np.ndarray) -> CircuitSpec:
    return CircuitSpec(
        CircuitFamily.SPECTRAL_O,
        2,
        (rho, rho),
        spectral_v=np.asarray(v, dtype=np.complex128),
        spectral_lambda=np.asarray(lam, dtype=np.float64),
    )


@dataclass
class OutcomeDistribution:
    """Joint distribution over (b_c, b1, b), stored as a flat probability array.

    The flat index is control-major then b1-major then b:
    ``idx = (b_c * D1 + b1) * D + b`` with absent components contributing 1.
    """

    probs: np.ndarray
    n_qubits: int
    has_control: bool
    has_b1: bool
    has_b: bool

    def __post_init__(self) -> None:
        self.probs = np.asarray(self.probs, dtype=np.float64)
        expected = (2 if self.has_control else 1)
        if self.has_b1:
            expected *= 1 << self.n_qubits
        if self.has_b:
            expected *= 1 << self.n_qubits
        if self.probs.shape != (expected,):
            raise ValueError(f"probability vector has length {self.probs.size}, expected {expected}")

    def check(self) -> "OutcomeDistribution":
        total = float(np.sum(self.probs, dtype=np.longdouble))
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        lo = float(self.probs.min())
        if lo < -1e-12:
            raise ValueError(f"negative probability {lo:.3g}")
        return self

    def outcome_at(self, idx: int) -> tuple["int | None", "BitString | None", "BitString | None"]:
        d = 1 << self.n_qubits
        rest = idx
        b = None
        if self.has_b:
            b = BitString(rest % d, self.n_qubits)
            rest //= d
        b1 = None
        if self.has_b1:
            b1 = BitString(rest % d, self.n_qubits)
            rest //= d
        b_c = rest if self.has_control else None
        return b_c, b1, b

    @property
    def support(self) -> list[tuple["int | None", "BitString | None", "BitString | None"]]:
        return [self.outcome_at(i) for i in range(self.probs.size)]


def _control_joint(half_diag: np.ndarray, cross: np.ndarray, basis: ControlBasis, n: int) -> OutcomeDistribution:
    signed = 0.5 * (cross.real if basis is ControlBasis.X else cross.imag)
    probs = np.concatenate([half_diag + signed, half_diag - signed])
    return OutcomeDistribution(probs, n, True, False, True).check()


def plain_rm_distribution(rho: DensityMatrix, u: SampledUnitary) -> OutcomeDistribution:
    """Pr(b) = <b|U rho U^+|b> — ordinary randomized measurement."""
    p = rotated_diagonal(u, rho.mat).real
    return OutcomeDistribution(p, rho.n_qubits, False, False, True).check()


def hybrid_moment_distribution(rho: DensityMatrix, t: int, u: SampledUnitary) -> OutcomeDistribution:
    """Pr(b_c, b) = [p(b) + (-1)^{b_c} q(b)]/2 with q from rho^t."""
    p = rotated_diagonal(u, rho.mat).real
    q = rotated_diagonal(u, matrix_power(rho.mat, t)).real if t > 1 else p
    return _control_joint(0.5 * p, q.astype(np.complex128), ControlBasis.X, rho.n_qubits)


def hybrid_sigma_distribution(
    spec: CircuitSpec, u: SampledUnitary, basis: ControlBasis
) -> OutcomeDistribution:
    """Joint for the general product circuit; cross term from sigma = rho_1 O_1 ... rho_t."""
    if spec.family is not CircuitFamily.HYBRID_SIGMA:
        raise ValueError(f"expected a HybridSigma spec, got {spec.family.value}")
    half_diag = 0.5 * rotated_diagonal(u, spec.edge_mixture()).real
    cross = rotated_diagonal(u, spec.sigma_matrix())
    return _control_joint(half_diag, cross, basis, spec.n_qubits)


def controlled_vo_distribution(
    rho: DensityMatrix, v_op: ComplexMatrix, u: SampledUnitary
) -> OutcomeDistribution:
    """X-basis joint with cross term <b|U rho V_O rho U^+|b>."""
    spec = controlled_vo(rho, v_op)
    half_diag = 0.5 * rotated_diagonal(u, rho.mat).real
    cross = rotated_diagonal(u, spec.vo_cross_matrix())
    return _control_joint(half_diag, cross, ControlBasis.X, rho.n_qubits)


def swap_test_distribution(
    states: "list[DensityMatrix]",
    ops: "list[Observable | None] | None",
    basis: ControlBasis,
) -> OutcomeDistribution:
    """Two-outcome control distribution with E[(-1)^{b_c}] = Re/Im F_m."""
    spec = swap_test(list(states), ops, basis)
    f_m = exact_general_function(list(spec.states), list(spec.interleaved_ops) or [None] * spec.t)
    signed = f_m.real if basis is ControlBasis.X else f_m.imag
    probs = np.array([0.5 * (1.0 + signed), 0.5 * (1.0 - signed)])
    return OutcomeDistribution(probs, spec.n_qubits, True, False, False).check()


def spectral_o_distribution(
    rho: DensityMatrix, v: ComplexMatrix, u: SampledUnitary
) -> OutcomeDistribution:
    """Two measured copies: Pr(b_c,b1,b2) = [a(b1)p(b2) +/- |(V^+ rho U^+)[b1,b2]|^2]/2."""
    if not is_unitary(v):
        raise ValueError("spectral eigenbasis V must be unitary")
    vmat = np.asarray(v, dtype=np.complex128)
    a = np.einsum("ij,ij->i", vmat.conj().T @ rho.mat, vmat.T).real
    p = rotated_diagonal(u, rho.mat).real
    g = vmat.conj().T @ rho.mat @ u.matrix.conj().T
    w = np.abs(g) ** 2
    half = 0.5 * np.outer(a, p)
    probs = np.concatenate([(half + 0.5 * w).ravel(), (half - 0.5 * w).ravel()])
    return OutcomeDistribution(probs, rho.n_qubits, True, True, True).check()


def distribution_for(
    spec: CircuitSpec, u: "SampledUnitary | None", basis: "ControlBasis | None" = None
) -> OutcomeDistribution:
    """Dispatch to the family's distribution function."""
    fam = spec.family
    if fam is CircuitFamily.PLAIN_RM:
        return plain_rm_distribution(spec.states[0], u)
    if fam is CircuitFamily.HYBRID_MOMENT:
        return hybrid_moment_distribution(spec.states[0], spec.t, u)
    if fam is CircuitFamily.HYBRID_SIGMA:
        return hybrid_sigma_distribution(spec, u, basis or spec.control_basis)
    if fam is CircuitFamily.CONTROLLED_VO:
        return controlled_vo_distribution(spec.states[0], spec.v_op, u)
    if fam is CircuitFamily.SPECTRAL_O:
        return spectral_o_distribution(spec.states[0], spec.spectral_v, u)
    if fam is CircuitFamily.SWAP_TEST:
        return swap_test_distribution(
            list(spec.states), list(spec.interleaved_ops) or None, basis or spec.control_basis
        )
    raise ValueError(f"unknown family {fam}")


@dataclass(frozen=True)
class SnapshotRecord:
    """One measured shot: circuit identity, setting unitary, and outcomes."""

    family: CircuitFamily
    t: int
    ensemble: "str | None"
    descriptor: str
    c: "ControlBasis | None"
    b_c: "int | None"
    b1: "BitString | None"
    b: "BitString | None"
    i: int
    j: int
    seed: int

    def to_line(self) -> str:
        payload = {
            "family": self.family.value,
            "t": self.t,
            "ensemble": self.ensemble,
            "descriptor": self.descriptor,
            "c": self.c.value if self.c is not None else None,
            "b_c": self.b_c,
            "b1": str(self.b1) if self.b1 is not None else None,
            "b": str(self.b) if self.b is not None else None,
            "i": self.i,
            "j": self.j,
            "seed": self.seed,
        }
        return json.dumps(payload, separators=(",", ":"))

    @classmethod
    def from_line(cls, line: str) -> "SnapshotRecord":
        payload = json.loads(line)
        required = {"family", "t", "ensemble", "descriptor", "c", "b_c", "b1", "b", "i", "j", "seed"}
        missing = required - payload.keys()
        if missing:
            raise ValueError(f"missing fields {sorted(missing)}")
        return cls(
            family=CircuitFamily(payload["family"]),
            t=int(payload["t"]),
            ensemble=payload["ensemble"],
            descriptor=payload["descriptor"],
            c=ControlBasis(payload["c"]) if payload["c"] is not None else None,
            b_c=int(payload["b_c"]) if payload["b_c"] is not None else None,
            b1=BitString.from_string(payload["b1"]) if payload["b1"] is not None else None,
            b=BitString.from_string(payload["b"]) if payload["b"] is not None else None,
            i=int(payload["i"]),
            j=int(payload["j"]),
            seed=int(payload["seed"]),
        )


def write_records(path: str, records: "list[SnapshotRecord]") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_line())
            fh.write("\n")


def read_records(path: str) -> "list[SnapshotRecord]":
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(SnapshotRecord.from_line(line))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}: malformed record on line {lineno}: {exc}") from None
    return out


def _check_size_caps(spec: CircuitSpec) -> None:
    n = spec.n_qubits
    if spec.family in (CircuitFamily.PLAIN_RM, CircuitFamily.HYBRID_MOMENT, CircuitFamily.SWAP_TEST):
        cap = MAX_SINGLE_REGISTER_QUBITS
    else:
        cap = MAX_PRODUCT_REGISTER_QUBITS
    if n > cap:
        raise ValueError(f"{spec.family.value} sampling capped at {cap} qubits, got {n}")


def _inverse_cdf(probs: np.ndarray) -> np.ndarray:
    return np.cumsum(probs.astype(np.longdouble))


def _draw(cum: np.ndarray, x: float) -> int:
    idx = int(np.searchsorted(cum, x, side="right"))
    return min(idx, cum.size - 1)


def sample_dataset(
    spec: CircuitSpec,
    kind: "EnsembleKind | None",
    m_settings: int,
    k_shots: int,
    seed: int,
) -> "list[SnapshotRecord]":
    """Sample M settings x K shots; deterministic per (seed, i, j) substream.

    For unitary-bearing families one unitary is drawn per setting i (keyed
    independently of the circuit family so same-seed datasets align); each shot
    consumes exactly one uniform from its (i, j) outcome substream. HybridSigma
    additionally draws one fresh control basis per shot.
    """
    if m_settings < 1 or k_shots < 1:
        raise ValueError("need at least one setting and one shot")
    _check_size_caps(spec)
    fam = spec.family
    fam_code = _FAMILY_CODES[fam]
    needs_unitary = fam is not CircuitFamily.SWAP_TEST
    if needs_unitary:
        if kind is None:
            raise ValueError(f"{fam.value} requires a measurement ensemble")
        if kind.n_qubits != spec.n_qubits:
            raise ValueError("ensemble and circuit qubit counts differ")
    ensemble_name = kind.tag.value if (kind is not None and needs_unitary) else None

    records: list[SnapshotRecord] = []
    swap_cum = None
    if fam is CircuitFamily.SWAP_TEST:
        swap_cum = _inverse_cdf(distribution_for(spec, None).probs)

    for i in range(m_settings):
        if needs_unitary:
            u = sample_unitary(kind, substream(seed, TAG_UNITARY, i))
            descriptor = u.descriptor
        else:
            u, descriptor = None, ""

        if fam is CircuitFamily.HYBRID_SIGMA:
            dists = {
                ControlBasis.X: hybrid_sigma_distribution(spec, u, ControlBasis.X),
                ControlBasis.Y: hybrid_sigma_distribution(spec, u, ControlBasis.Y),
            }
            cums = {c: _inverse_cdf(dist.probs) for c, dist in dists.items()}
            dist = dists[ControlBasis.X]  # layout identical for both bases
        elif fam is CircuitFamily.SWAP_TEST:
            dist, cum = None, swap_cum
        else:
            dist = distribution_for(spec, u)
            cum = _inverse_cdf(dist.probs)

        for j in range(k_shots):
            if fam is CircuitFamily.HYBRID_SIGMA:
                basis_gen = substream(seed, TAG_CONTROL_BASIS, i, j)
                c = ControlBasis.X if int(basis_gen.integers(2)) == 0 else ControlBasis.Y
                cum = cums[c]
            elif fam is CircuitFamily.PLAIN_RM:
                c = None
            else:
                c = spec.control_basis if fam is CircuitFamily.SWAP_TEST else ControlBasis.X

            gen = substream(seed, TAG_OUTCOME, i, j, extra=fam_code)
            idx = _draw(cum, float(gen.random()))
            if fam is CircuitFamily.SWAP_TEST:
                b_c, b1, b = idx, None, None
            else:
                b_c, b1, b = dist.outcome_at(idx)
            records.append(
                SnapshotRecord(
                    family=fam,
                    t=spec.t,
                    ensemble=ensemble_name,
                    descriptor=descriptor,
                    c=c,
                    b_c=b_c,
                    b1=b1,
                    b=b,
                    i=i,
                    j=j,
                    seed=seed,
                )
            )
    return records


def record_unitary(record: SnapshotRecord, kind: EnsembleKind) -> SampledUnitary:
    """Rebuild the setting unitary of a record (validates the descriptor)."""
    if record.ensemble is not None and record.ensemble != kind.tag.value:
        raise ValueError(f"record ensemble {record.ensemble} does not match {kind.tag.value}")
    return unitary_from_descriptor(kind, record.descriptor)
