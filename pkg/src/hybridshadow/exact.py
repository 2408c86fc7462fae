"""Exact enumeration oracles for unbiasedness checks.

Two independent routes are provided:

* formula route — closed-form kernel/channel expectations built from dense
  kernel matrices and rotated diagonals (`kernel_matrix`, `channel_roundtrip`,
  `expected_kernel_pair`), which never touch the sampling or estimator code;
* estimator route — full enumeration of measurement records fed through the
  *actual* snapshot builders and estimators (`enumerate_records`,
  `expected_snapshot_matrix`, `expected_estimate`), probability-weighted over
  every unitary in the ensemble and every outcome.

Both must land on the same target functional; tests compare them against each
other and against the direct matrix formulas.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import replace

import numpy as np

from .circuits import (
    CircuitFamily,
    CircuitSpec,
    ControlBasis,
    SnapshotRecord,
    distribution_for,
)
from .ensembles import (
    EnsembleKind,
    EnsembleTag,
    enumerate_ensemble,
    inverse_channel,
    rotated_diagonal,
)
from .qcore import ComplexMatrix

__all__ = [
    "kernel_matrix",
    "channel_roundtrip",
    "expected_kernel_pair",
    "enumerate_records",
    "expected_snapshot_matrix",
    "expected_estimate",
    "relabel_setting",
]


def kernel_matrix(kind: EnsembleKind) -> np.ndarray:
    """Dense pair kernel X(b, b') as a (d, d) matrix.

    Global Clifford: (d+1) I - J.  Local Clifford: kron^n [[2, -1], [-1, 2]].
    """
    d = 2**kind.n_qubits
    if kind.tag is EnsembleTag.GLOBAL_CLIFFORD:
        return (d + 1.0) * np.eye(d) - np.ones((d, d))
    cell = np.array([[2.0, -1.0], [-1.0, 2.0]])
    out = np.array([[1.0]])
    for _ in range(kind.n_qubits):
        out = np.kron(out, cell)
    return out


def channel_roundtrip(kind: EnsembleKind, mat: ComplexMatrix) -> np.ndarray:
    """E_U sum_b <b|U A U^+|b> M^{-1}(U^+|b><b|U); equals A for both ensembles."""
    mat = np.asarray(mat, dtype=np.complex128)
    acc = np.zeros_like(mat)
    for su, w_u in enumerate_ensemble(kind):
        coef = rotated_diagonal(su, mat)
        for idx, c in enumerate(coef):
            if c == 0.0:
                continue
            acc += w_u * c * inverse_channel(kind, su, _bitstring(kind.n_qubits, idx))
    return acc


def expected_kernel_pair(kind: EnsembleKind, left: ComplexMatrix, right: ComplexMatrix) -> float:
    """E_U [ l^T X r ] with l, r the rotated diagonals of the two matrices.

    This is the exact expectation of a within-setting kernel pair sum whose
    left/right shot coefficient vectors are the diagonals of ``left`` and
    ``right`` in the measurement basis; it equals tr(left @ right).
    """
    x_mat = kernel_matrix(kind)
    total = 0.0
    for su, w_u in enumerate_ensemble(kind):
        lvec = rotated_diagonal(su, np.asarray(left, dtype=np.complex128)).real
        rvec = rotated_diagonal(su, np.asarray(right, dtype=np.complex128)).real
        total += w_u * float(lvec @ x_mat @ rvec)
    return total


def _bitstring(n_qubits: int, value: int):
    from .qcore import BitString

    return BitString(value, n_qubits)


def _outcome_entries(spec: CircuitSpec, su, kind: "EnsembleKind | None"):
    """All (prob, c, b_c, b1, b) tuples for one setting unitary (coin included)."""
    n = spec.n_qubits
    entries = []
    if spec.family is CircuitFamily.HYBRID_SIGMA:
        bases = [(ControlBasis.X, 0.5), (ControlBasis.Y, 0.5)]
    elif spec.family is CircuitFamily.SWAP_TEST:
        bases = [(spec.control_basis, 1.0)]
    elif spec.family is CircuitFamily.PLAIN_RM:
        bases = [(None, 1.0)]
    else:
        bases = [(ControlBasis.X, 1.0)]
    for c, coin in bases:
        dist = distribution_for(spec, su, c if c is not None else None)
        for idx in range(dist.probs.size):
            prob = coin * float(dist.probs[idx])
            if prob == 0.0:
                continue
            b_c, b1, b = dist.outcome_at(idx)
            entries.append((prob, c, b_c, b1, b))
    return entries


def enumerate_records(
    spec: CircuitSpec, kind: "EnsembleKind | None"
) -> "list[tuple[float, SnapshotRecord]]":
    """Probability-weighted records for every (unitary, outcome) pair.

    Records carry i = j = 0 and seed = 0; callers relabel (i, j) as needed.
    """
    if spec.family is CircuitFamily.SWAP_TEST:
        settings = [(None, 1.0)]
        ensemble_name = None
    else:
        if kind is None:
            raise ValueError("unitary circuit families need an ensemble")
        settings = enumerate_ensemble(kind)
        ensemble_name = kind.tag.value
    out = []
    for su, w_u in settings:
        descriptor = su.descriptor if su is not None else ""
        for prob, c, b_c, b1, b in _outcome_entries(spec, su, kind):
            rec = SnapshotRecord(
                family=spec.family,
                t=spec.t,
                ensemble=ensemble_name,
                descriptor=descriptor,
                c=c,
                b_c=b_c,
                b1=b1,
                b=b,
                i=0,
                j=0,
                seed=0,
            )
            out.append((w_u * prob, rec))
    return out


def expected_snapshot_matrix(spec: CircuitSpec, kind: EnsembleKind, snapshot_fn) -> np.ndarray:
    """E[weight * inverse_channel] through the real snapshot builder."""
    d = 2**spec.n_qubits
    acc = np.zeros((d, d), dtype=np.complex128)
    for prob, rec in enumerate_records(spec, kind):
        snap = snapshot_fn(rec, kind)
        acc += prob * snap.weight * snap.base
    return acc


def _setting_tuples(spec: CircuitSpec, kind, k_shots: int, setting_index: int):
    """All (prob, [records]) groups for one setting with k_shots iid shots."""
    if spec.family is CircuitFamily.SWAP_TEST:
        settings = [(None, 1.0)]
        ensemble_name = None
    else:
        settings = enumerate_ensemble(kind)
        ensemble_name = kind.tag.value
    groups = []
    for su, w_u in settings:
        descriptor = su.descriptor if su is not None else ""
        entries = _outcome_entries(spec, su, kind)
        for combo in itertools.product(entries, repeat=k_shots):
            prob = w_u * math.prod(e[0] for e in combo)
            recs = [
                SnapshotRecord(
                    family=spec.family,
                    t=spec.t,
                    ensemble=ensemble_name,
                    descriptor=descriptor,
                    c=e[1],
                    b_c=e[2],
                    b1=e[3],
                    b=e[4],
                    i=setting_index,
                    j=j,
                    seed=0,
                )
                for j, e in enumerate(combo)
            ]
            groups.append((prob, recs))
    return groups


def expected_estimate(
    spec: CircuitSpec,
    kind: "EnsembleKind | None",
    fn,
    n_settings: int = 1,
    k_shots: int = 2,
) -> complex:
    """Exact expectation of ``fn(records)`` over enumerated datasets.

    The dataset layout is ``n_settings`` independent settings with ``k_shots``
    iid shots each; ``fn`` receives the full record list and returns a number.
    Cost grows as (|ensemble| * n_outcomes^k_shots)^n_settings — keep tiny.
    """
    per_setting = [_setting_tuples(spec, kind, k_shots, i) for i in range(n_settings)]
    total = 0.0 + 0.0j
    for combo in itertools.product(*per_setting):
        prob = math.prod(g[0] for g in combo)
        if prob == 0.0:
            continue
        recs = [r for g in combo for r in g[1]]
        total += prob * complex(fn(recs))
    return total


def relabel_setting(records: "list[SnapshotRecord]", i: int) -> "list[SnapshotRecord]":
    """Copy records onto setting index ``i`` (shot indices kept)."""
    return [replace(r, i=i) for r in records]
