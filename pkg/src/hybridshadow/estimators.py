"""Classical postprocessing: snapshots and the HS / HR / OS / swap estimators.

Snapshot conventions
--------------------
A snapshot is ``weight * inverse_channel(U, b)``. The weight carries all
control-side information:

* plain state snapshot:      weight = 1                      (E -> rho)
* power snapshot (t copies): weight = (-1)^{b_c}             (E -> rho^t)
* product snapshot:          weight = (-1)^{b_c} * 2         (c = X)
                             weight = (-1)^{b_c} * 2i        (c = Y)
  so that averaging over the fair coin on c gives E -> sigma exactly.

Estimator families
------------------
* HS ("hybrid shadow"): dense snapshot matrices combined across settings
  (U-statistics over distinct settings; cross-dataset products use plain
  products of per-dataset means).
* HR ("hybrid randomized"): kernel sums over outcome pairs within a setting;
  never materializes matrices.
* OS ("original shadow"): U-statistics of plain snapshots only.
* Swap test: sample mean of the control sign.

Standard errors are nonparametric bootstrap over settings (200 resamples,
seeded from the dataset seed so reports are deterministic); datasets with more
than 2000 settings fall back to a disjoint-block estimate to bound cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .circuits import CircuitFamily, ControlBasis, SnapshotRecord
from .ensembles import EnsembleKind, EnsembleTag, inverse_channel, unitary_from_descriptor
from .kernels import kernel_value, pair_sums, cross_sums
from .qcore import ComplexMatrix, Observable
from .streams import TAG_BOOTSTRAP, substream

__all__ = [
    "SnapshotTarget",
    "ShadowSnapshot",
    "ShadowSet",
    "EstimateReport",
    "snapshot_rho",
    "snapshot_rho_pow_t",
    "snapshot_sigma",
    "build_shadow_set",
    "estimate_pm_os",
    "estimate_om_os",
    "estimate_ot_hs",
    "estimate_p3_hs",
    "estimate_p4_hs",
    "estimate_o3_hs",
    "estimate_o4_hs",
    "estimate_p2_hr",
    "estimate_p3_hr",
    "estimate_p4_hr",
    "estimate_o3_hr",
    "estimate_o4_hr",
    "estimate_o3_spectral",
    "estimate_o4_spectral",
    "estimate_fm_patched",
    "estimate_swap",
    "estimate_fm_swap",
    "make_vo",
    "spectral_decomposition",
    "kernel_value",
]

N_BOOTSTRAP = 200
BLOCK_FALLBACK_SETTINGS = 2000


class SnapshotTarget(Enum):
    RHO = "rho"
    RHO_POW_T = "rho_pow_t"
    SIGMA = "sigma"


class ShadowSnapshot:
    """One measured snapshot: ``weight * inverse_channel(U, b)``, lazily built."""

    __slots__ = ("target", "t", "weight", "setting_index", "kind", "descriptor", "b", "_base")

    def __init__(self, target, t, weight, setting_index, kind, descriptor, b):
        self.target = target
        self.t = t
        self.weight = complex(weight)
        self.setting_index = setting_index
        self.kind = kind
        self.descriptor = descriptor
        self.b = b
        self._base = None

    @property
    def base(self) -> ComplexMatrix:
        """Unit-trace inverse-channel matrix (materialized once)."""
        if self._base is None:
            u = unitary_from_descriptor(self.kind, self.descriptor)
            self._base = inverse_channel(self.kind, u, self.b)
        return self._base

    def matrix(self) -> ComplexMatrix:
        return self.weight * self.base


def _require(record: SnapshotRecord, what: str, value) -> None:
    if value is None:
        raise ValueError(f"record from {record.family.value} is missing {what}")


def snapshot_rho(record: SnapshotRecord, kind: EnsembleKind) -> ShadowSnapshot:
    """Plain state snapshot (weight 1); control information, if any, is dropped."""
    _require(record, "outcome b", record.b)
    return ShadowSnapshot(
        SnapshotTarget.RHO, 1, 1.0, record.i, kind, record.descriptor, record.b
    )


def snapshot_rho_pow_t(record: SnapshotRecord, kind: EnsembleKind) -> ShadowSnapshot:
    """Power snapshot with weight (-1)^{b_c}; expectation is rho^t."""
    if record.family is not CircuitFamily.HYBRID_MOMENT:
        raise ValueError(f"power snapshots need HybridMoment records, got {record.family.value}")
    _require(record, "control outcome b_c", record.b_c)
    _require(record, "outcome b", record.b)
    weight = 1.0 if record.b_c == 0 else -1.0
    return ShadowSnapshot(
        SnapshotTarget.RHO_POW_T, record.t, weight, record.i, kind, record.descriptor, record.b
    )


def snapshot_sigma(record: SnapshotRecord, kind: EnsembleKind) -> ShadowSnapshot:
    """Product snapshot; weight (-1)^{b_c} * (2 for X, 2i for Y), E -> sigma."""
    if record.family is not CircuitFamily.HYBRID_SIGMA:
        raise ValueError(f"sigma snapshots need HybridSigma records, got {record.family.value}")
    _require(record, "control basis c", record.c)
    _require(record, "control outcome b_c", record.b_c)
    _require(record, "outcome b", record.b)
    sign = 1.0 if record.b_c == 0 else -1.0
    phase = 2.0 if record.c is ControlBasis.X else 2.0j
    return ShadowSnapshot(
        SnapshotTarget.SIGMA, record.t, sign * phase, record.i, kind, record.descriptor, record.b
    )


_SNAPSHOT_BUILDERS = {
    SnapshotTarget.RHO: snapshot_rho,
    SnapshotTarget.RHO_POW_T: snapshot_rho_pow_t,
    SnapshotTarget.SIGMA: snapshot_sigma,
}


@dataclass
class ShadowSet:
    """Snapshots grouped by setting; settings are independent experiments."""

    kind: EnsembleKind
    target: SnapshotTarget
    t: int
    snapshots: "list[ShadowSnapshot]"
    k_per_setting: int
    seed: "int | None" = None

    def __post_init__(self) -> None:
        groups: dict[int, list[ShadowSnapshot]] = {}
        for snap in self.snapshots:
            groups.setdefault(snap.setting_index, []).append(snap)
        for idx, group in groups.items():
            if len(group) != self.k_per_setting:
                raise ValueError(f"setting {idx} has {len(group)} shots, expected {self.k_per_setting}")
            if len({s.descriptor for s in group}) != 1:
                raise ValueError(f"setting {idx} mixes unitary descriptors")
        self._groups = [groups[i] for i in sorted(groups)]

    @property
    def n_settings(self) -> int:
        return len(self._groups)

    def setting_groups(self) -> "list[list[ShadowSnapshot]]":
        return self._groups

    def setting_means(self, weighted: bool = True) -> np.ndarray:
        """(M, d, d) stack of per-setting snapshot means (weighted or bare)."""
        mats = []
        for group in self._groups:
            if weighted:
                acc = sum(s.matrix() for s in group)
            else:
                acc = sum(s.base for s in group)
            mats.append(np.asarray(acc) / len(group))
        return np.stack(mats)


def build_shadow_set(
    records: "list[SnapshotRecord]", kind: EnsembleKind, target: SnapshotTarget
) -> ShadowSet:
    """Convert a uniform record list into a ShadowSet of the requested target."""
    if not records:
        raise ValueError("empty record list")
    recs = sorted(records, key=lambda r: (r.i, r.j))
    fams = {r.family for r in recs}
    if len(fams) > 1:
        raise ValueError(f"records mix circuit families {sorted(f.value for f in fams)}")
    if len({r.t for r in recs}) > 1:
        raise ValueError("records mix copy counts t")
    counts: dict[int, int] = {}
    for r in recs:
        counts[r.i] = counts.get(r.i, 0) + 1
    k = next(iter(counts.values()))
    if any(c != k for c in counts.values()):
        raise ValueError("settings have unequal shot counts")
    builder = _SNAPSHOT_BUILDERS[target]
    snaps = [builder(r, kind) for r in recs]
    return ShadowSet(kind, target, recs[0].t, snaps, k, seed=recs[0].seed)


@dataclass
class EstimateReport:
    """Estimator output: value, sampling metadata, and a bootstrap std error."""

    value: "float | complex"
    n_settings: int
    k_shots: int
    std_error: float
    protocol: str
    exact: "float | None" = None
    per_setting: "np.ndarray | None" = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if not (self.std_error >= 0.0):
            raise ValueError(f"std_error must be nonnegative, got {self.std_error}")


def _bootstrap_indices(m: int, seed: "int | None", n_boot: int = N_BOOTSTRAP) -> np.ndarray:
    gen = substream(seed if seed is not None else 0, TAG_BOOTSTRAP)
    return gen.integers(0, m, size=(n_boot, m))


def _se_of_mean(values: np.ndarray, seed: "int | None") -> float:
    """Bootstrap std error of a per-setting mean (deterministic given seed)."""
    m = values.size
    if m < 2:
        return 0.0
    idx = _bootstrap_indices(m, seed)
    boots = values[idx].mean(axis=1)
    return float(np.std(boots, ddof=1))


def _counts_matrix(idx: np.ndarray, m: int) -> np.ndarray:
    return np.stack([np.bincount(row, minlength=m) for row in idx]).astype(np.float64)


def _se_of_ustat(value_fn, m: int, seed: "int | None") -> float:
    """Bootstrap (or block fallback) std error for a U-statistic over settings.

    ``value_fn(weights)`` evaluates the statistic with nonnegative integer
    setting multiplicities ``weights`` (length M, summing to M for bootstrap
    resamples, or an indicator for block subsets).
    """
    if m < 3:
        return 0.0
    if m > BLOCK_FALLBACK_SETTINGS:
        n_blocks = 50
        bounds = np.linspace(0, m, n_blocks + 1).astype(int)
        vals = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            w = np.zeros(m)
            w[lo:hi] = 1.0
            vals.append(value_fn(w))
        return float(np.std(vals, ddof=1) / math.sqrt(n_blocks))
    idx = _bootstrap_indices(m, seed)
    counts = _counts_matrix(idx, m)
    vals = np.array([value_fn(c) for c in counts])
    return float(np.std(vals, ddof=1))


def _tr_prod(a: np.ndarray, b: np.ndarray) -> complex:
    return complex(np.einsum("ij,ji->", a, b))


# ---------------------------------------------------------------------------
# OS estimators (plain snapshots, U-statistics over distinct settings)
# ---------------------------------------------------------------------------


def _os_stacks(shadow: ShadowSet, max_power: int) -> "list[np.ndarray]":
    means = shadow.setting_means(weighted=True)
    stacks = [means]
    for _ in range(max_power - 1):
        stacks.append(np.matmul(stacks[-1], means))
    return stacks  # stacks[p-1][i] = (per-setting mean)^p


def _obs_matrix(obs: "Observable | None", n_qubits: int) -> "np.ndarray | None":
    return None if obs is None else obs.embedded(n_qubits)


def _pairs_value_fn(stack_a, stack_b, o_mat):
    """Closure: weights -> sum_{i != j} w_i w_j tr(O a_i b_j) / (M(M-1)).

    Resample-independent contractions (the O-folded left stack, the
    transposed right stack, and the aligned-index diagonal) are computed once
    so bootstrap resampling costs O(M d^2) per evaluation.
    """
    m = stack_a.shape[0]
    left = stack_a if o_mat is None else np.matmul(o_mat, stack_a)
    flat_l = left.reshape(m, -1)
    flat_rt = stack_b.transpose(0, 2, 1).reshape(m, -1)
    diag = np.einsum("mx,mx->m", flat_l, flat_rt)

    def value(w: np.ndarray) -> float:
        eff = w.sum()
        total = np.dot(w @ flat_l, w @ flat_rt)
        return float((total - complex(w @ diag)).real / (eff * (eff - 1.0)))

    return value


def _triples_value_fn(stacks, o_mat):
    """Closure: weights -> ordered-distinct-triple mean of tr(O a_i a_j a_k)."""
    s1, s2, s3 = stacks
    m, d, _ = s1.shape
    flat1 = s1.reshape(m, -1)
    flat1t = s1.transpose(0, 2, 1).reshape(m, -1)
    flat2 = s2.reshape(m, -1)
    if o_mat is None:
        tr3 = np.einsum("mii->m", s3)

        def value(w: np.ndarray) -> float:
            eff = w.sum()
            norm = eff * (eff - 1.0) * (eff - 2.0)
            t1 = (w @ flat1).reshape(d, d)
            val = (
                complex(np.trace(t1 @ t1 @ t1))
                - 3.0 * complex(np.dot(w @ flat2, w @ flat1t))
                + 2.0 * complex(w @ tr3)
            )
            return float(val.real / norm)

        return value

    flat_o2 = np.matmul(o_mat, s2).reshape(m, -1)
    tr_o3 = np.einsum("ij,mji->m", o_mat, s3)

    def value(w: np.ndarray) -> float:
        eff = w.sum()
        norm = eff * (eff - 1.0) * (eff - 2.0)
        t1 = (w @ flat1).reshape(d, d)
        t2 = (w @ flat2).reshape(d, d)
        ot1 = o_mat @ t1
        # collision terms: i=j, j=k, i=k (middle), and the doubly counted i=j=k
        sandwich = np.matmul(np.matmul(s1, t1), s1)
        middle = complex(w @ np.einsum("ij,mji->m", o_mat, sandwich))
        val = (
            _tr_prod(ot1 @ t1, t1)
            - complex(np.dot(w @ flat_o2, w @ flat1t))
            - _tr_prod(ot1, t2)
            - middle
            + 2.0 * complex(w @ tr_o3)
        )
        return float(val.real / norm)

    return value


def _disjoint_blocks_value(shadow: ShadowSet, o_mat, m_tuple: int) -> "tuple[float, np.ndarray]":
    means = shadow.setting_means(weighted=True)
    n_blocks = means.shape[0] // m_tuple
    vals = []
    for g in range(n_blocks):
        prod = means[g * m_tuple]
        for k in range(1, m_tuple):
            prod = prod @ means[g * m_tuple + k]
        if o_mat is not None:
            prod = o_mat @ prod
        vals.append(float(np.trace(prod).real))
    return float(math.fsum(vals) / n_blocks), np.array(vals)


def estimate_pm_os(shadow: ShadowSet, m: int) -> EstimateReport:
    """Moment tr(rho^m) from plain snapshots (full U-statistic for m <= 3)."""
    return _estimate_moment_os(shadow, None, m, "OS")


def estimate_om_os(shadow: ShadowSet, obs: Observable, m: int) -> EstimateReport:
    """Observable moment tr(O rho^m) from plain snapshots."""
    if obs is None:
        raise ValueError("pass m-th moment estimation without O to estimate_pm_os")
    return _estimate_moment_os(shadow, obs, m, "OS")


def _estimate_moment_os(shadow, obs, m, protocol) -> EstimateReport:
    if m < 1:
        raise ValueError("moment order must be >= 1")
    n_set = shadow.n_settings
    if n_set < m:
        raise ValueError(f"need at least {m} settings for an order-{m} moment, have {n_set}")
    n_qubits = shadow.kind.n_qubits
    o_mat = _obs_matrix(obs, n_qubits)
    if m == 1:
        # inverse-channel matrices have unit trace by construction, so the
        # O = identity case reduces to the mean snapshot weight exactly
        per = np.array(
            [
                math.fsum(
                    (s.weight * (1.0 if o_mat is None else _tr_prod(o_mat, s.base))).real
                    for s in group
                )
                / len(group)
                for group in shadow.setting_groups()
            ]
        )
        value = float(math.fsum(per) / n_set)
        return EstimateReport(value, n_set, shadow.k_per_setting, _se_of_mean(per, shadow.seed), protocol, per_setting=per)
    if m == 2:
        stacks = _os_stacks(shadow, 1)
        value_fn = _pairs_value_fn(stacks[0], stacks[0], o_mat)
        value = value_fn(np.ones(n_set))
        se = _se_of_ustat(value_fn, n_set, shadow.seed)
        return EstimateReport(value, n_set, shadow.k_per_setting, se, protocol)
    if m == 3:
        stacks = _os_stacks(shadow, 3)
        value_fn = _triples_value_fn(stacks, o_mat)
        value = value_fn(np.ones(n_set))
        se = _se_of_ustat(value_fn, n_set, shadow.seed)
        return EstimateReport(value, n_set, shadow.k_per_setting, se, protocol)
    value, vals = _disjoint_blocks_value(shadow, o_mat, m)
    se = float(np.std(vals, ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    return EstimateReport(value, n_set, shadow.k_per_setting, se, protocol)


# ---------------------------------------------------------------------------
# HS estimators (power/product snapshots)
# ---------------------------------------------------------------------------


def _check_target(shadow: ShadowSet, target: SnapshotTarget, what: str) -> None:
    if shadow.target is not target:
        raise ValueError(f"{what} needs {target.value} snapshots, got {shadow.target.value}")


def estimate_ot_hs(set_t: ShadowSet, obs: "Observable | None" = None) -> EstimateReport:
    """tr(O rho^t) as the mean of tr(O * snapshot); O=None means O = identity."""
    _check_target(set_t, SnapshotTarget.RHO_POW_T, "estimate_ot_hs")
    o_mat = _obs_matrix(obs, set_t.kind.n_qubits)
    per = []
    for group in set_t.setting_groups():
        if o_mat is None:
            vals = [s.weight.real for s in group]
        else:
            vals = [(s.weight * _tr_prod(o_mat, s.base)).real for s in group]
        per.append(math.fsum(vals) / len(group))
    per = np.array(per)
    value = float(math.fsum(per) / per.size)
    return EstimateReport(
        value, set_t.n_settings, set_t.k_per_setting, _se_of_mean(per, set_t.seed), "HS", per_setting=per
    )


def _hs_pair_report(set2, set1, obs, power_pair: bool) -> EstimateReport:
    """Common core of the patched pair estimators.

    ``power_pair=False``: tr(O rho^2 * rho) from a t=2 set and a plain role —
    single-dataset (set1 is None: bare bases of set2 reused, i != i' enforced)
    or two-datasets (cross product of independent means).
    ``power_pair=True``: tr(O rho^2 rho^2) from distinct-setting pairs of set2.
    """
    _check_target(set2, SnapshotTarget.RHO_POW_T, "patched pair estimator")
    if set2.t != 2:
        raise ValueError(f"patched pair estimators need t=2 snapshots, got t={set2.t}")
    o_mat = _obs_matrix(obs, set2.kind.n_qubits)
    w_stack = set2.setting_means(weighted=True)
    m2 = w_stack.shape[0]

    def sym_pairs_fn(stack_a, stack_b):
        # 1/2 tr(O(a b + b a)) averaged over distinct ordered pairs; for
        # O = identity or a = b the two orderings sum identically
        fwd = _pairs_value_fn(stack_a, stack_b, o_mat)
        if o_mat is None or stack_a is stack_b:
            return fwd
        bwd = _pairs_value_fn(stack_b, stack_a, o_mat)
        return lambda w: 0.5 * (fwd(w) + bwd(w))

    if power_pair:
        if m2 < 2:
            raise ValueError("need at least 2 settings")
        value_fn = sym_pairs_fn(w_stack, w_stack)
        value = value_fn(np.ones(m2))
        se = _se_of_ustat(value_fn, m2, set2.seed)
        return EstimateReport(value, m2, set2.k_per_setting, se, "HS")

    if set1 is None:
        if m2 < 2:
            raise ValueError("single-dataset mode needs at least 2 settings")
        u_stack = set2.setting_means(weighted=False)
        value_fn = sym_pairs_fn(w_stack, u_stack)
        value = value_fn(np.ones(m2))
        se = _se_of_ustat(value_fn, m2, set2.seed)
        return EstimateReport(value, m2, set2.k_per_setting, se, "HS")

    _check_target(set1, SnapshotTarget.RHO, "two-dataset mode")
    u_stack = set1.setting_means(weighted=True)
    m1 = u_stack.shape[0]

    def cross_value(mean_w, mean_u):
        if o_mat is None:
            # same arithmetic as the estimate_fm_patched chain, so the L=2
            # identity-boundary specialization agrees bitwise
            return float(np.trace(mean_w @ mean_u).real)
        return float(0.5 * (_tr_prod(o_mat @ mean_w, mean_u) + _tr_prod(o_mat @ mean_u, mean_w)).real)

    value = cross_value(w_stack.mean(axis=0), u_stack.mean(axis=0))
    if min(m2, m1) < 2:
        se = 0.0
    else:
        idx2 = _bootstrap_indices(m2, set2.seed)
        idx1 = _bootstrap_indices(m1, set1.seed if set1.seed is not None else set2.seed)
        boots = [
            cross_value(w_stack[idx2[r]].mean(axis=0), u_stack[idx1[r]].mean(axis=0))
            for r in range(idx2.shape[0])
        ]
        se = float(np.std(boots, ddof=1))
    return EstimateReport(value, m2, set2.k_per_setting, se, "HS")


def estimate_o3_hs(
    set2: ShadowSet, set1: "ShadowSet | None" = None, obs: "Observable | None" = None
) -> EstimateReport:
    """tr(O rho^3) from symmetrized snapshot pairs, 1/2 tr(O(w u + u w))."""
    return _hs_pair_report(set2, set1, obs, power_pair=False)


def estimate_p3_hs(set2: ShadowSet, set1: "ShadowSet | None" = None) -> EstimateReport:
    """tr(rho^3); exactly estimate_o3_hs with O = identity."""
    return _hs_pair_report(set2, set1, None, power_pair=False)


def estimate_o4_hs(set2: ShadowSet, obs: "Observable | None" = None) -> EstimateReport:
    """tr(O rho^4) from distinct-setting pairs of t=2 snapshots."""
    return _hs_pair_report(set2, None, obs, power_pair=True)


def estimate_p4_hs(set2: ShadowSet) -> EstimateReport:
    """tr(rho^4); exactly estimate_o4_hs with O = identity."""
    return _hs_pair_report(set2, None, None, power_pair=True)


def estimate_fm_patched(
    sets: "list[ShadowSet]", boundary_ops: "list[Observable | None]"
) -> EstimateReport:
    """General product tr(sigma_1 B_1 sigma_2 B_2 ... sigma_L B_L) from L
    independent sigma datasets; cross-set tuples factorize into the product of
    per-set means. The result is complex in general."""
    if not sets:
        raise ValueError("need at least one sigma dataset")
    if len(boundary_ops) != len(sets):
        raise ValueError(f"need {len(sets)} boundary ops (None allowed), got {len(boundary_ops)}")
    n_qubits = sets[0].kind.n_qubits
    if any(s.kind.n_qubits != n_qubits for s in sets):
        raise ValueError("sigma datasets act on different qubit counts")
    means = [s.setting_means(weighted=True).mean(axis=0) for s in sets]
    ops = [_obs_matrix(op, n_qubits) for op in boundary_ops]

    def chain_value(mats):
        acc = None
        for mat, op in zip(mats, ops):
            piece = mat if op is None else mat @ op
            acc = piece if acc is None else acc @ piece
        return complex(np.trace(acc))

    value = chain_value(means)
    m0 = sets[0].n_settings
    if all(s.n_settings >= 2 for s in sets):
        stacks = [s.setting_means(weighted=True) for s in sets]
        idxs = [_bootstrap_indices(s.n_settings, s.seed if s.seed is not None else 0) for s in sets]
        boots = np.array(
            [
                chain_value([stacks[k][idxs[k][r]].mean(axis=0) for k in range(len(sets))])
                for r in range(idxs[0].shape[0])
            ]
        )
        se = float(math.sqrt(np.var(boots.real, ddof=1) + np.var(boots.imag, ddof=1)))
    else:
        se = 0.0
    return EstimateReport(value, m0, sets[0].k_per_setting, se, "HS")


# ---------------------------------------------------------------------------
# HR estimators (kernel sums over outcome pairs; no matrices)
# ---------------------------------------------------------------------------


_HR_MARGINAL_FAMILIES = (CircuitFamily.PLAIN_RM, CircuitFamily.HYBRID_MOMENT,
                         CircuitFamily.CONTROLLED_VO, CircuitFamily.SPECTRAL_O,
                         CircuitFamily.HYBRID_SIGMA)
_HR_SIGNED_FAMILIES = (CircuitFamily.HYBRID_MOMENT, CircuitFamily.SPECTRAL_O,
                       CircuitFamily.CONTROLLED_VO)


def _grouped_arrays(records: "list[SnapshotRecord]", need_sign: bool, need_b1: bool):
    """Sort records by (i, j) and return rectangular per-setting arrays."""
    if not records:
        raise ValueError("empty record list")
    recs = sorted(records, key=lambda r: (r.i, r.j))
    if len({r.family for r in recs}) > 1:
        raise ValueError("records mix circuit families")
    setting_ids = sorted({r.i for r in recs})
    k = len(recs) // len(setting_ids)
    if k * len(setting_ids) != len(recs):
        raise ValueError("settings have unequal shot counts")
    m = len(setting_ids)
    codes = np.empty((m, k), dtype=np.int64)
    signs = np.empty((m, k), dtype=np.float64) if need_sign else None
    b1s = np.empty((m, k), dtype=np.int64) if need_b1 else None
    bases = np.empty((m, k), dtype=np.int64)
    descriptors = []
    pos = 0
    for mi, sid in enumerate(setting_ids):
        descriptors.append(recs[pos].descriptor)
        for kj in range(k):
            r = recs[pos]
            if r.i != sid or r.descriptor != descriptors[-1]:
                raise ValueError("records within a setting mix unitaries")
            if r.b is None:
                raise ValueError(f"record ({r.i},{r.j}) has no register outcome")
            codes[mi, kj] = r.b.value
            if need_sign:
                if r.b_c is None:
                    raise ValueError(f"record ({r.i},{r.j}) has no control outcome")
                signs[mi, kj] = 1.0 if r.b_c == 0 else -1.0
                if r.family is CircuitFamily.HYBRID_SIGMA:
                    # Y-basis shots carry no information about Re(sigma); weight
                    # 2 * 1{c=X} keeps the all-pairs kernel sum unbiased.
                    signs[mi, kj] *= 2.0 if r.c is ControlBasis.X else 0.0
            if need_b1:
                if r.b1 is None:
                    raise ValueError(f"record ({r.i},{r.j}) has no eigenbasis outcome b1")
                b1s[mi, kj] = r.b1.value
            pos += 1
    return codes, signs, b1s, descriptors, recs[0]


def _hr_within_report(
    records, kind, left, right, lam=None, scale=1.0, protocol="HR"
) -> EstimateReport:
    """Within-setting pair-kernel estimator: per setting
    sum_{j != j'} w_left[j] X(b_j, b_j') w_right[j'] / (K(K-1)), averaged over
    settings and multiplied by ``scale``."""
    need_sign = any(mode.startswith("sign") for mode in (left, right))
    need_b1 = lam is not None
    codes, signs, b1s, _, first = _grouped_arrays(records, need_sign, need_b1)
    m, k = codes.shape
    if k < 2:
        raise ValueError("kernel estimators need K >= 2 shots per setting")
    clifford = kind.tag is EnsembleTag.GLOBAL_CLIFFORD
    n = kind.n_qubits

    def weights_for(mode):
        if mode == "one":
            return None
        w = signs.copy()
        if lam is not None and mode == "sign_lambda":
            w *= np.asarray(lam, dtype=np.float64)[b1s]
        return w

    wl = weights_for(left)
    if wl is None:
        wl = np.ones((m, k))
    wr = weights_for(right)
    sums = pair_sums(codes, wl, wr, n, clifford)
    per = scale * sums / (k * (k - 1.0))
    value = float(math.fsum(per) / m)
    return EstimateReport(value, m, k, _se_of_mean(per, first.seed), protocol, per_setting=per)


def _check_family(records, allowed, what):
    if not records:
        raise ValueError("empty record list")
    fam = records[0].family
    if fam not in allowed:
        names = ", ".join(f.value for f in allowed)
        raise ValueError(f"{what} accepts records from {{{names}}}, got {fam.value}")


def estimate_p2_hr(records: "list[SnapshotRecord]", kind: EnsembleKind) -> EstimateReport:
    """Purity tr(rho^2) from within-setting outcome pairs (no control needed)."""
    _check_family(records, _HR_MARGINAL_FAMILIES, "estimate_p2_hr")
    return _hr_within_report(records, kind, "one", "one")


def estimate_p3_hr(records: "list[SnapshotRecord]", kind: EnsembleKind) -> EstimateReport:
    """tr(rho^3): control sign of shot j only, kernel on (b_j, b_j')."""
    _check_family(records, _HR_SIGNED_FAMILIES, "estimate_p3_hr")
    return _hr_within_report(records, kind, "sign", "one")


def estimate_p4_hr(records: "list[SnapshotRecord]", kind: EnsembleKind) -> EstimateReport:
    """tr(rho^4): control signs of both shots."""
    _check_family(records, _HR_SIGNED_FAMILIES, "estimate_p4_hr")
    return _hr_within_report(records, kind, "sign", "sign")


def _obs_norm_inf(obs: Observable) -> float:
    return float(np.max(np.abs(np.linalg.eigvalsh(obs.mat))))


def estimate_o3_hr(records: "list[SnapshotRecord]", kind: EnsembleKind, obs: Observable) -> EstimateReport:
    """tr(O rho^3) from a ControlledVO (or HybridSigma) dataset; the record's
    signed kernel sum estimates tr((O/|O|) rho^3), rescaled by |O|_inf."""
    _check_family(records, (CircuitFamily.CONTROLLED_VO, CircuitFamily.HYBRID_SIGMA), "estimate_o3_hr")
    if not obs.is_hermitian:
        raise ValueError("observable must be Hermitian")
    return _hr_within_report(records, kind, "sign", "one", scale=_obs_norm_inf(obs))


def estimate_o4_hr(
    vo_records: "list[SnapshotRecord]",
    moment_records: "list[SnapshotRecord]",
    kind: EnsembleKind,
    obs: Observable,
) -> EstimateReport:
    """tr(O rho^4) from a ControlledVO dataset paired with a HybridMoment t=2
    dataset sharing the same per-setting unitaries (cross-shot kernel pairs,
    both control signs)."""
    _check_family(vo_records, (CircuitFamily.CONTROLLED_VO, CircuitFamily.HYBRID_SIGMA), "estimate_o4_hr")
    _check_family(moment_records, (CircuitFamily.HYBRID_MOMENT,), "estimate_o4_hr (paired dataset)")
    codes_a, signs_a, _, desc_a, first = _grouped_arrays(vo_records, True, False)
    codes_b, signs_b, _, desc_b, _ = _grouped_arrays(moment_records, True, False)
    if codes_a.shape[0] != codes_b.shape[0]:
        raise ValueError("paired datasets have different setting counts")
    if desc_a != desc_b:
        raise ValueError("paired datasets must share per-setting unitaries (descriptor mismatch)")
    clifford = kind.tag is EnsembleTag.GLOBAL_CLIFFORD
    sums = cross_sums(codes_a, signs_a, codes_b, signs_b, kind.n_qubits, clifford)
    k_a, k_b = codes_a.shape[1], codes_b.shape[1]
    per = _obs_norm_inf(obs) * sums / (k_a * k_b)
    value = float(math.fsum(per) / per.size)
    return EstimateReport(value, per.size, k_a, _se_of_mean(per, first.seed), "HR", per_setting=per)


def estimate_o3_spectral(
    records: "list[SnapshotRecord]", kind: EnsembleKind, lam: np.ndarray
) -> EstimateReport:
    """tr(O rho^3) from a SpectralO dataset: weight (-1)^{b_c} lambda_{b1} on
    shot j, kernel on (b2_j, b2_j')."""
    _check_family(records, (CircuitFamily.SPECTRAL_O,), "estimate_o3_spectral")
    return _hr_within_report(records, kind, "sign_lambda", "one", lam=np.asarray(lam, dtype=np.float64))


def estimate_o4_spectral(
    records: "list[SnapshotRecord]", kind: EnsembleKind, lam: np.ndarray
) -> EstimateReport:
    """tr(O rho^4): as estimate_o3_spectral plus the j' control sign."""
    _check_family(records, (CircuitFamily.SPECTRAL_O,), "estimate_o4_spectral")
    return _hr_within_report(records, kind, "sign_lambda", "sign", lam=np.asarray(lam, dtype=np.float64))


# ---------------------------------------------------------------------------
# Swap-test estimators
# ---------------------------------------------------------------------------


def _swap_mean(records: "list[SnapshotRecord]") -> "tuple[float, np.ndarray, SnapshotRecord]":
    if not records:
        raise ValueError("empty record list")
    recs = sorted(records, key=lambda r: (r.i, r.j))
    if any(r.family is not CircuitFamily.SWAP_TEST for r in recs):
        raise ValueError("swap estimators need SwapTest records")
    if len({r.c for r in recs}) != 1:
        raise ValueError("swap records mix control bases; estimate each basis separately")
    per_setting: dict[int, list[float]] = {}
    for r in recs:
        per_setting.setdefault(r.i, []).append(1.0 if r.b_c == 0 else -1.0)
    per = np.array([math.fsum(v) / len(v) for _, v in sorted(per_setting.items())])
    return float(math.fsum(per) / per.size), per, recs[0]


def estimate_swap(records: "list[SnapshotRecord]") -> EstimateReport:
    """Mean control sign: Re F_m for X-basis records, Im F_m for Y-basis."""
    value, per, first = _swap_mean(records)
    return EstimateReport(value, per.size, len(records) // per.size, _se_of_mean(per, first.seed), "SwapTest", per_setting=per)


def estimate_fm_swap(
    x_records: "list[SnapshotRecord]", y_records: "list[SnapshotRecord] | None" = None
) -> EstimateReport:
    """F_m = E_X[(-1)^{b_c}] + i E_Y[(-1)^{b_c}]; omit y_records for real F_m."""
    rx = estimate_swap(x_records)
    if y_records is None:
        return rx
    ry = estimate_swap(y_records)
    value = complex(rx.value, ry.value)
    se = math.sqrt(rx.std_error**2 + ry.std_error**2)
    return EstimateReport(value, rx.n_settings, rx.k_shots, se, "SwapTest")


# ---------------------------------------------------------------------------
# Observable decompositions for the o_t circuits
# ---------------------------------------------------------------------------


def make_vo(obs: Observable, n_qubits: int) -> "tuple[np.ndarray, float]":
    """Unitary V_O and norm such that O_embedded = norm/2 * (V_O + V_O^+).

    Works for any Hermitian O: with eigendecomposition O = V diag(a) V^+,
    V_O = V diag(exp(i arccos(a/|O|_inf))) V^+.
    """
    if not obs.is_hermitian:
        raise ValueError("V_O decomposition needs a Hermitian observable")
    full = obs.embedded(n_qubits)
    eigvals, eigvecs = np.linalg.eigh(full)
    norm = float(np.max(np.abs(eigvals)))
    if norm == 0.0:
        raise ValueError("zero observable has no V_O decomposition")
    phases = np.exp(1j * np.arccos(np.clip(eigvals / norm, -1.0, 1.0)))
    v_op = (eigvecs * phases) @ eigvecs.conj().T
    return v_op, norm


def spectral_decomposition(obs: Observable, n_qubits: int) -> "tuple[np.ndarray, np.ndarray]":
    """Eigenbasis V (columns) and eigenvalues of the embedded observable."""
    if not obs.is_hermitian:
        raise ValueError("spectral decomposition needs a Hermitian observable")
    eigvals, eigvecs = np.linalg.eigh(obs.embedded(n_qubits))
    return eigvecs, eigvals
