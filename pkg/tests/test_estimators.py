"""Estimator tests: exact enumeration unbiasedness, frozen values, invariances,
consistency chains, and seeded statistical agreement."""

import dataclasses
import math

import numpy as np
import pytest

from hybridshadow import circuits as cir
from hybridshadow import estimators as est
from hybridshadow import exact
from hybridshadow.circuits import CircuitFamily, ControlBasis, SnapshotRecord, sample_dataset
from hybridshadow.ensembles import (
    enumerate_ensemble,
    global_clifford,
    local_clifford,
    shadow_norm_bound,
)
from hybridshadow.estimators import SnapshotTarget, build_shadow_set
from hybridshadow.qcore import (
    BitString,
    DensityMatrix,
    Observable,
    depolarize,
    exact_general_function,
    exact_moment,
    exact_obs_moment,
    ghz_state,
    matrix_power,
)

LOCAL1 = local_clifford(1)
GLOBAL1 = global_clifford(1)
LOCAL2 = local_clifford(2)

# generic single-qubit mixed state with all Bloch components nonzero
RHO1 = DensityMatrix(
    0.5
    * (
        np.eye(2)
        + 0.3 * np.array([[0, 1], [1, 0]])
        + 0.2 * np.array([[0, -1j], [1j, 0]])
        + 0.25 * np.diag([1.0, -1.0])
    )
)
NOISY_GHZ = depolarize(ghz_state(2), 0.8)
OBS_Z = Observable.from_pauli("Z")
OBS_ZZ = Observable.from_pauli("ZZ")
OBS_ID1 = Observable(np.eye(2), (0,))

P3_GHZ = 0.6145
P4_GHZ = 0.522025
O2_GHZ = 0.72  # tr(ZZ rho^2)
O3_GHZ = 0.614  # tr(ZZ rho^3) = 0.85^3 - 0.05^3
O4_GHZ = 0.522  # tr(ZZ rho^4) = 0.85^4 - 0.05^4


def moment_set(rho, t, kind, m, k, seed):
    recs = sample_dataset(cir.hybrid_moment(rho, t), kind, m, k, seed)
    return build_shadow_set(recs, kind, SnapshotTarget.RHO_POW_T)


def plain_set(rho, kind, m, k, seed):
    recs = sample_dataset(cir.plain_rm(rho), kind, m, k, seed)
    return build_shadow_set(recs, kind, SnapshotTarget.RHO)


def record(family, t, kind, descriptor, c, b_c, b1, b, i=0, j=0):
    return SnapshotRecord(
        family=family,
        t=t,
        ensemble=kind.tag.value if kind is not None else None,
        descriptor=descriptor,
        c=c,
        b_c=b_c,
        b1=b1,
        b=b,
        i=i,
        j=j,
        seed=0,
    )


class TestSnapshots:
    def test_z_basis_snapshot_matrix(self):
        # identity rotation, outcome 0: 3|0><0| - I
        rec = record(CircuitFamily.PLAIN_RM, 1, LOCAL1, "0", None, None, None, BitString(0, 1))
        snap = est.snapshot_rho(rec, LOCAL1)
        assert snap.weight == 1.0
        np.testing.assert_allclose(snap.matrix(), np.diag([2.0, -1.0]), atol=1e-12)

    def test_weight_conventions(self):
        b = BitString(1, 1)
        rec = record(CircuitFamily.HYBRID_MOMENT, 2, LOCAL1, "1", ControlBasis.X, 1, None, b)
        assert est.snapshot_rho_pow_t(rec, LOCAL1).weight == -1.0
        rec = record(CircuitFamily.HYBRID_SIGMA, 2, LOCAL1, "1", ControlBasis.X, 0, None, b)
        assert est.snapshot_sigma(rec, LOCAL1).weight == 2.0
        rec = record(CircuitFamily.HYBRID_SIGMA, 2, LOCAL1, "1", ControlBasis.Y, 1, None, b)
        assert est.snapshot_sigma(rec, LOCAL1).weight == -2.0j

    def test_trace_equals_weight(self):
        for kind, spec in [
            (LOCAL1, cir.hybrid_moment(RHO1, 3)),
            (GLOBAL1, cir.hybrid_moment(RHO1, 2)),
            (LOCAL2, cir.hybrid_sigma([NOISY_GHZ, NOISY_GHZ], [OBS_ZZ])),
        ]:
            builder = (
                est.snapshot_sigma
                if spec.family is CircuitFamily.HYBRID_SIGMA
                else est.snapshot_rho_pow_t
            )
            for _, rec in exact.enumerate_records(spec, kind)[:40]:
                snap = builder(rec, kind)
                assert abs(np.trace(snap.matrix()) - snap.weight) < 1e-10

    def test_family_guards(self):
        rec = record(CircuitFamily.PLAIN_RM, 1, LOCAL1, "0", None, None, None, BitString(0, 1))
        with pytest.raises(ValueError, match="HybridMoment"):
            est.snapshot_rho_pow_t(rec, LOCAL1)
        with pytest.raises(ValueError, match="HybridSigma"):
            est.snapshot_sigma(rec, LOCAL1)
        swap_rec = record(CircuitFamily.SWAP_TEST, 2, None, "", ControlBasis.X, 0, None, None)
        with pytest.raises(ValueError, match="missing"):
            est.snapshot_rho(swap_rec, LOCAL1)

    def test_snapshot_rho_accepts_any_family_with_b(self):
        rec = record(
            CircuitFamily.HYBRID_MOMENT, 2, LOCAL1, "2", ControlBasis.X, 1, None, BitString(1, 1)
        )
        snap = est.snapshot_rho(rec, LOCAL1)
        assert snap.weight == 1.0  # control information dropped


class TestFormulaOracles:
    """Closed-form route: twirl identities evaluated by ensemble enumeration."""

    @pytest.mark.parametrize("kind", [LOCAL1, GLOBAL1])
    def test_channel_roundtrip_n1(self, kind):
        dev = np.max(np.abs(exact.channel_roundtrip(kind, RHO1.mat) - RHO1.mat))
        assert dev < 1e-12

    def test_channel_roundtrip_n2(self):
        dev = np.max(np.abs(exact.channel_roundtrip(LOCAL2, NOISY_GHZ.mat) - NOISY_GHZ.mat))
        assert dev < 1e-12

    @pytest.mark.parametrize("kind", [LOCAL1, GLOBAL1])
    def test_kernel_pair_is_trace_product(self, kind):
        a = RHO1.mat @ RHO1.mat
        b = 0.5 * (np.array([[0.4, 0.1 + 0.2j], [0.1 - 0.2j, 1.3]]))
        want = np.trace(a @ b).real
        assert abs(exact.expected_kernel_pair(kind, a, b) - want) < 1e-12

    def test_kernel_pair_functionals_n2(self):
        rho = NOISY_GHZ.mat
        zz = OBS_ZZ.embedded(2)
        assert abs(exact.expected_kernel_pair(LOCAL2, rho @ rho, rho) - P3_GHZ) < 1e-12
        assert abs(exact.expected_kernel_pair(LOCAL2, rho @ rho, rho @ rho) - P4_GHZ) < 1e-12
        assert abs(exact.expected_kernel_pair(LOCAL2, rho @ zz @ rho, rho) - O3_GHZ) < 1e-12


class TestEnumeratedSnapshots:
    """Estimator route: E[snapshot] over all (unitary, outcome) records."""

    @pytest.mark.parametrize("kind", [LOCAL1, GLOBAL1])
    @pytest.mark.parametrize("t", [1, 2, 3])
    def test_power_snapshot_mean_n1(self, kind, t):
        spec = cir.hybrid_moment(RHO1, t)
        got = exact.expected_snapshot_matrix(spec, kind, est.snapshot_rho_pow_t)
        np.testing.assert_allclose(got, matrix_power(RHO1.mat, t), atol=1e-12)

    def test_power_snapshot_mean_n2(self):
        spec = cir.hybrid_moment(NOISY_GHZ, 2)
        got = exact.expected_snapshot_matrix(spec, LOCAL2, est.snapshot_rho_pow_t)
        np.testing.assert_allclose(got, NOISY_GHZ.mat @ NOISY_GHZ.mat, atol=1e-12)

    @pytest.mark.parametrize("kind", [LOCAL1, GLOBAL1])
    def test_sigma_snapshot_mean_n1(self, kind):
        spec = cir.hybrid_sigma([RHO1, RHO1], [OBS_Z])
        got = exact.expected_snapshot_matrix(spec, kind, est.snapshot_sigma)
        want = RHO1.mat @ np.diag([1.0, -1.0]) @ RHO1.mat
        np.testing.assert_allclose(got, want, atol=1e-12)

    def test_sigma_snapshot_mean_n2(self):
        spec = cir.hybrid_sigma([NOISY_GHZ, NOISY_GHZ], [OBS_ZZ])
        got = exact.expected_snapshot_matrix(spec, LOCAL2, est.snapshot_sigma)
        want = NOISY_GHZ.mat @ OBS_ZZ.embedded(2) @ NOISY_GHZ.mat
        np.testing.assert_allclose(got, want, atol=1e-12)

    @pytest.mark.parametrize("kind", [LOCAL1, GLOBAL1])
    def test_plain_snapshot_mean(self, kind):
        got = exact.expected_snapshot_matrix(cir.plain_rm(RHO1), kind, est.snapshot_rho)
        np.testing.assert_allclose(got, RHO1.mat, atol=1e-12)


class TestEnumeratedEstimates:
    """Every estimator, fed every possible dataset, probability weighted."""

    def _close(self, got, want, tol=1e-12):
        assert abs(complex(got).imag) < tol
        assert abs(complex(got).real - want) < tol

    def test_p2_hr(self):
        spec = cir.plain_rm(RHO1)
        got = exact.expected_estimate(spec, LOCAL1, lambda r: est.estimate_p2_hr(r, LOCAL1).value)
        self._close(got, exact_moment(RHO1, 2))

    @pytest.mark.parametrize("kind", [LOCAL1, GLOBAL1])
    def test_p3_hr(self, kind):
        spec = cir.hybrid_moment(RHO1, 2)
        got = exact.expected_estimate(spec, kind, lambda r: est.estimate_p3_hr(r, kind).value)
        self._close(got, exact_moment(RHO1, 3))

    def test_p4_hr(self):
        spec = cir.hybrid_moment(RHO1, 2)
        got = exact.expected_estimate(spec, LOCAL1, lambda r: est.estimate_p4_hr(r, LOCAL1).value)
        self._close(got, exact_moment(RHO1, 4))

    def test_o3_hr_controlled_vo(self):
        v_op, _ = est.make_vo(OBS_Z, 1)
        spec = cir.controlled_vo(RHO1, v_op)
        got = exact.expected_estimate(
            spec, LOCAL1, lambda r: est.estimate_o3_hr(r, LOCAL1, OBS_Z).value
        )
        self._close(got, exact_obs_moment(RHO1, OBS_Z, 3))

    def test_o3_hr_generic_observable(self):
        obs = Observable(np.array([[0.3, 0.4], [0.4, -1.7]]), (0,))
        v_op, norm = est.make_vo(obs, 1)
        spec = cir.controlled_vo(RHO1, v_op)
        got = exact.expected_estimate(
            spec, LOCAL1, lambda r: est.estimate_o3_hr(r, LOCAL1, obs).value
        )
        self._close(got, exact_obs_moment(RHO1, obs, 3))

    def test_o3_hr_sigma_records(self):
        spec = cir.hybrid_sigma([RHO1, RHO1], [OBS_Z])
        got = exact.expected_estimate(
            spec, LOCAL1, lambda r: est.estimate_o3_hr(r, LOCAL1, OBS_Z).value
        )
        self._close(got, exact_obs_moment(RHO1, OBS_Z, 3))

    def test_o3_o4_spectral(self):
        v, lam = est.spectral_decomposition(OBS_Z, 1)
        spec = cir.spectral_o(RHO1, v, lam)
        got3 = exact.expected_estimate(
            spec, LOCAL1, lambda r: est.estimate_o3_spectral(r, LOCAL1, lam).value
        )
        got4 = exact.expected_estimate(
            spec, LOCAL1, lambda r: est.estimate_o4_spectral(r, LOCAL1, lam).value
        )
        self._close(got3, exact_obs_moment(RHO1, OBS_Z, 3))
        self._close(got4, exact_obs_moment(RHO1, OBS_Z, 4))

    def test_p3_hr_on_spectral_records(self):
        # the (b_c, b2) marginal of a spectral dataset is a valid moment dataset
        v, lam = est.spectral_decomposition(OBS_Z, 1)
        spec = cir.spectral_o(RHO1, v, lam)
        got = exact.expected_estimate(spec, LOCAL1, lambda r: est.estimate_p3_hr(r, LOCAL1).value)
        self._close(got, exact_moment(RHO1, 3))

    def test_o4_hr_cross_dataset(self):
        v_op, _ = est.make_vo(OBS_Z, 1)
        vo_spec = cir.controlled_vo(RHO1, v_op)
        mom_spec = cir.hybrid_moment(RHO1, 2)
        total = 0.0
        for su, w_u in enumerate_ensemble(LOCAL1):
            for pa, ca, bca, _, ba in exact._outcome_entries(vo_spec, su, LOCAL1):
                ra = record(CircuitFamily.CONTROLLED_VO, 2, LOCAL1, su.descriptor, ca, bca, None, ba)
                for pb, cb, bcb, _, bb in exact._outcome_entries(mom_spec, su, LOCAL1):
                    rb = record(CircuitFamily.HYBRID_MOMENT, 2, LOCAL1, su.descriptor, cb, bcb, None, bb)
                    total += w_u * pa * pb * est.estimate_o4_hr([ra], [rb], LOCAL1, OBS_Z).value
        self._close(total, exact_obs_moment(RHO1, OBS_Z, 4))

    @pytest.mark.parametrize("t", [2, 3])
    def test_ot_hs(self, t):
        spec = cir.hybrid_moment(RHO1, t)

        def with_obs(r):
            return est.estimate_ot_hs(build_shadow_set(r, LOCAL1, SnapshotTarget.RHO_POW_T), OBS_Z).value

        def without(r):
            return est.estimate_ot_hs(build_shadow_set(r, LOCAL1, SnapshotTarget.RHO_POW_T)).value

        self._close(
            exact.expected_estimate(spec, LOCAL1, with_obs, 1, 1), exact_obs_moment(RHO1, OBS_Z, t)
        )
        self._close(exact.expected_estimate(spec, LOCAL1, without, 1, 1), exact_moment(RHO1, t))

    def test_p3_hs_single_dataset(self):
        spec = cir.hybrid_moment(RHO1, 2)

        def fn(r):
            return est.estimate_p3_hs(build_shadow_set(r, LOCAL1, SnapshotTarget.RHO_POW_T)).value

        self._close(exact.expected_estimate(spec, LOCAL1, fn, 2, 1), exact_moment(RHO1, 3))

    def test_o3_hs_single_dataset(self):
        spec = cir.hybrid_moment(RHO1, 2)

        def fn(r):
            return est.estimate_o3_hs(
                build_shadow_set(r, LOCAL1, SnapshotTarget.RHO_POW_T), None, OBS_Z
            ).value

        self._close(exact.expected_estimate(spec, LOCAL1, fn, 2, 1), exact_obs_moment(RHO1, OBS_Z, 3))

    def test_p4_o4_hs(self):
        spec = cir.hybrid_moment(RHO1, 2)

        def fn_p(r):
            return est.estimate_p4_hs(build_shadow_set(r, LOCAL1, SnapshotTarget.RHO_POW_T)).value

        def fn_o(r):
            return est.estimate_o4_hs(build_shadow_set(r, LOCAL1, SnapshotTarget.RHO_POW_T), OBS_Z).value

        self._close(exact.expected_estimate(spec, LOCAL1, fn_p, 2, 1), exact_moment(RHO1, 4))
        self._close(exact.expected_estimate(spec, LOCAL1, fn_o, 2, 1), exact_obs_moment(RHO1, OBS_Z, 4))

    def test_p3_hs_two_datasets(self):
        mom = exact.enumerate_records(cir.hybrid_moment(RHO1, 2), LOCAL1)
        plain = exact.enumerate_records(cir.plain_rm(RHO1), LOCAL1)
        total = 0.0
        for p2, r2 in mom:
            s2 = build_shadow_set([r2], LOCAL1, SnapshotTarget.RHO_POW_T)
            for p1, r1 in plain:
                s1 = build_shadow_set([r1], LOCAL1, SnapshotTarget.RHO)
                total += p2 * p1 * est.estimate_p3_hs(s2, s1).value
        self._close(total, exact_moment(RHO1, 3))

    def test_o3_hs_two_datasets(self):
        mom = exact.enumerate_records(cir.hybrid_moment(RHO1, 2), LOCAL1)
        plain = exact.enumerate_records(cir.plain_rm(RHO1), LOCAL1)
        total = 0.0
        for p2, r2 in mom:
            s2 = build_shadow_set([r2], LOCAL1, SnapshotTarget.RHO_POW_T)
            for p1, r1 in plain:
                s1 = build_shadow_set([r1], LOCAL1, SnapshotTarget.RHO)
                total += p2 * p1 * est.estimate_o3_hs(s2, s1, OBS_Z).value
        self._close(total, exact_obs_moment(RHO1, OBS_Z, 3))

    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_pm_os(self, m):
        spec = cir.plain_rm(RHO1)

        def fn(r):
            return est.estimate_pm_os(build_shadow_set(r, LOCAL1, SnapshotTarget.RHO), m).value

        self._close(exact.expected_estimate(spec, LOCAL1, fn, m, 1), exact_moment(RHO1, m))

    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_om_os(self, m):
        spec = cir.plain_rm(RHO1)

        def fn(r):
            return est.estimate_om_os(build_shadow_set(r, LOCAL1, SnapshotTarget.RHO), OBS_Z, m).value

        self._close(exact.expected_estimate(spec, LOCAL1, fn, m, 1), exact_obs_moment(RHO1, OBS_Z, m))

    def test_fm_patched_single_factor(self):
        # E[tr(sigma_hat B)] = tr(rho Z rho B) with B = X
        spec = cir.hybrid_sigma([RHO1, RHO1], [OBS_Z])
        obs_x = Observable.from_pauli("X")

        def fn(r):
            s = build_shadow_set(r, LOCAL1, SnapshotTarget.SIGMA)
            return est.estimate_fm_patched([s], [obs_x]).value

        got = exact.expected_estimate(spec, LOCAL1, fn, 1, 1)
        want = complex(np.trace(RHO1.mat @ np.diag([1.0, -1.0]) @ RHO1.mat @ OBS_X_MAT))
        assert abs(got - want) < 1e-12

    def test_swap_mean(self):
        spec = cir.swap_test([RHO1, RHO1, RHO1])
        got = exact.expected_estimate(spec, None, lambda r: est.estimate_swap(r).value, 1, 1)
        self._close(got, exact_moment(RHO1, 3))


OBS_X_MAT = np.array([[0.0, 1.0], [1.0, 0.0]])


class TestConsistencyChains:
    """O = identity reductions agree bitwise on identical datasets."""

    def test_spectral_identity_lambda_equals_p3_hr(self):
        v, lam = est.spectral_decomposition(OBS_Z, 2)
        recs = sample_dataset(cir.spectral_o(NOISY_GHZ, v, lam), LOCAL2, 25, 3, seed=21)
        a = est.estimate_o3_spectral(recs, LOCAL2, np.ones(4))
        b = est.estimate_p3_hr(recs, LOCAL2)
        assert a.value == b.value
        assert np.array_equal(a.per_setting, b.per_setting)

    def test_vo_identity_equals_p3_hr(self):
        recs = sample_dataset(cir.controlled_vo(RHO1, np.eye(2)), LOCAL1, 30, 3, seed=22)
        a = est.estimate_o3_hr(recs, LOCAL1, OBS_ID1)
        b = est.estimate_p3_hr(recs, LOCAL1)
        assert a.value == b.value

    def test_hs_identity_delegation(self):
        set2 = moment_set(NOISY_GHZ, 2, LOCAL2, 40, 2, seed=23)
        a = est.estimate_o3_hs(set2)
        b = est.estimate_p3_hs(set2)
        assert a.value == b.value and a.std_error == b.std_error
        assert est.estimate_o4_hs(set2).value == est.estimate_p4_hs(set2).value

    def test_fm_patched_l2_identity_matches_p3_hs(self):
        set2 = moment_set(RHO1, 2, LOCAL1, 40, 2, seed=11)
        set1 = plain_set(RHO1, LOCAL1, 30, 3, seed=517)
        two = est.estimate_p3_hs(set2, set1)
        fm = est.estimate_fm_patched([set2, set1], [None, None])
        assert fm.value.real == two.value
        assert fm.value.imag == 0.0

    def test_ot_hs_identity_is_mean_control_sign(self):
        set2 = moment_set(NOISY_GHZ, 2, LOCAL2, 50, 4, seed=29)
        rep = est.estimate_ot_hs(set2)
        signs = [s.weight.real for s in set2.snapshots]
        assert rep.value == pytest.approx(math.fsum(signs) / len(signs), abs=1e-15)


class TestInvariances:
    def test_record_list_order_is_irrelevant(self):
        recs = sample_dataset(cir.hybrid_moment(NOISY_GHZ, 2), LOCAL2, 20, 4, seed=31)
        shuffled = list(recs)
        np.random.default_rng(0).shuffle(shuffled)
        assert est.estimate_p3_hr(recs, LOCAL2).value == est.estimate_p3_hr(shuffled, LOCAL2).value

    def test_shot_relabeling_within_setting(self):
        recs = sample_dataset(cir.hybrid_moment(NOISY_GHZ, 2), LOCAL2, 20, 4, seed=37)
        relabeled = [dataclasses.replace(r, j=(r.j + 1) % 4) for r in recs]
        a = est.estimate_p3_hr(recs, LOCAL2).value
        b = est.estimate_p3_hr(relabeled, LOCAL2).value
        assert abs(a - b) < 1e-12

    def test_control_sign_flip(self):
        recs = sample_dataset(cir.hybrid_moment(NOISY_GHZ, 2), LOCAL2, 20, 3, seed=41)
        flipped = [dataclasses.replace(r, b_c=1 - r.b_c) for r in recs]
        assert est.estimate_p3_hr(flipped, LOCAL2).value == -est.estimate_p3_hr(recs, LOCAL2).value
        assert est.estimate_p4_hr(flipped, LOCAL2).value == est.estimate_p4_hr(recs, LOCAL2).value

    def test_order_one_moment_is_exactly_one(self):
        shadow = plain_set(NOISY_GHZ, LOCAL2, 25, 2, seed=43)
        assert est.estimate_pm_os(shadow, 1).value == 1.0

    def test_bootstrap_std_error_is_deterministic(self):
        recs = sample_dataset(cir.hybrid_moment(NOISY_GHZ, 2), LOCAL2, 30, 3, seed=47)
        a = est.estimate_p3_hr(recs, LOCAL2)
        b = est.estimate_p3_hr(list(recs), LOCAL2)
        assert a.std_error == b.std_error and a.std_error > 0.0

    def test_report_validation(self):
        with pytest.raises(ValueError, match="std_error"):
            est.EstimateReport(1.0, 5, 2, -0.1, "HS")


class TestStatistical:
    """Fixed-seed sampled runs agree with the oracle within 5 bootstrap SEs."""

    def check(self, rep, want):
        assert rep.std_error > 0.0
        assert abs(rep.value - want) < 5.0 * rep.std_error

    def test_p3_hs_single(self):
        self.check(est.estimate_p3_hs(moment_set(NOISY_GHZ, 2, LOCAL2, 300, 1, seed=7)), P3_GHZ)

    def test_p3_hs_two_datasets(self):
        set2 = moment_set(NOISY_GHZ, 2, LOCAL2, 200, 1, seed=101)
        set1 = plain_set(NOISY_GHZ, LOCAL2, 200, 1, seed=202)
        self.check(est.estimate_p3_hs(set2, set1), P3_GHZ)

    def test_p3_p4_hr(self):
        recs = sample_dataset(cir.hybrid_moment(NOISY_GHZ, 2), LOCAL2, 250, 4, seed=7)
        self.check(est.estimate_p3_hr(recs, LOCAL2), P3_GHZ)
        self.check(est.estimate_p4_hr(recs, LOCAL2), P4_GHZ)

    def test_p4_hs(self):
        self.check(est.estimate_p4_hs(moment_set(NOISY_GHZ, 2, LOCAL2, 300, 1, seed=13)), P4_GHZ)

    def test_o3_hs(self):
        set2 = moment_set(NOISY_GHZ, 2, LOCAL2, 300, 1, seed=17)
        self.check(est.estimate_o3_hs(set2, None, OBS_ZZ), O3_GHZ)

    def test_ot_hs_o2(self):
        self.check(est.estimate_ot_hs(moment_set(NOISY_GHZ, 2, LOCAL2, 400, 1, seed=19), OBS_ZZ), O2_GHZ)

    def test_o3_hr_vo(self):
        v_op, _ = est.make_vo(OBS_ZZ, 2)
        recs = sample_dataset(cir.controlled_vo(NOISY_GHZ, v_op), LOCAL2, 250, 4, seed=23)
        self.check(est.estimate_o3_hr(recs, LOCAL2, OBS_ZZ), O3_GHZ)

    def test_o3_o4_spectral(self):
        v, lam = est.spectral_decomposition(OBS_ZZ, 2)
        recs = sample_dataset(cir.spectral_o(NOISY_GHZ, v, lam), LOCAL2, 250, 4, seed=29)
        self.check(est.estimate_o3_spectral(recs, LOCAL2, lam), O3_GHZ)
        self.check(est.estimate_o4_spectral(recs, LOCAL2, lam), O4_GHZ)

    def test_os_moments(self):
        shadow = plain_set(NOISY_GHZ, LOCAL2, 400, 1, seed=31)
        self.check(est.estimate_pm_os(shadow, 2), exact_moment(NOISY_GHZ, 2))
        self.check(est.estimate_pm_os(shadow, 3), P3_GHZ)
        self.check(est.estimate_om_os(shadow, OBS_ZZ, 2), O2_GHZ)

    def test_swap_noiseless_ghz_observable(self):
        ghz = ghz_state(2)
        ops = [OBS_ZZ, None, None]
        recs = sample_dataset(cir.swap_test([ghz] * 3, ops), None, 100, 1, seed=37)
        rep = est.estimate_swap(recs)
        want = exact_general_function([ghz] * 3, ops).real
        assert want == pytest.approx(1.0)
        # pure GHZ: every shot yields b_c = 0, so the estimate is exact
        assert rep.value == 1.0

    def test_maximally_mixed_p4(self):
        rho = DensityMatrix(np.eye(2) / 2)
        self.check(est.estimate_p4_hs(moment_set(rho, 2, LOCAL1, 300, 1, seed=41)), 0.125)

    def test_fm_swap_complex(self):
        ops = [Observable.from_pauli("X"), Observable.from_pauli("Y"), None]
        fx = sample_dataset(cir.swap_test([RHO1] * 3, ops, ControlBasis.X), None, 600, 1, seed=5)
        fy = sample_dataset(cir.swap_test([RHO1] * 3, ops, ControlBasis.Y), None, 600, 1, seed=6)
        rep = est.estimate_fm_swap(fx, fy)
        want = exact_general_function([RHO1] * 3, ops)
        assert abs(rep.value - want) < 5.0 * rep.std_error + 1e-12

    def test_fm_patched_statistical(self):
        # tr(sigma_a sigma_b) with sigma = rho Z rho from two independent sets
        spec = cir.hybrid_sigma([RHO1, RHO1], [OBS_Z])
        sa = build_shadow_set(sample_dataset(spec, LOCAL1, 400, 1, seed=43), LOCAL1, SnapshotTarget.SIGMA)
        sb = build_shadow_set(sample_dataset(spec, LOCAL1, 400, 1, seed=44), LOCAL1, SnapshotTarget.SIGMA)
        rep = est.estimate_fm_patched([sa, sb], [None, None])
        sig = RHO1.mat @ np.diag([1.0, -1.0]) @ RHO1.mat
        want = complex(np.trace(sig @ sig))
        assert abs(rep.value - want) < 5.0 * rep.std_error + 1e-12


class TestVarianceProperty:
    def test_single_snapshot_obs_variance_within_shadow_bound(self):
        set2 = moment_set(NOISY_GHZ, 2, LOCAL2, 2000, 1, seed=53)
        rep = est.estimate_ot_hs(set2, OBS_ZZ)
        vals = rep.per_setting
        var_emp = float(np.var(vals, ddof=1))
        bound = shadow_norm_bound(LOCAL2, OBS_ZZ) + O2_GHZ**2
        slack = 5.0 * var_emp * math.sqrt(2.0 / vals.size)
        assert var_emp - slack <= bound


class TestDecompositions:
    def test_make_vo_pauli(self):
        v_op, norm = est.make_vo(OBS_ZZ, 2)
        assert norm == pytest.approx(1.0)
        assert np.max(np.abs(v_op @ v_op.conj().T - np.eye(4))) < 1e-12
        np.testing.assert_allclose(
            0.5 * norm * (v_op + v_op.conj().T), OBS_ZZ.embedded(2), atol=1e-12
        )

    def test_make_vo_generic(self):
        obs = Observable(np.array([[0.3, 0.4], [0.4, -1.7]]), (0,))
        v_op, norm = est.make_vo(obs, 1)
        assert np.max(np.abs(v_op @ v_op.conj().T - np.eye(2))) < 1e-12
        np.testing.assert_allclose(0.5 * norm * (v_op + v_op.conj().T), obs.mat, atol=1e-12)

    def test_make_vo_rejects_non_hermitian(self):
        with pytest.raises(ValueError, match="Hermitian"):
            est.make_vo(Observable(np.array([[1.0, 0.0], [0.0, 1.0j]]), (0,)), 1)

    def test_spectral_decomposition_reconstructs(self):
        obs = Observable(np.array([[0.3, 0.4], [0.4, -1.7]]), (0,))
        v, lam = est.spectral_decomposition(obs, 1)
        np.testing.assert_allclose((v * lam) @ v.conj().T, obs.mat, atol=1e-12)


class TestErrors:
    def test_kernel_needs_two_shots(self):
        recs = sample_dataset(cir.hybrid_moment(RHO1, 2), LOCAL1, 5, 1, seed=1)
        with pytest.raises(ValueError, match="K >= 2"):
            est.estimate_p3_hr(recs, LOCAL1)

    def test_os_needs_m_settings(self):
        shadow = plain_set(RHO1, LOCAL1, 2, 1, seed=1)
        with pytest.raises(ValueError, match="at least 3"):
            est.estimate_pm_os(shadow, 3)

    def test_family_gates(self):
        mom = sample_dataset(cir.hybrid_moment(RHO1, 2), LOCAL1, 5, 2, seed=1)
        with pytest.raises(ValueError, match="accepts records from"):
            est.estimate_o3_spectral(mom, LOCAL1, np.ones(2))
        with pytest.raises(ValueError, match="accepts records from"):
            est.estimate_o3_hr(mom, LOCAL1, OBS_Z)
        plain = sample_dataset(cir.plain_rm(RHO1), LOCAL1, 5, 2, seed=1)
        with pytest.raises(ValueError, match="accepts records from"):
            est.estimate_p3_hr(plain, LOCAL1)

    def test_o4_hr_descriptor_mismatch(self):
        v_op, _ = est.make_vo(OBS_Z, 1)
        vo = sample_dataset(cir.controlled_vo(RHO1, v_op), LOCAL1, 5, 2, seed=1)
        mom = sample_dataset(cir.hybrid_moment(RHO1, 2), LOCAL1, 5, 2, seed=999)
        if [r.descriptor for r in vo] != [r.descriptor for r in mom]:
            with pytest.raises(ValueError, match="descriptor"):
                est.estimate_o4_hr(vo, mom, LOCAL1, OBS_Z)
        aligned = sample_dataset(cir.hybrid_moment(RHO1, 2), LOCAL1, 5, 2, seed=1)
        rep = est.estimate_o4_hr(vo, aligned, LOCAL1, OBS_Z)
        assert rep.n_settings == 5

    def test_unequal_shots_rejected(self):
        recs = sample_dataset(cir.hybrid_moment(RHO1, 2), LOCAL1, 4, 2, seed=1)
        with pytest.raises(ValueError, match="unequal"):
            build_shadow_set(recs[:-1], LOCAL1, SnapshotTarget.RHO_POW_T)

    def test_empty_records(self):
        with pytest.raises(ValueError, match="empty"):
            est.estimate_p3_hr([], LOCAL1)
        with pytest.raises(ValueError, match="empty"):
            build_shadow_set([], LOCAL1, SnapshotTarget.RHO)

    def test_swap_mixed_bases_rejected(self):
        fx = sample_dataset(cir.swap_test([RHO1] * 2, None, ControlBasis.X), None, 3, 1, seed=1)
        fy = sample_dataset(cir.swap_test([RHO1] * 2, None, ControlBasis.Y), None, 3, 1, seed=2)
        with pytest.raises(ValueError, match="mix control bases"):
            est.estimate_swap(fx + fy)

    def test_fm_patched_length_mismatch(self):
        spec = cir.hybrid_sigma([RHO1, RHO1], [OBS_Z])
        s = build_shadow_set(sample_dataset(spec, LOCAL1, 5, 1, seed=1), LOCAL1, SnapshotTarget.SIGMA)
        with pytest.raises(ValueError, match="boundary ops"):
            est.estimate_fm_patched([s], [None, None])

    def test_wrong_target_rejected(self):
        shadow = plain_set(RHO1, LOCAL1, 5, 1, seed=1)
        with pytest.raises(ValueError, match="rho_pow_t"):
            est.estimate_ot_hs(shadow)


class TestLargeSettingFallback:
    def test_block_std_error_for_many_settings(self):
        shadow = plain_set(RHO1, LOCAL1, 2200, 1, seed=59)
        rep = est.estimate_pm_os(shadow, 2)
        assert rep.std_error > 0.0
        assert abs(rep.value - exact_moment(RHO1, 2)) < 6.0 * rep.std_error
