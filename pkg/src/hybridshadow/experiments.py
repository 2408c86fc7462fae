"""Config-driven experiment sweeps, enumeration oracle suite, and CSV results.

An :class:`ExperimentConfig` describes one Monte Carlo sweep: a noisy-GHZ
state family over a range of qubit counts, one target quantity, and a set of
measurement protocols.  :func:`run_experiment` samples ``trials`` independent
datasets per (protocol, n) cell, runs the matching estimator, and returns one
:class:`ResultRow` per trial with the exact dense-oracle value alongside the
estimate.  Per-cell errors are summarized downstream as the root-mean-square
of (estimate - exact) over trials (:func:`rms_error_series`).

Config files are flat ``key = value`` text; see :data:`CONFIG_KEYS` for the
recognized keys.  Example::

    quantity   = P3
    protocols  = HS, HR, OS
    n_values   = 2..6
    q          = 0.8
    ensemble   = local_clifford
    m_settings = 10
    k_shots    = 1
    trials     = 100
    seed       = 7
    out        = results.csv

Determinism: every (protocol, n, trial) task derives its dataset seeds from a
dedicated counter-based substream, so results are independent of worker-thread
count and byte-identical CSVs come out of repeated runs with the same config.
Wall-clock timings are measured but written as 0.0 unless ``timing = on``,
since real timings would break that byte-level reproducibility.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from . import estimators as est
from .circuits import (
    CircuitFamily,
    SnapshotRecord,
    controlled_vo,
    hybrid_moment,
    hybrid_sigma,
    plain_rm,
    read_records,
    sample_dataset,
    swap_test,
)
from .ensembles import EnsembleKind, global_clifford, local_clifford
from .estimators import EstimateReport, SnapshotTarget, build_shadow_set
from .exact import expected_estimate, expected_kernel_pair, expected_snapshot_matrix
from .qcore import (
    DensityMatrix,
    Observable,
    depolarize,
    exact_moment,
    exact_obs_moment,
    ghz_state,
    matrix_power,
)
from .streams import TAG_TRIAL, substream

PROTOCOLS = ("HS", "HR", "OS", "SwapTest")
QUANTITIES = ("P2", "P3", "P4", "o2", "o3", "o4", "F2_fidelity")
ENSEMBLES = ("local_clifford", "global_clifford")

_PROTOCOL_CODES = {name: code for code, name in enumerate(PROTOCOLS)}
_QUANTITY_ORDER = {
    "P2": 2,
    "P3": 3,
    "P4": 4,
    "o2": 2,
    "o3": 3,
    "o4": 4,
    "F2_fidelity": 2,
}
_OBS_QUANTITIES = ("o2", "o3", "o4", "F2_fidelity")

DEFAULT_BUDGET = 1e10

CSV_HEADER = "protocol,quantity,n,d,M,K,trial,estimate,exact,abs_error,std_error,wall_time,seed"


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


def _parse_int_list(text: str) -> "tuple[int, ...]":
    """``"2,3,5"`` or ``"2..7"`` (inclusive range) -> tuple of ints."""
    text = text.strip()
    if ".." in text:
        lo_s, hi_s = text.split("..", 1)
        lo, hi = int(lo_s), int(hi_s)
        if hi < lo:
            raise ValueError(f"empty range {text!r}")
        return tuple(range(lo, hi + 1))
    return tuple(int(tok) for tok in text.split(",") if tok.strip())


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "on", "yes"):
        return True
    if low in ("0", "false", "off", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep: state family x protocols x quantity, with sampling sizes."""

    quantity: str
    protocols: "tuple[str, ...]"
    n_values: "tuple[int, ...]"
    m_settings: int = 10
    k_shots: int = 1
    trials: int = 100
    seed: int = 0
    state: str = "ghz_noisy"
    q: float = 0.8
    ensemble: str = "local_clifford"
    observable: "str | None" = None
    hs_mode: str = "single"
    budget: float = DEFAULT_BUDGET
    out: "str | None" = None
    timing: bool = False

    def __post_init__(self):
        if self.quantity not in QUANTITIES:
            raise ValueError(f"unknown quantity {self.quantity!r}; choose from {QUANTITIES}")
        if not self.protocols:
            raise ValueError("at least one protocol is required")
        for p in self.protocols:
            if p not in PROTOCOLS:
                raise ValueError(f"unknown protocol {p!r}; choose from {PROTOCOLS}")
        if len(set(self.protocols)) != len(self.protocols):
            raise ValueError("duplicate protocol")
        if not self.n_values:
            raise ValueError("n_values must be nonempty")
        if any(int(n) != n or n < 1 for n in self.n_values):
            raise ValueError(f"qubit counts must be positive integers, got {self.n_values}")
        if self.m_settings < 1 or self.k_shots < 1 or self.trials < 1:
            raise ValueError("m_settings, k_shots, and trials must all be >= 1")
        if self.state != "ghz_noisy":
            raise ValueError(f"unknown state family {self.state!r} (supported: ghz_noisy)")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"q={self.q} outside [0, 1]")
        if self.ensemble not in ENSEMBLES:
            raise ValueError(f"unknown ensemble {self.ensemble!r}; choose from {ENSEMBLES}")
        if self.hs_mode not in ("single", "two"):
            raise ValueError(f"hs_mode must be 'single' or 'two', got {self.hs_mode!r}")
        if self.budget <= 0:
            raise ValueError("budget must be positive")
        needs_obs = self.quantity in _OBS_QUANTITIES
        if needs_obs and self.observable is None and self.quantity != "F2_fidelity":
            raise ValueError(f"quantity {self.quantity} requires an observable spec")
        if not needs_obs and self.observable is not None:
            raise ValueError(f"quantity {self.quantity} does not take an observable")
        if self.observable is not None:
            _parse_observable_spec(self.observable)  # validate syntax early

    @classmethod
    def from_mapping(cls, raw: "dict[str, str]") -> "ExperimentConfig":
        """Build from string key/value pairs (the config-file representation)."""
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        missing = [key for key in ("quantity", "protocols", "n_values") if key not in raw]
        if missing:
            raise ValueError(f"missing required config keys: {', '.join(missing)}")
        kwargs: "dict[str, object]" = {}
        for key, text in raw.items():
            text = text.strip()
            if key == "protocols":
                kwargs[key] = tuple(tok.strip() for tok in text.split(",") if tok.strip())
            elif key == "n_values":
                kwargs[key] = _parse_int_list(text)
            elif key in ("m_settings", "k_shots", "trials", "seed"):
                kwargs[key] = int(text)
            elif key in ("q", "budget"):
                kwargs[key] = float(text)
            elif key == "timing":
                kwargs[key] = _parse_bool(text)
            elif key == "observable" and text.lower() == "none":
                kwargs[key] = None
            else:
                kwargs[key] = text
        return cls(**kwargs)  # type: ignore[arg-type]

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        raw: "dict[str, str]" = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                stripped = line.strip()
                if not stripped or stripped.startswith("#"):
                    continue
                if "=" not in stripped:
                    raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line.rstrip()!r}")
                key, _, value = stripped.partition("=")
                key = key.strip()
                if key in raw:
                    raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
                raw[key] = value.strip()
        return cls.from_mapping(raw)


CONFIG_KEYS = tuple(f.name for f in fields(ExperimentConfig))


def _parse_observable_spec(spec: str) -> "tuple[str, tuple]":
    """Parse ``pauli:<letters>[:q0,q1,...]`` or ``ghz_projector``."""
    spec = spec.strip()
    if spec == "ghz_projector":
        return ("ghz_projector", ())
    if spec.startswith("pauli:"):
        parts = spec.split(":")
        if len(parts) not in (2, 3) or not parts[1]:
            raise ValueError(f"malformed pauli observable spec {spec!r}")
        letters = parts[1].upper()
        if any(ch not in "IXYZ" for ch in letters):
            raise ValueError(f"pauli letters must be from IXYZ, got {parts[1]!r}")
        if len(parts) == 3:
            support = tuple(int(tok) for tok in parts[2].split(",") if tok.strip())
            if len(support) != len(letters):
                raise ValueError(f"support length {len(support)} != {len(letters)} letters")
        else:
            support = tuple(range(len(letters)))
        return ("pauli", (letters, support))
    raise ValueError(f"unknown observable spec {spec!r} (use pauli:...:... or ghz_projector)")


def state_for(config: ExperimentConfig, n: int) -> DensityMatrix:
    """The configured state at ``n`` qubits (noisy GHZ: q*rho_GHZ + (1-q)I/d)."""
    return depolarize(ghz_state(n), config.q)


def ensemble_for(config: ExperimentConfig, n: int) -> EnsembleKind:
    return local_clifford(n) if config.ensemble == "local_clifford" else global_clifford(n)


def observable_for(config: ExperimentConfig, n: int) -> "Observable | None":
    """Resolve the observable spec at ``n`` qubits (None for pure moments)."""
    spec = config.observable
    if spec is None:
        if config.quantity == "F2_fidelity":
            spec = "ghz_projector"
        else:
            return None
    name, payload = _parse_observable_spec(spec)
    if name == "ghz_projector":
        return Observable(ghz_state(n).mat, tuple(range(n)))
    letters, support = payload
    if max(support) >= n:
        raise ValueError(f"observable support {support} does not fit on {n} qubits")
    return Observable.from_pauli(letters, support)


# ---------------------------------------------------------------------------
# Result rows and CSV
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ResultRow:
    """One estimator run: identity, estimate vs exact, and uncertainty."""

    protocol: str
    quantity: str
    n: int
    d: int
    m_settings: int
    k_shots: int
    trial: int
    estimate: float
    exact: float
    abs_error: float
    std_error: float
    wall_time: float
    seed: int

    def __post_init__(self):
        if self.abs_error != abs(self.estimate - self.exact):
            raise ValueError("abs_error must equal |estimate - exact|")

    def to_csv_line(self) -> str:
        return ",".join(
            [
                self.protocol,
                self.quantity,
                str(self.n),
                str(self.d),
                str(self.m_settings),
                str(self.k_shots),
                str(self.trial),
                repr(self.estimate),
                repr(self.exact),
                repr(self.abs_error),
                repr(self.std_error),
                repr(self.wall_time),
                str(self.seed),
            ]
        )

    @classmethod
    def from_csv_line(cls, line: str) -> "ResultRow":
        parts = line.rstrip("\n").split(",")
        if len(parts) != 13:
            raise ValueError(f"expected 13 fields, got {len(parts)}")
        return cls(
            protocol=parts[0],
            quantity=parts[1],
            n=int(parts[2]),
            d=int(parts[3]),
            m_settings=int(parts[4]),
            k_shots=int(parts[5]),
            trial=int(parts[6]),
            estimate=float(parts[7]),
            exact=float(parts[8]),
            abs_error=float(parts[9]),
            std_error=float(parts[10]),
            wall_time=float(parts[11]),
            seed=int(parts[12]),
        )


def export_csv(rows: "list[ResultRow]", path: str) -> None:
    """Write rows under the fixed header; floats use shortest round-trip repr."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(row.to_csv_line() + "\n")


def read_results(path: str, config: "ExperimentConfig | None" = None) -> "list[ResultRow]":
    """Load a results CSV; with a config, revalidate every exact field.

    Revalidation recomputes the dense-oracle value for each row's (quantity, n)
    cell and fails loudly on any mismatch, so a stale or edited CSV cannot be
    silently analyzed against the wrong ground truth.
    """
    rows: "list[ResultRow]" = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != CSV_HEADER:
            raise ValueError(f"{path}:1: bad header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rows.append(ResultRow.from_csv_line(line))
            except ValueError as err:
                raise ValueError(f"{path}:{lineno}: {err}") from err
    if config is not None:
        oracle = {n: _exact_value(config, n) for n in {row.n for row in rows}}
        for row in rows:
            if not math.isclose(row.exact, oracle[row.n], rel_tol=0.0, abs_tol=1e-12):
                raise ValueError(
                    f"{path}: row (protocol={row.protocol}, n={row.n}, trial={row.trial}) "
                    f"has exact={row.exact!r}, oracle gives {oracle[row.n]!r}"
                )
    return rows


def import_dataset(path: str) -> "list[SnapshotRecord]":
    """Load a snapshot-record dataset (JSON-lines; malformed lines are located)."""
    return read_records(path)


# ---------------------------------------------------------------------------
# Estimator dispatch
# ---------------------------------------------------------------------------


def _exact_value(config: ExperimentConfig, n: int) -> float:
    rho = state_for(config, n)
    m = _QUANTITY_ORDER[config.quantity]
    if config.quantity == "F2_fidelity":
        obs = observable_for(config, n)
        return exact_obs_moment(rho, obs, 2) / exact_moment(rho, 2)
    if config.quantity.startswith("P"):
        return exact_moment(rho, m)
    return exact_obs_moment(rho, obs=observable_for(config, n), m=m)


def _ratio_report(num: EstimateReport, den: EstimateReport, seed: int, protocol: str) -> EstimateReport:
    """Ratio of two estimates with a bootstrap (joint when both expose
    per-setting values of equal length, first-order propagation otherwise)."""
    if den.value == 0.0:
        raise ValueError("ratio estimate undefined: denominator estimate is zero")
    value = num.value / den.value
    joint = (
        num.per_setting is not None
        and den.per_setting is not None
        and num.per_setting.size == den.per_setting.size
        and num.per_setting.size >= 2
    )
    if joint:
        idx = est._bootstrap_indices(num.per_setting.size, seed)
        with np.errstate(divide="ignore", invalid="ignore"):
            boots = num.per_setting[idx].mean(axis=1) / den.per_setting[idx].mean(axis=1)
        finite = boots[np.isfinite(boots)]
        se = float(np.std(finite, ddof=1)) if finite.size > 1 else 0.0
    else:
        rel_sq = 0.0
        for rep in (num, den):
            rel_sq += (rep.std_error / rep.value) ** 2 if rep.value != 0.0 else 0.0
        se = abs(value) * math.sqrt(rel_sq)
    return EstimateReport(float(value), num.n_settings, num.k_shots, se, protocol)


def _circuit_plan(config: ExperimentConfig, protocol: str, rho: DensityMatrix, obs: "Observable | None"):
    """The datasets and estimator for one (protocol, quantity) combination.

    Returns ``(specs, estimate)`` where ``specs`` is a list of
    ``(CircuitSpec, seed_slot)`` pairs — equal slots mean the datasets share
    per-setting unitaries (sampled with the same seed) — and
    ``estimate(datasets, kind, seed)`` maps the sampled record lists to an
    :class:`EstimateReport`.
    """
    quantity = config.quantity
    m = _QUANTITY_ORDER[quantity]
    n = rho.n_qubits

    def bad_combo():
        return ValueError(f"protocol {protocol} does not implement quantity {quantity}")

    if protocol == "HS":
        set2_spec = hybrid_moment(rho, 2)
        if quantity in ("P2", "o2"):
            def run(datasets, kind, seed):
                set2 = build_shadow_set(datasets[0], kind, SnapshotTarget.RHO_POW_T)
                return est.estimate_ot_hs(set2, obs)
            return [(set2_spec, 0)], run
        if quantity in ("P3", "o3"):
            two = config.hs_mode == "two"
            specs = [(set2_spec, 0)] + ([(plain_rm(rho), 1)] if two else [])

            def run(datasets, kind, seed):
                set2 = build_shadow_set(datasets[0], kind, SnapshotTarget.RHO_POW_T)
                set1 = build_shadow_set(datasets[1], kind, SnapshotTarget.RHO) if two else None
                return est.estimate_o3_hs(set2, set1, obs)
            return specs, run
        if quantity in ("P4", "o4"):
            def run(datasets, kind, seed):
                set2 = build_shadow_set(datasets[0], kind, SnapshotTarget.RHO_POW_T)
                return est.estimate_o4_hs(set2, obs)
            return [(set2_spec, 0)], run
        if quantity == "F2_fidelity":
            def run(datasets, kind, seed):
                set2 = build_shadow_set(datasets[0], kind, SnapshotTarget.RHO_POW_T)
                num = est.estimate_ot_hs(set2, obs)
                den = est.estimate_ot_hs(set2)
                return _ratio_report(num, den, seed, "HS")
            return [(set2_spec, 0)], run
        raise bad_combo()

    if protocol == "HR":
        if config.k_shots < 2:
            raise ValueError("HR estimators pair shots within a setting and need k_shots >= 2")
        if quantity == "P2":
            def run(datasets, kind, seed):
                return est.estimate_p2_hr(datasets[0], kind)
            return [(plain_rm(rho), 0)], run
        if quantity == "P3":
            def run(datasets, kind, seed):
                return est.estimate_p3_hr(datasets[0], kind)
            return [(hybrid_moment(rho, 2), 0)], run
        if quantity == "P4":
            def run(datasets, kind, seed):
                return est.estimate_p4_hr(datasets[0], kind)
            return [(hybrid_moment(rho, 2), 0)], run
        if quantity == "o3":
            v_op, _ = est.make_vo(obs, n)

            def run(datasets, kind, seed):
                return est.estimate_o3_hr(datasets[0], kind, obs)
            return [(controlled_vo(rho, v_op), 0)], run
        if quantity == "o4":
            v_op, _ = est.make_vo(obs, n)
            # same seed slot: the two circuits share per-setting unitaries
            specs = [(controlled_vo(rho, v_op), 0), (hybrid_moment(rho, 2), 0)]

            def run(datasets, kind, seed):
                return est.estimate_o4_hr(datasets[0], datasets[1], kind, obs)
            return specs, run
        raise bad_combo()

    if protocol == "OS":
        plain_spec = plain_rm(rho)

        def run(datasets, kind, seed):
            shadow = build_shadow_set(datasets[0], kind, SnapshotTarget.RHO)
            if quantity == "F2_fidelity":
                num = est.estimate_om_os(shadow, obs, 2)
                den = est.estimate_pm_os(shadow, 2)
                return _ratio_report(num, den, seed, "OS")
            if obs is None:
                return est.estimate_pm_os(shadow, m)
            return est.estimate_om_os(shadow, obs, m)
        return [(plain_spec, 0)], run

    if protocol == "SwapTest":
        if quantity == "F2_fidelity":
            specs = [
                (swap_test([rho, rho], [obs, None]), 0),
                (swap_test([rho, rho]), 1),
            ]

            def run(datasets, kind, seed):
                num = est.estimate_swap(datasets[0])
                den = est.estimate_swap(datasets[1])
                return _ratio_report(num, den, seed, "SwapTest")
            return specs, run
        ops = [obs] + [None] * (m - 1) if obs is not None else None
        spec = swap_test([rho] * m, ops)

        def run(datasets, kind, seed):
            return est.estimate_swap(datasets[0])
        return [(spec, 0)], run

    raise ValueError(f"unknown protocol {protocol!r}")


def _task_cost(config: ExperimentConfig, protocol: str, n: int) -> float:
    """Predicted per-trial cost: datasets x settings x shots x register dim^2."""
    m = _QUANTITY_ORDER[config.quantity]
    if protocol == "SwapTest":
        dim = 2.0 ** (m * n)
        n_datasets = 2 if config.quantity == "F2_fidelity" else 1
    else:
        dim = 2.0**n
        n_datasets = 1
        if protocol == "HR" and config.quantity == "o4":
            n_datasets = 2
        if protocol == "HS" and config.hs_mode == "two" and config.quantity in ("P3", "o3"):
            n_datasets = 2
    return n_datasets * config.m_settings * config.k_shots * dim * dim


def predicted_cost(config: ExperimentConfig) -> float:
    """Total predicted cost of the sweep under the settings x shots x d^2 model."""
    return float(
        sum(
            _task_cost(config, protocol, n) * config.trials
            for protocol in config.protocols
            for n in config.n_values
        )
    )


def sample_trial(
    config: ExperimentConfig, protocol: str, n: int, trial: int = 0
) -> "tuple[list[list[SnapshotRecord]], int]":
    """Sample the dataset(s) one sweep task would use (same seeds, same order).

    Returns ``(datasets, first_seed)``.  A dataset persisted from here and fed
    back through :func:`estimate_from_records` reproduces the matching
    :func:`run_experiment` row exactly.
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}; choose from {PROTOCOLS}")
    gen = substream(config.seed, TAG_TRIAL, i=n, j=trial, extra=_PROTOCOL_CODES[protocol])
    slot_seeds = [int(s) for s in gen.integers(0, 2**63 - 1, size=4)]
    rho = state_for(config, n)
    kind = ensemble_for(config, n)
    obs = observable_for(config, n)
    specs, _ = _circuit_plan(config, protocol, rho, obs)
    datasets = []
    for spec, slot in specs:
        dataset_kind = None if spec.family is CircuitFamily.SWAP_TEST else kind
        datasets.append(
            sample_dataset(spec, dataset_kind, config.m_settings, config.k_shots, slot_seeds[slot])
        )
    return datasets, slot_seeds[0]


def estimate_from_records(
    config: ExperimentConfig,
    protocol: str,
    datasets: "list[list[SnapshotRecord]]",
    n: int,
) -> "tuple[EstimateReport, float]":
    """Run the configured estimator on already-sampled datasets.

    ``datasets`` must match the circuit plan of (protocol, quantity) in count
    and order (e.g. HR/o4 takes [controlled-VO records, moment records]).
    Returns ``(report, exact)`` with the dense-oracle value alongside.
    """
    rho = state_for(config, n)
    kind = ensemble_for(config, n)
    obs = observable_for(config, n)
    specs, run = _circuit_plan(config, protocol, rho, obs)
    if len(datasets) != len(specs):
        raise ValueError(
            f"{protocol}/{config.quantity} needs {len(specs)} dataset(s), got {len(datasets)}"
        )
    for records, (spec, _) in zip(datasets, specs):
        if not records:
            raise ValueError("empty record list")
        if records[0].family is not spec.family:
            raise ValueError(
                f"dataset family {records[0].family.value} does not match the "
                f"planned circuit {spec.family.value}"
            )
    seed = datasets[0][0].seed
    report = run(datasets, kind, seed)
    return report, _exact_value(config, n)


def _run_task(config: ExperimentConfig, protocol: str, n: int, trial: int) -> ResultRow:
    started = time.perf_counter()
    gen = substream(config.seed, TAG_TRIAL, i=n, j=trial, extra=_PROTOCOL_CODES[protocol])
    slot_seeds = [int(s) for s in gen.integers(0, 2**63 - 1, size=4)]
    rho = state_for(config, n)
    kind = ensemble_for(config, n)
    obs = observable_for(config, n)
    specs, run = _circuit_plan(config, protocol, rho, obs)
    datasets = []
    for spec, slot in specs:
        dataset_kind = None if spec.family is CircuitFamily.SWAP_TEST else kind
        datasets.append(
            sample_dataset(spec, dataset_kind, config.m_settings, config.k_shots, slot_seeds[slot])
        )
    report = run(datasets, kind, slot_seeds[0])
    estimate = float(report.value)
    exact = _exact_value(config, n)
    elapsed = time.perf_counter() - started
    return ResultRow(
        protocol=protocol,
        quantity=config.quantity,
        n=n,
        d=2**n,
        m_settings=report.n_settings,
        k_shots=report.k_shots,
        trial=trial,
        estimate=estimate,
        exact=exact,
        abs_error=abs(estimate - exact),
        std_error=report.std_error,
        wall_time=elapsed if config.timing else 0.0,
        seed=slot_seeds[0],
    )


def run_experiment(config: ExperimentConfig, threads: int = 1) -> "list[ResultRow]":
    """Run the configured sweep; rows come back in a deterministic order.

    ``threads`` parallelizes over (protocol, n, trial) tasks.  Each task owns
    counter-based RNG substreams keyed by its coordinates, so the output is
    identical for any thread count.
    """
    if threads < 1:
        raise ValueError("threads must be >= 1")
    cost = predicted_cost(config)
    if cost > config.budget:
        raise ValueError(
            f"predicted cost {cost:.3e} exceeds budget {config.budget:.3e}; "
            "reduce n_values/m_settings/trials or raise the budget"
        )
    # fail fast on invalid combinations before any sampling
    probe_n = config.n_values[0]
    for protocol in config.protocols:
        _circuit_plan(config, protocol, state_for(config, probe_n), observable_for(config, probe_n))
    tasks = [
        (protocol, n, trial)
        for protocol in config.protocols
        for n in config.n_values
        for trial in range(config.trials)
    ]
    if threads == 1:
        rows = [_run_task(config, *task) for task in tasks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda task: _run_task(config, *task), tasks))
    rows.sort(key=lambda r: (r.protocol, r.quantity, r.n, r.m_settings, r.k_shots, r.trial))
    return rows


def rms_error_series(rows: "list[ResultRow]", protocol: str) -> "tuple[list[int], list[float]]":
    """Per-n root-mean-square of (estimate - exact) for one protocol."""
    by_n: "dict[int, list[float]]" = {}
    for row in rows:
        if row.protocol == protocol:
            by_n.setdefault(row.n, []).append(row.abs_error)
    ns = sorted(by_n)
    if not ns:
        raise ValueError(f"no rows for protocol {protocol!r}")
    errors = [math.sqrt(math.fsum(e * e for e in by_n[n]) / len(by_n[n])) for n in ns]
    return ns, errors


# ---------------------------------------------------------------------------
# Oracle suite
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OracleCheck:
    """One enumeration identity: an estimator/builder vs its exact target."""

    name: str
    ensemble: str
    deviation: float

    def line(self, tolerance: float) -> str:
        status = "PASS" if self.deviation < tolerance else "FAIL"
        return f"[{status}] {self.name:<28s} {self.ensemble:<16s} max deviation {self.deviation:.3e}"


@dataclass(frozen=True)
class OracleReport:
    checks: "tuple[OracleCheck, ...]"
    tolerance: float = 1e-9

    @property
    def passed(self) -> bool:
        return all(c.deviation < self.tolerance for c in self.checks)

    @property
    def failures(self) -> "tuple[OracleCheck, ...]":
        return tuple(c for c in self.checks if c.deviation >= self.tolerance)

    def lines(self) -> "list[str]":
        out = [c.line(self.tolerance) for c in self.checks]
        verdict = "all checks passed" if self.passed else f"{len(self.failures)} check(s) FAILED"
        out.append(f"oracle suite: {verdict} ({len(self.checks)} checks, tolerance {self.tolerance:g})")
        return out


def _suite_state(n: int, q: float) -> DensityMatrix:
    if n == 1:
        # a state with all Bloch components nonzero, so nothing cancels
        mat = 0.5 * np.array([[1.25, 0.3 + 0.2j], [0.3 - 0.2j, 0.75]], dtype=np.complex128)
        return DensityMatrix(mat)
    return depolarize(ghz_state(n), q)


def run_oracle_suite(max_n: int = 2, q: float = 0.8) -> OracleReport:
    """Exact-enumeration unbiasedness checks for every snapshot builder and
    estimator family, at n=1 (both ensembles) and n=2 (local ensemble).

    Snapshot builders and estimators are resolved through the module at call
    time, so a corrupted implementation is caught and named.
    """
    if not 1 <= max_n <= 2:
        raise ValueError("max_n must be 1 or 2 (full ensemble enumeration)")
    checks: "list[OracleCheck]" = []

    def add(name: str, kind: EnsembleKind, deviation: float) -> None:
        checks.append(OracleCheck(name, kind.tag.value, float(deviation)))

    def mat_dev(actual: np.ndarray, target: np.ndarray) -> float:
        return float(np.max(np.abs(actual - target)))

    for n in range(1, max_n + 1):
        rho = _suite_state(n, q)
        z0 = Observable.from_pauli("Z", (0,))
        kinds = [local_clifford(n)] + ([global_clifford(n)] if n == 1 else [])
        for kind in kinds:
            # --- snapshot builders (estimator route, expectation over records)
            add(
                "snapshot_rho",
                kind,
                mat_dev(expected_snapshot_matrix(plain_rm(rho), kind, est.snapshot_rho), rho.mat),
            )
            for t in (2, 3):
                add(
                    f"snapshot_rho_pow_t[t={t}]",
                    kind,
                    mat_dev(
                        expected_snapshot_matrix(hybrid_moment(rho, t), kind, est.snapshot_rho_pow_t),
                        matrix_power(rho.mat, t),
                    ),
                )
            sigma_spec = hybrid_sigma([rho, rho], [z0])
            sigma_target = rho.mat @ z0.embedded(n) @ rho.mat
            add(
                "snapshot_sigma",
                kind,
                mat_dev(expected_snapshot_matrix(sigma_spec, kind, est.snapshot_sigma), sigma_target),
            )

            # --- pair-kernel identities (formula route, independent of sampling)
            rho2 = matrix_power(rho.mat, 2)
            z_full = z0.embedded(n)
            add("kernel_pair[P3]", kind, abs(expected_kernel_pair(kind, rho2, rho.mat) - exact_moment(rho, 3)))
            add("kernel_pair[P4]", kind, abs(expected_kernel_pair(kind, rho2, rho2) - exact_moment(rho, 4)))
            add(
                "kernel_pair[o3]",
                kind,
                abs(expected_kernel_pair(kind, rho.mat @ z_full @ rho.mat, rho.mat) - exact_obs_moment(rho, z0, 3)),
            )

            # --- full estimators on enumerated datasets
            add(
                "estimate_p3_hr",
                kind,
                abs(
                    expected_estimate(
                        hybrid_moment(rho, 2), kind, lambda recs: est.estimate_p3_hr(recs, kind).value
                    )
                    - exact_moment(rho, 3)
                ),
            )
            add(
                "estimate_p4_hr",
                kind,
                abs(
                    expected_estimate(
                        hybrid_moment(rho, 2), kind, lambda recs: est.estimate_p4_hr(recs, kind).value
                    )
                    - exact_moment(rho, 4)
                ),
            )
            v_op, _ = est.make_vo(z0, n)
            add(
                "estimate_o3_hr",
                kind,
                abs(
                    expected_estimate(
                        controlled_vo(rho, v_op), kind, lambda recs: est.estimate_o3_hr(recs, kind, z0).value
                    )
                    - exact_obs_moment(rho, z0, 3)
                ),
            )
            add(
                "estimate_ot_hs[t=2]",
                kind,
                abs(
                    expected_estimate(
                        hybrid_moment(rho, 2),
                        kind,
                        lambda recs: est.estimate_ot_hs(
                            build_shadow_set(recs, kind, SnapshotTarget.RHO_POW_T)
                        ).value,
                        n_settings=1,
                        k_shots=1,
                    )
                    - exact_moment(rho, 2)
                ),
            )
            add(
                "estimate_pm_os[m=2]",
                kind,
                abs(
                    expected_estimate(
                        plain_rm(rho),
                        kind,
                        lambda recs: est.estimate_pm_os(
                            build_shadow_set(recs, kind, SnapshotTarget.RHO), 2
                        ).value,
                        n_settings=2,
                        k_shots=1,
                    )
                    - exact_moment(rho, 2)
                ),
            )
    return OracleReport(tuple(checks))
