"""Simulation and estimation of nonlinear quantum-state functions.

Implements three measurement protocols for moments ``tr(rho^m)``, observable
moments ``tr(O rho^m)`` and general products ``tr(rho_1 O_1 ... rho_m O_m)``:

* hybrid single-copy protocols (one control qubit + one register, randomized
  measurement with a control-sign reweighting),
* pure classical-shadow postprocessing, and
* multi-copy swap tests,

together with exact enumeration oracles, variance/sample-complexity bounds and
a reproducible experiment harness.
"""

from .analysis import (
    bound_ot_hs,
    bound_p3_hr,
    bound_p3_hs_clifford,
    bound_p3_hs_pauli,
    fit_exponent,
    sample_complexity_p3_hs,
)
from .circuits import (
    CircuitFamily,
    CircuitSpec,
    ControlBasis,
    SnapshotRecord,
    controlled_vo,
    distribution_for,
    hybrid_moment,
    hybrid_sigma,
    plain_rm,
    read_records,
    sample_dataset,
    spectral_o,
    swap_test,
    write_records,
)
from .ensembles import EnsembleKind, global_clifford, local_clifford, sample_unitary
from .estimators import (
    EstimateReport,
    ShadowSet,
    SnapshotTarget,
    build_shadow_set,
    estimate_fm_patched,
    estimate_fm_swap,
    estimate_o3_hr,
    estimate_o3_hs,
    estimate_o3_spectral,
    estimate_o4_hr,
    estimate_o4_hs,
    estimate_o4_spectral,
    estimate_om_os,
    estimate_ot_hs,
    estimate_p2_hr,
    estimate_p3_hr,
    estimate_p3_hs,
    estimate_p4_hr,
    estimate_p4_hs,
    estimate_pm_os,
    estimate_swap,
    make_vo,
    spectral_decomposition,
)
from .experiments import (
    ExperimentConfig,
    ResultRow,
    export_csv,
    predicted_cost,
    read_results,
    rms_error_series,
    run_experiment,
    run_oracle_suite,
)
from .qcore import (
    BitString,
    DensityMatrix,
    Observable,
    depolarize,
    exact_general_function,
    exact_moment,
    exact_obs_moment,
    ghz_state,
)
from .streams import substream

__version__ = "0.1.0"

__all__ = [
    "BitString",
    "CircuitFamily",
    "CircuitSpec",
    "ControlBasis",
    "DensityMatrix",
    "EnsembleKind",
    "EstimateReport",
    "ExperimentConfig",
    "Observable",
    "ResultRow",
    "ShadowSet",
    "SnapshotRecord",
    "SnapshotTarget",
    "bound_ot_hs",
    "bound_p3_hr",
    "bound_p3_hs_clifford",
    "bound_p3_hs_pauli",
    "build_shadow_set",
    "controlled_vo",
    "depolarize",
    "distribution_for",
    "estimate_fm_patched",
    "estimate_fm_swap",
    "estimate_o3_hr",
    "estimate_o3_hs",
    "estimate_o3_spectral",
    "estimate_o4_hr",
    "estimate_o4_hs",
    "estimate_o4_spectral",
    "estimate_om_os",
    "estimate_ot_hs",
    "estimate_p2_hr",
    "estimate_p3_hr",
    "estimate_p3_hs",
    "estimate_p4_hr",
    "estimate_p4_hs",
    "estimate_pm_os",
    "estimate_swap",
    "exact_general_function",
    "exact_moment",
    "exact_obs_moment",
    "export_csv",
    "fit_exponent",
    "ghz_state",
    "global_clifford",
    "hybrid_moment",
    "hybrid_sigma",
    "local_clifford",
    "make_vo",
    "plain_rm",
    "predicted_cost",
    "read_records",
    "read_results",
    "rms_error_series",
    "run_experiment",
    "run_oracle_suite",
    "sample_complexity_p3_hs",
    "sample_dataset",
    "sample_unitary",
    "spectral_decomposition",
    "spectral_o",
    "substream",
    "swap_test",
    "write_records",
]
