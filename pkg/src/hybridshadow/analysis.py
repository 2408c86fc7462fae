"""Variance bounds, sample-complexity estimates, and error-scaling fits.

All bound functions return rigorous upper bounds on estimator variances for
the stated protocol/ensemble; they are monotone nonincreasing in the numbers
of settings M and shots K. Scalar state inputs (purity P2, tr(O rho)^2, the
depolarizing weight q) are supplied by the caller — from the exact oracle in
simulations, or from independent estimates on hardware data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ensembles import EnsembleKind, EnsembleTag
from .qcore import Observable

__all__ = [
    "bound_p3_hs_pauli",
    "bound_p3_hs_clifford",
    "bound_p3_hr",
    "sample_complexity_p3_hs",
    "bound_ot_hs",
    "ScalingFit",
    "fit_exponent",
]

LOG2_3 = math.log2(3.0)
LOG25_3 = math.log(3.0) / math.log(2.5)


def _check_p2_m(p2: float, m_settings: int) -> None:
    if not 0.0 < p2 <= 1.0:
        raise ValueError(f"purity P2={p2} outside (0, 1]")
    if m_settings < 1:
        raise ValueError(f"need at least one setting, got M={m_settings}")


def bound_p3_hs_pauli(p2: float, d: int, m_settings: int) -> float:
    """Var(P3_hs) <= P2 [ (d+1)/M + P2 d^3 / M^2 ] for the local primitive."""
    _check_p2_m(p2, m_settings)
    m = float(m_settings)
    return p2 * ((d + 1.0) / m + p2 * float(d) ** 3 / m**2)


def bound_p3_hs_clifford(p2: float, p4: float, d: int, m_settings: int) -> float:
    """Var(P3_hs) <= P2 [ (3 + 4 P2)/(2M) + P2 (9 d^2 + 1)/M^2 ], global primitive.

    ``p4`` is part of the bound interface (the exact variance depends on it)
    but the leading-order closed form used here does not involve it.
    """
    _check_p2_m(p2, m_settings)
    del p4
    m = float(m_settings)
    return p2 * ((3.0 + 4.0 * p2) / (2.0 * m) + p2 * (9.0 * float(d) ** 2 + 1.0) / m**2)


def bound_p3_hr(
    kind: EnsembleKind, d: int, m_settings: int, k_shots: int, q: "float | None" = None
) -> float:
    """Var(P3_hr) bound: 4d/(MK^2) globally; 2 d^{log2 3}/(MK^2) locally.

    For the depolarized-GHZ family with weight ``q``, the refined local form
    M^{-1} K^{-2} [ q^2 (d + d^{log2 3}) + 2 (1 - q^2) d^{log_{2.5} 3} ]
    interpolates between the generic bound (q = 1) and the maximally mixed
    scaling (q = 0).
    """
    if k_shots < 2:
        raise ValueError(f"kernel estimators need K >= 2, got K={k_shots}")
    if m_settings < 1:
        raise ValueError(f"need at least one setting, got M={m_settings}")
    mk2 = float(m_settings) * float(k_shots) ** 2
    if kind.tag is EnsembleTag.GLOBAL_CLIFFORD:
        return 4.0 * d / mk2
    if q is None:
        return 2.0 * float(d) ** LOG2_3 / mk2
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"depolarizing weight q={q} outside [0, 1]")
    mixed = q * q * (d + float(d) ** LOG2_3) + 2.0 * (1.0 - q * q) * float(d) ** LOG25_3
    return mixed / mk2


def sample_complexity_p3_hs(p2: float, d: int, eps: float, delta: float) -> int:
    """Settings M sufficient for |P3_hs - P3| < eps with failure odds delta."""
    if not 0.0 < eps < 1.0 or not 0.0 < delta < 1.0:
        raise ValueError("eps and delta must lie in (0, 1)")
    if not 0.0 < p2 <= 1.0:
        raise ValueError(f"purity P2={p2} outside (0, 1]")
    first = p2 * (d + 1.0) / (eps * eps * delta)
    second = p2 * float(d) ** 1.5 / (eps * math.sqrt(delta))
    return int(math.ceil(2.0 * max(first, second)))


def bound_ot_hs(kind: EnsembleKind, obs: Observable, obs_mean_sq: float, m_settings: int) -> float:
    """Var(tr(O rho_hat^t)) <= M^{-1} [ ||O||_shadow^2 + tr(O rho^t)^2 ].

    The shadow-norm term is 3 tr(O^2) for the global primitive and
    2^{supp(O)} ||O_tilde||_2^2 (traceless part on the support) for the local
    one; ``obs_mean_sq`` is the squared target tr(O rho^t)^2.
    """
    if m_settings < 1:
        raise ValueError(f"need at least one setting, got M={m_settings}")
    if obs_mean_sq < 0.0:
        raise ValueError("squared mean must be nonnegative")
    if kind.tag is EnsembleTag.GLOBAL_CLIFFORD:
        full = obs.embedded(kind.n_qubits)
        norm_sq = 3.0 * float(np.trace(full @ full).real)
    else:
        mat = np.asarray(obs.mat, dtype=np.complex128)
        dim = mat.shape[0]
        tilde = mat - (np.trace(mat) / dim) * np.eye(dim)
        norm_sq = float(dim * np.trace(tilde @ tilde).real)
    return (norm_sq + obs_mean_sq) / float(m_settings)


@dataclass(frozen=True)
class ScalingFit:
    """Least-squares exponent of error ~ d^alpha = 2^{alpha n}."""

    xs: np.ndarray
    ys: np.ndarray
    alpha: float
    r2: float

    def __post_init__(self) -> None:
        if self.xs.size < 4:
            raise ValueError(f"exponent fits need >= 4 points, got {self.xs.size}")
        if not math.isfinite(self.alpha):
            raise ValueError("fitted exponent is not finite")


def fit_exponent(xs, errors) -> ScalingFit:
    """Fit alpha in error ~ 2^{alpha n} by least squares on log2(error)."""
    xs = np.asarray(xs, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    if xs.shape != errors.shape or xs.ndim != 1:
        raise ValueError("xs and errors must be 1-d arrays of equal length")
    if xs.size < 4:
        raise ValueError(f"exponent fits need >= 4 points, got {xs.size}")
    if np.any(errors <= 0.0):
        raise ValueError("errors must be positive to fit a log-log exponent")
    logs = np.log2(errors)
    slope, intercept = np.polyfit(xs, logs, 1)
    fitted = slope * xs + intercept
    ss_res = float(np.sum((logs - fitted) ** 2))
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return ScalingFit(xs=xs, ys=errors, alpha=float(slope), r2=float(r2))
