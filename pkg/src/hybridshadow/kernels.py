"""Pair-sum kernels used by the kernel-based (non-snapshot) estimators.

The two-outcome kernel ``X(b, b')`` replays the inverse-channel contraction
``tr[M^{-1}(U^+|b><b|U) M^{-1}(U^+|b'><b'|U)]`` without materializing matrices:

* global Clifford: ``X = d`` if ``b == b'`` else ``-1``;
* local Clifford:  ``X = 2^{n-h} (-1)^h`` with ``h`` the Hamming distance.

Estimators reduce to sums of ``w_j * X(b_j, b_j') * w'_j'`` over shot pairs
``j != j'`` within a measurement setting (or over all cross-dataset pairs).
Those loops are the only Python-level hot spot of the package, so they get a
compiled backend (``hybridshadow._fastkernels``) with a vectorized NumPy
fallback; set ``HYBRIDSHADOW_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

import numpy as np

from .ensembles import EnsembleKind, EnsembleTag
from .qcore import BitString

try:  # compiled backend is optional
    from . import _fastkernels as _ext
except ImportError:  # pragma: no cover - depends on build environment
    _ext = None

if os.environ.get("HYBRIDSHADOW_PURE_PYTHON", "") == "1":
    _ext = None

BACKEND = "cython" if _ext is not None else "numpy"

# keep the vectorized fallback's K x K scratch below ~100 MB
_CHUNK_ENTRIES = 10_000_000


def kernel_value(kind: EnsembleKind, b1: BitString, b2: BitString) -> float:
    """Two-outcome kernel X(b1, b2) for the given ensemble."""
    n = kind.n_qubits
    if b1.n != n or b2.n != n:
        raise ValueError("outcome length does not match ensemble")
    if kind.tag is EnsembleTag.GLOBAL_CLIFFORD:
        return float(kind.dim) if b1.value == b2.value else -1.0
    h = int(np.bitwise_count(np.uint64(b1.value ^ b2.value)))
    return float((-1.0) ** h * 2.0 ** (n - h))


def _pauli_table(n: int) -> np.ndarray:
    return (2.0**n) * (-0.5) ** np.arange(n + 1)


def _pair_sums_numpy(
    codes: np.ndarray, wj: np.ndarray, wjp: np.ndarray | None, n: int, clifford: bool
) -> np.ndarray:
    m, k = codes.shape
    d = float(1 << n)
    right = np.ones_like(wj) if wjp is None else wjp
    out = np.empty(m, dtype=np.float64)
    step = max(1, _CHUNK_ENTRIES // max(1, k * k))
    table = None if clifford else _pauli_table(n)
    for lo in range(0, m, step):
        hi = min(m, lo + step)
        c = codes[lo:hi]
        if clifford:
            x = np.where(c[:, :, None] == c[:, None, :], d, -1.0)
        else:
            x = table[np.bitwise_count(c[:, :, None] ^ c[:, None, :])]
        full = np.einsum("mj,mjk,mk->m", wj[lo:hi], x, right[lo:hi])
        diag = d * np.einsum("mj,mj->m", wj[lo:hi], right[lo:hi])
        out[lo:hi] = full - diag
    return out


def _cross_sums_numpy(
    codes_a: np.ndarray,
    wa: np.ndarray,
    codes_b: np.ndarray,
    wb: np.ndarray,
    n: int,
    clifford: bool,
) -> np.ndarray:
    m, ka = codes_a.shape
    kb = codes_b.shape[1]
    d = float(1 << n)
    out = np.empty(m, dtype=np.float64)
    step = max(1, _CHUNK_ENTRIES // max(1, ka * kb))
    table = None if clifford else _pauli_table(n)
    for lo in range(0, m, step):
        hi = min(m, lo + step)
        if clifford:
            x = np.where(codes_a[lo:hi, :, None] == codes_b[lo:hi, None, :], d, -1.0)
        else:
            x = table[np.bitwise_count(codes_a[lo:hi, :, None] ^ codes_b[lo:hi, None, :])]
        out[lo:hi] = np.einsum("mj,mjk,mk->m", wa[lo:hi], x, wb[lo:hi])
    return out


def _prep(codes: np.ndarray, w: np.ndarray | None) -> tuple[np.ndarray, np.ndarray | None]:
    c = np.ascontiguousarray(codes, dtype=np.int64)
    if w is None:
        return c, None
    return c, np.ascontiguousarray(w, dtype=np.float64)


def pair_sums(
    codes: np.ndarray,
    wj: np.ndarray,
    wjp: np.ndarray | None,
    n: int,
    clifford: bool,
) -> np.ndarray:
    """Per-setting sums over ordered shot pairs j != j'.

    ``codes``/``wj``/``wjp`` are (M, K) arrays of packed outcomes and weights;
    returns the length-M vector ``sum_{j != j'} wj[i,j] X(b_ij, b_ij') wjp[i,j']``
    (``wjp=None`` means unit right weights).
    """
    codes, wj = _prep(codes, wj)
    if wj.shape != codes.shape:
        raise ValueError("weight shape does not match codes")
    if wjp is not None:
        _, wjp = _prep(codes, wjp)
        if wjp.shape != codes.shape:
            raise ValueError("right weight shape does not match codes")
    if codes.shape[1] < 2:
        return np.zeros(codes.shape[0], dtype=np.float64)
    if _ext is not None:
        right = np.ones_like(wj) if wjp is None else wjp
        out = np.empty(codes.shape[0], dtype=np.float64)
        _ext.pair_sums(codes, wj, right, n, clifford, out)
        return out
    return _pair_sums_numpy(codes, wj, wjp, n, clifford)


def cross_sums(
    codes_a: np.ndarray,
    wa: np.ndarray,
    codes_b: np.ndarray,
    wb: np.ndarray,
    n: int,
    clifford: bool,
) -> np.ndarray:
    """Per-setting sums over all cross-dataset shot pairs (aligned settings)."""
    codes_a, wa = _prep(codes_a, wa)
    codes_b, wb = _prep(codes_b, wb)
    if codes_a.shape[0] != codes_b.shape[0]:
        raise ValueError("datasets have different setting counts")
    if wa.shape != codes_a.shape or wb.shape != codes_b.shape:
        raise ValueError("weight shapes do not match codes")
    if _ext is not None:
        out = np.empty(codes_a.shape[0], dtype=np.float64)
        _ext.cross_sums(codes_a, wa, codes_b, wb, n, clifford, out)
        return out
    return _cross_sums_numpy(codes_a, wa, codes_b, wb, n, clifford)
