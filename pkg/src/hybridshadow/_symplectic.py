"""Uniform sampling and indexing of Sp(2n, F_2), the binary symplectic group.

Implements the Koenig-Smolin canonical bijection between [0, |Sp(2n,2)|) and
group elements, which gives exactly uniform sampling and cheap exhaustive
enumeration for small n. Vectors use the *interleaved* coordinate convention
(x_1, z_1, x_2, z_2, ...) internally; callers converting to a stabilizer
tableau permute to blocked (x | z) order.
"""

from __future__ import annotations

import numpy as np


def symplectic_inner(v: np.ndarray, w: np.ndarray) -> int:
    """Symplectic form <v, w> = sum_i v_2i w_2i+1 + v_2i+1 w_2i (mod 2)."""
    return int((np.dot(v[0::2], w[1::2]) + np.dot(v[1::2], w[0::2])) % 2)


def transvection(k: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Z_k(v) = v + <k, v> k over F_2."""
    return (v + symplectic_inner(k, v) * k) % 2


def _int_to_bits(i: int, n: int) -> np.ndarray:
    return np.array([(i >> j) & 1 for j in range(n)], dtype=np.int8)


def find_transvection(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Vectors (h1, h2) with y = Z_h1 Z_h2 x, for nonzero x, y.

    A transvection pair mapping x to y always exists: one transvection
    suffices when <x, y> = 1, otherwise two chained through a midpoint.
    """
    nn = x.size
    out = np.zeros((2, nn), dtype=np.int8)
    if np.array_equal(x, y):
        return out
    if symplectic_inner(x, y) == 1:
        out[0] = (x + y) % 2
        return out

    z = np.zeros(nn, dtype=np.int8)
    for i in range(nn >> 1):
        ii = 2 * i
        if (x[ii] + x[ii + 1]) != 0 and (y[ii] + y[ii + 1]) != 0:
            # pair where both are non-00
            z[ii] = (x[ii] + y[ii]) % 2
            z[ii + 1] = (x[ii + 1] + y[ii + 1]) % 2
            if (z[ii] + z[ii + 1]) == 0:  # equal on this pair
                z[ii + 1] = 1
                if x[ii] != x[ii + 1]:
                    z[ii] = 1
            out[0] = (x + z) % 2
            out[1] = (y + z) % 2
            return out

    # otherwise go through 00 pairs of y then of x
    for i in range(nn >> 1):
        ii = 2 * i
        if (x[ii] + x[ii + 1]) != 0 and (y[ii] + y[ii + 1]) == 0:
            if x[ii] == x[ii + 1]:
                z[ii + 1] = 1
            else:
                z[ii + 1] = x[ii]
                z[ii] = x[ii + 1]
            break
    for i in range(nn >> 1):
        ii = 2 * i
        if (x[ii] + x[ii + 1]) == 0 and (y[ii] + y[ii + 1]) != 0:
            if y[ii] == y[ii + 1]:
                z[ii + 1] = 1
            else:
                z[ii + 1] = y[ii]
                z[ii] = y[ii + 1]
            break
    out[0] = (x + z) % 2
    out[1] = (y + z) % 2
    return out


def _assemble(k: int, bits_int: int, inner: np.ndarray, n: int) -> np.ndarray:
    """One recursion level: extend ``inner`` (Sp(2n-2)) by components (k, bits)."""
    nn = 2 * n
    f1 = _int_to_bits(k, nn)
    e1 = np.zeros(nn, dtype=np.int8)
    e1[0] = 1
    t = find_transvection(e1, f1)

    bits = _int_to_bits(bits_int, nn - 1)
    eprime = e1.copy()
    eprime[2:nn] = bits[1 : nn - 1]
    h0 = transvection(t[0], eprime)
    h0 = transvection(t[1], h0)
    if bits[0] == 1:
        f1 = f1 * 0

    g = np.eye(2, dtype=np.int8)
    if n != 1:
        g = np.block(
            [
                [g, np.zeros((2, nn - 2), dtype=np.int8)],
                [np.zeros((nn - 2, 2), dtype=np.int8), inner],
            ]
        )
    for j in range(nn):
        g[j] = transvection(t[0], g[j])
        g[j] = transvection(t[1], g[j])
        g[j] = transvection(h0, g[j])
        g[j] = transvection(f1, g[j])
    return g


def group_order(n: int) -> int:
    """|Sp(2n, 2)| = prod_j 2^(2j-1) (4^j - 1)."""
    order = 1
    for j in range(1, n + 1):
        order *= (1 << (2 * j - 1)) * ((1 << (2 * j)) - 1)
    return order


def symplectic_from_index(i: int, n: int) -> np.ndarray:
    """Canonical element ``i`` of Sp(2n, 2), 0 <= i < group_order(n)."""
    if not 0 <= i < group_order(n):
        raise ValueError(f"index {i} out of range for Sp({2*n}, 2)")
    nn = 2 * n
    s = (1 << nn) - 1
    k = (i % s) + 1
    i //= s
    bits_int = i % (1 << (nn - 1))
    inner = np.zeros((0, 0), dtype=np.int8)
    if n != 1:
        inner = symplectic_from_index(i >> (nn - 1), n - 1)
    return _assemble(k, bits_int, inner, n)


def random_symplectic(rng: np.random.Generator, n: int) -> np.ndarray:
    """Exactly uniform element of Sp(2n, 2): per-level components drawn directly."""
    nn = 2 * n
    k = int(rng.integers(1, 1 << nn))
    bits_int = int(rng.integers(0, 1 << (nn - 1)))
    inner = np.zeros((0, 0), dtype=np.int8)
    if n != 1:
        inner = random_symplectic(rng, n - 1)
    return _assemble(k, bits_int, inner, n)


def is_symplectic(g: np.ndarray) -> bool:
    """Check g Lambda g^T = Lambda (mod 2) in the interleaved convention."""
    nn = g.shape[0]
    if g.shape != (nn, nn) or nn % 2:
        return False
    lam = np.zeros((nn, nn), dtype=np.int8)
    for i in range(nn >> 1):
        lam[2 * i, 2 * i + 1] = lam[2 * i + 1, 2 * i] = 1
    return np.array_equal((g @ lam @ g.T) % 2, lam)
