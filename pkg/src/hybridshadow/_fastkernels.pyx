# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled pair-sum loops for the kernel estimators (see kernels.py)."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil


# noexcept is load-bearing: without it Cython treats a -1.0 return (the
# Clifford kernel value for mismatched outcomes) as an error sentinel and
# grabs the GIL on every such pair to poll for an exception.
cdef inline double _kernel(long long a, long long b, double d, bint clifford,
                           const double* table) noexcept nogil:
    if clifford:
        return d if a == b else -1.0
    return table[__builtin_popcountll(<unsigned long long> (a ^ b))]


def pair_sums(const long long[:, ::1] codes, const double[:, ::1] wj,
              const double[:, ::1] wjp, int n, bint clifford,
              double[::1] out):
    cdef Py_ssize_t m = codes.shape[0]
    cdef Py_ssize_t k = codes.shape[1]
    cdef double d = <double> (1 << n)
    cdef cnp.ndarray[double, ndim=1] tbl = (2.0 ** n) * (-0.5) ** np.arange(n + 1)
    cdef const double* table = <const double*> cnp.PyArray_DATA(tbl)
    cdef Py_ssize_t i, j, jp
    cdef long double acc, row
    cdef long long cj
    with nogil:
        for i in range(m):
            acc = 0.0
            for j in range(k):
                cj = codes[i, j]
                row = 0.0
                for jp in range(k):
                    if jp != j:
                        row += _kernel(cj, codes[i, jp], d, clifford, table) * wjp[i, jp]
                acc += wj[i, j] * row
            out[i] = <double> acc


def cross_sums(const long long[:, ::1] codes_a, const double[:, ::1] wa,
               const long long[:, ::1] codes_b, const double[:, ::1] wb,
               int n, bint clifford, double[::1] out):
    cdef Py_ssize_t m = codes_a.shape[0]
    cdef Py_ssize_t ka = codes_a.shape[1]
    cdef Py_ssize_t kb = codes_b.shape[1]
    cdef double d = <double> (1 << n)
    cdef cnp.ndarray[double, ndim=1] tbl = (2.0 ** n) * (-0.5) ** np.arange(n + 1)
    cdef const double* table = <const double*> cnp.PyArray_DATA(tbl)
    cdef Py_ssize_t i, j, jp
    cdef long double acc, row
    cdef long long cj
    with nogil:
        for i in range(m):
            acc = 0.0
            for j in range(ka):
                cj = codes_a[i, j]
                row = 0.0
                for jp in range(kb):
                    row += _kernel(cj, codes_b[i, jp], d, clifford, table) * wb[i, jp]
                acc += wa[i, j] * row
            out[i] = <double> acc
