# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: one-body operator assembly over a sorted bitmask basis
and a real-CSR times complex-vector product."""
import numpy as np
cimport numpy as cnp
from cython.parallel import prange

cnp.import_array()

cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil


cdef inline Py_ssize_t _find(const cnp.int64_t[:] states, cnp.int64_t key) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = states.shape[0] - 1, mid
    while lo <= hi:
        mid = (lo + hi) >> 1
        if states[mid] < key:
            lo = mid + 1
        elif states[mid] > key:
            hi = mid - 1
        else:
            return mid
    return -1


cdef inline int _parity(cnp.uint64_t x) noexcept nogil:
    return __builtin_popcountll(x) & 1


def hopping_coo(const cnp.int64_t[:] states, const cnp.int64_t[:] create, const cnp.int64_t[:] annihilate,
                const double[:] amps):
    """COO triplets of sum_k amps[k] c^dag_{create[k]} c_{annihilate[k]} (create != annihilate)."""
    cdef Py_ssize_t n = states.shape[0], n_terms = create.shape[0]
    cdef Py_ssize_t cap = n * n_terms, nnz = 0, k, j, r
    rows_a = np.empty(cap, dtype=np.int64)
    cols_a = np.empty(cap, dtype=np.int64)
    vals_a = np.empty(cap, dtype=np.float64)
    cdef cnp.int64_t[:] rows = rows_a
    cdef cnp.int64_t[:] cols = cols_a
    cdef double[:] vals = vals_a
    cdef cnp.int64_t s, p, q, lo, hi
    cdef cnp.uint64_t between
    with nogil:
        for k in range(n_terms):
            p = create[k]
            q = annihilate[k]
            lo = p if p < q else q
            hi = q if p < q else p
            between = ((<cnp.uint64_t>1) << hi) - ((<cnp.uint64_t>1) << (lo + 1))
            for j in range(n):
                s = states[j]
                if not ((s >> q) & 1) or ((s >> p) & 1):
                    continue
                r = _find(states, s ^ ((<cnp.int64_t>1) << q) ^ ((<cnp.int64_t>1) << p))
                if r < 0:
                    continue
                rows[nnz] = r
                cols[nnz] = j
                vals[nnz] = -amps[k] if _parity(<cnp.uint64_t>s & between) else amps[k]
                nnz += 1
    return rows_a[:nnz], cols_a[:nnz], vals_a[:nnz]


def lookup(const cnp.int64_t[:] states, const cnp.int64_t[:] keys):
    """Positions of ``keys`` in the sorted ``states``; -1 where absent."""
    cdef Py_ssize_t i, m = keys.shape[0]
    out_a = np.empty(m, dtype=np.int64)
    cdef cnp.int64_t[:] out = out_a
    with nogil:
        for i in range(m):
            out[i] = _find(states, keys[i])
    return out_a


def csr_matvec(const cnp.int32_t[:] indptr, const cnp.int32_t[:] indices, const double[:] data,
               const double complex[:] x, double complex[:] out):
    """out = A @ x for real CSR ``A`` and complex ``x``; rows in parallel."""
    cdef Py_ssize_t i, k, n = indptr.shape[0] - 1
    cdef double re, im
    for i in prange(n, nogil=True, schedule="static"):
        re = 0.0
        im = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            re = re + data[k] * x[indices[k]].real
            im = im + data[k] * x[indices[k]].imag
        out[i] = re + 1j * im
    return out
