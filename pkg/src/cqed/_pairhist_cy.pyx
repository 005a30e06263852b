# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Two-pointer pair-delay histogram over sorted timestamp arrays.

Counts pairs (i, j) with s2[j] - s1[i] in [dmin, dmax], binned as
(d - dmin) // bin_ps.  Both input arrays must be sorted ascending; the
window pointers then only ever advance, so the sweep is O(n1 + n2 + pairs).
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def pair_histogram(
    cnp.int64_t[::1] s1,
    cnp.int64_t[::1] s2,
    long long dmin,
    long long dmax,
    long long bin_ps,
    cnp.int64_t[::1] counts,
):
    cdef Py_ssize_t n1 = s1.shape[0]
    cdef Py_ssize_t n2 = s2.shape[0]
    cdef Py_ssize_t nbins = counts.shape[0]
    cdef Py_ssize_t i, j, lo = 0, hi = 0
    cdef long long t, d, idx
    cdef unsigned long long total = 0

    for i in range(n1):
        t = s1[i]
        while lo < n2 and s2[lo] - t < dmin:
            lo += 1
        if hi < lo:
            hi = lo
        while hi < n2 and s2[hi] - t <= dmax:
            hi += 1
        for j in range(lo, hi):
            idx = (s2[j] - t - dmin) // bin_ps
            if idx < nbins:
                counts[idx] += 1
                total += 1
    return total
