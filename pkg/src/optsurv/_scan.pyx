# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled threshold scan used by every split search."""

from libc.math cimport log, INFINITY
from libc.stdlib cimport malloc, free


cdef inline double _gain(double d, double m) nogil:
    if d > 0.0:
        return d * log(d / m)
    return 0.0


def scan_thresholds(const double[::1] values, const double[::1] lam,
                    const double[::1] dead, const long[::1] leaf_left,
                    const long[::1] leaf_right, const double[::1] tot_dead,
                    const double[::1] tot_mass, const double[::1] tot_count,
                    double min_bucket):
    cdef Py_ssize_t m = values.shape[0]
    cdef Py_ssize_t L = tot_dead.shape[0]
    cdef Py_ssize_t i, l, a, b
    cdef double F, best = -INFINITY
    cdef Py_ssize_t best_pos = -1
    cdef int bad
    if m < 2:
        return -INFINITY, -1
    # per-leaf running sums: moved in (left side) and moved out (right side)
    cdef double* buf = <double*> malloc(6 * L * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    cdef double* inD = buf
    cdef double* inM = buf + L
    cdef double* inC = buf + 2 * L
    cdef double* outD = buf + 3 * L
    cdef double* outM = buf + 4 * L
    cdef double* outC = buf + 5 * L
    cdef double D, M, C
    with nogil:
        for l in range(6 * L):
            buf[l] = 0.0
        for i in range(m - 1):
            a = leaf_left[i]
            b = leaf_right[i]
            inD[a] += dead[i]
            inM[a] += lam[i]
            inC[a] += 1.0
            outD[b] += dead[i]
            outM[b] += lam[i]
            outC[b] += 1.0
            if not (values[i] < values[i + 1]):
                continue
            F = 0.0
            bad = 0
            for l in range(L):
                C = tot_count[l] + inC[l] - outC[l]
                if C < min_bucket:
                    bad = 1
                    break
                D = tot_dead[l] + inD[l] - outD[l]
                M = tot_mass[l] + inM[l] - outM[l]
                F += _gain(D, M)
            if bad:
                continue
            if F > best:
                best = F
                best_pos = i
    free(buf)
    return best, best_pos
