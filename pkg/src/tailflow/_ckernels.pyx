# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: merge-sort inversion counting and pairwise distance sums."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


cdef long long _merge_count(long long[::1] a, long long[::1] buf, Py_ssize_t n):
    """Sort ``a`` in place (bottom-up merge sort); return strict inversions."""
    cdef Py_ssize_t width = 1, lo, mid, hi, i, j, k
    cdef long long inv = 0
    cdef long long[::1] src = a, dst = buf, tmp
    cdef bint in_buf = False
    while width < n:
        lo = 0
        while lo < n:
            mid = lo + width
            if mid > n:
                mid = n
            hi = lo + 2 * width
            if hi > n:
                hi = n
            i = lo
            j = mid
            k = lo
            while i < mid and j < hi:
                if src[j] < src[i]:
                    inv += mid - i
                    dst[k] = src[j]
                    j += 1
                else:
                    dst[k] = src[i]
                    i += 1
                k += 1
            while i < mid:
                dst[k] = src[i]
                i += 1
                k += 1
            while j < hi:
                dst[k] = src[j]
                j += 1
                k += 1
            lo = hi
        tmp = src
        src = dst
        dst = tmp
        in_buf = not in_buf
        width *= 2
    if in_buf:
        for i in range(n):
            a[i] = src[i]
    return inv


def count_inversions(seq):
    """Number of pairs ``i < j`` with ``seq[i] > seq[j]`` (integer input)."""
    a = np.ascontiguousarray(seq, dtype=np.int64).copy()
    buf = np.empty_like(a)
    return int(_merge_count(a, buf, a.shape[0]))


def pairwise_distance_sum(double[:, ::1] a, double[:, ::1] b):
    """Sum of Euclidean distances over all pairs ``(a_i, b_j)``."""
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], d = a.shape[1], i, j, k
    cdef double total = 0.0, row, acc, diff
    if b.shape[1] != d:
        raise ValueError("column mismatch")
    for i in range(n):
        row = 0.0
        for j in range(m):
            acc = 0.0
            for k in range(d):
                diff = a[i, k] - b[j, k]
                acc += diff * diff
            row += sqrt(acc)
        total += row
    return total


def pairwise_distance_sum_within(double[:, ::1] a):
    """Sum of Euclidean distances over unordered pairs ``i < j`` of rows of ``a``."""
    cdef Py_ssize_t n = a.shape[0], d = a.shape[1], i, j, k
    cdef double total = 0.0, row, acc, diff
    for i in range(n):
        row = 0.0
        for j in range(i + 1, n):
            acc = 0.0
            for k in range(d):
                diff = a[i, k] - a[j, k]
                acc += diff * diff
            row += sqrt(acc)
        total += row
    return total
