# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; same contracts as ``_kernels_py``."""

from array import array

from libc.stdint cimport int64_t, uint32_t, uint64_t

from faasbench import _kernels_py

BACKEND = "cython"

cdef enum:
    SUB_BUCKET_BITS = 11
    SUB_BUCKET_HALF_BITS = 10
    SUB_BUCKET_MASK = 2047
    SUB_BUCKET_HALF = 1024


cdef inline int _bit_length(uint64_t v):
    cdef int n = 0
    while v:
        v >>= 1
        n += 1
    return n


cdef inline Py_ssize_t _index(int64_t value):
    cdef int bucket = _bit_length(<uint64_t>(value | SUB_BUCKET_MASK)) - SUB_BUCKET_BITS
    cdef int64_t sub = value >> bucket
    return ((bucket + 1) << SUB_BUCKET_HALF_BITS) + sub - SUB_BUCKET_HALF


def factorize(n):
    if n < 1:
        raise ValueError("n must be >= 1")
    if n >= 2 ** 64:
        return _kernels_py.factorize(n)
    cdef uint64_t m = n
    cdef uint64_t d = 5
    cdef uint64_t step = 2
    out = []
    while m % 2 == 0:
        out.append(2)
        m //= 2
    while m % 3 == 0:
        out.append(3)
        m //= 3
    while d <= m // d:
        while m % d == 0:
            out.append(d)
            m //= d
        d += step
        step = 6 - step
    if m > 1:
        out.append(m)
    return out


def splitmix_fill(uint32_t[::1] out, seed):
    cdef uint64_t state = seed & 0xFFFFFFFFFFFFFFFF
    cdef uint64_t z
    cdef Py_ssize_t i
    for i in range(out.shape[0]):
        state += 0x9E3779B97F4A7C15ULL
        z = state
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
        z ^= z >> 31
        out[i] = <uint32_t>(z & 0xFFFF)
    return state


def matmul_u32(const uint32_t[::1] a, const uint32_t[::1] b, uint32_t[::1] c, Py_ssize_t n):
    cdef Py_ssize_t i, j, k, row, brow
    cdef uint32_t aik
    for i in range(n * n):
        c[i] = 0
    for i in range(n):
        row = i * n
        for k in range(n):
            aik = a[row + k]
            if aik == 0:
                continue
            brow = k * n
            for j in range(n):
                c[row + j] += aik * b[brow + j]


def checksum_u32(const uint32_t[::1] m):
    cdef uint64_t acc = 0
    cdef Py_ssize_t i
    for i in range(m.shape[0]):
        acc += m[i]
    return acc


def hist_index(int64_t value):
    return _index(value)


def hist_lowest(Py_ssize_t index):
    return _kernels_py.hist_lowest(index)


def hist_record_many(int64_t[::1] counts, values, int64_t max_value):
    cdef int64_t v
    cdef int64_t lo = -1
    cdef int64_t hi = -1
    cdef Py_ssize_t n = 0
    total = 0
    cdef int64_t partial = 0
    for pv in values:
        v = pv
        if v < 0:
            raise ValueError("negative value")
        if v > max_value:
            v = max_value
        counts[_index(v)] += 1
        if lo < 0 or v < lo:
            lo = v
        if v > hi:
            hi = v
        # flush before the int64 partial sum could overflow
        if partial > 0x3FFFFFFFFFFFFFFF - v:
            total += partial
            partial = 0
        partial += v
        n += 1
    return n, lo, hi, total + partial


def hist_index_at_rank(const int64_t[::1] counts, int64_t rank):
    cdef int64_t acc = 0
    cdef Py_ssize_t i
    for i in range(counts.shape[0]):
        acc += counts[i]
        if acc >= rank:
            return i
    return -1


new_u32 = _kernels_py.new_u32
new_i64 = _kernels_py.new_i64
