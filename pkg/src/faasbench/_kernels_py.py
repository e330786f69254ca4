"""Pure-Python versions of the hot kernels.

Every function here has a twin with the same signature in ``_kernels.pyx``.
Results must be bit-identical between the two; ``tests/test_kernels.py``
checks that.
"""

from array import array

BACKEND = "python"

MASK32 = 0xFFFFFFFF
MASK64 = 0xFFFFFFFFFFFFFFFF

# histogram layout: 3 significant digits -> 2048 sub-buckets per power of two
SUB_BUCKET_BITS = 11
SUB_BUCKET_HALF_BITS = SUB_BUCKET_BITS - 1
SUB_BUCKET_MASK = (1 << SUB_BUCKET_BITS) - 1
SUB_BUCKET_HALF = 1 << SUB_BUCKET_HALF_BITS


def factorize(n):
    """Trial division; returns prime factors in nondecreasing order."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out = []
    while n % 2 == 0:
        out.append(2)
        n //= 2
    while n % 3 == 0:
        out.append(3)
        n //= 3
    d = 5
    step = 2
    while d * d <= n:
        while n % d == 0:
            out.append(d)
            n //= d
        d += step
        step = 6 - step
    if n > 1:
        out.append(n)
    return out


def splitmix_fill(out, seed):
    """Fill a uint32 array with 16-bit values from a splitmix64 stream."""
    state = seed & MASK64
    for i in range(len(out)):
        state = (state + 0x9E3779B97F4A7C15) & MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        z ^= z >> 31
        out[i] = z & 0xFFFF
    return state


def matmul_u32(a, b, c, n):
    """c = a @ b for row-major n*n uint32 arrays, wrapping mod 2**32."""
    for i in range(n):
        row = i * n
        acc = [0] * n
        for k in range(n):
            aik = a[row + k]
            if aik == 0:
                continue
            brow = k * n
            for j in range(n):
                acc[j] += aik * b[brow + j]
        for j in range(n):
            c[row + j] = acc[j] & MASK32


def checksum_u32(m):
    """Order-independent checksum: wrapping sum mod 2**64."""
    return sum(m) & MASK64


def hist_index(value):
    bucket = (value | SUB_BUCKET_MASK).bit_length() - SUB_BUCKET_BITS
    sub = value >> bucket
    return ((bucket + 1) << SUB_BUCKET_HALF_BITS) + sub - SUB_BUCKET_HALF


def hist_lowest(index):
    bucket = (index >> SUB_BUCKET_HALF_BITS) - 1
    sub = (index & (SUB_BUCKET_HALF - 1)) + SUB_BUCKET_HALF
    if bucket < 0:
        sub -= SUB_BUCKET_HALF
        bucket = 0
    return sub << bucket


def hist_record_many(counts, values, max_value):
    """Add each value into ``counts``; values above ``max_value`` saturate.

    Returns (recorded, min, max, sum) for the batch.
    """
    lo = -1
    hi = -1
    total = 0
    n = 0
    for v in values:
        if v < 0:
            raise ValueError("negative value")
        if v > max_value:
            v = max_value
        counts[hist_index(v)] += 1
        if lo < 0 or v < lo:
            lo = v
        if v > hi:
            hi = v
        total += v
        n += 1
    return n, lo, hi, total


def hist_index_at_rank(counts, rank):
    """Index of the first bucket whose cumulative count reaches ``rank``."""
    acc = 0
    for i in range(len(counts)):
        acc += counts[i]
        if acc >= rank:
            return i
    return -1


def new_u32(n):
    return array("I", bytes(4 * n))


def new_i64(n):
    return array("q", bytes(8 * n))
