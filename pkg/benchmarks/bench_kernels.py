"""Compare the compiled and pure-Python kernel backends.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5] [--quick]

Each kernel runs on identical inputs in every available backend; outputs are
checked for equality before timings are reported.
"""

from __future__ import annotations

import argparse
import random
import timeit

from faasbench.kernels import available_backends, load_backend


def _factorize(k, quick):
    nums = [999_999_000_001, 600_851_475_143, 2 ** 31 - 1, 1_000_000_007 * 13]
    nums = nums[:2] if quick else nums
    return lambda: [k.factorize(n) for n in nums]


def _matmul(k, quick):
    n = 24 if quick else 64
    a, b, c = k.new_u32(n * n), k.new_u32(n * n), k.new_u32(n * n)
    k.splitmix_fill(a, 1)
    k.splitmix_fill(b, 2)

    def run():
        k.matmul_u32(a, b, c, n)
        return k.checksum_u32(c)
    return run


def _hist(k, quick):
    rng = random.Random(0)
    values = [int(rng.lognormvariate(18, 1)) for _ in range(20_000 if quick else 200_000)]
    max_value = 3_600 * 10 ** 9

    def run():
        counts = k.new_i64(k.hist_index(max_value) + 1)
        out = k.hist_record_many(counts, values, max_value)
        return out, k.hist_index_at_rank(counts, len(values) // 2)
    return run


KERNELS = {"factorize": _factorize, "matmul_u32": _matmul, "hist_record_many": _hist}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="Smaller inputs.")
    args = ap.parse_args(argv)
    backends = {name: load_backend(name) for name in available_backends()}
    print(f"{'kernel':<18}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for kname, make in KERNELS.items():
        fns = {b: make(mod, args.quick) for b, mod in backends.items()}
        results = {b: fn() for b, fn in fns.items()}
        if len(set(map(repr, results.values()))) != 1:
            raise SystemExit(f"{kname}: backends disagree")
        best = {b: min(timeit.repeat(fn, number=1, repeat=args.repeat)) for b, fn in fns.items()}
        speed = best["python"] / best["cython"] if "cython" in best else 1.0
        print(f"{kname:<18}" + "".join(f"{best[b] * 1e3:>10.2f}ms" for b in backends) + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()
