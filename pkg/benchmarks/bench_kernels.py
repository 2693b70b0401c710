"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints the median wall time per call for each kernel and backend, and checks
that both backends agree.
"""
import argparse
import statistics
import time

import numpy as np

from tailflow.kernels import backends


def _time(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return statistics.median(times)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    impls = backends()
    if "cython" not in impls:
        print("compiled kernels are not built; only the numpy backend is available")
    rng = np.random.default_rng(0)
    cases = []
    for n in (1_000, 5_000, 20_000):
        seq = rng.integers(0, n, n)
        cases.append((f"count_inversions n={n}", "count_inversions", (seq,)))
    for n in (1_000, 4_000):
        a = rng.standard_normal((n, 10))
        b = rng.standard_normal((n, 10))
        cases.append((f"pairwise_distance_sum {n}x{n} d=10", "pairwise_distance_sum", (a, b)))
        cases.append((f"pairwise_distance_sum_within {n} d=10",
                      "pairwise_distance_sum_within", (a,)))

    names = sorted(impls)
    print(f"{'kernel':<42}" + "".join(f"{name:>12}" for name in names) + f"{'speedup':>10}")
    for label, fn_name, fn_args in cases:
        results, times = {}, {}
        for name in names:
            fn = getattr(impls[name], fn_name)
            results[name] = fn(*fn_args)
            times[name] = _time(lambda: fn(*fn_args), args.repeat)
        values = list(results.values())
        agree = all(np.isclose(v, values[0], rtol=1e-12, atol=0) for v in values)
        speedup = times["python"] / times["cython"] if "cython" in times else float("nan")
        row = f"{label:<42}" + "".join(f"{times[n] * 1e3:>10.2f}ms" for n in names)
        print(row + f"{speedup:>9.1f}x" + ("" if agree else "  MISMATCH"))


if __name__ == "__main__":
    main()
