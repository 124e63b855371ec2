"""Timing comparison between the compiled and pure-Python sampling kernels.

Usage: python benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from pointvqa import kernels
from pointvqa.kernels import _fallback

try:
    from pointvqa.kernels import _native
except ImportError:
    _native = None


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    print(f"selected implementation: {kernels.IMPLEMENTATION}")
    if _native is None:
        print("compiled extension unavailable; timing the fallback only")

    cases = [
        ("fps n=2k m=512", lambda impl, pts, ctr:
         impl.farthest_point_sample(pts, 512)),
        ("fps n=20k m=1024", None),
        ("ball n=2k c=512 s=32", lambda impl, pts, ctr:
         impl.ball_query(pts, ctr, 0.4, 32)),
        ("ball n=20k c=1024 s=32", None),
    ]

    header = f"{'case':<26}{'python':>12}{'native':>12}{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for n, m in ((2_000, 512), (20_000, 1024)):
        pts = rng.uniform(-3, 3, size=(n, 3))
        ctrs = pts[:m]
        for name, make in (
            (f"fps n={n} m={m}",
             lambda impl: impl.farthest_point_sample(pts, m)),
            (f"ball n={n} c={m} s=32",
             lambda impl: impl.ball_query(pts, ctrs, 0.4, 32)),
        ):
            t_py = _time(lambda: make(_fallback), args.repeats)
            if _native is not None:
                t_nat = _time(lambda: make(_native), args.repeats)
                print(f"{name:<26}{t_py * 1e3:>10.1f}ms{t_nat * 1e3:>10.1f}ms"
                      f"{t_py / t_nat:>9.1f}x")
            else:
                print(f"{name:<26}{t_py * 1e3:>10.1f}ms{'-':>12}{'-':>10}")


if __name__ == "__main__":
    main()
