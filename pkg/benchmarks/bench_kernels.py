"""Compiled kernels against the pure-Python (numpy) fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--quick]

Each kernel runs on identical inputs in both backends; the outputs are
compared before timing, and the best of ``--repeat`` runs is reported.
"""

import argparse
import sys
import timeit

import numpy as np

from asl import kernels


def cases(quick):
    rng = np.random.default_rng(0)
    n = 128 if quick else 512
    values = np.ascontiguousarray(rng.standard_normal((n, n)))
    feature = (rng.random((n, n)) < 0.01).astype(np.uint8)
    feature[0, 0] = 1
    samples = 20_000 if quick else 200_000
    xs, ys = rng.uniform(0, 1, samples), rng.uniform(0, 1, samples)
    m = 300 if quick else 2000

    def cubes(count):
        level = rng.integers(0, 4, count)
        side = 1 << level
        return np.stack([level, rng.integers(0, 64, count) // side * side,
                         rng.integers(0, 64, count) // side * side], axis=1).astype(np.int64)

    targets, pool = cubes(m), cubes(m)
    return [
        (f"edt_sq {n}x{n}", "edt_sq", (feature,)),
        (f"block_oscillation {n}x{n}, side 4", "block_oscillation", (values, 4)),
        (f"block_oscillation {n}x{n}, side 64", "block_oscillation", (values, 64)),
        (f"bilinear_sample {samples} points", "bilinear_sample", (values, 1.0, xs, ys)),
        (f"nearest_cubes {m} x {m}", "nearest_cubes", (np.ascontiguousarray(targets), np.ascontiguousarray(pool))),
    ]


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.allclose(np.asarray(a), np.asarray(b), rtol=1e-12, atol=1e-12)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="small inputs")
    args = ap.parse_args(argv)
    if "compiled" not in kernels.BACKENDS:
        print("compiled extension not built; run `pip install -e . --no-build-isolation`", file=sys.stderr)
        return 1
    backends = {name: kernels.get_backend(name) for name in ("compiled", "python")}
    print(f"{'kernel':40s} {'compiled':>12s} {'python':>12s} {'speedup':>9s}")
    for label, fn, call_args in cases(args.quick):
        c = getattr(backends["compiled"], fn)
        p = getattr(backends["python"], fn)
        if not same(c(*call_args), p(*call_args)):
            print(f"{label}: backends disagree", file=sys.stderr)
            return 1
        times = {}
        for name, f in (("compiled", c), ("python", p)):
            number = 1
            times[name] = min(timeit.repeat(lambda: f(*call_args), number=number, repeat=args.repeat)) / number
        print(f"{label:40s} {times['compiled'] * 1e3:10.2f}ms {times['python'] * 1e3:10.2f}ms "
              f"{times['python'] / times['compiled']:8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
