"""Compare the compiled and pure-Python kernels on a long fluctuation series.

    python benchmarks/bench_kernels.py [--n 1000000] [--window 10] [--repeat 3]
"""

import argparse
import timeit

import numpy as np

from rssicount import _fallback

try:
    from rssicount import _kernels
except ImportError:
    _kernels = None


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=1_000_000)
    ap.add_argument("--window", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    values = np.rint(rng.standard_normal(args.n) * 2.0)
    mean, std = _fallback.window_stats(values, args.window)
    decisions = np.ascontiguousarray((std > 2.0).view(np.uint8))

    cases = {
        "window_stats": lambda k: k.window_stats(values, args.window),
        "prob_in_band": lambda k: k.prob_in_band(mean, std),
        "segment": lambda k: k.segment(decisions, 3, 2),
    }
    backends = {"python": _fallback}
    if _kernels is not None:
        backends["cython"] = _kernels
    else:
        print("compiled extension not built; timing the fallback only")

    print(f"n={args.n} window={args.window}")
    print(f"{'kernel':<14}" + "".join(f"{b:>12}" for b in backends) + (f"{'speedup':>10}" if len(backends) > 1 else ""))
    for name, fn in cases.items():
        times = {b: min(timeit.repeat(lambda: fn(k), number=1, repeat=args.repeat)) for b, k in backends.items()}
        row = f"{name:<14}" + "".join(f"{t * 1e3:>10.1f}ms" for t in times.values())
        if len(times) > 1:
            row += f"{times['python'] / times['cython']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
