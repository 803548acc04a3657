"""Compare the numba and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeats N]

Both backends are called explicitly, so ``LGTEUN_NUMBA`` does not matter
here.  The first numba call (compilation) is excluded from the timings.
"""
import argparse
import time

import numpy as np

from lgteun.tensor import _kernels


def best_of(fn, repeats):
    fn()
    best = np.inf
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def cases(rng):
    # blur + decimation on a 128x128x4 batch of 4, and a 3x3 depthwise conv on features
    xp = rng.standard_normal((4, 134, 134, 4))
    k7 = rng.standard_normal((4, 7, 7))
    g4 = rng.standard_normal((4, 32, 32, 4))
    fp = rng.standard_normal((4, 34, 34, 32))
    k3 = rng.standard_normal((32, 3, 3))
    g1 = rng.standard_normal((4, 32, 32, 32))
    a, b = rng.random((128, 128)), rng.random((128, 128))
    return {
        "dwcorr fwd 7x7/4": lambda nb: _kernels.dwcorr_fwd(xp, k7, 4, 32, 32, use_numba=nb),
        "dwcorr bwd 7x7/4": lambda nb: _kernels.dwcorr_bwd(xp, k7, g4, 4, use_numba=nb),
        "dwcorr fwd 3x3/1": lambda nb: _kernels.dwcorr_fwd(fp, k3, 1, 32, 32, use_numba=nb),
        "dwcorr bwd 3x3/1": lambda nb: _kernels.dwcorr_bwd(fp, k3, g1, 1, use_numba=nb),
        "window moments 32": lambda nb: _kernels.window_moments(a, b, 32, use_numba=nb),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed")
    print(f"{'kernel':<20}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}{'max diff':>11}")
    for name, fn in cases(np.random.default_rng(0)).items():
        ref, fast = fn(False), fn(True)
        ref = ref if isinstance(ref, tuple) else (ref,)
        fast = fast if isinstance(fast, tuple) else (fast,)
        diff = max(float(np.abs(p - q).max()) for p, q in zip(ref, fast))
        t_np = best_of(lambda: fn(False), args.repeats)
        t_nb = best_of(lambda: fn(True), args.repeats)
        print(f"{name:<20}{t_np * 1e3:>10.2f}{t_nb * 1e3:>10.2f}{t_np / t_nb:>8.1f}x{diff:>11.1e}")


if __name__ == "__main__":
    main()
