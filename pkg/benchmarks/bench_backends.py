"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_backends.py [--paths 2000] [--nodes 63] [--repeat 5]

Both backends are called through the same dispatchers with an explicit
``backend=`` argument, so one process measures both. The first numba call is
a warm-up and is not timed.
"""

import argparse
import time

import numpy as np

from sgbh import _hot
from sgbh._backend import USE_NUMBA


def _best(fn, repeat):
    fn()
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=2000)
    ap.add_argument("--nodes", type=int, default=63)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    P, n = args.paths, args.nodes
    h = 1.0 / (n + 1)
    dt = 1e-3
    factor = _hot.thomas_factor(n, 0.1 * dt / h**2)
    rng = np.random.default_rng(0)
    U = np.ascontiguousarray(0.5 * rng.standard_normal((P, n)))
    dW = np.ascontiguousarray(np.sqrt(dt) * rng.standard_normal((P, n)))
    pi = np.ones(P)
    streams = np.arange(P)

    cases = {
        "philox normals": lambda b: _hot.standard_normals(7, streams, 3, n, backend=b),
        "thomas solve": lambda b: _hot.thomas_solve(U, *factor, backend=b),
        "fused step": lambda b: _hot.step_batch(U, dt, h, 1.0, 1.0, 1.0, 1, 1.0, _hot.G_SIGMOID,
                                                1.0, 1.0, dW, None, pi, factor, backend=b),
    }
    print(f"paths={P} nodes={n}  (numba available: {USE_NUMBA or _hot._step_jit is not None})")
    print(f"{'kernel':<16}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}{'max |diff|':>14}")
    for name, fn in cases.items():
        t_np = _best(lambda: fn("numpy"), args.repeat)
        if _hot._step_jit is None:
            print(f"{name:<16}{1e3 * t_np:>12.3f}{'n/a':>12}")
            continue
        t_nb = _best(lambda: fn("numba"), args.repeat)
        diff = float(np.max(np.abs(fn("numpy") - fn("numba"))))
        print(f"{name:<16}{1e3 * t_np:>12.3f}{1e3 * t_nb:>12.3f}{t_np / t_nb:>10.1f}{diff:>14.2e}")


if __name__ == "__main__":
    main()
