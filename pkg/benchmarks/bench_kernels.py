"""Time the numba and numpy oracle kernels side by side.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--batch 256]

Each kernel is called once untimed (JIT compile), then timed over --repeat
calls; the best time is reported along with the max absolute difference
between the two backends' outputs.
"""
import argparse
import time

import numpy as np

from mvrc._accel import HAVE_NUMBA
from mvrc.kernels import NUMBA_KERNELS, NUMPY_KERNELS

OPS = ("inner", "inner_diff", "jac", "jac_diff")


def fixtures(rng, n, batch):
    R = rng.standard_normal((n, 30))
    A = rng.standard_normal((n, 10, 10))
    X, y = rng.standard_normal((n, 100)), rng.standard_normal(n)
    idx = rng.integers(0, n, batch)
    return {
        "portfolio": ((R,), rng.standard_normal(30) * 0.1, idx),
        "linear": ((A,), rng.standard_normal(10), idx),
        "spam": ((X, y), rng.standard_normal(100) * 0.1, idx),
    }


def best_of(fn, args, repeat):
    fn(*args)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--batch", type=int, default=256)
    ap.add_argument("--n", type=int, default=4096)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba is not installed; only the numpy backend is available")
        return 1
    rng = np.random.default_rng(args.seed)
    print(f"{'problem':<10} {'kernel':<11} {'numpy us':>10} {'numba us':>10} {'speedup':>8} {'max diff':>9}")
    for name, (data, x, idx) in fixtures(rng, args.n, args.batch).items():
        xp = x + rng.standard_normal(x.shape) * 1e-2
        for op, f_np, f_nb in zip(OPS, NUMPY_KERNELS[name], NUMBA_KERNELS[name]):
            if f_np is None:
                continue
            call = (*data, idx, x) if not op.endswith("diff") else (*data, idx, x, xp)
            t_np, t_nb = best_of(f_np, call, args.repeat), best_of(f_nb, call, args.repeat)
            diff = float(np.max(np.abs(np.asarray(f_np(*call)) - np.asarray(f_nb(*call)))))
            print(f"{name:<10} {op:<11} {t_np * 1e6:>10.1f} {t_nb * 1e6:>10.1f} {t_np / t_nb:>8.2f} {diff:>9.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
