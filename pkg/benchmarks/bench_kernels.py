"""Compare the compiled rationing kernel with the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--calls 2000] [--solves 3]

Times single kernel calls on random inputs, checks that both backends
agree, and times full dual-venue solves with each backend in a fresh
interpreter (the backend is chosen at import).
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from darkpool_eq import _kernels_py
from darkpool_eq.model import NumericsConfig, ZLaw
from darkpool_eq.stochastics import _rule

try:
    from darkpool_eq import _kernels as _compiled
except ImportError:
    _compiled = None

SOLVE_SNIPPET = """
import time
from darkpool_eq import kernels
from darkpool_eq.dualvenue import solve_dual
from darkpool_eq.model import paper_params
solve_dual(paper_params())
t = time.perf_counter()
for s in (0.1, 1.0, 10.0):
    solve_dual(paper_params(sigma_v=s))
print(kernels.BACKEND, time.perf_counter() - t)
"""


def _inputs(n, seed=0):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(0.0, 1.0, (2, n))
    c = rng.uniform(0.01, 1.0, n)
    m = np.maximum(np.maximum(a, b), c)
    return a / m, b / m, c / m


def time_kernel(fn, args, rule, shape):
    t = time.perf_counter()
    out = [fn(a, b, c, shape, *rule) for a, b, c in zip(*args)]
    return time.perf_counter() - t, np.array([o[0] for o in out])


def time_solves(pure: bool, repeats: int) -> float:
    env = dict(os.environ)
    env["DARKPOOL_EQ_PURE"] = "1" if pure else "0"
    best = np.inf
    for _ in range(repeats):
        res = subprocess.run([sys.executable, "-c", SOLVE_SNIPPET], env=env,
                             capture_output=True, text=True, check=True)
        best = min(best, float(res.stdout.split()[1]))
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--calls", type=int, default=2000)
    ap.add_argument("--solves", type=int, default=3)
    args = ap.parse_args(argv)

    z = ZLaw(30.0, 1.0)
    rule = _rule(z.shape, NumericsConfig().quad_order)
    inputs = _inputs(args.calls)

    t_py, r_py = time_kernel(_kernels_py.rate, inputs, rule, z.shape)
    print(f"numpy kernel     {1e6 * t_py / args.calls:9.1f} us/call")
    if _compiled is None:
        print("compiled kernel  not built; run `pip install -e . --no-build-isolation`")
        return 0
    t_c, r_c = time_kernel(_compiled.rate, inputs, rule, z.shape)
    print(f"compiled kernel  {1e6 * t_c / args.calls:9.1f} us/call  "
          f"(speedup {t_py / t_c:.1f}x)")
    print(f"max |difference| {np.max(np.abs(r_py - r_c)):.2e}")

    if args.solves > 0:
        s_py = time_solves(True, args.solves)
        s_c = time_solves(False, args.solves)
        print(f"3 dual solves    numpy {s_py:.3f} s, compiled {s_c:.3f} s "
              f"(speedup {s_py / s_c:.1f}x)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
