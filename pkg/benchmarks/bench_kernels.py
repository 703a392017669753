"""Compiled vs numpy kernels: timing and bit-equality.

    python3 benchmarks/bench_kernels.py [--paths 5000] [--periods 25] [--repeat 5]

Also times one nested block under each backend (``--nested``), switching
through ``ORSALAB_BACKEND`` in a child process.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from orsalab import _kernels_py

try:
    from orsalab import _kernels as _compiled
except ImportError:
    _compiled = None


def inputs(n, U, seed=0):
    g = np.random.default_rng(seed)
    returns = 0.03 + 0.05 * g.standard_normal((n, U))
    market = 0.02 + 0.01 * g.standard_normal((n, U))
    reserves0 = np.tile([70.0, 30.0], (n, 1))
    guaranteed = np.array([0.00085, 0.025])
    mass = np.zeros(n)
    delta = np.hstack([np.ones((n, 1)), np.cumprod(np.exp(-market), axis=1)])
    return (returns, market, reserves0, guaranteed, 0.014, 0.85, 0.05, 2.0, mass), delta


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def nested_child(backend, n, repeat):
    code = ("import time,dataclasses as d;from orsalab.config import RunConfig;"
            "from orsalab.nested import NestedEngine;c=RunConfig();"
            f"c=d.replace(c,nested=d.replace(c.nested,n_primary={n},n_secondary=100));"
            "e=NestedEngine(c);import timeit;"
            f"print(min(timeit.repeat(lambda: e.node_npvs(list(range({n})),1),"
            f"number=1,repeat={repeat})))")
    env = dict(os.environ, ORSALAB_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", code], env=env, check=True,
                         capture_output=True, text=True)
    return float(out.stdout.strip())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=5000)
    ap.add_argument("--periods", type=int, default=25)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--nested", type=int, default=0, metavar="N",
                    help="also time secondary NPVs of N nodes per backend")
    args = ap.parse_args(argv)
    if _compiled is None:
        print("compiled extension not built; run `python3 setup.py build_ext --inplace`")
        return 1
    a, delta = inputs(args.paths, args.periods)
    t = args.periods // 2
    rows = []
    for name, py, cy, call in (
            ("alm_project", _kernels_py.alm_project, _compiled.alm_project, lambda f: f(*a)),
            ("npv_accumulate", _kernels_py.npv_accumulate, _compiled.npv_accumulate,
             lambda f: f(delta, a[0], t))):
        r_py, r_cy = call(py), call(cy)
        r_py = r_py if isinstance(r_py, tuple) else (r_py,)
        r_cy = r_cy if isinstance(r_cy, tuple) else (r_cy,)
        same = all(np.array_equal(x, y) for x, y in zip(r_py, r_cy))
        tp, tc = best(lambda: call(py), args.repeat), best(lambda: call(cy), args.repeat)
        rows.append((name, tp, tc, same))
    print(f"{args.paths} paths x {args.periods} periods, best of {args.repeat}")
    print(f"{'kernel':<16}{'numpy [ms]':>12}{'cython [ms]':>13}{'speed-up':>10}  bit-equal")
    for name, tp, tc, same in rows:
        print(f"{name:<16}{tp * 1e3:>12.2f}{tc * 1e3:>13.2f}{tp / tc:>9.1f}x  {same}")
    if args.nested:
        tp = nested_child("python", args.nested, args.repeat)
        tc = nested_child("cython", args.nested, args.repeat)
        print(f"{'nested block':<16}{tp * 1e3:>12.1f}{tc * 1e3:>13.1f}{tp / tc:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
