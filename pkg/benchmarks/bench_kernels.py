"""Compare the compiled grid kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--nodes M] [--repeat R]
"""

import argparse
import timeit

import numpy as np

from multisymp.grassmann import ProblemShape
from multisymp.hamilton import active_axes
from multisymp._kernels import _pykernels

try:
    from multisymp._kernels import _ckernels
except ImportError:
    _ckernels = None


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=4225, help="stack size M (default: a 65x65 grid)")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    backends = {"python": _pykernels}
    if _ckernels is not None:
        backends["cython"] = _ckernels
    else:
        print("compiled extension not built; timing the fallback only")

    print(f"{'shape':>7} {'kernel':>15} " + " ".join(f"{b:>12}" for b in backends) + "  speedup")
    for n, k in [(1, 1), (2, 2), (2, 3), (3, 2)]:
        s = ProblemShape(n, k)
        t = rng.normal(size=(args.nodes, n, s.N + s.C))
        tq = np.ascontiguousarray(np.transpose(t[:, :, : s.N], (0, 2, 1)))
        act = active_axes(s, "full")[s.N :]
        jobs = {
            "plucker_minors": lambda m: m.plucker_minors(tq, s.index_table),
            "contract_omega": lambda m: m.contract_omega(t, s.index_table, act, s.N),
        }
        for name, job in jobs.items():
            times = {}
            for b, mod in backends.items():
                times[b] = min(timeit.repeat(lambda: job(mod), number=1, repeat=args.repeat))
            ratio = times["python"] / times["cython"] if "cython" in times else float("nan")
            cols = " ".join(f"{1e3 * times[b]:>9.2f} ms" for b in backends)
            print(f"{n}x{k:<5} {name:>15} {cols}  {ratio:6.1f}x")
        if "cython" in backends:
            diff = np.max(np.abs(jobs["contract_omega"](_ckernels) - jobs["contract_omega"](_pykernels)))
            print(f"{'':>7} {'max |diff|':>15} {diff:.2e}")


if __name__ == "__main__":
    main()
