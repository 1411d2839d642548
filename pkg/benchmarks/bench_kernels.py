"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--n 200000] [--m 5] [--repeat 3]

Both backends get identical inputs; outputs are checked for equality before
timings are reported.
"""

import argparse
import time

import numpy as np

from rtci import _pykernels
from rtci.graph import hop_cutoff
from rtci.synth import gen_barabasi_albert

try:
    from rtci import _ckernels
except ImportError:
    _ckernels = None


def best_of(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--m", type=int, default=5)
    ap.add_argument("--gamma", type=float, default=0.1)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if _ckernels is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")

    rng = np.random.default_rng(args.seed)
    g = gen_barabasi_albert(args.n, 1.0, args.m, rng)
    focal = int(np.argmax(g.degree))
    hops = hop_cutoff(args.gamma, 1e-8)
    x = rng.normal(size=(g.n, 4))
    uniforms = rng.random((args.n - args.m - 1) * args.m)

    cases = {
        "bfs_truncated": lambda k: k.bfs_truncated(g.indptr, g.indices, focal, hops),
        "neighbor_sum": lambda k: k.neighbor_sum(g.indptr, g.indices, x),
        "ba_attach": lambda k: k.ba_attach(args.n, args.m, 1.0, uniforms),
    }
    print(f"graph: n={g.n} edges={g.n_edges}; best of {args.repeat}")
    print(f"{'kernel':<15}{'cython_s':>12}{'python_s':>12}{'speedup':>10}")
    for name, call in cases.items():
        tc, out_c = best_of(lambda: call(_ckernels), args.repeat)
        # the pure-Python Fenwick loop is slow; one pass is enough
        tp, out_p = best_of(lambda: call(_pykernels), 1 if name == "ba_attach" else args.repeat)
        if not np.array_equal(np.asarray(out_c), np.asarray(out_p)):
            raise SystemExit(f"{name}: backends disagree")
        print(f"{name:<15}{tc:>12.4f}{tp:>12.4f}{tp / tc:>10.1f}")


if __name__ == "__main__":
    main()
