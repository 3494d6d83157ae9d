"""Time the graph kernels under every available implementation.

    python benchmarks/bench_kernels.py [--nodes 400] [--degree 4] [--repeat 5]

Each implementation runs the same random graph; results are cross-checked
before timings are printed.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from astrodiag.kernels import implementations


def random_csr(n: int, degree: int, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    adj: list[set[int]] = [set() for _ in range(n)]
    for i in range(1, n):  # random spanning tree keeps it connected
        j = int(rng.integers(i))
        adj[i].add(j)
        adj[j].add(i)
    extra = n * max(0, degree - 2) // 2
    for _ in range(extra):
        a, b = rng.integers(n, size=2)
        if a != b:
            adj[a].add(int(b))
            adj[b].add(int(a))
    indptr = np.zeros(n + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(s) for s in adj])
    indices = np.array([j for s in adj for j in sorted(s)], dtype=np.int64)
    sims = rng.uniform(0.0, 1.0, size=len(indices))
    return indptr, indices, sims


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--nodes", type=int, default=400)
    ap.add_argument("--degree", type=int, default=4)
    ap.add_argument("--hops", type=int, default=6)
    ap.add_argument("--path-nodes", type=int, default=40, help="graph size for path enumeration")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    impls = implementations()
    indptr, indices, sims = random_csr(args.nodes, args.degree, args.seed)
    p_indptr, p_indices, p_sims = random_csr(args.path_nodes, args.degree, args.seed + 1)
    target = args.path_nodes - 1

    results = {}
    for name, mod in impls.items():
        values = mod.propagate(indptr, indices, sims, 0, 0.8, args.hops)
        paths = mod.simple_paths(p_indptr, p_indices, 0, target, args.hops)
        p_values = mod.propagate(p_indptr, p_indices, p_sims, 0, 0.8, args.hops)
        results[name] = (np.asarray(values), sorted(paths))
        timings = {
            "propagate": best_of(lambda: mod.propagate(indptr, indices, sims, 0, 0.8, args.hops), args.repeat),
            "simple_paths": best_of(lambda: mod.simple_paths(p_indptr, p_indices, 0, target, args.hops), args.repeat),
            "path_reliabilities": best_of(lambda: mod.path_reliabilities(paths, p_values), args.repeat),
        }
        print(f"{name:8s} " + "  ".join(f"{k}={v * 1e3:9.3f} ms" for k, v in timings.items()) + f"  ({len(paths)} paths)")

    ref_values, ref_paths = results["python"]
    for name, (values, paths) in results.items():
        if not np.allclose(values, ref_values, rtol=0, atol=1e-9) or paths != ref_paths:
            raise SystemExit(f"{name} disagrees with the pure-Python kernels")
    if "cython" not in impls:
        print("compiled kernels not built; only the pure-Python fallback was timed")


if __name__ == "__main__":
    main()
