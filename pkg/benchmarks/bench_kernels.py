"""Compiled vs pure-Python kernels on a synthetic, popularity-skewed workload.

    python benchmarks/bench_kernels.py [--users 500 --items 2000 --ratings 30000 --dim 20 --repeat 3]

Reports the best wall time of each kernel per backend and the speedup.
"""

import argparse
import time

import numpy as np

from matrec import kernels


def workload(n, m, rows, k, seed=0):
    rng = np.random.default_rng(seed)
    pop = 1.0 / np.arange(1, m + 1)
    pop /= pop.sum()
    users = rng.integers(0, n, rows).astype(np.int64)
    items = rng.choice(m, rows, p=pop).astype(np.int64)
    return {
        "params": [rng.uniform(0.01, 0.1, (n if w < 3 else m, k)) for w in range(6)],
        "users": users,
        "items": items,
        "xs": rng.uniform(0.001, 1, rows),
        "ys": rng.uniform(0.001, 1, rows),
        "ratings": rng.uniform(0, 1, rows),
        "order": rng.permutation(rows).astype(np.int64),
        "P": rng.normal(0, 0.1, (n, k)),
        "Q": rng.normal(0, 0.1, (m, k)),
        "neg": rng.integers(0, m, rows).astype(np.int64),
    }


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def bench(backend, w, repeat):
    mod = kernels.get_backend(backend)

    def epoch():
        ps = [p.copy() for p in w["params"]]
        mod.matrec_epoch(*ps, w["users"], w["items"], w["xs"], w["ys"], w["ratings"], w["order"], 3e-4, 1e-12)

    def scores():
        mod.matrec_scores(*w["params"], w["users"], w["items"], w["xs"], w["ys"], 1e-12)

    def bpr():
        mod.bpr_epoch(w["P"].copy(), w["Q"].copy(), np.zeros(len(w["Q"])), w["users"], w["items"], w["neg"],
                      0.05, 0.01)

    return {"matrec_epoch": best_of(epoch, repeat), "matrec_scores": best_of(scores, repeat),
            "bpr_epoch": best_of(bpr, repeat)}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--users", type=int, default=500)
    ap.add_argument("--items", type=int, default=2000)
    ap.add_argument("--ratings", type=int, default=30000)
    ap.add_argument("--dim", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    w = workload(args.users, args.items, args.ratings, args.dim)
    results = {b: bench(b, w, args.repeat) for b in kernels.available_backends()}
    print(f"{args.ratings} samples, k={args.dim}, active backend: {kernels.BACKEND}")
    print(f"{'kernel':<15}" + "".join(f"{b:>12}" for b in results) + ("    speedup" if len(results) > 1 else ""))
    for name in ("matrec_epoch", "matrec_scores", "bpr_epoch"):
        row = f"{name:<15}" + "".join(f"{results[b][name]:>11.4f}s" for b in results)
        if len(results) > 1:
            row += f"  {results['python'][name] / results['cython'][name]:>8.1f}x"
        print(row)


if __name__ == "__main__":
    main()
