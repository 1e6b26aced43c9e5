"""Compare the compiled and NumPy selection kernels, then time whole strategies.

    python3 benchmarks/bench_kernels.py [--n 5000] [--dim 1290] [--k 500] [--repeat 3]

The default ``dim`` matches a 10-class gradient embedding over a 128-unit
hidden layer, which is what BADGE seeds on.
"""

import argparse
import time

import numpy as np

from poolal import kernels
from poolal.data import PoolState, RngStream, generate_gaussian_blobs
from poolal.learner import TrainConfig, train
from poolal.strategies import SelectionContext, select


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_kernels(n, dim, k, repeat):
    gen = np.random.default_rng(0)
    x = gen.normal(size=(n, dim))
    centers = gen.normal(size=(100, dim))
    u = gen.random(k)
    impls = kernels.backends()
    print(f"kernels: n={n} dim={dim} k={k} (best of {repeat})")
    print(f"{'kernel':<16}" + "".join(f"{name:>12}" for name in impls) + f"{'speedup':>10}")
    cases = {
        "min_sqdist": lambda impl: kernels.min_sqdist(x, centers, impl),
        "kcenter_greedy": lambda impl: kernels.kcenter_greedy(x, np.full(n, np.inf), k, impl),
        "kmeanspp_seed": lambda impl: kernels.kmeanspp_seed(x, k, u, impl),
    }
    for label, run in cases.items():
        times, outs = {}, {}
        for name, impl in impls.items():
            times[name], outs[name] = best_of(lambda: run(impl), repeat)
        if len(outs) > 1:
            ref = outs["python"]
            for name, out in outs.items():
                if label == "min_sqdist":
                    assert np.allclose(out, ref, rtol=1e-10, atol=1e-10), name
                else:
                    assert np.array_equal(out, ref), f"{label}: {name} disagrees with python"
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{label:<16}" + "".join(f"{times[name]:>11.4f}s" for name in impls) + f"{speed:>9.1f}x")


def bench_strategies(n_unlabeled, k, repeat):
    C, D = 10, 16
    per = (n_unlabeled + 100) // C + 1
    ds = generate_gaussian_blobs(C, per, D, 0.5, RngStream(1))
    gen = np.random.default_rng(1)
    lab = np.sort(gen.choice(len(ds), 100, replace=False))
    unl = np.setdiff1d(np.arange(len(ds)), lab)[:n_unlabeled]
    pool = PoolState(labeled=lab, unlabeled=unl)
    model = train(ds, lab, TrainConfig(epochs=30), RngStream(2))
    print(f"\nstrategies: |U|={unl.size} k={k} backend={kernels.BACKEND} (best of {repeat})")
    rows = []
    for name in ("random", "entropy", "bald", "margin", "coreset", "coreset_cb", "badge", "alfamix", "saal"):
        secs = min(select(name, SelectionContext(ds, pool, model, RngStream(3, r)), k).elapsed_seconds for r in range(repeat))
        rows.append((secs, name))
    for secs, name in sorted(rows, reverse=True):
        print(f"  {name:<12}{secs:>10.4f}s")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--dim", type=int, default=1290)
    p.add_argument("--k", type=int, default=500)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--skip-strategies", action="store_true")
    args = p.parse_args()
    bench_kernels(args.n, args.dim, args.k, args.repeat)
    if not args.skip_strategies:
        bench_strategies(args.n, args.k, args.repeat)


if __name__ == "__main__":
    main()
