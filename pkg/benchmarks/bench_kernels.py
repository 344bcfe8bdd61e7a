"""Time each compiled kernel against its numpy twin.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--csv out.csv]

The first compiled call is excluded (warm-up), so the numbers compare steady-state
throughput.  Both paths are imported from the same process; the
``ISINGMF_DISABLE_NUMBA`` switch only changes which one the library dispatches to.
"""
import argparse
import csv
import sys
import time

import numpy as np

from isingmf import Mrf
from isingmf import kernels as K


def _sym(rng, n, scale=0.3):
    A = np.triu(rng.normal(0, scale, (n, n)), 1)
    return A + A.T


def cases(rng):
    """Yield (name, jit_call, numpy_call); each call builds its own mutable inputs."""
    J, h = _sym(rng, 16), rng.normal(size=16)
    yield "ising_logz n=16", lambda: K.ising_logz_jit(J, h), lambda: K.ising_logz_numpy(J, h)

    terms = {tuple(sorted(rng.choice(14, 3, replace=False).tolist())): float(rng.normal()) for _ in range(30)}
    idx, coef, ptr, inc = Mrf(14, terms, order=3).packed()
    yield ("mrf_logz n=14 r=3", lambda: K.mrf_logz_jit(14, idx, coef, ptr, inc),
           lambda: K.mrf_logz_numpy(14, idx, coef))

    W = rng.normal(size=(16, 16))
    yield "inf_to_one 16x16", lambda: K.inf_to_one_jit(W), lambda: K.inf_to_one_numpy(W)
    yield "best_rowset 16x16", lambda: K.best_rowset_jit(W), lambda: K.best_rowset_numpy(W)

    Jg, hg = _sym(rng, 200, 0.02), rng.normal(size=200)
    x0 = rng.uniform(-0.5, 0.5, 200)
    yield ("gauss_seidel n=200", lambda: K.gauss_seidel_jit(Jg, hg, x0.copy(), -1.0, 1.0, 50, 0.0),
           lambda: K.gauss_seidel_numpy(Jg, hg, x0.copy(), -1.0, 1.0, 50, 0.0))

    n, T = 100, 50_000
    Jb, hb = np.abs(_sym(rng, n, 0.01)), rng.normal(size=n)
    s0 = rng.choice([-1.0, 1.0], n)
    sites, U = rng.integers(0, n, T), rng.random(T)
    yield ("glauber n=100 50k steps", lambda: K.glauber_jit(Jb, hb, s0.copy(), Jb @ s0, sites, U),
           lambda: K.glauber_numpy(Jb, hb, s0.copy(), Jb @ s0, sites, U))

    base, m = Jb[:10, :10].copy(), 200
    spins = rng.choice([-1.0, 1.0], 10 * m)
    Y = spins.reshape(10, m).sum(axis=1)
    sb = rng.integers(0, 10 * m, T)
    yield ("glauber_blowup n=10 m=200", lambda: K.glauber_blowup_jit(base, 0.1, m, spins.copy(), Y.copy(), sb, U),
           lambda: K.glauber_blowup_numpy(base, 0.1, m, spins.copy(), Y.copy(), sb, U))

    M = np.ascontiguousarray(rng.choice([0.0, 1.0], (4, 16)))
    v = rng.dirichlet(np.ones(16))
    f = rng.normal(size=16)
    c = 0.5 * (M @ v) * rng.uniform(-0.5, 0.5, 4)
    yield ("entropy_cd K=4 A=16", lambda: K.entropy_cd_jit(M, v, f, c - 0.05, c + 0.05, 1e-10, 10_000, np.zeros(16)),
           lambda: K.entropy_cd_numpy(M, v, f, c - 0.05, c + 0.05, 1e-10, 10_000, np.zeros(16)))

    levels = np.linspace(-0.8, 0.8, 5)
    axes = np.array([[0, 1], [2, 3]], dtype=np.int64)
    coefs = rng.normal(size=2)
    yield ("grid_search K=4 L=5",
           lambda: K.grid_search_jit(M, v, f, levels, 0.2, axes, coefs, 50.0, 1e-10, 10_000, np.zeros(16),
                                     np.zeros(64, dtype=np.int64)),
           lambda: K.grid_search_numpy(M, v, f, levels, 0.2, axes, coefs, 50.0, 1e-10, 10_000, np.zeros(16),
                                       np.zeros(64, dtype=np.int64)))


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--csv", help="also write results here")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rows = []
    print(f"{'kernel':28s} {'numba s':>10s} {'numpy s':>10s} {'speedup':>8s}")
    for name, jit_fn, np_fn in cases(np.random.default_rng(args.seed)):
        jit_fn()  # compile
        tj, tn = best_time(jit_fn, args.repeat), best_time(np_fn, args.repeat)
        rows.append((name, tj, tn, tn / tj))
        print(f"{name:28s} {tj:10.4f} {tn:10.4f} {tn / tj:8.1f}x")
        sys.stdout.flush()
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kernel", "numba_s", "numpy_s", "speedup"])
            w.writerows(rows)


if __name__ == "__main__":
    main()
