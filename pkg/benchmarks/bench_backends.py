"""Compare the compiled and pure-numpy kernel backends.

    python3 benchmarks/bench_backends.py [--reps 5]

Prints one CSV row per (kernel, shape, backend) with the median wall time.
"""

import argparse
import csv
import statistics
import sys
import time

import numpy as np

from seqr import kernels


def timed(fn, reps):
    fn()
    out = []
    for _ in range(reps):
        t0 = time.perf_counter_ns()
        fn()
        out.append(time.perf_counter_ns() - t0)
    return int(statistics.median(out))


def cases(rng):
    for m, r in ((64, 8), (512, 16), (4096, 16)):
        b = rng.standard_normal((m, r))
        yield "householder_qr", f"{m}x{r}", lambda be, b=b: kernels.householder_qr(b, backend=be)
    for p, n in ((8, 64), (16, 128), (16, 1024)):
        x = rng.standard_normal((p, n))

        def jac(be, x=x, p=p, n=n):
            kernels.jacobi_rows(x.copy(), np.eye(p), tol=n * np.finfo(float).eps, backend=be)

        yield "jacobi_rows", f"{p}x{n}", jac
    for N, q, n in ((100, 16, 64), (1000, 8, 512), (1000, 16, 16)):
        M = rng.standard_normal((N, q, n))
        X = rng.standard_normal((N, n))
        yield "batched_matvec_norms", f"{N}x{q}x{n}", lambda be, M=M, X=X: kernels.batched_matvec_norms(M, X, be)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=5)
    args = ap.parse_args(argv)
    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; timing the numpy backend only", file=sys.stderr)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(("kernel", "shape", "backend", "median_ns", "speedup_vs_python"))
    for name, shape, fn in cases(np.random.default_rng(0)):
        times = {be: timed(lambda: fn(be), args.reps) for be in backends}
        for be, ns in times.items():
            w.writerow((name, shape, be, ns, f"{times['python'] / ns:.2f}"))


if __name__ == "__main__":
    main()
