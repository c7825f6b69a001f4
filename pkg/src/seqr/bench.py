"""Routing cost models, instrumented multiply-accumulate counts and sweeps.

One multiply-accumulate is one FLOP. The shared ``z = A x`` product of QR
routing (r*n MACs per query) is kept out of its routing cost and reported in
its own ``overhead_flops`` column.
"""

import csv
import io
import statistics
import time
from dataclasses import dataclass, replace

import numpy as np

from .adapter import stacked
from .errors import ConfigurationError
from .routing import arrow_top_k, raw_arrow, raw_naive, raw_seqr, raw_spectr

COST_METHODS = ("naive", "spectr", "lag", "arrow", "seqr")
AXES = {"hidden_dim": "n", "num_adapters": "n_adapters", "rank": "r"}
DEFAULT_GRIDS = {
    "hidden_dim": (512, 1024, 2048, 4096, 8192),
    "num_adapters": (10, 100, 1000, 10000),
    "rank": (8, 16, 32, 64, 128, 256),
}
CSV_COLUMNS = ("axis_value", "method", "model_flops", "measured_flops", "storage_params", "wall_ns", "overhead_flops")


@dataclass(frozen=True)
class CostParams:
    n_adapters: int = 1000
    m: int = 4096
    n: int = 4096
    r: int = 8
    lag_k: int = 20

    def __post_init__(self):
        if min(self.n_adapters, self.m, self.n, self.r, self.lag_k) < 1:
            raise ValueError("cost parameters must be positive")
        if self.lag_k > self.n_adapters:
            raise ValueError(f"lag_k={self.lag_k} exceeds n_adapters={self.n_adapters}")


REFERENCE_PARAMS = CostParams(n_adapters=1000, m=4096, n=4096, r=8, lag_k=20)


@dataclass(frozen=True)
class CostReport:
    method: str
    model_flops: int
    measured_flops: int
    storage_params: int
    wall_ns: int
    overhead_flops: int = 0


def flops_model(method, p):
    N, m, n, r, k = p.n_adapters, p.m, p.n, p.r, p.lag_k
    table = {
        "naive": N * r * (m + n),
        "spectr": N * r * n,
        "lag": N * n + k * r * n,
        "arrow": N * n,
        "seqr": N * r * r,
    }
    if method not in table:
        raise ValueError(f"no routing cost model for {method!r}")
    return table[method]


def storage_model(method, p, shared_a=True):
    """Parameters held in memory to route and apply with ``method``."""
    N, m, n, r = p.n_adapters, p.m, p.n, p.r
    base = r * n + N * m * r if shared_a else N * r * (m + n)
    if method in ("naive", "mu"):
        return base
    if method == "arrow":
        return base + N * n
    if method == "seqr":
        if not shared_a:
            raise ConfigurationError("QR routing is only defined for a shared A")
        return base + N * r * r
    if method == "spectr":
        # U_i and A_hat_i are per adapter even when A is shared
        return N * r * (m + n)
    if method == "lag":
        return N * r * (m + n) + N * n
    raise ValueError(f"no storage model for {method!r}")


def storage_extra(method, p):
    """Per-library parameters a method adds on top of the shared-A base."""
    return storage_model(method, p, True) - storage_model("naive", p, True)


def humanize(count):
    """Compact count: nearest integer in the largest unit that keeps it >= 1
    (e.g. 4751360 -> '5M')."""
    for unit, suffix in ((10**9, "G"), (10**6, "M"), (10**3, "K")):
        if count >= unit:
            return f"{round(count / unit)}{suffix}"
    return str(count)


def round_sig(count, sig):
    if count == 0:
        return 0
    digits = len(str(int(abs(count))))
    q = 10 ** max(digits - sig, 0)
    return int(round(count / q) * q)


class LibraryWorkload:
    """Cost workload backed by a real library and its preprocessed forms."""

    def __init__(self, lib, forms):
        self.lib = lib
        self.forms = forms
        self.n_adapters = lib.n_adapters
        self.m, self.n, self.r = lib.dims

    def blocks(self, method, start, stop):
        f = self.forms
        if method == "naive":
            return self.lib.b_stack[start:stop], self.lib.a_stack[start:stop]
        if method == "arrow":
            if f is None or f.arrow is None:
                raise ConfigurationError("arrow forms missing")
            return (stacked(f.arrow, "v")[start:stop],)
        if method == "spectr":
            if f is None or f.spectr is None:
                raise ConfigurationError("spectr forms missing")
            return (stacked(f.spectr, "a_hat")[start:stop],)
        if method == "seqr":
            if f is None or f.seqr is None or self.lib.shared_a is None:
                raise ConfigurationError("seqr forms or shared A missing")
            return (stacked(f.seqr, "r_mat")[start:stop],)
        raise ValueError(method)

    def spectr_rows(self, idx):
        return self.blocks("spectr", 0, self.n_adapters)[0][idx]

    def shared_a(self):
        return self.lib.shared_a


class SyntheticWorkload:
    """Operands drawn on demand, block by block, so cost measurements at the
    reference scale (1000 adapters, n = 4096) never hold the whole library.
    Operand values do not affect MAC counts."""

    def __init__(self, p, seed=0):
        self.p = p
        self.seed = seed
        self.n_adapters, self.r, self.n, self.m = p.n_adapters, p.r, p.n, p.m

    def _draw(self, tag, start, stop, shape):
        rng = np.random.Generator(np.random.PCG64([self.seed, tag, start]))
        return rng.random((stop - start,) + shape)

    def blocks(self, method, start, stop):
        p = self.p
        if method == "naive":
            return self._draw(1, start, stop, (p.m, p.r)), self._draw(2, start, stop, (p.r, p.n))
        if method == "arrow":
            return (self._draw(3, start, stop, (p.n,)),)
        if method == "spectr":
            return (self._draw(4, start, stop, (p.r, p.n)),)
        if method == "seqr":
            return (np.triu(self._draw(5, start, stop, (p.r, p.r))),)
        raise ValueError(method)

    def spectr_rows(self, idx):
        return np.stack([self.blocks("spectr", int(i), int(i) + 1)[0][0] for i in idx])

    def shared_a(self):
        return self._draw(6, 0, 1, (self.p.r, self.p.n))[0]


def _chunk(workload, method, budget=1 << 22):
    w = workload
    per = {"naive": w.r * (w.n + w.m), "arrow": w.n, "spectr": w.r * w.n, "seqr": w.r * w.r}[method]
    return max(1, budget // per)


def _score_pass(method, workload, x, k):
    """One query through the scoring path.

    Returns (scores, routing MACs, overhead MACs, ns spent scoring); operand
    fetching is excluded from the time.
    """
    N = workload.n_adapters
    if method == "lag":
        arrow, macs, _, ns = _score_pass("arrow", workload, x, k)
        rows = workload.spectr_rows(arrow_top_k(arrow, k))
        t0 = time.perf_counter_ns()
        s, _, m2 = raw_spectr(rows, x)
        return s, macs + m2, 0, ns + time.perf_counter_ns() - t0
    overhead = ns = 0
    vec = x
    if method == "seqr":
        a = workload.shared_a()
        t0 = time.perf_counter_ns()
        vec = a @ x
        ns += time.perf_counter_ns() - t0
        overhead = a.size
    step = _chunk(workload, method)
    parts, macs = [], 0
    for start in range(0, N, step):
        blk = workload.blocks(method, start, min(start + step, N))
        t0 = time.perf_counter_ns()
        if method == "naive":
            s, _, c = raw_naive(blk[0], blk[1], vec)
        elif method == "arrow":
            s, _, c = raw_arrow(blk[0], vec)
        elif method == "spectr":
            s, _, c = raw_spectr(blk[0], vec)
        else:
            s, _, c = raw_seqr(blk[0], vec)
        ns += time.perf_counter_ns() - t0
        parts.append(s)
        macs += c
    return np.concatenate(parts), macs, overhead, ns


def measure(method, workload, queries, p, reps=5):
    """Count MACs through the scoring path (preprocessing excluded) and time
    it; ``wall_ns`` is the median over ``reps`` passes of all queries and
    ``measured_flops`` is per query."""
    if method not in COST_METHODS:
        raise ValueError(f"cannot measure {method!r}")
    queries = [np.asarray(getattr(q, "x", q), dtype=np.float64) for q in queries]
    if not queries:
        raise ValueError("measure needs at least one query")
    times, macs, over = [], 0, 0
    for rep in range(max(reps, 1)):
        total = over_total = ns_total = 0
        for x in queries:
            _, c, o, ns = _score_pass(method, workload, x, p.lag_k)
            total += c
            over_total += o
            ns_total += ns
        times.append(ns_total)
        if rep == 0:
            macs, over = total, over_total
        elif total != macs:
            raise RuntimeError("MAC count changed between repetitions")
    nq = len(queries)
    return CostReport(
        method=method,
        model_flops=flops_model(method, p),
        measured_flops=macs // nq,
        storage_params=storage_model(method, p, shared_a=True),
        wall_ns=int(statistics.median(times)),
        overhead_flops=over // nq,
    )


def model_report(method, p):
    return CostReport(method, flops_model(method, p), 0, storage_model(method, p, True), 0,
                      p.r * p.n if method == "seqr" else 0)


def sweep(axis, grid=None, fixed=REFERENCE_PARAMS, methods=COST_METHODS, do_measure=True, reps=5, n_queries=1, seed=0):
    """One row per (grid point, method). Only the swept field changes;
    ``m`` follows ``n`` on the hidden-dimension axis."""
    if axis not in AXES:
        raise ValueError(f"axis must be one of {sorted(AXES)}")
    grid = DEFAULT_GRIDS[axis] if grid is None else tuple(grid)
    rows = []
    for value in grid:
        changes = {AXES[axis]: int(value)}
        if axis == "hidden_dim":
            changes["m"] = int(value)
        if axis == "num_adapters":
            changes["lag_k"] = min(fixed.lag_k, int(value))
        p = replace(fixed, **changes)
        if do_measure:
            work = SyntheticWorkload(p, seed)
            rng = np.random.Generator(np.random.PCG64([seed, 99]))
            qs = [rng.standard_normal(p.n) for _ in range(n_queries)]
        for method in methods:
            rep = measure(method, work, qs, p, reps) if do_measure else model_report(method, p)
            rows.append((int(value), rep))
    return rows


def rows_to_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for value, rep in rows:
        w.writerow((value, rep.method, rep.model_flops, rep.measured_flops, rep.storage_params, rep.wall_ns,
                    rep.overhead_flops))
    return buf.getvalue()
