"""Randomized checks of the routing equivalences, used by ``seqr verify``."""

from dataclasses import dataclass

import numpy as np

from .adapter import AdapterLibrary, preprocess
from .routing import (
    BaseLayer,
    apply_seqr,
    arrow_top_k,
    route_lag,
    score_arrow,
    score_naive,
    score_seqr,
    score_spectr,
    select,
)
from .synthgen import counterexample_pair

REL_TOL = 1e-9
MARGIN = 1e-6


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str

    def line(self):
        return f"{'PASS' if self.ok else 'FAIL'} {self.name}: {self.detail}"


def random_library(rng, shared, max_dim=128, max_rank=16, max_adapters=8):
    m = int(rng.integers(2, max_dim + 1))
    n = int(rng.integers(2, max_dim + 1))
    r = int(rng.integers(1, min(max_rank, m, n) + 1))
    N = int(rng.integers(2, max_adapters + 1))
    # spread adapter scales so norms differ by more than rounding
    bs = [rng.standard_normal((m, r)) * rng.uniform(0.2, 5.0) for _ in range(N)]
    if shared:
        return AdapterLibrary.from_matrices(bs, rng.standard_normal((r, n)))
    return AdapterLibrary.from_matrices(bs, a_list=[rng.standard_normal((r, n)) for _ in range(N)])


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300))) if a.size else 0.0


def clear_margin(naive):
    top = np.sort(naive)[::-1]
    return top.size < 2 or top[0] - top[1] > MARGIN * abs(top[0])


def check_counterexample():
    lib, x = counterexample_pair()
    forms = preprocess(lib, ("arrow",))
    arrow = score_arrow(forms.arrow, x)
    naive = score_naive(lib, x)
    ok = (
        np.allclose(arrow, [1.0, 1.0 / np.sqrt(2.0)], rtol=0, atol=1e-12)
        and np.allclose(naive, [2.0, np.sqrt(5.0)], rtol=0, atol=1e-12)
        and select(arrow) == 0
        and select(naive) == 1
    )
    detail = f"arrow winner {select(arrow)} scores {arrow.tolist()}; naive winner {select(naive)} scores {naive.tolist()}"
    return CheckResult("arrow-counterexample", bool(ok), detail)


def check_equivalence(method, trials=200, seed=0):
    """Raw SpectR or SEQR scores against direct activation norms."""
    rng = np.random.default_rng([seed, 1 if method == "spectr" else 2])
    worst, mismatches, apply_worst = 0.0, 0, 0.0
    for t in range(trials):
        shared = method == "seqr" or t % 2 == 0
        lib = random_library(rng, shared)
        forms = preprocess(lib, (method,))
        x = rng.standard_normal(lib.dims[1])
        naive = score_naive(lib, x)
        if method == "spectr":
            raw = score_spectr(forms.spectr, x)
        else:
            raw, h, _ = score_seqr(forms.seqr, lib.shared_a, x)
            w = rng.standard_normal(lib.dims[:2])
            i = select(raw)
            y = apply_seqr(BaseLayer(w), x, forms.seqr[i], h[i])
            ad = lib.adapters[i]
            direct = w @ x + ad.b @ (ad.a @ x)
            apply_worst = max(apply_worst, float(np.linalg.norm(y - direct) / max(np.linalg.norm(direct), 1e-300)))
        worst = max(worst, rel_err(raw, naive))
        if clear_margin(naive) and select(raw) != select(naive):
            mismatches += 1
    ok = worst <= REL_TOL and mismatches == 0 and apply_worst <= REL_TOL
    detail = f"{trials} trials, max rel err {worst:.2e}, argmax mismatches {mismatches}"
    if method == "seqr":
        detail += f", apply rel err {apply_worst:.2e}"
    return CheckResult(f"{method}-equals-norm", ok, detail)


def check_lag(trials=100, seed=0):
    """Containment and per-query monotonicity of LAG accuracy in k."""
    rng = np.random.default_rng([seed, 3])
    bad = 0
    for _ in range(trials):
        lib = random_library(rng, shared=False, max_dim=32, max_rank=4)
        forms = preprocess(lib, ("arrow", "spectr"))
        x = rng.standard_normal(lib.dims[1])
        naive = score_naive(lib, x)
        if not clear_margin(naive):
            continue
        target = select(naive)
        arrow = score_arrow(forms.arrow, x)
        prev = False
        for k in range(1, lib.n_adapters + 1):
            sel = route_lag(forms.arrow, forms.spectr, x, k).selected
            top = arrow_top_k(arrow, k)
            correct = sel == target
            if sel not in top or (target in top and not correct) or (prev and not correct):
                bad += 1
            prev = correct
        if not prev:
            bad += 1
    return CheckResult("lag-containment-monotone", bad == 0, f"{trials} libraries, {bad} violations")


def check_scale(trials=100, seed=0):
    rng = np.random.default_rng([seed, 4])
    bad = 0
    for _ in range(trials):
        lib = random_library(rng, shared=True, max_dim=32, max_rank=4)
        forms = preprocess(lib)
        x = rng.standard_normal(lib.dims[1])
        c = float(rng.uniform(0.1, 10.0))
        for score in (
            lambda v: score_spectr(forms.spectr, v),
            lambda v: score_seqr(forms.seqr, lib.shared_a, v)[0],
            lambda v: score_arrow(forms.arrow, v),
        ):
            s1, s2 = score(x), score(c * x)
            if rel_err(s2, c * s1) > REL_TOL or (clear_margin(s1) and select(s1) != select(s2)):
                bad += 1
    return CheckResult("scale-equivariance", bad == 0, f"{trials} libraries, {bad} violations")


def run_all(trials=200, seed=0):
    return [
        check_counterexample(),
        check_equivalence("spectr", trials, seed),
        check_equivalence("seqr", trials, seed),
        check_lag(max(trials // 2, 1), seed),
        check_scale(max(trials // 2, 1), seed),
    ]
