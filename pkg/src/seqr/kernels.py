"""Backend selection for the hot kernels.

The compiled extension ``seqr._kernels`` is used when it was built; otherwise
the numpy implementation in ``seqr._kernels_py`` is used. ``SEQR_BACKEND``
may be set to ``python`` or ``compiled`` to force a choice (``compiled``
raises if the extension is missing).
"""

import logging
import os
from functools import lru_cache

import numpy as np

from . import _kernels_py

log = logging.getLogger(__name__)

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_choice = os.environ.get("SEQR_BACKEND", "auto").lower()
if _choice == "python":
    _impl = _kernels_py
elif _choice == "compiled":
    if _compiled is None:
        raise ImportError("SEQR_BACKEND=compiled but seqr._kernels is not built")
    _impl = _compiled
elif _choice == "auto":
    _impl = _compiled if _compiled is not None else _kernels_py
else:
    raise ImportError(f"unknown SEQR_BACKEND {_choice!r}")

BACKEND = "compiled" if _impl is _compiled else "python"
log.debug("kernel backend: %s", BACKEND)


def available_backends():
    out = {"python": _kernels_py}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out


def _pick(backend):
    if not backend:
        return _impl
    found = available_backends()
    if backend not in found:
        raise ValueError(f"backend {backend!r} unavailable; have {sorted(found)}")
    return found[backend]


@lru_cache(maxsize=64)
def round_robin_schedule(p):
    """Pair schedule covering every index pair of ``range(p)`` exactly once per
    sweep, grouped into rounds of disjoint pairs. Shape (rounds, pairs, 2);
    ``-1`` marks the bye when ``p`` is odd."""
    slots = list(range(p)) + ([-1] if p % 2 else [])
    n = len(slots)
    rounds = []
    for _ in range(max(n - 1, 0)):
        pairs = []
        for k in range(n // 2):
            i, j = slots[k], slots[n - 1 - k]
            if i < 0 or j < 0:
                pairs.append((-1, -1))
            else:
                pairs.append((min(i, j), max(i, j)))
        rounds.append(pairs)
        slots = [slots[0]] + [slots[-1]] + slots[1:-1]
    sched = np.array(rounds, dtype=np.int64).reshape(len(rounds), n // 2, 2)
    sched.setflags(write=False)
    return sched


def householder_qr(b, backend=None):
    impl = _pick(backend)
    return impl.householder_qr(np.ascontiguousarray(b, dtype=np.float64))


def jacobi_rows(X, Y, tol, max_sweeps=60, backend=None):
    impl = _pick(backend)
    sched = round_robin_schedule(X.shape[0])
    if impl is _compiled:
        sched = np.ascontiguousarray(sched, dtype=np.int_)
    return impl.jacobi_rows(X, Y, sched, tol, max_sweeps)


def batched_matvec_norms(M, X, backend=None):
    impl = _pick(backend)
    return impl.batched_matvec_norms(M, X)
