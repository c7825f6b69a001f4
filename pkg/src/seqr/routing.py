"""Adapter scoring, selection and application for every routing method.

The ``raw_*`` helpers return ``(scores, aux, macs)`` where ``macs`` counts the
multiply-accumulates actually executed; the public ``score_*`` functions wrap
them and drop the count. The cost harness calls the ``raw_*`` helpers so the
measured path is the routing path.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .adapter import stacked
from .calibration import zscore
from .errors import ConfigurationError, DimensionError, NonFiniteError
from .linalg import as_matrix, as_vector

MU_SELECTED = -1


@dataclass(frozen=True)
class BaseLayer:
    w: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w", as_matrix(self.w, "w"))


@dataclass(frozen=True, eq=False)
class RoutingDecision:
    scores: np.ndarray
    selected: int
    method: str
    k: int | None = None

    def to_record(self):
        """JSON-ready dict; the -inf LAG sentinel is written as null."""
        return {
            "method": self.method,
            "k": self.k,
            "selected": int(self.selected),
            "scores": [None if math.isinf(s) else float(s) for s in self.scores],
        }


def _check_x(x, n):
    x = as_vector(x, "x")
    if x.shape[0] != n:
        raise DimensionError(f"input has length {x.shape[0]}, adapters expect {n}")
    return x


def _bcast(x, count):
    return np.broadcast_to(x, (count, x.shape[0]))


def raw_naive(b_stack, a_stack, x):
    """Direct activation norms ||B_i A_i x||; A_i x is recomputed per adapter."""
    N = b_stack.shape[0]
    _, h, macs_a = kernels.batched_matvec_norms(a_stack, _bcast(x, N))
    norms, _, macs_b = kernels.batched_matvec_norms(b_stack, h)
    return norms, h, macs_a + macs_b


def raw_arrow(v_stack, x):
    N = v_stack.shape[0]
    _, h, macs = kernels.batched_matvec_norms(v_stack[:, None, :], _bcast(x, N))
    return np.abs(h[:, 0]), h[:, 0], macs


def raw_spectr(a_hat_stack, x):
    norms, h, macs = kernels.batched_matvec_norms(a_hat_stack, _bcast(x, a_hat_stack.shape[0]))
    return norms, h, macs


def raw_seqr(r_stack, z):
    norms, h, macs = kernels.batched_matvec_norms(r_stack, _bcast(z, r_stack.shape[0]))
    return norms, h, macs


def select(scores):
    """Index of the maximum score, lowest index on ties. ``-inf`` entries are
    allowed (filtered-out adapters); NaN and ``+inf`` are not."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise DimensionError("cannot select from an empty score list")
    if np.isnan(s).any() or np.isposinf(s).any():
        raise NonFiniteError("scores contain NaN or +inf")
    return int(np.argmax(s))


def score_naive(lib, x):
    x = _check_x(x, lib.dims[1])
    return raw_naive(lib.b_stack, lib.a_stack, x)[0]


def score_arrow(forms, x):
    v = stacked(forms, "v")
    x = _check_x(x, v.shape[1])
    return raw_arrow(v, x)[0]


def score_spectr(forms, x, stats=None):
    a_hat = stacked(forms, "a_hat")
    x = _check_x(x, a_hat.shape[2])
    raw = raw_spectr(a_hat, x)[0]
    return raw if stats is None else zscore(raw, stats)


def score_seqr(forms, shared_a, x, stats=None):
    """Returns ``(scores, h, z)``: ``z = A x`` is computed once and
    ``h[i] = R_i z`` is kept for :func:`apply_seqr`."""
    if shared_a is None:
        raise ConfigurationError("QR routing requires a shared A; this library has one A per adapter")
    shared_a = as_matrix(shared_a, "shared_a")
    x = _check_x(x, shared_a.shape[1])
    z = shared_a @ x
    raw, h, _ = raw_seqr(stacked(forms, "r_mat"), z)
    scores = raw if stats is None else zscore(raw, stats)
    return scores, h, z


def arrow_top_k(arrow_scores, k):
    # stable sort keeps the lowest index first among equal scores
    return np.sort(np.argsort(-np.asarray(arrow_scores), kind="stable")[:k])


def route_lag(arrows, spectr, x, k, stats=None):
    """Arrow top-k filter, then SpectR selection inside the filtered set.
    Filtered-out adapters carry ``-inf`` in the returned scores."""
    N = len(arrows)
    if len(spectr) != N:
        raise DimensionError("arrow and spectr form lists differ in length")
    if not 1 <= k <= N:
        raise ValueError(f"k={k} outside [1, {N}]")
    keep = arrow_top_k(score_arrow(arrows, x), k)
    a_hat = stacked(spectr, "a_hat")[keep]
    raw = raw_spectr(a_hat, _check_x(x, a_hat.shape[2]))[0]
    if stats is not None:
        raw = (raw - stats.mu[keep]) / stats.sigma[keep]
    scores = np.full(N, -np.inf)
    scores[keep] = raw
    return RoutingDecision(scores, select(scores), "lag", k)


def route(method, lib, forms, x, *, k=None, stats=None):
    """Score ``x`` with ``method`` and return the decision."""
    if method == "naive":
        s = score_naive(lib, x)
    elif method == "arrow":
        s = score_arrow(_need(forms, "arrow"), x)
    elif method == "spectr":
        s = score_spectr(_need(forms, "spectr"), x, stats)
    elif method == "seqr":
        s = score_seqr(_need(forms, "seqr"), lib.shared_a, x, stats)[0]
    elif method == "lag":
        return route_lag(_need(forms, "arrow"), _need(forms, "spectr"), x, k, stats)
    elif method == "mu":
        # no selection; every adapter contributes equally
        _check_x(x, lib.dims[1])
        return RoutingDecision(np.full(lib.n_adapters, 1.0 / lib.n_adapters), MU_SELECTED, "mu")
    else:
        raise ValueError(f"unknown method {method!r}")
    return RoutingDecision(np.asarray(s), select(s), method)


def _need(forms, kind):
    got = None if forms is None else getattr(forms, kind)
    if got is None:
        raise ConfigurationError(f"{kind} forms are missing; preprocess the library first")
    return got


def _check_base(base, m, n):
    if base.w.shape != (m, n):
        raise DimensionError(f"base layer is {base.w.shape}, adapters are {(m, n)}")


def apply_seqr(base, x, winner, h_winner):
    """``W x + Q h``; equals ``W x + B A x`` for the winning adapter."""
    x = as_vector(x, "x")
    h = as_vector(h_winner, "h_winner")
    m, r = winner.q.shape
    if h.shape[0] != r or base.w.shape[0] != m or base.w.shape[1] != x.shape[0]:
        raise DimensionError("base, x, Q and h dimensions do not line up")
    return base.w @ x + winner.q @ h


def apply_generic(base, x, adapter):
    m, n, _ = adapter.dims
    _check_base(base, m, n)
    x = _check_x(x, n)
    return base.w @ x + adapter.b @ (adapter.a @ x)


def mu_merge(lib, base, x):
    """``W x`` plus the mean of every adapter's update."""
    if lib.n_adapters == 0:
        raise DimensionError("mean routing over an empty library")
    m, n, _ = lib.dims
    _check_base(base, m, n)
    x = _check_x(x, n)
    if lib.is_shared:
        z = lib.shared_a @ x
        upd = np.einsum("kmr,r->m", lib.b_stack, z)
    else:
        upd = np.einsum("kmr,kr->m", lib.b_stack, np.einsum("krn,n->kr", lib.a_stack, x))
    return base.w @ x + upd / lib.n_adapters
