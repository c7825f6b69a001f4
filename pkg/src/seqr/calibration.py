"""Per-adapter activation-norm statistics and z-scoring."""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigurationError, DimensionError
from .linalg import _frozen

SIGMA_FLOOR = 1e-8
CALIBRATED_METHODS = ("naive", "spectr", "seqr")


@dataclass(frozen=True, eq=False)
class CalibrationStats:
    mu: np.ndarray
    sigma: np.ndarray
    method: str = "seqr"

    def __post_init__(self):
        mu = _frozen(np.asarray(self.mu, dtype=np.float64).ravel())
        sigma = _frozen(np.asarray(self.sigma, dtype=np.float64).ravel())
        if mu.shape != sigma.shape:
            raise DimensionError("mu and sigma differ in length")
        if not (np.isfinite(mu).all() and np.isfinite(sigma).all()) or (sigma <= 0).any():
            raise ValueError("calibration stats must be finite with sigma > 0")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def identity(cls, n_adapters, method="seqr"):
        return cls(np.zeros(n_adapters), np.ones(n_adapters), method)

    def __len__(self):
        return self.mu.shape[0]


def zscore(raw, stats):
    raw = np.asarray(raw, dtype=np.float64)
    if raw.shape != stats.mu.shape:
        raise DimensionError(f"{raw.shape[0]} scores for {len(stats)} calibrated adapters")
    return (raw - stats.mu) / stats.sigma


def own_norms(lib, forms, i, X, method):
    """Raw ``method`` score of adapter ``i`` for every row of ``X``."""
    k = X.shape[0]

    def rep(mat):
        return np.broadcast_to(mat, (k,) + mat.shape)

    if method == "naive":
        _, h, _ = kernels.batched_matvec_norms(rep(lib.a_stack[i]), X)
        return kernels.batched_matvec_norms(rep(lib.b_stack[i]), h)[0]
    if method == "spectr":
        return kernels.batched_matvec_norms(rep(forms.spectr[i].a_hat), X)[0]
    if method == "seqr":
        Z = X @ lib.shared_a.T
        return kernels.batched_matvec_norms(rep(forms.seqr[i].r_mat), Z)[0]
    raise ValueError(f"no calibration for method {method!r}; choose from {CALIBRATED_METHODS}")


def calibrate(lib, forms, samples, method="seqr", floor=SIGMA_FLOOR):
    """Mean and sample standard deviation (count - 1 divisor) of each
    adapter's raw score over that adapter's own samples, sigma floored.

    ``samples[i]`` is a (count, n) array of routed-layer inputs for adapter i.
    """
    if method not in CALIBRATED_METHODS:
        raise ValueError(f"no calibration for method {method!r}; choose from {CALIBRATED_METHODS}")
    if method == "seqr" and not lib.is_shared:
        raise ConfigurationError("QR routing requires a shared-A library")
    if len(samples) != lib.n_adapters:
        raise DimensionError(f"{len(samples)} sample sets for {lib.n_adapters} adapters")
    n = lib.dims[1]
    mu = np.empty(lib.n_adapters)
    sigma = np.empty(lib.n_adapters)
    for i, X in enumerate(samples):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != n:
            raise DimensionError(f"samples for adapter {i} must be (count, {n}), got {X.shape}")
        if X.shape[0] < 2:
            raise ValueError(f"adapter {i} has {X.shape[0]} calibration samples; need at least 2")
        norms = own_norms(lib, forms, i, X, method)
        mu[i] = norms.mean()
        sigma[i] = max(norms.std(ddof=1), floor)
    return CalibrationStats(mu, sigma, method)
