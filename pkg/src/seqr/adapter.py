"""LoRA adapter libraries and their per-method preprocessed forms."""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, DegenerateAdapterError, DimensionError
from .linalg import _frozen, as_matrix, reduced_qr, thin_svd_product

METHODS = ("naive", "arrow", "spectr", "lag", "seqr", "mu")
FORM_KINDS = ("arrow", "spectr", "seqr")


@dataclass(frozen=True, eq=False)
class LoraAdapter:
    """One low-rank update ``b @ a`` (b: m x r, a: r x n).

    ``shares_a`` is set when ``a`` is the owning library's shared matrix.
    """

    id: str
    b: np.ndarray
    a: np.ndarray
    shares_a: bool = False

    @property
    def dims(self):
        return self.b.shape[0], self.a.shape[1], self.b.shape[1]

    def delta(self):
        return self.b @ self.a


@dataclass(frozen=True, eq=False)
class AdapterLibrary:
    adapters: tuple
    shared_a: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.adapters:
            raise DimensionError("adapter library is empty")
        dims = self.adapters[0].dims
        m, n, r = dims
        if r > min(m, n):
            raise DimensionError(f"rank {r} exceeds min(m, n) for dims {(m, n)}")
        ids = set()
        for ad in self.adapters:
            if ad.dims != dims or ad.a.shape[0] != ad.b.shape[1]:
                raise DimensionError(f"adapter {ad.id!r} has dims {ad.dims}, expected {dims}")
            if ad.id in ids:
                raise ValueError(f"duplicate adapter id {ad.id!r}")
            ids.add(ad.id)
            if self.shared_a is not None and (ad.a is not self.shared_a or not ad.shares_a):
                raise ConfigurationError(f"adapter {ad.id!r} does not reference the shared A")
            if self.shared_a is None and ad.shares_a:
                raise ConfigurationError(f"adapter {ad.id!r} claims a shared A the library lacks")
        object.__setattr__(self, "adapters", tuple(self.adapters))
        object.__setattr__(self, "meta", {str(k): str(v) for k, v in self.meta.items()})

    @classmethod
    def from_matrices(cls, bs, a=None, *, a_list=None, ids=None, scaling=1.0, meta=None):
        """Build a library from B matrices plus either one shared ``a`` or one
        ``a_list`` entry per adapter. ``scaling`` (LoRA alpha/r) is folded
        into every B here, so stored matrices are post-scaling."""
        if (a is None) == (a_list is None):
            raise ConfigurationError("give exactly one of a (shared) or a_list (unique)")
        bs = [as_matrix(b, "b") for b in bs]
        if ids is None:
            ids = [f"adapter{i}" for i in range(len(bs))]
        if len(ids) != len(bs):
            raise DimensionError("ids and B matrices differ in count")
        adapters = []
        if a is not None:
            shared = _frozen(as_matrix(a, "a"))
            for i, b in zip(ids, bs):
                adapters.append(LoraAdapter(str(i), _frozen(b * scaling), shared, True))
        else:
            shared = None
            if len(a_list) != len(bs):
                raise DimensionError("a_list and B matrices differ in count")
            for i, b, ai in zip(ids, bs, a_list):
                adapters.append(LoraAdapter(str(i), _frozen(b * scaling), _frozen(as_matrix(ai, "a"))))
        return cls(tuple(adapters), shared, dict(meta or {}))

    @property
    def n_adapters(self):
        return len(self.adapters)

    @property
    def dims(self):
        return self.adapters[0].dims

    @property
    def is_shared(self):
        return self.shared_a is not None

    @cached_property
    def b_stack(self):
        return _frozen(np.stack([ad.b for ad in self.adapters]))

    @cached_property
    def a_stack(self):
        """(N, r, n) view of every adapter's A; a zero-stride broadcast when shared."""
        if self.shared_a is not None:
            return np.broadcast_to(self.shared_a, (self.n_adapters,) + self.shared_a.shape)
        return _frozen(np.stack([ad.a for ad in self.adapters]))

    def index(self, adapter_id):
        for i, ad in enumerate(self.adapters):
            if ad.id == adapter_id:
                return i
        raise KeyError(adapter_id)


@dataclass(frozen=True, eq=False)
class ArrowForm:
    v: np.ndarray


@dataclass(frozen=True, eq=False)
class SpectrForm:
    b_hat: np.ndarray
    a_hat: np.ndarray


@dataclass(frozen=True, eq=False)
class SeqrForm:
    q: np.ndarray
    r_mat: np.ndarray


class FormSet(tuple):
    """Tuple of per-adapter forms that caches stacked arrays for scoring."""

    def stacked(self, attr):
        cache = self.__dict__.setdefault("_stacks", {})
        if attr not in cache:
            cache[attr] = _frozen(np.stack([getattr(f, attr) for f in self]))
        return cache[attr]


def stacked(forms, attr):
    if isinstance(forms, FormSet):
        return forms.stacked(attr)
    return np.stack([getattr(f, attr) for f in forms])


@dataclass(frozen=True, eq=False)
class RoutedForms:
    arrow: FormSet | None = None
    spectr: FormSet | None = None
    seqr: FormSet | None = None

    def kinds(self):
        return tuple(k for k in FORM_KINDS if getattr(self, k) is not None)


def build_arrow(adapter):
    """Unit right singular vector of ``b @ a`` for the largest singular value."""
    svd = thin_svd_product(adapter.b, adapter.a)
    if svd.s[0] == 0.0:
        raise DegenerateAdapterError(f"adapter {adapter.id!r} is zero; it has no principal direction")
    return ArrowForm(_frozen(svd.v[:, 0]))


def build_spectr(adapter):
    # rank budget is the adapter rank even when the numerical rank is lower
    svd = thin_svd_product(adapter.b, adapter.a)
    return SpectrForm(svd.u, _frozen(svd.s[:, None] * svd.v.T))


def build_seqr(adapter):
    if not adapter.shares_a:
        raise ConfigurationError(
            f"adapter {adapter.id!r} owns its A; QR routing requires every adapter to share one A"
        )
    qr = reduced_qr(adapter.b)
    return SeqrForm(qr.q, qr.r)


_BUILDERS = {"arrow": build_arrow, "spectr": build_spectr, "seqr": build_seqr}


def build_forms(lib, kind):
    return FormSet(_BUILDERS[kind](ad) for ad in lib.adapters)


def preprocess(lib, kinds=FORM_KINDS):
    """Run every requested builder over the library."""
    kinds = tuple(kinds)
    if "seqr" in kinds and not lib.is_shared:
        raise ConfigurationError("QR routing requires a shared-A library")
    return RoutedForms(**{k: build_forms(lib, k) for k in kinds})
