"""Deterministic synthetic adapter libraries and labelled query workloads.

Every draw comes from numpy's PCG64 bit generator seeded with
``[seed, stream]``, so libraries and queries are a pure function of the
:class:`SynthSpec` on every platform.

Construction. Each adapter reads its input through an r-dimensional
coordinate frame ``y = Q^T x`` (``Q``: n x r orthonormal). With a shared A,
``Q`` spans the row space of A and is common to all adapters; otherwise each
adapter gets its own frame containing its task subspace. ``B`` is then
solved for so that ``B A x = bias * O D y``, where ``O`` has orthonormal
columns and ``D`` stretches the task directions by ``signal_gain``.
Adversarial pairs embed the 2x2 Arrow counterexample into a private plane.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .adapter import AdapterLibrary
from .container import atomic_write
from .errors import DimensionError, TruncationError
from .linalg import _frozen, reduced_qr, thin_svd
from .routing import raw_naive, select

GENERATOR = "PCG64"
LIBRARY_STREAM, QUERY_STREAM, CALIBRATION_STREAM = 0, 1, 2

# the literal 2x2 counterexample pair
PAIR_C = np.array([[2.0, 0.0], [0.0, 1.0]])
PAIR_D = np.array([[3.0, 3.0], [1.0, -1.0]]) / np.sqrt(2.0)


def rng_for(seed, stream):
    return np.random.Generator(np.random.PCG64([int(seed) & 0xFFFFFFFFFFFFFFFF, stream]))


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    n_adapters: int = 10
    m: int = 64
    n: int = 64
    r: int = 16
    shared_a: bool = True
    task_subspace_dim: int = 1
    signal_gain: float = 4.0
    noise_level: float = 0.1
    bias_scales: tuple | None = None
    adversarial_pairs: int = 0

    def __post_init__(self):
        if self.bias_scales is not None:
            object.__setattr__(self, "bias_scales", tuple(float(b) for b in self.bias_scales))
        self.validate()

    @property
    def n_task(self):
        return self.n_adapters - 2 * self.adversarial_pairs

    def validate(self):
        if min(self.n_adapters, self.m, self.n, self.r) < 1:
            raise DimensionError("adapter count and dimensions must be positive")
        if self.r > min(self.m, self.n):
            raise DimensionError(f"rank {self.r} exceeds min(m, n)={min(self.m, self.n)}")
        d = self.task_subspace_dim
        if not 1 <= d <= self.n:
            raise DimensionError(f"task subspace dim {d} outside [1, n={self.n}]")
        if d > self.r:
            raise DimensionError(f"task subspace dim {d} exceeds adapter rank {self.r}")
        if not self.signal_gain > 1.0:
            raise ValueError("signal_gain must exceed 1")
        if not self.noise_level >= 0.0:
            raise ValueError("noise_level must be nonnegative")
        if self.adversarial_pairs < 0 or self.n_task < 0:
            raise ValueError("adversarial pairs need two adapters each")
        if self.adversarial_pairs and (self.r < 2 or self.m < 2 or self.n < 2):
            raise DimensionError("adversarial pairs need m, n, r >= 2")
        if self.adversarial_pairs and self.shared_a and 2 * self.adversarial_pairs > self.r:
            raise DimensionError("shared-A adversarial pairs need 2 * pairs <= r private input directions")
        if self.adversarial_pairs and 2 * self.adversarial_pairs > self.n:
            raise DimensionError("adversarial pairs need 2 * pairs <= n")
        if self.bias_scales is not None:
            if len(self.bias_scales) != self.n_adapters:
                raise DimensionError("bias_scales needs one entry per adapter")
            if min(self.bias_scales) <= 0.0:
                raise ValueError("bias_scales must be positive")

    def bias(self, i):
        return 1.0 if self.bias_scales is None else self.bias_scales[i]


@dataclass(frozen=True)
class LabeledQuery:
    x: np.ndarray
    task: int
    oracle_norm_winner: int


def _orthonormal(rng, rows, cols):
    return np.array(reduced_qr(rng.standard_normal((rows, cols))).q)


def _directions(rng, dim, blocks):
    """Orthonormal column blocks in R^dim, mutually orthogonal when they fit,
    independently drawn otherwise. Returns (blocks, packed_flag)."""
    total = sum(blocks)
    if total == 0:
        return [], True
    if total <= dim:
        Q = _orthonormal(rng, dim, total)
        out, at = [], 0
        for w in blocks:
            out.append(Q[:, at:at + w])
            at += w
        return out, True
    return [_orthonormal(rng, dim, w) for w in blocks], False


def _rotation(rng):
    t = rng.uniform(0.0, 2.0 * np.pi)
    return np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])


def _plan(spec):
    """Every random draw of the library, in a fixed order."""
    rng = rng_for(spec.seed, LIBRARY_STREAM)
    m, n, r, d = spec.m, spec.n, spec.r, spec.task_subspace_dim
    T, P = spec.n_task, spec.adversarial_pairs
    plan = {"shared": spec.shared_a}
    if spec.shared_a:
        A = rng.normal(0.0, 1.0 / r, size=(r, n))
        Q = np.array(reduced_qr(A.T).q)
        plan["A"], plan["Q"], plan["K"] = A, Q, A @ Q
        coords, packed = _directions(rng, r, [d] * T + [2] * P)
        plan["task_coords"] = coords[:T]
        plan["planes"] = [Q @ c for c in coords[T:]]
        plan["plane_coords"] = coords[T:]
        plan["task_bases"] = [Q @ c for c in plan["task_coords"]]
    else:
        dirs, packed = _directions(rng, n, [d] * T + [2] * P)
        plan["task_bases"] = dirs[:T]
        plan["planes"] = dirs[T:]
    plan["packed"] = packed
    plan["out"] = [_orthonormal(rng, m, r) for _ in range(T)]
    plan["pair_out"] = [(_orthonormal(rng, m, 2), _orthonormal(rng, m, 2)) for _ in range(P)]
    plan["pair_rot"] = [_rotation(rng) for _ in range(P)]
    plan["pair_scale"] = list(rng.uniform(1.5, 2.5, size=P))
    if not spec.shared_a:
        # per-adapter frames and coordinate maps (A_i = K_i Q_i^T)
        frames, ks = [], []
        for basis in plan["task_bases"] + [pl for pl in plan["planes"] for _ in range(2)]:
            extra = rng.standard_normal((n, r - basis.shape[1]))
            frames.append(np.array(reduced_qr(np.hstack([basis, extra])).q))
            ks.append(rng.normal(0.0, 1.0 / r, size=(r, r)))
        plan["frames"], plan["ks"] = frames, ks
    return plan


def _coherence(bases):
    vals = []
    for i in range(len(bases)):
        for j in range(i + 1, len(bases)):
            vals.append(float(thin_svd(bases[i].T @ bases[j]).s[0]))
    return (max(vals), float(np.mean(vals))) if vals else (0.0, 0.0)


def gen_library(spec):
    """Synthetic library: task adapters first, then adversarial (C, D) pairs."""
    plan = _plan(spec)
    m, n, r, d = spec.m, spec.n, spec.r, spec.task_subspace_dim
    g = spec.signal_gain
    T, P = spec.n_task, spec.adversarial_pairs
    top_bias = max((spec.bias(i) for i in range(T)), default=1.0)
    ids = [f"task{i}" for i in range(T)] + [f"adv{j}{s}" for j in range(P) for s in "CD"]

    bs, as_ = [], []
    for i in range(T):
        if spec.shared_a:
            c = plan["task_coords"][i]
            stretch = np.eye(r) + (g - 1.0) * c @ c.T
            K = plan["K"]
        else:
            stretch = np.diag([g] * d + [1.0] * (r - d))
            K = plan["ks"][i]
            as_.append(K @ plan["frames"][i].T)
        target = spec.bias(i) * plan["out"][i] @ stretch  # m x r map on coordinates
        bs.append(np.linalg.solve(K.T, target.T).T)
    for j in range(P):
        rot = plan["pair_rot"][j]
        # pair adapters dominate every task adapter on their own query
        scale = plan["pair_scale"][j] * g * top_bias
        for half, core in enumerate((PAIR_C, PAIR_D)):
            k = T + 2 * j + half
            if spec.shared_a:
                coords = plan["plane_coords"][j] @ rot
                K = plan["K"]
            else:
                coords = np.eye(r)[:, :2] @ rot
                K = plan["ks"][k]
                as_.append(K @ plan["frames"][k].T)
            target = spec.bias(k) * scale * plan["pair_out"][j][half] @ core @ coords.T
            bs.append(np.linalg.solve(K.T, target.T).T)

    coh_max, coh_mean = _coherence(plan["task_bases"])
    meta = {
        "generator": GENERATOR,
        "seed": spec.seed,
        "kind": "synthetic",
        "n_task": T,
        "adversarial_pairs": P,
        "signal_gain": g,
        "task_subspace_dim": d,
        "coherence_max": f"{coh_max:.6g}",
        "coherence_mean": f"{coh_mean:.6g}",
    }
    if not plan["packed"]:
        room = r if spec.shared_a else n
        meta["warning"] = (
            f"{T} task subspaces of dim {d} plus {P} pairs do not fit orthogonally in {room} dims; "
            "subspaces drawn independently"
        )
    if spec.shared_a:
        return AdapterLibrary.from_matrices(bs, plan["A"], ids=ids, meta=meta)
    return AdapterLibrary.from_matrices(bs, a_list=as_, ids=ids, meta=meta)


def task_bases(spec):
    """Orthonormal n x d basis of every task adapter's amplified subspace."""
    return _plan(spec)["task_bases"]


def adversarial_inputs(spec):
    """Unit query for each adversarial pair (the rotated C arrow)."""
    plan = _plan(spec)
    return [pl @ rot[:, 0] for pl, rot in zip(plan["planes"], plan["pair_rot"])]


def _label(lib, X, tasks):
    out = []
    for x, t in zip(X, tasks):
        norms = raw_naive(lib.b_stack, lib.a_stack, x)[0]
        out.append(LabeledQuery(_frozen(x), int(t), select(norms)))
    return out


def sample_task_inputs(spec, per_task, stream=QUERY_STREAM):
    """(count, n) unit inputs and task labels: a random unit signal in each
    task subspace plus ``noise_level`` times isotropic Gaussian noise."""
    plan = _plan(spec)
    rng = rng_for(spec.seed, stream)
    n, d = spec.n, spec.task_subspace_dim
    X, tasks = [], []
    for i, basis in enumerate(plan["task_bases"]):
        for _ in range(per_task):
            u = rng.standard_normal(d)
            sig = basis @ (u / np.linalg.norm(u))
            x = sig + spec.noise_level * rng.standard_normal(n) / np.sqrt(n)
            X.append(x / np.linalg.norm(x))
            tasks.append(i)
    return np.array(X).reshape(-1, n), np.array(tasks, dtype=np.int64)


def gen_queries(lib, spec, per_task, stream=QUERY_STREAM):
    """Labelled queries: ``per_task`` per task adapter, then one per
    adversarial pair labelled with its D adapter. Oracle winners come from
    direct activation norms."""
    X, tasks = sample_task_inputs(spec, per_task, stream)
    adv = adversarial_inputs(spec)
    if adv:
        X = np.vstack([X, np.array(adv)])
        tasks = np.concatenate([tasks, [spec.n_task + 2 * j + 1 for j in range(len(adv))]])
    return _label(lib, X, tasks)


def calibration_samples(spec, per_task, stream=CALIBRATION_STREAM):
    """Per-adapter (count, n) sample arrays drawn from each adapter's own task
    distribution; adversarial adapters get their pair input with noise."""
    X, tasks = sample_task_inputs(spec, per_task, stream)
    out = [X[tasks == i] for i in range(spec.n_task)]
    rng = rng_for(spec.seed, stream + 100)
    for x in adversarial_inputs(spec):
        for _ in range(2):
            noisy = x + max(spec.noise_level, 1e-3) * rng.standard_normal((per_task, spec.n)) / np.sqrt(spec.n)
            out.append(noisy / np.linalg.norm(noisy, axis=1, keepdims=True))
    return out


def counterexample_pair():
    """The literal 2x2 library {C, D} (shared A = I) and the input x = (1, 0)."""
    lib = AdapterLibrary.from_matrices([PAIR_C, PAIR_D], np.eye(2), ids=["C", "D"],
                                       meta={"kind": "counterexample"})
    return lib, np.array([1.0, 0.0])


def gen_arrow_adversarial(count, m=8, n=8, seed=0, shared_a=True):
    """Library of ``count`` embedded counterexample pairs and one query per
    pair; on every query Arrow picks the pair's C and norms pick its D."""
    if count < 1:
        raise ValueError("count must be >= 1")
    spec = SynthSpec(seed=seed, n_adapters=2 * count, m=m, n=n, r=2 * count if shared_a else 2,
                     shared_a=shared_a, task_subspace_dim=1, adversarial_pairs=count)
    lib = gen_library(spec)
    return lib, gen_queries(lib, spec, per_task=0), spec


QUERY_HEADER = struct.Struct("<II")


def encode_queries(queries, n=None):
    if n is None:
        if not queries:
            raise ValueError("cannot infer n from an empty query list")
        n = queries[0].x.shape[0]
    parts = [QUERY_HEADER.pack(len(queries), n)]
    for q in queries:
        if q.x.shape != (n,):
            raise DimensionError(f"query of length {q.x.shape[0]} in a file of dim {n}")
        parts.append(struct.pack("<II", q.task, q.oracle_norm_winner))
        parts.append(np.asarray(q.x, dtype="<f8").tobytes())
    return b"".join(parts)


def save_queries(queries, path, n=None):
    atomic_write(path, encode_queries(queries, n))


def decode_queries(data):
    if len(data) < QUERY_HEADER.size:
        raise TruncationError("query file ends inside its header")
    count, n = QUERY_HEADER.unpack_from(data, 0)
    rec = 8 + 8 * n
    if len(data) != QUERY_HEADER.size + count * rec:
        raise TruncationError(f"query file holds {len(data)} bytes, header implies {QUERY_HEADER.size + count * rec}")
    out = []
    for k in range(count):
        off = QUERY_HEADER.size + k * rec
        task, win = struct.unpack_from("<II", data, off)
        x = np.frombuffer(data, dtype="<f8", count=n, offset=off + 8).astype(np.float64)
        out.append(LabeledQuery(_frozen(x), task, win))
    return out


def load_queries(path):
    return decode_queries(Path(path).read_bytes())
