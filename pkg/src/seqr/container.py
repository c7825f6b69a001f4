"""Binary container for adapter libraries, preprocessed forms and stats.

Layout (all little-endian)::

    b"SQRL" u8 version(=1)
    u32 N, u32 m, u32 n, u32 r, u8 shared_a, u8 forms, u8 discard_b, u8 reserved(=0)
    [shared A, r*n f64]                         if shared_a
    per adapter:
        u16 id length, UTF-8 id
        B (m*r f64) [+ A (r*n f64) when A is not shared]   if forms & RAW_B
        v (n f64)                                          if forms & ARROW
        b_hat (m*r f64), a_hat (r*n f64)                    if forms & SPECTR
        q (m*r f64), r_mat (r*r f64)                        if forms & SEQR
        mu, sigma (2 f64)                                   if forms & CALIBRATION
    u32 CRC-32 of every preceding byte

Free-form library metadata (generator name, seed, ...) goes to a JSON
sidecar ``<path>.meta.json`` since the binary layout has no slot for it.
"""

import io
import json
import os
import struct
import tempfile
import zlib
from pathlib import Path

import numpy as np

from .adapter import AdapterLibrary, ArrowForm, FormSet, LoraAdapter, RoutedForms, SeqrForm, SpectrForm
from .calibration import CalibrationStats
from .errors import ChecksumError, LayoutError, MagicError, TruncationError, VersionError
from .linalg import _frozen

MAGIC = b"SQRL"
VERSION = 1
RAW_B, ARROW, SPECTR, SEQR, CALIBRATION = 1, 2, 4, 8, 16
_HEADER = struct.Struct("<IIIIBBBB")
_F64 = np.dtype("<f8")


def meta_path(path):
    return Path(str(path) + ".meta.json")


def atomic_write(path, data, mode="wb"):
    """Write ``data`` to a temp file beside ``path`` and rename it into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _mat(buf, a):
    buf.write(np.ascontiguousarray(a, dtype=np.float64).astype(_F64, copy=False).tobytes())


def encode_library(lib, forms=None, stats=None, discard_b=False):
    forms = forms or RoutedForms()
    N = lib.n_adapters
    m, n, r = lib.dims
    flags = 0 if discard_b else RAW_B
    for bit, kind in ((ARROW, "arrow"), (SPECTR, "spectr"), (SEQR, "seqr")):
        got = getattr(forms, kind)
        if got is not None:
            if len(got) != N:
                raise ValueError(f"{len(got)} {kind} forms for {N} adapters")
            flags |= bit
    if stats is not None:
        if len(stats) != N:
            raise ValueError(f"stats cover {len(stats)} adapters, library has {N}")
        flags |= CALIBRATION
    if discard_b and not (flags & SEQR and lib.is_shared):
        raise ValueError("discard_b needs QR forms on a shared-A library to keep the adapters recoverable")
    if flags & SEQR and not lib.is_shared:
        raise ValueError("QR forms only exist for shared-A libraries")

    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(bytes([VERSION]))
    buf.write(_HEADER.pack(N, m, n, r, int(lib.is_shared), flags, int(discard_b), 0))
    if lib.is_shared:
        _mat(buf, lib.shared_a)
    for i, ad in enumerate(lib.adapters):
        raw_id = ad.id.encode("utf-8")
        if len(raw_id) > 0xFFFF:
            raise ValueError(f"adapter id {ad.id[:20]!r}... longer than 65535 bytes")
        buf.write(struct.pack("<H", len(raw_id)))
        buf.write(raw_id)
        if flags & RAW_B:
            _mat(buf, ad.b)
            if not lib.is_shared:
                _mat(buf, ad.a)
        if flags & ARROW:
            _mat(buf, forms.arrow[i].v)
        if flags & SPECTR:
            _mat(buf, forms.spectr[i].b_hat)
            _mat(buf, forms.spectr[i].a_hat)
        if flags & SEQR:
            _mat(buf, forms.seqr[i].q)
            _mat(buf, forms.seqr[i].r_mat)
        if flags & CALIBRATION:
            _mat(buf, np.array([stats.mu[i], stats.sigma[i]]))
    payload = buf.getvalue()
    return payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)


def save_library(lib, path, forms=None, stats=None, discard_b=False):
    atomic_write(path, encode_library(lib, forms, stats, discard_b))
    sidecar = dict(lib.meta)
    if stats is not None:
        sidecar["calibration_method"] = stats.method
    atomic_write(meta_path(path), json.dumps(sidecar, sort_keys=True, indent=1) + "\n", "w")


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def need(self, nbytes, what):
        if self.pos + nbytes > len(self.data) - 4:
            raise TruncationError(f"file ends inside {what} at byte {self.pos}")

    def take(self, nbytes, what):
        self.need(nbytes, what)
        out = self.data[self.pos:self.pos + nbytes]
        self.pos += nbytes
        return out

    def mat(self, shape, what):
        count = int(np.prod(shape))
        raw = self.take(8 * count, what)
        return _frozen(np.frombuffer(raw, dtype=_F64).astype(np.float64).reshape(shape))


def decode_library(data, meta=None):
    if len(data) < 5 or data[:4] != MAGIC:
        raise MagicError("not a library container (bad magic bytes)")
    if data[4] != VERSION:
        raise VersionError(f"container version {data[4]} unsupported (expected {VERSION})")
    if len(data) < 5 + _HEADER.size + 4:
        raise TruncationError("file ends inside the header")
    rd = _Reader(data)
    rd.pos = 5
    N, m, n, r, shared, flags, discard_b, reserved = _HEADER.unpack(rd.take(_HEADER.size, "header"))
    if reserved != 0 or shared > 1 or discard_b > 1 or flags >> 5:
        raise LayoutError("reserved header bits are set")
    if min(N, m, n, r) == 0 or r > min(m, n):
        raise LayoutError(f"inconsistent dimensions N={N} m={m} n={n} r={r}")
    if bool(discard_b) == bool(flags & RAW_B):
        raise LayoutError("discard_b flag disagrees with the raw-B bit")
    if flags & SEQR and not shared:
        raise LayoutError("QR forms present on a library without shared A")
    if discard_b and not flags & SEQR:
        raise LayoutError("raw B discarded but no QR forms to recover it from")

    per_adapter = 2  # id length
    if flags & RAW_B:
        per_adapter += 8 * (m * r + (0 if shared else r * n))
    if flags & ARROW:
        per_adapter += 8 * n
    if flags & SPECTR:
        per_adapter += 8 * (m * r + r * n)
    if flags & SEQR:
        per_adapter += 8 * (m * r + r * r)
    if flags & CALIBRATION:
        per_adapter += 16
    # reject before allocating anything large
    rd.need(8 * r * n * shared + N * per_adapter, "adapter blocks")

    shared_a = rd.mat((r, n), "shared A") if shared else None
    ids, bs, as_, arrows, spectr, seqr, mu, sigma = [], [], [], [], [], [], [], []
    for i in range(N):
        (id_len,) = struct.unpack("<H", rd.take(2, f"id length of adapter {i}"))
        try:
            ids.append(rd.take(id_len, f"id of adapter {i}").decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise LayoutError(f"adapter {i} id is not UTF-8") from exc
        if flags & RAW_B:
            bs.append(rd.mat((m, r), f"B of adapter {i}"))
            if not shared:
                as_.append(rd.mat((r, n), f"A of adapter {i}"))
        if flags & ARROW:
            arrows.append(ArrowForm(rd.mat((n,), f"arrow of adapter {i}")))
        if flags & SPECTR:
            b_hat = rd.mat((m, r), f"b_hat of adapter {i}")
            spectr.append(SpectrForm(b_hat, rd.mat((r, n), f"a_hat of adapter {i}")))
        if flags & SEQR:
            q = rd.mat((m, r), f"q of adapter {i}")
            seqr.append(SeqrForm(q, rd.mat((r, r), f"r_mat of adapter {i}")))
        if flags & CALIBRATION:
            mu_i, sigma_i = rd.mat((2,), f"stats of adapter {i}")
            mu.append(mu_i)
            sigma.append(sigma_i)
    if rd.pos != len(data) - 4:
        raise LayoutError(f"{len(data) - 4 - rd.pos} unexpected bytes before the checksum")
    (stored,) = struct.unpack("<I", data[-4:])
    if stored != zlib.crc32(data[:-4]) & 0xFFFFFFFF:
        raise ChecksumError("CRC-32 mismatch; the file is corrupted")

    meta = dict(meta or {})
    calib_method = meta.pop("calibration_method", "seqr")
    if discard_b:
        bs = [_frozen(f.q @ f.r_mat) for f in seqr]
        meta["b_reconstructed"] = "true"
    try:
        if shared:
            adapters = tuple(LoraAdapter(i, b, shared_a, True) for i, b in zip(ids, bs))
        else:
            adapters = tuple(LoraAdapter(i, b, a) for i, b, a in zip(ids, bs, as_))
        lib = AdapterLibrary(adapters, shared_a, meta)
    except ValueError as exc:
        raise LayoutError(str(exc)) from exc
    forms = RoutedForms(
        arrow=FormSet(arrows) if flags & ARROW else None,
        spectr=FormSet(spectr) if flags & SPECTR else None,
        seqr=FormSet(seqr) if flags & SEQR else None,
    )
    stats = CalibrationStats(mu, sigma, calib_method) if flags & CALIBRATION else None
    return lib, forms, stats


def load_library(path):
    """Returns ``(library, forms, stats)``; ``stats`` is None when absent."""
    data = Path(path).read_bytes()
    sidecar = meta_path(path)
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    return decode_library(data, meta)
