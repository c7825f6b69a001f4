import json
import struct
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqr.adapter import AdapterLibrary, RoutedForms, preprocess
from seqr.calibration import CalibrationStats
from seqr.container import (
    MAGIC,
    decode_library,
    encode_library,
    load_library,
    meta_path,
    save_library,
)
from seqr.errors import ChecksumError, ContainerError, LayoutError, MagicError, TruncationError, VersionError
from seqr.verify import random_library


def _lib(shared=True, seed=0):
    rng = np.random.default_rng(seed)
    bs = [rng.standard_normal((5, 2)) for _ in range(3)]
    meta = {"seed": seed, "kind": "test"}
    if shared:
        return AdapterLibrary.from_matrices(bs, rng.standard_normal((2, 4)), ids=["a", "bé", "c"], meta=meta)
    return AdapterLibrary.from_matrices(bs, a_list=[rng.standard_normal((2, 4)) for _ in range(3)], meta=meta)


def _same(lib1, forms1, stats1, lib2, forms2, stats2):
    assert lib1.dims == lib2.dims and lib1.is_shared == lib2.is_shared
    for a, b in zip(lib1.adapters, lib2.adapters):
        assert a.id == b.id
        assert np.array_equal(a.b, b.b) and np.array_equal(a.a, b.a)
    for kind in ("arrow", "spectr", "seqr"):
        f1, f2 = getattr(forms1, kind), getattr(forms2, kind)
        assert (f1 is None) == (f2 is None)
        if f1 is not None:
            for x, y in zip(f1, f2):
                for attr in x.__dataclass_fields__:
                    assert np.array_equal(getattr(x, attr), getattr(y, attr))
    assert (stats1 is None) == (stats2 is None)
    if stats1 is not None:
        assert np.array_equal(stats1.mu, stats2.mu) and np.array_equal(stats1.sigma, stats2.sigma)


def test_header_bytes():
    data = encode_library(_lib())
    assert data[:4] == MAGIC == b"SQRL"
    assert data[4] == 1
    N, m, n, r, shared, flags, discard, reserved = struct.unpack_from("<IIIIBBBB", data, 5)
    assert (N, m, n, r, shared, flags, discard, reserved) == (3, 5, 4, 2, 1, 1, 0, 0)
    assert struct.unpack("<I", data[-4:])[0] == zlib.crc32(data[:-4])


def test_file_round_trip_with_sidecar(tmp_path):
    lib = _lib()
    forms = preprocess(lib)
    stats = CalibrationStats([1.0, 2.0, 3.0], [0.1, 0.2, 0.3], "spectr")
    path = tmp_path / "lib.sqrl"
    save_library(lib, path, forms, stats)
    side = json.loads(meta_path(path).read_text())
    assert side["kind"] == "test" and side["calibration_method"] == "spectr"
    lib2, forms2, stats2 = load_library(path)
    _same(lib, forms, stats, lib2, forms2, stats2)
    assert stats2.method == "spectr"
    assert lib2.meta == lib.meta


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.booleans(), st.sets(st.sampled_from(["arrow", "spectr", "seqr"])), st.booleans())
def test_round_trip_is_bitwise(seed, shared, kinds, with_stats):
    rng = np.random.default_rng(seed)
    lib = random_library(rng, shared, max_dim=12, max_rank=4, max_adapters=4)
    if not shared:
        kinds.discard("seqr")
    forms = preprocess(lib, sorted(kinds))
    stats = CalibrationStats(rng.random(lib.n_adapters), rng.random(lib.n_adapters) + 0.1) if with_stats else None
    data = encode_library(lib, forms, stats)
    _same(lib, forms, stats, *decode_library(data))
    assert encode_library(*decode_library(data)) == data


def test_discard_b_reconstructs(tmp_path):
    lib = _lib()
    forms = preprocess(lib)
    data = encode_library(lib, forms, discard_b=True)
    assert len(data) < len(encode_library(lib, forms))
    lib2, forms2, _ = decode_library(data)
    assert lib2.meta["b_reconstructed"] == "true"
    for a, b in zip(lib.adapters, lib2.adapters):
        np.testing.assert_allclose(a.b, b.b, atol=1e-13)


def test_discard_b_needs_qr_forms():
    lib = _lib()
    with pytest.raises(ValueError):
        encode_library(lib, preprocess(lib, ("arrow",)), discard_b=True)


def test_bad_magic():
    data = bytearray(encode_library(_lib()))
    data[0:4] = b"XXXX"
    with pytest.raises(MagicError):
        decode_library(bytes(data))
    with pytest.raises(MagicError):
        decode_library(b"")


def test_bad_version():
    data = bytearray(encode_library(_lib()))
    data[4] = 2
    with pytest.raises(VersionError):
        decode_library(bytes(data))


@pytest.mark.parametrize("cut", [1, 8, 40, 200])
def test_truncation(cut):
    data = encode_library(_lib(), preprocess(_lib()))
    with pytest.raises(TruncationError):
        decode_library(data[:-cut])


def test_crc_mismatch():
    data = bytearray(encode_library(_lib()))
    data[60] ^= 0x01
    with pytest.raises(ChecksumError):
        decode_library(bytes(data))


def test_error_types_are_distinct():
    kinds = {MagicError, VersionError, TruncationError, ChecksumError, LayoutError}
    assert len(kinds) == 5 and all(issubclass(k, ContainerError) for k in kinds)


def test_reserved_bits_rejected():
    data = bytearray(encode_library(_lib()))
    data[5 + 19] = 1
    with pytest.raises(LayoutError):
        decode_library(bytes(data))


def test_huge_header_counts_rejected_before_allocation():
    data = bytearray(encode_library(_lib()))
    struct.pack_into("<I", data, 5, 2 ** 31)
    with pytest.raises(TruncationError):
        decode_library(bytes(data))


def test_trailing_bytes_rejected():
    data = encode_library(_lib())
    body = data[:-4] + b"\x00" * 8
    with pytest.raises(LayoutError):
        decode_library(body + struct.pack("<I", zlib.crc32(body)))


def test_seqr_forms_rejected_without_shared_a():
    lib = _lib(shared=False)
    with pytest.raises(ValueError):
        encode_library(lib, RoutedForms(seqr=preprocess(_lib(), ("seqr",)).seqr))
