import numpy as np
import pytest

from seqr.adapter import (
    AdapterLibrary,
    LoraAdapter,
    build_arrow,
    build_seqr,
    build_spectr,
    preprocess,
)
from seqr.errors import ConfigurationError, DegenerateAdapterError, DimensionError


def _shared(N=3, m=6, n=5, r=2, seed=0):
    rng = np.random.default_rng(seed)
    return AdapterLibrary.from_matrices([rng.standard_normal((m, r)) for _ in range(N)], rng.standard_normal((r, n)))


def test_library_shapes_and_ids():
    lib = _shared()
    assert lib.n_adapters == 3
    assert lib.dims == (6, 5, 2)
    assert lib.is_shared
    assert lib.b_stack.shape == (3, 6, 2)
    assert lib.a_stack.shape == (3, 2, 5)
    assert [ad.id for ad in lib.adapters] == ["adapter0", "adapter1", "adapter2"]
    assert lib.index("adapter1") == 1
    with pytest.raises(KeyError):
        lib.index("missing")


def test_scaling_folds_into_b():
    b = np.ones((4, 2))
    a = np.eye(2, 4)
    lib = AdapterLibrary.from_matrices([b], a, scaling=0.5)
    np.testing.assert_array_equal(lib.adapters[0].b, 0.5 * b)
    np.testing.assert_array_equal(lib.adapters[0].delta(), 0.5 * b @ a)


def test_unique_a_library():
    rng = np.random.default_rng(1)
    lib = AdapterLibrary.from_matrices(
        [rng.standard_normal((4, 2)) for _ in range(2)], a_list=[rng.standard_normal((2, 3)) for _ in range(2)]
    )
    assert not lib.is_shared
    assert lib.shared_a is None
    with pytest.raises(ConfigurationError):
        preprocess(lib)
    forms = preprocess(lib, ("arrow", "spectr"))
    assert forms.kinds() == ("arrow", "spectr")


def test_rank_larger_than_dims_rejected():
    with pytest.raises(DimensionError):
        AdapterLibrary.from_matrices([np.ones((2, 3))], np.ones((3, 5)))


def test_mismatched_dims_rejected():
    with pytest.raises(DimensionError):
        AdapterLibrary.from_matrices([np.ones((4, 2)), np.ones((5, 2))], np.ones((2, 4)))


def test_duplicate_ids_rejected():
    with pytest.raises(ValueError):
        AdapterLibrary.from_matrices([np.ones((4, 2))] * 2, np.eye(2, 4), ids=["x", "x"])


def test_empty_library_rejected():
    with pytest.raises(DimensionError):
        AdapterLibrary(())


def test_arrow_of_zero_adapter_raises():
    ad = LoraAdapter("z", np.zeros((3, 1)), np.ones((1, 3)))
    with pytest.raises(DegenerateAdapterError):
        build_arrow(ad)


def test_seqr_needs_shared_a():
    ad = LoraAdapter("u", np.ones((3, 1)), np.ones((1, 3)))
    with pytest.raises(ConfigurationError):
        build_seqr(ad)


def test_forms_reproduce_delta():
    lib = _shared(N=2, m=8, n=7, r=3)
    forms = preprocess(lib)
    for ad, sp, qr, ar in zip(lib.adapters, forms.spectr, forms.seqr, forms.arrow):
        np.testing.assert_allclose(sp.b_hat @ sp.a_hat, ad.delta(), atol=1e-12)
        np.testing.assert_allclose(qr.q @ qr.r_mat, ad.b, atol=1e-12)
        # arrow vector is the top row direction of the spectral A_hat
        top = sp.a_hat[0] / np.linalg.norm(sp.a_hat[0])
        np.testing.assert_allclose(ar.v, top, atol=1e-12)
        assert abs(np.linalg.norm(ar.v) - 1.0) < 1e-14


def test_spectr_keeps_rank_budget_for_rank_deficient_adapter():
    b = np.array([[1.0, 1.0], [1.0, 1.0], [0.0, 0.0]])
    ad = LoraAdapter("d", b, np.eye(2, 4))
    sp = build_spectr(ad)
    assert sp.b_hat.shape == (3, 2) and sp.a_hat.shape == (2, 4)
    np.testing.assert_allclose(sp.b_hat @ sp.a_hat, ad.delta(), atol=1e-14)
