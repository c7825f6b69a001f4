import numpy as np
import pytest

from seqr.adapter import AdapterLibrary, preprocess
from seqr.calibration import SIGMA_FLOOR, CalibrationStats, calibrate, zscore
from seqr.errors import ConfigurationError, DimensionError


def _lib(shared=True):
    rng = np.random.default_rng(0)
    bs = [rng.standard_normal((6, 2)) for _ in range(3)]
    if shared:
        return AdapterLibrary.from_matrices(bs, rng.standard_normal((2, 5)))
    return AdapterLibrary.from_matrices(bs, a_list=[rng.standard_normal((2, 5)) for _ in range(3)])


def test_stats_match_numpy_oracle():
    lib = _lib()
    forms = preprocess(lib)
    rng = np.random.default_rng(1)
    samples = [rng.standard_normal((20, 5)) for _ in range(3)]
    stats = calibrate(lib, forms, samples, "seqr")
    for i, (ad, X) in enumerate(zip(lib.adapters, samples)):
        norms = np.linalg.norm(X @ ad.delta().T, axis=1)
        assert abs(stats.mu[i] - norms.mean()) < 1e-12
        assert abs(stats.sigma[i] - norms.std(ddof=1)) < 1e-12
    assert stats.method == "seqr"


@pytest.mark.parametrize("method", ["naive", "spectr", "seqr"])
def test_methods_agree_on_stats(method):
    lib = _lib()
    forms = preprocess(lib)
    samples = [np.random.default_rng(i).standard_normal((10, 5)) for i in range(3)]
    ref = calibrate(lib, forms, samples, "naive")
    got = calibrate(lib, forms, samples, method)
    np.testing.assert_allclose(got.mu, ref.mu, rtol=1e-10)
    np.testing.assert_allclose(got.sigma, ref.sigma, rtol=1e-8)


def test_sigma_floor_applies_to_constant_norms():
    lib = _lib()
    samples = [np.tile(np.ones(5), (4, 1))] * 3
    stats = calibrate(lib, preprocess(lib), samples, "naive")
    assert np.all(stats.sigma == SIGMA_FLOOR)


def test_needs_two_samples():
    lib = _lib()
    with pytest.raises(ValueError):
        calibrate(lib, preprocess(lib), [np.ones((1, 5))] * 3, "naive")


def test_sample_shape_checked():
    lib = _lib()
    with pytest.raises(DimensionError):
        calibrate(lib, preprocess(lib), [np.ones((3, 4))] * 3, "naive")
    with pytest.raises(DimensionError):
        calibrate(lib, preprocess(lib), [np.ones((3, 5))] * 2, "naive")


def test_seqr_calibration_needs_shared_a():
    lib = _lib(shared=False)
    with pytest.raises(ConfigurationError):
        calibrate(lib, preprocess(lib, ("spectr",)), [np.ones((3, 5))] * 3, "seqr")


def test_unknown_method():
    lib = _lib()
    with pytest.raises(ValueError):
        calibrate(lib, preprocess(lib), [np.ones((3, 5))] * 3, "arrow")


def test_stats_validation():
    with pytest.raises(ValueError):
        CalibrationStats([0.0], [0.0])
    with pytest.raises(ValueError):
        CalibrationStats([np.nan], [1.0])
    with pytest.raises(DimensionError):
        CalibrationStats([0.0, 1.0], [1.0])


def test_zscore_and_identity():
    stats = CalibrationStats([1.0, 2.0], [2.0, 4.0])
    np.testing.assert_allclose(zscore([3.0, 2.0], stats), [1.0, 0.0])
    ident = CalibrationStats.identity(3)
    np.testing.assert_array_equal(zscore([1.0, 2.0, 3.0], ident), [1.0, 2.0, 3.0])
    with pytest.raises(DimensionError):
        zscore([1.0], stats)
