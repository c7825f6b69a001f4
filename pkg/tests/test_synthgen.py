import numpy as np
import pytest

from seqr import synthgen
from seqr.adapter import preprocess
from seqr.errors import DimensionError, TruncationError
from seqr.routing import route


def test_same_seed_same_library():
    spec = synthgen.SynthSpec(seed=5, n_adapters=4, m=16, n=12, r=4, adversarial_pairs=1)
    a, b = synthgen.gen_library(spec), synthgen.gen_library(spec)
    assert np.array_equal(a.b_stack, b.b_stack) and np.array_equal(a.shared_a, b.shared_a)
    c = synthgen.gen_library(synthgen.SynthSpec(seed=6, n_adapters=4, m=16, n=12, r=4, adversarial_pairs=1))
    assert not np.array_equal(a.b_stack, c.b_stack)


def test_meta_records_generator():
    lib = synthgen.gen_library(synthgen.SynthSpec(seed=3, n_adapters=3, m=8, n=8, r=2))
    assert lib.meta["generator"] == "PCG64"
    assert lib.meta["seed"] == "3"


@pytest.mark.parametrize("kwargs", [
    {"r": 2, "task_subspace_dim": 3},
    {"n": 2, "r": 2, "task_subspace_dim": 3},
    {"r": 3, "adversarial_pairs": 2, "n_adapters": 4},
    {"bias_scales": (1.0, 2.0)},
    {"r": 100},
])
def test_invalid_specs(kwargs):
    base = dict(n_adapters=3, m=8, n=8, r=4)
    base.update(kwargs)
    with pytest.raises(DimensionError):
        synthgen.SynthSpec(**base)


def test_gain_and_noise_validated():
    with pytest.raises(ValueError):
        synthgen.SynthSpec(signal_gain=1.0)
    with pytest.raises(ValueError):
        synthgen.SynthSpec(noise_level=-0.1)


@pytest.mark.parametrize("shared", [True, False])
def test_arrow_adversarial_pairs(shared):
    lib, queries, spec = synthgen.gen_arrow_adversarial(3, shared_a=shared)
    forms = preprocess(lib, ("arrow", "spectr"))
    assert len(queries) == 3
    for j, q in enumerate(queries):
        c, d = 2 * j, 2 * j + 1
        assert route("arrow", lib, forms, q.x).selected == c
        assert route("naive", lib, forms, q.x).selected == d
        assert route("spectr", lib, forms, q.x).selected == d
        assert q.oracle_norm_winner == d


def test_queries_are_labelled_by_norm():
    spec = synthgen.SynthSpec(seed=1, n_adapters=5, m=16, n=16, r=4)
    lib = synthgen.gen_library(spec)
    qs = synthgen.gen_queries(lib, spec, 10)
    assert len(qs) == 50
    for q in qs:
        assert q.oracle_norm_winner == route("naive", lib, None, q.x).selected
        assert abs(np.linalg.norm(q.x) - 1.0) < 1e-12


def test_bias_makes_one_adapter_dominate():
    spec = synthgen.SynthSpec(seed=0, n_adapters=4, m=16, n=16, r=4, bias_scales=(10.0, 1.0, 1.0, 1.0))
    lib = synthgen.gen_library(spec)
    qs = synthgen.gen_queries(lib, spec, 20)
    off = [q for q in qs if q.task != 0]
    assert np.mean([q.oracle_norm_winner == 0 for q in off]) > 0.5


def test_calibration_samples_shapes():
    spec = synthgen.SynthSpec(seed=0, n_adapters=6, m=16, n=16, r=4, adversarial_pairs=1)
    sets = synthgen.calibration_samples(spec, 7)
    assert len(sets) == 6
    assert all(s.shape == (7, 16) for s in sets)


def test_query_file_round_trip(tmp_path):
    spec = synthgen.SynthSpec(seed=2, n_adapters=3, m=8, n=8, r=2)
    lib = synthgen.gen_library(spec)
    qs = synthgen.gen_queries(lib, spec, 4)
    path = tmp_path / "q.bin"
    synthgen.save_queries(qs, path)
    back = synthgen.load_queries(path)
    assert [(q.task, q.oracle_norm_winner) for q in back] == [(q.task, q.oracle_norm_winner) for q in qs]
    assert all(np.array_equal(a.x, b.x) for a, b in zip(qs, back))
    data = path.read_bytes()
    with pytest.raises(TruncationError):
        synthgen.decode_queries(data[:-1])
    with pytest.raises(TruncationError):
        synthgen.decode_queries(data[:3])


def test_counterexample_pair_literal():
    lib, x = synthgen.counterexample_pair()
    np.testing.assert_array_equal(lib.adapters[0].b, [[2.0, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(lib.adapters[1].b * np.sqrt(2.0), [[3.0, 3.0], [1.0, -1.0]], atol=1e-15)
    assert x.tolist() == [1.0, 0.0]
