import numpy as np
import pytest

from streamkd.data import Dataset, ToyTaskSpec, make_toy_dataset


def test_shapes_and_labels():
    spec = ToyTaskSpec()
    ds = make_toy_dataset(spec, 5, 3, seed=1)
    assert len(ds) == 8
    assert ds.labeled == [0, 1, 2, 3, 4] and ds.unlabeled == [5, 6, 7]
    for u in ds:
        assert u.features.shape[1] == spec.input_dim
    for i in ds.labeled:
        u = ds[i]
        assert u.num_frames == spec.span * len(u.tokens)
        assert spec.min_tokens <= len(u.tokens) <= spec.max_tokens
        assert all(1 <= t <= spec.vocab for t in u.tokens)


def test_deterministic_and_split_dependent():
    spec = ToyTaskSpec()
    a = make_toy_dataset(spec, 4, 2, seed=3)
    b = make_toy_dataset(spec, 4, 2, seed=3)
    c = make_toy_dataset(spec, 4, 2, seed=3, split=1)
    for x, y in zip(a, b):
        assert np.array_equal(x.features, y.features) and x.tokens == y.tokens
    assert any(x.tokens != y.tokens or x.num_frames != y.num_frames or not np.array_equal(x.features, y.features)
               for x, y in zip(a, c))


def test_save_load_round_trip(tmp_path):
    ds = make_toy_dataset(ToyTaskSpec(), 3, 2, seed=0)
    ds.save(tmp_path / "d.skdl")
    back = Dataset.load(tmp_path / "d.skdl")
    assert back.labeled == ds.labeled
    for x, y in zip(ds, back):
        assert np.array_equal(x.features, y.features) and x.tokens == y.tokens


def test_errors():
    with pytest.raises(ValueError):
        ToyTaskSpec(min_tokens=3, max_tokens=2)
    with pytest.raises(ValueError):
        make_toy_dataset(ToyTaskSpec(), -1, 0, seed=0)
