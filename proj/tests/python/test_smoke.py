import numpy as np
import pytest

import monoforward as mf


def blobs():
    X, y = mf.synth_blobs(4, 16, 60, separation=5.0, seed=1)
    return X, y


def test_parameter_counts():
    model = mf.Model("mf", 784, [1000, 1000], 10)
    assert model.count_parameters("ff") == 1_804_000
    assert model.count_parameters("bp") == 1_794_000
    assert mf.Model("ff", 784, [1000, 1000], 10).count_parameters() == 1_784_000


def test_train_and_predict():
    X, y = blobs()
    model = mf.Model("mf", 16, [32, 32], 4, seed=2)
    rows = model.train(X, y, epochs=5, batch_size=32, lr=0.01, X_test=X, y_test=y)
    assert [r["layer_index"] for r in rows[:3]] == [1, 2, -1]
    for mode in ("ff", "bp"):
        assert mf.accuracy(model.predict(X, mode), y) > 0.9
    assert len(model.per_layer_predict(X)) == 2


def test_pipeline_matches_sequential():
    X, y = blobs()
    a = mf.Model("mf", 16, [24, 24, 24], 4, seed=3)
    b = mf.Model("mf", 16, [24, 24, 24], 4, seed=3)
    a.train(X, y, epochs=2, batch_size=16)
    b.train(X, y, epochs=2, batch_size=16, pipeline=True, stage_capacity=1)
    for i in range(3):
        assert np.array_equal(a.weights(i), b.weights(i))
        assert np.array_equal(a.projection(i), b.projection(i))


def test_single_pass_prediction():
    X = np.random.default_rng(0).random((8, 32), dtype=np.float32)
    model = mf.Model("mf", 32, [16], 10)
    mf.reset_forward_pass_count()
    model.predict(X, "ff")
    assert mf.forward_pass_count() == 1
    ff = mf.Model("ff", 32, [16, 16], 10)
    mf.reset_forward_pass_count()
    ff.predict(X)
    assert mf.forward_pass_count() == 10


def test_checkpoint_round_trip(tmp_path):
    X, y = blobs()
    model = mf.Model("bp", 16, [8], 4, seed=4)
    model.train(X, y, epochs=1)
    path = tmp_path / "model.mfck"
    model.save(path)
    back = mf.Model.load(path)
    assert back.algorithm == "bp"
    assert np.array_equal(back.predict(X), model.predict(X))
    path.write_bytes(b"MFCK")
    with pytest.raises(mf.CheckpointError):
        mf.Model.load(path)


def test_errors_map_to_python_exceptions():
    with pytest.raises(ValueError):
        mf.Model("nope", 4, [4], 2)
    model = mf.Model("mf", 16, [8], 4)
    X, y = blobs()
    with pytest.raises(ValueError):
        model.train(X[:10], y, epochs=1)
    with pytest.raises(OSError):
        mf.load_dataset("mnist", "/nonexistent")


def test_memory_slope_grows_with_depth_for_bp():
    X, y = blobs()
    r = mf.memory_vs_depth("bp", [1, 2, 3], 32, X, y, 4, batch_size=len(y))
    assert r["slope"] > 0
    assert r["peak_bytes"] == sorted(r["peak_bytes"])
