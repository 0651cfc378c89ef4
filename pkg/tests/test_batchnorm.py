import numpy as np
import pytest

from ddad.batchnorm import BatchSizeError, BNLayerRecord, batchnorm_forward
from ddad.errors import ShapeError
from ddad.tensor import Tensor


def test_training_output_is_standardized():
    x = np.random.default_rng(0).normal(3.0, 2.0, size=(64, 5))
    y = batchnorm_forward(Tensor(x), BNLayerRecord(5), training=True).data
    np.testing.assert_allclose(y.mean(axis=0), 0.0, atol=1e-12)
    # eps inside the square root shrinks the variance very slightly
    np.testing.assert_allclose(y.var(axis=0), x.var(axis=0) / (x.var(axis=0) + 1e-5), rtol=1e-12)


def test_captured_statistics_match_direct_recomputation():
    x = np.random.default_rng(1).normal(size=(7, 3, 4, 4))
    rec = BNLayerRecord(3)
    batchnorm_forward(Tensor(x), rec, training=True)
    np.testing.assert_allclose(rec.batch_mean.data, x.mean(axis=(0, 2, 3)), rtol=0, atol=1e-12)
    np.testing.assert_allclose(rec.batch_var.data, x.var(axis=(0, 2, 3)), rtol=0, atol=1e-12)


def test_running_average_uses_momentum():
    x = np.random.default_rng(2).normal(size=(10, 2))
    rec = BNLayerRecord(2)
    batchnorm_forward(Tensor(x), rec, training=True)
    np.testing.assert_allclose(rec.stored_mean, 0.1 * x.mean(axis=0), rtol=1e-12)
    np.testing.assert_allclose(rec.stored_var, 0.9 + 0.1 * x.var(axis=0), rtol=1e-12)


def test_constant_channel_is_stabilized():
    x = np.ones((8, 2))
    y = batchnorm_forward(Tensor(x), BNLayerRecord(2), training=True).data
    assert np.all(np.isfinite(y))
    np.testing.assert_array_equal(y, 0.0)


def test_inference_reads_stored_stats_and_leaves_record_alone():
    rec = BNLayerRecord(2)
    rec.stored_mean = np.array([1.0, -1.0])
    rec.stored_var = np.array([4.0, 0.25])
    x = np.array([[3.0, -0.5], [1.0, -1.0]])
    y = batchnorm_forward(Tensor(x), rec, training=False).data
    np.testing.assert_allclose(y, (x - rec.stored_mean) / np.sqrt(rec.stored_var + 1e-5))
    assert rec.batch_mean is None
    np.testing.assert_array_equal(rec.stored_mean, [1.0, -1.0])


def test_frozen_training_mode_measures_but_does_not_update():
    rec = BNLayerRecord(3)
    rec.stored_mean = np.array([0.5, 0.0, -0.5])
    rec.frozen = True
    before = rec.stored_mean.tobytes(), rec.stored_var.tobytes()
    x = np.random.default_rng(3).normal(size=(6, 3))
    batchnorm_forward(Tensor(x), rec, training=True)
    assert (rec.stored_mean.tobytes(), rec.stored_var.tobytes()) == before
    np.testing.assert_allclose(rec.batch_mean.data, x.mean(axis=0), atol=1e-12)


def test_batch_too_small():
    with pytest.raises(BatchSizeError):
        batchnorm_forward(Tensor(np.ones((1, 3))), BNLayerRecord(3), training=True)
    # inference has no such restriction
    batchnorm_forward(Tensor(np.ones((1, 3))), BNLayerRecord(3), training=False)


def test_channel_mismatch():
    with pytest.raises(ShapeError, match="channels"):
        batchnorm_forward(Tensor(np.ones((4, 3))), BNLayerRecord(2), training=True)
