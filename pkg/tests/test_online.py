import numpy as np
import pytest

from shiftlab import online as on
from shiftlab.alignment import BNState
from shiftlab.harness.scenarios import onda_source, train_bn_classifier
from shiftlab.numerics import RngStream


def _state(mu, var):
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    return BNState(mu, np.broadcast_to(var, mu.shape).astype(float), np.ones_like(mu), np.zeros_like(mu))


def test_partial_examples():
    mu, var = on.onda_partial(np.full((5, 2), 3.0))
    assert np.array_equal(var, [0.0, 0.0])
    mu, var = on.onda_partial(np.array([[-1.0], [1.0]]))
    assert mu[0] == 0.0 and var[0] == 1.0
    buf = RngStream(0).normal(size=(10, 2))
    mu, var = on.onda_partial(buf)
    assert np.allclose(mu, buf.sum(axis=0) / 10)
    assert np.allclose(var, ((buf - buf.sum(axis=0) / 10) ** 2).sum(axis=0) / 10)
    with pytest.raises(ValueError):
        on.onda_partial(np.zeros((1, 2)))


def test_update_examples():
    s = _state([2.0], 1.8)
    fixed = on.onda_update(s, [2.0], [1.8 * 9 / 10], 0.3, 10)
    assert np.allclose(fixed.mean, s.mean) and np.allclose(fixed.var, s.var)
    assert np.isclose(on.onda_update(_state([0.0], 1.0), [10.0], [1.0], 0.1, 10).mean[0], 1.0)
    assert np.isclose(on.onda_update(_state([0.0], 1.0), [0.0], [1.0], 0.1, 10).var[0], 0.9 + 0.1 * 10 / 9)
    with pytest.raises(ValueError):
        on.onda_update(s, [0.0], [1.0], 0.1, 1)


def test_online_bn_fires_every_nt():
    bn = on.OnlineBN(_state([0.0, 0.0], 1.0), n_t=4, alpha=0.5)
    fired = [bn.push(np.ones(2)) for _ in range(9)]
    assert fired == [False, False, False, True] * 2 + [False]
    assert bn.updates == 2 and len(bn.buffer) == 1


def _model(dim=4, seed=0):
    r = RngStream(seed).spawn(2)
    x, y = onda_source(dim, r[0])
    return train_bn_classifier(x, y, r[1])


def test_stationary_stream_drift_is_estimator_noise():
    model = _model()
    x, y = onda_source(4, RngStream(5), n=1000)
    res = on.onda_stream(model, x, 10, 0.1)
    # std of the EMA of 10-sample means, per feature
    sd = np.sqrt(model.bn.var / 10 * 0.1 / (2 - 0.1))
    drift = np.abs(res.mean_history - model.bn.mean).max(axis=0)
    assert np.all(drift <= 3 * sd + 4 * np.sqrt(model.bn.var / 400))
    frozen = (model.predict(x) == y).mean()
    assert abs((res.predictions == y).mean() - frozen) <= 0.05


def test_shifted_stream_converges_and_larger_alpha_is_faster():
    model = _model()
    x, _ = onda_source(4, RngStream(6), n=1000)
    x = x + 5.0
    target = np.full(4, 5.0)
    res = on.onda_stream(model, x, 10, 0.1)
    assert on.relative_gap(res.mean_history, target)[50] <= 0.02
    slow = on.time_to_fraction(on.onda_stream(model, x, 10, 0.05).mean_history, model.bn.mean, target)
    fast = on.time_to_fraction(on.onda_stream(model, x, 10, 0.5).mean_history, model.bn.mean, target)
    assert fast < slow


def test_prediction_uses_pre_update_statistics():
    model = _model()
    x, _ = onda_source(4, RngStream(7), n=10)
    res = on.onda_stream(model, x + 5.0, 10, 0.5)
    assert np.array_equal(res.predictions, model.predict(x + 5.0))
    assert res.updates == 1


def test_time_to_fraction_never():
    h = np.zeros((3, 2))
    assert on.time_to_fraction(h, np.zeros(2), np.ones(2)) == 3
