import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shiftlab import cumix as cm
from shiftlab.numerics import RngStream, finite_diff_grad, log_softmax, one_hot, relative_error, softmax


def test_mix2():
    a = np.array([1.0, 2.0])
    assert np.array_equal(cm.mix2(a, -a, 1.0), a)
    assert np.allclose(cm.mix2(a, a, 0.37), a)
    assert np.isclose(cm.mix2(0.0, 10.0, 0.3), 7.0)
    with pytest.raises(ValueError):
        cm.mix2(a, a, 1.2)


def test_mix3():
    a, b, c = np.array([1.0]), np.array([5.0]), np.array([-3.0])
    for g in (0, 1):
        assert np.array_equal(cm.mix3(a, b, c, 1.0, g), a)
    assert np.allclose(cm.mix3(a, b, c, 0.4, 0), cm.mix2(a, c, 0.4))
    assert np.isclose(cm.mix3(2.0, 8.0, 100.0, 0.5, 1), 5.0)
    with pytest.raises(ValueError):
        cm.mix3(a, b, c, 0.5, 2)


@given(st.integers(0, 10**6), st.floats(0, 1), st.integers(0, 1))
def test_mix3_labels_stay_distributions(seed, lam, gamma):
    rng = RngStream(seed)
    y = one_hot(rng.integers(0, 4, size=3), 4)
    out = cm.mix3(y[0], y[1], y[2], lam, gamma)
    assert np.all(out >= 0) and np.isclose(out.sum(), 1.0)


@given(st.integers(0, 10**6))
def test_lambda_one_is_identity_on_inputs_and_labels(seed):
    rng = RngStream(seed)
    x, y = rng.normal(size=(3, 4)), one_hot([0, 2, 1], 3)
    for g in (0, 1):
        assert np.array_equal(cm.mix3(x[0], x[1], x[2], 1.0, g), x[0])
        assert np.array_equal(cm.mix3(y[0], y[1], y[2], 1.0, g), y[0])


def test_triplet_forced_and_valid():
    rng = RngStream(0)
    d = np.array([0, 0, 1, 1])
    for i, peer in ((0, 1), (1, 0), (2, 3), (3, 2)):
        j, k = cm.sample_triplet(d, i, rng)
        assert k == peer and d[j] != d[i]
    d = rng.integers(0, 3, size=12)
    d[:3] = [0, 1, 2]
    d[3:6] = [0, 1, 2]
    ok = 0
    for _ in range(1000):
        i = int(rng.integers(0, 12))
        j, k = cm.sample_triplet(d, i, rng)
        ok += d[j] != d[i] and d[k] == d[i] and k != i
    assert ok == 1000
    with pytest.raises(ValueError):
        cm.sample_triplet(np.zeros(4, int), 0, rng)


def test_schedule_knots():
    N, bm = 4, 0.6
    assert cm.schedule(0, N, bm) == (0.0, 0.0)
    assert cm.schedule(N, N, bm) == (0.0, bm)
    assert cm.schedule(1.5 * N, N, bm) == (0.5, bm)
    assert cm.schedule(2 * N, N, bm) == (1.0, bm)
    assert cm.schedule(3 * N, N, bm) == (1.0, bm)


@given(st.floats(0, 50), st.floats(0, 50), st.integers(1, 10))
def test_schedule_monotone_and_piecewise_linear(s1, s2, N):
    lo, hi = sorted((s1, s2))
    a1, b1 = cm.schedule(lo, N, 1.0)
    a2, b2 = cm.schedule(hi, N, 1.0)
    assert a1 <= a2 and b1 <= b2
    m = (lo + hi) / 2
    if hi <= N or lo >= 2 * N or (lo >= N and hi <= 2 * N):
        am, bm = cm.schedule(m, N, 1.0)
        assert np.isclose(am, (a1 + a2) / 2) and np.isclose(bm, (b1 + b2) / 2)


def test_schedule_validation():
    with pytest.raises(ValueError):
        cm.MixSchedule(0, 1.0)
    with pytest.raises(ValueError):
        cm.schedule(-1, 2, 1.0)


def test_agg_loss_examples():
    E = np.eye(3)
    assert cm.agg_loss(np.array([[80.0, 0.0, 0.0]]), [0], E) <= 1e-12
    assert np.isclose(cm.agg_loss(np.zeros((2, 3)), [0, 2], E), np.log(3))
    rng = RngStream(0)
    z, E = rng.normal(size=(4, 2)), rng.normal(size=(3, 2))
    y = np.array([0, 2, 1, 1])
    s = z @ E.T
    ref = np.mean([np.log(np.exp(s[i]).sum()) - s[i, y[i]] for i in range(4)])
    assert np.isclose(cm.agg_loss(z, y, E), ref)


def test_zsl_predict():
    E = np.eye(4)
    assert cm.zsl_predict(E[2] * 3, E) == 2
    assert cm.zsl_predict(np.zeros(4), E) == 0
    rng = RngStream(1)
    z, E = rng.normal(size=(10, 3)), rng.normal(size=(5, 3))
    ref = [int(np.argmax([E[c] @ zi for c in range(5)])) for zi in z]
    assert cm.zsl_predict(z, E).tolist() == ref
    with pytest.raises(ValueError):
        cm.zsl_predict(z[0], np.zeros((0, 3)))


def _toy(seed, hidden=4):
    rng = RngStream(seed)
    d = np.repeat([0, 1, 2], 3)
    x = rng.normal(size=(9, 3))
    y = rng.integers(0, 3, size=9)
    E = rng.normal(size=(3, 2))
    params = cm.init_params(3, hidden, 2, rng)
    return rng, d, x, y, E, params


def test_mimg_examples():
    rng, d, x, y, E, params = _toy(0)
    agg = cm.cumix_objective(params, x, y, E, None, None, 0, 0).loss
    assert np.isclose(cm.mimg_loss(params, x, y, d, E, 0.7, 0.0, rng), agg)
    plan = cm.sample_plan(d, 0.0, 1.0, rng)
    assert not plan.gamma.any()
    assert np.array_equal(d[plan.k], d)


def _brute_mixed_ce(params, x, Y, E, plan, level):
    n = len(x)
    def feat(v):
        return np.maximum(v @ params["A"].T + params["a"], 0.0)
    total = 0.0
    for i in range(n):
        lam, g, j, k = plan.lam[i], plan.gamma[i], plan.j[i], plan.k[i]
        if level == "img":
            h = feat(cm.mix3(x[i], x[j], x[k], lam, g))
        else:
            hx = feat(x)
            h = cm.mix3(hx[i], hx[j], hx[k], lam, g)
        t = cm.mix3(Y[i], Y[j], Y[k], lam, g)
        s = E @ (params["P"] @ h)
        total += -(t * (s - np.log(np.exp(s).sum()))).sum()
    return total / n


def test_objective_bruteforce():
    rng, d, x, y, E, params = _toy(1)
    Y = one_hot(y, 3)
    pi = cm.sample_plan(d, 0.5, 1.0, rng)
    pf = cm.sample_plan(d, 0.5, 1.0, rng)
    obj = cm.cumix_objective(params, x, y, E, pi, pf, 0.7, 0.4)
    agg = cm.agg_loss(cm.project(params, x), y, E)
    ref = agg + 0.7 * _brute_mixed_ce(params, x, Y, E, pi, "img") + 0.4 * _brute_mixed_ce(params, x, Y, E, pf, "feat")
    assert np.isclose(obj.loss, ref)
    assert np.isclose(cm.cumix_objective(params, x, y, E, pi, pf, 0, 0).loss, agg)


def test_beta_zero_collapses_to_scaled_agg():
    rng, d, x, y, E, params = _toy(2)
    pi, pf = cm.sample_plan(d, 0.0, 0.0, rng), cm.sample_plan(d, 0.0, 0.0, rng)
    agg = cm.agg_loss(cm.project(params, x), y, E)
    assert np.isclose(cm.cumix_objective(params, x, y, E, pi, pf, 0.5, 2.0).loss, 3.5 * agg)


def test_identical_features_only_mix_labels():
    rng, d, _, y, E, params = _toy(3)
    x = np.tile(rng.normal(size=3), (9, 1))
    plan = cm.sample_plan(d, 0.5, 1.0, rng)
    Y = one_hot(y, 3)
    t = cm._mix_rows(Y, plan)
    s = cm.project(params, x[:1]) @ E.T
    ref = -(t * log_softmax(s)).sum(axis=1).mean()
    assert np.isclose(cm.cumix_objective(params, x, y, E, None, plan, 0, 1).parts["feat"], ref)


def test_single_domain_feature_mixup_reduction():
    # plain manifold mixup: mix hidden rows pairwise and CE against mixed labels
    rng = RngStream(4)
    x, y = rng.normal(size=(6, 3)), rng.integers(0, 3, size=6)
    E = rng.normal(size=(3, 2))
    params = cm.init_params(3, 5, 2, rng)
    d = np.zeros(6, int)
    plan = cm.sample_plan(d, 0.0, 0.8, rng)
    assert np.array_equal(plan.j, plan.k)
    h = np.maximum(x @ params["A"].T + params["a"], 0)
    lam = plan.lam[:, None]
    hm = lam * h + (1 - lam) * h[plan.k]
    ym = lam * np.eye(3)[y] + (1 - lam) * np.eye(3)[y][plan.k]
    logits = hm @ params["P"].T @ E.T
    p = np.exp(logits - logits.max(1, keepdims=True))
    p /= p.sum(1, keepdims=True)
    ref = -(ym * np.log(p)).sum(1).mean()
    obj = cm.cumix_objective(params, x, y, E, None, plan, 0.0, 1.0)
    assert np.isclose(obj.parts["feat"], ref)
    with pytest.raises(ValueError):
        cm.sample_plan(d, 0.5, 0.8, rng)


@pytest.mark.parametrize("hidden", [0, 4])
def test_objective_gradients(hidden):
    for seed in range(10):
        rng, d, x, y, E, params = _toy(seed, hidden)
        if hidden:
            params["a"] = rng.normal(0, 0.5, size=hidden)
        pi, pf = cm.sample_plan(d, 0.5, 1.0, rng), cm.sample_plan(d, 0.5, 1.0, rng)
        obj = cm.cumix_objective(params, x, y, E, pi, pf, 0.8, 0.6)
        assert set(obj.grads) == set(params)
        for name in params:
            def f(v, name=name):
                q = dict(params)
                q[name] = v
                return cm.cumix_objective(q, x, y, E, pi, pf, 0.8, 0.6).loss
            assert relative_error(obj.grads[name], finite_diff_grad(f, params[name])) <= 1e-6


def test_train_cumix_deterministic_and_agg_baseline_runs():
    rng = RngStream(5)
    x = rng.normal(size=(60, 4))
    y, d = rng.integers(0, 3, size=60), np.repeat([0, 1, 2], 20)
    E = rng.normal(size=(3, 2))
    cfg = cm.CuMixConfig(hidden=6, epochs=4, warmup=1, steps_per_epoch=3, batch_per_domain=4)
    a = cm.train_cumix(x, y, d, E, cfg, RngStream(0))
    b = cm.train_cumix(x, y, d, E, cfg, RngStream(0))
    assert all(np.array_equal(a[k], b[k]) for k in a)
    base = cm.train_cumix(x, y, d, E, cfg, RngStream(0), mixing=False)
    assert not np.array_equal(base["P"], a["P"])


def test_embeddings_roundtrip():
    V = RngStream(6).normal(size=(4, 3))
    ids, back = cm.embeddings_from_json(cm.embeddings_to_json([3, 1, 0, 2], V))
    assert ids.tolist() == [3, 1, 0, 2] and np.array_equal(back, V)
    with pytest.raises(ValueError):
        cm.embeddings_from_json('{"version": 0}')
