import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import ecgtrace.model.training as train_mod
from ecgtrace.errors import EmptySplit, LabelOutOfRange, MissingSample, ShapeMismatch
from ecgtrace.model import (
    AdamState, CNNBackend, Conv2D, Dense, Dropout, EarlyStopping, Flatten, MaxPool, ModelSpec,
    PredictionsBackend, ReLU, Softmax, TrainConfig, adam_step, backward, forward, grad_check,
    grad_check_report,
    init_params, load_checkpoint, loss_ce, reference_spec, save_checkpoint, softmax, train,
    write_predictions,
)


def linear_spec(n_in, k):
    return ModelSpec((1, 1, n_in), (Flatten(), Dense(k), Softmax()))


def small_cnn(dropout=0.0, k=3):
    return ModelSpec((2, 8, 8), (Conv2D(3), ReLU(), MaxPool(), Conv2D(4), ReLU(), MaxPool(),
                                 Dropout(dropout), Flatten(), Dense(k), Softmax()))


# -- spec ------------------------------------------------------------------------

def test_spec_validation():
    with pytest.raises(ShapeMismatch):
        ModelSpec((1, 4, 4), (Flatten(), Dense(2)))
    with pytest.raises(ShapeMismatch):
        ModelSpec((1, 4, 4), (Flatten(), Dense(1), Softmax()))
    with pytest.raises(ShapeMismatch):
        ModelSpec((1, 4, 4), (Dense(2), Softmax()))
    spec = reference_spec()
    assert spec.num_classes == 2 and spec.last_conv() == "conv3"
    assert spec.output_shapes[-3] == (16 * 8 * 8,)
    assert ModelSpec.from_dict(spec.to_dict()) == spec


# -- init ------------------------------------------------------------------------

def test_init_shapes_and_determinism():
    p = init_params(ModelSpec((1, 1, 4), (Flatten(), Dense(2), Softmax())))
    assert p["dense1"]["weight"].shape == (4, 2) and np.all(p["dense1"]["bias"] == 0)
    a, b = init_params(reference_spec(), 7), init_params(reference_spec(), 7)
    assert all(np.array_equal(a[n][k], b[n][k]) for n in a for k in a[n])


def test_dense_single_output_shape():
    # Dense(1) cannot end in a softmax classifier, so inspect init on a 2-layer stack.
    spec = ModelSpec((4,), (Dense(1), ReLU(), Dense(2), Softmax()))
    p = init_params(spec)
    assert p["dense1"]["weight"].size == 4 and p["dense1"]["bias"].tolist() == [0.0]


def test_he_scale():
    spec = ModelSpec((32, 4, 4), (Conv2D(64), Flatten(), Dense(10), Softmax()))  # fan-in 288 and 1024
    for seed in range(10):
        p = init_params(spec, seed, np.float64)
        for name, fan_in in (("conv1", 288), ("dense1", 1024)):
            std = p[name]["weight"].std()
            assert abs(std / math.sqrt(2 / fan_in) - 1) < 0.2


# -- forward ---------------------------------------------------------------------

def test_zero_weights_uniform():
    spec = small_cnn(k=4)
    p = {n: {k: np.zeros_like(v) for k, v in d.items()} for n, d in init_params(spec).items()}
    res = forward(spec, p, np.ones((2, 2, 8, 8)))
    assert np.allclose(res.probabilities, 0.25)


def test_dense_hand_computed():
    spec = ModelSpec((2,), (Dense(2), Softmax()))
    p = {"dense1": {"weight": np.array([[1.0, 2.0], [3.0, -1.0]]), "bias": np.array([0.5, -0.5])}}
    res = forward(spec, p, np.array([[2.0, 1.0]]))
    # [2, 1] @ [[1, 2], [3, -1]] + [0.5, -0.5] = [5.5, 2.5]
    assert res.logits.tolist() == [[5.5, 2.5]]
    e = np.exp([0.0, -3.0])
    assert np.allclose(res.probabilities, e / e.sum())


def test_eval_mode_dropout_identity(rng):
    spec = small_cnn(dropout=0.5)
    p = init_params(spec, 0, np.float64)
    x = rng.standard_normal((3, 2, 8, 8))
    a = forward(spec, p, x, train_mode=False, seed=1)
    b = forward(spec, p, x, train_mode=False, seed=2)
    assert np.array_equal(a.logits, b.logits)
    assert np.array_equal(a.activation("dropout1"), a.activation("pool2"))


def test_dropout_preserves_expectation():
    spec = ModelSpec((1, 1, 200), (Dropout(0.2), Flatten(), Dense(2), Softmax()))
    p = init_params(spec, 0, np.float64)
    x = np.ones((1, 1, 1, 200))
    means = [forward(spec, p, x, True, s).activation("dropout1").mean() for s in range(400)]
    assert abs(np.mean(means) - 1.0) < 0.02


def test_shape_mismatch():
    spec = small_cnn()
    with pytest.raises(ShapeMismatch):
        forward(spec, init_params(spec), np.zeros((1, 1, 8, 8)))


@given(arrays(np.float64, (3, 5), elements=st.floats(-50, 50)), st.floats(-100, 100))
def test_softmax_normalized_and_shift_invariant(z, c):
    p = softmax(z)
    assert np.allclose(p.sum(axis=1), 1, atol=1e-6) and np.all(p >= 0)
    assert np.allclose(softmax(z + c), p, atol=1e-9)


# -- loss ------------------------------------------------------------------------

def test_loss_examples():
    loss, _ = loss_ce(np.eye(3), [0, 1, 2])
    assert loss <= 1e-11
    loss, grad = loss_ce(np.full((4, 5), 0.2), [0, 1, 2, 3])
    assert loss == pytest.approx(math.log(5), abs=1e-12)
    assert np.allclose(grad.sum(axis=1), 0)
    assert np.allclose(grad[0], (np.full(5, 0.2) - np.eye(5)[0]) / 4)
    with pytest.raises(LabelOutOfRange):
        loss_ce(np.full((1, 2), 0.5), [2])


# -- backward --------------------------------------------------------------------

def test_backward_zero_gradient(rng):
    spec = small_cnn()
    p = init_params(spec, 1, np.float64)
    res = forward(spec, p, rng.standard_normal((2, 2, 8, 8)))
    g = backward(spec, p, res.cache, np.zeros((2, 3)))
    assert all(np.all(v == 0) for d in g.values() for v in d.values())


def test_backward_single_dense(rng):
    spec = ModelSpec((3,), (Dense(2), Softmax()))
    p = init_params(spec, 0, np.float64)
    x = rng.standard_normal((4, 3))
    gl = rng.standard_normal((4, 2))
    g = backward(spec, p, forward(spec, p, x).cache, gl)
    expected = [[sum(x[n, i] * gl[n, j] for n in range(4)) for j in range(2)] for i in range(3)]
    assert np.allclose(g["dense1"]["weight"], expected)
    assert np.allclose(g["dense1"]["bias"], gl.sum(axis=0))


def test_grad_check_linear(rng):
    spec = linear_spec(6, 3)
    err = grad_check(spec, init_params(spec, 0, np.float64), rng.standard_normal((5, 1, 1, 6)), [0, 1, 2, 1, 0])
    assert err < 1e-7


def test_grad_check_conv_pool(rng):
    spec = small_cnn(dropout=0.0)
    err = grad_check(spec, init_params(spec, 2, np.float64), rng.standard_normal((3, 2, 8, 8)), [0, 1, 2])
    assert err < 1e-4


def test_grad_check_frozen_dropout(rng):
    spec = small_cnn(dropout=0.3)
    err = grad_check(spec, init_params(spec, 3, np.float64), rng.standard_normal((3, 2, 8, 8)), [2, 1, 0],
                     train_mode=True, seed=9)
    assert err < 1e-4


def test_grad_check_skips_kink_crossings():
    spec = ModelSpec((1, 1, 1), (Flatten(), Dense(2), ReLU(), Dense(2), Softmax()))
    params = init_params(spec, 0, np.float64)
    params["dense1"]["weight"][:] = [[1.0, 1.0]]
    params["dense1"]["bias"][:] = [-1.0 + 3e-6, 0.5]  # first unit sits 3e-6 above its kink at x=1
    params["dense2"]["weight"][:] = [[2.0, -1.0], [0.5, 0.5]]
    x, y = np.ones((1, 1, 1, 1)), [0]
    naive = grad_check_report(spec, params, x, y, skip_kinks=False)
    careful = grad_check_report(spec, params, x, y)
    assert naive.max_rel_error > 1e-2
    assert careful.skipped >= 1 and careful.probed + careful.skipped == naive.probed
    assert careful.max_rel_error < 1e-5


def test_input_gradient_matches_finite_difference(rng):
    spec = small_cnn()
    p = init_params(spec, 4, np.float64)
    x = rng.standard_normal((1, 2, 8, 8))
    res = forward(spec, p, x)
    _, gl = loss_ce(res.probabilities, [1])
    _, gx = backward(spec, p, res.cache, gl, return_input_grad=True)
    i = (0, 1, 3, 5)
    xp, xm = x.copy(), x.copy()
    xp[i] += 1e-6
    xm[i] -= 1e-6
    num = (loss_ce(forward(spec, p, xp).probabilities, [1])[0] - loss_ce(forward(spec, p, xm).probabilities, [1])[0]) / 2e-6
    assert gx[i] == pytest.approx(num, rel=1e-5, abs=1e-9)


# -- adam ------------------------------------------------------------------------

def test_adam_zero_gradient_is_noop():
    p = {"d": {"weight": np.array([1.5, -2.0])}}
    g = {"d": {"weight": np.zeros(2)}}
    new, _ = adam_step(p, g, AdamState.fresh(p), 1, TrainConfig())
    assert np.array_equal(new["d"]["weight"], p["d"]["weight"])


def test_adam_first_step_closed_form():
    p = {"d": {"weight": np.array([0.0])}}
    g = {"d": {"weight": np.array([1.0])}}
    new, state = adam_step(p, g, AdamState.fresh(p), 1, TrainConfig())
    assert new["d"]["weight"][0] == pytest.approx(-1e-3 / (1 + 1e-8), rel=1e-12)
    assert state.m["d"]["weight"][0] == pytest.approx(0.1)
    assert p["d"]["weight"][0] == 0.0


def test_adam_bounded_moments(rng):
    p = {"d": {"weight": np.zeros(3)}}
    state = AdamState.fresh(p)
    cfg = TrainConfig()
    for t in range(1, 10_001):
        g = {"d": {"weight": rng.uniform(-1, 1, 3)}}
        p, state = adam_step(p, g, state, t, cfg)
    assert np.all(np.isfinite(state.m["d"]["weight"])) and np.all(state.v["d"]["weight"] <= 1)


# -- early stopping / train ------------------------------------------------------

def test_early_stopping_rule():
    s = EarlyStopping(8)
    stops = []
    for epoch in range(1, 16):
        s.update(epoch, 1.0)
        stops.append(s.should_stop)
    assert stops.index(True) + 1 == 9 and s.best_epoch == 1


def _tiny_data(rng, n=24):
    x = rng.standard_normal((n, 1, 1, 4)).astype(np.float32)
    y = (x[:, 0, 0, 0] > 0).astype(np.int64)
    return x, y


@pytest.mark.parametrize("losses, epochs, best", [
    ([1.0 - 0.01 * e for e in range(15)], 15, 15),
    ([1.0] * 15, 9, 1),
    ([1.0, 0.9, 0.95, 0.8] + [0.85] * 11, 12, 4),
])
def test_train_stopping_trace(monkeypatch, rng, losses, epochs, best):
    script = iter(losses)
    snapshots = []
    real_eval = train_mod.evaluate_loss

    def fake_eval(spec, params, x, y, batch_size=64):
        snapshots.append(params)
        real_eval(spec, params, x, y, batch_size)
        return next(script), 0.5

    monkeypatch.setattr(train_mod, "evaluate_loss", fake_eval)
    spec = linear_spec(4, 2)
    res = train(spec, _tiny_data(rng), _tiny_data(rng, 8), TrainConfig(max_epochs=15, patience=8))
    assert res.epochs_run == epochs and res.best_epoch == best
    assert res.params is snapshots[best - 1]


def test_train_deterministic_and_learns(rng):
    spec = ModelSpec((1, 1, 4), (Flatten(), Dense(8), ReLU(), Dropout(0.2), Dense(2), Softmax()))
    tr, va = _tiny_data(rng, 64), _tiny_data(rng, 16)
    cfg = TrainConfig(seed=3)
    a, b = train(spec, tr, va, cfg), train(spec, tr, va, cfg)
    assert [h.__dict__ for h in a.history] == [h.__dict__ for h in b.history]
    assert a.history[-1].train_loss < a.history[0].train_loss


def test_train_empty_split(rng):
    with pytest.raises(EmptySplit):
        train(linear_spec(4, 2), _tiny_data(rng), (np.zeros((0, 1, 1, 4)), np.zeros(0)), TrainConfig())


# -- backends / checkpoint -------------------------------------------------------

def test_cnn_backend(rng):
    spec = small_cnn()
    be = CNNBackend(spec, init_params(spec, 0), batch_size=2)
    x = rng.standard_normal((5, 2, 8, 8))
    p = be.predict_proba(x)
    assert p.shape == (5, 3) and np.allclose(p.sum(axis=1), 1, atol=1e-6)
    assert be.activations(x, "conv2").shape == (5, 4, 4, 4)


def test_predictions_backend(tmp_path):
    be = PredictionsBackend({"id0": [0.9, 0.1]})
    assert be.predict_proba(["id0"]).tolist() == [[0.9, 0.1]]
    with pytest.warns(UserWarning, match="renormalizing"):
        be2 = PredictionsBackend({"a": [2.0, 2.0]})
    assert be2.predict_proba("a").tolist() == [[0.5, 0.5]]
    with pytest.raises(MissingSample):
        be.predict_proba(["nope"])
    path = write_predictions(tmp_path / "p.csv", ["x", "y"], np.array([[0.25, 0.75], [1.0, 0.0]]))
    assert PredictionsBackend.from_csv(path).predict_proba(["y", "x"]).tolist() == [[1.0, 0.0], [0.25, 0.75]]


def test_checkpoint_roundtrip(tmp_path):
    spec = reference_spec((1, 16, 16), 3)
    p = init_params(spec, 5)
    path = save_checkpoint(tmp_path / "c.json", spec, p, {"image_size": 16})
    spec2, p2, extra = load_checkpoint(path)
    assert spec2 == spec and extra == {"image_size": 16}
    assert all(np.array_equal(p[n][k], p2[n][k]) and p2[n][k].dtype == p[n][k].dtype for n in p for k in p[n])
