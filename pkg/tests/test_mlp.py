import math

import numpy as np
import pytest

import rsiforecast.mlp as mlp_mod
from rsiforecast.errors import ConfigError
from rsiforecast.mlp import (
    MlpModel,
    TrainConfig,
    forward,
    init_model,
    jacobian,
    lm_step,
    load_model,
    save_model,
    select_hidden_size,
    train_lm,
)


def _zero_model(n_inputs, n_hidden, b2=0.0):
    return MlpModel(n_inputs, n_hidden, np.zeros((n_hidden, n_inputs)), np.zeros(n_hidden), np.zeros(n_hidden), b2)


def _loop_forward(model, x):
    """Direct transcription of w2 . sigmoid(W1 x + b1) + b2 with scalar loops."""
    out = model.b2
    for j in range(model.n_hidden):
        z = model.b1[j]
        for k in range(model.n_inputs):
            z += model.W1[j, k] * x[k]
        out += model.w2[j] / (1.0 + math.exp(-z))
    return out


def test_zero_weights_give_output_bias():
    m = _zero_model(3, 4, b2=0.3)
    assert forward(m, np.array([5.0, -2.0, 1.0])) == 0.3


def test_single_unit_half_activation():
    m = MlpModel(1, 1, [[0.0]], [0.0], [2.0], 0.0)
    assert forward(m, np.array([123.0])) == 1.0


def test_forward_matches_scalar_oracle():
    rng = np.random.default_rng(5)
    for _ in range(20):
        n, h = rng.integers(1, 8, size=2)
        m = MlpModel(n, h, rng.normal(size=(h, n)), rng.normal(size=h), rng.normal(size=h), rng.normal())
        X = rng.normal(size=(6, n))
        batch = forward(m, X)
        for x, b in zip(X, batch):
            assert b == pytest.approx(_loop_forward(m, x), abs=1e-12)
            assert forward(m, x) == pytest.approx(b, abs=1e-15)


def test_forward_stable_for_huge_preactivations():
    m = MlpModel(1, 2, [[1e4], [-1e4]], [0.0, 0.0], [1.0, 1.0], 0.0)
    assert forward(m, np.array([1.0])) == pytest.approx(1.0)
    assert forward(m, np.array([-1.0])) == pytest.approx(1.0)


def test_forward_input_errors():
    m = _zero_model(3, 2)
    with pytest.raises(ValueError):
        forward(m, np.zeros(4))
    with pytest.raises(ValueError):
        forward(m, np.array([1.0, np.nan, 0.0]))


def _fd_jacobian(model, X, y, h=1e-6):
    w = model.get_weights()
    J = np.empty((len(y), len(w)))
    for i in range(len(w)):
        wp, wm = w.copy(), w.copy()
        wp[i] += h
        wm[i] -= h
        rp = y - forward(model.with_weights(wp), X)
        rm = y - forward(model.with_weights(wm), X)
        J[:, i] = (rp - rm) / (2 * h)
    return J


def test_jacobian_vs_finite_differences_small_models():
    rng = np.random.default_rng(1)
    for _ in range(10):
        m = init_model(2, 1, int(rng.integers(1 << 30)))  # 5 weights
        m = m.with_weights(rng.normal(size=m.n_weights))
        X, y = rng.uniform(-1, 1, (8, 2)), rng.normal(size=8)
        r, J = jacobian(m, X, y)
        fd = _fd_jacobian(m, X, y)
        mask = np.abs(J) > 1e-8
        assert np.max(np.abs(J - fd)[mask] / np.abs(J[mask])) < 1e-4
        assert r == pytest.approx(y - forward(m, X), abs=0)


def test_jacobian_zero_hidden_weights():
    m = _zero_model(3, 4)
    X = np.random.default_rng(0).normal(size=(5, 3))
    r, J = jacobian(m, X, np.zeros(5))
    assert J.shape == (5, m.n_weights)
    hn = 12
    assert np.all(J[:, hn + 4: hn + 8] == -0.5)
    assert np.all(J[:, -1] == -1.0)
    assert np.all(J[:, :hn + 4] == 0.0)  # zero output weights kill hidden-layer gradients


def test_large_damping_approaches_gradient_direction():
    rng = np.random.default_rng(2)
    for _ in range(10):
        J, r = rng.normal(size=(30, 12)), rng.normal(size=30)
        dw, g = lm_step(J, r, 1e8), J.T @ r
        cos = dw @ g / (np.linalg.norm(dw) * np.linalg.norm(g))
        assert cos > 0.999
        assert dw == pytest.approx(g / 1e8, rel=1e-4)


def test_init_bounds():
    m = init_model(9, 4, 0)
    assert np.all(np.abs(m.W1) <= 0.5 / 3) and np.all(np.abs(m.b1) <= 0.5 / 3)
    assert np.all(np.abs(m.w2) <= 0.25) and abs(m.b2) <= 0.25


def _sine():
    x = np.linspace(0, 1, 200)[:, None]
    return x, np.sin(2 * np.pi * x[:, 0])


def test_lm_accepts_only_decreasing_steps_and_raises_mu_on_rejection():
    x, y = _sine()
    _, trace = train_lm(x, y, 6, TrainConfig(validation_fraction=0.0, max_epochs=80), seed=3)
    sse = trace.accepted_sse
    assert all(b <= a for a, b in zip(sse, sse[1:]))
    attempts = trace.attempts
    rejected = 0
    for a, b in zip(attempts, attempts[1:]):
        if not a["accepted"]:
            rejected += 1
            assert b["mu"] > a["mu"]
        else:
            assert b["mu"] < a["mu"]
    assert rejected > 0


def test_train_is_deterministic():
    x, y = _sine()
    cfg = TrainConfig(max_epochs=30)
    a, _ = train_lm(x, y, 5, cfg, seed=9)
    b, _ = train_lm(x, y, 5, cfg, seed=9)
    c, _ = train_lm(x, y, 5, cfg, seed=10)
    assert np.array_equal(a.get_weights(), b.get_weights())
    assert not np.array_equal(a.get_weights(), c.get_weights())


def test_returns_best_validation_weights():
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(120, 3))
    y = X @ [0.3, -0.2, 0.5] + 0.05 * rng.normal(size=120)
    model, trace = train_lm(X, y, 8, TrainConfig(patience=4), seed=1)
    val_X, val_y = X[-18:], y[-18:]
    best = min(e["val_mse"] for e in trace.epochs)
    assert np.mean((val_y - forward(model, val_X)) ** 2) == pytest.approx(best, rel=1e-12)
    assert trace.stop_reason in ("patience", "max_epochs", "mu_max", "grad_tol")


def test_goal_mse_stops_early():
    x, y = _sine()
    _, trace = train_lm(x, y, 10, TrainConfig(validation_fraction=0.0, goal_mse=1e-2), seed=0)
    assert trace.stop_reason == "goal_mse"
    assert trace.epochs[-1]["train_mse"] <= 1e-2


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(mu_inc=0.5)
    with pytest.raises(ConfigError):
        TrainConfig(validation_fraction=0.6)
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"learning_rate": 1})


def test_select_single_candidate():
    x, y = _sine()
    best, report = select_hidden_size(x, y, TrainConfig(hidden_candidates=(8,), max_epochs=20))
    assert best == 8 and [r.n_hidden for r in report] == [8]


def test_select_tie_prefers_smaller(monkeypatch):
    def constant_model(X, y, n_hidden, config, seed=None):
        return _zero_model(X.shape[1], n_hidden, b2=0.5), mlp_mod.TrainingTrace()

    monkeypatch.setattr(mlp_mod, "train_lm", constant_model)
    x, y = _sine()
    best, report = select_hidden_size(x, y, TrainConfig(hidden_candidates=(10, 5)))
    assert report[0].val_mse == report[1].val_mse
    assert best == 5


def test_select_survives_a_failing_candidate(monkeypatch):
    real = mlp_mod.train_lm

    def flaky(X, y, n_hidden, config, seed=None):
        if n_hidden == 3:
            raise mlp_mod.TrainingError("breakdown")
        return real(X, y, n_hidden, config, seed=seed)

    monkeypatch.setattr(mlp_mod, "train_lm", flaky)
    x, y = _sine()
    best, report = select_hidden_size(x, y, TrainConfig(hidden_candidates=(3, 4), max_epochs=10))
    assert best == 4 and report[0].error == "breakdown"


def test_teacher_student_selection_is_argmin():
    rng = np.random.default_rng(4)
    teacher = init_model(4, 3, 0).with_weights(rng.normal(scale=2.0, size=mlp_mod.n_weights(4, 3)))
    X = rng.uniform(size=(300, 4))
    y = forward(teacher, X)
    best, report = select_hidden_size(X, y, TrainConfig(hidden_candidates=(1, 3, 6), max_epochs=60, seed=2))
    scores = {r.n_hidden: r.val_mse for r in report}
    assert scores[best] == min(scores.values())
    assert scores[3] < scores[1]


def test_model_file_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(8)
    m = init_model(5, 3, 1).with_weights(rng.normal(size=mlp_mod.n_weights(5, 3)) * 1e3 / 7)
    m.feature_names, m.fingerprint, m.seed = ("a", "b", "c", "d", "e"), "abc", 1
    again = load_model(save_model(m, tmp_path / "m.json"))
    assert np.array_equal(again.get_weights(), m.get_weights())
    X = rng.normal(size=(10, 5))
    assert np.array_equal(forward(again, X), forward(m, X))
    assert again.feature_names == m.feature_names and again.seed == 1
