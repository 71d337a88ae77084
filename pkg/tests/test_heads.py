import numpy as np
import pytest
from scipy.special import expit

from switchadvisor import nn
from switchadvisor.heads import (MLP, FeatureStore, GateModel, HeadsConfig,
                                 QualityModel, _predictor_report,
                                 bootstrap_gap_ci, evaluate_predictor,
                                 gate_feature_row, quality_feature_rows,
                                 train_quality, train_timing_gate, tune_theta,
                                 weighted_bce_with_logits)
from switchadvisor.transition import TransitionEvent

from test_transition import make_event


def quick_config(**overrides):
    base = dict(hidden=16, batch_size=32, learning_rate=0.1, epochs=10, seed=0)
    base.update(overrides)
    return HeadsConfig(**base)


def small_store(d_z=3, players=("p0", "p1"), n_windows=3, seed=0):
    rng = np.random.default_rng(seed)
    store = FeatureStore(d_z)
    for pid in players:
        store.add_player(pid, list(range(n_windows)),
                         rng.normal(size=(n_windows, d_z)),
                         rng.normal(size=(n_windows, d_z)),
                         rng.normal(size=(n_windows, 7)))
    store.seal()
    return store


# ---------------------------------------------------------------------------
# Feature layout


def test_gate_input_matches_single_row_builder():
    store = small_store()
    e = make_event(action="switch", from_state=4, subtype=2, player="p1",
                   boundary=12, k=10)
    assert (e.player_id, e.window_start) == ("p1", 2)
    batch = store.gate_input([e])
    row = store.index[("p1", 2)]
    single = gate_feature_row(store.zc[row], store.zu[row], store.mf[row],
                              subtype=2, from_state=4)
    assert batch.shape == (1, 2 * 3 + 7 + 3 + 13)
    assert np.array_equal(batch[0], single)


def test_quality_input_matches_fanout_builders():
    store = small_store()
    e = make_event(action="switch", from_state=1, to_state=9, player="p0",
                   boundary=11, k=10)
    row = store.index[("p0", 1)]
    batch = store.quality_input([e])
    fan_store = store.quality_input_for_targets(e, [9, 3])
    fan_free = quality_feature_rows(store.zc[row], store.zu[row],
                                    store.mf[row], from_state=1,
                                    to_states=[9, 3])
    assert np.array_equal(batch[0], fan_store[0])
    assert np.array_equal(fan_store, fan_free)
    # destination one-hot actually varies across the fan
    assert not np.array_equal(fan_store[0], fan_store[1])


def test_quality_input_target_override():
    store = small_store()
    e = make_event(action="switch", from_state=1, to_state=9, player="p0",
                   boundary=11)
    overridden = store.quality_input([e], to_states=[3])
    assert np.array_equal(overridden[0],
                          store.quality_input_for_targets(e, [3])[0])


def test_rows_unknown_window_raises():
    store = small_store()
    e = make_event(player="p0", boundary=99)
    with pytest.raises(KeyError):
        store.rows([e])


# ---------------------------------------------------------------------------
# Loss and MLP gradients


def test_weighted_bce_matches_direct_formula():
    rng = np.random.default_rng(0)
    x = rng.normal(scale=2.0, size=8)
    y = rng.integers(0, 2, size=8)
    w_pos = 1.5
    loss, grad = weighted_bce_with_logits(x, y, w_pos)
    w = np.where(y == 1, w_pos, 1.0)
    p = expit(x)
    direct = -(w * (y * np.log(p) + (1 - y) * np.log(1 - p))).mean()
    assert loss == pytest.approx(direct, rel=1e-12)
    assert grad == pytest.approx(w * (p - y) / x.size, rel=1e-10)


def test_weighted_bce_unit_weight_equals_plain_bce():
    rng = np.random.default_rng(1)
    x = rng.normal(size=10)
    y = rng.integers(0, 2, size=10)
    loss_w, grad_w = weighted_bce_with_logits(x, y, 1.0)
    loss_p, grad_p = nn.bce_with_logits(x, y)
    assert loss_w == pytest.approx(loss_p, rel=1e-12)
    assert np.allclose(grad_w, grad_p, rtol=1e-12, atol=0)


def test_weighted_bce_gradient_finite_difference():
    x = np.array([0.5, -1.2, 2.0, -0.1])
    y = np.array([1, 0, 0, 1])
    _, grad = weighted_bce_with_logits(x, y, 1.5)
    eps = 1e-6
    for i in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi[i] += eps
        lo[i] -= eps
        num = (weighted_bce_with_logits(hi, y, 1.5)[0]
               - weighted_bce_with_logits(lo, y, 1.5)[0]) / (2 * eps)
        assert grad[i] == pytest.approx(num, abs=1e-8)


def test_mlp_gradient_check():
    rng = np.random.default_rng(2)
    mlp = MLP("m", 5, 6, 2, rng)
    X = rng.normal(size=(4, 5))

    def loss_fn():
        return float((mlp.forward(X) ** 2).sum())

    def backward_fn():
        out = mlp.forward(X)
        mlp.backward(2.0 * out)

    assert nn.gradient_check(mlp.params(), loss_fn, backward_fn) < 1e-6


# ---------------------------------------------------------------------------
# Threshold tuning


def val_events(spec):
    """spec: list of (count, action, prob, y_tq).  Returns (probs, events)."""
    probs, events = [], []
    for count, action, prob, y in spec:
        for _ in range(count):
            # encode y_tq through the win counts: y = wins_next/10 - 5/10
            wins_next = int(round((y + 0.5) * 10))
            events.append(make_event(action=action, wins_current=5,
                                     wins_next=wins_next, n_next=10,
                                     split="val"))
            probs.append(prob)
    return np.array(probs), events


def test_tune_theta_prefers_higher_threshold_on_ties():
    probs, events = val_events([
        (20, "switch", 0.9, 0.4),
        (20, "switch", 0.2, -0.4),
        (160, "stay", 0.1, 0.0),
    ])
    grid = np.round(np.arange(0.0, 1.001, 0.01), 2)
    theta, info = tune_theta(probs, events, grid, max_rate=0.15, min_side=15)
    # every theta in (0.2, 0.9] approves exactly the 20 good switchers
    assert theta == 0.9
    assert info["gap"] == pytest.approx(0.8)


def test_tune_theta_support_floor_skips_thin_pockets():
    probs, events = val_events([
        (5, "switch", 0.99, 1.0),    # huge gap but only 5 approved
        (20, "switch", 0.6, 0.2),
        (20, "switch", 0.3, 0.0),
        (200, "stay", 0.1, 0.0),
    ])
    grid = np.round(np.arange(0.0, 1.001, 0.01), 2)
    theta, info = tune_theta(probs, events, grid, max_rate=0.15, min_side=15)
    assert 0.31 <= theta <= 0.6
    # approved side: 20 events at +0.2 and 5 at +1.0; rejected: 20 at 0.0
    assert info["gap"] == pytest.approx((20 * 0.2 + 5 * 1.0) / 25)
    without_floor, _ = tune_theta(probs, events, grid, max_rate=0.15,
                                  min_side=1)
    assert without_floor > 0.6  # the thin pocket wins without the floor


def test_tune_theta_approval_cap_excludes_better_gap():
    probs, events = val_events([
        (20, "switch", 0.9, 0.3),
        (20, "switch", 0.5, 0.8),
        (20, "switch", 0.2, -0.2),
        (140, "stay", 0.45, 0.0),
    ])
    grid = np.round(np.arange(0.0, 1.001, 0.01), 2)
    # unconstrained best would approve both positive pockets (rate 0.2)
    theta, info = tune_theta(probs, events, grid, max_rate=0.15, min_side=15)
    assert theta > 0.5
    assert info["gap"] == pytest.approx(0.0, abs=1e-12)
    relaxed, relaxed_info = tune_theta(probs, events, grid, max_rate=0.25,
                                       min_side=15)
    assert relaxed <= 0.5
    assert relaxed_info["gap"] == pytest.approx((0.3 + 0.8) / 2 - (-0.2))


def test_tune_theta_no_feasible_threshold_warns():
    probs, events = val_events([
        (50, "switch", 0.8, 0.3),
        (50, "switch", 0.4, -0.1),
    ])
    grid = np.round(np.arange(0.0, 1.001, 0.01), 2)
    with pytest.warns(UserWarning, match="no threshold"):
        theta, info = tune_theta(probs, events, grid, max_rate=0.15,
                                 min_side=15)
    assert theta == 0.5
    assert info["gap"] is None


# ---------------------------------------------------------------------------
# Gate / quality models


def separable_gate_data(n=120, seed=3):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 6))
    y = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(int)
    return X, y


def test_gate_fit_predict_and_threshold():
    X, y = separable_gate_data()
    model = GateModel(6, quick_config(epochs=40), theta=0.5)
    model.fit(X[:90], y[:90], X[90:], y[90:],
              lambda out, t: weighted_bce_with_logits(out, t, 1.5))
    probs = model.predict_prob(X[90:])
    assert probs.shape == (30,)
    assert np.all((probs >= 0) & (probs <= 1))
    acc = ((probs >= 0.5).astype(int) == y[90:]).mean()
    assert acc >= 0.8
    model.theta = 0.7
    assert np.array_equal(model.approve(X[90:]), probs >= 0.7)


def test_predict_prob_is_sigmoid_of_raw_output():
    X, y = separable_gate_data(40)
    model = GateModel(6, quick_config())
    probs = model.predict_prob(X)
    assert probs == pytest.approx(expit(model.raw_output(X)), rel=1e-12)


def test_gate_round_trip(tmp_path):
    X, y = separable_gate_data(60)
    model = GateModel(6, quick_config(epochs=5), theta=0.5)
    model.fit(X[:45], y[:45], X[45:], y[45:],
              lambda out, t: weighted_bce_with_logits(out, t, 1.5))
    model.theta = 0.37
    path = tmp_path / "gate.txt"
    model.save(path)
    loaded = GateModel.load(path)
    assert loaded.theta == 0.37
    assert loaded.config.w_pos == model.config.w_pos
    assert np.array_equal(loaded.predict_prob(X), model.predict_prob(X))


def test_quality_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    X = rng.normal(size=(80, 5))
    y = X[:, 0] * 0.3 - X[:, 2] * 0.1
    model = QualityModel(5, quick_config(epochs=5))
    model.fit(X[:60], y[:60], X[60:], y[60:], nn.mse)
    path = tmp_path / "quality.txt"
    model.save(path)
    loaded = QualityModel.load(path)
    assert np.array_equal(loaded.predict(X), model.predict(X))


def test_model_files_reject_wrong_kind(tmp_path):
    model = GateModel(4, quick_config())
    gate_path = tmp_path / "gate.txt"
    model.save(gate_path)
    with pytest.raises(ValueError, match="not a quality model"):
        QualityModel.load(gate_path)
    q = QualityModel(4, quick_config())
    q_path = tmp_path / "q.txt"
    q.save(q_path)
    with pytest.raises(ValueError, match="not a gate model"):
        GateModel.load(q_path)


def test_train_gate_rejects_single_class():
    from switchadvisor.transition import TimingLabel
    store = small_store()
    events = [make_event(player="p0", boundary=10 + i) for i in range(3)]
    mix = [(e, TimingLabel(e.event_id, 0, "bad_switch")) for e in events]
    with pytest.raises(ValueError, match="single class"):
        train_timing_gate(store, mix, events, quick_config())


def test_train_quality_warns_on_few_switches():
    store = small_store(players=("p0",), n_windows=60)
    events = [make_event(player="p0", boundary=10 + i,
                         wins_next=5 + (i % 3)) for i in range(60)]
    with pytest.warns(UserWarning, match="switch events"):
        train_quality(store, events[:50], events[50:],
                      quick_config(epochs=1))


# ---------------------------------------------------------------------------
# Predictor evaluation


def test_predictor_report_hand_computed():
    pred = np.array([0.2, 0.1, -0.3, -0.1, 0.4, -0.2])
    y = np.array([0.3, -0.1, -0.2, 0.1, 0.2, -0.4])
    r = _predictor_report(pred, y, n_boot=200, seed=0)
    assert r.n_events == 6
    assert r.mae == pytest.approx(1.0 / 6)
    assert r.direction_accuracy == pytest.approx(4 / 6)
    assert r.precision == pytest.approx(2 / 3)
    assert r.recall == pytest.approx(2 / 3)
    assert r.f1 == pytest.approx(2 / 3)
    assert r.gap == pytest.approx(0.4 / 3 - (-0.5 / 3))
    assert r.negative_confirmation == pytest.approx(2 / 3)
    assert r.baseline_mae == pytest.approx(1.3 / 6)
    assert r.baseline_direction == pytest.approx(0.5)


def test_predictor_report_one_sided_predictions():
    pred = np.ones(40) * 0.2
    y = np.linspace(-0.5, 0.5, 40)
    r = _predictor_report(pred, y, n_boot=100)
    assert r.gap is None and r.gap_ci is None
    assert "---" in r.as_text()


def test_report_text_formats_percentage_points():
    pred = np.array([0.2] * 20 + [-0.2] * 20)
    y = np.array([0.3] * 20 + [-0.3] * 20)
    r = _predictor_report(pred, y, n_boot=500, seed=1)
    text = r.as_text()
    assert "+60.0%p" in text
    assert "95% CI [" in text


def test_bootstrap_ci_deterministic_and_chunk_invariant():
    rng = np.random.default_rng(5)
    y = rng.normal(size=60)
    pos = y + rng.normal(scale=0.5, size=60) > 0
    a = bootstrap_gap_ci(y, pos, n_boot=2000, seed=3)
    b = bootstrap_gap_ci(y, pos, n_boot=2000, seed=3)
    c = bootstrap_gap_ci(y, pos, n_boot=2000, seed=3, chunk=64)
    assert a == b == c
    d = bootstrap_gap_ci(y, pos, n_boot=2000, seed=4)
    assert a != d


def test_bootstrap_ci_brackets_strong_signal():
    rng = np.random.default_rng(6)
    y = np.concatenate([rng.normal(0.3, 0.05, 50), rng.normal(-0.3, 0.05, 50)])
    pos = np.array([True] * 50 + [False] * 50)
    lo, hi = bootstrap_gap_ci(y, pos, n_boot=4000, seed=0)
    point = y[pos].mean() - y[~pos].mean()
    assert lo < point < hi
    assert lo > 0  # CI excludes zero for a clean separation


def test_bootstrap_ci_none_when_one_sided():
    y = np.ones(10)
    assert bootstrap_gap_ci(y, np.ones(10, dtype=bool), n_boot=50) is None


def test_evaluate_predictor_needs_thirty_events():
    store = small_store()
    model = QualityModel(2 * 3 + 7 + 26, quick_config())
    events = [make_event(player="p0", boundary=10)] * 10
    with pytest.raises(ValueError, match="30"):
        evaluate_predictor(model, store, events)


def test_predictor_report_file(tmp_path):
    pred = np.array([0.2, -0.1, 0.3, -0.2] * 10)
    y = np.array([0.25, -0.05, 0.2, -0.3] * 10)
    r = _predictor_report(pred, y, n_boot=200, seed=0)
    path = tmp_path / "report.txt"
    r.save(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "predictor-report v1"
    assert any(line.startswith("mae ") for line in lines)
    assert any(line.startswith("gap ") for line in lines)
