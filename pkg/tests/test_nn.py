import numpy as np
import pytest

from switchadvisor import nn


def rng():
    return np.random.default_rng(0)


# ---------------------------------------------------------------------------
# Loss oracles: direct formula recomputation in float64


def test_bce_matches_direct_formula():
    logits = np.array([-3.0, -0.5, 0.0, 2.0])
    targets = np.array([0.0, 1.0, 1.0, 0.0])
    loss, grad = nn.bce_with_logits(logits, targets)
    p = 1.0 / (1.0 + np.exp(-logits))
    expected = -(targets * np.log(p) + (1 - targets) * np.log(1 - p)).mean()
    assert loss == pytest.approx(expected, rel=1e-12)
    assert np.allclose(grad, (p - targets) / 4, atol=1e-12)


def test_ce_matches_direct_formula():
    logits = np.array([[2.0, 0.5, -1.0], [0.0, 0.0, 3.0]])
    targets = np.array([0, 2])
    loss, grad = nn.ce_with_logits(logits, targets)
    z = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    expected = -np.log(z[[0, 1], targets]).mean()
    assert loss == pytest.approx(expected, rel=1e-12)
    manual = z.copy()
    manual[[0, 1], targets] -= 1
    assert np.allclose(grad, manual / 2, atol=1e-12)


def test_mse_matches_direct_formula():
    pred = np.array([1.0, 2.0, 4.0])
    target = np.array([1.5, 2.0, 3.0])
    loss, grad = nn.mse(pred, target)
    assert loss == pytest.approx(((pred - target) ** 2).mean(), rel=1e-15)
    assert np.allclose(grad, 2 * (pred - target) / 3)


def test_ce_is_stable_at_large_logits():
    logits = np.array([[1000.0, 0.0], [-1000.0, 0.0]])
    loss, grad = nn.ce_with_logits(logits, np.array([0, 1]))
    assert np.isfinite(loss) and np.all(np.isfinite(grad))


# ---------------------------------------------------------------------------
# Layer gradients vs central finite differences


def _check_layer(layer, x, reduce=lambda out: (out ** 2).sum()):
    """gradient_check over a quadratic readout of the layer output."""
    def loss_fn():
        return float(reduce(layer.forward(x)))

    def backward_fn():
        out = layer.forward(x)
        layer.backward(2.0 * out)

    return nn.gradient_check(layer.params(), loss_fn, backward_fn)


def test_linear_gradients():
    layer = nn.Linear("lin", 4, 3, rng())
    x = rng().normal(size=(5, 4))
    assert _check_layer(layer, x) < 1e-6


def test_embedding_gradients():
    layer = nn.Embedding("emb", 7, 3, rng())
    idx = np.array([[0, 3, 3], [6, 1, 0]])
    assert _check_layer(layer, idx) < 1e-6


def test_gru_gradients():
    layer = nn.GRU("gru", 3, 4, rng())
    x = rng().normal(size=(2, 5, 3))
    assert _check_layer(layer, x) < 1e-5


def test_bigru_gradients():
    layer = nn.BiGRU("bi", 3, 4, rng())
    x = rng().normal(size=(2, 5, 3))
    assert _check_layer(layer, x) < 1e-5


def test_gru_input_gradient():
    """d loss / d input checked by perturbing the input itself."""
    layer = nn.GRU("gru", 3, 4, rng())
    x = rng().normal(size=(2, 4, 3))
    out = layer.forward(x)
    dX = layer.backward(2.0 * out)
    eps = 1e-5
    worst = 0.0
    for idx in np.ndindex(x.shape):
        x[idx] += eps
        hi = float((layer.forward(x) ** 2).sum())
        x[idx] -= 2 * eps
        lo = float((layer.forward(x) ** 2).sum())
        x[idx] += eps
        numeric = (hi - lo) / (2 * eps)
        denom = max(abs(dX[idx]), abs(numeric), 1e-8)
        worst = max(worst, abs(dX[idx] - numeric) / denom)
    assert worst < 1e-5


def test_bigru_is_direction_sensitive():
    layer = nn.BiGRU("bi", 2, 3, rng())
    x = rng().normal(size=(1, 4, 2))
    fwd = layer.forward(x)
    rev = layer.forward(x[:, ::-1])
    assert not np.allclose(fwd, rev)


# ---------------------------------------------------------------------------
# Optimizer helpers


def test_clip_global_norm():
    p = nn.Param(np.zeros(4))
    p.grad = np.array([3.0, 4.0, 0.0, 0.0])  # norm 5
    norm = nn.clip_global_norm({"p": p}, 2.5)
    assert norm == 5.0
    assert np.allclose(p.grad, [1.5, 2.0, 0.0, 0.0])
    p.grad = np.array([0.1, 0.0, 0.0, 0.0])
    nn.clip_global_norm({"p": p}, 2.5)
    assert np.allclose(p.grad, [0.1, 0.0, 0.0, 0.0])  # under the cap: untouched


def test_sgd_step_and_zero_grads():
    p = nn.Param(np.array([1.0, 2.0]))
    p.grad = np.array([0.5, -0.5])
    nn.sgd_step({"p": p}, lr=0.1)
    assert np.allclose(p.value, [0.95, 2.05])
    nn.zero_grads({"p": p})
    assert np.all(p.grad == 0.0)


# ---------------------------------------------------------------------------
# Tensor file round trip


def test_tensor_file_round_trip(tmp_path):
    tensors = {
        "a": np.array([[1.5, -2.25], [0.1, 1e-17]]),
        "b": np.arange(5, dtype=float),
        "scalar": np.array(3.5),
    }
    path = tmp_path / "tensors.txt"
    nn.save_tensors(path, tensors, meta={"kind": "test", "note": "two words"})
    loaded, meta = nn.load_tensors(path)
    assert meta == {"kind": "test", "note": "two words"}
    for name, arr in tensors.items():
        assert loaded[name].shape == arr.shape
        assert np.array_equal(loaded[name], arr)  # repr round trip is exact


def test_tensor_file_rejects_foreign(tmp_path):
    path = tmp_path / "x.txt"
    path.write_text("nope\n")
    with pytest.raises(ValueError, match="not a tensor file"):
        nn.load_tensors(path)
