import numpy as np
import pytest

from dialogrl.nets import (
    HeadSpec,
    LayerSpec,
    MlpModel,
    MlpSpec,
    TrainBatch,
    analytic_gradient,
    load_model,
    mlp_new,
    numerical_gradient,
    save_model,
    single_head_spec,
)
from dialogrl.errors import FormatError, NumericError, ShapeError, SpecError


def q_net_spec():
    return single_head_spec(129, [80], 29, output_activation="linear", loss="mse", name="q")


def random_multihead_spec(rng):
    d_in = int(rng.integers(2, 6))
    trunk = int(rng.integers(2, 6))
    shared = [LayerSpec(d_in, trunk, "tanh")]
    heads = []
    k = int(rng.integers(2, 5))
    heads.append(HeadSpec("clf", [LayerSpec(trunk, 4, "tanh"), LayerSpec(4, k, "softmax")], "cross_entropy"))
    heads.append(HeadSpec("reg", [LayerSpec(trunk, 3, "tanh"), LayerSpec(3, 2, "linear")], "mse"))
    heads.append(HeadSpec("bin", [LayerSpec(trunk, 1, "sigmoid")], "binary_cross_entropy"))
    return MlpSpec(shared, heads).validate(), d_in, k


def random_batch_for(spec_info, rng, masked=False):
    spec, d_in, k = spec_info
    n = int(rng.integers(2, 6))
    x = rng.normal(size=(n, d_in))
    onehot = np.zeros((n, k))
    onehot[np.arange(n), rng.integers(0, k, size=n)] = 1.0
    targets = {
        "clf": onehot,
        "reg": rng.normal(size=(n, 2)),
        "bin": rng.integers(0, 2, size=(n, 1)).astype(float),
    }
    masks = {}
    if masked:
        m = np.zeros((n, 2))
        m[np.arange(n), rng.integers(0, 2, size=n)] = 1.0
        masks["reg"] = m
    return TrainBatch(np.asarray(x), targets, masks)


def test_q_net_parameter_count():
    # 129*80 + 80 hidden parameters plus 80*29 + 29 output parameters
    model = mlp_new(q_net_spec(), seed=0)
    expected = 129 * 80 + 80 + 80 * 29 + 29
    assert model.n_parameters() == expected == 12749


def test_same_seed_same_parameters():
    a = mlp_new(q_net_spec(), seed=5)
    b = mlp_new(q_net_spec(), seed=5)
    assert np.array_equal(a.parameter_vector(), b.parameter_vector())
    c = mlp_new(q_net_spec(), seed=6)
    assert not np.array_equal(a.parameter_vector(), c.parameter_vector())


def test_zero_fan_in_rejected():
    with pytest.raises(SpecError):
        LayerSpec(0, 4, "tanh").validate()


def test_loss_activation_pairing_enforced():
    with pytest.raises(SpecError):
        HeadSpec("h", [LayerSpec(3, 2, "linear")], "cross_entropy").validate()
    with pytest.raises(SpecError):
        HeadSpec("h", [LayerSpec(3, 2, "softmax")], "mse").validate()


def test_forward_zero_weights_returns_bias():
    model = mlp_new(single_head_spec(4, [], 3, "linear", "mse"), seed=0)
    model.set_parameter_vector(np.zeros(model.n_parameters()))
    w_size = 4 * 3
    vec = np.zeros(model.n_parameters())
    vec[w_size:] = [1.5, -2.0, 0.25]
    model.set_parameter_vector(vec)
    out = model.forward(np.ones((2, 4)))["out"]
    assert np.allclose(out, [[1.5, -2.0, 0.25]] * 2)


def test_forward_softmax_rows_sum_to_one():
    spec = single_head_spec(6, [5], 4, "softmax", "cross_entropy")
    model = mlp_new(spec, seed=3)
    rng = np.random.default_rng(0)
    out = model.forward(rng.normal(size=(7, 6)))["out"]
    assert np.allclose(out.sum(axis=1), 1.0, atol=1e-6)
    assert (out > 0).all()


def test_forward_sigmoid_in_unit_interval():
    spec = single_head_spec(3, [4], 2, "sigmoid", "binary_cross_entropy")
    model = mlp_new(spec, seed=1)
    out = model.forward(np.random.default_rng(1).normal(size=(5, 3)))["out"]
    assert ((out > 0) & (out < 1)).all()


def test_forward_hand_computed_tiny_net():
    # 2 -> 2 tanh -> 1 linear with hand-set weights; expected value computed
    # by hand: h = tanh(x @ W1 + b1), y = h @ W2 + b2.
    spec = single_head_spec(2, [2], 1, "linear", "mse")
    model = mlp_new(spec, seed=0)
    w1 = np.array([[0.1, -0.2], [0.3, 0.4]])
    b1 = np.array([0.05, -0.05])
    w2 = np.array([[0.7], [-0.6]])
    b2 = np.array([0.2])
    model.set_parameter_vector(np.concatenate([w1.ravel(), b1, w2.ravel(), b2]))
    x = np.array([[1.0, 2.0]])
    h = np.tanh(x @ w1 + b1)
    want = h @ w2 + b2
    got = model.forward(x)["out"]
    assert np.allclose(got, want, atol=1e-12)


def test_forward_width_mismatch():
    model = mlp_new(q_net_spec(), seed=0)
    with pytest.raises(ShapeError):
        model.forward(np.zeros((2, 128)))


def test_forward_is_pure():
    model = mlp_new(q_net_spec(), seed=0)
    x = np.random.default_rng(2).normal(size=(3, 129))
    before = model.parameter_vector()
    a = model.forward(x)["q"]
    b = model.forward(x)["q"]
    assert np.array_equal(a, b)
    assert np.array_equal(before, model.parameter_vector())


def test_gradients_match_finite_differences():
    # Core oracle: backprop vs central differences on >= 20 random nets.
    rng = np.random.default_rng(1234)
    for trial in range(20):
        spec_info = random_multihead_spec(rng)
        model = mlp_new(spec_info[0], seed=int(rng.integers(1 << 30)))
        batch = random_batch_for(spec_info, rng, masked=(trial % 3 == 0))
        got = analytic_gradient(model, batch)
        want = numerical_gradient(model, batch, h=1e-5)
        scale = np.maximum(np.abs(want), 1.0)
        rel = np.abs(got - want) / scale
        assert rel.max() <= 1e-4, f"trial {trial}: max rel err {rel.max():.2e}"


def test_training_converges_on_fixed_regression_batch():
    spec = single_head_spec(3, [8], 1, "linear", "mse")
    model = mlp_new(spec, seed=7)
    rng = np.random.default_rng(0)
    x = rng.normal(size=(4, 3))
    y = rng.normal(size=(4, 1))
    batch = TrainBatch(x, {"out": y})
    initial = model.loss(batch)
    for _ in range(200):
        model.train_minibatch(batch, learning_rate=0.01)
    assert model.loss(batch) < 0.01 * initial


def test_zero_learning_rate_is_a_null_update():
    model = mlp_new(q_net_spec(), seed=0)
    x = np.random.default_rng(3).normal(size=(4, 129))
    batch = TrainBatch(x, {"q": np.zeros((4, 29))})
    before = model.parameter_vector()
    model.train_minibatch(batch, learning_rate=0.0)
    assert np.array_equal(before, model.parameter_vector())


def test_parameters_stay_finite_under_training():
    spec_info = random_multihead_spec(np.random.default_rng(5))
    model = mlp_new(spec_info[0], seed=2)
    rng = np.random.default_rng(8)
    for _ in range(50):
        model.train_minibatch(random_batch_for(spec_info, rng), learning_rate=0.01)
    assert model.all_finite()


def test_non_finite_loss_raises():
    model = mlp_new(single_head_spec(2, [], 1, "linear", "mse"), seed=0)
    batch = TrainBatch(np.array([[np.inf, 1.0]]), {"out": np.array([[0.0]])})
    with pytest.raises(NumericError):
        model.train_minibatch(batch)


def test_checkpoint_roundtrip(tmp_path):
    spec_info = random_multihead_spec(np.random.default_rng(6))
    model = mlp_new(spec_info[0], seed=3)
    rng = np.random.default_rng(9)
    for _ in range(5):
        model.train_minibatch(random_batch_for(spec_info, rng))
    path = tmp_path / "model.json"
    save_model(model, path)
    loaded = load_model(path)
    assert np.array_equal(loaded.parameter_vector(), model.parameter_vector())
    x = rng.normal(size=(3, spec_info[1]))
    for name, out in model.forward(x).items():
        assert np.array_equal(out, loaded.forward(x)[name])
    # RMSProp state restored too: another step matches exactly
    b = random_batch_for(spec_info, rng)
    assert model.train_minibatch(b) == loaded.train_minibatch(b)
    assert np.array_equal(model.parameter_vector(), loaded.parameter_vector())


def test_checkpoint_truncated_file(tmp_path):
    model = mlp_new(q_net_spec(), seed=0)
    path = tmp_path / "model.json"
    save_model(model, path)
    path.write_text(path.read_text()[: 200])
    with pytest.raises(FormatError):
        load_model(path)


def test_checkpoint_spec_hash_mismatch(tmp_path):
    import json

    model = mlp_new(q_net_spec(), seed=0)
    obj = model.to_json()
    obj["spec_digest"] = "deadbeefdeadbeef"
    path = tmp_path / "model.json"
    path.write_text(json.dumps(obj))
    with pytest.raises(FormatError, match="deadbeef"):
        load_model(path)


def test_checkpoint_version_mismatch(tmp_path):
    import json

    model = mlp_new(q_net_spec(), seed=0)
    obj = model.to_json()
    obj["format_version"] = 99
    path = tmp_path / "model.json"
    path.write_text(json.dumps(obj))
    with pytest.raises(FormatError):
        load_model(path)


def test_clone_is_independent():
    model = mlp_new(q_net_spec(), seed=0)
    twin = model.clone()
    assert np.array_equal(twin.parameter_vector(), model.parameter_vector())
    batch = TrainBatch(np.ones((2, 129)), {"q": np.zeros((2, 29))})
    model.train_minibatch(batch, learning_rate=0.1)
    assert not np.array_equal(twin.parameter_vector(), model.parameter_vector())
