import numpy as np
import pytest

from gradleak.errors import ConfigError, ShapeError
from gradleak.tensor import RngHandle, softmax
from gradleak.victim import (
    IDENTITY,
    MIXUP,
    ONE_HOT,
    RELU,
    SMOOTHING,
    LayerSpec,
    MlpModel,
    accuracy,
    backward,
    cross_entropy,
    forward,
    init_mlp,
    load_model,
    make_blobs,
    make_label,
    mix_inputs,
    save_model,
    synth_dataset,
    train,
)


def single_layer(weight, bias=None):
    return MlpModel([LayerSpec(np.asarray(weight, float), bias, IDENTITY)])


# -- forward -----------------------------------------------------------------

def test_forward_identity_network():
    model = single_layer(np.eye(2))
    logits, acts = forward(model, [1.0, 2.0])
    assert np.array_equal(logits, [1.0, 2.0])
    assert np.array_equal(acts[-1], [1.0, 2.0])


def test_forward_relu_hand_case():
    # first layer sends unit 1 negative; ReLU zeroes it before the head
    l0 = LayerSpec(np.array([[1.0, 0.0], [-1.0, -1.0]]), None, RELU)
    l1 = LayerSpec(np.array([[1.0, 1.0], [0.0, 2.0]]), None, IDENTITY)
    model = MlpModel([l0, l1])
    logits, acts = forward(model, [2.0, 1.0])
    assert np.array_equal(acts[1], [2.0, 0.0])
    assert np.array_equal(logits, [2.0, 0.0])


def test_forward_matches_independent_reimplementation():
    rng = RngHandle(10)
    model = init_mlp((32, 16, 10), rng)
    x = rng.uniform(0, 1, 32)
    logits, _ = forward(model, x)
    # straightforward duplicate evaluation
    h = x
    for layer in model.layers[:-1]:
        h = np.maximum(layer.weight @ h, 0.0)
    expected = model.layers[-1].weight @ h
    assert np.max(np.abs(logits - expected)) < 1e-12


def test_forward_dimension_error():
    model = single_layer(np.eye(3))
    with pytest.raises(ShapeError):
        forward(model, [1.0, 2.0])


# -- cross entropy -----------------------------------------------------------

def test_cross_entropy_uniform_one_hot():
    lab = make_label(ONE_HOT, 0, None, 2)
    assert cross_entropy(np.zeros(2), lab) == pytest.approx(np.log(2), abs=1e-12)


def test_cross_entropy_soft_symmetry():
    lab = make_label(MIXUP, (0, 1), None, 2, coeff=0.5)
    assert cross_entropy(np.zeros(2), lab) == pytest.approx(np.log(2), abs=1e-12)


def test_cross_entropy_matches_extended_precision():
    rng = RngHandle(11)
    z = rng.uniform(-4, 4, 6)
    lab = make_label(SMOOTHING, 2, rng, 6)
    hi = np.exp(z.astype(np.longdouble))
    p = hi / hi.sum()
    expected = float(-(lab.vector.astype(np.longdouble) * np.log(p)).sum())
    assert cross_entropy(z, lab) == pytest.approx(expected, rel=1e-12)


# -- backward ----------------------------------------------------------------

def test_backward_zero_gradient_on_perfect_prediction():
    # logits gap large enough that softmax is exactly one-hot in float64
    w = np.array([[900.0, 0.0], [0.0, 0.0]])
    model = single_layer(w)
    cap = backward(model, [1.0, 0.0], make_label(ONE_HOT, 0, None, 2))
    assert all(np.all(g == 0.0) for g in cap.weight_grads)
    assert cap.loss == 0.0


def test_backward_head_row_structure_hand_case():
    w = np.array([[0.3, -0.2], [0.1, 0.4]])
    model = single_layer(w)
    x = np.array([0.5, 1.5])
    lab = make_label(ONE_HOT, 1, None, 2)
    cap = backward(model, x, lab)
    p = softmax(w @ x)
    for r in range(2):
        expected = (p[r] - lab.vector[r]) * x
        assert np.max(np.abs(cap.weight_grads[0][r] - expected)) < 1e-14


def finite_difference_grads(model, x, lab, step=1e-6):
    grads = []
    for layer in model.layers:
        g = np.zeros_like(layer.weight)
        for i in range(layer.weight.shape[0]):
            for j in range(layer.weight.shape[1]):
                orig = layer.weight[i, j]
                layer.weight[i, j] = orig + step
                up = cross_entropy(forward(model, x)[0], lab)
                layer.weight[i, j] = orig - step
                dn = cross_entropy(forward(model, x)[0], lab)
                layer.weight[i, j] = orig
                g[i, j] = (up - dn) / (2 * step)
        grads.append(g)
    return grads


def test_backward_matches_finite_differences():
    rng = RngHandle(12)
    model = init_mlp((8, 6, 4), rng, bias=True)
    for layer in model.layers:  # nonzero biases so their gradients matter
        layer.bias = rng.uniform(-0.1, 0.1, layer.out_dim)
    x = rng.uniform(0, 1, 8)
    lab = make_label(SMOOTHING, 1, rng, 4)
    cap = backward(model, x, lab)
    fd = finite_difference_grads(model, x, lab)
    for got, expected in zip(cap.weight_grads, fd):
        scale = max(1.0, np.abs(expected).max())
        assert np.max(np.abs(got - expected)) / scale < 1e-5


def test_backward_finite_differences_property_100_nets():
    rng = RngHandle(99)
    worst = 0.0
    for trial in range(100):
        dims = (int(rng.integers(3, 8)), int(rng.integers(3, 7)),
                int(rng.integers(3, 6)))
        model = init_mlp(dims, RngHandle(5000 + trial), bias=trial % 2 == 0)
        x = rng.uniform(0, 1, dims[0])
        lab = make_label(SMOOTHING, int(rng.integers(dims[-1])), rng, dims[-1])
        cap = backward(model, x, lab)
        for got, expected in zip(cap.weight_grads,
                                 finite_difference_grads(model, x, lab)):
            scale = max(1.0, np.abs(expected).max())
            worst = max(worst, float(np.abs(got - expected).max() / scale))
    assert worst <= 1e-5


def test_backward_row_sums_and_bias_identity_property():
    rng = RngHandle(13)
    for _ in range(100):
        dims = (int(rng.integers(4, 12)), int(rng.integers(3, 8)), int(rng.integers(3, 6)))
        model = init_mlp(dims, rng, bias=True)
        x = rng.uniform(0, 1, dims[0])
        kind = (ONE_HOT, SMOOTHING, MIXUP)[int(rng.integers(3))]
        classes = (0, 1) if kind == MIXUP else int(rng.integers(dims[-1]))
        lab = make_label(kind, classes, rng, dims[-1])
        cap = backward(model, x, lab)
        # head gradient rows sum to the zero vector
        assert np.max(np.abs(cap.last_weight_grad.sum(axis=0))) < 1e-10
        # every head row is the last-layer input scaled by p_r - y_r
        logits, acts = forward(model, x)
        p = softmax(logits)
        rank_one = np.outer(p - lab.vector, acts[-1])
        assert np.max(np.abs(cap.last_weight_grad - rank_one)) < 1e-10
        # bias gradient equals the layer's output gradient exactly
        for bg, zg in zip(cap.bias_grads, cap.z_grads):
            assert np.array_equal(bg, zg)


def test_backward_prediction_recorded():
    rng = RngHandle(14)
    model = init_mlp((6, 4), rng)
    x = rng.uniform(0, 1, 6)
    cap = backward(model, x, make_label(ONE_HOT, 2, None, 4))
    logits, _ = forward(model, x)
    assert cap.prediction == int(np.argmax(logits))


# -- labels ------------------------------------------------------------------

def test_make_label_zero_epsilon_is_one_hot():
    lab = make_label(SMOOTHING, 3, None, 5, epsilon=0.0)
    assert np.array_equal(lab.vector, [0, 0, 0, 1, 0])


def test_make_label_smoothing_hand_case():
    lab = make_label(SMOOTHING, 2, None, 4, epsilon=0.4)
    assert np.allclose(lab.vector, [0.1, 0.1, 0.7, 0.1], atol=1e-15)


def test_make_label_mixup_hand_case():
    lab = make_label(MIXUP, (0, 1), None, 3, coeff=0.3)
    assert np.allclose(lab.vector, [0.3, 0.7, 0.0], atol=1e-15)
    assert lab.mix == (0, 1, 0.3)


def test_make_label_mixup_rejects_same_class():
    with pytest.raises(ConfigError):
        make_label(MIXUP, (2, 2), RngHandle(0), 5)


def test_label_invariants_random_generation():
    rng = RngHandle(15)
    for _ in range(10_000):
        kind = (ONE_HOT, SMOOTHING, MIXUP)[int(rng.integers(3))]
        C = int(rng.integers(3, 12))
        if kind == MIXUP:
            ca = int(rng.integers(C))
            cb = (ca + 1 + int(rng.integers(C - 1))) % C
            lab = make_label(kind, (ca, cb), rng, C)
        else:
            lab = make_label(kind, int(rng.integers(C)), rng, C)
        v = lab.vector
        assert np.all(v >= 0)
        assert abs(v.sum() - 1.0) < 1e-12
        if kind == SMOOTHING and lab.epsilon > 0:
            top = np.argmax(v)
            rest = np.delete(v, top)
            assert v[top] > rest.max()
            assert np.ptp(rest) < 1e-12
        if kind == MIXUP:
            assert (v > 1e-12).sum() <= 2


def test_mix_inputs_endpoints_and_oracle():
    x1 = np.zeros(5)
    x2 = np.ones(5)
    assert np.array_equal(mix_inputs(x1, x2, 1.0), x1)
    assert np.array_equal(mix_inputs(x1, x2, 0.5), np.full(5, 0.5))
    rng = RngHandle(16)
    a, b = rng.uniform(0, 1, 7), rng.uniform(0, 1, 7)
    t = 0.37
    expected = np.array([t * ai + (1 - t) * bi for ai, bi in zip(a, b)])
    assert np.max(np.abs(mix_inputs(a, b, t) - expected)) < 1e-15


def test_mix_inputs_shape_error():
    with pytest.raises(ShapeError):
        mix_inputs(np.zeros(3), np.zeros(4), 0.5)


# -- training and data -------------------------------------------------------

def separable_dataset():
    xs = [np.array([1.0, 0.0]), np.array([0.9, 0.1]),
          np.array([0.0, 1.0]), np.array([0.1, 0.9])]
    labs = [make_label(ONE_HOT, 0, None, 2), make_label(ONE_HOT, 0, None, 2),
            make_label(ONE_HOT, 1, None, 2), make_label(ONE_HOT, 1, None, 2)]
    return list(zip(xs, labs))


def test_train_zero_epochs_no_change():
    rng = RngHandle(17)
    model = init_mlp((2, 2), rng)
    before = [l.weight.copy() for l in model.layers]
    train(model, separable_dataset(), 0, 0.1, rng)
    for w0, layer in zip(before, model.layers):
        assert np.array_equal(w0, layer.weight)


def test_train_separable_reaches_full_accuracy():
    rng = RngHandle(18)
    model = init_mlp((2, 2), rng)
    data = separable_dataset()

    def mean_loss():
        return np.mean([cross_entropy(forward(model, x)[0], lab)
                        for x, lab in data])

    losses = [mean_loss()]
    for _ in range(10):  # 10 chunks of 20 epochs: loss keeps going down
        train(model, data, 20, 0.5, rng)
        losses.append(mean_loss())
    assert accuracy(model, data) == 1.0
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_train_deterministic():
    def run():
        rng = RngHandle(19)
        model = init_mlp((2, 3, 2), rng)
        train(model, separable_dataset(), 30, 0.2, rng)
        return [l.weight.copy() for l in model.layers]

    for wa, wb in zip(run(), run()):
        assert np.array_equal(wa, wb)


def test_synth_dataset_basics():
    rng = RngHandle(20)
    data = synth_dataset(1, 6, 3, rng)
    assert len(data) == 1
    x, lab = data[0]
    assert x.shape == (6,)
    assert np.all((x >= 0) & (x <= 1))
    assert abs(lab.vector.sum() - 1.0) < 1e-12


def test_synth_dataset_deterministic():
    a = synth_dataset(10, 4, 2, RngHandle(21))
    b = synth_dataset(10, 4, 2, RngHandle(21))
    for (xa, la), (xb, lb) in zip(a, b):
        assert np.array_equal(xa, xb)
        assert np.array_equal(la.vector, lb.vector)


def test_synth_dataset_learnable():
    rng = RngHandle(22)
    blobs = make_blobs(8, 3, rng)
    data = synth_dataset(90, 8, 3, rng, blobs=blobs)
    model = init_mlp((8, 3), rng)
    train(model, data, 60, 0.2, rng)
    assert accuracy(model, data) > 1.0 / 3.0 + 0.2  # beats chance clearly


# -- serialization -----------------------------------------------------------

def test_model_roundtrip(tmp_path):
    rng = RngHandle(23)
    model = init_mlp((5, 4, 3), rng, bias=True)
    save_model(tmp_path / "m", model)
    back = load_model(tmp_path / "m")
    assert len(back.layers) == len(model.layers)
    for a, b in zip(model.layers, back.layers):
        assert np.array_equal(a.weight, b.weight)
        assert np.array_equal(a.bias, b.bias)
        assert a.activation == b.activation
