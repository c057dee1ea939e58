import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spectra.cnn import (
    PARAM_NAMES,
    MicroCnn,
    TrainConfig,
    blob_fixture,
    conv_forward,
    cross_entropy,
    dense_forward,
    dropout,
    maxpool2,
    relu,
    sgd_step,
    softmax,
    train,
    write_trace,
)
from spectra.errors import ShapeError, SpectraError, StaleIntermediatesError


def conv_oracle(x, k, b):
    """Quadruple loop: same-padded cross-correlation, stride 1."""
    c_in, h, w = x.shape
    c_out, _, kh, kw = k.shape
    out = np.zeros((c_out, h, w))
    for o in range(c_out):
        for r in range(h):
            for c in range(w):
                acc = b[o]
                for i in range(c_in):
                    for di in range(kh):
                        for dj in range(kw):
                            rr, cc = r + di - kh // 2, c + dj - kw // 2
                            if 0 <= rr < h and 0 <= cc < w:
                                acc += x[i, rr, cc] * k[o, i, di, dj]
                out[o, r, c] = acc
    return out


def finite_difference_check(net, x, label, step=1e-5, mask=None):
    """Worst relative error between backward() and central differences, per parameter."""
    net.forward(x, train=mask is not None, mask=mask)
    grads = net.backward(label)
    worst = {}
    for name in PARAM_NAMES:
        p = net.params[name]
        errs = []
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + step
            plus = net.loss(x, label, mask=mask)
            p[idx] = old - step
            minus = net.loss(x, label, mask=mask)
            p[idx] = old
            fd = (plus - minus) / (2 * step)
            an = grads[name][idx]
            errs.append(abs(fd - an) / max(abs(fd), abs(an), 1e-6))
        worst[name] = max(errs)
    return worst


# -- layers ---------------------------------------------------------------------


def test_conv_identity_kernel(rng):
    x = rng.random((1, 5, 5))
    out = conv_forward(x, np.ones((1, 1, 1, 1)), np.zeros(1))
    assert np.array_equal(out, x)


def test_conv_zero_kernel_gives_bias(rng):
    out = conv_forward(rng.random((2, 4, 6)), np.zeros((3, 2, 3, 3)), np.array([0.5, -1.0, 2.0]))
    assert out.shape == (3, 4, 6)
    assert np.all(out[0] == 0.5) and np.all(out[1] == -1.0) and np.all(out[2] == 2.0)


@pytest.mark.parametrize("c_in, c_out, k", [(1, 1, 3), (2, 3, 3), (3, 2, 5)])
def test_conv_matches_loop_oracle(c_in, c_out, k, rng):
    x = rng.standard_normal((c_in, 5, 5))
    kern = rng.standard_normal((c_out, c_in, k, k))
    b = rng.standard_normal(c_out)
    assert np.max(np.abs(conv_forward(x, kern, b) - conv_oracle(x, kern, b))) < 1e-12


def test_conv_channel_mismatch(rng):
    with pytest.raises(ShapeError):
        conv_forward(rng.random((2, 4, 4)), np.zeros((1, 3, 3, 3)), np.zeros(1))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_conv_linear_without_bias(seed, a, b):
    r = np.random.default_rng(seed)
    x, y = r.standard_normal((2, 2, 6, 6))
    k = r.standard_normal((3, 2, 3, 3))
    z = np.zeros(3)
    lhs = conv_forward(a * x + b * y, k, z)
    rhs = a * conv_forward(x, k, z) + b * conv_forward(y, k, z)
    assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_relu():
    assert relu(np.array([-1.0, 0.0, 2.0])).tolist() == [0.0, 0.0, 2.0]
    x = np.random.default_rng(0).standard_normal((2, 3, 3))
    assert np.array_equal(relu(relu(x)), relu(x))
    assert np.array_equal(relu(np.abs(x)), np.abs(x))


def test_maxpool_examples():
    out, idx = maxpool2(np.array([[[1.0, 2.0], [3.0, 4.0]]]))
    assert out.tolist() == [[[4.0]]] and idx.tolist() == [[[3]]]
    out, idx = maxpool2(np.full((2, 4, 6), 0.7))
    assert np.all(out == 0.7) and np.all(idx == 0)


def test_maxpool_matches_window_enumeration(rng):
    x = rng.random((1, 4, 4))
    out, _ = maxpool2(x)
    for r in range(2):
        for c in range(2):
            window = [x[0, 2 * r + i, 2 * c + j] for i in range(2) for j in range(2)]
            assert out[0, r, c] == max(window)


def test_maxpool_odd_dimension():
    with pytest.raises(ShapeError):
        maxpool2(np.zeros((1, 3, 4)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_maxpool_bounds(seed):
    x = np.random.default_rng(seed).standard_normal((2, 6, 8))
    out, _ = maxpool2(x)
    assert out.max() <= x.max() and out.min() >= x.min()


def test_dropout_identities(rng):
    x = rng.random((2, 3, 3))
    assert np.array_equal(dropout(x, 0.0, train=True, rng=rng), x)
    assert np.array_equal(dropout(x, 0.9, train=False), x)
    with pytest.raises(ValueError):
        dropout(x, 1.0, train=True)


def test_dropout_unbiased():
    n = 100_000
    out = dropout(np.ones((1, 1, n)), 0.5, train=True, rng=np.random.default_rng(11))
    assert set(np.unique(out)) <= {0.0, 2.0}
    # each output is 0 or 2 with probability 1/2: standard deviation 1
    assert abs(out.mean() - 1.0) < 3 * 1.0 / math.sqrt(n)


def test_dropout_deterministic_per_seed():
    x = np.ones((1, 4, 4))
    a = dropout(x, 0.3, True, np.random.default_rng(5))
    b = dropout(x, 0.3, True, np.random.default_rng(5))
    assert np.array_equal(a, b)


def test_dense_examples(rng):
    x = rng.random(5)
    assert np.array_equal(dense_forward(x, np.eye(5), np.zeros(5)), x)
    assert dense_forward(np.array([2.0, 3.0]), np.array([[1.0, 1.0]]), np.zeros(1)).tolist() == [5.0]
    w, b, x = rng.standard_normal((4, 8)), rng.standard_normal(4), rng.standard_normal(8)
    expected = [b[i] + sum(w[i, j] * x[j] for j in range(8)) for i in range(4)]
    assert np.max(np.abs(dense_forward(x, w, b) - expected)) < 1e-12
    with pytest.raises(ShapeError):
        dense_forward(np.zeros(3), w, b)


def test_softmax_examples():
    assert softmax([0.0, 0.0]).tolist() == [0.5, 0.5]
    e = [math.exp(1), math.exp(2), math.exp(3)]
    expected = [v / sum(e) for v in e]
    out = softmax([1.0, 2.0, 3.0])
    assert np.max(np.abs(out - expected)) < 1e-15
    assert np.max(np.abs(out - [0.090031, 0.244728, 0.665241])) < 1e-6
    with pytest.raises(ValueError):
        softmax([])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=8), st.floats(-100, 100))
def test_softmax_properties(z, c):
    p = softmax(z)
    assert np.all(p > 0)
    assert abs(p.sum() - 1.0) < 1e-12
    assert np.max(np.abs(softmax(np.array(z) + c) - p)) < 1e-12


def test_cross_entropy_examples():
    assert cross_entropy([1.0, 0.0, 0.0, 0.0], 0) == 0.0
    assert abs(cross_entropy([0.25] * 4, 2) - math.log(4)) < 1e-15
    assert abs(cross_entropy([1.0, 0.0, 0.0, 0.0], 1) - 27.631021) < 1e-6
    with pytest.raises(IndexError):
        cross_entropy([0.5, 0.5], 2)


def test_sgd_step_examples():
    p = {"w": np.array([1.0])}
    assert sgd_step(p, {"w": np.array([0.5])}, 0.1)["w"][0] == 0.95
    assert np.array_equal(sgd_step(p, {"w": np.zeros(1)}, 0.1)["w"], p["w"])
    g = {"w": np.array([0.3])}
    twice = sgd_step(sgd_step(p, g, 0.25), g, 0.25)["w"]
    once = sgd_step(p, g, 0.5)["w"]
    assert abs(twice[0] - once[0]) < 1e-15
    assert p["w"][0] == 1.0
    with pytest.raises(ShapeError):
        sgd_step(p, {"w": np.zeros(2)}, 0.1)


# -- network ----------------------------------------------------------------------


def small_net(seed=3, dropout_rate=0.0):
    return MicroCnn((1, 8, 8), channels=(2, 2), dropout=dropout_rate, seed=seed)


def test_network_output_is_4_way_distribution(rng):
    net = MicroCnn((1, 12, 16), seed=1)
    p = net.forward(rng.random((1, 12, 16)))
    assert p.shape == (4,) and abs(p.sum() - 1) < 1e-12
    assert net.forward(rng.random((5, 1, 12, 16))).shape == (5, 4)


@pytest.mark.parametrize("label", [0, 2])
def test_gradients_match_finite_differences(label):
    net = small_net()
    x = np.random.default_rng(42).random((1, 8, 8))
    worst = finite_difference_check(net, x, label)
    assert max(worst.values()) < 1e-4, worst


def test_gradients_with_fixed_dropout_mask():
    net = small_net(dropout_rate=0.5)
    x = np.random.default_rng(8).random((1, 8, 8))
    mask = np.random.default_rng(9).integers(0, 2, size=(1, net.flat_size)) * 2.0
    worst = finite_difference_check(net, x[None], [1], mask=mask)
    assert max(worst.values()) < 1e-4, worst


def test_one_hot_output_gives_zero_logit_gradient(rng):
    net = small_net()
    b = np.zeros(4)
    b[2] = 1000.0
    net.set_params({**net.params, "dense.b": b})
    p = net.forward(rng.random((1, 8, 8)))
    assert p.tolist() == [0.0, 0.0, 1.0, 0.0]
    grads = net.backward(2)
    assert np.all(grads["dense.b"] == 0) and np.all(grads["dense.w"] == 0)


def test_dead_relu_unit_has_zero_upstream_gradient(rng):
    net = small_net()
    b = net.params["conv1.b"].copy()
    b[0] = -100.0
    net.set_params({**net.params, "conv1.b": b})
    net.forward(rng.random((1, 8, 8)))
    grads = net.backward(1)
    assert np.all(grads["conv1.w"][0] == 0) and grads["conv1.b"][0] == 0
    assert np.any(grads["conv1.w"][1] != 0)


def test_backward_requires_fresh_forward(rng):
    net = small_net()
    with pytest.raises(StaleIntermediatesError):
        net.backward(0)
    net.forward(rng.random((1, 8, 8)))
    net.step(net.backward(0), 0.1)
    with pytest.raises(StaleIntermediatesError):
        net.backward(0)


def test_input_shape_validation():
    with pytest.raises(ShapeError):
        MicroCnn((1, 10, 8))
    with pytest.raises(ShapeError):
        small_net().forward(np.zeros((1, 8, 12)))


def test_he_uniform_init_bounds():
    net = MicroCnn((1, 16, 16), channels=(4, 8), seed=0)
    assert np.max(np.abs(net.params["conv1.w"])) <= math.sqrt(6 / 9)
    assert np.max(np.abs(net.params["conv2.w"])) <= math.sqrt(6 / 36)
    assert np.max(np.abs(net.params["dense.w"])) <= math.sqrt(6 / (8 * 4 * 4))
    assert all(np.all(net.params[n] == 0) for n in ("conv1.b", "conv2.b", "dense.b"))


def test_save_load_roundtrip(tmp_path, rng):
    net = MicroCnn((1, 8, 12), channels=(3, 5), dropout=0.25, seed=9)
    net.save(tmp_path / "m.txt")
    back = MicroCnn.load(tmp_path / "m.txt")
    for name in PARAM_NAMES:
        assert np.array_equal(back.params[name], net.params[name])
    assert (back.input_shape, back.channels, back.dropout, back.seed) == ((1, 8, 12), (3, 5), 0.25, 9)
    x = rng.random((1, 8, 12))
    assert np.array_equal(back.forward(x), net.forward(x))
    (tmp_path / "bad.txt").write_text("something else\n")
    with pytest.raises(SpectraError):
        MicroCnn.load(tmp_path / "bad.txt")


# -- training -----------------------------------------------------------------------


def test_zero_learning_rate_leaves_params_unchanged():
    net = MicroCnn((1, 16, 16), seed=0)
    before = {k: v.copy() for k, v in net.params.items()}
    train(net, blob_fixture(16), TrainConfig(lr=0.0, epochs=3, batch_size=4, seed=0))
    assert all(np.array_equal(before[k], net.params[k]) for k in PARAM_NAMES)


def test_empty_dataset():
    with pytest.raises(SpectraError):
        train(MicroCnn((1, 8, 8)), [], TrainConfig())


def test_blob_fixture_reaches_target():
    net, trace = train(MicroCnn((1, 16, 16), seed=0), blob_fixture(), TrainConfig(lr=0.05, epochs=30, seed=0))
    assert max(t.accuracy for t in trace) >= 0.95
    for prev, cur in zip(trace, trace[1:]):
        assert cur.loss <= 1.05 * prev.loss


def test_training_is_bit_deterministic(tmp_path):
    cfg = TrainConfig(lr=0.05, epochs=4, batch_size=8, seed=5)
    runs = []
    for i in range(2):
        net, trace = train(MicroCnn((1, 16, 16), dropout=0.3, seed=5), blob_fixture(32), cfg)
        write_trace(trace, tmp_path / f"t{i}.csv")
        runs.append(net.params)
    assert all(np.array_equal(runs[0][k], runs[1][k]) for k in PARAM_NAMES)
    assert (tmp_path / "t0.csv").read_bytes() == (tmp_path / "t1.csv").read_bytes()
    assert (tmp_path / "t0.csv").read_text().splitlines()[0] == "epoch,loss,accuracy"
