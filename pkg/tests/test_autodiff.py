import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from clmi3d.autodiff import Adam, Parameter, Tensor, backward, load_arrays, no_grad, save_arrays
from clmi3d.autodiff import functional as F
from clmi3d.autodiff.layers import BatchNorm, Dropout, MultiScaleConv3d
from clmi3d.errors import (
    BadMagic,
    DegenerateBatch,
    GraphReused,
    LabelOutOfRange,
    MissingGrad,
    NotScalar,
    ShapeMismatch,
    TruncatedPayload,
)

import gradsuite


def T(x, grad=False):
    return Tensor(np.asarray(x, dtype=np.float64), requires_grad=grad)


def sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


def reference_conv(x, w, b):
    """Direct loop cross-correlation with (k-1)/2 zero padding."""
    bsz, d1, d2, d3, cin = x.shape
    k1, k2, k3, _, cout = w.shape
    p1, p2, p3 = (k1 - 1) // 2, (k2 - 1) // 2, (k3 - 1) // 2
    out = np.zeros((bsz, d1, d2, d3, cout))
    for n in range(bsz):
        for i in range(d1):
            for j in range(d2):
                for k in range(d3):
                    acc = b.copy()
                    for a in range(k1):
                        for bb in range(k2):
                            for c in range(k3):
                                ii, jj, kk = i + a - p1, j + bb - p2, k + c - p3
                                if 0 <= ii < d1 and 0 <= jj < d2 and 0 <= kk < d3:
                                    acc += x[n, ii, jj, kk] @ w[a, bb, c]
                    out[n, i, j, k] = acc
    return out


# --- gradient suite -----------------------------------------------------------

@pytest.mark.parametrize("seed", gradsuite.SEEDS)
@pytest.mark.parametrize("case", sorted(gradsuite.CASES))
def test_gradient_matches_finite_differences(case, seed):
    assert gradsuite.case_error(case, seed) < gradsuite.TOLERANCE


# --- convolution ----------------------------------------------------------------

def test_conv_zero_weights_gives_bias():
    out = F.conv3d_same(T(np.ones((1, 3, 3, 3, 1))), T(np.zeros((3, 3, 3, 1, 1))), T([0.5]))
    assert np.allclose(out.data, 0.5, atol=1e-12)


def test_conv_identity_kernel():
    x = np.random.default_rng(0).standard_normal((2, 3, 4, 5, 1))
    out = F.conv3d_same(T(x), T(np.ones((1, 1, 1, 1, 1))), T([0.0]))
    assert np.allclose(out.data, x, atol=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_conv_matches_loop_reference(seed):
    rng = np.random.default_rng(seed)
    x, w, b = rng.standard_normal((1, 4, 4, 4, 2)), rng.standard_normal((3, 3, 3, 2, 3)), rng.standard_normal(3)
    assert np.abs(F.conv3d_same(T(x), T(w), T(b)).data - reference_conv(x, w, b)).max() < 1e-6


def test_conv_anisotropic_kernel_matches_reference():
    rng = np.random.default_rng(5)
    x, w, b = rng.standard_normal((2, 5, 4, 3, 2)), rng.standard_normal((5, 3, 1, 2, 2)), rng.standard_normal(2)
    assert np.abs(F.conv3d_same(T(x), T(w), T(b)).data - reference_conv(x, w, b)).max() < 1e-9


def test_conv_float32_stays_float32():
    x = Tensor(np.ones((1, 2, 2, 2, 1), np.float32))
    w = Tensor(np.ones((3, 3, 3, 1, 1), np.float32))
    assert F.conv3d_same(x, w, Tensor(np.zeros(1, np.float32))).dtype == np.float32


@pytest.mark.parametrize("w_shape,b_shape", [((3, 3, 3, 2, 1), (1,)), ((2, 2, 2, 1, 1), (1,)), ((3, 3, 3, 1, 2), (1,))])
def test_conv_shape_mismatch(w_shape, b_shape):
    with pytest.raises(ShapeMismatch):
        F.conv3d_same(T(np.zeros((1, 3, 3, 3, 1))), T(np.zeros(w_shape)), T(np.zeros(b_shape)))


@given(st.sampled_from([1, 3, 5]), st.integers(1, 5), st.integers(1, 5), st.integers(1, 4))
def test_conv_preserves_spatial_dims(k, d1, d2, d3):
    out = F.conv3d_same(T(np.zeros((1, d1, d2, d3, 2))), T(np.zeros((k, k, k, 2, 3))), T(np.zeros(3)))
    assert out.shape == (1, d1, d2, d3, 3)


def test_multiscale_concatenation_order():
    layer = MultiScaleConv3d(1, 2, np.random.default_rng(0), dtype=np.float64)
    for conv, value in zip(layer.branches, (1.0, 2.0, 3.0)):
        conv.weight.data[...] = 0
        conv.bias.data[...] = value
    out = layer(T(np.random.default_rng(1).standard_normal((1, 3, 3, 3, 1)))).data
    assert np.allclose(out[..., :2], 1) and np.allclose(out[..., 2:4], 2) and np.allclose(out[..., 4:], 3)


def test_multiscale_equals_separate_convs():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 4, 4, 3, 2))
    ws = [rng.standard_normal((k, k, k, 2, 2)) for k in (3, 5, 7)]
    bs = [rng.standard_normal(2) for _ in range(3)]
    fused = F.multiscale_conv3d(T(x), [T(w) for w in ws], [T(b) for b in bs]).data
    separate = np.concatenate([reference_conv(x, w, b) for w, b in zip(ws, bs)], axis=-1)
    assert np.abs(fused - separate).max() < 1e-9


def test_multiscale_feature_depths():
    rng = np.random.default_rng(0)
    assert MultiScaleConv3d(1, 32, rng).out_features == 96
    assert MultiScaleConv3d(192, 128, rng).out_features == 384


# --- batchnorm -------------------------------------------------------------------

def test_batchnorm_train_standardizes():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((4, 3, 3, 2, 5)) * 7 + 3
    out = F.batchnorm(T(x), T(np.ones(5)), T(np.zeros(5)), np.zeros(5), np.ones(5), True).data
    flat = out.reshape(-1, 5)
    assert np.abs(flat.mean(0)).max() < 1e-5
    assert np.abs(flat.var(0) - 1).max() < 1e-5


def test_batchnorm_affine_law():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((64, 3))
    x = (x - x.mean(0)) / x.std(0)
    out = F.batchnorm(T(x), T(np.full(3, 2.0)), T(np.full(3, 3.0)), np.zeros(3), np.ones(3), True).data
    assert np.allclose(out.mean(0), 3, atol=1e-4) and np.allclose(out.std(0), 2, atol=1e-4)


def test_batchnorm_infer_scalar_oracle():
    x = np.array([[1.0, -2.0], [4.0, 0.5]])
    m, v = np.array([0.5, -1.0]), np.array([4.0, 0.25])
    g, b = np.array([1.5, -1.0]), np.array([0.1, 0.2])
    out = F.batchnorm(T(x), T(g), T(b), m.copy(), v.copy(), False).data
    expect = [[(x[i, j] - m[j]) / math.sqrt(v[j] + 1e-5) * g[j] + b[j] for j in range(2)] for i in range(2)]
    assert np.allclose(out, expect, atol=1e-12)


def test_batchnorm_running_stats_update():
    bn = BatchNorm(2, dtype=np.float64)
    x = np.array([[1.0, 10.0], [3.0, 20.0]])
    bn(T(x), training=True)
    assert np.allclose(bn.buffers["running_mean"], 0.1 * x.mean(0))
    assert np.allclose(bn.buffers["running_var"], 0.9 + 0.1 * x.var(0))


def test_batchnorm_degenerate_batch():
    with pytest.raises(DegenerateBatch):
        F.batchnorm(T(np.ones((1, 3))), T(np.ones(3)), T(np.zeros(3)), np.zeros(3), np.ones(3), True)


# --- pooling / activations ------------------------------------------------------------

def test_maxpool_ceiling_1d():
    out = F.maxpool3d_same(T(np.array([1.0, 3.0, 2.0]).reshape(1, 3, 1, 1, 1)))
    assert out.data.ravel().tolist() == [3.0, 2.0]


@pytest.mark.parametrize("dims,expect", [((30, 30, 22), (15, 15, 11)), ((15, 15, 11), (8, 8, 6)), ((8, 8, 6), (4, 4, 3)), ((4, 4, 3), (2, 2, 2))])
def test_maxpool_shape_chain(dims, expect):
    assert F.maxpool3d_same(T(np.zeros((1,) + dims + (1,)))).shape == (1,) + expect + (1,)


def test_maxpool_tie_goes_to_first():
    x = T(np.ones((1, 2, 2, 2, 1)), grad=True)
    backward(F.sum(F.maxpool3d_same(x)))
    assert x.grad.ravel().tolist() == [1.0] + [0.0] * 7


def test_maxpool_all_negative_ragged_edge():
    x = -np.arange(1.0, 4.0).reshape(1, 3, 1, 1, 1)
    assert F.maxpool3d_same(T(x)).data.ravel().tolist() == [-1.0, -3.0]


def test_relu_values():
    assert F.relu(T([-2.0, 0.0, 3.0])).data.tolist() == [0.0, 0.0, 3.0]


def test_softmax_values():
    assert np.allclose(F.softmax(T([0.0, 0.0, 0.0, 0.0])).data, 0.25)
    assert np.allclose(F.softmax(T([1.0, 2.0, 3.0])).data, [0.09003, 0.24473, 0.66524], atol=1e-5)


@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6)), elements=st.floats(-300, 300)))
def test_softmax_rows_are_distributions(x):
    s = F.softmax(T(x)).data
    assert np.abs(s.sum(-1) - 1).max() < 1e-9
    assert (s >= 0).all() and (s <= 1).all()


# --- LSTM -----------------------------------------------------------------------------

def test_lstm_zero_weights_zero_states():
    x = np.random.default_rng(0).standard_normal((2, 5, 3))
    out = F.lstm(T(x), T(np.zeros((3, 8))), T(np.zeros((2, 8))), T(np.zeros(8))).data
    assert np.array_equal(out, np.zeros((2, 5, 2)))


def test_lstm_scalar_one_step():
    wi, wf, wc, wo = 0.5, -0.3, 0.8, 1.2
    bi, bf, bc, bo = 0.1, 0.2, -0.4, 0.3
    x = 0.7
    out = F.lstm(T([[[x]]]), T([[wi, wf, wc, wo]]), T([[0.0, 0.0, 0.0, 0.0]]), T([bi, bf, bc, bo])).data
    expect = sigmoid(wo * x + bo) * math.tanh(sigmoid(wi * x + bi) * math.tanh(wc * x + bc))
    assert abs(out[0, 0, 0] - expect) < 1e-12


def test_lstm_saturated_forget_gate_matches_scalar_simulation():
    xs = [0.5, -1.0, 2.0]
    wx = [0.4, 0.0, 0.9, 0.6]
    wh = [0.3, 0.0, -0.5, 0.2]
    b = [0.1, 20.0, 0.0, -0.2]
    out = F.lstm(T(np.array(xs).reshape(1, 3, 1)), T([wx]), T([wh]), T(b)).data.ravel()
    h = c = 0.0
    for t, x in enumerate(xs):
        z = [wx[g] * x + wh[g] * h + b[g] for g in range(4)]
        c = sigmoid(z[1]) * c + sigmoid(z[0]) * math.tanh(z[2])
        h = sigmoid(z[3]) * math.tanh(c)
        assert abs(out[t] - h) < 1e-12


def test_lstm_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        F.lstm(T(np.zeros((1, 2, 3))), T(np.zeros((3, 8))), T(np.zeros((3, 8))), T(np.zeros(8)))


# --- attention ----------------------------------------------------------------------

def test_attention_single_step_is_identity():
    rng = np.random.default_rng(0)
    h = rng.standard_normal((2, 1, 3))
    out = F.attention_pool(T(h), T(rng.standard_normal((3, 4))), T(rng.standard_normal(4)), T(rng.standard_normal(4))).data
    assert np.allclose(out, h[:, 0])


def test_attention_equal_steps():
    rng = np.random.default_rng(1)
    h = np.repeat(rng.standard_normal((1, 1, 3)), 5, axis=1)
    out = F.attention_pool(T(h), T(rng.standard_normal((3, 3))), T(np.zeros(3)), T(rng.standard_normal(3))).data
    assert np.allclose(out, h[:, 0])


def test_attention_weights_quarter_three_quarters():
    # W=1, b=0: e_t = v * tanh(h_t); choose h and v so scores are (0, ln 3)
    h2 = 0.5
    v = math.log(3) / math.tanh(h2)
    out = F.attention_pool(T([[[0.0], [h2]]]), T([[1.0]]), T([0.0]), T([v])).data
    assert abs(out[0, 0] - (0.25 * 0.0 + 0.75 * h2)) < 1e-12


# --- dense / flatten / concat / dropout ------------------------------------------------

def test_dense_values():
    out = F.dense(T([[1.0, 2.0]]), T([[1.0, 0.0, 2.0], [0.5, -1.0, 0.0]]), T([0.0, 1.0, -1.0])).data
    assert out.tolist() == [[2.0, -1.0, 1.0]]


def test_dense_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        F.dense(T(np.zeros((1, 3))), T(np.zeros((2, 2))), T(np.zeros(2)))


def test_flatten_and_concat_widths():
    flat = F.flatten(T(np.zeros((1, 2, 2, 2, 384))))
    assert flat.shape == (1, 3072)
    assert F.concat([flat, T(np.zeros((1, 256)))]).shape == (1, 3328)


def test_flatten_row_major():
    x = np.arange(8.0).reshape(1, 2, 2, 2, 1)
    assert F.flatten(T(x)).data.ravel().tolist() == list(range(8))


def test_dropout_identities():
    x = T(np.random.default_rng(0).standard_normal((4, 4)))
    rng = np.random.default_rng(1)
    assert Dropout(0.0)(x, rng, training=True) is x
    assert Dropout(0.3)(x, rng, training=False) is x


def test_dropout_expectation_monte_carlo():
    rng = np.random.default_rng(0)
    x = T(np.linspace(0.5, 2.0, 8))
    total = np.zeros(8)
    n = 10_000
    for _ in range(n):
        total += F.dropout(x, 0.3, rng, True).data
    assert np.abs(total / n / x.data - 1).max() < 0.03


def test_dropout_bad_probability():
    with pytest.raises(ValueError):
        F.dropout(T([1.0]), 1.0, np.random.default_rng(0), True)


# --- loss -------------------------------------------------------------------------------

def test_cross_entropy_values():
    assert abs(float(F.cross_entropy(T(np.zeros((3, 4))), [0, 1, 2]).data) - math.log(4)) < 1e-12
    assert float(F.cross_entropy(T([[50.0, 0, 0, 0]]), [0]).data) < 1e-9
    assert abs(float(F.cross_entropy(T([[1.0, 2.0, 3.0]]), [2]).data) - 0.40761) < 1e-5


def test_cross_entropy_label_out_of_range():
    with pytest.raises(LabelOutOfRange):
        F.cross_entropy(T(np.zeros((2, 4))), [0, 4])


# --- backward ---------------------------------------------------------------------------

def test_backward_sum_and_relu():
    x = T([1.0, 2.0, 3.0], grad=True)
    backward(F.sum(x))
    assert x.grad.tolist() == [1.0, 1.0, 1.0]
    y = T([-1.0, 2.0], grad=True)
    backward(F.sum(F.relu(y)))
    assert y.grad.tolist() == [0.0, 1.0]


def test_backward_accumulates_shared_input():
    x = T([3.0], grad=True)
    backward(F.sum(F.mul(x, x)))
    assert x.grad.tolist() == [6.0]


def test_backward_not_scalar():
    with pytest.raises(NotScalar):
        backward(F.relu(T([1.0, 2.0], grad=True)))


def test_backward_graph_reused():
    x = T([1.0, 2.0], grad=True)
    loss = F.sum(F.relu(x))
    backward(loss)
    with pytest.raises(GraphReused):
        backward(loss)


def test_no_grad_records_nothing():
    x = T([1.0], grad=True)
    with no_grad():
        y = F.relu(x)
    assert not y.requires_grad and y.is_leaf


def test_backward_is_deterministic():
    def run():
        fn, inputs = gradsuite.CASES["lstm"](np.random.default_rng(3))
        leaves = {k: T(v, grad=True) for k, v in inputs.items()}
        backward(fn(**leaves))
        return b"".join(leaf.grad.tobytes() for leaf in leaves.values())

    assert run() == run()


# --- Adam -------------------------------------------------------------------------------

def test_adam_zero_grad_leaves_param():
    p = Parameter(np.array([1.5, -2.0]))
    p.grad = np.zeros(2)
    Adam([p]).step()
    assert p.data.tolist() == [1.5, -2.0] and p.step_count == 1 and p.grad is None


def test_adam_first_step():
    p = Parameter(np.array([0.0]))
    p.grad = np.array([1.0])
    Adam([p], lr=0.001).step()
    b1, b2, eps = 0.9, 0.999, 1e-8
    m_hat = (1 - b1) * 1.0 / (1 - b1)
    v_hat = (1 - b2) * 1.0 / (1 - b2)
    assert abs(p.data[0] - (-0.001 * m_hat / (math.sqrt(v_hat) + eps))) < 1e-15
    assert abs(p.data[0] + 0.001) < 1e-9


def test_adam_two_step_trace():
    b1, b2, eps, lr, g = 0.9, 0.999, 1e-8, 0.01, 0.3
    p = Parameter(np.array([2.0]))
    opt = Adam([p], lr=lr)
    theta, m, v = 2.0, 0.0, 0.0
    for t in (1, 2):
        p.grad = np.array([g])
        opt.step()
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
        assert abs(p.data[0] - theta) < 1e-12


def test_adam_missing_grad():
    with pytest.raises(MissingGrad):
        Adam([Parameter(np.zeros(1), name="w")]).step()


# --- checkpoints -----------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    arrays = {"conv.weight": rng.standard_normal((3, 3, 3, 1, 2)).astype(np.float32), "b": np.array([1.5], np.float32), "s": np.float32(2.0).reshape(())}
    save_arrays(arrays, tmp_path / "c.ckpt")
    back = load_arrays(tmp_path / "c.ckpt")
    assert list(back) == list(arrays)
    for k in arrays:
        assert back[k].shape == arrays[k].shape and np.array_equal(back[k], arrays[k])


def test_checkpoint_layout(tmp_path):
    save_arrays({"ab": np.array([1.5], np.float32)}, tmp_path / "c.ckpt")
    raw = (tmp_path / "c.ckpt").read_bytes()
    assert raw == b"CLMI" + bytes([1, 0, 0, 0, 1, 0, 0, 0, 2, 0]) + b"ab" + bytes([1, 1, 0, 0, 0, 0, 0, 0xC0, 0x3F])


def test_checkpoint_errors(tmp_path):
    (tmp_path / "bad").write_bytes(b"NOPE" + bytes(8))
    with pytest.raises(BadMagic):
        load_arrays(tmp_path / "bad")
    save_arrays({"w": np.zeros(4, np.float32)}, tmp_path / "ok")
    (tmp_path / "cut").write_bytes((tmp_path / "ok").read_bytes()[:-3])
    with pytest.raises(TruncatedPayload):
        load_arrays(tmp_path / "cut")
