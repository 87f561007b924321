import numpy as np
import pytest

from app.core.exceptions import NonFiniteError, ShapeError, ValidationException
from app.engine.tensor_ops import (
    BatchNormParams,
    ConvParams,
    add,
    batchnorm_infer,
    conv2d,
    conv_transpose2d,
    depthwise_conv2d,
    elementwise,
    fold_batchnorm,
    relu,
    upsample_nearest,
)


def naive_conv2d(x, w, bias, stride, pad, groups):
    batch, cin, height, width = x.shape
    cout, group_in, kh, kw = w.shape
    group_out = cout // groups
    xp = np.pad(x.astype(np.float64), ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out_h = (height + 2 * pad - kh) // stride + 1
    out_w = (width + 2 * pad - kw) // stride + 1
    out = np.zeros((batch, cout, out_h, out_w))
    for n in range(batch):
        for o in range(cout):
            g = o // group_out
            for r in range(out_h):
                for c in range(out_w):
                    total = 0.0
                    for ci in range(group_in):
                        for i in range(kh):
                            for j in range(kw):
                                total += xp[n, g * group_in + ci, r * stride + i, c * stride + j] * w[o, ci, i, j]
                    out[n, o, r, c] = total + (bias[o] if bias is not None else 0.0)
    return out


def naive_conv_transpose2d(y, w, stride, pad, output_pad, groups):
    batch, cin, height, width = y.shape
    _, group_out, kh, kw = w.shape
    group_in = cin // groups
    full = np.zeros((batch, group_out * groups, (height - 1) * stride + kh + output_pad, (width - 1) * stride + kw + output_pad))
    for n in range(batch):
        for c in range(cin):
            g = c // group_in
            for r in range(height):
                for s in range(width):
                    for o in range(group_out):
                        for i in range(kh):
                            for j in range(kw):
                                full[n, g * group_out + o, r * stride + i, s * stride + j] += y[n, c, r, s] * w[c, o, i, j]
    out_h = (height - 1) * stride - 2 * pad + kh + output_pad
    out_w = (width - 1) * stride - 2 * pad + kw + output_pad
    return full[:, :, pad:pad + out_h, pad:pad + out_w]


def naive_batchnorm(x, bn):
    out = np.empty_like(x, dtype=np.float64)
    for c in range(x.shape[1]):
        out[:, c] = (x[:, c] - bn.mean[c]) / np.sqrt(bn.variance[c] + bn.epsilon) * bn.scale[c] + bn.shift[c]
    return out


def _random_conv_case(seed, depthwise=False):
    rng = np.random.default_rng(seed)
    kernel = int(rng.choice([1, 3]))
    stride = int(rng.integers(1, 3))
    pad = int(rng.integers(0, kernel // 2 + 1))
    if depthwise:
        channels = int(rng.integers(1, 9))
        cin = cout = groups = channels
    else:
        groups = int(rng.choice([1, 2]))
        cin = groups * int(rng.integers(1, 5))
        cout = groups * int(rng.integers(1, 5))
    size = int(rng.integers(kernel, 9))
    x = rng.uniform(-1, 1, (1, cin, size, size)).astype(np.float32)
    w = rng.uniform(-1, 1, (cout, cin // groups, kernel, kernel)).astype(np.float32)
    bias = rng.uniform(-1, 1, cout).astype(np.float32) if rng.uniform() < 0.5 else None
    return x, w, bias, stride, pad, groups


@pytest.mark.parametrize("seed", range(50))
def test_conv2d_matches_naive_loops(seed):
    x, w, bias, stride, pad, groups = _random_conv_case(seed)
    out = conv2d(x, ConvParams(w, bias, stride=stride, padding=pad, groups=groups))
    expected = naive_conv2d(x, w, bias, stride, pad, groups)
    np.testing.assert_allclose(out, expected, atol=1e-5, rtol=1e-5)


@pytest.mark.parametrize("seed", range(50))
def test_depthwise_matches_naive_loops(seed):
    x, w, bias, stride, pad, groups = _random_conv_case(1000 + seed, depthwise=True)
    out = depthwise_conv2d(x, ConvParams(w, bias, stride=stride, padding=pad, groups=groups))
    expected = naive_conv2d(x, w, bias, stride, pad, groups)
    np.testing.assert_allclose(out, expected, atol=1e-5, rtol=1e-5)


@pytest.mark.parametrize("seed", range(50))
def test_conv_transpose_matches_naive_loops(seed):
    rng = np.random.default_rng(2000 + seed)
    stride = int(rng.integers(1, 3))
    kernel = int(rng.choice([2, 3, 4]))
    pad = int(rng.integers(0, (kernel - 1) // 2 + 1))
    output_pad = int(rng.integers(0, stride))
    groups = int(rng.choice([1, 2]))
    cin = groups * int(rng.integers(1, 4))
    group_out = int(rng.integers(1, 4))
    size = int(rng.integers(1, 7))
    y = rng.uniform(-1, 1, (1, cin, size, size)).astype(np.float32)
    w = rng.uniform(-1, 1, (cin, group_out, kernel, kernel)).astype(np.float32)
    out = conv_transpose2d(y, ConvParams(w, stride=stride, padding=pad, groups=groups, output_padding=output_pad))
    expected = naive_conv_transpose2d(y, w, stride, pad, output_pad, groups)
    np.testing.assert_allclose(out, expected, atol=1e-5, rtol=1e-5)


@pytest.mark.parametrize("seed", range(50))
def test_batchnorm_and_elementwise_match_naive_loops(seed):
    rng = np.random.default_rng(3000 + seed)
    channels = int(rng.integers(1, 9))
    size = int(rng.integers(1, 9))
    x = rng.uniform(-2, 2, (1, channels, size, size)).astype(np.float32)
    bn = BatchNormParams(
        mean=rng.uniform(-1, 1, channels),
        variance=rng.uniform(0.1, 2, channels),
        scale=rng.uniform(-2, 2, channels),
        shift=rng.uniform(-1, 1, channels),
    )
    np.testing.assert_allclose(batchnorm_infer(x, bn), naive_batchnorm(x, bn), atol=1e-5, rtol=1e-5)

    other = rng.uniform(-2, 2, x.shape).astype(np.float32)
    relu_expected = np.array([[[[max(v, 0.0) for v in row] for row in ch] for ch in x[0]]])
    np.testing.assert_array_equal(relu(x), relu_expected)
    np.testing.assert_allclose(add(x, other), x.astype(np.float64) + other, atol=1e-6)

    factor = int(rng.integers(1, 4))
    up = upsample_nearest(x, factor)
    for r in range(size * factor):
        for c in range(size * factor):
            assert up[0, 0, r, c] == x[0, 0, r // factor, c // factor]


def test_conv2d_ones_kernel_counts_neighbourhood():
    x = np.ones((1, 1, 3, 3), np.float32)
    out = conv2d(x, ConvParams(np.ones((1, 1, 3, 3)), padding=1))
    assert out[0, 0, 1, 1] == 9
    assert out[0, 0, 0, 0] == 4
    assert out[0, 0, 2, 2] == 4
    assert out[0, 0, 0, 1] == 6


def test_conv2d_identity_kernel(rng):
    x = rng.standard_normal((1, 1, 4, 5)).astype(np.float32)
    np.testing.assert_array_equal(conv2d(x, ConvParams(np.ones((1, 1, 1, 1)))), x)


def test_conv2d_random_reference_case(rng):
    x = rng.standard_normal((2, 3, 5, 5)).astype(np.float32)
    w = rng.standard_normal((4, 3, 3, 3)).astype(np.float32)
    out = conv2d(x, ConvParams(w, padding=1))
    assert out.shape == (2, 4, 5, 5)
    np.testing.assert_allclose(out, naive_conv2d(x, w, None, 1, 1, 1), atol=1e-5, rtol=1e-5)


def test_conv2d_is_bit_identical_across_calls(rng):
    x = rng.standard_normal((1, 4, 8, 8)).astype(np.float32)
    params = ConvParams(rng.standard_normal((6, 4, 3, 3)), stride=2, padding=1)
    np.testing.assert_array_equal(conv2d(x, params), conv2d(x, params))


def test_conv2d_errors():
    x = np.ones((1, 3, 4, 4), np.float32)
    with pytest.raises(ShapeError):
        conv2d(x, ConvParams(np.ones((2, 2, 3, 3))))
    with pytest.raises(ShapeError):
        conv2d(np.ones((1, 1, 2, 2), np.float32), ConvParams(np.ones((1, 1, 3, 3))))
    with pytest.raises(NonFiniteError):
        conv2d(np.full((1, 1, 2, 2), np.inf, np.float32), ConvParams(np.ones((1, 1, 1, 1))))
    with pytest.raises(ValidationException):
        ConvParams(np.ones((1, 1, 3, 3)), stride=(1, 2))


def test_depthwise_channels_are_independent():
    x = np.ones((1, 3, 4, 4), np.float32)
    out = depthwise_conv2d(x, ConvParams(np.ones((3, 1, 3, 3)), padding=1, groups=3))
    for c in range(3):
        assert out[0, c, 0, 0] == 4
        assert out[0, c, 1, 1] == 9


def test_depthwise_equals_block_diagonal_dense_kernel(rng):
    channels = 4
    x = rng.standard_normal((1, channels, 6, 6)).astype(np.float32)
    w = rng.standard_normal((channels, 1, 3, 3)).astype(np.float32)
    dense = np.zeros((channels, channels, 3, 3), np.float32)
    for c in range(channels):
        dense[c, c] = w[c, 0]
    np.testing.assert_allclose(
        depthwise_conv2d(x, ConvParams(w, padding=1, groups=channels)),
        conv2d(x, ConvParams(dense, padding=1)),
        atol=1e-6,
    )


def test_depthwise_stride_two_extents():
    x = np.zeros((1, 2, 32, 32), np.float32)
    out = depthwise_conv2d(x, ConvParams(np.zeros((2, 1, 3, 3)), stride=2, padding=1, groups=2))
    assert out.shape == (1, 2, 16, 16)


def test_depthwise_rejects_grouping_mismatch():
    with pytest.raises(ShapeError):
        depthwise_conv2d(np.ones((1, 4, 4, 4), np.float32), ConvParams(np.ones((4, 2, 3, 3)), groups=2))


def test_conv_transpose_single_pixel_reproduces_kernel(rng):
    w = rng.standard_normal((1, 1, 4, 4)).astype(np.float32)
    out = conv_transpose2d(np.ones((1, 1, 1, 1), np.float32), ConvParams(w, stride=2))
    np.testing.assert_array_equal(out[0, 0], w[0, 0])


def test_conv_transpose_head_configuration_doubles_extents():
    y = np.zeros((1, 3, 16, 12), np.float32)
    out = conv_transpose2d(y, ConvParams(np.zeros((3, 5, 4, 4)), stride=2, padding=1))
    assert out.shape == (1, 5, 32, 24)


@pytest.mark.parametrize("seed", range(10))
def test_conv_transpose_is_adjoint_of_conv(seed):
    rng = np.random.default_rng(4000 + seed)
    stride = int(rng.integers(1, 3))
    kernel = int(rng.choice([3, 4]))
    pad = int(rng.integers(0, 2))
    cin, cout = int(rng.integers(1, 5)), int(rng.integers(1, 5))
    size = int(rng.integers(kernel, 10))
    w = rng.standard_normal((cout, cin, kernel, kernel)).astype(np.float32)
    x = rng.standard_normal((1, cin, size, size)).astype(np.float32)
    forward = conv2d(x, ConvParams(w, stride=stride, padding=pad))
    y = rng.standard_normal(forward.shape).astype(np.float32)
    output_pad = size - ((forward.shape[2] - 1) * stride - 2 * pad + kernel)
    # los pesos de la transpuesta son los de conv2d leídos como (Cin_T = cout, Cout_T = cin)
    back = conv_transpose2d(y, ConvParams(w, stride=stride, padding=pad, output_padding=output_pad))
    assert back.shape == x.shape
    lhs = float(np.sum(forward.astype(np.float64) * y))
    rhs = float(np.sum(x.astype(np.float64) * back))
    assert abs(lhs - rhs) <= 1e-4 * max(abs(lhs), abs(rhs), 1.0)


def test_batchnorm_identity_and_hand_value():
    x = np.arange(8, dtype=np.float32).reshape(1, 2, 2, 2)
    np.testing.assert_allclose(batchnorm_infer(x, BatchNormParams.identity(2)), x, rtol=1e-4)
    bn = BatchNormParams(mean=[1.0], variance=[4.0], scale=[2.0], shift=[1.0], epsilon=0.0)
    assert batchnorm_infer(np.full((1, 1, 1, 1), 3.0, np.float32), bn)[0, 0, 0, 0] == pytest.approx(3.0)


def test_batchnorm_validation():
    with pytest.raises(ShapeError):
        BatchNormParams(mean=[0, 0], variance=[1], scale=[1], shift=[0])
    with pytest.raises(ValidationException):
        BatchNormParams(mean=[0], variance=[-1], scale=[1], shift=[0])
    with pytest.raises(ShapeError):
        batchnorm_infer(np.ones((1, 3, 2, 2), np.float32), BatchNormParams.identity(2))


def test_fold_batchnorm_matches_conv_then_bn(rng):
    x = rng.standard_normal((1, 3, 7, 7)).astype(np.float32)
    conv = ConvParams(rng.standard_normal((5, 3, 3, 3)), rng.standard_normal(5), stride=2, padding=1)
    bn = BatchNormParams(
        mean=rng.standard_normal(5),
        variance=rng.uniform(0.5, 2, 5),
        scale=rng.standard_normal(5),
        shift=rng.standard_normal(5),
    )
    np.testing.assert_allclose(
        conv2d(x, fold_batchnorm(conv, bn)),
        batchnorm_infer(conv2d(x, conv), bn),
        atol=1e-4,
        rtol=1e-5,
    )


def test_elementwise_dispatch():
    a = np.array([[[[-1.5, 2.0]]]], np.float32)
    b = np.array([[[[0.5, -3.0]]]], np.float32)
    np.testing.assert_array_equal(elementwise("relu", a), [[[[0.0, 2.0]]]])
    np.testing.assert_array_equal(elementwise("add", a, b), elementwise("add", b, a))
    tile = elementwise("upsample_nearest", np.arange(4, dtype=np.float32).reshape(1, 1, 2, 2), factor=2)
    assert tile.shape == (1, 1, 4, 4)
    np.testing.assert_array_equal(tile[0, 0, :2, :2], np.zeros((2, 2)))
    np.testing.assert_array_equal(tile[0, 0, 2:, 2:], np.full((2, 2), 3.0))
    with pytest.raises(ShapeError):
        add(a, np.ones((1, 1, 1, 3), np.float32))
    with pytest.raises(ValidationException):
        elementwise("gelu", a)


def test_upsample_rejects_non_finite_input():
    x = np.ones((1, 2, 2, 2), np.float32)
    x[0, 1, 0, 1] = np.nan
    with pytest.raises(NonFiniteError) as info:
        upsample_nearest(x, 2)
    assert info.value.details["op"] == "upsample_nearest"
