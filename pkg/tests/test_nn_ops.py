import numpy as np
import pytest

from egfnet.nn_ops import (BatchNorm2d, CBR, Conv2d, batchnorm2d, bilinear_matrix, conv2d, conv_output_size,
                           upsample_bilinear)
from egfnet.rng import Rng
from egfnet.tensor import Tensor
from egfnet.verification import oracles

from conftest import randn


@pytest.mark.parametrize("k,stride,dilation", [(3, 1, 1), (3, 2, 1), (3, 1, 3), (1, 1, 1), (1, 2, 1)])
def test_conv2d_matches_loops(k, stride, dilation):
    conv = Conv2d(2, 3, k, stride=stride, dilation=dilation).initialize(Rng(0))
    conv.bias.data = np.array([0.1, -0.2, 0.3])
    x = randn((1, 2, 7, 7))
    got = conv(x).data
    ref = oracles.conv2d(x.data.tolist(), conv.weight.data.tolist(), conv.bias.data.tolist(),
                         stride, conv.padding, dilation)
    np.testing.assert_allclose(got, ref, atol=1e-12)


def test_three_by_three_preserves_size():
    for d in (1, 2, 3, 4):
        conv = Conv2d(1, 1, 3, dilation=d)
        assert conv.padding == d
        assert conv_output_size(12, 3, 1, conv.padding, d) == 12


def test_mismatched_padding_rejected():
    with pytest.raises(ValueError):
        Conv2d(1, 1, 3, dilation=2, padding=1)


def test_he_init_scale():
    conv = Conv2d(64, 64, 3).initialize(Rng(3))
    assert conv.weight.data.std() == pytest.approx(np.sqrt(2 / (64 * 9)), rel=0.02)
    assert (conv.bias.data == 0).all()


def test_batchnorm_train_statistics_and_running_update():
    bn = BatchNorm2d(2)
    x = randn((3, 2, 4, 4), std=2.0)
    y = bn(x).data
    np.testing.assert_allclose(y.mean(axis=(0, 2, 3)), 0.0, atol=1e-12)
    np.testing.assert_allclose(y.var(axis=(0, 2, 3)), x.data.var(axis=(0, 2, 3)) /
                               (x.data.var(axis=(0, 2, 3)) + 1e-5), rtol=1e-12)
    np.testing.assert_allclose(bn.running_mean.data, 0.1 * x.data.mean(axis=(0, 2, 3)), rtol=1e-12)
    np.testing.assert_allclose(bn.running_var.data, 0.9 + 0.1 * x.data.var(axis=(0, 2, 3)), rtol=1e-12)


def test_batchnorm_eval_uses_running_stats():
    bn = BatchNorm2d(1).eval()
    bn.running_mean.data = np.array([2.0])
    bn.running_var.data = np.array([4.0])
    x = Tensor(np.full((1, 1, 2, 2), 4.0))
    np.testing.assert_allclose(batchnorm2d(x, bn).data, 2.0 / np.sqrt(4.0 + 1e-5))
    assert bn.running_mean.data[0] == 2.0


@pytest.mark.parametrize("size,factor", [(1, 2), (3, 2), (4, 3), (2, 32)])
def test_bilinear_matrix_rows_are_convex(size, factor):
    m = bilinear_matrix(size, factor)
    assert m.shape == (size * factor, size)
    np.testing.assert_allclose(m.sum(axis=1), 1.0)
    assert (m >= 0).all()


def test_upsample_matches_coordinate_formula():
    x = randn((1, 2, 3, 5))
    np.testing.assert_allclose(upsample_bilinear(x, 4).data, oracles.upsample(x.data.tolist(), 4), atol=1e-14)


def test_upsample_constant_is_constant():
    x = Tensor(np.full((1, 1, 3, 3), 0.25))
    np.testing.assert_allclose(upsample_bilinear(x, 8).data, 0.25, atol=1e-15)


def test_state_dict_roundtrip_and_mismatch():
    a, b = CBR(2, 3).initialize(Rng(0)), CBR(2, 3)
    b.load_state_dict(a.state_dict())
    for (na, ta), (nb, tb) in zip(a.named_tensors(), b.named_tensors()):
        assert na == nb
        np.testing.assert_array_equal(ta.data, tb.data)
    assert [n for n, _ in a.named_tensors()] == ["conv/weight", "bn/scale", "bn/shift", "bn/running_mean",
                                                 "bn/running_var"]
    assert [n for n, _ in a.named_parameters()] == ["conv/weight", "bn/scale", "bn/shift"]
    with pytest.raises(KeyError):
        CBR(2, 3).load_state_dict({"conv/weight": np.zeros((3, 2, 3, 3))})
    bad = dict(a.state_dict())
    bad["conv/weight"] = np.zeros((3, 2, 1, 1))
    with pytest.raises(ValueError):
        CBR(2, 3).load_state_dict(bad)


def test_conv_rejects_channel_mismatch():
    conv = Conv2d(2, 3, 3)
    with pytest.raises(ValueError):
        conv2d(randn((1, 3, 4, 4)), conv.weight, conv.bias, 1, 1, 1)
