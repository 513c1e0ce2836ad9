import io

import numpy as np
import pytest

from egfnet.tensor import (GradTape, Tensor, add, backward, concat_channels, dump_tensor, load_tensor, mean_all,
                           mul, ones, relu, scale, split_channels, sub, sum_all, zeros)

from conftest import randn


def grads_of(fn, *tensors):
    tape = GradTape()
    tape.watch_all(tensors)
    backward(sum_all(fn(*tensors)), tape)
    return [t.grad for t in tensors]


def test_add_mul_gradients_closed_form():
    a, b = randn((1, 2, 3, 3), 0, "a"), randn((1, 2, 3, 3), 0, "b")
    ga, gb = grads_of(lambda a, b: mul(add(a, b), b), a, b)
    np.testing.assert_allclose(ga, b.data)
    np.testing.assert_allclose(gb, a.data + 2 * b.data)


def test_channel_broadcast_reduces_gradient():
    x, e = randn((2, 3, 4, 4), 1, "x"), randn((2, 1, 4, 4), 1, "e")
    gx, ge = grads_of(mul, x, e)
    np.testing.assert_allclose(gx, np.broadcast_to(e.data, x.shape))
    np.testing.assert_allclose(ge, x.data.sum(axis=1, keepdims=True))
    # the broadcast operand may sit on either side
    gx2, ge2 = grads_of(lambda x, e: mul(e, x), x, e)
    np.testing.assert_array_equal(gx, gx2)
    np.testing.assert_array_equal(ge, ge2)


def test_incompatible_shapes_rejected():
    with pytest.raises(ValueError):
        add(zeros([1, 2, 3, 3]), zeros([1, 3, 3, 3]))


def test_reused_tensor_accumulates():
    x = randn((1, 1, 2, 2))
    (g,) = grads_of(lambda x: add(add(x, x), scale(x, 3.0)), x)
    np.testing.assert_allclose(g, np.full(x.shape, 5.0))


def test_relu_mask_at_zero():
    x = Tensor(np.array([-1.0, 0.0, 2.0]).reshape(1, 1, 1, 3))
    (g,) = grads_of(relu, x)
    assert g.reshape(-1).tolist() == [0.0, 0.0, 1.0]


def test_concat_split_roundtrip():
    a, b = randn((1, 2, 2, 2), 0, "a"), randn((1, 3, 2, 2), 0, "b")
    cat = concat_channels([a, b])
    pa, pb = split_channels(cat, [2])
    np.testing.assert_array_equal(pa.data, a.data)
    np.testing.assert_array_equal(pb.data, b.data)
    ga, gb = grads_of(lambda a, b: sub(concat_channels([a, b]), ones(cat.shape)), a, b)
    assert (ga == 1).all() and (gb == 1).all()


def test_mean_all_gradient():
    x = randn((1, 2, 2, 2))
    tape = GradTape()
    tape.watch(x)
    backward(mean_all(x), tape)
    np.testing.assert_allclose(x.grad, np.full(x.shape, 1 / 8))


def test_untracked_ops_record_nothing():
    tape = GradTape()
    y = add(randn((1, 1, 2, 2)), randn((1, 1, 2, 2), 1))
    assert y.node is None and not tape.records


def test_unreached_leaf_keeps_grad():
    a, b = randn((1, 1, 2, 2)), randn((1, 1, 2, 2), 1)
    b.grad = np.full(b.shape, 7.0)
    tape = GradTape()
    tape.watch_all([a, b])
    backward(sum_all(a), tape)
    assert (b.grad == 7.0).all()


def test_backward_requires_scalar_on_tape():
    x = randn((1, 1, 2, 2))
    tape = GradTape()
    tape.watch(x)
    with pytest.raises(ValueError):
        backward(add(x, x), tape)
    with pytest.raises(ValueError):
        backward(sum_all(x), GradTape())


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_raises():
    with pytest.raises(FloatingPointError):
        mul(Tensor(np.full((1, 1, 1, 1), 1e300)), Tensor(np.full((1, 1, 1, 1), 1e300)))


def test_shape_validation():
    with pytest.raises(ValueError):
        zeros([1, -1, 2, 2])
    with pytest.raises(OverflowError):
        zeros([2**31, 2**31, 2, 2])


def test_dump_load_roundtrip():
    x = randn((2, 3, 4, 5))
    buf = io.BytesIO()
    dump_tensor(x, buf)
    assert len(buf.getvalue()) == 32 + 8 * x.data.size
    buf.seek(0)
    np.testing.assert_array_equal(load_tensor(buf).data, x.data)


def test_load_truncated():
    with pytest.raises(ValueError):
        load_tensor(io.BytesIO(b"\x01" * 10))
