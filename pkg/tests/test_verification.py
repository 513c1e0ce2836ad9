import numpy as np

from egfnet import nn_ops
from egfnet.rng import Rng
from egfnet.tensor import Tensor
from egfnet.verification import suites
from egfnet.verification.gradcheck import gradcheck


def corrupt_conv_backward(monkeypatch):
    original = nn_ops.conv2d

    def bad_conv2d(*args, **kwargs):
        out = original(*args, **kwargs)
        if out.node is not None:
            rec = out.node.tape.records[-1]
            good = rec.backward_fn
            rec.backward_fn = lambda g: [None if v is None else 1.1 * v for v in good(g)]
        return out

    monkeypatch.setattr(nn_ops, "conv2d", bad_conv2d)


def test_fast_suites_pass():
    for name in ("primitives", "equations", "losses", "metrics"):
        res = suites.SUITES[name]()
        assert res.passed, "\n".join(res.lines)


def test_gradient_suite_single_seed():
    res = suites.gradient_suite(seeds=(0,), max_coords=6)
    assert res.passed, "\n".join(res.lines)


def test_corrupted_conv_backward_is_caught(monkeypatch):
    corrupt_conv_backward(monkeypatch)
    res = suites.gradient_suite(seeds=(0,), max_coords=6)
    assert not res.passed
    failing = {line.split()[1] for line in res.lines if line.startswith("FAIL")}
    assert {"conv2d", "cbr", "mfm_fused", "gim"} <= failing
    assert "relu" not in failing and "upsample_bilinear" not in failing


def test_gradcheck_flags_wrong_gradient():
    from egfnet.tensor import make_result

    def wrong_square(x):
        return make_result("sq", x.data ** 2, (x,), lambda g: (g * x.data,))  # should be 2x

    x = Tensor(Rng(0).stream("x").normal(8).reshape(1, 2, 2, 2))
    assert gradcheck(wrong_square, [x], Rng(1).stream("g")).rel_error > 0.1
    assert np.isfinite(gradcheck(lambda t: t * t, [x], Rng(1).stream("g")).rel_error)
