"""Small closed-form cases across modules."""

import math

import numpy as np
import pytest

from egfnet.data_io import colorize, read_rgb, read_thermal, transform, write_png, Sample
from egfnet.edge_prior import boundary_gt, prior_edge_map, sobel_magnitude
from egfnet.fusion import GIM, MFM, SGM, SIM, embed_edge_boundary, embed_edge_semantic, gim, mfm, sfm_step, sgm, sim
from egfnet.metrics import ConfusionMatrix, per_class, summary
from egfnet.nn_ops import BatchNorm2d, CBR, Conv2d, batchnorm2d, conv2d, upsample_bilinear
from egfnet.rng import Rng
from egfnet.supervision import AdamState, ClassWeights, adam_step, class_weights, weighted_bce, weighted_ce
from egfnet.tensor import (GradTape, Tensor, add, backward, concat_channels, mul, ones, ones_like, randn, relu,
                           sum_all, zeros, zeros_like)
from egfnet.verification import oracles

from conftest import randn as rnd


# ------------------------------------------------------------------ tensor

def test_creation_and_identities():
    assert not zeros([1, 1, 2, 2]).data.any()
    a = randn([1, 1, 4, 4], 1.0, Rng(0).stream("r"))
    b = randn([1, 1, 4, 4], 1.0, Rng(0).stream("r"))
    assert a.data.tobytes() == b.data.tobytes()
    x = rnd((1, 3, 4, 4))
    assert np.array_equal(add(x, zeros_like(x)).data, x.data)
    assert np.array_equal(mul(x, ones_like(x)).data, x.data)
    six = mul(Tensor(np.full((2, 3, 2, 2), 2.0)), Tensor(np.full((2, 1, 2, 2), 3.0)))
    assert (six.data == 6.0).all()


def test_randn_mean_golden():
    m = randn([1, 64, 32, 32], 1.0, Rng(0).stream("randn")).data.mean()
    assert abs(m) < 0.05
    assert m == pytest.approx(-0.006667507883450288, rel=1e-9)


def test_concat_and_relu_cases():
    assert concat_channels([zeros([1, 2, 4, 4]), zeros([1, 3, 4, 4])]).shape == (1, 5, 4, 4)
    x = rnd((1, 2, 3, 3))
    assert np.array_equal(concat_channels([x]).data, x.data)
    assert relu(Tensor(np.array([-1.0, 0.0, 2.0]).reshape(1, 1, 1, 3))).data.reshape(-1).tolist() == [0, 0, 2]
    assert np.array_equal(relu(relu(x)).data, relu(x).data)


def test_small_gradients():
    x = Tensor(np.array([-1.0, 2.0]).reshape(1, 1, 1, 2))
    w = Tensor(np.array([3.0]).reshape(1, 1, 1, 1))
    loose = Tensor(np.ones((1, 1, 1, 1)))
    tape = GradTape()
    tape.watch_all([x, w, loose])
    backward(add(sum_all(relu(x)), sum_all(mul(w, w))), tape)
    assert x.grad.reshape(-1).tolist() == [0.0, 1.0]
    assert w.grad.reshape(-1).tolist() == [6.0]
    assert loose.grad is None


# ----------------------------------------------------------- conv / bn / up

def test_identity_1x1_conv():
    conv = Conv2d(4, 4, 1)
    conv.weight.data = np.eye(4).reshape(4, 4, 1, 1)
    x = rnd((1, 4, 3, 3))
    assert np.array_equal(conv(x).data, x.data)


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_dilated_conv_keeps_size(d):
    assert Conv2d(64, 5, 3, dilation=d)(zeros([1, 64, 9, 7])).shape == (1, 5, 9, 7)


def test_batchnorm_cases():
    bn = BatchNorm2d(3)
    assert not bn(zeros([2, 3, 4, 4])).data.any()
    x = rnd((2, 3, 4, 4), std=1.0)
    y = BatchNorm2d(3)(x).data
    var = x.data.var(axis=(0, 2, 3))
    np.testing.assert_allclose(y.var(axis=(0, 2, 3)), var / (var + 1e-5), rtol=1e-12)
    # unit output variance to 1e-8 holds once the batch variance dwarfs eps
    big = BatchNorm2d(3)(rnd((2, 3, 4, 4), std=1e3)).data
    np.testing.assert_allclose(big.mean(axis=(0, 2, 3)), 0.0, atol=1e-8)
    np.testing.assert_allclose(big.var(axis=(0, 2, 3)), 1.0, atol=1e-8)


def test_upsample_cases():
    x = rnd((1, 2, 3, 3))
    assert np.array_equal(upsample_bilinear(x, 1).data, x.data)
    hand = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2))
    assert upsample_bilinear(hand, 2).data.tolist() == oracles.upsample(hand.data.tolist(), 2)
    expected_row0 = [1.0, 1.25, 1.75, 2.0]
    assert upsample_bilinear(hand, 2).data[0, 0, 0].tolist() == expected_row0


def test_cbr_cases():
    block = CBR(2, 3).initialize(Rng(0))
    assert not block(zeros([1, 2, 5, 5])).data.any()
    x = rnd((2, 2, 5, 5))
    ref = relu(batchnorm2d(conv2d(x, block.conv.weight, None, 1, 1, 1), block.bn))
    assert np.array_equal(CBR(2, 3).initialize(Rng(0))(x).data, ref.data)


# ------------------------------------------------------------------ edges

def test_ramp_response():
    ramp = Tensor(np.tile(np.arange(6.0), (5, 1))[None, None])
    mag = sobel_magnitude(ramp).data[0, 0]
    assert (mag[1:-1, 1:-1] == 8.0).all() and mag[0].sum() == 0


def test_rgb_only_step_matches_oracle():
    rgb = np.zeros((1, 3, 32, 32))
    rgb[:, :, :, 16:] = 1.0
    th = np.full((1, 1, 32, 32), 0.3)
    got = prior_edge_map(Tensor(rgb), Tensor(th)).data[0, 0]
    luma = (0.299 * rgb[0, 0] + 0.587 * rgb[0, 1] + 0.114 * rgb[0, 2]).tolist()
    ref = oracles.minmax(oracles.sobel([luma])[0])
    np.testing.assert_allclose(got, ref, atol=1e-12)
    assert got.max() == 1.0


def test_boundary_cases():
    assert not boundary_gt(np.full((1, 4, 4), 2)).data.any()
    halves = np.zeros((1, 4, 4), dtype=int)
    halves[:, :, 2:] = 1
    m = boundary_gt(halves, 0).data[0, 0]
    assert m[:, 1:3].all() and m[:, [0, 3]].sum() == 0


# -------------------------------------------------------------- fusion blocks

def test_zero_propagation_through_blocks():
    w = 8
    z = zeros([1, w, 4, 4])
    f, b, _ = mfm(z, z, MFM(w, 1).initialize(Rng(0)))
    assert not f.data.any() and not b.data.any()
    fh = gim(z, GIM(w).initialize(Rng(0)))
    assert fh.shape == (1, w, 8, 8) and not fh.data.any()
    assert not sim(z, z, SIM(w).initialize(Rng(0))).data.any()
    assert not sfm_step(zeros([1, w, 1, 1]), z, z, 2).data.any()
    sem = sgm(zeros([1, w, 2, 2]), zeros([1, w, 1, 1]), SGM(w, 5).initialize(Rng(0)))[2]
    assert sem.shape == (1, 5, 32, 32) and not sem.data.any()


def test_sfm_additive_identity():
    f = rnd((1, 8, 4, 4))
    out = sfm_step(zeros([1, 8, 1, 1]), zeros([1, 8, 4, 4]), f, 2)
    assert np.array_equal(out.data, upsample_bilinear(f, 2).data)


def test_full_width_block_oracles():
    s = Rng(0).stream("blocks64")
    f5 = Tensor(s.normal(64 * 16).reshape(1, 64, 4, 4))
    block = GIM(64).initialize(Rng(0))
    np.testing.assert_allclose(gim(f5, block).data, oracles.gim(f5.data.tolist(), oracles.module_params(block)),
                               atol=1e-8)
    fh, f4 = (Tensor(s.normal(64 * 16).reshape(1, 64, 4, 4)) for _ in range(2))
    block = SIM(64).initialize(Rng(0))
    np.testing.assert_allclose(sim(fh, f4, block).data,
                               oracles.sim(fh.data.tolist(), f4.data.tolist(), oracles.module_params(block)),
                               atol=1e-8)


def test_edge_embedding_cases():
    b, head = rnd((1, 8, 4, 4)), Conv2d(8, 1, 1).initialize(Rng(0))
    assert not embed_edge_boundary(b, zeros([1, 1, 16, 16]), 2, head).data.any()
    np.testing.assert_array_equal(embed_edge_boundary(b, ones([1, 1, 16, 16]), 2, head).data,
                                  upsample_bilinear(head(b), 4).data)
    x = rnd((1, 3, 8, 8))
    np.testing.assert_array_equal(embed_edge_semantic(x, ones([1, 1, 8, 8])).data, 2 * x.data)
    e = rnd((1, 1, 8, 8), tag="e")
    np.testing.assert_allclose(embed_edge_semantic(x, e).data, (1 + e.data) * x.data, rtol=0, atol=1e-15)


# ---------------------------------------------------------------- losses

def test_enet_limits():
    assert class_weights([10]).w[0] == pytest.approx(1 / math.log(2.02)) == pytest.approx(1.4223, abs=1e-4)
    tiny = class_weights([10**12, 1]).w[1]
    assert tiny == pytest.approx(1 / math.log(1.02), rel=1e-9) == pytest.approx(50.498, abs=1e-3)


def test_loss_limits():
    t = Tensor(np.array([1.0, 0.0, 1.0, 0.0]).reshape(1, 1, 2, 2))
    unit = ClassWeights(np.ones(3), (1.0, 1.0))
    assert weighted_bce(zeros([1, 1, 2, 2]), t, unit).item() == pytest.approx(math.log(2), abs=1e-15)
    assert weighted_bce(Tensor(80 * (2 * t.data - 1)), t, unit).item() < 1e-30
    labels = np.array([[[0, 2]]])
    z = np.zeros((1, 3, 1, 2))
    z[0, 0, 0, 0] = z[0, 2, 0, 1] = 200.0
    assert weighted_ce(Tensor(z), labels, unit).item() < 1e-30


def test_adam_cases():
    w = Tensor(np.ones((1, 1, 1, 1)))
    w.grad = np.ones((1, 1, 1, 1))
    adam_step([("w", w)], AdamState(lr=0.1, weight_decay=0.0))
    assert w.item() == pytest.approx(0.9, abs=1e-8)
    v = Tensor(np.full((1, 1, 1, 1), 2.5))
    v.grad = np.zeros((1, 1, 1, 1))
    adam_step([("v", v)], AdamState(lr=0.1, weight_decay=0.0))
    assert v.item() == 2.5


# ---------------------------------------------------------------- metrics

def test_metric_cases():
    cm = ConfusionMatrix(2).accumulate(np.array([[0, 1], [1, 1]]), np.array([[0, 0], [1, 1]]))
    assert cm.counts.tolist() == [[1, 1], [0, 2]]
    before = cm.counts.copy()
    cm.accumulate(np.zeros((0,), dtype=int), np.zeros((0,), dtype=int))
    assert np.array_equal(cm.counts, before)
    gt = np.array([0, 1, 2, 2])
    diag = ConfusionMatrix(3).accumulate(gt, gt)
    assert (diag.counts == np.diag(np.diag(diag.counts))).all()
    acc, iou = per_class(diag)
    assert (acc == 1).all() and (iou == 1).all() and summary(diag) == (1.0, 1.0)


# ------------------------------------------------------------------ data

def test_raster_scaling(tmp_path):
    write_png(str(tmp_path / "black.png"), np.zeros((4, 4, 3), np.uint8))
    assert not read_rgb(str(tmp_path / "black.png")).any()
    write_png(str(tmp_path / "hot.png"), np.full((4, 4), 65535, np.uint16))
    assert (read_thermal(str(tmp_path / "hot.png")) == 1.0).all()
    raster = np.random.default_rng(0).integers(0, 256, (5, 6, 3)).astype(np.uint8)
    write_png(str(tmp_path / "r.png"), raster)
    assert np.array_equal(read_rgb(str(tmp_path / "r.png"))[0], raster.transpose(2, 0, 1) / 255.0)


def test_transform_involution_and_full_crop():
    s = Sample(rnd((1, 3, 4, 6)), rnd((1, 1, 4, 6), tag="th"), np.arange(24).reshape(4, 6))
    twice = transform(transform(s, True, 0, 0, (4, 6)), True, 0, 0, (4, 6))
    same = transform(s, False, 0, 0, (4, 6))
    for out in (twice, same):
        assert np.array_equal(out.rgb.data, s.rgb.data) and np.array_equal(out.labels, s.labels)


def test_colorize_injective():
    pal = [[10 * k, 255 - 10 * k, k] for k in range(9)]
    img = colorize(np.arange(9).reshape(3, 3), pal).reshape(-1, 3)
    assert len({tuple(c) for c in img.tolist()}) == 9
