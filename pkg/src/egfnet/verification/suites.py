"""Oracle suites run by ``egfnet verify`` and by the test-suite.

Each suite returns a :class:`SuiteResult` holding one line per check. Lookups
go through module attributes (``nn_ops.conv2d``) so a patched primitive is
exercised everywhere it is used.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .. import edge_prior, fusion, metrics, nn_ops, supervision, tensor
from ..fusion import GIM, MFM, SGM, SIM
from ..nn_ops import BatchNorm2d, CBR, Conv2d
from ..rng import Rng
from ..tensor import Tensor
from . import oracles
from .gradcheck import gradcheck

GRAD_TOL = 1e-4
LOOP_TOL = 1e-10
EQ_TOL = 1e-8
LOSS_TOL = 1e-12
GRAD_SEEDS = (0, 1, 2, 3, 4)


@dataclass
class SuiteResult:
    name: str
    lines: list = field(default_factory=list)
    passed: bool = True

    def check(self, label: str, value: float, tol: float) -> None:
        ok = bool(value <= tol)
        self.passed &= ok
        self.lines.append(f"{'PASS' if ok else 'FAIL'} {label}: {value:.3e} (tol {tol:.0e})")


def _randn(stream, shape, std=1.0):
    return Tensor(stream.normal(int(np.prod(shape)), std).reshape(shape))


def _randomize(module, stream, std=0.5):
    """Random weights and BN affine terms, so zero-initialized terms get exercised too."""
    for _, t in module.named_parameters():
        t.data = stream.normal(t.data.size, std).reshape(t.shape)
        if t.data.ndim == 1:
            t.data = t.data + 1.0
    return module


def max_diff(a, b) -> float:
    a = np.asarray(getattr(a, "data", a), dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        return float("inf")
    return float(np.abs(a - b).max(initial=0.0))


# ------------------------------------------------------------- gradients


def gradient_cases(width: int = 8) -> dict:
    """name -> builder(seed) returning (fn, inputs, params) for the finite-difference check."""

    def conv_case(seed):
        s = Rng(seed).stream("grad/conv")
        conv = _randomize(Conv2d(3, 4, 3, stride=2, dilation=2), s)
        return (lambda x: nn_ops.conv2d(x, conv.weight, conv.bias, conv.stride, conv.padding, conv.dilation),
                [_randn(s, (1, 3, 6, 6))], conv.parameters())

    def conv1_case(seed):
        s = Rng(seed).stream("grad/conv1x1")
        conv = _randomize(Conv2d(3, 5, 1), s)
        return lambda x: nn_ops.conv2d(x, conv.weight, conv.bias), [_randn(s, (1, 3, 6, 6))], conv.parameters()

    def bn_case(seed):
        s = Rng(seed).stream("grad/bn")
        bn = _randomize(BatchNorm2d(3), s)
        return lambda x: nn_ops.batchnorm2d(x, bn), [_randn(s, (1, 3, 6, 6))], bn.parameters()

    def up_case(seed):
        s = Rng(seed).stream("grad/up")
        return lambda x: nn_ops.upsample_bilinear(x, 3), [_randn(s, (1, 3, 6, 6))], []

    def relu_case(seed):
        s = Rng(seed).stream("grad/relu")
        return tensor.relu, [_randn(s, (1, 3, 6, 6))], []

    def elementwise_case(seed):
        s = Rng(seed).stream("grad/elementwise")
        a, b, e = _randn(s, (1, 3, 6, 6)), _randn(s, (1, 3, 6, 6)), _randn(s, (1, 1, 6, 6))

        def fn(a, b, e):
            prod = tensor.mul(tensor.add(a, b), e)
            return tensor.concat_channels([prod, tensor.mul(a, b), tensor.add(b, e)])

        return fn, [a, b, e], []

    def bce_case(seed):
        s = Rng(seed).stream("grad/bce")
        target = Tensor((s.uniform(36) > 0.7).astype(float).reshape(1, 1, 6, 6))
        w = supervision.ClassWeights(np.ones(2), (1.0, 5.0))
        return lambda z: supervision.weighted_bce(z, target, w), [_randn(s, (1, 1, 6, 6), 2.0)], []

    def ce_case(seed):
        s = Rng(seed).stream("grad/ce")
        labels = (s.uniform(36) * 5).astype(int).reshape(1, 6, 6)
        w = supervision.ClassWeights(0.5 + s.uniform(5))
        return lambda z: supervision.weighted_ce(z, labels, w), [_randn(s, (1, 5, 6, 6), 2.0)], []

    def cbr_case(seed):
        s = Rng(seed).stream("grad/cbr")
        block = _randomize(CBR(3, 4, dilation=2), s)
        return block, [_randn(s, (1, 3, 6, 6))], block.parameters()

    def mfm_case(seed):
        s = Rng(seed).stream("grad/mfm")
        block = _randomize(MFM(width, 2), s, 0.3)
        return (lambda r, t: fusion.mfm(r, t, block)[1], [_randn(s, (1, width, 6, 6)), _randn(s, (1, width, 6, 6))],
                block.parameters())

    def mfm_f_case(seed):
        s = Rng(seed).stream("grad/mfm_f")
        block = _randomize(MFM(width, 4), s, 0.3)
        return (lambda r, t: fusion.mfm(r, t, block)[0], [_randn(s, (1, width, 6, 6)), _randn(s, (1, width, 6, 6))],
                block.parameters())

    def gim_case(seed):
        s = Rng(seed).stream("grad/gim")
        block = _randomize(GIM(width), s, 0.3)
        return lambda f5: fusion.gim(f5, block), [_randn(s, (1, width, 3, 3))], block.parameters()

    def sim_case(seed):
        s = Rng(seed).stream("grad/sim")
        block = _randomize(SIM(width), s, 0.3)
        return (lambda fh, f4: fusion.sim(fh, f4, block), [_randn(s, (1, width, 6, 6)), _randn(s, (1, width, 6, 6))],
                block.parameters())

    def sfm_case(seed):
        s = Rng(seed).stream("grad/sfm")
        feats = [_randn(s, (1, width, 1, 1)), _randn(s, (1, width, 4, 4)), _randn(s, (1, width, 4, 4))]
        return lambda fh, fc, f: fusion.sfm_step(fh, fc, f, 2), feats, []

    def sgm_case(seed):
        s = Rng(seed).stream("grad/sgm")
        block = _randomize(SGM(width, 3), s, 0.3)
        return (lambda s4, s5: fusion.sgm(s4, s5, block)[2], [_randn(s, (1, width, 2, 2)), _randn(s, (1, width, 1, 1))],
                block.parameters())

    def edge_boundary_case(seed):
        s = Rng(seed).stream("grad/edge_b")
        head = _randomize(Conv2d(width, 1, 1), s)
        edge = Tensor(s.uniform(36).reshape(1, 1, 6, 6))
        return (lambda b: fusion.embed_edge_boundary(b, edge, 1, head), [_randn(s, (1, width, 3, 3))],
                head.parameters())

    def edge_semantic_case(seed):
        s = Rng(seed).stream("grad/edge_s")
        edge = Tensor(s.uniform(36).reshape(1, 1, 6, 6))
        return lambda x: fusion.embed_edge_semantic(x, edge), [_randn(s, (1, 5, 6, 6))], []

    return {
        "conv2d": conv_case, "conv2d_1x1": conv1_case, "batchnorm2d": bn_case,
        "upsample_bilinear": up_case, "relu": relu_case, "add_mul_concat": elementwise_case,
        "weighted_bce": bce_case, "weighted_ce": ce_case, "cbr": cbr_case,
        "mfm_boundary": mfm_case, "mfm_fused": mfm_f_case, "gim": gim_case, "sim": sim_case,
        "sfm_step": sfm_case, "sgm": sgm_case, "edge_boundary": edge_boundary_case,
        "edge_semantic": edge_semantic_case,
    }


def run_gradient_case(name: str, builder: Callable, seed: int, max_coords: int = 24):
    fn, inputs, params = builder(seed)
    return gradcheck(fn, inputs, Rng(seed).stream("gradcheck", len(name)), params, max_coords=max_coords)


def gradient_suite(seeds=GRAD_SEEDS, max_coords: int = 24) -> SuiteResult:
    res = SuiteResult("gradients")
    for name, builder in gradient_cases().items():
        worst = max(run_gradient_case(name, builder, seed, max_coords).rel_error for seed in seeds)
        res.check(f"{name} finite differences over {len(seeds)} seeds", worst, GRAD_TOL)
    return res


# --------------------------------------------------------- loop oracles


def primitive_suite() -> SuiteResult:
    res = SuiteResult("primitives")
    s = Rng(0).stream("verify/primitives")
    for n, c, hw, k, stride, dil in ((1, 2, 5, 3, 1, 2), (2, 4, 9, 3, 2, 1), (1, 3, 7, 3, 1, 4), (2, 3, 6, 1, 2, 1)):
        x = _randn(s, (n, c, hw, hw))
        conv = _randomize(Conv2d(c, 3, k, stride=stride, dilation=dil), s)
        got = nn_ops.conv2d(x, conv.weight, conv.bias, stride, conv.padding, dil)
        ref = oracles.conv2d(x.data.tolist(), conv.weight.data.tolist(), conv.bias.data.tolist(),
                             stride, conv.padding, dil)
        res.check(f"conv2d k={k} stride={stride} dilation={dil} vs loops", max_diff(got, ref), LOOP_TOL)

    x = _randn(s, (2, 3, 4, 4), 2.0)
    bn = _randomize(BatchNorm2d(3), s)
    got = nn_ops.batchnorm2d(x, bn)
    ref = oracles.batchnorm_train(x.data.tolist(), bn.scale.data.tolist(), bn.shift.data.tolist(), bn.eps)
    res.check("batchnorm2d train mode vs scalar", max_diff(got, ref), LOOP_TOL)
    bn.eval()
    got = nn_ops.batchnorm2d(x, bn)
    ref = oracles.batchnorm_eval(x.data.tolist(), bn.scale.data.tolist(), bn.shift.data.tolist(),
                                 bn.running_mean.data.tolist(), bn.running_var.data.tolist(), bn.eps)
    res.check("batchnorm2d eval mode vs scalar", max_diff(got, ref), LOOP_TOL)

    for factor, shape in ((2, (1, 1, 2, 2)), (3, (1, 2, 3, 4)), (16, (1, 1, 2, 2))):
        x = _randn(s, shape)
        got = nn_ops.upsample_bilinear(x, factor)
        res.check(f"upsample x{factor} vs coordinate formula", max_diff(got, oracles.upsample(x.data.tolist(), factor)),
                  LOOP_TOL)

    img = _randn(s, (2, 1, 5, 7))
    got = edge_prior.sobel_magnitude(img)
    ref = [[plane] for plane in oracles.sobel([p[0] for p in img.data.tolist()])]
    res.check("sobel magnitude vs loops", max_diff(got, ref), LOOP_TOL)

    labels = (s.uniform(2 * 64) * 4).astype(int).reshape(2, 8, 8)
    got = edge_prior.boundary_gt(labels, 1)
    ref = [[m] for m in oracles.boundary(labels.tolist(), 1)]
    res.check("boundary targets vs brute force", max_diff(got, ref), 0.0)
    return res


# ------------------------------------------------------ network blocks


def equation_suite(width: int = 8, size: int = 6) -> SuiteResult:
    res = SuiteResult("equations")
    s = Rng(0).stream("verify/equations")
    R, T = _randn(s, (1, width, size, size)), _randn(s, (1, width, size, size))

    for level in (2, 5):
        block = _randomize(MFM(width, level), s, 0.3)
        f, b, side = fusion.mfm(R, T, block)
        rf, rb, rs = oracles.mfm(R.data.tolist(), T.data.tolist(), oracles.module_params(block), level)
        res.check(f"MFM level {level} fused features", max_diff(f, rf), EQ_TOL)
        res.check(f"MFM level {level} {'boundary' if level <= 3 else 'semantic'} features",
                  max_diff(b if b is not None else side, rb if rb is not None else rs), EQ_TOL)

    f5 = _randn(s, (1, width, 3, 3))
    block = _randomize(GIM(width), s, 0.3)
    res.check("GIM", max_diff(fusion.gim(f5, block), oracles.gim(f5.data.tolist(), oracles.module_params(block))),
              EQ_TOL)

    block = _randomize(SIM(width), s, 0.3)
    fh, f4 = _randn(s, (1, width, 3, 3)), _randn(s, (1, width, 3, 3))
    p = oracles.module_params(block)
    for flag in (False, True):
        got = fusion.sim(fh, f4, block, residual_fs2=flag)
        ref = oracles.sim(fh.data.tolist(), f4.data.tolist(), p, flag)
        res.check(f"SIM (residual {'f_s2' if flag else 'f_high'})", max_diff(got, ref), EQ_TOL)
    fs1 = _randn(s, (1, width, 3, 3))
    lhs = tensor.add(tensor.mul(fs1, fh), tensor.mul(fs1, f4))
    rhs = tensor.mul(fs1, tensor.add(fh, f4))
    res.check("f_s2 distributivity", max_diff(lhs, rhs.data), 1e-12)

    f_high = _randn(s, (1, width, 1, 1))
    fc = _randn(s, (1, width, 2, 2))
    skips = {3: _randn(s, (1, width, 2, 2)), 2: _randn(s, (1, width, 4, 4)), 1: _randn(s, (1, width, 8, 8))}
    got, ref = fc, fc.data.tolist()
    for i in (3, 2, 1):
        got = fusion.sfm_step(f_high, got, skips[i], i)
        ref = oracles.sfm_step(f_high.data.tolist(), ref, skips[i].data.tolist(), i)
    res.check("SFM chain i=3,2,1", max_diff(got, ref), EQ_TOL)

    block = _randomize(SGM(width, 4), s, 0.3)
    s4, s5 = _randn(s, (1, width, 2, 2)), _randn(s, (1, width, 1, 1))
    got = fusion.sgm(s4, s5, block)
    ref = oracles.sgm(s4.data.tolist(), s5.data.tolist(), oracles.module_params(block))
    for label, g, r in zip(("f_sem1", "f_sem2", "f_sem"), got, ref):
        res.check(f"SGM {label}", max_diff(g, r), EQ_TOL)

    edge = Tensor(s.uniform(32 * 32).reshape(1, 1, 32, 32))
    for i, hw in ((1, 16), (2, 8), (3, 4)):
        b = _randn(s, (1, width, hw, hw))
        head = _randomize(Conv2d(width, 1, 1), s)
        got = fusion.embed_edge_boundary(b, edge, i, head)
        ref = oracles.embed_boundary(b.data.tolist(), edge.data.tolist(), i, oracles.module_params(head))
        res.check(f"boundary embedding B_{i}", max_diff(got, ref), EQ_TOL)
    x = _randn(s, (1, 4, 32, 32))
    got = fusion.embed_edge_semantic(x, edge)
    res.check("semantic embedding", max_diff(got, oracles.embed_semantic(x.data.tolist(), edge.data.tolist())),
              EQ_TOL)
    return res


# --------------------------------------------------------------- losses


def loss_suite() -> SuiteResult:
    res = SuiteResult("losses")
    s = Rng(0).stream("verify/losses")
    z = Tensor(np.array([[0.5, -0.5], [1.0, -1.0]]).reshape(1, 1, 2, 2))
    t = Tensor(np.array([[1.0, 0.0], [1.0, 0.0]]).reshape(1, 1, 2, 2))
    w = supervision.ClassWeights(np.ones(2), (1.0, 2.0))
    got = supervision.weighted_bce(z, t, w).item()
    res.check("weighted BCE 2x2 hand case", abs(got - oracles.bce([0.5, -0.5, 1.0, -1.0], [1, 0, 1, 0], 1.0, 2.0)),
              LOSS_TOL)

    logits = _randn(s, (1, 3, 1, 2), 2.0)
    labels = np.array([[[2, 0]]])
    cw = supervision.ClassWeights(0.5 + s.uniform(3))
    got = supervision.weighted_ce(logits, labels, cw).item()
    pix = [[logits.data[0, c, 0, j] for c in range(3)] for j in range(2)]
    res.check("weighted CE 1x2 pixels, 3 classes", abs(got - oracles.ce(pix, [2, 0], cw.w.tolist())), LOSS_TOL)

    # a random 2-sample, 4-class PredictionSet-shaped case for the multitask total
    n, c, h, wd = 2, 4, 4, 4
    labels = (s.uniform(n * h * wd) * c).astype(int).reshape(n, h, wd)
    target = edge_prior.boundary_gt(labels, 0)
    cw = supervision.ClassWeights(0.5 + s.uniform(c), (1.0, 5.0))

    class _Preds:
        B = [_randn(s, (n, 1, h, wd)) for _ in range(3)]
        S1 = _randn(s, (n, c, h, wd))
        S2 = _randn(s, (n, c, h, wd))

    total, parts = supervision.total_loss(_Preds, labels, target, cw)
    tflat = target.data.reshape(-1).astype(int).tolist()
    ref = sum(oracles.bce(b.data.reshape(-1).tolist(), tflat, *cw.w_boundary) for b in _Preds.B)
    for S in (_Preds.S1, _Preds.S2):
        px = S.data.transpose(0, 2, 3, 1).reshape(-1, c).tolist()
        ref += oracles.ce(px, labels.reshape(-1).tolist(), cw.w.tolist())
    res.check("total loss vs five scalar losses", abs(total.item() - ref), LOSS_TOL)
    return res


# -------------------------------------------------------------- metrics


def metric_suite() -> SuiteResult:
    res = SuiteResult("metrics")
    s = Rng(0).stream("verify/metrics")
    c = 6
    gt = (s.uniform(400) * c).astype(int)
    pred = np.where(s.uniform(400) < 0.6, gt, (s.uniform(400) * (c - 1)).astype(int))
    cm = metrics.ConfusionMatrix(c).accumulate(pred, gt)
    acc, iou = metrics.per_class(cm)
    macc, miou = metrics.summary(cm)
    racc, riou, rmacc, rmiou = oracles.metrics(pred.tolist(), gt.tolist(), c)

    def nan_diff(a, b):
        return max(0.0 if (np.isnan(x) and y is None) else abs(x - y) for x, y in zip(a, b))

    res.check("per-class accuracy vs pixel counting", nan_diff(acc, racc), LOSS_TOL)
    res.check("per-class IoU vs pixel counting", nan_diff(iou, riou), LOSS_TOL)
    res.check("mAcc and mIoU vs pixel counting", max(abs(macc - rmacc), abs(miou - rmiou)), LOSS_TOL)
    return res


SUITES = {
    "gradients": gradient_suite,
    "primitives": primitive_suite,
    "equations": equation_suite,
    "losses": loss_suite,
    "metrics": metric_suite,
}


def run_all(names=None) -> list:
    return [SUITES[name]() for name in (names or SUITES)]
