"""Edge-guided RGB-thermal fusion network: fusion, context, decoder and heads.

Every block keeps feature maps at ``width`` channels (64 in the full model) and
preserves spatial size unless an explicit upsample is part of its definition.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from .backbone import EncoderConfig, Encoder, NUM_LEVELS
from .nn_ops import BatchNorm2d, CBR, Conv2d, Module, upsample_bilinear
from .tensor import Tensor, add, concat_channels, mul, ones, relu

DILATION_RATES = (1, 2, 3, 4)


@dataclass(frozen=True)
class Variant:
    """Ablation switches. Default is the full model."""

    no_edge: bool = False
    no_mfm: bool = False
    no_gim: bool = False
    no_sim: bool = False
    no_sup: bool = False
    residual_fs2: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "Variant":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown variant flags: {sorted(unknown)}")
        for k, v in d.items():
            if not isinstance(v, bool):
                raise ValueError(f"variant flag {k} must be a boolean")
        return cls(**d)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class MFM(Module):
    """Multimodal fusion for one pyramid level."""

    def __init__(self, width: int, level: int):
        if not 1 <= level <= NUM_LEVELS:
            raise ValueError(f"level must be in 1..{NUM_LEVELS}")
        self.level = level
        self.fuse = Conv2d(2 * width, width, 1)
        self.refine = CBR(width, width)
        self.refine_conv = Conv2d(width, width, 3, bias=False)
        self.refine_bn = BatchNorm2d(width)
        for r in DILATION_RATES:
            setattr(self, f"dil{r}", Conv2d(width, width, 3, dilation=r))
        self.merge = Conv2d(5 * width, width, 3)
        self.head = CBR(width, width)

    def __call__(self, r: Tensor, t: Tensor, no_mfm: bool = False):
        return mfm(r, t, self, no_mfm)


def mfm(r: Tensor, t: Tensor, p: MFM, no_mfm: bool = False):
    """Return (f_i, b_i, s_i); b_i is set on levels 1-3, s_i on levels 4-5."""
    if r.shape != t.shape:
        raise ValueError(f"stream shapes differ: {list(r.shape)} vs {list(t.shape)}")
    if no_mfm:
        f = add(r, t)
    else:
        rt = add(r, t)
        fm = p.fuse(concat_channels([mul(rt, r), mul(rt, t)]))
        fm_hat = relu(add(fm, p.refine_bn(p.refine_conv(p.refine(fm)))))
        branches = [getattr(p, f"dil{rate}")(fm_hat) for rate in DILATION_RATES]
        f = p.merge(concat_channels([fm_hat, *branches]))
    side = p.head(f)
    if p.level <= 3:
        return f, side, None
    return f, None, side


class GIM(Module):
    def __init__(self, width: int):
        self.a0 = Conv2d(width, width, 1)
        for r in DILATION_RATES:
            setattr(self, f"a{r}", Conv2d(width, width, 3, dilation=r))
        self.fuse = Conv2d(5 * width, width, 1)
        self.cbr = CBR(width, width)

    def __call__(self, f5: Tensor) -> Tensor:
        return gim(f5, self)


def gim(f5: Tensor, p: GIM) -> Tensor:
    """Dilated context pyramid on the deepest level, upsampled ×2 (stride 32 → 16)."""
    if f5.data.ndim != 4 or f5.shape[1] != p.a0.in_channels:
        raise ValueError(f"gim expects [N,{p.a0.in_channels},h,w], got {list(f5.shape)}")
    parts = [p.a0(f5)] + [getattr(p, f"a{r}")(f5) for r in DILATION_RATES]
    fa = p.fuse(concat_channels(parts))
    return upsample_bilinear(p.cbr(add(f5, fa)), 2)


class SIM(Module):
    def __init__(self, width: int):
        self.fuse = Conv2d(2 * width, width, 1)
        self.cbr = CBR(width, width)
        self.conv = Conv2d(width, width, 3, bias=False)
        self.bn = BatchNorm2d(width)
        self.out = Conv2d(width, width, 1)

    def __call__(self, f_high: Tensor, f4: Tensor, residual_fs2: bool = False) -> Tensor:
        return sim(f_high, f4, self, residual_fs2)


def sim(f_high: Tensor, f4: Tensor, p: SIM, residual_fs2: bool = False) -> Tensor:
    """Semantic interaction of f_high and f_4; returns the stride-8 decoder seed.

    The inner residual adds ``f_high``; ``residual_fs2`` adds the product term instead.
    """
    if f_high.shape != f4.shape:
        raise ValueError(f"sim inputs differ in shape: {list(f_high.shape)} vs {list(f4.shape)}")
    fs1 = p.fuse(concat_channels([f_high, f4]))
    fs2 = add(mul(fs1, f_high), mul(fs1, f4))
    residual = fs2 if residual_fs2 else f_high
    inner = add(residual, p.bn(p.conv(p.cbr(fs2))))
    return upsample_bilinear(p.out(inner), 2)


def sfm_step(f_high: Tensor, fc: Tensor, f: Tensor, i: int) -> Tensor:
    """One decoder step at level ``i`` (3, 2, 1): sum with the upsampled context, then ×2."""
    if i not in (1, 2, 3):
        raise ValueError("sfm_step level must be 1, 2 or 3")
    if fc.shape != f.shape:
        raise ValueError(f"decoder and skip features differ: {list(fc.shape)} vs {list(f.shape)}")
    high = upsample_bilinear(f_high, 2 ** (4 - i))
    if high.shape != f.shape:
        raise ValueError(f"upsampled context {list(high.shape)} does not match level {i} {list(f.shape)}")
    return upsample_bilinear(add(add(high, fc), f), 2)


class SGM(Module):
    def __init__(self, width: int, num_classes: int):
        self.fuse = Conv2d(2 * width, width, 1)
        self.cbr = CBR(width, width)
        self.classify = Conv2d(width, num_classes, 1)

    def __call__(self, s4: Tensor, s5: Tensor):
        return sgm(s4, s5, self)


def sgm(s4: Tensor, s5: Tensor, p: SGM):
    """Side-out semantic head; returns (f_sem1, f_sem2, f_sem) at full resolution."""
    up4 = upsample_bilinear(s4, 16)
    up5 = upsample_bilinear(s5, 32)
    if up4.shape != up5.shape:
        raise ValueError(f"s4 {list(s4.shape)} and s5 {list(s5.shape)} are not one stride apart")
    sem1 = p.fuse(concat_channels([up4, up5]))
    sem2 = add(add(sem1, up4), up5)
    sem = p.classify(mul(p.cbr(sem2), up5))
    return sem1, sem2, sem


def embed_edge_boundary(b: Tensor, edge: Tensor, i: int, head: Conv2d) -> Tensor:
    """Boundary logits: 1×1 head, upsample by 2**i to full resolution, times the edge map."""
    up = upsample_bilinear(head(b), 2 ** i)
    if up.shape[2:] != edge.shape[2:]:
        raise ValueError(f"boundary map {list(up.shape)} does not match edge map {list(edge.shape)}")
    return mul(up, edge)


def embed_edge_semantic(x: Tensor, edge: Tensor) -> Tensor:
    """edge ⊗ x + x, with the single-channel edge broadcast over classes."""
    if x.shape[2:] != edge.shape[2:] or x.shape[0] != edge.shape[0]:
        raise ValueError(f"semantic map {list(x.shape)} does not match edge map {list(edge.shape)}")
    return add(mul(x, edge), x)


@dataclass
class FusedSet:
    f: list
    b: list
    s: list


@dataclass
class PredictionSet:
    B: list
    S1: Tensor
    S2: Tensor
    f_sem1: Tensor
    f_sem2: Tensor
    f_sem: Tensor
    f_high: Tensor
    fc: list  # f_3^c, f_2^c, f_1^c, f_0^c
    fused: FusedSet
    rgb_levels: list = field(default_factory=list)
    thermal_levels: list = field(default_factory=list)


class EGFNet(Module):
    def __init__(self, num_classes: int, encoder: EncoderConfig = EncoderConfig(), width: Optional[int] = None):
        width = encoder.reduced_channels if width is None else width
        if width != encoder.reduced_channels:
            raise ValueError("fusion width must equal the encoder's reduced channel count")
        if num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        self.num_classes = num_classes
        self.width = width
        self.encoder_config = encoder
        self.rgb_encoder = Encoder(3, encoder)
        self.thermal_encoder = Encoder(1, encoder)
        for i in range(1, NUM_LEVELS + 1):
            setattr(self, f"mfm{i}", MFM(width, i))
        self.gim = GIM(width)
        self.sim = SIM(width)
        for i in (1, 2, 3):
            setattr(self, f"boundary_head{i}", Conv2d(width, 1, 1))
        self.classifier = Conv2d(width, num_classes, 1)
        self.sgm = SGM(width, num_classes)

    def __call__(self, rgb: Tensor, thermal: Tensor, edge: Tensor, variant: Variant = Variant()) -> PredictionSet:
        return egfnet_forward(rgb, thermal, edge, self, variant)


def egfnet_forward(rgb: Tensor, thermal: Tensor, edge: Tensor, net: EGFNet,
                   variant: Variant = Variant()) -> PredictionSet:
    n, _, h, w = rgb.shape
    if h % 32 or w % 32:
        raise ValueError(f"input size {h}x{w} is not divisible by 32")
    if edge.shape != (n, 1, h, w):
        raise ValueError(f"edge map shape {list(edge.shape)} does not match input {list(rgb.shape)}")
    if variant.no_edge:
        edge = ones(edge.shape)

    rgb_levels = net.rgb_encoder(rgb)
    thermal_levels = net.thermal_encoder(thermal)
    fused = FusedSet(f=[], b=[], s=[])
    for i in range(1, NUM_LEVELS + 1):
        f, b, s = getattr(net, f"mfm{i}")(rgb_levels[i - 1], thermal_levels[i - 1], variant.no_mfm)
        fused.f.append(f)
        if b is not None:
            fused.b.append(b)
        if s is not None:
            fused.s.append(s)
    f1, f2, f3, f4, f5 = fused.f

    f_high = upsample_bilinear(f5, 2) if variant.no_gim else net.gim(f5)
    if variant.no_sim:
        fc = upsample_bilinear(add(f_high, f4), 2)
    else:
        fc = net.sim(f_high, f4, variant.residual_fs2)
    chain = [fc]
    for i, skip in ((3, f3), (2, f2), (1, f1)):
        fc = sfm_step(f_high, fc, skip, i)
        chain.append(fc)

    S2 = embed_edge_semantic(net.classifier(chain[-1]), edge)
    sem1, sem2, sem = net.sgm(fused.s[0], fused.s[1])
    S1 = embed_edge_semantic(sem, edge)
    B = [embed_edge_boundary(fused.b[i - 1], edge, i, getattr(net, f"boundary_head{i}")) for i in (1, 2, 3)]
    return PredictionSet(B=B, S1=S1, S2=S2, f_sem1=sem1, f_sem2=sem2, f_sem=sem, f_high=f_high,
                         fc=chain, fused=fused, rgb_levels=rgb_levels, thermal_levels=thermal_levels)
