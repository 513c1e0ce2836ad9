"""Five-stage residual encoder with per-level 1×1 reduction to a common width."""

from __future__ import annotations

from dataclasses import dataclass, field

from .nn_ops import BatchNorm2d, CBR, Conv2d, Module
from .tensor import Tensor, add, relu

NUM_LEVELS = 5


@dataclass(frozen=True)
class EncoderConfig:
    stem_channels: int = 16
    stage_widths: tuple = (16, 32, 64, 128, 256)
    blocks_per_stage: tuple = (1, 1, 1, 1, 1)
    reduced_channels: int = 64

    def __post_init__(self):
        object.__setattr__(self, "stage_widths", tuple(int(v) for v in self.stage_widths))
        object.__setattr__(self, "blocks_per_stage", tuple(int(v) for v in self.blocks_per_stage))
        if len(self.stage_widths) != NUM_LEVELS or len(self.blocks_per_stage) != NUM_LEVELS:
            raise ValueError("encoder needs exactly five stages")
        if min(self.stage_widths) < 1 or min(self.blocks_per_stage) < 1 or self.stem_channels < 1:
            raise ValueError("stage widths, block counts and stem channels must be positive")
        if self.reduced_channels < 1:
            raise ValueError("reduced_channels must be positive")


class ResidualBlock(Module):
    """conv3×3-BN-ReLU-conv3×3-BN plus shortcut, then ReLU.

    A strided or widening block uses a 1×1 strided projection (conv + BN) as shortcut.
    """

    def __init__(self, cin: int, cout: int, stride: int):
        self.conv1 = Conv2d(cin, cout, 3, stride=stride, bias=False)
        self.bn1 = BatchNorm2d(cout)
        self.conv2 = Conv2d(cout, cout, 3, bias=False)
        self.bn2 = BatchNorm2d(cout)
        if stride != 1 or cin != cout:
            self.proj = Conv2d(cin, cout, 1, stride=stride, bias=False)
            self.proj_bn = BatchNorm2d(cout)

    def __call__(self, x: Tensor) -> Tensor:
        y = relu(self.bn1(self.conv1(x)))
        y = self.bn2(self.conv2(y))
        shortcut = self.proj_bn(self.proj(x)) if hasattr(self, "proj") else x
        return relu(add(y, shortcut))


class Stage(Module):
    def __init__(self, cin: int, cout: int, blocks: int):
        for j in range(blocks):
            setattr(self, f"block{j}", ResidualBlock(cin if j == 0 else cout, cout, 2 if j == 0 else 1))

    def __call__(self, x: Tensor) -> Tensor:
        for _, block in self.children():
            x = block(x)
        return x


class Encoder(Module):
    """One modality stream: full-resolution CBR stem, five stride-2 stages, 1×1 reductions."""

    def __init__(self, in_channels: int, cfg: EncoderConfig = EncoderConfig()):
        self.in_channels = in_channels
        self.stem = CBR(in_channels, cfg.stem_channels)
        cin = cfg.stem_channels
        for i, (width, blocks) in enumerate(zip(cfg.stage_widths, cfg.blocks_per_stage), start=1):
            setattr(self, f"stage{i}", Stage(cin, width, blocks))
            cin = width
        for i, width in enumerate(cfg.stage_widths, start=1):
            setattr(self, f"reduce{i}", Conv2d(width, cfg.reduced_channels, 1))

    def __call__(self, img: Tensor) -> list[Tensor]:
        return encode(img, self)


def encode(img: Tensor, enc: Encoder) -> list[Tensor]:
    """Feature pyramid: level i has stride 2**i and the reduced channel width."""
    if img.data.ndim != 4 or img.shape[1] != enc.in_channels:
        raise ValueError(f"encoder expects {enc.in_channels} input channels, got shape {list(img.shape)}")
    h, w = img.shape[2:]
    if h % 32 or w % 32:
        raise ValueError(f"input size {h}x{w} is not divisible by 32")
    x = enc.stem(img)
    levels = []
    for i in range(1, NUM_LEVELS + 1):
        x = getattr(enc, f"stage{i}")(x)
        levels.append(getattr(enc, f"reduce{i}")(x))
    return levels
