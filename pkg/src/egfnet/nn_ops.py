"""Convolution, batch normalization, bilinear upsampling and the CBR block.

Parameter containers follow a small module protocol: attributes holding
:class:`Module` instances are children, attributes holding :class:`Tensor`
are parameters (or buffers, when listed in ``_buffers``). Names are built
from attribute names as slash paths, in definition order.
"""

from __future__ import annotations

import math
from typing import Iterator, Optional

import numpy as np

from .rng import Rng
from .tensor import Tensor, make_result, relu, zeros


class Module:
    _buffers: tuple = ()

    def children(self) -> Iterator[tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value

    def named_modules(self, prefix: str = "") -> Iterator[tuple[str, "Module"]]:
        yield prefix, self
        for name, child in self.children():
            yield from child.named_modules(f"{prefix}{name}/")

    def named_tensors(self, prefix: str = "", buffers: bool = True) -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            path = f"{prefix}{name}"
            if isinstance(value, Module):
                yield from value.named_tensors(path + "/", buffers)
            elif isinstance(value, Tensor):
                if buffers or name not in self._buffers:
                    yield path, value

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        return self.named_tensors(prefix, buffers=False)

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def train(self, mode: bool = True) -> "Module":
        for _, child in self.children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def initialize(self, rng: Rng, prefix: str = "") -> "Module":
        """Fill every parameter from its own named substream."""
        for name, child in self.children():
            child.initialize(rng, f"{prefix}{name}/")
        return self

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.named_tensors()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_tensors())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise KeyError(f"checkpoint mismatch: missing={missing[:5]} unexpected={extra[:5]}")
        for name, t in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != t.shape:
                raise ValueError(f"shape mismatch for {name}: {list(arr.shape)} vs {list(t.shape)}")
            t.data = np.ascontiguousarray(arr).copy()


# --------------------------------------------------------------- conv2d


def conv_output_size(size: int, k: int, stride: int, padding: int, dilation: int) -> int:
    return (size + 2 * padding - dilation * (k - 1) - 1) // stride + 1


def _im2col(xp: np.ndarray, k: int, stride: int, dilation: int, ho: int, wo: int) -> np.ndarray:
    n, c = xp.shape[:2]
    cols = np.empty((c, k, k, n, ho, wo))
    for i in range(k):
        for j in range(k):
            r0, c0 = i * dilation, j * dilation
            patch = xp[:, :, r0:r0 + stride * (ho - 1) + 1:stride, c0:c0 + stride * (wo - 1) + 1:stride]
            cols[:, i, j] = patch.transpose(1, 0, 2, 3)
    return cols.reshape(c * k * k, n * ho * wo)


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: int = 1,
           padding: int = 0, dilation: int = 1) -> Tensor:
    """Cross-correlation with zero padding, stride and dilation."""
    if x.data.ndim != 4:
        raise ValueError(f"conv2d expects [N,C,H,W], got {list(x.shape)}")
    n, cin, h, w = x.shape
    cout, wcin, k, k2 = weight.shape
    if wcin != cin:
        raise ValueError(f"conv2d channel mismatch: input has {cin}, weight expects {wcin}")
    if k != k2:
        raise ValueError("only square kernels are supported")
    ho = conv_output_size(h, k, stride, padding, dilation)
    wo = conv_output_size(w, k, stride, padding, dilation)
    if ho < 1 or wo < 1:
        raise ValueError(f"conv2d output size {ho}x{wo} is degenerate for input {h}x{w}")

    pointwise = k == 1 and stride == 1 and padding == 0
    if pointwise:
        cols = x.data.transpose(1, 0, 2, 3).reshape(cin, -1)
    else:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
        cols = _im2col(xp, k, stride, dilation, ho, wo)
    wmat = weight.data.reshape(cout, -1)
    out = (wmat @ cols).reshape(cout, n, ho, wo).transpose(1, 0, 2, 3)
    if bias is not None:
        out = out + bias.data.reshape(1, cout, 1, 1)
    out = np.ascontiguousarray(out)

    def bw(g):
        g2 = g.transpose(1, 0, 2, 3).reshape(cout, -1)
        gw = (g2 @ cols.T).reshape(weight.shape)
        gb = g.sum(axis=(0, 2, 3)) if bias is not None else None
        gx = None
        if x.node is not None:
            dcols = wmat.T @ g2
            if pointwise:
                gx = dcols.reshape(cin, n, h, w).transpose(1, 0, 2, 3)
            else:
                dcols = dcols.reshape(cin, k, k, n, ho, wo)
                gxp = np.zeros((n, cin, h + 2 * padding, w + 2 * padding))
                for i in range(k):
                    for j in range(k):
                        r0, c0 = i * dilation, j * dilation
                        gxp[:, :, r0:r0 + stride * (ho - 1) + 1:stride,
                            c0:c0 + stride * (wo - 1) + 1:stride] += dcols[:, i, j].transpose(1, 0, 2, 3)
                gx = gxp[:, :, padding:padding + h, padding:padding + w] if padding else gxp
        if bias is None:
            return gx, gw
        return gx, gw, gb

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return make_result("conv2d", out, inputs, bw)


class Conv2d(Module):
    """Convolution parameters; odd kernels always use padding = dilation·(k−1)/2."""

    def __init__(self, cin: int, cout: int, k: int = 3, stride: int = 1, dilation: int = 1,
                 bias: bool = True, padding: Optional[int] = None):
        if k % 2 != 1:
            raise ValueError("kernel size must be odd")
        same = dilation * (k - 1) // 2
        if padding is None:
            padding = same
        if padding != same:
            raise ValueError(f"padding {padding} must equal dilation*(k-1)/2 = {same}")
        self.stride, self.padding, self.dilation = stride, padding, dilation
        self.weight = zeros([cout, cin, k, k])
        self.bias = zeros([cout]) if bias else None

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    def initialize(self, rng: Rng, prefix: str = "") -> "Conv2d":
        cout, cin, k, _ = self.weight.shape
        std = math.sqrt(2.0 / (cin * k * k))
        stream = rng.stream(f"init/{prefix}weight")
        self.weight.data = stream.normal(self.weight.data.size, std).reshape(self.weight.shape)
        if self.bias is not None:
            self.bias.data = np.zeros(cout)
        return self

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, self.stride, self.padding, self.dilation)


# ------------------------------------------------------------ batch norm


class BatchNorm2d(Module):
    _buffers = ("running_mean", "running_var")

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        if eps <= 0:
            raise ValueError("eps must be positive")
        self.momentum, self.eps = momentum, eps
        self.training = True
        self.scale = Tensor(np.ones(channels))
        self.shift = zeros([channels])
        self.running_mean = zeros([channels])
        self.running_var = Tensor(np.ones(channels))

    def train(self, mode: bool = True) -> "BatchNorm2d":
        self.training = mode
        return self

    def initialize(self, rng: Rng, prefix: str = "") -> "BatchNorm2d":
        c = self.scale.shape[0]
        self.scale.data = np.ones(c)
        self.shift.data = np.zeros(c)
        self.running_mean.data = np.zeros(c)
        self.running_var.data = np.ones(c)
        return self

    def __call__(self, x: Tensor) -> Tensor:
        return batchnorm2d(x, self)


def batchnorm2d(x: Tensor, p: BatchNorm2d) -> Tensor:
    """Per-channel normalization over (N, H, W) with biased batch variance in train mode."""
    if x.data.ndim != 4 or x.shape[1] != p.scale.shape[0]:
        raise ValueError(f"batchnorm2d channel mismatch: {list(x.shape)} vs {p.scale.shape[0]} channels")
    n, c, h, w = x.shape
    m = n * h * w
    if m == 0:
        raise ValueError("batchnorm2d needs at least one value per channel")
    gamma = p.scale.data.reshape(1, c, 1, 1)
    beta = p.shift.data.reshape(1, c, 1, 1)

    if p.training:
        mean = x.data.mean(axis=(0, 2, 3))
        centered = x.data - mean.reshape(1, c, 1, 1)
        var = (centered * centered).mean(axis=(0, 2, 3))
        mom = p.momentum
        p.running_mean.data = (1.0 - mom) * p.running_mean.data + mom * mean
        p.running_var.data = (1.0 - mom) * p.running_var.data + mom * var
        invstd = 1.0 / np.sqrt(var + p.eps)
        xhat = centered * invstd.reshape(1, c, 1, 1)

        def bw(g):
            gscale = (g * xhat).sum(axis=(0, 2, 3))
            gshift = g.sum(axis=(0, 2, 3))
            gx = None
            if x.node is not None:
                dxhat = g * gamma
                gx = (invstd.reshape(1, c, 1, 1) / m) * (
                    m * dxhat
                    - dxhat.sum(axis=(0, 2, 3), keepdims=True)
                    - xhat * (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
                )
            return gx, gscale, gshift
    else:
        invstd = 1.0 / np.sqrt(p.running_var.data + p.eps)
        xhat = (x.data - p.running_mean.data.reshape(1, c, 1, 1)) * invstd.reshape(1, c, 1, 1)

        def bw(g):
            gx = g * (gamma * invstd.reshape(1, c, 1, 1))
            return gx, (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

    return make_result("batchnorm2d", xhat * gamma + beta, (x, p.scale, p.shift), bw)


# --------------------------------------------------------- upsampling


def bilinear_matrix(size: int, factor: int) -> np.ndarray:
    """Row i holds the weights that output sample i puts on the ``size`` inputs.

    Half-pixel centers: output i samples input coordinate (i + 0.5)/factor − 0.5,
    clamped to [0, size − 1].
    """
    out = np.zeros((size * factor, size))
    for i in range(size * factor):
        src = min(max((i + 0.5) / factor - 0.5, 0.0), size - 1.0)
        i0 = int(math.floor(src))
        i1 = min(i0 + 1, size - 1)
        frac = src - i0
        out[i, i0] += 1.0 - frac
        out[i, i1] += frac
    return out


def upsample_bilinear(x: Tensor, factor: int) -> Tensor:
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise ValueError(f"factor must be a positive integer, got {factor!r}")
    if factor == 1:
        return make_result("upsample", x.data.copy(), (x,), lambda g: (g,))
    n, c, h, w = x.shape
    mh = bilinear_matrix(h, factor)
    mw = bilinear_matrix(w, factor)
    out = np.matmul(np.matmul(mh, x.data), mw.T)

    def bw(g):
        return (np.matmul(np.matmul(mh.T, g), mw),)

    return make_result("upsample", out, (x,), bw)


# ------------------------------------------------------------------ CBR


class CBR(Module):
    """3×3 convolution, batch norm, ReLU; spatial size preserved."""

    def __init__(self, cin: int, cout: int, dilation: int = 1):
        self.conv = Conv2d(cin, cout, 3, dilation=dilation, bias=False)
        self.bn = BatchNorm2d(cout)

    def __call__(self, x: Tensor) -> Tensor:
        return cbr(x, self.conv, self.bn)


def cbr(x: Tensor, conv: Conv2d, bn: BatchNorm2d) -> Tensor:
    if conv.weight.shape[2] != 3 or conv.stride != 1 or conv.padding != conv.dilation:
        raise ValueError("CBR needs a spatial-preserving 3x3 convolution")
    return relu(batchnorm2d(conv(x), bn))
