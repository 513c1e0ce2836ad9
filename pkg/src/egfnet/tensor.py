"""Dense float64 tensors with tape-based reverse-mode differentiation.

A tensor takes part in differentiation once a :class:`GradTape` watches it.
Every primitive whose inputs include a watched (or derived) tensor appends a
record to that tape; :func:`backward` then walks the records in reverse.
Tensors that were never watched behave as constants.
"""

from __future__ import annotations

import struct
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .rng import Pcg32

__all__ = [
    "Tensor",
    "GradTape",
    "backward",
    "zeros",
    "ones",
    "randn",
    "zeros_like",
    "ones_like",
    "as_tensor",
    "add",
    "sub",
    "mul",
    "scale",
    "concat_channels",
    "split_channels",
    "relu",
    "sum_all",
    "mean_all",
    "dump_tensor",
    "load_tensor",
]

_MAX_ELEMENTS = 2**62


class Node:
    __slots__ = ("tape", "index", "tensor")

    def __init__(self, tape: "GradTape", index: Optional[int], tensor: Optional["Tensor"] = None):
        self.tape = tape
        self.index = index  # None for watched leaves
        self.tensor = tensor  # set for leaves only


class Record:
    __slots__ = ("name", "inputs", "output", "backward_fn")

    def __init__(self, name, inputs, output, backward_fn):
        self.name = name
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class GradTape:
    """Ordered log of executed primitives.

    Records are appended in execution order, so every record's inputs are
    already present when it is added.
    """

    def __init__(self):
        self.records: list[Record] = []

    def watch(self, *tensors: "Tensor") -> None:
        for t in tensors:
            if t.node is not None and t.node.tape is not self and t.node.index is not None:
                raise ValueError("tensor is an intermediate result of a different tape")
            t.node = Node(self, None, t)

    def watch_all(self, tensors: Iterable["Tensor"]) -> None:
        self.watch(*tensors)

    def _record(self, name, inputs, output, backward_fn) -> None:
        node = Node(self, len(self.records))
        self.records.append(Record(name, [t.node for t in inputs], node, backward_fn))
        output.node = node

    def clear(self) -> None:
        """Drop saved forward values; the tape can no longer be differentiated."""
        self.records.clear()

    def __len__(self) -> int:
        return len(self.records)


class Tensor:
    __slots__ = ("data", "grad", "node")

    def __init__(self, data, copy: bool = False):
        arr = np.array(data, dtype=np.float64, copy=copy) if copy else np.asarray(data, dtype=np.float64)
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.node: Optional[Node] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single element, shape is {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __repr__(self) -> str:
        tag = "" if self.node is None else ", tracked"
        return f"Tensor(shape={list(self.shape)}{tag})"


def _tape_of(inputs: Sequence[Tensor]) -> Optional[GradTape]:
    tape = None
    for t in inputs:
        if t.node is not None:
            if tape is None:
                tape = t.node.tape
            elif t.node.tape is not tape:
                raise ValueError("inputs belong to different tapes")
    return tape


def make_result(name: str, data: np.ndarray, inputs: Sequence[Tensor],
                backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]) -> Tensor:
    """Wrap a primitive's output and record it if any input is tracked.

    ``backward_fn`` maps the output gradient to one gradient (or None) per input.
    """
    if not np.isfinite(data).all():
        raise FloatingPointError(f"{name} produced non-finite values")
    out = Tensor(data)
    tape = _tape_of(inputs)
    if tape is not None:
        tape._record(name, list(inputs), out, backward_fn)
    return out


def backward(loss: Tensor, tape: GradTape) -> None:
    """Populate ``grad`` of every watched tensor that ``loss`` depends on.

    Watched tensors not reachable from ``loss`` keep whatever ``grad`` they had.
    """
    if loss.data.size != 1 or loss.data.ndim != 4:
        raise ValueError(f"loss must have shape [1,1,1,1], got {list(loss.shape)}")
    if loss.node is None or loss.node.tape is not tape:
        raise ValueError("loss was not recorded on this tape")
    grads: dict[Node, np.ndarray] = {loss.node: np.ones_like(loss.data)}
    stop = len(tape.records) if loss.node.index is None else loss.node.index + 1
    for rec in reversed(tape.records[:stop]):
        g = grads.pop(rec.output, None)
        if g is None:
            continue
        for node, gi in zip(rec.inputs, rec.backward_fn(g)):
            if node is None or gi is None:
                continue
            prev = grads.get(node)
            grads[node] = gi if prev is None else prev + gi
    for node, g in grads.items():
        if node.index is None and node.tensor is not None:
            node.tensor.grad = np.ascontiguousarray(g, dtype=np.float64).reshape(node.tensor.shape)


# ---------------------------------------------------------------- creation


def _check_shape(shape) -> tuple:
    shape = tuple(int(s) for s in shape)
    if any(s < 0 for s in shape):
        raise ValueError(f"extents must be non-negative, got {list(shape)}")
    count = 1
    for s in shape:
        count *= s
    if count > _MAX_ELEMENTS:
        raise OverflowError(f"element count of {list(shape)} overflows")
    return shape


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(_check_shape(shape)))


def ones(shape) -> Tensor:
    return Tensor(np.ones(_check_shape(shape)))


def randn(shape, std: float, rng: Pcg32) -> Tensor:
    shape = _check_shape(shape)
    n = int(np.prod(shape, dtype=np.int64)) if shape else 1
    return Tensor(rng.normal(n, std).reshape(shape))


def zeros_like(t: Tensor) -> Tensor:
    return Tensor(np.zeros_like(t.data))


def ones_like(t: Tensor) -> Tensor:
    return Tensor(np.ones_like(t.data))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -------------------------------------------------------------- elementwise


def _broadcast_kind(a: Tensor, b: Tensor) -> str:
    if a.shape == b.shape:
        return "same"
    if a.data.ndim == 4 and b.data.ndim == 4:
        (n, c, h, w), (n2, c2, h2, w2) = a.shape, b.shape
        if (n, h, w) == (n2, h2, w2):
            if c2 == 1:
                return "b"
            if c == 1:
                return "a"
    raise ValueError(f"incompatible shapes {list(a.shape)} and {list(b.shape)}")


def _reduce_channel(g: np.ndarray) -> np.ndarray:
    return g.sum(axis=1, keepdims=True)


def add(a: Tensor, b: Tensor) -> Tensor:
    kind = _broadcast_kind(a, b)

    def bw(g):
        ga = _reduce_channel(g) if kind == "a" else g
        gb = _reduce_channel(g) if kind == "b" else g
        return ga, gb

    return make_result("add", a.data + b.data, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    kind = _broadcast_kind(a, b)

    def bw(g):
        ga = _reduce_channel(g) if kind == "a" else g
        gb = _reduce_channel(g) if kind == "b" else g
        return ga, -gb

    return make_result("sub", a.data - b.data, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    kind = _broadcast_kind(a, b)
    ad, bd = a.data, b.data

    def bw(g):
        ga = g * bd
        gb = g * ad
        if kind == "a":
            ga = _reduce_channel(ga)
        elif kind == "b":
            gb = _reduce_channel(gb)
        return ga, gb

    return make_result("mul", ad * bd, (a, b), bw)


def scale(a: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    return make_result("scale", a.data * factor, (a,), lambda g: (g * factor,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_result("relu", np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


# ------------------------------------------------------------------ layout


def concat_channels(parts: Sequence[Tensor]) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ValueError("concat_channels needs at least one part")
    ref = parts[0].shape
    for p in parts:
        if p.data.ndim != 4 or (p.shape[0], p.shape[2], p.shape[3]) != (ref[0], ref[2], ref[3]):
            raise ValueError(f"cannot concatenate {list(p.shape)} with {list(ref)}")
    offsets = np.cumsum([0] + [p.shape[1] for p in parts])

    def bw(g):
        return [g[:, offsets[i]:offsets[i + 1]] for i in range(len(parts))]

    return make_result("concat", np.concatenate([p.data for p in parts], axis=1), parts, bw)


def split_channels(x: Tensor, offsets: Sequence[int]) -> list[Tensor]:
    """Inverse of :func:`concat_channels`: cut at the given channel offsets."""
    bounds = [0, *offsets, x.shape[1]]
    if any(lo > hi for lo, hi in zip(bounds, bounds[1:])):
        raise ValueError(f"offsets {list(offsets)} out of order for {x.shape[1]} channels")
    out = []
    for lo, hi in zip(bounds, bounds[1:]):
        def bw(g, lo=lo, hi=hi):
            full = np.zeros_like(x.data)
            full[:, lo:hi] = g
            return (full,)
        out.append(make_result("split", x.data[:, lo:hi].copy(), (x,), bw))
    return out


# -------------------------------------------------------------- reductions


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    return make_result("sum", np.array(x.data.sum()).reshape(1, 1, 1, 1), (x,),
                       lambda g: (np.broadcast_to(g.reshape(()), shape).copy(),))


def mean_all(x: Tensor) -> Tensor:
    shape, n = x.shape, x.data.size
    return make_result("mean", np.array(x.data.mean()).reshape(1, 1, 1, 1), (x,),
                       lambda g: (np.full(shape, g.reshape(()) / n),))


# ---------------------------------------------------------------- dump i/o


def dump_tensor(t: Tensor, fh) -> None:
    """Write a rank-4 tensor as 4 little-endian u64 extents then raw f64 data."""
    if t.data.ndim != 4:
        raise ValueError("only rank-4 tensors can be dumped")
    fh.write(struct.pack("<4Q", *t.shape))
    fh.write(t.data.astype("<f8").tobytes())


def load_tensor(fh) -> Tensor:
    header = fh.read(32)
    if len(header) != 32:
        raise ValueError("truncated tensor header")
    shape = struct.unpack("<4Q", header)
    count = int(np.prod(shape))
    raw = fh.read(8 * count)
    if len(raw) != 8 * count:
        raise ValueError("truncated tensor data")
    return Tensor(np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape))
