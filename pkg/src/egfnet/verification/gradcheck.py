"""Central finite-difference gradient checks against the tape."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from ..rng import Pcg32
from ..tensor import GradTape, Tensor, backward, mul, sum_all


@dataclass
class GradCheckResult:
    rel_error: float          # worst norm-wise relative error over the checked tensors
    max_abs_error: float
    checked: int              # number of coordinates compared

    def ok(self, tol: float) -> bool:
        return self.rel_error <= tol


def _projected(fn, inputs, proj):
    out = fn(*inputs)
    return sum_all(mul(out, proj[out.shape])) if out.data.size != 1 else out


def gradcheck(fn: Callable[..., Tensor], inputs: Sequence[Tensor], stream: Pcg32,
              params: Sequence[Tensor] = (), h: float = 1e-4,
              max_coords: Optional[int] = 24) -> GradCheckResult:
    """Compare tape gradients of ``fn(*inputs)`` with central differences.

    Non-scalar outputs are reduced with a fixed random projection. Each tensor in
    ``inputs`` and ``params`` is checked on up to ``max_coords`` random coordinates;
    the error per tensor is ``|a − n| / max(|a|, |n|)`` in the 2-norm over those coordinates.
    """
    inputs = list(inputs)
    targets = inputs + [p for p in params if all(p is not q for q in inputs)]
    proj_cache: dict = {}

    class _Proj:
        def __getitem__(self, shape):
            if shape not in proj_cache:
                n = int(np.prod(shape))
                proj_cache[shape] = Tensor(stream.normal(n).reshape(shape))
            return proj_cache[shape]

    proj = _Proj()
    tape = GradTape()
    tape.watch_all(targets)
    for t in targets:
        t.grad = None
    loss = _projected(fn, inputs, proj)
    backward(loss, tape)
    tape.clear()
    analytic = [None if t.grad is None else t.grad.copy() for t in targets]
    for t in targets:
        t.node = None

    worst_rel, worst_abs, checked = 0.0, 0.0, 0
    for t, grad in zip(targets, analytic):
        flat = t.data.reshape(-1)
        size = flat.size
        if max_coords is None or size <= max_coords:
            coords = list(range(size))
        else:
            coords = sorted({stream.integers(size) for _ in range(max_coords)})
        num = np.empty(len(coords))
        for k, idx in enumerate(coords):
            orig = flat[idx]
            flat[idx] = orig + h
            up = _projected(fn, inputs, proj).item()
            flat[idx] = orig - h
            down = _projected(fn, inputs, proj).item()
            flat[idx] = orig
            num[k] = (up - down) / (2 * h)
        ana = np.zeros(len(coords)) if grad is None else grad.reshape(-1)[coords]
        diff = np.linalg.norm(ana - num)
        scale = max(np.linalg.norm(ana), np.linalg.norm(num))
        rel = diff / scale if scale > 0 else diff
        worst_rel = max(worst_rel, rel)
        worst_abs = max(worst_abs, float(np.abs(ana - num).max(initial=0.0)))
        checked += len(coords)
    return GradCheckResult(float(worst_rel), worst_abs, checked)
