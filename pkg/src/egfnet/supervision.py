"""Class weighting, weighted BCE / CE losses, the multitask total and Adam."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .tensor import Tensor, add, make_result

ENET_C = 1.02
DEFAULT_BOUNDARY_WEIGHTS = (1.0, 5.0)


@dataclass
class ClassWeights:
    w: np.ndarray
    w_boundary: tuple = DEFAULT_BOUNDARY_WEIGHTS

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        self.w_boundary = tuple(float(v) for v in self.w_boundary)
        if len(self.w_boundary) != 2:
            raise ValueError("w_boundary needs a (negative, positive) pair")
        vals = np.concatenate([self.w, self.w_boundary])
        if not (np.isfinite(vals).all() and (vals > 0).all()):
            raise ValueError("class weights must be positive and finite")

    @classmethod
    def uniform(cls, num_classes: int, w_boundary=(1.0, 1.0)) -> "ClassWeights":
        return cls(np.ones(num_classes), w_boundary)

    def scaled(self, alpha: float) -> "ClassWeights":
        return ClassWeights(self.w * alpha, tuple(v * alpha for v in self.w_boundary))


def class_weights(label_histogram: Sequence[int], w_boundary=DEFAULT_BOUNDARY_WEIGHTS) -> ClassWeights:
    """ENet weighting 1 / ln(1.02 + p_c); classes never seen get the largest computed weight."""
    counts = np.asarray(label_histogram, dtype=np.float64)
    if counts.ndim != 1 or counts.size == 0 or (counts < 0).any():
        raise ValueError("label histogram must be a non-empty vector of counts")
    total = counts.sum()
    if total <= 0:
        raise ValueError("label histogram is all zeros")
    p = counts / total
    w = 1.0 / np.log(ENET_C + p)
    present = counts > 0
    w[~present] = w[present].max()
    return ClassWeights(w, w_boundary)


def label_histogram(labels, num_classes: int) -> np.ndarray:
    lab = np.asarray(labels).reshape(-1)
    if lab.size and (lab.min() < 0 or lab.max() >= num_classes):
        raise ValueError("label out of range")
    return np.bincount(lab, minlength=num_classes)


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def weighted_bce(logits: Tensor, target: Tensor, weights: ClassWeights) -> Tensor:
    """Pixel-weighted binary cross-entropy on sigmoid(logits), averaged over N·H·W."""
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    if t.shape != logits.shape or logits.shape[1] != 1:
        raise ValueError(f"boundary logits {list(logits.shape)} and target {list(t.shape)} mismatch")
    if not np.isin(t, (0.0, 1.0)).all():
        raise ValueError("boundary target must be binary")
    z = logits.data
    wt = np.where(t > 0.5, weights.w_boundary[1], weights.w_boundary[0])
    m = z.size
    per_pixel = wt * (_softplus(z) - t * z)
    loss = np.array(per_pixel.sum() / m).reshape(1, 1, 1, 1)

    def bw(g):
        return (g.reshape(()) * wt * (_sigmoid(z) - t) / m,)

    return make_result("weighted_bce", loss, (logits,), bw)


def weighted_ce(logits: Tensor, labels, weights: ClassWeights, ignore_index: Optional[int] = None) -> Tensor:
    """Class-weighted softmax cross-entropy, averaged over valid pixels."""
    z = logits.data
    n, c, h, w = z.shape
    lab = np.asarray(labels)
    if lab.ndim == 2:
        lab = lab[None]
    if lab.shape != (n, h, w):
        raise ValueError(f"labels {list(lab.shape)} do not match logits {list(z.shape)}")
    if weights.w.shape != (c,):
        raise ValueError(f"{weights.w.shape[0]} class weights for {c} classes")
    lab = lab.astype(np.int64)
    valid = np.ones(lab.shape, dtype=bool) if ignore_index is None else lab != ignore_index
    if ((lab[valid] < 0) | (lab[valid] >= c)).any():
        raise ValueError("label out of range")
    safe = np.where(valid, lab, 0)
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    picked = np.take_along_axis(z, safe[:, None], axis=1)[:, 0]
    wpix = np.where(valid, weights.w[safe], 0.0)
    count = int(valid.sum())
    total = float((wpix * (lse - picked)).sum())
    loss = np.array(total / count if count else 0.0).reshape(1, 1, 1, 1)

    def bw(g):
        if not count:
            return (np.zeros_like(z),)
        prob = np.exp(z - lse[:, None])
        onehot = np.zeros_like(z)
        np.put_along_axis(onehot, safe[:, None], 1.0, axis=1)
        return (g.reshape(()) * wpix[:, None] * (prob - onehot) / count,)

    return make_result("weighted_ce", loss, (logits,), bw)


LOSS_NAMES = ("L_B1", "L_B2", "L_B3", "L_S1", "L_S2")


def total_loss(preds, semantic_gt, boundary_target: Tensor, weights: ClassWeights,
               no_sup: bool = False, ignore_index: Optional[int] = None):
    """Unit-weighted sum of three boundary and two semantic losses.

    Returns ``(total, parts)`` where ``parts`` maps each loss name to its tensor.
    With ``no_sup`` only the final semantic map is supervised.
    """
    parts = {}
    for i, b in enumerate(preds.B, start=1):
        parts[f"L_B{i}"] = weighted_bce(b, boundary_target, weights)
    parts["L_S1"] = weighted_ce(preds.S1, semantic_gt, weights, ignore_index)
    parts["L_S2"] = weighted_ce(preds.S2, semantic_gt, weights, ignore_index)
    if no_sup:
        return parts["L_S2"], parts
    total = parts["L_B1"]
    for name in LOSS_NAMES[1:]:
        total = add(total, parts[name])
    return total, parts


# ------------------------------------------------------------------ Adam


@dataclass
class AdamState:
    lr: float = 5e-5
    weight_decay: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: Sequence[tuple[str, Tensor]], state: AdamState, allow_absent: bool = False) -> None:
    """One Adam update with decoupled weight decay, in place.

    ``params`` is a sequence of (name, tensor); moments are keyed by name.
    Parameters without a gradient raise unless ``allow_absent`` (then they are skipped).
    """
    missing = [name for name, p in params if p.grad is None]
    if missing and not allow_absent:
        raise ValueError(f"absent gradients for {len(missing)} parameters, e.g. {missing[0]}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    for name, p in params:
        g = p.grad
        if g is None:
            continue
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        state.m[name], state.v[name] = m, v
        update = (m / corr1) / (np.sqrt(v / corr2) + state.eps)
        p.data = p.data * (1.0 - state.lr * state.weight_decay) - state.lr * update


def sigmoid(x: Tensor) -> np.ndarray:
    """Plain (untracked) logistic function of a tensor's values."""
    return _sigmoid(x.data)


__all__ = [
    "ClassWeights", "class_weights", "label_histogram", "weighted_bce", "weighted_ce",
    "total_loss", "AdamState", "adam_step", "LOSS_NAMES", "sigmoid",
]

