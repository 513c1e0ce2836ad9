"""Training loop and evaluation shared by the CLI and the estimator."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .data_io import Sample, augment
from .edge_prior import boundary_gt, prior_edge_map
from .fusion import EGFNet, PredictionSet, Variant
from .metrics import ConfusionMatrix
from .rng import Rng
from .supervision import (AdamState, ClassWeights, DEFAULT_BOUNDARY_WEIGHTS, LOSS_NAMES, adam_step,
                          class_weights, label_histogram, total_loss)
from .tensor import GradTape, Tensor, backward

logger = logging.getLogger(__name__)


@dataclass
class TrainSettings:
    epochs: int = 400
    batch_size: int = 2
    seed: int = 0
    crop: Optional[tuple] = (64, 64)
    lr: float = 5e-5
    weight_decay: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    boundary_weights: tuple = DEFAULT_BOUNDARY_WEIGHTS
    dilate_radius: int = 1
    max_steps: Optional[int] = None
    variant: Variant = field(default_factory=Variant)


def stack_batch(samples: Sequence[Sample]):
    rgb = Tensor(np.concatenate([s.rgb.data for s in samples]))
    thermal = Tensor(np.concatenate([s.thermal.data for s in samples]))
    labels = np.stack([s.labels for s in samples])
    return rgb, thermal, labels


def forward_batch(net: EGFNet, samples: Sequence[Sample], variant: Variant) -> tuple:
    rgb, thermal, labels = stack_batch(samples)
    edge = prior_edge_map(rgb, thermal)
    return net(rgb, thermal, edge, variant), labels


def train(net: EGFNet, samples: Sequence[Sample], settings: TrainSettings,
          weights: Optional[ClassWeights] = None,
          on_step: Optional[Callable[[dict], None]] = None) -> list:
    """Run Adam on ``net`` in place; returns one dict of loss values per optimizer step."""
    if not samples:
        raise ValueError("no training samples")
    if settings.batch_size < 1:
        raise ValueError("batch size must be at least 1")
    if weights is None:
        hist = label_histogram(np.stack([s.labels for s in samples]), net.num_classes)
        weights = class_weights(hist, settings.boundary_weights)
    rng = Rng(settings.seed)
    state = AdamState(lr=settings.lr, weight_decay=settings.weight_decay, beta1=settings.beta1,
                      beta2=settings.beta2, eps=settings.eps)
    named = list(net.named_parameters())
    params = [p for _, p in named]
    history = []
    net.train()
    n = len(samples)
    for epoch in range(settings.epochs):
        order = rng.stream("shuffle", epoch).permutation(n)
        for start in range(0, n, settings.batch_size):
            if settings.max_steps is not None and state.step >= settings.max_steps:
                return history
            batch = [augment(samples[k], rng.stream("augment", epoch, k), settings.crop)
                     for k in order[start:start + settings.batch_size]]
            rgb, thermal, labels = stack_batch(batch)
            edge = prior_edge_map(rgb, thermal)
            target = boundary_gt(labels, settings.dilate_radius, net.num_classes)
            for p in params:
                p.grad = None
            tape = GradTape()
            tape.watch_all(params)
            preds = net(rgb, thermal, edge, settings.variant)
            loss, parts = total_loss(preds, labels, target, weights, settings.variant.no_sup)
            value = loss.item()
            if not np.isfinite(value):
                raise FloatingPointError(f"non-finite loss at step {state.step}")
            backward(loss, tape)
            tape.clear()
            adam_step(named, state, allow_absent=settings.variant.no_sup)
            row = {"step": state.step, **{k: parts[k].item() for k in LOSS_NAMES}, "total": value}
            history.append(row)
            if on_step is not None:
                on_step(row)
            logger.debug("epoch %d step %d total %.6f", epoch, state.step, value)
    return history


def predict_logits(net: EGFNet, samples: Sequence[Sample], variant: Variant = Variant()) -> PredictionSet:
    """Eval-mode forward (BN running statistics), no tape."""
    net.eval()
    preds, _ = forward_batch(net, samples, variant)
    return preds


def evaluate(net: EGFNet, samples: Sequence[Sample], variant: Variant = Variant(), batch_size: int = 2):
    """Confusion matrix over ``samples`` plus one matrix per sample tag (e.g. day/night)."""
    total = ConfusionMatrix(net.num_classes)
    by_tag: dict = {}
    for start in range(0, len(samples), batch_size):
        chunk = samples[start:start + batch_size]
        preds = predict_logits(net, chunk, variant)
        pred = preds.S2.data.argmax(axis=1)
        for k, s in enumerate(chunk):
            total.accumulate(pred[k], s.labels)
            if s.tag is not None:
                by_tag.setdefault(s.tag, ConfusionMatrix(net.num_classes)).accumulate(pred[k], s.labels)
    return total, dict(sorted(by_tag.items()))
