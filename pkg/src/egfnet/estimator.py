"""scikit-learn style wrappers around the network and the edge prior.

``X`` stacks RGB and thermal as four channels, ``[N, 4, H, W]`` in [0, 1];
``y`` holds integer labels ``[N, H, W]``.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin

from ._validation import check_images, check_is_fitted, check_labels
from .backbone import EncoderConfig
from .data_io import Sample
from .edge_prior import prior_edge_map
from .fusion import EGFNet, Variant
from .metrics import ConfusionMatrix
from .rng import Rng
from .tensor import Tensor
from .training import TrainSettings, predict_logits, train


def _samples(X: np.ndarray, y: Optional[np.ndarray] = None) -> list:
    out = []
    for k in range(X.shape[0]):
        labels = y[k] if y is not None else np.zeros(X.shape[2:], dtype=np.int64)
        out.append(Sample(Tensor(X[k:k + 1, :3]), Tensor(X[k:k + 1, 3:]), labels, str(k)))
    return out


class PriorEdgeTransformer(TransformerMixin, BaseEstimator):
    """Stateless: maps ``[N, 4, H, W]`` to the normalized Sobel prior ``[N, 1, H, W]``."""

    def fit(self, X, y=None):
        check_images(X)
        return self

    def transform(self, X):
        X = check_images(X)
        return prior_edge_map(Tensor(X[:, :3]), Tensor(X[:, 3:])).data


class EGFNetSegmenter(ClassifierMixin, BaseEstimator):
    """Per-pixel classifier; ``score`` is pixel accuracy.

    Parameters mirror the training settings. ``epochs`` counts passes over ``X``
    and ``max_steps``, when set, stops earlier.
    """

    def __init__(self, num_classes: int = 9, epochs: int = 400, batch_size: int = 2, lr: float = 5e-5,
                 weight_decay: float = 5e-4, seed: int = 0, crop: Optional[tuple] = None,
                 max_steps: Optional[int] = None, encoder: Optional[EncoderConfig] = None,
                 variant: Optional[Variant] = None):
        self.num_classes = num_classes
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.weight_decay = weight_decay
        self.seed = seed
        self.crop = crop
        self.max_steps = max_steps
        self.encoder = encoder
        self.variant = variant

    def _variant(self) -> Variant:
        return self.variant if self.variant is not None else Variant()

    def fit(self, X, y):
        X = check_images(X)
        y = check_labels(y, X, self.num_classes)
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        net = EGFNet(self.num_classes, self.encoder or EncoderConfig()).initialize(Rng(self.seed))
        settings = TrainSettings(epochs=self.epochs, batch_size=self.batch_size, seed=self.seed,
                                 crop=self.crop, lr=self.lr, weight_decay=self.weight_decay,
                                 max_steps=self.max_steps, variant=self._variant())
        self.history_ = train(net, _samples(X, y), settings)
        self.net_ = net
        self.classes_ = np.arange(self.num_classes)
        return self

    def decision_function(self, X) -> np.ndarray:
        """Final semantic logits, ``[N, num_classes, H, W]``."""
        check_is_fitted(self)
        X = check_images(X)
        out = [predict_logits(self.net_, _samples(X[k:k + 1]), self._variant()).S2.data
               for k in range(X.shape[0])]
        return np.concatenate(out)

    def predict(self, X) -> np.ndarray:
        return self.decision_function(X).argmax(axis=1)

    def score(self, X, y, sample_weight=None) -> float:
        X = check_images(X)
        y = check_labels(y, X, self.num_classes)
        cm = ConfusionMatrix(self.num_classes).accumulate(self.predict(X), y)
        return cm.pixel_accuracy()
