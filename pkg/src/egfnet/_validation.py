"""Input checks shared by the estimator wrappers."""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.exceptions import NotFittedError


def check_images(X, channels: int = 4, name: str = "X") -> np.ndarray:
    """Return ``X`` as a float64 [N, channels, H, W] array with H and W divisible by 32."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 4 or arr.shape[1] != channels:
        raise ValueError(f"{name} must have shape [N, {channels}, H, W], got {list(arr.shape)}")
    if arr.shape[0] == 0:
        raise ValueError(f"{name} contains no images")
    if arr.shape[2] % 32 or arr.shape[3] % 32:
        raise ValueError(f"{name} spatial size {arr.shape[2]}x{arr.shape[3]} is not divisible by 32")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains NaN or infinite values")
    return np.ascontiguousarray(arr)


def check_labels(y, X: np.ndarray, num_classes: Optional[int] = None) -> np.ndarray:
    lab = np.asarray(y)
    if lab.shape != (X.shape[0], *X.shape[2:]):
        raise ValueError(f"y must have shape {[X.shape[0], *X.shape[2:]]}, got {list(lab.shape)}")
    if not np.issubdtype(lab.dtype, np.integer):
        if not np.array_equal(lab, np.rint(lab)):
            raise ValueError("y must hold integer class labels")
    lab = lab.astype(np.int64)
    if lab.min() < 0:
        raise ValueError("y contains negative labels")
    if num_classes is not None and lab.max() >= num_classes:
        raise ValueError(f"y contains label {int(lab.max())} but num_classes is {num_classes}")
    return lab


def check_is_fitted(estimator, attr: str = "net_") -> None:
    if getattr(estimator, attr, None) is None:
        raise NotFittedError(f"{type(estimator).__name__} is not fitted yet; call fit first")
