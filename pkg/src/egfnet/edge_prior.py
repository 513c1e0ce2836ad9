"""Sobel prior edge map and boundary targets derived from label maps."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .tensor import Tensor

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T.copy()
LUMA = (0.299, 0.587, 0.114)


def _sobel_xy(img: np.ndarray):
    # img [N, H, W], zero padding of one pixel. Written as differences of
    # opposite taps so flat regions give exactly zero, not rounding noise.
    h, w = img.shape[1:]
    p = np.pad(img, ((0, 0), (1, 1), (1, 1)))

    def tap(di, dj):
        return p[:, di:di + h, dj:dj + w]

    dx = [tap(i, 2) - tap(i, 0) for i in range(3)]
    dy = [tap(2, j) - tap(0, j) for j in range(3)]
    return dx[0] + 2.0 * dx[1] + dx[2], dy[0] + 2.0 * dy[1] + dy[2]


def sobel_magnitude(img: Tensor) -> Tensor:
    """L1 Sobel magnitude |Gx| + |Gy| with the one-pixel border forced to zero.

    The result is a constant: no gradient flows back into ``img``.
    """
    data = img.data if isinstance(img, Tensor) else np.asarray(img, dtype=np.float64)
    if data.ndim != 4 or data.shape[1] != 1:
        raise ValueError(f"sobel_magnitude expects [N,1,H,W], got {list(data.shape)}")
    plane = data[:, 0]
    gx, gy = _sobel_xy(plane)
    mag = np.abs(gx) + np.abs(gy)
    mag[:, 0, :] = 0.0
    mag[:, -1, :] = 0.0
    mag[:, :, 0] = 0.0
    mag[:, :, -1] = 0.0
    return Tensor(mag[:, None])


def luma(rgb: Tensor) -> Tensor:
    data = rgb.data
    if data.ndim != 4 or data.shape[1] != 3:
        raise ValueError(f"luma expects [N,3,H,W], got {list(data.shape)}")
    return Tensor((LUMA[0] * data[:, 0] + LUMA[1] * data[:, 1] + LUMA[2] * data[:, 2])[:, None])


def normalize_per_image(e: np.ndarray) -> np.ndarray:
    """Min-max scale each image to [0, 1]; constant images map to zeros."""
    out = np.zeros_like(e)
    for k in range(e.shape[0]):
        lo, hi = e[k].min(), e[k].max()
        if hi > lo:
            out[k] = (e[k] - lo) / (hi - lo)
    return out


def prior_edge_map(rgb: Tensor, thermal: Tensor) -> Tensor:
    """Sum of the luma and thermal Sobel maps, normalized per image, shape [N,1,H,W]."""
    if rgb.data.ndim != 4 or thermal.data.ndim != 4:
        raise ValueError("prior_edge_map expects rank-4 inputs")
    n, _, h, w = rgb.shape
    if thermal.shape != (n, 1, h, w):
        raise ValueError(f"thermal shape {list(thermal.shape)} does not match rgb {list(rgb.shape)}")
    e = sobel_magnitude(luma(rgb)).data + sobel_magnitude(thermal).data
    return Tensor(normalize_per_image(e))


def boundary_gt(labels, dilate_radius: int = 1, num_classes: Optional[int] = None) -> Tensor:
    """Binary [N,1,H,W] mask of label transitions, dilated ``dilate_radius`` times by a 3×3 square."""
    lab = np.asarray(labels)
    if lab.ndim == 2:
        lab = lab[None]
    if lab.ndim != 3:
        raise ValueError(f"labels must be [N,H,W], got shape {list(lab.shape)}")
    if dilate_radius < 0:
        raise ValueError("dilate_radius must be non-negative")
    if lab.size and (lab.min() < 0 or (num_classes is not None and lab.max() >= num_classes)):
        raise ValueError("label out of range")
    edge = np.zeros(lab.shape, dtype=bool)
    vert = lab[:, 1:, :] != lab[:, :-1, :]
    horiz = lab[:, :, 1:] != lab[:, :, :-1]
    edge[:, 1:, :] |= vert
    edge[:, :-1, :] |= vert
    edge[:, :, 1:] |= horiz
    edge[:, :, :-1] |= horiz
    for _ in range(dilate_radius):
        grown = edge.copy()
        grown[:, 1:, :] |= edge[:, :-1, :]
        grown[:, :-1, :] |= edge[:, 1:, :]
        edge = grown.copy()
        grown[:, :, 1:] |= edge[:, :, :-1]
        grown[:, :, :-1] |= edge[:, :, 1:]
        edge = grown
    return Tensor(edge[:, None].astype(np.float64))
