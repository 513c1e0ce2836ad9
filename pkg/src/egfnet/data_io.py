"""RGB-thermal sample loading, paired augmentation, colorization and a synthetic corpus.

Dataset layout on disk::

    root/dataset.json            {"classes": [...], "palette": [[r,g,b], ...], "size": [H, W]}
    root/{train,val,test}.txt    one id per line, optionally followed by a tag (day/night)
    root/rgb/<id>.png            8-bit RGB
    root/thermal/<id>.png        8- or 16-bit single channel
    root/labels/<id>.png         8-bit class indices
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from PIL import Image

from .rng import Pcg32, Rng
from .tensor import Tensor

SPLITS = ("train", "val", "test")

SYNTH_CLASSES = ["unlabeled", "car", "person", "bike", "curve", "car_stop", "guardrail", "color_cone", "bump"]
SYNTH_PALETTE = [
    [0, 0, 0], [64, 0, 128], [64, 64, 0], [0, 128, 192], [0, 0, 192],
    [128, 128, 0], [64, 64, 128], [192, 128, 128], [192, 64, 0],
]
# Appearance of each synthetic class: (rgb colour, thermal level).
_SYNTH_LOOK = [
    ((0.45, 0.45, 0.42), 0.15),
    ((0.85, 0.10, 0.10), 0.55),
    ((0.10, 0.80, 0.15), 0.95),
    ((0.10, 0.20, 0.90), 0.70),
    ((0.90, 0.85, 0.10), 0.30),
    ((0.80, 0.15, 0.85), 0.45),
    ((0.10, 0.85, 0.85), 0.25),
    ((0.95, 0.55, 0.10), 0.85),
    ((0.55, 0.30, 0.10), 0.60),
]


@dataclass
class Sample:
    rgb: Tensor
    thermal: Tensor
    labels: np.ndarray
    id: str = ""
    tag: Optional[str] = None

    def __post_init__(self):
        h, w = self.labels.shape
        if self.rgb.shape != (1, 3, h, w) or self.thermal.shape != (1, 1, h, w):
            raise ValueError(f"sample {self.id!r}: raster shapes disagree")


@dataclass
class DatasetSpec:
    root: str
    class_names: list
    palette: list
    size: tuple
    splits: dict = field(default_factory=dict)  # split -> list of (id, tag)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def ids(self, split: str) -> list:
        if split not in self.splits:
            raise KeyError(f"unknown split {split!r}")
        return [i for i, _ in self.splits[split]]

    def tags(self, split: str) -> dict:
        return dict(self.splits[split])


def read_split_file(path: str) -> list:
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if len(parts) > 2:
                raise ValueError(f"{path}: malformed line {line.rstrip()!r}")
            entries.append((parts[0], parts[1] if len(parts) == 2 else None))
    return entries


def load_dataset_spec(root: str) -> DatasetSpec:
    meta_path = os.path.join(root, "dataset.json")
    with open(meta_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    for key in ("classes", "palette", "size"):
        if key not in meta:
            raise ValueError(f"{meta_path}: missing key {key!r}")
    classes, palette, size = meta["classes"], meta["palette"], tuple(meta["size"])
    if len(palette) < len(classes):
        raise ValueError("palette is shorter than the class list")
    if len(size) != 2 or size[0] % 32 or size[1] % 32:
        raise ValueError(f"dataset size {list(size)} must be two extents divisible by 32")
    splits = {}
    for split in SPLITS:
        path = os.path.join(root, f"{split}.txt")
        if os.path.exists(path):
            splits[split] = read_split_file(path)
    spec = DatasetSpec(root, list(classes), [list(c) for c in palette], size, splits)
    for split, entries in splits.items():
        for sid, _ in entries:
            for sub in ("rgb", "thermal", "labels"):
                if not os.path.exists(os.path.join(root, sub, f"{sid}.png")):
                    raise FileNotFoundError(f"{split} id {sid!r} has no {sub}/{sid}.png")
    return spec


def _bit_max(arr: np.ndarray) -> float:
    if arr.dtype == np.uint8:
        return 255.0
    if arr.dtype in (np.uint16, np.int32) or arr.dtype == np.dtype(">u2"):
        return 65535.0
    raise ValueError(f"unsupported pixel type {arr.dtype}")


def read_png(path: str) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I;16L"):
            return np.array(im, dtype=np.uint16)
        if im.mode == "I":
            arr = np.array(im)
            if arr.min() < 0 or arr.max() > 65535:
                raise ValueError(f"{path}: values outside 16-bit range")
            return arr.astype(np.uint16)
        if im.mode in ("L", "RGB"):
            return np.array(im)
        raise ValueError(f"{path}: unsupported image mode {im.mode}")


def write_png(path: str, arr: np.ndarray) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    if arr.dtype == np.uint16:
        img = Image.fromarray(arr.astype(np.uint16))
    elif arr.dtype == np.uint8:
        img = Image.fromarray(arr)
    else:
        raise ValueError(f"write_png needs uint8 or uint16, got {arr.dtype}")
    img.save(path, format="PNG")


def read_rgb(path: str) -> np.ndarray:
    arr = read_png(path)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{path}: expected a 3-channel RGB image")
    return arr.transpose(2, 0, 1)[None].astype(np.float64) / _bit_max(arr)


def read_thermal(path: str) -> np.ndarray:
    arr = read_png(path)
    if arr.ndim != 2:
        raise ValueError(f"{path}: expected a single-channel thermal image")
    return arr[None, None].astype(np.float64) / _bit_max(arr)


def read_labels(path: str, num_classes: int) -> np.ndarray:
    arr = read_png(path)
    if arr.ndim != 2 or arr.dtype != np.uint8:
        raise ValueError(f"{path}: expected an 8-bit single-channel label map")
    if arr.max(initial=0) >= num_classes:
        raise ValueError(f"{path}: label {int(arr.max())} >= {num_classes} classes")
    return arr.astype(np.int64)


def load_sample(spec: DatasetSpec, sid: str, tag: Optional[str] = None) -> Sample:
    root = spec.root
    rgb = read_rgb(os.path.join(root, "rgb", f"{sid}.png"))
    thermal = read_thermal(os.path.join(root, "thermal", f"{sid}.png"))
    labels = read_labels(os.path.join(root, "labels", f"{sid}.png"), spec.num_classes)
    if rgb.shape[2:] != labels.shape or thermal.shape[2:] != labels.shape:
        raise ValueError(f"sample {sid!r}: rasters differ in size")
    return Sample(Tensor(rgb), Tensor(thermal), labels, sid, tag)


def save_sample(root: str, sample: Sample, thermal_bits: int = 16) -> None:
    sid = sample.id
    rgb = np.rint(sample.rgb.data[0].transpose(1, 2, 0) * 255.0).astype(np.uint8)
    write_png(os.path.join(root, "rgb", f"{sid}.png"), rgb)
    if thermal_bits == 16:
        th = np.rint(sample.thermal.data[0, 0] * 65535.0).astype(np.uint16)
    else:
        th = np.rint(sample.thermal.data[0, 0] * 255.0).astype(np.uint8)
    write_png(os.path.join(root, "thermal", f"{sid}.png"), th)
    write_png(os.path.join(root, "labels", f"{sid}.png"), sample.labels.astype(np.uint8))


# ------------------------------------------------------------- augmentation


def transform(sample: Sample, flip: bool, top: int, left: int, crop: tuple) -> Sample:
    """Apply one flip decision and one crop window to all three rasters."""
    ch, cw = crop
    h, w = sample.labels.shape
    if ch > h or cw > w:
        raise ValueError(f"crop {ch}x{cw} larger than image {h}x{w}")
    if not (0 <= top <= h - ch and 0 <= left <= w - cw):
        raise ValueError("crop window out of bounds")
    rgb, th, lab = sample.rgb.data, sample.thermal.data, sample.labels
    if flip:
        rgb, th, lab = rgb[..., ::-1], th[..., ::-1], lab[:, ::-1]
    win = (slice(top, top + ch), slice(left, left + cw))
    return Sample(Tensor(rgb[..., win[0], win[1]].copy()), Tensor(th[..., win[0], win[1]].copy()),
                  lab[win].copy(), sample.id, sample.tag)


def draw_augmentation(stream: Pcg32, size: tuple, crop: tuple):
    """(flip, top, left) drawn in that order from ``stream``."""
    h, w = size
    ch, cw = crop
    if ch > h or cw > w:
        raise ValueError(f"crop {ch}x{cw} larger than image {h}x{w}")
    flip = stream.bernoulli(0.5)
    top = stream.integers(h - ch + 1)
    left = stream.integers(w - cw + 1)
    return flip, top, left


def augment(sample: Sample, stream: Pcg32, crop: Optional[tuple] = None) -> Sample:
    """Random horizontal flip (p = 0.5) then a uniform random crop, shared by all rasters."""
    size = sample.labels.shape
    crop = size if crop is None else tuple(crop)
    flip, top, left = draw_augmentation(stream, size, crop)
    return transform(sample, flip, top, left, crop)


# --------------------------------------------------------------- colorize


def colorize(pred_labels, palette) -> np.ndarray:
    lab = np.asarray(pred_labels)
    pal = np.asarray(palette, dtype=np.int64)
    if lab.size and lab.max() >= len(pal):
        raise ValueError(f"palette has {len(pal)} colours but label {int(lab.max())} occurs")
    if lab.size and lab.min() < 0:
        raise ValueError("negative label")
    if (pal < 0).any() or (pal > 255).any():
        raise ValueError("palette entries must be 8-bit")
    return pal.astype(np.uint8)[lab]


def to_gray8(values: np.ndarray) -> np.ndarray:
    """Map [0, 1] floats to 8-bit grey via round(255·v)."""
    return np.rint(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)


def resize_bilinear(arr: np.ndarray, size: tuple) -> np.ndarray:
    """Resize a [C,H,W] float raster to (H', W') with PIL's bilinear filter."""
    h, w = size
    planes = [np.asarray(Image.fromarray(p.astype(np.float32), mode="F").resize((w, h), Image.BILINEAR))
              for p in arr]
    return np.stack(planes).astype(np.float64)


# ------------------------------------------------------------ synthetic


def synth_sample(stream: Pcg32, sid: str, size: tuple = (64, 64), night: bool = False) -> Sample:
    """Background with 3-5 class-coloured rectangles/ellipses, each with its own thermal level."""
    h, w = size
    labels = np.zeros((h, w), dtype=np.int64)
    yy, xx = np.mgrid[0:h, 0:w]
    nshapes = 3 + stream.integers(3)
    for _ in range(nshapes):
        cls = 1 + stream.integers(len(SYNTH_CLASSES) - 1)
        cy, cx = stream.integers(h), stream.integers(w)
        ry = max(h // 10, 2) + stream.integers(max(h // 5, 1))
        rx = max(w // 10, 2) + stream.integers(max(w // 5, 1))
        if stream.bernoulli(0.5):
            mask = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
        else:
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        labels[mask] = cls
    colours = np.array([look[0] for look in _SYNTH_LOOK])
    heat = np.array([look[1] for look in _SYNTH_LOOK])
    rgb = colours[labels].transpose(2, 0, 1)
    thermal = heat[labels][None]
    rgb = rgb + stream.normal(rgb.size, 0.03).reshape(rgb.shape)
    thermal = thermal + stream.normal(thermal.size, 0.03).reshape(thermal.shape)
    if night:
        rgb = rgb * 0.25
    rgb = np.clip(rgb, 0.0, 1.0)
    thermal = np.clip(thermal, 0.0, 1.0)
    # quantize to what the PNG files will hold
    rgb = np.rint(rgb * 255.0) / 255.0
    thermal = np.rint(thermal * 65535.0) / 65535.0
    return Sample(Tensor(rgb[None]), Tensor(thermal[None]), labels, sid, "night" if night else "day")


def split_counts(n: int) -> tuple:
    """(train, val, test) sizes for an ``n``-sample synthetic corpus."""
    n_test = n // 5
    n_val = n // 10
    return n - n_val - n_test, n_val, n_test


def write_synthetic_dataset(out: str, samples: int, seed: int, size: tuple = (64, 64)) -> DatasetSpec:
    if samples < 1:
        raise ValueError("need at least one sample")
    if size[0] % 32 or size[1] % 32:
        raise ValueError("synthetic size must be divisible by 32")
    rng = Rng(seed)
    os.makedirs(out, exist_ok=True)
    entries = []
    for k in range(samples):
        stream = rng.stream("synth", k)
        night = k % 2 == 1
        s = synth_sample(stream, f"s{k:04d}", size, night)
        save_sample(out, s)
        entries.append((s.id, s.tag))
    n_train, n_val, _ = split_counts(samples)
    groups = {"train": entries[:n_train], "val": entries[n_train:n_train + n_val],
              "test": entries[n_train + n_val:]}
    for split, items in groups.items():
        with open(os.path.join(out, f"{split}.txt"), "w", encoding="utf-8") as fh:
            for sid, tag in items:
                fh.write(f"{sid} {tag}\n")
    meta = {"classes": SYNTH_CLASSES, "palette": SYNTH_PALETTE, "size": list(size)}
    with open(os.path.join(out, "dataset.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    return load_dataset_spec(out)
