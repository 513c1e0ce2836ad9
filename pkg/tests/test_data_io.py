import json
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from egfnet.data_io import (SYNTH_CLASSES, Sample, augment, colorize, draw_augmentation, load_dataset_spec,
                            load_sample, read_png, save_sample, split_counts, synth_sample, to_gray8, transform,
                            write_png, write_synthetic_dataset)
from egfnet.rng import Rng
from egfnet.tensor import Tensor


def coded_sample(h=8, w=12):
    # every pixel carries its own coordinates so provenance is recoverable
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    rgb = np.stack([yy / 255, xx / 255, np.zeros((h, w))])[None]
    thermal = (yy * w + xx)[None, None] / 65535
    labels = (yy * w + xx).astype(np.int64)
    return Sample(Tensor(rgb), Tensor(thermal), labels, "c")


def test_augment_golden_sequence():
    draws = [draw_augmentation(Rng(0).stream("augment", 0, k), (64, 64), (32, 32)) for k in range(4)]
    assert draws == [(True, 22, 7), (True, 13, 0), (True, 9, 17), (True, 26, 8)]


@given(st.integers(0, 5000), st.sampled_from([(8, 12), (4, 4), (8, 5)]))
@settings(max_examples=40, deadline=None)
def test_augment_shares_one_source_pixel(seed, crop):
    s = coded_sample()
    out = augment(s, Rng(seed).stream("aug"), crop)
    src_y = np.rint(out.rgb.data[0, 0] * 255).astype(int)
    src_x = np.rint(out.rgb.data[0, 1] * 255).astype(int)
    np.testing.assert_array_equal(out.labels, src_y * 12 + src_x)
    np.testing.assert_array_equal(np.rint(out.thermal.data[0, 0] * 65535).astype(int), src_y * 12 + src_x)
    assert out.labels.shape == crop


def test_transform_flip_and_window():
    s = coded_sample()
    out = transform(s, True, 2, 1, (3, 4))
    np.testing.assert_array_equal(out.labels, s.labels[:, ::-1][2:5, 1:5])
    with pytest.raises(ValueError):
        transform(s, False, 7, 0, (3, 4))


def test_png_roundtrip(tmp_path):
    wide = (np.arange(12) * 5957).astype(np.uint16).reshape(3, 4)
    for arr in (np.arange(12, dtype=np.uint8).reshape(3, 4), wide, np.arange(36, dtype=np.uint8).reshape(3, 4, 3)):
        p = str(tmp_path / "x.png")
        write_png(p, arr)
        back = read_png(p)
        assert back.dtype == arr.dtype
        np.testing.assert_array_equal(back, arr)


def test_save_load_identity_on_quantized_data(tmp_path):
    s = synth_sample(Rng(0).stream("s"), "a", (32, 32))
    save_sample(str(tmp_path), s)
    meta = {"classes": SYNTH_CLASSES, "palette": [[k, k, k] for k in range(9)], "size": [32, 32]}
    (tmp_path / "dataset.json").write_text(json.dumps(meta))
    back = load_sample(load_dataset_spec(str(tmp_path)), "a")
    np.testing.assert_array_equal(back.rgb.data, s.rgb.data)
    np.testing.assert_array_equal(back.thermal.data, s.thermal.data)
    np.testing.assert_array_equal(back.labels, s.labels)


def test_synthetic_dataset_layout_and_determinism(tmp_path):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    spec = write_synthetic_dataset(a, 10, 3)
    write_synthetic_dataset(b, 10, 3)
    assert [len(spec.splits[k]) for k in ("train", "val", "test")] == list(split_counts(10)) == [7, 1, 2]
    assert spec.num_classes == 9 and spec.size == (64, 64)
    assert spec.tags("train")["s0001"] == "night" and spec.tags("train")["s0000"] == "day"
    for sub in ("rgb", "thermal", "labels"):
        for name in sorted(os.listdir(os.path.join(a, sub))):
            with open(os.path.join(a, sub, name), "rb") as fa, open(os.path.join(b, sub, name), "rb") as fb:
                assert fa.read() == fb.read()


def test_four_sample_corpus_is_all_train(tmp_path):
    spec = write_synthetic_dataset(str(tmp_path), 4, 0)
    assert len(spec.splits["train"]) == 4 and spec.splits["test"] == []


def test_missing_raster_is_reported(tmp_path):
    write_synthetic_dataset(str(tmp_path), 2, 0, (32, 32))
    os.remove(tmp_path / "thermal" / "s0001.png")
    with pytest.raises(FileNotFoundError):
        load_dataset_spec(str(tmp_path))


def test_colorize():
    pal = [[0, 0, 0], [255, 0, 0], [0, 255, 0]]
    np.testing.assert_array_equal(colorize(np.zeros((2, 2), dtype=int), pal), np.zeros((2, 2, 3), np.uint8))
    lab = np.array([[0, 1], [2, 1]])
    one_hot = np.eye(3)[lab].transpose(2, 0, 1)
    np.testing.assert_array_equal(colorize(one_hot.argmax(axis=0), pal), np.asarray(pal, np.uint8)[lab])
    with pytest.raises(ValueError):
        colorize(np.array([[3]]), pal)


def test_gray8_rounding():
    np.testing.assert_array_equal(to_gray8(np.array([0.0, 0.5, 1.0, 1.7])), [0, 128, 255, 255])
