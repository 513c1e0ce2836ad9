import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from egfnet.metrics import (ConfusionMatrix, format_table, per_class, report, report_json, summarize_per_class,
                            summary)
from egfnet.verification import oracles


def test_toy_confusion_matrix():
    cm = ConfusionMatrix(2, np.array([[1, 1], [0, 2]]))
    acc, iou = per_class(cm)
    np.testing.assert_allclose(acc, [0.5, 1.0])
    np.testing.assert_allclose(iou, [0.5, 2 / 3])
    assert summary(cm) == pytest.approx((0.75, 7 / 12))
    assert cm.pixel_accuracy() == 0.75


def test_accumulate_orientation():
    cm = ConfusionMatrix(3).accumulate(np.array([1, 1, 2]), np.array([0, 1, 2]))
    assert cm.counts[0, 1] == 1 and cm.counts[1, 1] == 1 and cm.counts[2, 2] == 1


def test_absent_class_excluded_from_means():
    cm = ConfusionMatrix(3).accumulate(np.array([0, 1, 1]), np.array([0, 1, 1]))
    acc, iou = per_class(cm)
    assert math.isnan(acc[2]) and math.isnan(iou[2])
    assert summary(cm) == (1.0, 1.0)


def test_perfect_prediction():
    gt = np.arange(12).reshape(3, 4) % 5
    assert summary(ConfusionMatrix(5).accumulate(gt, gt)) == (1.0, 1.0)


def test_merge_equals_joint_accumulation():
    rng = np.random.default_rng(0)
    p, g = rng.integers(0, 4, 100), rng.integers(0, 4, 100)
    joint = ConfusionMatrix(4).accumulate(p, g)
    parts = ConfusionMatrix(4).accumulate(p[:37], g[:37]).merge(ConfusionMatrix(4).accumulate(p[37:], g[37:]))
    np.testing.assert_array_equal(joint.counts, parts.counts)


@given(st.integers(0, 10_000), st.integers(2, 6))
@settings(max_examples=30, deadline=None)
def test_brute_force_recount(seed, c):
    rng = np.random.default_rng(seed)
    gt = rng.integers(0, c, 60)
    pred = np.where(rng.random(60) < 0.5, gt, rng.integers(0, c, 60))
    acc, iou = per_class(ConfusionMatrix(c).accumulate(pred, gt))
    racc, riou, rmacc, rmiou = oracles.metrics(pred.tolist(), gt.tolist(), c)
    for got, ref in ((acc, racc), (iou, riou)):
        for x, y in zip(got, ref):
            assert (math.isnan(x) and y is None) or abs(x - y) <= 1e-12
    macc, miou = summarize_per_class(acc, iou)
    assert abs(macc - rmacc) <= 1e-12 and abs(miou - rmiou) <= 1e-12


def test_table_row_consistency():
    # eight foreground classes plus the background completion solving the mean equations
    acc = [98.7, 95.8, 89.0, 80.6, 71.5, 48.7, 33.6, 65.3, 71.1]
    iou = [98.0, 87.6, 69.8, 58.8, 42.8, 33.8, 7.0, 48.3, 47.1]
    macc, miou = summarize_per_class(acc, iou)
    assert abs(macc - 72.7) <= 0.05 and abs(miou - 54.8) <= 0.05


def test_report_json_and_table():
    cm = ConfusionMatrix(3).accumulate(np.array([0, 1, 1]), np.array([0, 1, 0]))
    rep = report(cm, ["a", "b", "c"])
    assert rep["per_class"][2] == {"name": "c", "acc": None, "iou": None}
    assert json.loads(report_json(rep)) == rep
    table = format_table(rep)
    assert table.splitlines()[0].split() == ["class", "Acc", "IoU"]
    assert "mean" in table


def test_validation():
    with pytest.raises(ValueError):
        ConfusionMatrix(2).accumulate(np.array([0, 2]), np.array([0, 1]))
    with pytest.raises(ValueError):
        ConfusionMatrix(2).accumulate(np.array([0]), np.array([0, 1]))
    with pytest.raises(ValueError):
        ConfusionMatrix(2, np.array([[1, -1], [0, 0]]))
