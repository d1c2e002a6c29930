import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from olivesynth.errors import ShapeError
from olivesynth.evaluation import (
    EvalReport, MaskPair, binarize, confusion_counts, evaluate_dirs, iou, jaccard_loss, mask_stem,
)
from olivesynth.pngio import write_png

from oracles import brute_iou

masks16 = arrays(np.uint8, (16, 16), elements=st.integers(0, 255))


def half_case():
    p = np.zeros((4, 4), np.uint8)
    p[:, :2] = 255
    return MaskPair(p, np.full((4, 4), 255, np.uint8))


def test_known_values():
    full = np.full((4, 4), 255, np.uint8)
    empty = np.zeros((4, 4), np.uint8)
    assert iou(MaskPair(full, full)) == 1.0
    assert iou(MaskPair(empty, empty)) == 1.0
    assert iou(MaskPair(full, empty)) == 0.0
    left, right = empty.copy(), empty.copy()
    left[:, :2], right[:, 2:] = 255, 255
    assert iou(MaskPair(left, right)) == 0.0
    assert jaccard_loss(MaskPair(left, right)) == 1.0
    assert iou(half_case()) == 0.5
    assert jaccard_loss(half_case()) == 0.5
    assert confusion_counts(half_case()) == (8, 0, 8)


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        MaskPair(np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        binarize(np.zeros(2), 300)


@given(masks16, masks16)
def test_matches_brute_force(p, g):
    assert iou(MaskPair(p, g)) == brute_iou(p.tolist(), g.tolist())


@given(masks16, masks16, st.integers(0, 255))
@settings(max_examples=50)
def test_symmetric_at_any_threshold(p, g, thr):
    assert iou(MaskPair(p, g), thr) == iou(MaskPair(g, p), thr)
    assert 0.0 <= iou(MaskPair(p, g), thr) <= 1.0


@given(masks16, masks16, st.integers(0, 255))
def test_monotone_in_tp_and_fp(p, g, idx):
    r, c = divmod(idx, 16)
    base = iou(MaskPair(p, g))
    p2, g2 = p.copy(), g.copy()
    p2[r, c], g2[r, c] = 255, 255  # now a true positive
    assert iou(MaskPair(p2, g2)) >= base
    p3 = p.copy()
    if g[r, c] < 128:
        p3[r, c] = 255  # now a false positive (or already was)
        assert iou(MaskPair(p3, g)) <= base


def test_mask_stem():
    from pathlib import Path
    assert mask_stem(Path("a/s00_0001_mask.png")) == "s00_0001"
    assert mask_stem(Path("s00_0001.png")) == "s00_0001"


def _write(d, name, arr):
    write_png(d / name, arr)


def test_identical_directory_scores_one(tmp_path):
    rng = np.random.default_rng(0)
    for i in range(4):
        _write(tmp_path, f"m{i}_mask.png", np.where(rng.random((8, 8)) > 0.5, 255, 0).astype(np.uint8))
    _write(tmp_path, "blank_mask.png", np.zeros((8, 8), np.uint8))
    report = evaluate_dirs(tmp_path, tmp_path)
    assert report.ok and report.aggregate_iou == 1.0 and report.mean_iou == 1.0
    assert report.warnings == 0 and len(report.per_image) == 5


def test_micro_and_macro(tmp_path):
    pred, gt = tmp_path / "p", tmp_path / "g"
    hc = half_case()
    _write(pred, "a.png", hc.prediction)
    _write(gt, "a_mask.png", hc.ground_truth)
    one = np.zeros((4, 4), np.uint8)
    one[0, 0] = 255
    _write(pred, "b.png", one)
    _write(gt, "b_mask.png", one)
    _write(pred, "extra.png", one)
    report = evaluate_dirs(pred, gt)
    assert report.counts == (9, 0, 8)
    assert report.aggregate_iou == 9 / 17
    assert report.mean_iou == 0.75
    assert report.skipped == ["pred:extra.png"] and report.warnings == 1
    d = json.loads(report.to_json())
    assert d["counts"] == {"tp": 9, "fp": 0, "fn": 8}
    assert d["per_image"][0] == {"name": "a", "iou": 0.5}


def test_single_half_pair(tmp_path):
    hc = half_case()
    _write(tmp_path / "p", "x.png", hc.prediction)
    _write(tmp_path / "g", "x.png", hc.ground_truth)
    assert evaluate_dirs(tmp_path / "p", tmp_path / "g").aggregate_iou == 0.5


def test_disjoint_names_give_error(tmp_path):
    _write(tmp_path / "p", "x.png", np.zeros((2, 2), np.uint8))
    _write(tmp_path / "g", "y.png", np.zeros((2, 2), np.uint8))
    report = evaluate_dirs(tmp_path / "p", tmp_path / "g")
    assert not report.ok and report.aggregate_iou is None and report.warnings == 2
    assert isinstance(report, EvalReport)
    with pytest.raises(FileNotFoundError):
        evaluate_dirs(tmp_path / "nope", tmp_path / "g")
