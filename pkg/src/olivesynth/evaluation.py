"""Mask scoring by intersection over union, with directory-level reports."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ShapeError
from .pngio import read_png

DEFAULT_THRESHOLD = 128


@dataclass(frozen=True)
class MaskPair:
    prediction: np.ndarray
    ground_truth: np.ndarray

    def __post_init__(self):
        p, g = np.asarray(self.prediction), np.asarray(self.ground_truth)
        if p.shape != g.shape:
            raise ShapeError(f"mask shapes differ: {p.shape} vs {g.shape}")
        object.__setattr__(self, "prediction", p)
        object.__setattr__(self, "ground_truth", g)


def binarize(mask, threshold: int = DEFAULT_THRESHOLD) -> np.ndarray:
    """Boolean foreground: ``value >= threshold``."""
    if not 0 <= threshold <= 255:
        raise ValueError("threshold must lie in [0, 255]")
    return np.asarray(mask) >= threshold


def confusion_counts(pair: MaskPair, threshold: int = DEFAULT_THRESHOLD) -> tuple[int, int, int]:
    """Integer ``(TP, FP, FN)`` pixel counts."""
    p, g = binarize(pair.prediction, threshold), binarize(pair.ground_truth, threshold)
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return tp, fp, fn


def _ratio(tp: int, fp: int, fn: int) -> float:
    union = tp + fp + fn
    return 1.0 if union == 0 else tp / union


def iou(pair: MaskPair, threshold: int = DEFAULT_THRESHOLD) -> float:
    """Intersection over union of the foreground sets; 1.0 when both are empty."""
    return _ratio(*confusion_counts(pair, threshold))


def jaccard_loss(pair: MaskPair, threshold: int = DEFAULT_THRESHOLD) -> float:
    return 1.0 - iou(pair, threshold)


@dataclass
class EvalReport:
    per_image: list[tuple[str, float]] = field(default_factory=list)
    aggregate_iou: float | None = None
    mean_iou: float | None = None
    counts: tuple[int, int, int] = (0, 0, 0)
    skipped: list[str] = field(default_factory=list)
    warnings: int = 0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_image"] = [{"name": n, "iou": v} for n, v in self.per_image]
        d["counts"] = dict(zip(("tp", "fp", "fn"), self.counts))
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def mask_stem(path: Path) -> str:
    """Pairing key: file stem with a trailing ``_mask`` removed."""
    stem = path.stem
    return stem[: -len("_mask")] if stem.endswith("_mask") else stem


def _index(directory: Path) -> dict[str, Path]:
    if not directory.is_dir():
        raise FileNotFoundError(f"mask directory {directory} does not exist")
    out: dict[str, Path] = {}
    for p in sorted(directory.glob("*.png")):
        key = mask_stem(p)
        if key in out:
            raise FormatError(f"two files map to stem {key!r}: {out[key].name}, {p.name}")
        out[key] = p
    return out


def _load_mask(path: Path) -> np.ndarray:
    arr, _ = read_png(path)
    if arr.ndim == 3:
        raise FormatError(f"{path}: expected a single-channel mask")
    return arr


def evaluate_dirs(pred_dir, gt_dir, threshold: int = DEFAULT_THRESHOLD) -> EvalReport:
    """Score every stem-matched mask pair of two directories.

    Unmatched files are listed in ``skipped``; each adds one warning.  When no
    stem matches, the report carries an ``error`` and no scores.
    """
    pred, gt = _index(Path(pred_dir)), _index(Path(gt_dir))
    common = sorted(pred.keys() & gt.keys())
    skipped = sorted(f"pred:{pred[k].name}" for k in pred.keys() - gt.keys())
    skipped += sorted(f"gt:{gt[k].name}" for k in gt.keys() - pred.keys())
    report = EvalReport(skipped=skipped, warnings=len(skipped))
    if not common:
        report.error = "no prediction/ground-truth files share a filename stem"
        return report
    tp = fp = fn = 0
    for key in common:
        c = confusion_counts(MaskPair(_load_mask(pred[key]), _load_mask(gt[key])), threshold)
        tp, fp, fn = tp + c[0], fp + c[1], fn + c[2]
        report.per_image.append((key, _ratio(*c)))
    report.counts = (tp, fp, fn)
    report.aggregate_iou = _ratio(tp, fp, fn)
    report.mean_iou = float(np.mean([v for _, v in report.per_image]))
    return report
