"""Split-detection metrics, threshold calibration and the LDA-on-HSV baseline.

Every metric is computed over bean pixels only (ground-truth Tray pixels
are excluded), pooled across images unless stated otherwise.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptySet,
    EmptyUnion,
    LengthMismatch,
    NoPositives,
    SingleClass,
    ZeroTruth,
)
from .imagecore import LabelMask, PixelClass, ScoreMap, hsv_features
from .measures import DEFAULT_BINS, DEFAULT_CONNECTIVITY, bsh, connected_components, emd_1d

GRID_STEP = 0.01


def average_precision(scores, labels) -> float:
    """Mean precision at the rank of each positive, ranking by descending score.

    Tied scores are treated as one block evaluated at its end, so a
    positive never gets credit from a tie with a negative.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    if scores.shape != labels.shape:
        raise LengthMismatch(f"{scores.size} scores vs {labels.size} labels")
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise NoPositives("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    s, l = scores[order], labels[order]
    tp = np.cumsum(l)
    # index of the last element of each tie block
    _, first, counts = np.unique(-s, return_index=True, return_counts=True)
    block_end = np.repeat(first + counts - 1, counts)
    precision = tp[block_end] / (block_end + 1)
    return float(precision[l].sum() / n_pos)


def iou(pred, truth) -> float:
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if pred.shape != truth.shape:
        raise DimensionMismatch(f"{pred.shape} vs {truth.shape}")
    union = np.count_nonzero(pred | truth)
    if union == 0:
        raise EmptyUnion("both masks are empty")
    return np.count_nonzero(pred & truth) / union


def bsr_percent_error(pred: Sequence[float], truth: Sequence[float],
                      exclude_zero: bool = False) -> float:
    """Mean over images of 100 * |pred - truth| / truth.

    A zero truth value raises :class:`ZeroTruth` naming the offending
    images, unless ``exclude_zero`` drops them.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise LengthMismatch(f"{pred.size} predictions vs {truth.size} truths")
    zero = truth <= 0
    if zero.any():
        if not exclude_zero:
            raise ZeroTruth(f"truth BSR is 0 for image index(es) {np.flatnonzero(zero).tolist()}")
        pred, truth = pred[~zero], truth[~zero]
        if truth.size == 0:
            raise ZeroTruth("every image has zero truth BSR")
    if truth.size == 0:
        raise EmptySet("no images")
    return float(np.mean(100.0 * np.abs(pred - truth) / truth))


def split_probability(scores) -> np.ndarray:
    """Split-class probability map from a ScoreMap (last channel) or a 2-D array."""
    if isinstance(scores, ScoreMap):
        return scores.softmax()[..., -1]
    arr = np.asarray(scores, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatch("expected a ScoreMap or an HxW probability array")
    return arr


def threshold_grid(step: float = GRID_STEP) -> np.ndarray:
    n = int(round(1.0 / step))
    return np.round(np.arange(n + 1) * step, 10)


@dataclass
class CalibrationCurve:
    thresholds: np.ndarray
    iou: np.ndarray
    bsr_error_pct: np.ndarray
    criterion: str
    chosen: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("threshold,iou,bsr_error_pct\n")
        for t, i, e in zip(self.thresholds, self.iou, self.bsr_error_pct):
            buf.write(f"{t:.10g},{i!r},{e!r}\n")
        return buf.getvalue()

    def value_at_chosen(self) -> tuple[float, float]:
        k = int(np.flatnonzero(self.thresholds == self.chosen)[0])
        return float(self.iou[k]), float(self.bsr_error_pct[k])


def _aligned(scored):
    out = []
    for scores, mask in scored:
        prob = split_probability(scores)
        if prob.shape != mask.labels.shape:
            raise DimensionMismatch(f"score map {prob.shape} vs mask {mask.labels.shape}")
        bean = mask.labels != PixelClass.TRAY
        out.append((prob[bean], mask.labels[bean] == PixelClass.SPLIT))
    return out


def calibrate_threshold(scored, criterion: str = "iou", step: float = GRID_STEP,
                        exclude_zero: bool = False) -> CalibrationCurve:
    """Sweep split-probability thresholds over [0, 1].

    ``scored`` is a sequence of ``(scores, LabelMask)``.  A pixel is
    predicted split when its probability is >= the threshold.  IoU is
    pooled over all images; BSR error is averaged per image.  Ties pick
    the lowest threshold.
    """
    if criterion not in ("iou", "bsr"):
        raise ValueError("criterion must be 'iou' or 'bsr'")
    pairs = _aligned(scored)
    if not pairs:
        raise EmptySet("calibration needs at least one scored image")
    probs = np.concatenate([p for p, _ in pairs])
    truth = np.concatenate([t for _, t in pairs])
    truth_bsr = [t.mean() if t.size else 0.0 for _, t in pairs]
    grid = threshold_grid(step)
    ious = np.empty(grid.size)
    errs = np.empty(grid.size)
    for k, t in enumerate(grid):
        pred = probs >= t
        union = np.count_nonzero(pred | truth)
        ious[k] = np.count_nonzero(pred & truth) / union if union else math.nan
        pred_bsr = [np.mean(p >= t) if p.size else 0.0 for p, _ in pairs]
        errs[k] = bsr_percent_error(pred_bsr, truth_bsr, exclude_zero)
    if criterion == "iou":
        key = np.where(np.isnan(ious), -np.inf, ious)
        k = int(np.argmax(key))
    else:
        k = int(np.argmin(errs))
    return CalibrationCurve(grid, ious, errs, criterion, float(grid[k]))


@dataclass(frozen=True)
class MetricsReport:
    ap: float
    iou: float
    bsr_error_pct: float
    bsh_error: float
    method: str = "pyramid"

    CSV_HEADER = "method,ap,iou,bsr_error_pct,bsh_error"

    def csv_row(self) -> str:
        return f"{self.method},{self.ap!r},{self.iou!r},{self.bsr_error_pct!r},{self.bsh_error!r}"


def metrics_csv(reports) -> str:
    return "\n".join([MetricsReport.CSV_HEADER] + [r.csv_row() for r in reports]) + "\n"


def evaluate_split_scores(score_maps, masks: Sequence[LabelMask], threshold: float,
                          max_split_area: float, n_bins: int = DEFAULT_BINS,
                          connectivity: int = DEFAULT_CONNECTIVITY, method: str = "pyramid",
                          exclude_zero: bool = False) -> MetricsReport:
    """AP, pooled IoU, BSR percent error and mean BSH EMD on bean pixels.

    Predicted splits are ``score >= threshold`` restricted to ground-truth
    bean pixels, so both sides share the same bean area.
    """
    if len(score_maps) != len(masks):
        raise LengthMismatch("one score map per mask required")
    if not masks:
        raise EmptySet("no images to evaluate")
    all_scores, all_truth, all_pred = [], [], []
    pred_bsr, truth_bsr, emds = [], [], []
    for scores, mask in zip(score_maps, masks):
        s = split_probability(scores)
        if s.shape != mask.labels.shape:
            raise DimensionMismatch(f"score map {s.shape} vs mask {mask.labels.shape}")
        bean = mask.labels != PixelClass.TRAY
        truth = mask.labels == PixelClass.SPLIT
        pred = (s >= threshold) & bean
        n_bean = int(bean.sum())
        all_scores.append(s[bean])
        all_truth.append(truth[bean])
        all_pred.append(pred[bean])
        pred_bsr.append(pred.sum() / n_bean)
        truth_bsr.append(truth.sum() / n_bean)
        hp = bsh([c.area for c in connected_components(pred, connectivity)], n_bean,
                 max_split_area, n_bins)
        ht = bsh([c.area for c in connected_components(truth, connectivity)], n_bean,
                 max_split_area, n_bins)
        emds.append(emd_1d(hp, ht))
    truth_all = np.concatenate(all_truth)
    return MetricsReport(
        ap=average_precision(np.concatenate(all_scores), truth_all),
        iou=iou(np.concatenate(all_pred), truth_all),
        bsr_error_pct=bsr_percent_error(pred_bsr, truth_bsr, exclude_zero),
        bsh_error=float(np.mean(emds)),
        method=method,
    )


@dataclass(frozen=True)
class LdaModel:
    weights: np.ndarray  # over (hue, saturation, value)
    bias: float


def lda_fit(features, labels) -> LdaModel:
    """Two-class Fisher discriminant with a small ridge on the pooled covariance.

    Oriented so class 1 scores high; the zero level passes through the
    midpoint of the class means.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels).astype(bool).ravel()
    if x.ndim != 2 or x.shape[0] != y.size:
        raise LengthMismatch("features must be (n, d) with one label per row")
    n1 = int(y.sum())
    n0 = y.size - n1
    if n0 == 0 or n1 == 0:
        raise SingleClass("both classes must be present")
    mu0, mu1 = x[~y].mean(axis=0), x[y].mean(axis=0)
    d0, d1 = x[~y] - mu0, x[y] - mu1
    dof = max(y.size - 2, 1)
    cov = (d0.T @ d0 + d1.T @ d1) / dof
    d = x.shape[1]
    ridge = 1e-6 * np.trace(cov) / d
    w = np.linalg.solve(cov + ridge * np.eye(d), mu1 - mu0)
    return LdaModel(w, float(-w @ (mu0 + mu1) / 2))


def lda_score(model: LdaModel, features) -> np.ndarray | float:
    x = np.asarray(features, dtype=np.float64)
    s = x @ model.weights + model.bias
    return float(s) if np.ndim(s) == 0 else s


def bean_pixel_features(image, mask: LabelMask):
    """HSV features and split labels of the ground-truth bean pixels."""
    bean = mask.labels != PixelClass.TRAY
    return hsv_features(image.pixels[bean]), mask.labels[bean] == PixelClass.SPLIT


def lda_baseline(train_pairs, val_pairs, max_split_area: float, n_bins: int = DEFAULT_BINS,
                 connectivity: int = DEFAULT_CONNECTIVITY,
                 exclude_zero: bool = False) -> tuple[LdaModel, MetricsReport]:
    """Fit LDA on train bean pixels, evaluate on val at the zero decision level."""
    feats, labs = zip(*(bean_pixel_features(i, m) for i, m in train_pairs))
    model = lda_fit(np.concatenate(feats), np.concatenate(labs))
    maps = [lda_score(model, hsv_features(img.pixels)) for img, _ in val_pairs]
    masks = [m for _, m in val_pairs]
    report = evaluate_split_scores(maps, masks, 0.0, max_split_area, n_bins, connectivity,
                                   method="lda", exclude_zero=exclude_zero)
    return model, report
