"""Segmentation and ranking metrics for defect maps.

All threshold sweeps share one fixed grid, 0.01 to 0.99 in steps of 0.01.
Predictions are float maps in [0, 1]; a pixel is positive at threshold t
when its value is >= t.  Ground truth is boolean.

* AIU: the interval-averaged intersection over union.
* ODS / OIS: best F-measure at a single dataset-wide threshold versus the
  mean of per-image best F-measures.  Matching tolerates small localization
  error when ``tolerance`` > 0 (pixels match within that Euclidean
  distance); the default is exact matching.
* AUROC: Mann-Whitney statistic computed from tie-averaged ranks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import distance_transform_edt
from scipy.stats import rankdata

from .errors import DimensionError, MetricError

THRESHOLDS = np.arange(1, 100) / 100.0


def _as_pred(pred: np.ndarray) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float64)
    if pred.ndim != 2:
        raise DimensionError(f"prediction map must be 2-D, got shape {pred.shape}")
    if not np.all(np.isfinite(pred)) or pred.min() < 0.0 or pred.max() > 1.0:
        raise MetricError("prediction map values must lie in [0, 1]")
    return pred


def _as_gt(gt: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    gt = np.asarray(gt)
    if gt.shape != shape:
        raise DimensionError(f"ground truth shape {gt.shape} does not match prediction {shape}")
    return gt.astype(bool)


def iou(pred_bin: np.ndarray, gt: np.ndarray) -> float:
    """Intersection over union of two boolean masks; two empty masks give 1."""
    pred_bin = np.asarray(pred_bin, dtype=bool)
    gt = _as_gt(gt, pred_bin.shape)
    union = np.logical_or(pred_bin, gt).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(pred_bin, gt).sum() / union)


def aiu(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean IoU over the fixed threshold grid for one image."""
    pred = _as_pred(pred)
    gt = _as_gt(gt, pred.shape)
    total = 0.0
    for t in THRESHOLDS:
        total += iou(pred >= t, gt)
    return total / THRESHOLDS.size


def _match_counts(pred_bin: np.ndarray, gt: np.ndarray, tolerance: float):
    """Counts for precision/recall under distance-``tolerance`` matching.

    Returns (n_pred, n_gt, matched_pred, matched_gt): how many predicted
    pixels fall within the tolerance of ground truth and vice versa.  With
    tolerance 0 both matched counts equal the plain intersection.
    """
    n_pred = int(pred_bin.sum())
    n_gt = int(gt.sum())
    if n_pred == 0 or n_gt == 0:
        return n_pred, n_gt, 0, 0
    if tolerance <= 0:
        inter = int(np.logical_and(pred_bin, gt).sum())
        return n_pred, n_gt, inter, inter
    near_gt = distance_transform_edt(~gt) <= tolerance
    near_pred = distance_transform_edt(~pred_bin) <= tolerance
    return (n_pred, n_gt,
            int(np.logical_and(pred_bin, near_gt).sum()),
            int(np.logical_and(gt, near_pred).sum()))


def _precision_recall_f(n_pred, n_gt, matched_pred, matched_gt):
    if n_pred == 0:
        precision = 1.0 if n_gt == 0 else 0.0
    else:
        precision = matched_pred / n_pred
    if n_gt == 0:
        recall = 1.0 if n_pred == 0 else 0.0
    else:
        recall = matched_gt / n_gt
    denom = precision + recall
    f = 2.0 * precision * recall / denom if denom > 0.0 else 0.0
    # plain floats so downstream repr() serialization stays clean
    return float(precision), float(recall), float(f)


def f_measure(pred_bin: np.ndarray, gt: np.ndarray, tolerance: float = 0.0) -> float:
    """F-measure of one binarized map against ground truth."""
    pred_bin = np.asarray(pred_bin, dtype=bool)
    gt = _as_gt(gt, pred_bin.shape)
    return _precision_recall_f(*_match_counts(pred_bin, gt, tolerance))[2]


def _f_table(preds, gts, tolerance: float):
    """Per-image, per-threshold counts; shape [n_images, n_thresholds, 4]."""
    if len(preds) != len(gts):
        raise DimensionError(f"{len(preds)} predictions vs {len(gts)} ground truths")
    if not preds:
        raise MetricError("no prediction maps to evaluate")
    table = np.zeros((len(preds), THRESHOLDS.size, 4))
    for i, (pred, gt) in enumerate(zip(preds, gts)):
        pred = _as_pred(pred)
        gt = _as_gt(gt, pred.shape)
        for j, t in enumerate(THRESHOLDS):
            table[i, j] = _match_counts(pred >= t, gt, tolerance)
    return table


def _f_per_image(table: np.ndarray) -> np.ndarray:
    out = np.zeros(table.shape[:2])
    for i in range(table.shape[0]):
        for j in range(table.shape[1]):
            out[i, j] = _precision_recall_f(*table[i, j])[2]
    return out


def _mean_over_images(per_image: np.ndarray) -> np.ndarray:
    # plain sequential accumulation so results match loop-based references bit
    # for bit regardless of image count
    means = np.zeros(per_image.shape[1])
    for row in per_image:
        means += row
    return means / per_image.shape[0]


def ods(preds, gts, tolerance: float = 0.0) -> tuple[float, float]:
    """Best dataset-level F at one shared threshold: (threshold, F).

    The dataset score at a threshold is the mean of per-image F-measures;
    ties resolve to the lowest threshold.
    """
    per_image = _f_per_image(_f_table(preds, gts, tolerance))
    means = _mean_over_images(per_image)
    j = int(np.argmax(means))
    return float(THRESHOLDS[j]), float(means[j])


def ois(preds, gts, tolerance: float = 0.0) -> float:
    """Mean over images of each image's best F-measure on the grid."""
    per_image = _f_per_image(_f_table(preds, gts, tolerance))
    total = 0.0
    for row in per_image:
        total += float(row.max())
    return total / per_image.shape[0]


def auroc(scores, labels) -> float:
    """Area under the ROC curve via the rank-based Mann-Whitney statistic."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise DimensionError(f"{scores.size} scores vs {labels.size} labels")
    if not np.all(np.isfinite(scores)):
        raise MetricError("auroc: non-finite score")
    labels = labels.astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("auroc needs both positive and negative samples")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass
class PRPoint:
    threshold: float
    precision: float
    recall: float
    f: float


def _fmt(value) -> str:
    return "" if value is None else repr(value)


@dataclass
class MetricsReport:
    aiu: float | None
    ods_threshold: float | None
    ods: float | None
    ois: float | None
    auroc: float | None
    n_images: int
    tolerance: float
    curve: list[PRPoint] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["threshold,precision,recall,f_measure"]
        for p in self.curve:
            lines.append(f"{repr(p.threshold)},{repr(p.precision)},{repr(p.recall)},{repr(p.f)}")
        summary = (f"# aiu={_fmt(self.aiu)} ods_threshold={_fmt(self.ods_threshold)}"
                   f" ods={_fmt(self.ods)} ois={_fmt(self.ois)} auroc={_fmt(self.auroc)}"
                   f" n_images={self.n_images} tolerance={repr(self.tolerance)}")
        lines.append(summary)
        return "\n".join(lines) + "\n"

    def summary_csv(self) -> str:
        header = "aiu,ods_threshold,ods,ois,auroc,n_images,tolerance"
        row = ",".join([_fmt(self.aiu), _fmt(self.ods_threshold), _fmt(self.ods),
                        _fmt(self.ois), _fmt(self.auroc), str(self.n_images),
                        repr(self.tolerance)])
        return header + "\n" + row + "\n"


def evaluate(preds=None, gts=None, scores=None, labels=None,
             tolerance: float = 0.0) -> MetricsReport:
    """Full report over prediction maps and/or per-image scores.

    Segmentation metrics (AIU, ODS, OIS and the aggregate PR curve) come
    from ``preds``/``gts``; AUROC from ``scores``/``labels``.  Either side
    may be omitted, but not both.
    """
    if preds is None and scores is None:
        raise MetricError("evaluate needs prediction maps, per-image scores, or both")

    aiu_value = ods_t = ods_f = ois_value = None
    n_images = 0
    curve: list[PRPoint] = []
    if preds is not None:
        if gts is None:
            raise MetricError("prediction maps need matching ground-truth masks")
        table = _f_table(preds, gts, tolerance)
        per_image = _f_per_image(table)
        means = _mean_over_images(per_image)
        j_best = int(np.argmax(means))
        aiu_total = 0.0
        for pred, gt in zip(preds, gts):
            aiu_total += aiu(pred, gt)
        aiu_value = aiu_total / per_image.shape[0]
        ods_t = float(THRESHOLDS[j_best])
        ods_f = float(means[j_best])
        ois_total = 0.0
        for row in per_image:
            ois_total += float(row.max())
        ois_value = ois_total / per_image.shape[0]
        n_images = per_image.shape[0]
        for j, t in enumerate(THRESHOLDS):
            p, r, f = _precision_recall_f(*table[:, j, :].sum(axis=0))
            curve.append(PRPoint(float(t), p, r, f))

    area = None
    if scores is not None or labels is not None:
        if scores is None or labels is None:
            raise MetricError("auroc needs both scores and labels")
        area = auroc(scores, labels)
        n_images = max(n_images, np.asarray(scores).size)

    return MetricsReport(
        aiu=aiu_value,
        ods_threshold=ods_t,
        ods=ods_f,
        ois=ois_value,
        auroc=area,
        n_images=n_images,
        tolerance=float(tolerance),
        curve=curve,
    )
