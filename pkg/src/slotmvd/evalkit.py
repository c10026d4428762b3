"""Edit-difference segmentation pipeline and segmentation/render metrics.

Pipeline: per-edit pixel difference -> per-pixel softmax across the K edits +
median filter -> per-pixel argmax -> FG-ARI / FG-mIoU against ground-truth
instance masks (foreground = instance id > 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from slotmvd.errors import ContractViolation
from slotmvd.kernels import median_filter2d
from slotmvd.numerics.assignment import linear_assignment

PSNR_CAP_DB = 99.0


def kernel_for_width(width: int) -> int:
    """Median kernel: about 5% of image width, odd, at least 3."""
    k = int(round(0.05 * width))
    if k % 2 == 0:
        k += 1
    return max(k, 3)


@dataclass
class SegMetricsConfig:
    median_kernel: int | None = None  # None: derive from width
    min_confidence: float | None = None  # optional threshold; below -> background

    def kernel(self, width: int) -> int:
        k = self.median_kernel if self.median_kernel is not None else kernel_for_width(width)
        if k < 1 or k % 2 == 0:
            raise ContractViolation(f"median kernel must be odd and >= 1, got {k}")
        return k


# ---------------------------------------------------------------------------
# pipeline steps
# ---------------------------------------------------------------------------


def edit_difference(unedited: np.ndarray, edited: np.ndarray) -> np.ndarray:
    """Per-pixel absolute difference averaged across color channels."""
    if unedited.shape != edited.shape:
        raise ContractViolation("edit_difference shape mismatch")
    return np.abs(unedited.astype(np.float64) - edited.astype(np.float64)).mean(axis=-1)


def smooth(diff_maps: np.ndarray, kernel: int) -> np.ndarray:
    """Softmax across the K edits per pixel, then a per-map 2-D median filter.

    diff_maps: (K, ..., H, W). The softmax uses temperature 1 on raw
    differences; borders replicate.
    """
    diff_maps = np.asarray(diff_maps, dtype=np.float64)
    k = diff_maps.shape[0]
    if k < 2:
        raise ContractViolation("smoothing needs at least 2 edits")
    m = diff_maps.max(axis=0, keepdims=True)
    e = np.exp(diff_maps - m)
    soft = e / e.sum(axis=0, keepdims=True)
    lead = soft.shape[1:-2]
    flat = soft.reshape(k, -1, *soft.shape[-2:])
    out = np.empty_like(flat)
    for ki in range(k):
        for li in range(flat.shape[1]):
            out[ki, li] = median_filter2d(flat[ki, li], kernel)
    return out.reshape(k, *lead, *soft.shape[-2:])


def assign(smoothed: np.ndarray, min_confidence: float | None = None) -> np.ndarray:
    """Per-pixel argmax across K maps; ties break to the lowest index.

    With min_confidence set, pixels whose winning value falls below the
    threshold are labelled -1 (treated as background).
    """
    seg = np.argmax(smoothed, axis=0).astype(np.int64)
    if min_confidence is not None:
        best = np.max(smoothed, axis=0)
        seg = np.where(best >= min_confidence, seg, -1)
    return seg


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def _comb2(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.float64)
    return x * (x - 1.0) / 2.0


def ari(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Adjusted Rand Index over masked elements."""
    pred = np.asarray(pred).reshape(-1)
    gt = np.asarray(gt).reshape(-1)
    if pred.shape != gt.shape:
        raise ContractViolation("ari label arrays differ in length")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool).reshape(-1)
        pred = pred[mask]
        gt = gt[mask]
    n = pred.size
    if n < 2:
        raise ContractViolation("ari undefined on fewer than 2 elements")
    _, pi = np.unique(pred, return_inverse=True)
    _, gi = np.unique(gt, return_inverse=True)
    npred = pi.max() + 1
    ngt = gi.max() + 1
    table = np.zeros((npred, ngt), dtype=np.int64)
    np.add.at(table, (pi, gi), 1)
    index = _comb2(table).sum()
    sum_a = _comb2(table.sum(axis=1)).sum()
    sum_b = _comb2(table.sum(axis=0)).sum()
    total = _comb2(np.array([n]))[0]
    expected = sum_a * sum_b / total
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        return 1.0  # both partitions trivial and identical in structure
    return float((index - expected) / (max_index - expected))


def ari_2d(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray) -> float:
    """Per-view ARI averaged over views with at least 2 foreground pixels."""
    scores = []
    for v in range(pred.shape[0]):
        if mask[v].sum() >= 2:
            scores.append(ari(pred[v], gt[v], mask[v]))
    if not scores:
        raise ContractViolation("no view has enough foreground pixels for 2-D ARI")
    return float(np.mean(scores))


def miou(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Mean IoU over ground-truth foreground instances under optimal matching.

    Predicted segments are matched one-to-one to GT instances by maximizing
    total IoU; unmatched GT instances contribute 0.
    """
    pred = np.asarray(pred).reshape(-1)
    gt = np.asarray(gt).reshape(-1)
    if pred.shape != gt.shape:
        raise ContractViolation("miou label arrays differ in length")
    if mask is None:
        mask = gt > 0
    else:
        mask = np.asarray(mask, dtype=bool).reshape(-1)
    pred = pred[mask]
    gt = gt[mask]
    if pred.size == 0:
        raise ContractViolation("miou has no foreground pixels")
    gt_ids = np.unique(gt)
    pred_ids = np.unique(pred)
    iou = np.zeros((len(gt_ids), len(pred_ids)))
    for i, g in enumerate(gt_ids):
        gsel = gt == g
        for j, pr in enumerate(pred_ids):
            psel = pred == pr
            inter = np.count_nonzero(gsel & psel)
            union = np.count_nonzero(gsel | psel)
            iou[i, j] = inter / union if union else 0.0
    n = max(len(gt_ids), len(pred_ids))
    cost = np.zeros((n, n))
    cost[: len(gt_ids), : len(pred_ids)] = -iou
    perm, _ = linear_assignment(cost)
    total = 0.0
    for i in range(len(gt_ids)):
        j = perm[i]
        if j < len(pred_ids):
            total += iou[i, j]
    return float(total / len(gt_ids))


def psnr(pred: np.ndarray, gt: np.ndarray) -> float:
    """10 log10(1 / MSE) for images in [0, 1]; identical images cap at 99 dB."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ContractViolation("psnr shape mismatch")
    mse = float(np.mean((pred - gt) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return float(min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB))


# ---------------------------------------------------------------------------
# end-to-end edit evaluation
# ---------------------------------------------------------------------------


@dataclass
class EditReport:
    unedited: np.ndarray  # (L, H, W, 3)
    edited: np.ndarray  # (K, L, H, W, 3)
    diff_maps: np.ndarray  # (K, L, H, W)
    smoothed: np.ndarray  # (K, L, H, W)
    segmentation: np.ndarray  # (L, H, W)
    metrics: dict = field(default_factory=dict)


def evaluate_edits(
    unedited: np.ndarray,
    edited: np.ndarray,
    gt_ids: np.ndarray,
    config: SegMetricsConfig | None = None,
) -> EditReport:
    """Run the 3-step edit-segmentation protocol and score against GT masks.

    unedited: (L, H, W, 3); edited: (K, L, H, W, 3); gt_ids: (L, H, W).
    """
    config = config or SegMetricsConfig()
    edited = np.asarray(edited)
    if edited.ndim != 5:
        raise ContractViolation("edited must be (K, L, H, W, 3)")
    k = edited.shape[0]
    if k < 2:
        raise ContractViolation("need at least 2 edited view sets")
    diffs = np.stack([edit_difference(unedited, edited[i]) for i in range(k)])
    kernel = config.kernel(unedited.shape[-2])
    smoothed = smooth(diffs, kernel)
    seg = assign(smoothed, config.min_confidence)
    fg = gt_ids > 0
    metrics = {
        "fg_ari": ari(seg, gt_ids, fg),
        "fg_miou": miou(seg, gt_ids, fg),
        "fg_ari_2d": ari_2d(seg, gt_ids, fg),
        "kernel": kernel,
    }
    return EditReport(unedited, edited, diffs, smoothed, seg, metrics)
