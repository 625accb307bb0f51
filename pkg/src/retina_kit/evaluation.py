"""COCO-protocol average precision over an IoU threshold sweep.

Matching is greedy in score order per image; true/false-positive flags are
pooled globally (score descending, then image id, then per-image index) and
summarized with 101-point interpolated AP. mAP averages AP over the sweep;
a single pedestrian class means there is no class-averaging step.
"""

from __future__ import annotations

import numpy as np

from .boxes import boxes_to_array, iou_matrix
from .errors import ValidationError
from .postprocess import Detection, EvalConfig

RECALL_POINTS = 101


def match_detections(dets: list[Detection], gts, iou_thresh: float):
    """Greedy TP/FP flags for one image and one class.

    dets must arrive sorted by descending score. Each detection takes the
    unmatched gt of highest IoU when that IoU is >= iou_thresh (ties to the
    lower gt index); every gt matches at most one detection.

    Returns (tp_flags bool (D,), gt_matched bool (G,)).
    """
    gt_arr = boxes_to_array(gts)
    d = len(dets)
    g = gt_arr.shape[0]
    tp = np.zeros(d, dtype=bool)
    matched = np.zeros(g, dtype=bool)
    if d == 0 or g == 0:
        return tp, matched
    det_arr = boxes_to_array([det.box for det in dets])
    ious = iou_matrix(det_arr, gt_arr)
    for i in range(d):
        row = np.where(matched, -1.0, ious[i])
        j = int(np.argmax(row))
        if row[j] >= iou_thresh:
            tp[i] = True
            matched[j] = True
    return tp, matched


def average_precision(tp_flags, total_gt_count: int) -> float:
    """101-point interpolated AP from flags ordered by descending score.

    AP = mean over r in {0.00, 0.01, ..., 1.00} of the maximum precision at
    recall >= r, taking 0 when that recall is never attained. Zero ground
    truth yields 0 (callers flag the undefined case in reports).
    """
    if total_gt_count < 0:
        raise ValidationError(f"total_gt_count must be >= 0, got {total_gt_count}")
    flags = np.asarray(tp_flags, dtype=bool)
    if total_gt_count == 0 or flags.size == 0:
        return 0.0
    tp_cum = np.cumsum(flags)
    precision = tp_cum / np.arange(1, flags.size + 1, dtype=np.float64)
    recall = tp_cum / float(total_gt_count)
    best_at_or_after = np.maximum.accumulate(precision[::-1])[::-1]
    first_k = np.searchsorted(recall, np.arange(RECALL_POINTS) / 100.0, side="left")
    vals = [float(best_at_or_after[k]) if k < flags.size else 0.0 for k in first_k]
    return sum(vals) / float(RECALL_POINTS)


def _sorted_image_dets(dets: list[Detection]) -> list[Detection]:
    return sorted(dets, key=lambda d: -d.score)


def coco_map(all_dets: list[Detection], all_gts: dict, config: EvalConfig) -> dict:
    """Evaluate detections against {image_id: [BBox, ...]} ground truth.

    Returns a JSON-ready report with the per-threshold AP array, their mean,
    and AP at 0.50 / 0.75 when those thresholds are in the sweep.
    """
    known = set(all_gts)
    for det in all_dets:
        if det.image_id not in known:
            raise ValidationError(f"detection references unknown image_id {det.image_id}")

    total_gt = sum(len(v) for v in all_gts.values())
    by_image: dict = {img_id: [] for img_id in all_gts}
    for det in all_dets:
        by_image[det.image_id].append(det)

    sorted_dets = {img_id: _sorted_image_dets(v) for img_id, v in by_image.items()}

    aps = []
    for thresh in config.iou_thresholds:
        pooled = []
        for img_id in sorted(all_gts):
            dets_i = sorted_dets[img_id]
            tp, _ = match_detections(dets_i, all_gts[img_id], thresh)
            for idx, det in enumerate(dets_i):
                pooled.append((-det.score, img_id, idx, bool(tp[idx])))
        pooled.sort(key=lambda row: row[:3])
        flags = [row[3] for row in pooled]
        aps.append(average_precision(flags, total_gt))

    def ap_at(value):
        for t, ap in zip(config.iou_thresholds, aps):
            if abs(t - value) < 1e-9:
                return ap
        return None

    return {
        "iou_thresholds": list(config.iou_thresholds),
        "ap_per_threshold": aps,
        "map": sum(aps) / float(len(aps)),
        "ap50": ap_at(0.50),
        "ap75": ap_at(0.75),
        "num_images": len(all_gts),
        "total_gts": total_gt,
        "undefined": total_gt == 0 and not all_dets,
    }
