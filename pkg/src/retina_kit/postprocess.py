"""Decode raw head outputs into scored detections, plus greedy NMS.

Per level: sigmoid scores, drop below score_threshold, keep the top
pre_nms_topk by score (ties to the lower anchor index), decode the kept
deltas against their anchors, clip to the image, then greedy NMS per class.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .anchors import AnchorGrid
from .boxes import BBox, boxes_to_array, clip_boxes, decode_boxes, iou_matrix
from .errors import ValidationError
from .layers import sigmoid
from .network import flatten_level_outputs

_DEFAULT_SWEEP = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))


@dataclass
class EvalConfig:
    iou_thresholds: tuple[float, ...] = _DEFAULT_SWEEP
    score_threshold: float = 0.05
    pre_nms_topk: int = 1000
    nms_iou: float = 0.5
    max_detections_per_image: int = 100

    def __post_init__(self):
        self.iou_thresholds = tuple(float(t) for t in self.iou_thresholds)
        if not self.iou_thresholds:
            raise ValidationError("iou_thresholds must be non-empty")
        if any(not (0.0 < t < 1.0) for t in self.iou_thresholds):
            raise ValidationError(f"iou_thresholds must lie in (0, 1), got {self.iou_thresholds}")
        if any(b <= a for a, b in zip(self.iou_thresholds, self.iou_thresholds[1:])):
            raise ValidationError("iou_thresholds must be strictly increasing")
        if not (0.0 <= self.score_threshold <= 1.0):
            raise ValidationError(f"score_threshold must be in [0, 1], got {self.score_threshold}")
        if self.pre_nms_topk <= 0 or self.max_detections_per_image <= 0:
            raise ValidationError("pre_nms_topk and max_detections_per_image must be positive")
        if not (0.0 <= self.nms_iou <= 1.0):
            raise ValidationError(f"nms_iou must be in [0, 1], got {self.nms_iou}")


@dataclass(frozen=True)
class Detection:
    box: BBox
    score: float
    class_id: int = 0
    image_id: int = 0

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"detection score must be in [0, 1], got {self.score}")


def nms_indices(boxes: np.ndarray, scores: np.ndarray, iou_thresh: float, max_out: int):
    """Greedy keep-indices; ties go to the lower original index."""
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
    boxes = boxes_to_array(boxes)
    keep = []
    while order.size and len(keep) < max_out:
        i = int(order[0])
        keep.append(i)
        if order.size == 1:
            break
        rest = order[1:]
        ious = iou_matrix(boxes[i : i + 1], boxes[rest])[0]
        order = rest[ious <= iou_thresh]
    return keep


def nms(dets: list[Detection], iou_thresh: float, max_out: int) -> list[Detection]:
    """Greedy NMS over one image and one class, best score first."""
    if not dets:
        return []
    boxes = boxes_to_array([d.box for d in dets])
    scores = np.array([d.score for d in dets], dtype=np.float64)
    return [dets[i] for i in nms_indices(boxes, scores, iou_thresh, max_out)]


def decode_detections(
    outputs,
    grid: AnchorGrid,
    config: EvalConfig,
    image_w: float,
    image_h: float,
    image_id: int = 0,
) -> list[Detection]:
    """Head maps for one image -> final detections, NMS included."""
    n_levels = len(grid.per_level_counts)
    if len(outputs) != n_levels:
        raise ValidationError(f"expected {n_levels} level outputs, got {len(outputs)}")
    rows0, cols0 = grid.per_level_shapes[0]
    num_anchors = grid.per_level_counts[0] // (rows0 * cols0)
    for li, (cls_map, box_map) in enumerate(outputs):
        rows, cols = grid.per_level_shapes[li]
        if cls_map.shape[1:] != (rows, cols) or box_map.shape[1:] != (rows, cols):
            raise ValidationError(
                f"level {li} spatial dims {cls_map.shape[1:]} do not match grid {(rows, cols)}"
            )
        if cls_map.shape[0] % num_anchors or box_map.shape[0] != num_anchors * 4:
            raise ValidationError(f"level {li} channel counts do not match {num_anchors} anchors")
    num_classes = outputs[0][0].shape[0] // num_anchors

    flat_cls, flat_box = flatten_level_outputs(outputs, num_anchors, num_classes)
    scores_all = sigmoid(flat_cls.astype(np.float64))

    cand_boxes, cand_scores, cand_classes = [], [], []
    for li in range(n_levels):
        sl = grid.level_slice(li)
        level_scores = scores_all[sl]
        level_deltas = flat_box[sl]
        level_anchors = grid.anchors[sl]
        for k in range(num_classes):
            s = level_scores[:, k]
            idx = np.nonzero(s >= config.score_threshold)[0]
            if idx.size == 0:
                continue
            order = np.argsort(-s[idx], kind="stable")[: config.pre_nms_topk]
            chosen = idx[order]
            decoded = decode_boxes(level_anchors[chosen], level_deltas[chosen])
            decoded = clip_boxes(decoded, image_w, image_h)
            cand_boxes.append(decoded)
            cand_scores.append(s[chosen])
            cand_classes.append(np.full(chosen.size, k, dtype=np.int64))
    if not cand_boxes:
        return []

    boxes = np.concatenate(cand_boxes, axis=0)
    scores = np.concatenate(cand_scores, axis=0)
    classes = np.concatenate(cand_classes, axis=0)

    final: list[Detection] = []
    for k in range(num_classes):
        mask = np.nonzero(classes == k)[0]
        if mask.size == 0:
            continue
        keep = nms_indices(
            boxes[mask], scores[mask], config.nms_iou, config.max_detections_per_image
        )
        for j in keep:
            i = int(mask[j])
            final.append(
                Detection(
                    box=BBox(*boxes[i]),
                    score=float(scores[i]),
                    class_id=k,
                    image_id=image_id,
                )
            )
    final.sort(key=lambda d: -d.score)
    return final[: config.max_detections_per_image]


def write_detections(dets: list[Detection], path) -> None:
    lines = [
        json.dumps(
            {
                "image_id": d.image_id,
                "box": [d.box.x1, d.box.y1, d.box.x2, d.box.y2],
                "score": d.score,
                "class": d.class_id,
            }
        )
        for d in dets
    ]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_detections(path) -> list[Detection]:
    dets = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            dets.append(
                Detection(
                    box=BBox(*(float(v) for v in obj["box"])),
                    score=float(obj["score"]),
                    class_id=int(obj["class"]),
                    image_id=int(obj["image_id"]),
                )
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"{path}: line {lineno}: {e}") from e
    return dets
