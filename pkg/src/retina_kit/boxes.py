"""Axis-aligned box geometry.

IoU, clipping, affine transforms, and the anchor-relative offset
parameterization used by the regression head: center shifts are measured in
anchor widths/heights, sizes as log ratios, so encode and decode are exact
inverses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Log-size deltas are clamped here before exponentiation so an untrained
# head cannot overflow exp().
DELTA_CLAMP = math.log(1000.0 / 16.0)


@dataclass(frozen=True)
class BBox:
    """Corner-form box (x1, y1, x2, y2) in pixels with x1 <= x2, y1 <= y2."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"box coordinates must be finite, got {coords}")
        if self.x2 < self.x1 or self.y2 < self.y1:
            raise ValueError(f"box corners out of order: {coords}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass(frozen=True)
class BoxDelta:
    """Anchor-relative offsets (tx, ty, tw, th); tw/th live in log space."""

    tx: float
    ty: float
    tw: float
    th: float

    def __post_init__(self):
        vals = (self.tx, self.ty, self.tw, self.th)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"box delta must be finite, got {vals}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.tx, self.ty, self.tw, self.th)


@dataclass
class AffineTransform:
    """2x3 matrix mapping input pixel coordinates (x, y) to output coordinates."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (2, 3):
            raise ValueError(f"affine matrix must be 2x3, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("affine matrix entries must be finite")
        self.matrix = m

    @classmethod
    def identity(cls) -> "AffineTransform":
        return cls(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))

    @classmethod
    def translation(cls, tx: float, ty: float) -> "AffineTransform":
        return cls(np.array([[1.0, 0.0, tx], [0.0, 1.0, ty]]))

    @classmethod
    def scaling(cls, s: float, center=(0.0, 0.0)) -> "AffineTransform":
        cx, cy = center
        return cls(np.array([[s, 0.0, cx - s * cx], [0.0, s, cy - s * cy]]))

    @classmethod
    def rotation_deg(cls, angle_deg: float, center=(0.0, 0.0)) -> "AffineTransform":
        cx, cy = center
        c = math.cos(math.radians(angle_deg))
        s = math.sin(math.radians(angle_deg))
        # T(c) . R . T(-c)
        return cls(
            np.array(
                [
                    [c, -s, cx - c * cx + s * cy],
                    [s, c, cy - s * cx - c * cy],
                ]
            )
        )

    @classmethod
    def hflip(cls, width: float) -> "AffineTransform":
        return cls(np.array([[-1.0, 0.0, width], [0.0, 1.0, 0.0]]))

    def compose(self, other: "AffineTransform") -> "AffineTransform":
        """self after other: (self.compose(other)).apply(p) == self.apply(other.apply(p))."""
        a, b = self.matrix, other.matrix
        lin = a[:, :2] @ b[:, :2]
        off = a[:, :2] @ b[:, 2] + a[:, 2]
        return AffineTransform(np.column_stack([lin, off]))

    def inverse(self) -> "AffineTransform":
        inv = np.linalg.inv(self.matrix[:, :2])
        off = -inv @ self.matrix[:, 2]
        return AffineTransform(np.column_stack([inv, off]))

    def apply(self, points) -> np.ndarray:
        """Map an (N, 2) array of points."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.matrix[:, :2].T + self.matrix[:, 2]


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union in [0, 1]; 0 when the union has zero area."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    inter = iw * ih if iw > 0.0 and ih > 0.0 else 0.0
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def boxes_to_array(boxes) -> np.ndarray:
    """(N, 4) float64 corner array from a BBox sequence or array-like."""
    if isinstance(boxes, np.ndarray):
        return boxes.astype(np.float64, copy=False).reshape(-1, 4)
    return np.array([b.as_tuple() for b in boxes], dtype=np.float64).reshape(-1, 4)


def iou_matrix(boxes_a, boxes_b) -> np.ndarray:
    """Pairwise IoU, entry (i, j) = iou(boxes_a[i], boxes_b[j])."""
    a = boxes_to_array(boxes_a)
    b = boxes_to_array(boxes_b)
    if a.shape[0] == 0 or b.shape[0] == 0:
        return np.zeros((a.shape[0], b.shape[0]))
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    lt = np.maximum(a[:, None, :2], b[None, :, :2])
    rb = np.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = np.clip(rb - lt, 0.0, None)
    inter = wh[..., 0] * wh[..., 1]
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out


def encode(gt: BBox, anchor: BBox) -> BoxDelta:
    """Offsets that map `anchor` onto `gt`."""
    if anchor.width <= 0.0 or anchor.height <= 0.0:
        raise ValueError(f"degenerate anchor: {anchor.as_tuple()}")
    if gt.width <= 0.0 or gt.height <= 0.0:
        raise ValueError(f"degenerate ground-truth box: {gt.as_tuple()}")
    ax, ay = anchor.center
    gx, gy = gt.center
    return BoxDelta(
        tx=(gx - ax) / anchor.width,
        ty=(gy - ay) / anchor.height,
        tw=math.log(gt.width / anchor.width),
        th=math.log(gt.height / anchor.height),
    )


def decode(anchor: BBox, delta: BoxDelta) -> BBox:
    """Inverse of encode; log-size components clamped at DELTA_CLAMP."""
    if anchor.width <= 0.0 or anchor.height <= 0.0:
        raise ValueError(f"degenerate anchor: {anchor.as_tuple()}")
    ax, ay = anchor.center
    cx = ax + delta.tx * anchor.width
    cy = ay + delta.ty * anchor.height
    w = anchor.width * math.exp(min(delta.tw, DELTA_CLAMP))
    h = anchor.height * math.exp(min(delta.th, DELTA_CLAMP))
    return BBox(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)


def encode_boxes(gts: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """Vectorized encode over (N, 4) corner arrays."""
    gts = np.asarray(gts, dtype=np.float64)
    anchors = np.asarray(anchors, dtype=np.float64)
    aw = anchors[:, 2] - anchors[:, 0]
    ah = anchors[:, 3] - anchors[:, 1]
    gw = gts[:, 2] - gts[:, 0]
    gh = gts[:, 3] - gts[:, 1]
    if np.any(aw <= 0) or np.any(ah <= 0):
        raise ValueError("degenerate anchor in batch encode")
    if np.any(gw <= 0) or np.any(gh <= 0):
        raise ValueError("degenerate ground-truth box in batch encode")
    tx = (gts[:, 0] + 0.5 * gw - (anchors[:, 0] + 0.5 * aw)) / aw
    ty = (gts[:, 1] + 0.5 * gh - (anchors[:, 1] + 0.5 * ah)) / ah
    return np.stack([tx, ty, np.log(gw / aw), np.log(gh / ah)], axis=1)


def decode_boxes(anchors: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    """Vectorized decode over (N, 4) arrays, with the DELTA_CLAMP guard."""
    anchors = np.asarray(anchors, dtype=np.float64)
    deltas = np.asarray(deltas, dtype=np.float64)
    aw = anchors[:, 2] - anchors[:, 0]
    ah = anchors[:, 3] - anchors[:, 1]
    cx = anchors[:, 0] + 0.5 * aw + deltas[:, 0] * aw
    cy = anchors[:, 1] + 0.5 * ah + deltas[:, 1] * ah
    w = aw * np.exp(np.minimum(deltas[:, 2], DELTA_CLAMP))
    h = ah * np.exp(np.minimum(deltas[:, 3], DELTA_CLAMP))
    return np.stack([cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h], axis=1)


def clip_to_image(box: BBox, width: float, height: float) -> BBox:
    """Clamp every coordinate into [0, width] x [0, height]."""
    if width <= 0 or height <= 0:
        raise ValueError(f"image size must be positive, got {width}x{height}")
    return BBox(
        min(max(box.x1, 0.0), width),
        min(max(box.y1, 0.0), height),
        min(max(box.x2, 0.0), width),
        min(max(box.y2, 0.0), height),
    )


def clip_boxes(boxes: np.ndarray, width: float, height: float) -> np.ndarray:
    """Vectorized clip over an (N, 4) corner array."""
    out = np.asarray(boxes, dtype=np.float64).copy()
    out[:, 0::2] = np.clip(out[:, 0::2], 0.0, width)
    out[:, 1::2] = np.clip(out[:, 1::2], 0.0, height)
    return out


def transform_box(box: BBox, t: AffineTransform) -> BBox:
    """Axis-aligned envelope of the box's four corners mapped through t."""
    corners = np.array(
        [
            [box.x1, box.y1],
            [box.x2, box.y1],
            [box.x1, box.y2],
            [box.x2, box.y2],
        ]
    )
    mapped = t.apply(corners)
    x1, y1 = mapped.min(axis=0)
    x2, y2 = mapped.max(axis=0)
    return BBox(x1, y1, x2, y2)
