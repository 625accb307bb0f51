"""Preprocessing, bbox-aware affine augmentation, and JSONL manifests.

Preprocessing order: scale pixels to [0, 1], subtract the per-channel
ImageNet mean, then bilinear-resize to the network input size. Augmentation
draws one whole-image affine (translate, scale and rotate about the center,
optional horizontal flip) and warps image and boxes together.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .boxes import AffineTransform, BBox, clip_to_image, transform_box
from .errors import ValidationError

IMAGENET_MEAN = (0.485, 0.456, 0.406)


class ManifestError(ValidationError):
    """Malformed or invalid manifest line."""


@dataclass
class SampleRecord:
    image_path: str
    boxes: list[BBox]
    labels: list[int]

    def __post_init__(self):
        if not self.image_path:
            raise ValidationError("sample image_path must be non-empty")
        if len(self.boxes) != len(self.labels):
            raise ValidationError(
                f"{self.image_path}: {len(self.boxes)} boxes vs {len(self.labels)} labels"
            )
        for b in self.boxes:
            if b.area <= 0:
                raise ValidationError(f"{self.image_path}: box {b.as_tuple()} has no area")


@dataclass
class AugmentConfig:
    translate_frac: float = 0.10
    max_rot_deg: float = 5.0
    scale_min: float = 0.9
    scale_max: float = 1.1
    hflip_prob: float = 0.5
    min_box_area_px: float = 16.0
    min_visible_frac: float = 0.4

    def __post_init__(self):
        if not (0.0 <= self.translate_frac < 1.0):
            raise ValidationError(f"translate_frac must be in [0, 1), got {self.translate_frac}")
        if self.max_rot_deg < 0:
            raise ValidationError(f"max_rot_deg must be >= 0, got {self.max_rot_deg}")
        if not (0.0 < self.scale_min <= self.scale_max):
            raise ValidationError(
                f"need 0 < scale_min <= scale_max, got {self.scale_min}..{self.scale_max}"
            )
        if not (0.0 <= self.hflip_prob <= 1.0):
            raise ValidationError(f"hflip_prob must be in [0, 1], got {self.hflip_prob}")
        if self.min_box_area_px < 0 or not (0.0 <= self.min_visible_frac <= 1.0):
            raise ValidationError("box survival thresholds out of range")


def resize_bilinear(image, out_w: int, out_h: int) -> np.ndarray:
    """Half-pixel-centered bilinear resize with edge clamping.

    Same-size calls reproduce the input bitwise, and constants stay constant.
    """
    if out_w <= 0 or out_h <= 0:
        raise ValidationError(f"resize target must be positive, got {out_w}x{out_h}")
    img = np.asarray(image)
    _, h, w = img.shape
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5
    y0 = np.floor(ys)
    x0 = np.floor(xs)
    fy = (ys - y0).astype(img.dtype)
    fx = (xs - x0).astype(img.dtype)
    y0 = np.clip(y0.astype(np.int64), 0, h - 1)
    x0 = np.clip(x0.astype(np.int64), 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    fy = fy[:, None]
    fx = fx[None, :]
    top = img[:, y0[:, None], x0[None, :]] * (1 - fx) + img[:, y0[:, None], x1[None, :]] * fx
    bot = img[:, y1[:, None], x0[None, :]] * (1 - fx) + img[:, y1[:, None], x1[None, :]] * fx
    return top * (1 - fy) + bot * fy


def preprocess(image, target_size) -> np.ndarray:
    """[0, 255] pixels -> [0, 1], minus the ImageNet channel means, resized."""
    tw, th = target_size
    img = np.asarray(image, dtype=np.float32) / 255.0
    img = img - np.asarray(IMAGENET_MEAN, dtype=np.float32)[:, None, None]
    return resize_bilinear(img, tw, th)


def warp_affine(image, transform: AffineTransform) -> np.ndarray:
    """Inverse-map the image through the affine; bilinear sampling, zero fill."""
    img = np.asarray(image)
    _, h, w = img.shape
    inv = transform.inverse()
    xs, ys = np.meshgrid(
        np.arange(w, dtype=np.float64) + 0.5, np.arange(h, dtype=np.float64) + 0.5
    )
    src = inv.apply(np.stack([xs.ravel(), ys.ravel()], axis=1))
    lx = src[:, 0].reshape(h, w) - 0.5
    ly = src[:, 1].reshape(h, w) - 0.5
    x0 = np.floor(lx)
    y0 = np.floor(ly)
    fx = (lx - x0).astype(img.dtype)
    fy = (ly - y0).astype(img.dtype)
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)

    out = np.zeros_like(img)
    for dy, wy in ((0, 1 - fy), (1, fy)):
        for dx, wx in ((0, 1 - fx), (1, fx)):
            xi = x0 + dx
            yi = y0 + dy
            inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            vals = img[:, np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)]
            out += vals * (wy * wx * inside).astype(img.dtype)
    return out


def draw_augment_transform(width, height, config: AugmentConfig, rng) -> AffineTransform:
    """One random whole-image affine; the rng draw order is part of the contract:
    hflip uniform, angle, scale, tx, ty."""
    u_flip = rng.uniform()
    angle = rng.uniform(-config.max_rot_deg, config.max_rot_deg)
    scale = rng.uniform(config.scale_min, config.scale_max)
    tx = rng.uniform(-config.translate_frac * width, config.translate_frac * width)
    ty = rng.uniform(-config.translate_frac * height, config.translate_frac * height)
    center = (width / 2.0, height / 2.0)
    t = AffineTransform.translation(tx, ty)
    t = AffineTransform.scaling(scale, center).compose(t)
    t = AffineTransform.rotation_deg(angle, center).compose(t)
    if u_flip < config.hflip_prob:
        t = AffineTransform.hflip(width).compose(t)
    return t


def augment(image, boxes, config: AugmentConfig, rng):
    """Jitter one sample; returns (image, surviving boxes).

    Boxes follow the affine, get clipped to the image, and are dropped when
    the clipped area falls below min_box_area_px or below min_visible_frac of
    the unclipped transformed area.
    """
    img = np.asarray(image)
    _, h, w = img.shape
    t = draw_augment_transform(w, h, config, rng)
    out_img = warp_affine(img, t)
    out_boxes = []
    for b in boxes:
        tb = transform_box(b, t)
        cb = clip_to_image(tb, w, h)
        if cb.area <= 0 or cb.area < config.min_box_area_px:
            continue
        if tb.area > 0 and cb.area / tb.area < config.min_visible_frac:
            continue
        out_boxes.append(cb)
    return out_img, out_boxes


def write_manifest(records, path) -> None:
    """One JSON object per line: {"image", "boxes", "labels"}."""
    lines = []
    for r in records:
        lines.append(
            json.dumps(
                {
                    "image": r.image_path,
                    "boxes": [[b.x1, b.y1, b.x2, b.y2] for b in r.boxes],
                    "labels": list(r.labels),
                }
            )
        )
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_manifest(path) -> list[SampleRecord]:
    records = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise ManifestError(f"{path}: line {lineno}: invalid JSON: {e}") from e
        if not isinstance(obj, dict) or not {"image", "boxes", "labels"} <= set(obj):
            raise ManifestError(f"{path}: line {lineno}: expected image/boxes/labels keys")
        try:
            boxes = [BBox(*(float(v) for v in row)) for row in obj["boxes"]]
            rec = SampleRecord(
                image_path=str(obj["image"]),
                boxes=boxes,
                labels=[int(v) for v in obj["labels"]],
            )
        except (TypeError, ValueError) as e:
            raise ManifestError(f"{path}: line {lineno}: {e}") from e
        records.append(rec)
    return records
