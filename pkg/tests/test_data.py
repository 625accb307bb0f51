import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import random_box
from retina_kit.boxes import AffineTransform, BBox
from retina_kit.data import (
    IMAGENET_MEAN,
    AugmentConfig,
    ManifestError,
    SampleRecord,
    augment,
    draw_augment_transform,
    preprocess,
    read_manifest,
    resize_bilinear,
    warp_affine,
    write_manifest,
)
from retina_kit.errors import ValidationError

IDENTITY_AUG = dict(
    translate_frac=0.0, max_rot_deg=0.0, scale_min=1.0, scale_max=1.0, hflip_prob=0.0
)


class TestPreprocess:
    def test_all_zero_image(self):
        out = preprocess(np.zeros((3, 8, 8), np.float32), (8, 8))
        for c, mean in enumerate(IMAGENET_MEAN):
            assert np.allclose(out[c], -mean, atol=1e-6)

    def test_all_255_image(self):
        out = preprocess(np.full((3, 8, 8), 255.0, np.float32), (8, 8))
        for c, mean in enumerate(IMAGENET_MEAN):
            assert np.allclose(out[c], 1.0 - mean, atol=1e-6)

    def test_resize_preserves_constants(self):
        img = np.full((3, 10, 6), 77.0, np.float32)
        out = preprocess(img, (16, 32))
        assert out.shape == (3, 32, 16)
        for c in range(3):
            assert np.allclose(out[c], 77.0 / 255.0 - IMAGENET_MEAN[c], atol=1e-6)

    def test_same_size_resize_is_exact(self, rng):
        img = rng.uniform(-1, 1, size=(3, 9, 11)).astype(np.float32)
        assert np.array_equal(resize_bilinear(img, 11, 9), img)

    def test_bounds_hold_for_any_input(self, rng):
        img = rng.integers(0, 256, size=(3, 17, 5)).astype(np.float32)
        out = preprocess(img, (24, 8))
        assert out.min() >= -0.6 and out.max() <= 0.6

    def test_rejects_zero_target(self):
        with pytest.raises(ValidationError):
            preprocess(np.zeros((3, 4, 4)), (0, 4))


class TestWarp:
    def test_identity_is_bitwise(self, rng):
        img = rng.integers(0, 256, size=(3, 12, 9)).astype(np.float32)
        out = warp_affine(img, AffineTransform.identity())
        assert np.array_equal(out, img)

    def test_translation_moves_pixels(self):
        img = np.zeros((1, 6, 6), np.float32)
        img[0, 2, 3] = 9.0
        out = warp_affine(img, AffineTransform.translation(1.0, 2.0))
        assert out[0, 4, 4] == 9.0
        assert out[0, 2, 3] == 0.0

    def test_out_of_frame_fills_zero(self):
        img = np.full((1, 4, 4), 5.0, np.float32)
        out = warp_affine(img, AffineTransform.translation(2.0, 0.0))
        assert np.all(out[0, :, :2] == 0.0)
        assert np.all(out[0, :, 2:] == 5.0)

    def test_hflip_is_exact_mirror(self, rng):
        img = rng.integers(0, 256, size=(3, 5, 8)).astype(np.float32)
        out = warp_affine(img, AffineTransform.hflip(8))
        assert np.array_equal(out, img[:, :, ::-1])


class TestAugment:
    def test_identity_config_is_exact_identity(self, rng):
        img = rng.integers(0, 256, size=(3, 16, 16)).astype(np.float32)
        boxes = [BBox(2.0, 3.0, 10.0, 12.0)]
        cfg = AugmentConfig(**IDENTITY_AUG)
        out_img, out_boxes = augment(img, boxes, cfg, np.random.default_rng(0))
        assert np.array_equal(out_img, img)
        assert [b.as_tuple() for b in out_boxes] == [b.as_tuple() for b in boxes]

    def test_pure_translation_shifts_boxes(self):
        img = np.zeros((3, 32, 32), np.float32)
        boxes = [BBox(5.0, 6.0, 15.0, 20.0)]
        t = AffineTransform.translation(3.0, -2.0)
        from retina_kit.boxes import transform_box

        moved = transform_box(boxes[0], t)
        assert moved.as_tuple() == pytest.approx((8.0, 4.0, 18.0, 18.0))

    def test_hflip_box_arithmetic(self):
        img = np.zeros((3, 16, 64), np.float32)
        cfg = AugmentConfig(**{**IDENTITY_AUG, "hflip_prob": 1.0})
        _, out_boxes = augment(img, [BBox(10.0, 0.0, 20.0, 5.0)], cfg, np.random.default_rng(1))
        assert out_boxes[0].as_tuple() == pytest.approx((44.0, 0.0, 54.0, 5.0))

    def test_boxes_always_in_bounds_positive_area(self, rng):
        cfg = AugmentConfig()
        for _ in range(200):
            img = np.zeros((3, 64, 64), np.float32)
            boxes = [random_box(rng, 0, 64, min_side=3) for _ in range(3)]
            _, out = augment(img, boxes, cfg, rng)
            for b in out:
                assert 0.0 <= b.x1 <= b.x2 <= 64.0
                assert 0.0 <= b.y1 <= b.y2 <= 64.0
                assert b.area > 0.0

    def test_small_survivors_dropped(self):
        img = np.zeros((3, 32, 32), np.float32)
        cfg = AugmentConfig(**{**IDENTITY_AUG, "min_box_area_px": 16.0})
        _, out = augment(img, [BBox(1.0, 1.0, 3.0, 3.0)], cfg, np.random.default_rng(0))
        assert out == []

    def test_clipped_slivers_dropped_by_visibility(self):
        img = np.zeros((3, 32, 32), np.float32)
        cfg = AugmentConfig(
            translate_frac=0.5,
            max_rot_deg=0.0,
            scale_min=1.0,
            scale_max=1.0,
            hflip_prob=0.0,
            min_box_area_px=1.0,
            min_visible_frac=0.9,
        )
        # find a draw that pushes the box mostly out of frame
        dropped = False
        for seed in range(50):
            rng = np.random.default_rng(seed)
            t = draw_augment_transform(32, 32, cfg, np.random.default_rng(seed))
            if abs(t.matrix[0, 2]) > 12:
                _, out = augment(img, [BBox(0.0, 0.0, 16.0, 16.0)], cfg, np.random.default_rng(seed))
                dropped = dropped or len(out) == 0
        assert dropped

    def test_deterministic_given_seed(self, rng):
        img = rng.integers(0, 256, size=(3, 32, 32)).astype(np.float32)
        boxes = [BBox(4.0, 4.0, 20.0, 28.0)]
        cfg = AugmentConfig()
        a_img, a_boxes = augment(img, boxes, cfg, np.random.default_rng(42))
        b_img, b_boxes = augment(img, boxes, cfg, np.random.default_rng(42))
        assert np.array_equal(a_img, b_img)
        assert [b.as_tuple() for b in a_boxes] == [b.as_tuple() for b in b_boxes]


class TestManifest:
    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert read_manifest(path) == []

    def test_round_trip_exact(self, tmp_path, rng):
        records = []
        for i in range(100):
            n = int(rng.integers(0, 4))
            boxes = [random_box(rng, 0, 64, min_side=1) for _ in range(n)]
            records.append(SampleRecord(f"img_{i}.ppm", boxes, [0] * n))
        path = tmp_path / "m.jsonl"
        write_manifest(records, path)
        back = read_manifest(path)
        assert len(back) == len(records)
        for a, b in zip(records, back):
            assert a.image_path == b.image_path
            assert a.labels == b.labels
            assert [x.as_tuple() for x in a.boxes] == [x.as_tuple() for x in b.boxes]

    def test_invalid_json_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"image": "a.ppm", "boxes": [], "labels": []}\nnot json\n')
        with pytest.raises(ManifestError, match="line 2"):
            read_manifest(path)

    def test_inverted_box_names_line(self, tmp_path):
        path = tmp_path / "inv.jsonl"
        rows = [
            {"image": "a.ppm", "boxes": [[0, 0, 4, 4]], "labels": [0]},
            {"image": "b.ppm", "boxes": [[5, 0, 1, 4]], "labels": [0]},
        ]
        path.write_text("".join(json.dumps(r) + "\n" for r in rows))
        with pytest.raises(ManifestError, match="line 2"):
            read_manifest(path)

    def test_missing_keys_rejected(self, tmp_path):
        path = tmp_path / "keys.jsonl"
        path.write_text('{"image": "a.ppm", "boxes": []}\n')
        with pytest.raises(ManifestError, match="labels"):
            read_manifest(path)

    def test_count_mismatch_rejected(self, tmp_path):
        path = tmp_path / "count.jsonl"
        path.write_text('{"image": "a.ppm", "boxes": [[0, 0, 2, 2]], "labels": []}\n')
        with pytest.raises(ManifestError, match="line 1"):
            read_manifest(path)


class TestAugmentConfig:
    @pytest.mark.parametrize(
        "kw",
        [
            dict(translate_frac=-0.1),
            dict(translate_frac=1.0),
            dict(scale_min=0.0),
            dict(scale_min=1.2, scale_max=1.1),
            dict(hflip_prob=1.5),
            dict(min_visible_frac=2.0),
        ],
    )
    def test_rejects_bad_values(self, kw):
        with pytest.raises(ValidationError):
            AugmentConfig(**kw)
