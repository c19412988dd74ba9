import numpy as np
import pytest
from hypothesis import given, strategies as st

from dgpair.errors import EmptyImage, InvalidParams, ShapeMismatch, SubsetViolation
from dgpair.geometry import AffineTransform, MatchSet
from dgpair.rasterize import (
    CHANNELS_FULL,
    CHANNELS_NO_MASKS,
    CHANNELS_NO_RGB,
    MaskPair,
    PairArtifacts,
    assemble_input,
    build_masks,
    channels_for,
    normalize_ablation,
    rasterize_points,
    resize_pad,
)


def random_match_split(rng, n_all, n_verified, h, w):
    a = np.stack([rng.uniform(0, w - 1, n_all), rng.uniform(0, h - 1, n_all)], axis=1)
    b = np.stack([rng.uniform(0, w - 1, n_all), rng.uniform(0, h - 1, n_all)], axis=1)
    all_matches = MatchSet(a, b, rng.uniform(0.8, 1.0, n_all))
    idx = rng.choice(n_all, size=n_verified, replace=False) if n_all else []
    mask = np.zeros(n_all, dtype=bool)
    mask[list(idx)] = True
    return all_matches, all_matches.take(mask)


class TestResizePad:
    def test_target_sized_input_unchanged(self):
        rng = np.random.default_rng(0)
        img = rng.random((1024, 1024, 3)).astype(np.float32)
        canvas, _, ct = resize_pad(img, target=1024)
        assert np.array_equal(canvas, img)
        assert ct.scale == 1.0 and ct.pad_x == 0 and ct.pad_y == 0

    def test_wide_input_scale_and_padding(self):
        img = np.ones((1024, 2048, 3), dtype=np.float32)
        canvas, kps, ct = resize_pad(img, np.array([[100.0, 200.0]]), target=1024)
        assert ct.scale == 0.5
        assert canvas.shape == (1024, 1024, 3)
        # 1024x512 content plus 512 rows of bottom padding
        assert (canvas[:512] > 0).all()
        assert (canvas[512:] == 0).all()
        assert ct.pad_y == 512 and ct.pad_x == 0
        assert np.allclose(kps, [[50.0, 100.0]])
        # independent oracle: plain nearest rescale of the content grid
        assert np.allclose(canvas[:512], img[::2, ::2], atol=1e-6)

    def test_small_input_keypoint_stays_in_content(self):
        img = np.ones((10, 10, 3), dtype=np.float32)
        canvas, kps, ct = resize_pad(img, np.array([[9.0, 9.0]]), target=1024)
        content = int(round(10 * ct.scale))
        assert (kps < content).all()
        assert ct.pad_x == 1024 - content

    def test_roundtrip_within_half_pixel(self):
        rng = np.random.default_rng(1)
        img = rng.random((300, 170, 3)).astype(np.float32)
        pts = np.stack([rng.uniform(0, 169, 25), rng.uniform(0, 299, 25)], axis=1)
        _, kps, ct = resize_pad(img, pts, target=256)
        back = ct.invert_points(kps)
        assert np.abs(back - pts).max() < 0.5

    def test_empty_image_raises(self):
        with pytest.raises(EmptyImage):
            resize_pad(np.zeros((0, 10, 3), dtype=np.float32))

    def test_grayscale_replicated(self):
        img = np.random.default_rng(2).random((40, 60)).astype(np.float32)
        canvas, _, _ = resize_pad(img, target=64)
        assert canvas.shape == (64, 64, 3)
        assert np.array_equal(canvas[..., 0], canvas[..., 1])


class TestRasterizePoints:
    def test_empty_points(self):
        assert rasterize_points(np.zeros((0, 2)), 16, 16).sum() == 0

    def test_round_half_up(self):
        mask = rasterize_points(np.array([[10.4, 20.6]]), 32, 32)
        assert mask[21, 10] == 1
        assert mask.sum() == 1

    def test_clamps_out_of_range(self):
        mask = rasterize_points(np.array([[-3.0, 500.0], [31.9, -2.0]]), 32, 32)
        assert mask[31, 0] == 1 and mask[0, 31] == 1

    def test_duplicates_change_nothing(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(0, 31, (40, 2))
        once = rasterize_points(pts, 32, 32)
        doubled = rasterize_points(np.vstack([pts, pts]), 32, 32)
        assert np.array_equal(once, doubled)

    @given(st.integers(0, 60))
    def test_popcount_bounded_by_point_count(self, n):
        rng = np.random.default_rng(n)
        pts = rng.uniform(0, 47, (n, 2))
        assert rasterize_points(pts, 48, 48).sum() <= n


class TestBuildMasks:
    def test_saturation(self):
        rng = np.random.default_rng(4)
        all_m, _ = random_match_split(rng, 60, 0, 64, 64)
        masks = build_masks(all_m, all_m, 64, 64)
        assert np.array_equal(masks.keypoint_mask_a, masks.match_mask_a)
        assert np.array_equal(masks.keypoint_mask_b, masks.match_mask_b)

    def test_empty_verification(self):
        rng = np.random.default_rng(5)
        all_m, _ = random_match_split(rng, 50, 0, 64, 64)
        masks = build_masks(all_m, MatchSet.empty(), 64, 64)
        assert masks.match_mask_a.sum() == 0 and masks.match_mask_b.sum() == 0
        assert masks.keypoint_mask_a.sum() > 0

    def test_popcount_bounds(self):
        rng = np.random.default_rng(6)
        all_m, verified = random_match_split(rng, 100, 40, 128, 128)
        masks = build_masks(all_m, verified, 128, 128)
        assert masks.match_mask_a.sum() <= 40
        assert masks.match_mask_a.sum() <= masks.keypoint_mask_a.sum()
        assert masks.match_mask_b.sum() <= 40

    def test_subset_violation(self):
        rng = np.random.default_rng(7)
        all_m, _ = random_match_split(rng, 20, 0, 64, 64)
        rogue = MatchSet(np.array([[1.0, 1.0]]), np.array([[2.0, 2.0]]), np.ones(1))
        with pytest.raises(SubsetViolation):
            build_masks(all_m, rogue, 64, 64)

    def test_explicit_keypoints_keep_subset_invariant(self):
        rng = np.random.default_rng(8)
        all_m, verified = random_match_split(rng, 30, 10, 64, 64)
        kp_a = rng.uniform(0, 63, (100, 2))
        kp_b = rng.uniform(0, 63, (100, 2))
        masks = build_masks(all_m, verified, 64, 64, keypoints_a=kp_a, keypoints_b=kp_b)
        assert (masks.match_mask_a <= masks.keypoint_mask_a).all()
        assert (masks.match_mask_b <= masks.keypoint_mask_b).all()
        # explicit detections enlarge the keypoint mask beyond the endpoints
        endpoints_only = build_masks(all_m, verified, 64, 64)
        assert masks.keypoint_mask_a.sum() > endpoints_only.keypoint_mask_a.sum()


def make_artifacts(s=32):
    rng = np.random.default_rng(9)
    all_m, verified = random_match_split(rng, 40, 15, s, s)
    masks = build_masks(all_m, verified, s, s)
    return PairArtifacts(
        rgb_a=np.full((s, s, 3), 0.25, dtype=np.float32),
        rgb_b=np.full((s, s, 3), 0.75, dtype=np.float32),
        masks=masks,
        alignment=AffineTransform.identity(),
        pair_id="test__a__b",
    )


class TestAssembleInput:
    def test_full_channel_count_and_order(self):
        art = make_artifacts()
        stack = assemble_input(art)
        assert stack.shape[0] == CHANNELS_FULL == 10
        assert np.allclose(stack[:3], 0.25) and np.allclose(stack[3:6], 0.75)
        assert np.array_equal(stack[6], art.masks.keypoint_mask_a)
        assert np.array_equal(stack[7], art.masks.keypoint_mask_b)
        assert np.array_equal(stack[8], art.masks.match_mask_a)
        assert np.array_equal(stack[9], art.masks.match_mask_b)

    def test_ablation_channel_counts(self):
        art = make_artifacts()
        assert assemble_input(art, {"no-masks"}).shape[0] == CHANNELS_NO_MASKS == 6
        assert assemble_input(art, {"no-rgb"}).shape[0] == CHANNELS_NO_RGB == 4
        assert channels_for(frozenset()) == 10

    def test_conflicting_ablations(self):
        with pytest.raises(InvalidParams):
            normalize_ablation({"no-masks", "no-rgb"})
        with pytest.raises(InvalidParams):
            normalize_ablation({"bogus"})

    def test_shape_mismatch(self):
        art = make_artifacts()
        art.rgb_b = np.zeros((16, 16, 3), dtype=np.float32)
        with pytest.raises(ShapeMismatch):
            assemble_input(art)
