"""Canvas normalization and binary keypoint/match mask construction.

Images are normalized onto square canvases (long side scaled to the
target, content anchored top-left, zero padding right/bottom), keypoint
and match locations are rasterized into binary masks on that canvas,
and the pieces are stacked into the classifier's multi-channel input.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyImage, InvalidParams, ShapeMismatch, SubsetViolation
from .geometry import AffineTransform, MatchSet, as_points, warp

TARGET_SIZE = 1024

ABLATION_NO_MASKS = "no-masks"
ABLATION_NO_RGB = "no-rgb"
ABLATION_NO_ALIGN = "no-align"
ABLATION_NO_GEO_VERIFY = "no-geo-verify"
ABLATION_SIFT_MASKS = "sift-masks"
KNOWN_ABLATIONS = frozenset(
    {ABLATION_NO_MASKS, ABLATION_NO_RGB, ABLATION_NO_ALIGN,
     ABLATION_NO_GEO_VERIFY, ABLATION_SIFT_MASKS}
)

CHANNELS_FULL = 10
CHANNELS_NO_MASKS = 6
CHANNELS_NO_RGB = 4


def normalize_ablation(flags):
    """Validate and freeze a set of ablation flag strings."""
    flags = frozenset(flags or ())
    unknown = flags - KNOWN_ABLATIONS
    if unknown:
        raise InvalidParams(f"unknown ablation flags: {sorted(unknown)}")
    if ABLATION_NO_MASKS in flags and ABLATION_NO_RGB in flags:
        raise InvalidParams("no-masks and no-rgb together leave no input channels")
    return flags


def channels_for(flags):
    """Classifier input channel count for an ablation flag set."""
    flags = normalize_ablation(flags)
    if ABLATION_NO_MASKS in flags:
        return CHANNELS_NO_MASKS
    if ABLATION_NO_RGB in flags:
        return CHANNELS_NO_RGB
    return CHANNELS_FULL


@dataclass(frozen=True)
class CanvasTransform:
    """Record of a resize-and-pad so keypoints can be mapped both ways."""

    scale: float
    pad_x: int
    pad_y: int
    original_size: tuple  # (H, W)

    def apply_points(self, pts):
        return as_points(pts) * self.scale

    def invert_points(self, pts):
        return as_points(pts) / self.scale


@dataclass
class MaskPair:
    """Binary keypoint and match masks for both sides of a pair."""

    keypoint_mask_a: np.ndarray
    keypoint_mask_b: np.ndarray
    match_mask_a: np.ndarray
    match_mask_b: np.ndarray

    def validate(self):
        shapes = {m.shape for m in self.all_masks()}
        if len(shapes) != 1:
            raise ShapeMismatch(f"mask shapes disagree: {shapes}")
        for m in self.all_masks():
            vals = np.unique(m)
            if not np.isin(vals, (0, 1)).all():
                raise ValueError("masks must be binary")
        if (self.match_mask_a > self.keypoint_mask_a).any() or (
            self.match_mask_b > self.keypoint_mask_b
        ).any():
            raise SubsetViolation("match mask exceeds keypoint mask")

    def all_masks(self):
        return (self.keypoint_mask_a, self.keypoint_mask_b,
                self.match_mask_a, self.match_mask_b)


@dataclass
class PairArtifacts:
    """Aligned canvases plus masks: everything the classifier consumes."""

    rgb_a: np.ndarray         # (S, S, 3) float32 in [0, 1], warped onto B's frame
    rgb_b: np.ndarray         # (S, S, 3) float32 in [0, 1]
    masks: MaskPair
    alignment: AffineTransform
    pair_id: str = ""
    matcher_id: str = "default"
    stats: dict = field(default_factory=dict)

    def validate(self):
        if self.rgb_a.shape != self.rgb_b.shape or self.rgb_a.ndim != 3 or self.rgb_a.shape[2] != 3:
            raise ShapeMismatch(
                f"rgb canvases must share an (S, S, 3) shape: {self.rgb_a.shape} vs {self.rgb_b.shape}"
            )
        self.masks.validate()
        if self.masks.keypoint_mask_a.shape != self.rgb_a.shape[:2]:
            raise ShapeMismatch("mask size does not match rgb canvas size")


def normalize_channels(image):
    """To (H, W, 3) float: grayscale replicated, alpha dropped."""
    image = np.asarray(image)
    if image.ndim == 2:
        image = np.repeat(image[:, :, None], 3, axis=2)
    elif image.ndim == 3 and image.shape[2] == 1:
        image = np.repeat(image, 3, axis=2)
    elif image.ndim == 3 and image.shape[2] == 4:
        image = image[:, :, :3]
    elif image.ndim != 3 or image.shape[2] != 3:
        raise ShapeMismatch(f"unsupported image shape {image.shape}")
    return np.ascontiguousarray(image, dtype=np.float32)


def resize_pad(image, keypoints=None, target=TARGET_SIZE):
    """Scale the long side to `target` and zero-pad to a square canvas.

    Content is anchored top-left with padding on the right/bottom.
    Keypoints are scaled by the same factor.  Returns
    (canvas, keypoints, CanvasTransform).
    """
    image = normalize_channels(image)
    h, w = image.shape[:2]
    if h == 0 or w == 0:
        raise EmptyImage(f"image has zero dimension: {(h, w)}")
    scale = target / max(h, w)
    content_h = max(1, int(round(h * scale)))
    content_w = max(1, int(round(w * scale)))
    if scale == 1.0:
        content = image
    else:
        content = warp(
            image,
            AffineTransform(np.eye(2) * scale, np.zeros(2)),
            out_size=(content_h, content_w),
        )
    canvas = np.zeros((target, target, 3), dtype=np.float32)
    canvas[:content_h, :content_w] = content
    ct = CanvasTransform(scale=scale, pad_x=target - content_w,
                         pad_y=target - content_h, original_size=(h, w))
    kps = ct.apply_points(keypoints) if keypoints is not None else None
    return canvas, kps, ct


def rasterize_points(points, h, w):
    """Binary mask with one set pixel per point, rounded half-up, clamped."""
    if h <= 0 or w <= 0:
        raise InvalidParams(f"mask size must be positive, got {(h, w)}")
    mask = np.zeros((h, w), dtype=np.uint8)
    pts = as_points(points)
    if len(pts) == 0:
        return mask
    cols = np.clip(np.floor(pts[:, 0] + 0.5).astype(np.int64), 0, w - 1)
    rows = np.clip(np.floor(pts[:, 1] + 0.5).astype(np.int64), 0, h - 1)
    mask[rows, cols] = 1
    return mask


def _is_subset(verified, all_matches):
    got = {(a[0], a[1], b[0], b[1]) for a, b in zip(all_matches.a, all_matches.b)}
    for pa, pb in zip(verified.a, verified.b):
        if (pa[0], pa[1], pb[0], pb[1]) not in got:
            return False
    return True


def build_masks(all_matches, verified_matches, h, w, keypoints_a=None, keypoints_b=None):
    """Rasterize keypoint masks from all matches and match masks from
    verified matches.

    Detector-free matchers leave keypoint sets empty, in which case the
    keypoints of a side are the pre-verification match endpoints.
    Explicit keypoint sets, when given, are merged with the endpoints so
    the match masks stay pixelwise subsets of the keypoint masks.
    """
    if not isinstance(all_matches, MatchSet) or not isinstance(verified_matches, MatchSet):
        raise TypeError("build_masks expects MatchSet inputs")
    if not _is_subset(verified_matches, all_matches):
        raise SubsetViolation("verified matches are not a subset of all matches")
    kp_a = all_matches.a
    kp_b = all_matches.b
    if keypoints_a is not None and len(keypoints_a):
        kp_a = np.vstack([as_points(keypoints_a), kp_a]) if len(kp_a) else as_points(keypoints_a)
    if keypoints_b is not None and len(keypoints_b):
        kp_b = np.vstack([as_points(keypoints_b), kp_b]) if len(kp_b) else as_points(keypoints_b)
    masks = MaskPair(
        keypoint_mask_a=rasterize_points(kp_a, h, w),
        keypoint_mask_b=rasterize_points(kp_b, h, w),
        match_mask_a=rasterize_points(verified_matches.a, h, w),
        match_mask_b=rasterize_points(verified_matches.b, h, w),
    )
    masks.validate()
    return masks


def assemble_input(artifacts, ablation=frozenset()):
    """Stack pair artifacts into the classifier input tensor (C, S, S).

    Channel order: rgb_a (3), rgb_b (3), keypoint masks a/b, match masks
    a/b.  The no-masks ablation keeps only RGB (6 channels); no-rgb
    keeps only the masks (4 channels).
    """
    flags = normalize_ablation(ablation)
    artifacts.validate()
    chans = []
    if ABLATION_NO_RGB not in flags:
        chans.extend(np.moveaxis(artifacts.rgb_a, 2, 0))
        chans.extend(np.moveaxis(artifacts.rgb_b, 2, 0))
    if ABLATION_NO_MASKS not in flags:
        chans.extend(m.astype(np.float32) for m in artifacts.masks.all_masks())
    stack = np.stack(chans).astype(np.float32)
    assert stack.shape[0] == channels_for(flags)
    return stack
