"""Per-pair preprocessing: images + matches -> aligned classifier input.

For each manifest pair this loads the two images and the pair's match
file, normalizes everything onto square canvases, score-filters and
geometrically verifies the matches, estimates the rough A->B affine
alignment, rasterizes the keypoint/match masks, warps the A side onto
B's frame, and stores the result as one ``.npz`` per pair.

Flip-augmented pairs: image B is mirrored here at build time; their
match files already store coordinates in the flipped frame.
"""

import zlib
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DGPairError, FitFailed, TooFewMatches
from .geometry import AffineTransform, MatchSet, estimate_affine, flip_horizontal, warp
from .matchio import SCORE_THRESHOLD, load_pair_matches, verify_pair
from .metrics import PairStats, write_pair_stats_csv
from .rasterize import (
    ABLATION_NO_ALIGN,
    ABLATION_NO_GEO_VERIFY,
    ABLATION_SIFT_MASKS,
    MaskPair,
    PairArtifacts,
    build_masks,
    normalize_ablation,
    resize_pad,
)

AFFINE_INLIER_ERROR = 20.0


@dataclass(frozen=True)
class PrepareConfig:
    input_size: int = 1024
    score_threshold: float = SCORE_THRESHOLD
    reproj_error: float = 3.0
    confidence: float = 0.99
    affine_inlier_error: float = AFFINE_INLIER_ERROR
    seed: int = 0
    ablation: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "ablation", normalize_ablation(self.ablation))

    @property
    def matcher_id(self):
        return "sift" if ABLATION_SIFT_MASKS in self.ablation else "default"


def pair_seed(seed, pair_id):
    """Stable per-pair RANSAC seed (crc32 keeps it machine-independent)."""
    return (seed * 1_000_003 + zlib.crc32(pair_id.encode("utf-8"))) % (2 ** 31)


def load_image(path):
    """PNG/JPEG -> (H, W, 3) float32 in [0, 1]."""
    with Image.open(path) as img:
        arr = np.asarray(img)
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float32) / 255.0
    elif arr.dtype == np.uint16:
        arr = arr.astype(np.float32) / 65535.0
    else:
        arr = arr.astype(np.float32)
    return arr


class ImageCache:
    """Small LRU over decoded images; pairs reuse the same few views."""

    def __init__(self, capacity=48):
        self.capacity = capacity
        self._store = OrderedDict()

    def get(self, path):
        key = str(path)
        if key in self._store:
            self._store.move_to_end(key)
            return self._store[key]
        img = load_image(path)
        self._store[key] = img
        if len(self._store) > self.capacity:
            self._store.popitem(last=False)
        return img


def match_file_path(match_dir, pair_id, matcher_id="default"):
    suffix = ".dgm" if matcher_id == "default" else f".{matcher_id}.dgm"
    return Path(match_dir) / f"{pair_id}{suffix}"


def build_pair_artifacts(record, data_root, match_dir, cfg=PrepareConfig(), cache=None):
    """Run the full preprocessing chain for one manifest pair."""
    cache = cache or ImageCache()
    rgb_a = cache.get(Path(data_root) / record.image_a)
    rgb_b = cache.get(Path(data_root) / record.image_b)
    if record.flip_applied:
        rgb_b, _ = flip_horizontal(rgb_b)

    pm = load_pair_matches(match_file_path(match_dir, record.pair_id, cfg.matcher_id))
    seed = pair_seed(cfg.seed, record.pair_id)

    canvas_a, kps_a, ct_a = resize_pad(rgb_a, pm.keypoints_a, target=cfg.input_size)
    canvas_b, kps_b, ct_b = resize_pad(rgb_b, pm.keypoints_b, target=cfg.input_size)
    matches = MatchSet(ct_a.apply_points(pm.matches.a), ct_b.apply_points(pm.matches.b),
                       pm.matches.scores)

    all_matches, verified = verify_pair(
        matches, score_threshold=cfg.score_threshold,
        reproj_error=cfg.reproj_error, confidence=cfg.confidence, seed=seed,
    )
    if ABLATION_NO_GEO_VERIFY in cfg.ablation:
        verified = all_matches

    alignment = AffineTransform.identity()
    if ABLATION_NO_ALIGN not in cfg.ablation:
        source = verified if len(verified) >= 3 else all_matches
        try:
            alignment = estimate_affine(source, inlier_error=cfg.affine_inlier_error,
                                        seed=seed)
        except (TooFewMatches, FitFailed):
            alignment = AffineTransform.identity()  # rough alignment is optional

    masks = build_masks(all_matches, verified, cfg.input_size, cfg.input_size,
                        keypoints_a=kps_a, keypoints_b=kps_b)
    if not alignment.is_identity:
        canvas_a = warp(canvas_a, alignment)
        masks = MaskPair(
            keypoint_mask_a=warp(masks.keypoint_mask_a, alignment),
            keypoint_mask_b=masks.keypoint_mask_b,
            match_mask_a=warp(masks.match_mask_a, alignment),
            match_mask_b=masks.match_mask_b,
        )

    n_kp_a = len(pm.keypoints_a) if len(pm.keypoints_a) else len(all_matches)
    n_kp_b = len(pm.keypoints_b) if len(pm.keypoints_b) else len(all_matches)
    artifacts = PairArtifacts(
        rgb_a=canvas_a, rgb_b=canvas_b, masks=masks, alignment=alignment,
        pair_id=record.pair_id, matcher_id=cfg.matcher_id,
        stats={
            "label": record.label,
            "scene": record.scene,
            "n_keypoints_a": n_kp_a,
            "n_keypoints_b": n_kp_b,
            "n_matches_all": len(all_matches),
            "n_matches_verified": len(verified),
        },
    )
    artifacts.validate()
    return artifacts


# ---------------------------------------------------------------------------
# artifact store (.npz per pair)
# ---------------------------------------------------------------------------

def artifact_path(artifacts_dir, pair_id):
    return Path(artifacts_dir) / f"{pair_id}.npz"


def save_artifacts(path, artifacts):
    np.savez_compressed(
        path,
        rgb_a=(np.clip(artifacts.rgb_a, 0, 1) * 255.0).round().astype(np.uint8),
        rgb_b=(np.clip(artifacts.rgb_b, 0, 1) * 255.0).round().astype(np.uint8),
        keypoint_mask_a=artifacts.masks.keypoint_mask_a.astype(np.uint8),
        keypoint_mask_b=artifacts.masks.keypoint_mask_b.astype(np.uint8),
        match_mask_a=artifacts.masks.match_mask_a.astype(np.uint8),
        match_mask_b=artifacts.masks.match_mask_b.astype(np.uint8),
        alignment_A=artifacts.alignment.A,
        alignment_t=artifacts.alignment.t,
        pair_id=np.str_(artifacts.pair_id),
        matcher_id=np.str_(artifacts.matcher_id),
    )


def load_artifacts(path):
    with np.load(path) as z:
        return PairArtifacts(
            rgb_a=z["rgb_a"].astype(np.float32) / 255.0,
            rgb_b=z["rgb_b"].astype(np.float32) / 255.0,
            masks=MaskPair(
                keypoint_mask_a=z["keypoint_mask_a"],
                keypoint_mask_b=z["keypoint_mask_b"],
                match_mask_a=z["match_mask_a"],
                match_mask_b=z["match_mask_b"],
            ),
            alignment=AffineTransform(z["alignment_A"], z["alignment_t"]),
            pair_id=str(z["pair_id"]),
            matcher_id=str(z["matcher_id"]),
        )


# ---------------------------------------------------------------------------
# manifest driver
# ---------------------------------------------------------------------------

@dataclass
class PrepareReport:
    prepared: int = 0
    skipped: list = field(default_factory=list)  # (pair_id, reason)
    stats: list = field(default_factory=list)    # PairStats rows


def prepare_manifest(records, data_root, match_dir, out_dir, cfg=PrepareConfig(),
                     log=None, workers=1):
    """Build and store artifacts for every manifest pair.

    Pairs with missing match files (or failing preprocessing) are
    skipped and reported rather than aborting the run.  Output order is
    canonical (sorted by pair id) regardless of worker count.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = sorted(records, key=lambda r: r.pair_id)
    report = PrepareReport()
    cache = ImageCache()

    def _one(record):
        mf = match_file_path(match_dir, record.pair_id, cfg.matcher_id)
        if not mf.exists():
            return record, None, f"missing match file {mf.name}"
        try:
            artifacts = build_pair_artifacts(record, data_root, match_dir, cfg, cache=cache)
        except DGPairError as exc:
            return record, None, f"{type(exc).__name__}: {exc}"
        return record, artifacts, None

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one, records))
    else:
        results = [_one(r) for r in records]

    for record, artifacts, reason in results:
        if artifacts is None:
            report.skipped.append((record.pair_id, reason))
            if log is not None:
                log(f"skip {record.pair_id}: {reason}")
            continue
        save_artifacts(artifact_path(out, record.pair_id), artifacts)
        s = artifacts.stats
        report.stats.append(PairStats(
            pair_id=record.pair_id, scene=record.scene,
            label=1 if record.label == "positive" else 0,
            n_keypoints_a=s["n_keypoints_a"], n_keypoints_b=s["n_keypoints_b"],
            n_matches_all=s["n_matches_all"], n_matches_verified=s["n_matches_verified"],
        ))
        report.prepared += 1
    write_pair_stats_csv(out / "pair_stats.csv", report.stats)
    return report
