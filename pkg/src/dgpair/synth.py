"""Desk-scale synthetic doppelganger scenes.

Each scene is a flat textured "facade" world rendered per *side*.  All
sides of a scene share a large repeated-structure band (mirror-
symmetric masonry, pillars, windows); below it sits a detail band whose
background is also shared but which carries a sparse constellation of
small marks, laid out differently on every side.  Views are affine
crops with photometric jitter, small rotations and random occluder
blobs.

Ground-truth matches follow the matcher failure mode this package
exists to classify: same-side (positive) pairs get correspondences
across the whole view overlap, while different-side (negative) pairs
get correspondences only on the shared band, because the marks break
matching everywhere else.  Flip-augmented pairs get mirror
correspondences through the band's symmetry.
"""

import json
from dataclasses import dataclass, field, replace as dc_replace
from pathlib import Path

import numpy as np

from .errors import InvalidParams
from .geometry import AffineTransform, MatchSet
from .matchio import (
    LABEL_NEGATIVE,
    LABEL_POSITIVE,
    PairRecord,
)

SYMMETRIES = ("two-way", "four-way", "replica")

_SIDE_TAGS = {
    "two-way": ("north", "south"),
    "four-way": ("north", "south", "east", "west"),
    "replica": ("none", "none"),
}
_OPPOSITE_SIDE_PAIRS = {
    "two-way": ((0, 1),),
    "four-way": ((0, 1), (2, 3)),
    "replica": ((0, 1),),
}
_SIDE_PREFIX = {"north": "n", "south": "s", "east": "e", "west": "w", "none": "r"}

MIN_FLIP_MATCHES = 16


@dataclass(frozen=True)
class SynthParams:
    symmetry: str = "two-way"
    detail_density: float = 1.0
    noise: float = 1.0            # match jitter in px; image noise scales with it
    world_size: int = 288
    views_per_side: int = 6
    view_size: int = 200          # nominal long side of rendered views
    shared_band_frac: float = 0.6
    detail_contrast: float = 0.35
    pos_matches: tuple = (60, 220)
    neg_matches: tuple = (45, 170)
    spurious_frac: float = 0.06
    low_score_frac: float = 0.15
    occluders: int = 3
    min_view_overlap: float = 0.35

    def validated(self):
        if self.symmetry not in SYMMETRIES:
            raise InvalidParams(f"unknown symmetry {self.symmetry!r}")
        if self.detail_density < 0:
            raise InvalidParams("detail_density must be >= 0")
        if self.noise < 0:
            raise InvalidParams("noise must be >= 0")
        if self.world_size < 64 or self.view_size < 32:
            raise InvalidParams("world/view sizes too small")
        if self.views_per_side < 2:
            raise InvalidParams("need at least two views per side")
        if not 0.3 <= self.shared_band_frac <= 0.9:
            raise InvalidParams("shared_band_frac outside [0.3, 0.9]")
        return self


@dataclass
class SynthPair:
    record: PairRecord
    matches: MatchSet                 # default (dense) matcher output
    sift_matches: MatchSet            # sparser detector-style variant
    sift_keypoints_a: np.ndarray
    sift_keypoints_b: np.ndarray
    spurious: np.ndarray              # bool per default match


@dataclass
class SyntheticScene:
    name: str
    seed: int
    params: SynthParams
    shared_band_y: int                               # world rows < this repeat across sides
    images: dict = field(default_factory=dict)       # image name -> (H, W, 3) float
    image_side: dict = field(default_factory=dict)   # image name -> side index
    image_dir: dict = field(default_factory=dict)    # image name -> direction tag
    view_transform: dict = field(default_factory=dict)  # image name -> world->view affine
    pairs: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# world rendering
# ---------------------------------------------------------------------------

def _mirror(canvas):
    w = canvas.shape[1]
    half = (w + 1) // 2
    canvas[:, w - half:] = canvas[:, :half][:, ::-1]
    return canvas


def _render_shared_band(rng, h, w):
    """Mirror-symmetric repeated structure: masonry, pillars, windows."""
    band = np.empty((h, w, 3), dtype=np.float32)
    base = rng.uniform(0.35, 0.65, size=3).astype(np.float32)
    band[:] = base
    # masonry rows
    y = 0
    while y < h:
        rh = int(rng.integers(6, 14))
        shade = rng.uniform(-0.08, 0.08)
        band[y:y + rh] += shade
        y += rh
    # pillars (mirrored)
    for _ in range(int(rng.integers(2, 5))):
        x = int(rng.integers(2, max(3, w // 2 - 6)))
        pw = int(rng.integers(4, 10))
        shade = rng.uniform(0.06, 0.16)
        band[:, x:x + pw] += shade
    # window grid (mirrored)
    win_w = int(rng.integers(8, 16))
    win_h = int(rng.integers(10, 20))
    for gy in range(int(rng.integers(1, 3))):
        yy = int(rng.integers(4, max(5, h - win_h - 4)))
        step = win_w + int(rng.integers(6, 14))
        dark = rng.uniform(0.12, 0.25)
        for xx in range(4, w // 2 - win_w, step):
            band[yy:yy + win_h, xx:xx + win_w] -= dark
    band += rng.normal(0.0, 0.025, size=(h, w, 1)).astype(np.float32)
    return np.clip(_mirror(band), 0.0, 1.0)


def _render_detail_background(rng, h, w):
    bg = np.empty((h, w, 3), dtype=np.float32)
    bg[:] = rng.uniform(0.3, 0.6, size=3).astype(np.float32)
    y = 0
    while y < h:
        rh = int(rng.integers(8, 18))
        bg[y:y + rh] += rng.uniform(-0.05, 0.05)
        y += rh
    bg += rng.normal(0.0, 0.02, size=(h, w, 1)).astype(np.float32)
    return np.clip(bg, 0.0, 1.0)


def _draw_mark(rng, canvas, x, y, size, color):
    """Small shape (rect / disc / cross) stamped in place."""
    h, w = canvas.shape[:2]
    x0, x1 = max(0, x - size // 2), min(w, x + (size + 1) // 2)
    y0, y1 = max(0, y - size // 2), min(h, y + (size + 1) // 2)
    if x0 >= x1 or y0 >= y1:
        return
    kind = int(rng.integers(0, 3))
    if kind == 0:
        canvas[y0:y1, x0:x1] = color
    elif kind == 1:
        yy, xx = np.mgrid[y0:y1, x0:x1]
        inside = (yy - y) ** 2 + (xx - x) ** 2 <= (size / 2) ** 2
        canvas[y0:y1, x0:x1][inside] = color
    else:
        t = max(1, size // 4)
        cy, cx = y, x
        canvas[max(0, cy - t // 2):cy + (t + 1) // 2, x0:x1] = color
        canvas[y0:y1, max(0, cx - t // 2):cx + (t + 1) // 2] = color


def _stamp_details(rng, canvas, y_start, contrast, density):
    """Per-side mark constellation inside the detail band."""
    h, w = canvas.shape[:2]
    n = max(1, int(round(10 * density)))
    for _ in range(n):
        size = int(rng.integers(6, 16))
        x = int(rng.integers(size, w - size))
        y = int(rng.integers(y_start + size, h - size))
        base = canvas[y, x]
        sign = 1.0 if rng.random() < 0.5 else -1.0
        color = np.clip(base + sign * contrast * rng.uniform(0.6, 1.0, size=3), 0, 1)
        _draw_mark(rng, canvas, x, y, size, color.astype(np.float32))


def _render_sides(rng, params):
    """World canvases: shared content everywhere except per-side marks."""
    size = params.world_size
    band_h = int(round(params.shared_band_frac * size))
    shared = np.empty((size, size, 3), dtype=np.float32)
    shared[:band_h] = _render_shared_band(rng, band_h, size)
    shared[band_h:] = _render_detail_background(rng, size - band_h, size)
    sides = []
    for _ in range(len(_SIDE_TAGS[params.symmetry])):
        canvas = shared.copy()
        _stamp_details(rng, canvas, band_h, params.detail_contrast, params.detail_density)
        sides.append(canvas)
    return sides, band_h


# ---------------------------------------------------------------------------
# views
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Window:
    x0: float
    y0: float
    x1: float
    y1: float

    def area(self):
        return max(0.0, self.x1 - self.x0) * max(0.0, self.y1 - self.y0)

    def intersect(self, other):
        return _Window(max(self.x0, other.x0), max(self.y0, other.y0),
                       min(self.x1, other.x1), min(self.y1, other.y1))


def _overlap_ratio(wa, wb):
    inter = wa.intersect(wb).area()
    smaller = min(wa.area(), wb.area())
    return inter / smaller if smaller > 0 else 0.0


def _sample_windows(rng, params):
    """Axis-aligned view windows with pairwise overlap >= the floor."""
    size = params.world_size
    lo, hi = 0.55, 0.9
    for _ in range(200):
        windows = []
        for _ in range(params.views_per_side):
            sx = rng.uniform(lo, hi)
            sy = rng.uniform(lo, hi)
            ww, wh = sx * size, sy * size
            cx = rng.uniform(ww / 2 + 2, size - ww / 2 - 2)
            cy = size * rng.uniform(0.42, 0.58)
            cy = min(max(cy, wh / 2 + 2), size - wh / 2 - 2)
            windows.append(_Window(cx - ww / 2, cy - wh / 2, cx + ww / 2, cy + wh / 2))
        if all(
            _overlap_ratio(wa, wb) >= params.min_view_overlap
            for i, wa in enumerate(windows) for wb in windows[i + 1:]
        ):
            return windows
    raise InvalidParams("could not sample view windows meeting the overlap floor")


def _view_transform(rng, window, params):
    """World -> view-pixel affine with a small rotation."""
    win_w = window.x1 - window.x0
    win_h = window.y1 - window.y0
    long_side = int(rng.integers(int(0.8 * params.view_size), params.view_size + 1))
    if win_w >= win_h:
        view_w = long_side
        view_h = max(32, int(round(long_side * win_h / win_w)))
    else:
        view_h = long_side
        view_w = max(32, int(round(long_side * win_w / win_h)))
    theta = np.deg2rad(rng.uniform(-4.0, 4.0))
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    A = rot @ np.diag([view_w / win_w, view_h / win_h])
    center_world = np.array([(window.x0 + window.x1) / 2, (window.y0 + window.y1) / 2])
    center_view = np.array([(view_w - 1) / 2, (view_h - 1) / 2])
    t = center_view - A @ center_world
    return AffineTransform(A, t), (view_h, view_w)


def _render_view(rng, world, transform, view_hw, params):
    from .geometry import warp  # local import keeps module load light

    img = warp(world, transform, out_size=view_hw)
    img = np.clip(img * rng.uniform(0.8, 1.15) + rng.uniform(-0.08, 0.08), 0, 1)
    for _ in range(int(rng.integers(max(1, params.occluders - 1), params.occluders + 2))):
        size = int(rng.integers(10, 24))
        h, w = img.shape[:2]
        if w <= 2 * size or h <= 2 * size:
            continue
        x = int(rng.integers(size, w - size))
        y = int(rng.integers(size, h - size))
        _draw_mark(rng, img, x, y, size, rng.uniform(0.1, 0.9, size=3).astype(np.float32))
    if params.noise > 0:
        img = np.clip(img + rng.normal(0, 0.01 * params.noise, size=img.shape), 0, 1)
    return img.astype(np.float32)


# ---------------------------------------------------------------------------
# ground-truth matches
# ---------------------------------------------------------------------------

def _scores(rng, n, params):
    s = rng.uniform(0.84, 1.0, size=n)
    n_low = int(round(params.low_score_frac * n))
    if n_low:
        low_idx = rng.choice(n, size=n_low, replace=False)
        s[low_idx] = rng.uniform(0.3, 0.79, size=n_low)
    return s


def _in_view(pts, view_hw, margin=2.0):
    h, w = view_hw
    return ((pts[:, 0] >= margin) & (pts[:, 0] <= w - 1 - margin)
            & (pts[:, 1] >= margin) & (pts[:, 1] <= h - 1 - margin))


def _sample_region_points(rng, region, n):
    xs = rng.uniform(region.x0, region.x1, size=n)
    ys = rng.uniform(region.y0, region.y1, size=n)
    return np.stack([xs, ys], axis=1)


def _pair_matches(rng, scene_ctx, name_a, name_b, kind, params):
    """World-consistent correspondences for one pair.

    kind: 'pos' (full overlap), 'neg' (shared band only),
    'flip' (mirror correspondences on the band, B-side coords flipped).
    Returns (MatchSet, spurious bool array) in view pixel coordinates.
    """
    Va, hw_a = scene_ctx["views"][name_a]
    Vb, hw_b = scene_ctx["views"][name_b]
    win_a = scene_ctx["windows"][name_a]
    win_b = scene_ctx["windows"][name_b]
    band_y = scene_ctx["band_y"]
    world = scene_ctx["world_size"]

    if kind == "flip":
        win_b = _Window(world - win_b.x1, win_b.y0, world - win_b.x0, win_b.y1)
    region = win_a.intersect(win_b)
    if kind in ("neg", "flip"):
        region = region.intersect(_Window(0, 0, world, band_y - 2))
    lo, hi = params.pos_matches if kind == "pos" else params.neg_matches
    target = int(rng.integers(lo, hi + 1))

    pts_a = np.zeros((0, 2))
    pts_b = np.zeros((0, 2))
    if region.area() > 4:
        for _ in range(6):
            need = target - len(pts_a)
            if need <= 0:
                break
            w_pts = _sample_region_points(rng, region, max(need * 2, 8))
            if kind == "flip":
                w_b = w_pts.copy()
                w_b[:, 0] = (world - 1) - w_b[:, 0]
            else:
                w_b = w_pts
            va = Va.apply(w_pts)
            vb = Vb.apply(w_b)
            if kind == "flip":
                vb = vb.copy()
                vb[:, 0] = (hw_b[1] - 1) - vb[:, 0]
            keep = _in_view(va, hw_a) & _in_view(vb, hw_b)
            pts_a = np.vstack([pts_a, va[keep][:need]])
            pts_b = np.vstack([pts_b, vb[keep][:need]])

    if params.noise > 0 and len(pts_a):
        pts_a = pts_a + rng.normal(0, params.noise, size=pts_a.shape)
        pts_b = pts_b + rng.normal(0, params.noise, size=pts_b.shape)
        pts_a = np.clip(pts_a, 0, [hw_a[1] - 1, hw_a[0] - 1])
        pts_b = np.clip(pts_b, 0, [hw_b[1] - 1, hw_b[0] - 1])

    spurious = np.zeros(len(pts_a), dtype=bool)
    n_spur = int(round(params.spurious_frac * len(pts_a)))
    if n_spur:
        sa = np.stack([rng.uniform(2, hw_a[1] - 3, n_spur), rng.uniform(2, hw_a[0] - 3, n_spur)], axis=1)
        sb = np.stack([rng.uniform(2, hw_b[1] - 3, n_spur), rng.uniform(2, hw_b[0] - 3, n_spur)], axis=1)
        pts_a = np.vstack([pts_a, sa])
        pts_b = np.vstack([pts_b, sb])
        spurious = np.concatenate([spurious, np.ones(n_spur, dtype=bool)])

    scores = _scores(rng, len(pts_a), params)
    order = rng.permutation(len(pts_a))
    return MatchSet(pts_a[order], pts_b[order], scores[order]), spurious[order]


def _sift_variant(rng, matches, view_hw_a, view_hw_b):
    """Sparser, noisier detector-style matches plus explicit keypoints."""
    n = len(matches)
    keep_n = max(3, int(round(0.4 * n)))
    keep = np.sort(rng.choice(n, size=min(keep_n, n), replace=False))
    sub = matches.take(keep)
    a = np.clip(sub.a + rng.normal(0, 1.5, sub.a.shape), 0, [view_hw_a[1] - 1, view_hw_a[0] - 1])
    b = np.clip(sub.b + rng.normal(0, 1.5, sub.b.shape), 0, [view_hw_b[1] - 1, view_hw_b[0] - 1])
    n_spur = max(2, int(round(0.12 * len(a))))
    sa = np.stack([rng.uniform(2, view_hw_a[1] - 3, n_spur), rng.uniform(2, view_hw_a[0] - 3, n_spur)], axis=1)
    sb = np.stack([rng.uniform(2, view_hw_b[1] - 3, n_spur), rng.uniform(2, view_hw_b[0] - 3, n_spur)], axis=1)
    a = np.vstack([a, sa])
    b = np.vstack([b, sb])
    scores = np.concatenate([sub.scores, rng.uniform(0.82, 0.98, n_spur)])
    sift = MatchSet(a, b, np.clip(scores, 0, 1))
    # explicit detections: endpoints plus unmatched extras
    extra_a = np.stack([rng.uniform(2, view_hw_a[1] - 3, len(a)), rng.uniform(2, view_hw_a[0] - 3, len(a))], axis=1)
    extra_b = np.stack([rng.uniform(2, view_hw_b[1] - 3, len(b)), rng.uniform(2, view_hw_b[0] - 3, len(b))], axis=1)
    kp_a = np.vstack([a, extra_a])
    kp_b = np.vstack([b, extra_b])
    return sift, kp_a, kp_b


# ---------------------------------------------------------------------------
# scene assembly
# ---------------------------------------------------------------------------

def synth_scene(seed, params=SynthParams(), name=None, flip_fraction=0.0):
    """Deterministically build one synthetic scene.

    `flip_fraction` adds that fraction of flip-augmented negatives
    (derived from positive pairs) on top of the natural pairs.
    """
    params = params.validated()
    if not 0.0 <= flip_fraction <= 1.0:
        raise InvalidParams("flip_fraction must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    name = name or f"scene{seed:04d}"
    tags = _SIDE_TAGS[params.symmetry]

    sides, band_y = _render_sides(rng, params)
    scene = SyntheticScene(name=name, seed=seed, params=params, shared_band_y=band_y)

    ctx = {"views": {}, "windows": {}, "band_y": band_y, "world_size": params.world_size}
    side_images = []
    for s, (world, tag) in enumerate(zip(sides, tags)):
        windows = _sample_windows(rng, params)
        names = []
        for v, window in enumerate(windows):
            img_name = f"{_SIDE_PREFIX[tag]}{s}_{v:02d}"
            V, view_hw = _view_transform(rng, window, params)
            scene.images[img_name] = _render_view(rng, world, V, view_hw, params)
            scene.image_side[img_name] = s
            scene.image_dir[img_name] = tags[s]
            scene.view_transform[img_name] = V
            ctx["views"][img_name] = (V, view_hw)
            ctx["windows"][img_name] = window
            names.append(img_name)
        side_images.append(names)

    def _image_path(img_name):
        return f"{name}/{img_name}.png"

    def _add_pair(name_a, name_b, kind, label):
        matches, spurious = _pair_matches(rng, ctx, name_a, name_b, kind, params)
        if kind == "flip" and len(matches) < MIN_FLIP_MATCHES:
            return None
        hw_a = ctx["views"][name_a][1]
        hw_b = ctx["views"][name_b][1]
        sift, kp_a, kp_b = _sift_variant(rng, matches, hw_a, hw_b)
        record = PairRecord(
            image_a=_image_path(name_a), image_b=_image_path(name_b),
            scene=name, label=label, flip_applied=(kind == "flip"),
        )
        pair = SynthPair(record, matches, sift, kp_a, kp_b, spurious)
        scene.pairs.append(pair)
        return pair

    positives = []
    for names in side_images:
        for i in range(len(names)):
            for j in range(i + 1, len(names)):
                pair = _add_pair(names[i], names[j], "pos", LABEL_POSITIVE)
                if pair is not None:
                    positives.append(pair)
    for sa, sb in _OPPOSITE_SIDE_PAIRS[params.symmetry]:
        for na in side_images[sa]:
            for nb in side_images[sb]:
                _add_pair(na, nb, "neg", LABEL_NEGATIVE)

    if flip_fraction > 0 and positives:
        n_flips = int(round(flip_fraction * len(positives)))
        idx = rng.choice(len(positives), size=min(n_flips, len(positives)), replace=False)
        for i in sorted(idx):
            rec = positives[i].record
            name_a = Path(rec.image_a).stem
            name_b = Path(rec.image_b).stem
            _add_pair(name_a, name_b, "flip", LABEL_NEGATIVE)

    return scene


def scene_catalog_rows(scene):
    """(image_id, scene, direction) rows for the image catalog."""
    return [(f"{scene.name}/{img}.png", scene.name, scene.image_dir[img])
            for img in sorted(scene.images)]


def world_position(scene, image_name, view_pts):
    """Map view-pixel coordinates back into world coordinates."""
    return scene.view_transform[image_name].inverse().apply(view_pts)


# ---------------------------------------------------------------------------
# corpus writer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CorpusParams:
    n_scenes: int = 40
    n_test_scenes: int = 10
    max_per_scene: int = 50
    flip_fraction: float = 0.15
    base: SynthParams = SynthParams(symmetry="two-way")
    mixed_symmetry: bool = True    # cycle two-way / four-way / replica


def _scene_params_for(index, params):
    base = params.base
    if not params.mixed_symmetry:
        return base
    symmetry = SYMMETRIES[index % len(SYMMETRIES)]
    views = base.views_per_side if symmetry != "four-way" else max(2, base.views_per_side // 2)
    return dc_replace(base, symmetry=symmetry, views_per_side=views)


def generate_corpus(out_dir, seed, params=CorpusParams()):
    """Render a full corpus: images, match files, manifests, catalog.

    Layout under `out_dir`:
        images/<scene>/<image>.png
        matches/<pair_id>.dgm and <pair_id>.sift.dgm
        train_pairs.csv, test_pairs.csv, catalog.csv, scenes.json
    """
    from PIL import Image

    from .data import split_and_balance
    from .matchio import write_manifest, write_pair_matches

    if params.n_test_scenes >= params.n_scenes:
        raise InvalidParams("need at least one training scene")
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "matches").mkdir(parents=True, exist_ok=True)

    seeds = np.random.SeedSequence(seed).generate_state(params.n_scenes)
    scene_names = [f"scene{i:03d}" for i in range(params.n_scenes)]
    test_scenes = set(scene_names[-params.n_test_scenes:])

    all_records = []
    catalog_rows = []
    meta = {"seed": int(seed), "scenes": {}}
    for i, scene_name in enumerate(scene_names):
        flip = params.flip_fraction if scene_name not in test_scenes else 0.0
        scene = synth_scene(int(seeds[i]), _scene_params_for(i, params),
                            name=scene_name, flip_fraction=flip)

        img_dir = out / "images" / scene_name
        img_dir.mkdir(parents=True, exist_ok=True)
        for img_name in sorted(scene.images):
            arr = (np.clip(scene.images[img_name], 0, 1) * 255.0).round().astype(np.uint8)
            Image.fromarray(arr).save(img_dir / f"{img_name}.png")

        for pair in scene.pairs:
            rec = pair.record
            stem_a = Path(rec.image_a).stem
            stem_b = Path(rec.image_b).stem
            write_pair_matches(out / "matches" / f"{rec.pair_id}.dgm",
                               stem_a, stem_b, pair.matches)
            write_pair_matches(out / "matches" / f"{rec.pair_id}.sift.dgm",
                               stem_a, stem_b, pair.sift_matches,
                               keypoints_a=pair.sift_keypoints_a,
                               keypoints_b=pair.sift_keypoints_b)
            all_records.append(rec)

        catalog_rows.extend(scene_catalog_rows(scene))
        meta["scenes"][scene_name] = {
            "seed": int(seeds[i]),
            "symmetry": scene.params.symmetry,
            "shared_band_y": scene.shared_band_y,
            "world_size": scene.params.world_size,
            "n_pairs": len(scene.pairs),
            "views": {
                img: {"A": scene.view_transform[img].A.tolist(),
                      "t": scene.view_transform[img].t.tolist()}
                for img in sorted(scene.images)
            },
        }

    train, test = split_and_balance(
        all_records, max_per_scene=params.max_per_scene,
        test_scenes=test_scenes, seed=seed,
    )
    write_manifest(out / "train_pairs.csv", train)
    write_manifest(out / "test_pairs.csv", test)

    with open(out / "catalog.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write("image_id,scene,direction\n")
        for image_id, scene_name, direction in catalog_rows:
            fh.write(f"{image_id},{scene_name},{direction}\n")

    with open(out / "scenes.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1)

    return {"train": len(train), "test": len(test),
            "scenes": params.n_scenes, "records": len(all_records)}
