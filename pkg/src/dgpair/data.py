"""Pair construction, flip augmentation, balancing, K-NN label curation.

Image catalogs carry a viewing-direction tag per image.  Two matched
images shot from the same direction form a positive pair; images shot
from opposite directions (north/south, east/west, left/right,
front/back) form a negative pair; anything else is unlabelable and
dropped.
"""

import csv
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    BadDimensions,
    InvalidAugmentation,
    InvalidParams,
    ParseError,
    SceneOverlap,
    UnknownScene,
)
from .matchio import LABEL_NEGATIVE, LABEL_POSITIVE, PairRecord

DIRECTIONS = ("north", "south", "east", "west", "left", "right", "front", "back", "none")
OPPOSITE = {
    "north": "south", "south": "north",
    "east": "west", "west": "east",
    "left": "right", "right": "left",
    "front": "back", "back": "front",
}

MAX_PAIRS_PER_SCENE = 3000
KNN_DEFAULT_K = 10


@dataclass(frozen=True)
class CatalogEntry:
    image_id: str
    scene: str
    direction: str

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise InvalidParams(f"bad direction tag {self.direction!r}")


class ImageCatalog:
    """Direction-tagged image roster, unique ids within a scene."""

    def __init__(self, entries=()):
        self._by_id = {}
        for e in entries:
            self.add(e)

    def add(self, entry):
        if entry.image_id in self._by_id:
            raise InvalidParams(f"duplicate catalog id {entry.image_id!r}")
        self._by_id[entry.image_id] = entry

    def __contains__(self, image_id):
        return image_id in self._by_id

    def __len__(self):
        return len(self._by_id)

    def get(self, image_id):
        try:
            return self._by_id[image_id]
        except KeyError:
            raise UnknownScene(f"image {image_id!r} is not in the catalog")

    def entries(self):
        return list(self._by_id.values())

    @classmethod
    def read_csv(cls, path):
        cat = cls()
        with open(path, "r", newline="", encoding="utf-8") as fh:
            for lineno, row in enumerate(csv.DictReader(fh), start=2):
                try:
                    cat.add(CatalogEntry(row["image_id"], row["scene"], row["direction"]))
                except (KeyError, InvalidParams) as exc:
                    raise ParseError(f"bad catalog row: {exc}", path=path, line=lineno)
        return cat

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["image_id", "scene", "direction"])
            for e in self._by_id.values():
                w.writerow([e.image_id, e.scene, e.direction])


def label_for_directions(tag_a, tag_b):
    """positive for same tags, negative for opposite tags, else None."""
    if tag_a == "none" or tag_b == "none":
        return None
    if tag_a == tag_b:
        return LABEL_POSITIVE
    if OPPOSITE.get(tag_a) == tag_b:
        return LABEL_NEGATIVE
    return None


def build_pairs(catalog, matched_pairs):
    """Turn matched image-id pairs into labeled PairRecords.

    Only pairs with verified matches belong in `matched_pairs`.
    Unlabelable pairs (cross-axis, untagged, cross-scene) are dropped.
    Raises UnknownScene for ids missing from the catalog.
    """
    records = []
    for id_a, id_b in matched_pairs:
        ea = catalog.get(id_a)
        eb = catalog.get(id_b)
        if ea.scene != eb.scene:
            continue
        label = label_for_directions(ea.direction, eb.direction)
        if label is None:
            continue
        records.append(PairRecord(image_a=id_a, image_b=id_b, scene=ea.scene, label=label))
    return records


def flip_augment(record, side="b"):
    """Derive a negative training pair by mirroring one side of a positive.

    The mirrored image shows a different (mirror-image) surface, so the
    label flips to negative.  The returned record always marks image B
    as the flipped side; asking for side 'a' swaps the images first.
    Matches for the flipped pair must be recomputed on the flipped
    image (its match file stores post-flip coordinates).
    """
    if record.label != LABEL_POSITIVE:
        raise InvalidAugmentation("flip augmentation applies to positive pairs only")
    if record.flip_applied:
        raise InvalidAugmentation("pair is already flip-derived")
    if side not in ("a", "b"):
        raise InvalidParams(f"side must be 'a' or 'b', got {side!r}")
    out = record
    if side == "a":
        out = replace(out, image_a=record.image_b, image_b=record.image_a)
    return replace(out, label=LABEL_NEGATIVE, flip_applied=True)


def knn_curate(adjacency, labels, k=KNN_DEFAULT_K):
    """Flag images whose label disagrees with their connectivity peers.

    Each row of the match-count adjacency matrix is normalized to a
    unit vector; similarity between images is the dot product of those
    vectors.  An image is flagged when its label differs from the
    strict majority label of its k most similar neighbors (self
    excluded).  Images with no matches at all are exempt, and majority
    ties leave the image unflagged.

    Returns the flagged indices, ascending.
    """
    A = np.asarray(adjacency, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise BadDimensions(f"adjacency must be square, got {A.shape}")
    if not np.array_equal(A, A.T):
        raise BadDimensions("adjacency must be symmetric")
    if np.diagonal(A).any():
        raise BadDimensions("adjacency diagonal must be zero")
    if (A < 0).any():
        raise BadDimensions("adjacency entries must be non-negative")
    n = A.shape[0]
    if len(labels) != n:
        raise BadDimensions("labels length does not match adjacency size")
    if k < 1 or n < k + 1:
        raise InvalidParams(f"need at least k+1={k + 1} images, got {n}")

    norms = np.sqrt((A * A).sum(axis=1))
    zero_rows = norms == 0
    unit = np.divide(A, norms[:, None], out=np.zeros_like(A), where=norms[:, None] > 0)
    sim = unit @ unit.T

    labels = np.asarray(labels)
    flagged = []
    for i in range(n):
        if zero_rows[i]:
            continue
        s = sim[i].copy()
        s[i] = -np.inf
        neighbors = np.argsort(-s, kind="stable")[:k]
        neighbor_labels, counts = np.unique(labels[neighbors], return_counts=True)
        top = counts.max()
        if top * 2 <= k:
            continue  # no strict majority
        winners = neighbor_labels[counts == top]
        if len(winners) > 1:
            continue  # tie between labels: keep the image
        if winners[0] != labels[i]:
            flagged.append(i)
    return flagged


def drop_flagged_pairs(records, flagged_ids):
    """Remove every pair that touches a flagged image."""
    flagged = set(flagged_ids)
    return [r for r in records if r.image_a not in flagged and r.image_b not in flagged]


def _balanced_subsample(records, cap, rng):
    """Uniform subsample to <= cap with near-even label balance."""
    if len(records) <= cap:
        return list(records)
    pos = [r for r in records if r.label == LABEL_POSITIVE]
    neg = [r for r in records if r.label == LABEL_NEGATIVE]
    want_pos = min(len(pos), cap // 2)
    want_neg = min(len(neg), cap - want_pos)
    want_pos = min(len(pos), cap - want_neg)
    take = []
    for group, want in ((pos, want_pos), (neg, want_neg)):
        idx = rng.choice(len(group), size=want, replace=False)
        take.extend(group[i] for i in sorted(idx))
    return take


def split_and_balance(pairs, max_per_scene=MAX_PAIRS_PER_SCENE, test_scenes=(),
                      seed=0, train_scenes=None):
    """Build train/test manifests from labeled pairs.

    Training scenes are capped at `max_per_scene` pairs each with
    near-even label balance.  The test manifest keeps only natural
    (non flip-augmented) pairs from `test_scenes`, subsampled so both
    classes appear in equal number.  Unknown-labeled pairs are dropped.
    """
    test_scenes = set(test_scenes)
    if train_scenes is not None and set(train_scenes) & test_scenes:
        raise SceneOverlap(
            f"scenes in both splits: {sorted(set(train_scenes) & test_scenes)}"
        )
    labeled = [p for p in pairs if p.label in (LABEL_POSITIVE, LABEL_NEGATIVE)]
    by_scene = {}
    for p in labeled:
        by_scene.setdefault(p.scene, []).append(p)
    for scene in by_scene:
        by_scene[scene].sort(key=lambda r: r.pair_id)

    rng = np.random.default_rng(seed)
    train, test = [], []
    for scene in sorted(by_scene):
        group = by_scene[scene]
        if scene in test_scenes:
            natural = [r for r in group if not r.flip_applied]
            pos = [r for r in natural if r.label == LABEL_POSITIVE]
            neg = [r for r in natural if r.label == LABEL_NEGATIVE]
            n = min(len(pos), len(neg))
            for group_cls in (pos, neg):
                idx = rng.choice(len(group_cls), size=n, replace=False)
                test.extend(group_cls[i] for i in sorted(idx))
        else:
            if train_scenes is not None and scene not in train_scenes:
                continue
            train.extend(_balanced_subsample(group, max_per_scene, rng))
    train.sort(key=lambda r: r.pair_id)
    test.sort(key=lambda r: r.pair_id)
    return train, test
