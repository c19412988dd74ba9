"""Match-file ingest and score/geometry verification.

The match file is a small UTF-8 text format shared by every matcher
front-end (detector-based or detector-free):

    DGMATCH 1 <name_a> <name_b> <num_keypoints_a> <num_keypoints_b> <num_matches>
    K A <x> <y>
    K B <x> <y>
    M <xa> <ya> <xb> <yb> <score>

Keypoint rows may be absent (detector-free matchers); coordinates are
floating-point pixels in original image space.  Blank lines and lines
starting with '#' are ignored.
"""

import csv
from dataclasses import dataclass, replace
from pathlib import PurePosixPath

import numpy as np

from .errors import DegenerateConfiguration, ParseError, TooFewMatches, VersionMismatch
from .geometry import MatchSet, estimate_fundamental

MAGIC = "DGMATCH"
FORMAT_VERSION = 1

SCORE_THRESHOLD = 0.8

LABEL_POSITIVE = "positive"
LABEL_NEGATIVE = "negative"
LABEL_UNKNOWN = "unknown"
LABELS = (LABEL_POSITIVE, LABEL_NEGATIVE, LABEL_UNKNOWN)


@dataclass(frozen=True)
class PairRecord:
    """One labeled image pair; the unit every pipeline stage works on.

    `flip_applied` marks flip-augmented pairs: image B is mirrored at
    artifact-build time and the pair's match file stores coordinates in
    the flipped frame.
    """

    image_a: str
    image_b: str
    scene: str
    label: str
    flip_applied: bool = False

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"bad label {self.label!r}")
        if self.image_a == self.image_b:
            raise ValueError(f"pair references the same image twice: {self.image_a}")

    @property
    def pair_id(self):
        stem_a = PurePosixPath(self.image_a).stem
        stem_b = PurePosixPath(self.image_b).stem
        suffix = "__flip" if self.flip_applied else ""
        return f"{self.scene}__{stem_a}__{stem_b}{suffix}"

    def with_label(self, label):
        return replace(self, label=label)


def write_manifest(path, records):
    """Pairs manifest CSV: image_a,image_b,scene,label,flip_applied."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["image_a", "image_b", "scene", "label", "flip_applied"])
        for r in records:
            w.writerow([r.image_a, r.image_b, r.scene, r.label,
                        "true" if r.flip_applied else "false"])


def read_manifest(path):
    records = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            try:
                records.append(PairRecord(
                    image_a=row["image_a"], image_b=row["image_b"],
                    scene=row["scene"], label=row["label"],
                    flip_applied=row["flip_applied"].strip().lower() in ("true", "1", "yes"),
                ))
            except (KeyError, ValueError, TypeError) as exc:
                raise ParseError(f"bad manifest row: {exc}", path=path, line=lineno)
    return records


@dataclass
class PairMatches:
    """Parsed contents of one match file."""

    name_a: str
    name_b: str
    keypoints_a: np.ndarray  # (Na, 2), possibly empty
    keypoints_b: np.ndarray  # (Nb, 2), possibly empty
    matches: MatchSet


def write_pair_matches(path, name_a, name_b, matches, keypoints_a=None, keypoints_b=None):
    kps_a = np.asarray(keypoints_a, dtype=np.float64).reshape(-1, 2) if keypoints_a is not None else np.zeros((0, 2))
    kps_b = np.asarray(keypoints_b, dtype=np.float64).reshape(-1, 2) if keypoints_b is not None else np.zeros((0, 2))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{MAGIC} {FORMAT_VERSION} {name_a} {name_b} "
                 f"{len(kps_a)} {len(kps_b)} {len(matches)}\n")
        for x, y in kps_a:
            fh.write(f"K A {x:.4f} {y:.4f}\n")
        for x, y in kps_b:
            fh.write(f"K B {x:.4f} {y:.4f}\n")
        for pa, pb, s in zip(matches.a, matches.b, matches.scores):
            fh.write(f"M {pa[0]:.4f} {pa[1]:.4f} {pb[0]:.4f} {pb[1]:.4f} {s:.4f}\n")


def load_pair_matches(path):
    """Parse a match file into keypoint arrays and a MatchSet.

    Raises ParseError (naming the offending line) on malformed content
    and VersionMismatch on an unknown format version.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()

    header = None
    header_line = None
    for lineno, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        header = text.split()
        header_line = lineno
        break
    if header is None:
        raise ParseError("empty match file", path=path, line=1)
    if len(header) != 7 or header[0] != MAGIC:
        raise ParseError(f"bad header {' '.join(header[:2])!r}", path=path, line=header_line)
    try:
        version = int(header[1])
        n_kp_a, n_kp_b, n_matches = (int(v) for v in header[4:7])
    except ValueError:
        raise ParseError("non-integer counts in header", path=path, line=header_line)
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: unsupported match-file version {version}")
    name_a, name_b = header[2], header[3]

    kps = {"A": [], "B": []}
    ma, mb, scores = [], [], []
    for lineno, raw in enumerate(lines, start=1):
        if lineno <= header_line:
            continue
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        parts = text.split()
        kind = parts[0]
        try:
            if kind == "K":
                if len(parts) != 4 or parts[1] not in kps:
                    raise ValueError
                kps[parts[1]].append((float(parts[2]), float(parts[3])))
            elif kind == "M":
                if len(parts) != 6:
                    raise ValueError
                ma.append((float(parts[1]), float(parts[2])))
                mb.append((float(parts[3]), float(parts[4])))
                scores.append(float(parts[5]))
            else:
                raise ValueError
        except ValueError:
            raise ParseError(f"malformed row {text!r}", path=path, line=lineno)

    for label, expected, got in (("A keypoint", n_kp_a, len(kps["A"])),
                                 ("B keypoint", n_kp_b, len(kps["B"])),
                                 ("match", n_matches, len(scores))):
        if expected != got:
            raise ParseError(
                f"header declares {expected} {label} rows, found {got}",
                path=path, line=header_line,
            )

    def _arr(rows):
        return np.array(rows, dtype=np.float64) if rows else np.zeros((0, 2))

    matches = MatchSet(_arr(ma), _arr(mb), np.array(scores, dtype=np.float64))
    return PairMatches(name_a, name_b, _arr(kps["A"]), _arr(kps["B"]), matches)


def verify_pair(matches, score_threshold=SCORE_THRESHOLD, reproj_error=3.0,
                confidence=0.99, seed=0):
    """Score-filter then geometrically verify a match set.

    Returns (all, verified): `all` keeps matches with score >= threshold
    and `verified` its epipolar inliers.  Degenerate or too-small
    geometry yields an empty verified set rather than an error.
    """
    keep = matches.scores >= score_threshold
    all_matches = matches.take(keep)
    try:
        model = estimate_fundamental(
            all_matches, reproj_error=reproj_error, confidence=confidence, seed=seed
        )
        verified = all_matches.take(model.inlier_flags)
    except (TooFewMatches, DegenerateConfiguration):
        verified = MatchSet.empty()
    return all_matches, verified
