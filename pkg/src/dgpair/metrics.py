"""Ranking metrics, confusion counts, match-count baselines, reports.

Scores are swept over distinct values in descending order, so tied
items enter each operating point together.  ROC AUC uses the
half-credit convention for ties (Mann-Whitney statistic).
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLabels, InvalidParams


@dataclass(frozen=True)
class ScoredPair:
    """One scored, labeled pair; label is 1 (positive) or 0 (negative)."""

    pair_id: str
    scene: str
    label: int
    score: float


@dataclass(frozen=True)
class PairStats:
    """Per-pair match bookkeeping used by the count/ratio baselines."""

    pair_id: str
    scene: str
    label: int
    n_keypoints_a: int
    n_keypoints_b: int
    n_matches_all: int
    n_matches_verified: int


def parse_label(value):
    """'positive'/'negative' (or 1/0) -> int label."""
    if isinstance(value, (int, np.integer)):
        if value in (0, 1):
            return int(value)
    else:
        v = str(value).strip().lower()
        if v in ("positive", "pos", "1", "true"):
            return 1
        if v in ("negative", "neg", "0", "false"):
            return 0
    raise InvalidParams(f"unrecognized label {value!r}")


def _labels_scores(scored):
    labels = np.array([s.label for s in scored], dtype=np.int64)
    scores = np.array([s.score for s in scored], dtype=np.float64)
    if not np.isfinite(scores).all():
        raise InvalidParams("scores must be finite")
    return labels, scores


def _tie_blocks(labels, scores):
    """Yield (n_pos_in_block, n_block) per distinct score, descending."""
    order = np.argsort(-scores, kind="stable")
    labels = labels[order]
    scores = scores[order]
    i = 0
    n = len(scores)
    while i < n:
        j = i
        while j < n and scores[j] == scores[i]:
            j += 1
        yield int(labels[i:j].sum()), j - i
        i = j


def average_precision(scored):
    """AP = sum over the descending sweep of (R_n - R_{n-1}) * P_n."""
    labels, scores = _labels_scores(scored)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("need both classes to compute AP")
    ap = 0.0
    tp = 0
    seen = 0
    recall_prev = 0.0
    for pos_in_block, block in _tie_blocks(labels, scores):
        tp += pos_in_block
        seen += block
        precision = tp / seen
        recall = tp / n_pos
        ap += (recall - recall_prev) * precision
        recall_prev = recall
    return ap


def roc_auc(scored):
    """Mann-Whitney: P(score+ > score-) + 0.5 * P(score+ == score-)."""
    labels, scores = _labels_scores(scored)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("need both classes to compute ROC AUC")
    u = 0.0
    pos_above = 0
    for pos_in_block, block in _tie_blocks(labels, scores):
        neg_in_block = block - pos_in_block
        u += neg_in_block * (pos_above + 0.5 * pos_in_block)
        pos_above += pos_in_block
    return u / (n_pos * n_neg)


def confusion(scored, threshold):
    """(TP, FP, TN, FN) with positive prediction iff score >= threshold."""
    labels, scores = _labels_scores(scored)
    pred = scores >= threshold
    tp = int((pred & (labels == 1)).sum())
    fp = int((pred & (labels == 0)).sum())
    tn = int((~pred & (labels == 0)).sum())
    fn = int((~pred & (labels == 1)).sum())
    return tp, fp, tn, fn


def pr_curve(scored):
    """(recall, precision) samples at every distinct score, descending."""
    labels, scores = _labels_scores(scored)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise DegenerateLabels("need positives for a PR curve")
    recalls = [0.0]
    precisions = [1.0]
    tp = 0
    seen = 0
    for pos_in_block, block in _tie_blocks(labels, scores):
        tp += pos_in_block
        seen += block
        recalls.append(tp / n_pos)
        precisions.append(tp / seen)
    return np.array(recalls), np.array(precisions)


def roc_curve(scored):
    """(fpr, tpr) samples at every distinct score, descending."""
    labels, scores = _labels_scores(scored)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("need both classes for a ROC curve")
    fpr = [0.0]
    tpr = [0.0]
    tp = 0
    fp = 0
    for pos_in_block, block in _tie_blocks(labels, scores):
        tp += pos_in_block
        fp += block - pos_in_block
        tpr.append(tp / n_pos)
        fpr.append(fp / n_neg)
    return np.array(fpr), np.array(tpr)


BASELINE_MODES = ("count", "ratio")


def baseline_scores(stats, mode="count", denominator="sum"):
    """Match-count baselines: score pairs by verified-match statistics.

    `count` scores each pair by its number of geometrically verified
    matches; `ratio` divides that by the keypoint count (sum of both
    images by default, `denominator='min'` for the smaller side).
    Zero-keypoint pairs score 0 in ratio mode.
    """
    if mode not in BASELINE_MODES:
        raise InvalidParams(f"unknown baseline mode {mode!r}")
    if denominator not in ("sum", "min"):
        raise InvalidParams(f"unknown denominator {denominator!r}")
    out = []
    for s in stats:
        if mode == "count":
            score = float(s.n_matches_verified)
        else:
            denom = (s.n_keypoints_a + s.n_keypoints_b if denominator == "sum"
                     else min(s.n_keypoints_a, s.n_keypoints_b))
            score = s.n_matches_verified / denom if denom > 0 else 0.0
        out.append(ScoredPair(s.pair_id, s.scene, s.label, score))
    return out


@dataclass
class SceneMetrics:
    scene: str
    n_pairs: int
    ap: float | None
    auc: float | None


@dataclass
class Report:
    per_scene: list
    macro_ap: float | None
    macro_auc: float | None

    def to_text(self):
        lines = [f"{'scene':<28} {'pairs':>6} {'AP':>8} {'ROC AUC':>8}"]
        for row in self.per_scene:
            ap = f"{row.ap:.4f}" if row.ap is not None else "n/a"
            auc = f"{row.auc:.4f}" if row.auc is not None else "n/a"
            lines.append(f"{row.scene:<28} {row.n_pairs:>6} {ap:>8} {auc:>8}")
        ap = f"{self.macro_ap:.4f}" if self.macro_ap is not None else "n/a"
        auc = f"{self.macro_auc:.4f}" if self.macro_auc is not None else "n/a"
        lines.append(f"{'MACRO AVERAGE':<28} {'':>6} {ap:>8} {auc:>8}")
        return "\n".join(lines) + "\n"

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["scene", "n_pairs", "ap", "roc_auc"])
            for row in self.per_scene:
                w.writerow([row.scene, row.n_pairs,
                            "" if row.ap is None else f"{row.ap:.6f}",
                            "" if row.auc is None else f"{row.auc:.6f}"])
            w.writerow(["MACRO", "",
                        "" if self.macro_ap is None else f"{self.macro_ap:.6f}",
                        "" if self.macro_auc is None else f"{self.macro_auc:.6f}"])


def per_scene_report(scored):
    """Per-scene AP/ROC AUC plus their unweighted means across scenes.

    Scenes with a single class get null metrics and do not count
    toward the macro average.
    """
    by_scene = {}
    for s in scored:
        by_scene.setdefault(s.scene, []).append(s)
    rows = []
    for scene in sorted(by_scene):
        group = by_scene[scene]
        try:
            ap = average_precision(group)
            auc = roc_auc(group)
        except DegenerateLabels:
            ap = auc = None
        rows.append(SceneMetrics(scene, len(group), ap, auc))
    aps = [r.ap for r in rows if r.ap is not None]
    aucs = [r.auc for r in rows if r.auc is not None]
    return Report(
        per_scene=rows,
        macro_ap=float(np.mean(aps)) if aps else None,
        macro_auc=float(np.mean(aucs)) if aucs else None,
    )


# ---------------------------------------------------------------------------
# CSV interchange
# ---------------------------------------------------------------------------

def write_scores_csv(path, scored):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["pair_id", "scene", "label", "score"])
        for s in scored:
            label = "positive" if s.label == 1 else "negative"
            w.writerow([s.pair_id, s.scene, label, f"{s.score:.8f}"])


def read_scores_csv(path):
    out = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(ScoredPair(row["pair_id"], row["scene"],
                                  parse_label(row["label"]), float(row["score"])))
    return out


def write_pair_stats_csv(path, stats):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["pair_id", "scene", "label", "n_keypoints_a", "n_keypoints_b",
                    "n_matches_all", "n_matches_verified"])
        for s in stats:
            label = "positive" if s.label == 1 else "negative"
            w.writerow([s.pair_id, s.scene, label, s.n_keypoints_a, s.n_keypoints_b,
                        s.n_matches_all, s.n_matches_verified])


def read_pair_stats_csv(path):
    out = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(PairStats(
                row["pair_id"], row["scene"], parse_label(row["label"]),
                int(row["n_keypoints_a"]), int(row["n_keypoints_b"]),
                int(row["n_matches_all"]), int(row["n_matches_verified"]),
            ))
    return out


def write_curve_csv(path, xs, ys, x_name, y_name):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([x_name, y_name])
        for x, y in zip(xs, ys):
            w.writerow([f"{x:.8f}", f"{y:.8f}"])
