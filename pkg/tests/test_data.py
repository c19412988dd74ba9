import numpy as np
import pytest

from dgpair.data import (
    CatalogEntry,
    ImageCatalog,
    build_pairs,
    drop_flagged_pairs,
    flip_augment,
    knn_curate,
    label_for_directions,
    split_and_balance,
)
from dgpair.errors import (
    BadDimensions,
    InvalidAugmentation,
    InvalidParams,
    SceneOverlap,
    UnknownScene,
)
from dgpair.matchio import PairRecord


def catalog_from(rows):
    return ImageCatalog(CatalogEntry(*r) for r in rows)


class TestBuildPairs:
    def setup_method(self):
        self.catalog = catalog_from([
            ("i1", "sc", "north"), ("i2", "sc", "north"), ("i3", "sc", "south"),
            ("i4", "sc", "east"), ("i5", "sc", "none"),
        ])

    def test_same_direction_positive(self):
        recs = build_pairs(self.catalog, [("i1", "i2")])
        assert len(recs) == 1 and recs[0].label == "positive"

    def test_opposite_direction_negative(self):
        recs = build_pairs(self.catalog, [("i1", "i3")])
        assert recs[0].label == "negative"

    def test_cross_axis_excluded(self):
        assert build_pairs(self.catalog, [("i1", "i4")]) == []

    def test_untagged_excluded(self):
        assert build_pairs(self.catalog, [("i1", "i5")]) == []

    def test_unknown_image_raises(self):
        with pytest.raises(UnknownScene):
            build_pairs(self.catalog, [("i1", "ghost")])

    def test_all_opposite_axes(self):
        for a, b in (("north", "south"), ("east", "west"),
                     ("left", "right"), ("front", "back")):
            assert label_for_directions(a, b) == "negative"
            assert label_for_directions(b, a) == "negative"
            assert label_for_directions(a, a) == "positive"


class TestFlipAugment:
    def test_positive_becomes_negative(self):
        rec = PairRecord("s/a.png", "s/b.png", "s", "positive")
        out = flip_augment(rec)
        assert out.label == "negative" and out.flip_applied
        assert out.scene == rec.scene

    def test_side_a_swaps_images(self):
        rec = PairRecord("s/a.png", "s/b.png", "s", "positive")
        out = flip_augment(rec, side="a")
        assert (out.image_a, out.image_b) == ("s/b.png", "s/a.png")

    def test_negative_rejected(self):
        rec = PairRecord("s/a.png", "s/b.png", "s", "negative")
        with pytest.raises(InvalidAugmentation):
            flip_augment(rec)

    def test_double_flip_rejected(self):
        rec = flip_augment(PairRecord("s/a.png", "s/b.png", "s", "positive"))
        with pytest.raises(InvalidAugmentation):
            flip_augment(rec.with_label("positive"))


def two_clique_adjacency(rng, n1, n2):
    """Block-diagonal match counts: two internally connected cliques."""
    n = n1 + n2
    A = np.zeros((n, n), dtype=np.int64)
    for block in (range(n1), range(n1, n)):
        idx = list(block)
        for i in idx:
            for j in idx:
                if i < j:
                    A[i, j] = A[j, i] = int(rng.integers(5, 50))
    return A


def knn_oracle(A, labels, k):
    """Direct per-row recomputation of the strict-majority vote."""
    A = np.asarray(A, dtype=float)
    norms = np.linalg.norm(A, axis=1)
    flagged = []
    for i in range(len(A)):
        if norms[i] == 0:
            continue
        sims = []
        for j in range(len(A)):
            if j == i:
                continue
            nj = norms[j]
            sim = float(A[i] @ A[j] / (norms[i] * nj)) if nj > 0 else 0.0
            sims.append((-sim, j))
        sims.sort()
        neighbors = [j for _, j in sims[:k]]
        votes = {}
        for j in neighbors:
            votes[labels[j]] = votes.get(labels[j], 0) + 1
        best = max(votes.values())
        winners = [l for l, c in votes.items() if c == best]
        if best * 2 > k and len(winners) == 1 and winners[0] != labels[i]:
            flagged.append(i)
    return flagged


class TestKnnCurate:
    def test_consistent_cliques_unflagged(self):
        rng = np.random.default_rng(0)
        A = two_clique_adjacency(rng, 10, 10)
        labels = ["north"] * 10 + ["south"] * 10
        assert knn_curate(A, labels, k=5) == []

    def test_single_inverted_label_flagged(self):
        rng = np.random.default_rng(1)
        for trial in range(10):
            A = two_clique_adjacency(rng, 10, 10)
            labels = np.array(["north"] * 10 + ["south"] * 10, dtype=object)
            planted = int(rng.integers(0, 20))
            labels[planted] = "south" if planted < 10 else "north"
            flagged = knn_curate(A, labels, k=5)
            assert flagged == [planted]
            assert flagged == knn_oracle(A, labels, 5)

    def test_zero_connectivity_exempt(self):
        rng = np.random.default_rng(2)
        A = two_clique_adjacency(rng, 8, 8)
        n = 17
        B = np.zeros((n, n), dtype=np.int64)
        B[:16, :16] = A
        labels = ["north"] * 8 + ["south"] * 9  # isolated image mislabeled on purpose
        assert knn_curate(B, labels, k=5) == []

    def test_scaling_invariance(self):
        rng = np.random.default_rng(3)
        A = two_clique_adjacency(rng, 9, 9)
        labels = np.array(["north"] * 9 + ["south"] * 9, dtype=object)
        labels[4] = "south"
        assert knn_curate(A, labels, k=5) == knn_curate(7 * A, labels, k=5)

    def test_bad_dimensions(self):
        with pytest.raises(BadDimensions):
            knn_curate(np.zeros((3, 4)), ["a"] * 3, k=1)
        bad = np.zeros((12, 12))
        bad[0, 1] = 3  # asymmetric
        with pytest.raises(BadDimensions):
            knn_curate(bad, ["a"] * 12, k=2)

    def test_too_small_for_k(self):
        with pytest.raises(InvalidParams):
            knn_curate(np.zeros((4, 4)), ["a"] * 4, k=5)

    def test_drop_flagged_pairs(self):
        recs = [PairRecord("x", "y", "s", "positive"), PairRecord("x", "z", "s", "negative")]
        assert drop_flagged_pairs(recs, {"z"}) == recs[:1]


def make_records(scene, n_pos, n_neg, flip=0):
    recs = []
    for i in range(n_pos):
        recs.append(PairRecord(f"{scene}/p{i}a.png", f"{scene}/p{i}b.png", scene, "positive"))
    for i in range(n_neg):
        recs.append(PairRecord(f"{scene}/n{i}a.png", f"{scene}/n{i}b.png", scene, "negative"))
    for i in range(flip):
        recs.append(PairRecord(f"{scene}/f{i}a.png", f"{scene}/f{i}b.png", scene, "negative",
                               flip_applied=True))
    return recs


class TestSplitAndBalance:
    def test_cap_applied_exactly(self):
        recs = make_records("big", 6000, 4000)
        train, _ = split_and_balance(recs, max_per_scene=3000, test_scenes=set(), seed=0)
        assert len(train) == 3000
        labels = [r.label for r in train]
        assert labels.count("positive") == 1500

    def test_below_cap_keeps_all(self):
        recs = make_records("small", 60, 40)
        train, _ = split_and_balance(recs, max_per_scene=3000, test_scenes=set(), seed=0)
        assert len(train) == 100

    def test_deterministic(self):
        recs = make_records("a", 500, 700) + make_records("b", 50, 60)
        t1 = split_and_balance(recs, max_per_scene=200, test_scenes={"b"}, seed=9)
        t2 = split_and_balance(recs, max_per_scene=200, test_scenes={"b"}, seed=9)
        assert t1 == t2

    def test_test_set_balanced_and_natural(self):
        recs = make_records("t", 30, 12, flip=10)
        train, test = split_and_balance(recs, test_scenes={"t"}, seed=1)
        assert train == []
        assert len(test) == 24
        assert all(not r.flip_applied for r in test)
        labels = [r.label for r in test]
        assert labels.count("positive") == labels.count("negative") == 12

    def test_augmented_never_in_test(self):
        recs = make_records("t", 5, 5, flip=5)
        _, test = split_and_balance(recs, test_scenes={"t"}, seed=2)
        assert all(not r.flip_applied for r in test)

    def test_no_train_scene_leaks_into_test(self):
        recs = make_records("a", 10, 10) + make_records("b", 10, 10)
        train, test = split_and_balance(recs, test_scenes={"b"}, seed=3)
        assert {r.scene for r in train} == {"a"}
        assert {r.scene for r in test} == {"b"}

    def test_scene_overlap_raises(self):
        recs = make_records("a", 4, 4)
        with pytest.raises(SceneOverlap):
            split_and_balance(recs, test_scenes={"a"}, train_scenes={"a"}, seed=0)

    def test_unbalanced_scene_tops_up(self):
        recs = make_records("skew", 100, 10)
        train, _ = split_and_balance(recs, max_per_scene=60, test_scenes=set(), seed=4)
        assert len(train) == 60
        labels = [r.label for r in train]
        assert labels.count("negative") == 10  # every minority pair kept
