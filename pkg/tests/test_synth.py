from pathlib import Path

import numpy as np
import pytest

from dgpair.data import ImageCatalog, build_pairs, label_for_directions
from dgpair.errors import InvalidParams
from dgpair.matchio import load_pair_matches, read_manifest
from dgpair.synth import (
    CorpusParams,
    SynthParams,
    SyntheticScene,
    generate_corpus,
    synth_scene,
    world_position,
)

FAST = SynthParams(views_per_side=3, world_size=192, view_size=128)


def test_same_seed_bit_identical():
    s1 = synth_scene(42, FAST, flip_fraction=0.2)
    s2 = synth_scene(42, FAST, flip_fraction=0.2)
    assert sorted(s1.images) == sorted(s2.images)
    for k in s1.images:
        assert np.array_equal(s1.images[k], s2.images[k])
    assert len(s1.pairs) == len(s2.pairs)
    for p1, p2 in zip(s1.pairs, s2.pairs):
        assert p1.record == p2.record
        assert np.array_equal(p1.matches.a, p2.matches.a)
        assert np.array_equal(p1.matches.scores, p2.matches.scores)


def test_different_seed_differs():
    s1 = synth_scene(1, FAST)
    s2 = synth_scene(2, FAST)
    k = sorted(s1.images)[0]
    assert not np.array_equal(s1.images[k], s2.images[k])


def test_negative_matches_concentrate_on_shared_band():
    scene = synth_scene(3, FAST)
    negatives = [p for p in scene.pairs if p.record.label == "negative"]
    assert negatives
    for p in negatives:
        name_a = Path(p.record.image_a).stem
        world = world_position(scene, name_a, p.matches.a)
        frac = (world[:, 1] < scene.shared_band_y).mean()
        assert frac >= 0.9


def test_positive_matches_exact_without_noise():
    scene = synth_scene(4, SynthParams(views_per_side=3, world_size=192,
                                       view_size=128, noise=0.0))
    positives = [p for p in scene.pairs if p.record.label == "positive"]
    assert positives
    for p in positives[:5]:
        name_a = Path(p.record.image_a).stem
        name_b = Path(p.record.image_b).stem
        clean = ~p.spurious
        world = world_position(scene, name_a, p.matches.a[clean])
        relayed = scene.view_transform[name_b].apply(world)
        assert np.abs(relayed - p.matches.b[clean]).max() < 1e-9


def test_flip_pairs_are_negative_and_in_bounds():
    scene = synth_scene(5, FAST, flip_fraction=0.5)
    flips = [p for p in scene.pairs if p.record.flip_applied]
    assert flips
    for p in flips:
        assert p.record.label == "negative"
        name_b = Path(p.record.image_b).stem
        h, w = scene.images[name_b].shape[:2]
        assert (p.matches.b[:, 0] <= w - 1).all() and (p.matches.b[:, 0] >= 0).all()
        assert (p.matches.b[:, 1] <= h - 1).all() and (p.matches.b[:, 1] >= 0).all()


def test_flip_matches_mirror_the_band():
    """Unflipping the B coordinates must land on the mirrored world point."""
    scene = synth_scene(6, SynthParams(views_per_side=3, world_size=192,
                                       view_size=128, noise=0.0), flip_fraction=1.0)
    flips = [p for p in scene.pairs if p.record.flip_applied]
    assert flips
    p = flips[0]
    name_a = Path(p.record.image_a).stem
    name_b = Path(p.record.image_b).stem
    clean = ~p.spurious
    w = scene.params.world_size
    world_a = world_position(scene, name_a, p.matches.a[clean])
    mirrored = world_a.copy()
    mirrored[:, 0] = (w - 1) - mirrored[:, 0]
    view_b = scene.view_transform[name_b].apply(mirrored)
    unflipped_x = (scene.images[name_b].shape[1] - 1) - p.matches.b[clean][:, 0]
    assert np.abs(view_b[:, 0] - unflipped_x).max() < 1e-9
    assert np.abs(view_b[:, 1] - p.matches.b[clean][:, 1]).max() < 1e-9


def test_symmetry_variants_and_params():
    four = synth_scene(7, SynthParams(symmetry="four-way", views_per_side=2,
                                      world_size=192, view_size=128))
    assert len({four.image_dir[i] for i in four.images}) == 4
    replica = synth_scene(8, SynthParams(symmetry="replica", views_per_side=2,
                                         world_size=192, view_size=128))
    assert {replica.image_dir[i] for i in replica.images} == {"none"}
    with pytest.raises(InvalidParams):
        synth_scene(9, SynthParams(symmetry="five-way"))
    with pytest.raises(InvalidParams):
        synth_scene(9, SynthParams(noise=-1.0))


def test_direction_labels_agree_with_build_pairs():
    """The generator's labels match the direction-based labeling rule."""
    scene = synth_scene(10, FAST)
    for p in scene.pairs:
        if p.record.flip_applied:
            continue
        da = scene.image_dir[Path(p.record.image_a).stem]
        db = scene.image_dir[Path(p.record.image_b).stem]
        assert label_for_directions(da, db) == p.record.label


def test_match_counts_overlap_between_classes():
    """Count distributions overlap so #matches alone cannot separate."""
    rng = np.random.default_rng(0)
    counts = {"positive": [], "negative": []}
    for seed in range(4):
        scene = synth_scene(100 + seed, FAST)
        for p in scene.pairs:
            counts[p.record.label].append(len(p.matches))
    assert min(counts["positive"]) < max(counts["negative"])


def test_generate_corpus_layout(tmp_path):
    params = CorpusParams(n_scenes=3, n_test_scenes=1, max_per_scene=12,
                          flip_fraction=0.2,
                          base=SynthParams(views_per_side=3, world_size=192,
                                           view_size=128))
    summary = generate_corpus(tmp_path, 77, params)
    assert summary["scenes"] == 3
    train = read_manifest(tmp_path / "train_pairs.csv")
    test = read_manifest(tmp_path / "test_pairs.csv")
    assert len(train) == summary["train"] and len(test) == summary["test"]
    assert all(not r.flip_applied for r in test)
    # every manifest pair has its match file and images on disk
    for r in train + test:
        assert (tmp_path / "matches" / f"{r.pair_id}.dgm").exists()
        assert (tmp_path / "matches" / f"{r.pair_id}.sift.dgm").exists()
        assert (tmp_path / "images" / r.image_a).exists()
        assert (tmp_path / "images" / r.image_b).exists()
    # catalog covers every referenced image and supports build_pairs
    catalog = ImageCatalog.read_csv(tmp_path / "catalog.csv")
    naturals = [r for r in train if not r.flip_applied]
    rebuilt = build_pairs(catalog, [(r.image_a, r.image_b) for r in naturals
                                    if catalog.get(r.image_a).direction != "none"])
    by_pair = {(r.image_a, r.image_b): r.label for r in rebuilt}
    for r in naturals:
        if catalog.get(r.image_a).direction == "none":
            continue
        assert by_pair[(r.image_a, r.image_b)] == r.label
    # sift variant carries explicit keypoints
    pm = load_pair_matches(tmp_path / "matches" / f"{train[0].pair_id}.sift.dgm")
    assert len(pm.keypoints_a) > 0
