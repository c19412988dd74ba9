"""Command-line pipeline: synth / prepare / train / infer / evaluate /
filter / curate.

Every command resolves its configuration from (in increasing
precedence) built-in defaults, an optional ``--config`` key=value file,
and command-line flags, then writes the resolved values to
``run_config.txt`` next to its outputs.  Errors exit nonzero with a
single machine-parsable ``error: <Type>: <message>`` line on stderr.
"""

import argparse
import csv
import os
import sys
from pathlib import Path

from .errors import DGPairError, InvalidParams

DATA_DIR_ENV = "DG_DATA_DIR"


def _read_config_file(path):
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidParams(f"{path}:{lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


def _apply_config_file(subparsers, argv):
    """Pre-parse --config and install its values as subcommand defaults."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    command = next((a for a in argv if not a.startswith("-")), None)
    if command not in subparsers:
        return
    sub = subparsers[command]
    values = _read_config_file(known.config)
    valid = {action.dest for action in sub._actions}
    unknown = set(values) - valid
    if unknown:
        raise InvalidParams(f"{known.config}: unknown config keys {sorted(unknown)}")
    sub.set_defaults(**values)


def _write_run_config(out_dir, args, command):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    skip = {"config", "func"}
    with open(out_dir / "run_config.txt", "w", encoding="utf-8") as fh:
        fh.write(f"command = {command}\n")
        for key in sorted(vars(args)):
            if key in skip:
                continue
            fh.write(f"{key} = {getattr(args, key)}\n")


def _ablation_set(values):
    flags = set()
    for v in values or ():
        flags.update(part.strip() for part in str(v).split(",") if part.strip())
    return frozenset(flags)


def _data_root(args):
    root = args.data_root or os.environ.get(DATA_DIR_ENV)
    if not root:
        raise InvalidParams(f"--data-root not given and {DATA_DIR_ENV} unset")
    return Path(root)


def _add_common(p, out_required=True):
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=out_required, help="output directory")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(args):
    from dataclasses import replace

    from .synth import CorpusParams, SynthParams, generate_corpus

    base = SynthParams(
        noise=float(args.noise),
        detail_density=float(args.detail_density),
        views_per_side=int(args.views_per_side),
    )
    params = CorpusParams(
        n_scenes=int(args.scenes), n_test_scenes=int(args.test_scenes),
        max_per_scene=int(args.max_per_scene), flip_fraction=float(args.flip_fraction),
        base=base, mixed_symmetry=not args.symmetry,
    )
    if args.symmetry:
        params = replace(params, base=replace(base, symmetry=args.symmetry))
    summary = generate_corpus(args.out, int(args.seed), params)
    _write_run_config(args.out, args, "synth")
    print(f"synth: {summary['scenes']} scenes, {summary['train']} train / "
          f"{summary['test']} test pairs at {args.out}")
    return 0


def cmd_prepare(args):
    from .matchio import read_manifest
    from .pipeline import PrepareConfig, prepare_manifest

    records = read_manifest(args.manifest)
    cfg = PrepareConfig(
        input_size=int(args.input_size),
        score_threshold=float(args.score_threshold),
        reproj_error=float(args.reproj_error),
        confidence=float(args.confidence),
        affine_inlier_error=float(args.affine_inlier_error),
        seed=int(args.seed),
        ablation=_ablation_set(args.ablation),
    )
    report = prepare_manifest(
        records, _data_root(args), args.match_dir, args.out, cfg,
        log=print if args.verbose else None, workers=int(args.workers),
    )
    _write_run_config(args.out, args, "prepare")
    print(f"prepare: {report.prepared} pairs ready, {len(report.skipped)} skipped")
    for pair_id, reason in report.skipped:
        print(f"  skipped {pair_id}: {reason}")
    return 0


def cmd_train(args):
    from .matchio import read_manifest
    from .model import ArtifactDataset, LossConfig, TrainConfig, save_checkpoint, train
    from .pipeline import artifact_path

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ablation = _ablation_set(args.ablation)
    records = [r for r in read_manifest(args.manifest)
               if artifact_path(args.artifacts, r.pair_id).exists()]
    dataset = ArtifactDataset(records, args.artifacts, ablation)
    val_dataset = None
    if args.val_manifest:
        val_arts = args.val_artifacts or args.artifacts
        val_records = [r for r in read_manifest(args.val_manifest)
                       if artifact_path(val_arts, r.pair_id).exists()]
        val_dataset = ArtifactDataset(val_records, val_arts, ablation)
    cfg = TrainConfig(
        epochs=int(args.epochs), batch_size=int(args.batch_size),
        lr_start=float(args.lr_start), lr_end=float(args.lr_end),
        seed=int(args.seed), input_size=int(args.input_size),
    )
    loss_cfg = LossConfig(alpha=float(args.alpha), gamma=float(args.gamma))
    model, history = train(
        dataset, cfg, loss_cfg, val_dataset=val_dataset,
        checkpoint_dir=out, ablation=ablation, log=print,
    )
    save_checkpoint(out / "model.pt", model, cfg, loss_cfg, ablation)
    with open(out / "history.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "lr", "train_loss", "val_ap"])
        for row in history:
            w.writerow([row["epoch"], f"{row['lr']:.8f}", f"{row['train_loss']:.6f}",
                        "" if row["val_ap"] is None else f"{row['val_ap']:.6f}"])
    _write_run_config(out, args, "train")
    print(f"train: wrote {out / 'model.pt'}")
    return 0


def cmd_infer(args):
    from .matchio import read_manifest
    from .metrics import ScoredPair, write_scores_csv
    from .model import ArtifactDataset, load_checkpoint, predict_batched
    from .pipeline import artifact_path

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model, cfg, _, ablation = load_checkpoint(args.checkpoint)
    records = [r for r in read_manifest(args.manifest)
               if artifact_path(args.artifacts, r.pair_id).exists()]
    dataset = ArtifactDataset(records, args.artifacts, ablation)
    probs = predict_batched(model, dataset, batch_size=cfg.batch_size)
    scored = [
        ScoredPair(r.pair_id, r.scene, 1 if r.label == "positive" else 0, float(p))
        for r, p in zip(records, probs)
    ]
    write_scores_csv(out / "scores.csv", scored)
    _write_run_config(out, args, "infer")
    print(f"infer: scored {len(scored)} pairs -> {out / 'scores.csv'}")
    return 0


def cmd_evaluate(args):
    from . import metrics

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scored = metrics.read_scores_csv(args.scores)
    report = metrics.per_scene_report(scored)
    report.to_csv(out / "report.csv")
    text = report.to_text()

    tp, fp, tn, fn = metrics.confusion(scored, float(args.threshold))
    text += (f"\nconfusion @ {float(args.threshold):.2f}: "
             f"TP={tp} FP={fp} TN={tn} FN={fn}\n")

    if args.pair_stats:
        stats = metrics.read_pair_stats_csv(args.pair_stats)
        for mode in metrics.BASELINE_MODES:
            baseline = metrics.baseline_scores(stats, mode=mode,
                                               denominator=args.ratio_denominator)
            rep = metrics.per_scene_report(baseline)
            text += (f"baseline {mode}: macro AP="
                     f"{rep.macro_ap:.4f} macro ROC AUC={rep.macro_auc:.4f}\n")

    recalls, precisions = metrics.pr_curve(scored)
    metrics.write_curve_csv(out / "pr_curve.csv", recalls, precisions, "recall", "precision")
    fpr, tpr = metrics.roc_curve(scored)
    metrics.write_curve_csv(out / "roc_curve.csv", fpr, tpr, "fpr", "tpr")

    with open(out / "report.txt", "w", encoding="utf-8") as fh:
        fh.write(text)
    _write_run_config(out, args, "evaluate")
    print(text, end="")
    return 0


def cmd_filter(args):
    from . import sfmfilter

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.graph:
        graph = sfmfilter.read_graph_csv(args.graph)
    elif args.manifest and args.pair_stats and args.scores:
        graph = _graph_from_pipeline(args.manifest, args.pair_stats, args.scores)
    else:
        raise InvalidParams("give --graph, or --manifest with --pair-stats and --scores")
    filtered = sfmfilter.filter_edges(graph, float(args.tau))
    sfmfilter.write_graph_csv(out / "filtered_graph.csv", filtered)

    comps = sfmfilter.connected_components(filtered)
    with open(out / "components.txt", "w", encoding="utf-8") as fh:
        fh.write(f"tau = {float(args.tau)}\n")
        fh.write(f"{len(comps)} components\n")
        for i, comp in enumerate(comps):
            fh.write(f"component {i}: {' '.join(comp)}\n")

    taus = [float(t) for t in args.sweep.split(",")] if args.sweep else sfmfilter.SWEEP_TAUS
    rows = sfmfilter.threshold_sweep(graph, taus)
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "n_edges", "n_components"])
        for row in rows:
            w.writerow([f"{row.tau:.4f}", row.n_edges, row.n_components])

    if args.match_dir:
        edge_matches, indexer = _collect_edge_matches(filtered, args.match_dir)
        sfmfilter.export_matches(filtered, edge_matches, out / "matches_import.txt")

    _write_run_config(out, args, "filter")
    print(f"filter: kept {filtered.num_edges()}/{graph.num_edges()} edges, "
          f"{len(comps)} components")
    return 0


def _graph_from_pipeline(manifest_path, pair_stats_path, scores_path):
    """Scene graph assembled from the pipeline's own outputs.

    Nodes are the manifest's images, edges its pairs; verified counts
    come from pair_stats.csv and probabilities from scores.csv.
    """
    from .matchio import read_manifest
    from .metrics import read_pair_stats_csv, read_scores_csv
    from .sfmfilter import build_scene_graph

    records = read_manifest(manifest_path)
    counts = {s.pair_id: s.n_matches_verified for s in read_pair_stats_csv(pair_stats_path)}
    probs = {s.pair_id: s.score for s in read_scores_csv(scores_path)}
    pairs = []
    roster = set()
    for r in records:
        roster.update((r.image_a, r.image_b))
        if r.pair_id in counts and r.pair_id in probs:
            pairs.append((r.image_a, r.image_b, counts[r.pair_id], probs[r.pair_id]))
    return build_scene_graph(pairs, roster=roster)


def _collect_edge_matches(graph, match_dir):
    """Verified per-edge keypoint-index pairs from the match files.

    Match files are looked up by image stems as
    <scene>__<stem_a>__<stem_b>.dgm (falling back to plain
    <stem_a>__<stem_b>.dgm); verified matches are indexed against
    per-image keypoint registries.
    """
    from .errors import MissingMatches
    from .matchio import load_pair_matches, verify_pair
    from .sfmfilter import KeypointIndexer

    indexer = KeypointIndexer()
    edge_matches = {}
    for (a, b) in sorted(graph.edges):
        stem_a = Path(a).stem
        stem_b = Path(b).stem
        scene = Path(a).parts[0] if len(Path(a).parts) > 1 else None
        candidates = []
        for x, y in ((stem_a, stem_b), (stem_b, stem_a)):
            if scene:
                candidates.append((Path(match_dir) / f"{scene}__{x}__{y}.dgm", x == stem_b))
            candidates.append((Path(match_dir) / f"{x}__{y}.dgm", x == stem_b))
        hit = next(((p, swapped) for p, swapped in candidates if p.exists()), None)
        if hit is None:
            raise MissingMatches(f"no match file for retained edge ({a}, {b})")
        path, swapped = hit
        pm = load_pair_matches(path)
        _, verified = verify_pair(pm.matches)
        pts_a, pts_b = (verified.b, verified.a) if swapped else (verified.a, verified.b)
        edge_matches[(a, b)] = (indexer.register(a, pts_a), indexer.register(b, pts_b))
    return edge_matches, indexer


def cmd_curate(args):
    import numpy as np

    from . import sfmfilter
    from .data import ImageCatalog, knn_curate

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    graph = sfmfilter.read_graph_csv(args.graph)
    catalog = ImageCatalog.read_csv(args.catalog)
    images = sorted(graph.nodes | {e.image_id for e in catalog.entries()})
    index = {img: i for i, img in enumerate(images)}
    A = np.zeros((len(images), len(images)), dtype=np.int64)
    for e in graph.sorted_edges():
        A[index[e.a], index[e.b]] = e.num_matches
        A[index[e.b], index[e.a]] = e.num_matches
    labels = np.array([catalog.get(img).direction for img in images])
    flagged = knn_curate(A, labels, k=int(args.k))
    with open(out / "flagged_images.txt", "w", encoding="utf-8") as fh:
        for i in flagged:
            fh.write(images[i] + "\n")
    _write_run_config(out, args, "curate")
    print(f"curate: flagged {len(flagged)} of {len(images)} images")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="dgpair",
        description="Pairwise visual disambiguation and scene-graph filtering.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {}

    def add_parser(name, **kwargs):
        commands[name] = sub.add_parser(name, **kwargs)
        return commands[name]

    p = add_parser("synth", help="generate a synthetic corpus")
    _add_common(p)
    p.add_argument("--scenes", type=int, default=40)
    p.add_argument("--test-scenes", type=int, default=10)
    p.add_argument("--max-per-scene", type=int, default=50)
    p.add_argument("--views-per-side", type=int, default=6)
    p.add_argument("--flip-fraction", type=float, default=0.15)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--detail-density", type=float, default=1.0)
    p.add_argument("--symmetry", choices=["two-way", "four-way", "replica"],
                   help="fix one symmetry type instead of cycling all three")
    p.set_defaults(func=cmd_synth)

    p = add_parser("prepare", help="build pair artifacts from a manifest")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--match-dir", required=True)
    p.add_argument("--data-root", help=f"image root (default: ${DATA_DIR_ENV})")
    p.add_argument("--input-size", type=int, default=1024)
    p.add_argument("--score-threshold", type=float, default=0.8)
    p.add_argument("--reproj-error", type=float, default=3.0)
    p.add_argument("--confidence", type=float, default=0.99)
    p.add_argument("--affine-inlier-error", type=float, default=20.0)
    p.add_argument("--ablation", action="append",
                   help="no-masks,no-rgb,no-align,no-geo-verify,sift-masks")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_prepare)

    p = add_parser("train", help="train the pair classifier")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--val-manifest")
    p.add_argument("--artifacts", required=True)
    p.add_argument("--val-artifacts", help="artifact dir for --val-manifest (default: --artifacts)")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr-start", type=float, default=5e-4)
    p.add_argument("--lr-end", type=float, default=5e-6)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--input-size", type=int, default=1024)
    p.add_argument("--ablation", action="append")
    p.set_defaults(func=cmd_train)

    p = add_parser("infer", help="score pairs with a trained model")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--artifacts", required=True)
    p.set_defaults(func=cmd_infer)

    p = add_parser("evaluate", help="per-scene AP / ROC AUC report")
    _add_common(p)
    p.add_argument("--scores", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--pair-stats", help="pair_stats.csv for the match-count baselines")
    p.add_argument("--ratio-denominator", choices=["sum", "min"], default="sum")
    p.set_defaults(func=cmd_evaluate)

    p = add_parser("filter", help="threshold scene-graph edges and export matches")
    _add_common(p)
    p.add_argument("--graph", help="graph csv with probabilities")
    p.add_argument("--manifest", help="build the graph from pipeline outputs instead")
    p.add_argument("--pair-stats", help="pair_stats.csv (with --manifest)")
    p.add_argument("--scores", help="scores.csv (with --manifest)")
    p.add_argument("--tau", type=float, default=0.8)
    p.add_argument("--sweep", help="comma-separated tau list (default 0.5..0.97 set)")
    p.add_argument("--match-dir", help="match files for the raw match export")
    p.set_defaults(func=cmd_filter)

    p = add_parser("curate", help="flag mislabeled images via K-NN connectivity")
    _add_common(p)
    p.add_argument("--graph", required=True, help="graph csv with match counts")
    p.add_argument("--catalog", required=True, help="image_id,scene,direction csv")
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=cmd_curate)

    return parser, commands


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, commands = build_parser()
    try:
        _apply_config_file(commands, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except (DGPairError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
