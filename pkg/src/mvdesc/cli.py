"""Command-line interface: generate, track, describe, match, bench, report."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bench import quick_benchmark_config, run_benchmark
from .hog import DescriptorParams, normalize_density, sample_descriptor
from .matching import METRICS, DescriptorDatabase, nn_query
from .multiview import MultiViewAccumulator
from .scene import default_scene_spec, generate_dataset, load_dataset
from .tracking import TrackerConfig, attach_patches, load_tracks, run_tracker, save_tracks
from .viewsynth import (LocalSurface, patch_density, sample_rotations,
                        select_keyframes, synthesize_views, view_descriptors)


def _cmd_generate(args) -> int:
    spec = default_scene_spec(args.name, args.kind, args.seed)
    if args.spec:
        spec.update(json.loads(Path(args.spec).read_text()))
    ds = generate_dataset(spec, args.out)
    print(f"wrote {len(ds.frames)} frames and {len(ds.tests)} test views "
          f"to {args.out}")
    return 0


def _cmd_track(args) -> int:
    ds = load_dataset(args.dataset)
    cfg = TrackerConfig(n_features=args.features, levels=args.levels,
                        window=args.window, reject_thresh=args.reject)
    images = [v.image for v in ds.frames]
    tracks = run_tracker(images, cfg)
    full = [t for t in tracks if t.alive and t.length == len(images)]
    attach_patches(full, images, args.patch_size, cfg.levels)
    save_tracks(full, args.out, meta={
        "dataset": str(args.dataset),
        "patch_size": args.patch_size,
        "levels": cfg.levels,
        "n_detected": len(tracks),
    })
    print(f"{len(full)} of {len(tracks)} tracks survived all "
          f"{len(images)} frames; saved to {args.out}")
    return 0


def _cmd_describe(args) -> int:
    tracks, meta = load_tracks(args.tracks)
    tracks = [t for t in tracks if t.patches]
    if not tracks:
        print("no tracks with stored patches", file=sys.stderr)
        return 1
    patch_size = args.patch_size or tracks[0].patches[0].shape[0]
    params = DescriptorParams(patch_size)

    if args.method == "rhog" and not args.dataset:
        print("rhog descriptors need --dataset for depth maps", file=sys.stderr)
        return 1

    db = DescriptorDatabase({"sv": "sv", "mv": "mv", "rhog": "r"}[args.method],
                            params, args.metric)
    if args.method == "sv":
        for tr in tracks:
            f = min(args.frame, len(tr.patches) - 1)
            d = normalize_density(patch_density(tr.patches[f], params))
            db.add(tr.id, sample_descriptor(d, "sv"))
    elif args.method == "mv":
        for tr in tracks:
            acc = MultiViewAccumulator(params)
            for patch in tr.patches:
                acc.update(patch_density(patch, params), patch)
            db.add(tr.id, sample_descriptor(acc.finalize(), "mv"))
    else:
        ds = load_dataset(args.dataset)
        from .image import build_pyramid
        levels = int(meta.get("levels", 2))
        pyrs = [build_pyramid(v.image, levels) for v in ds.frames]
        rotations = sample_rotations()
        for tr in tracks:
            g = 0
            for k in select_keyframes(tr.length, args.keyframes):
                try:
                    surf = LocalSurface.from_frame(
                        ds.frames[k].depth, ds.camera, tr.positions[k],
                        patch_size, tr.level)
                    patches, _ = synthesize_views(
                        surf, pyrs[k].level(tr.level), rotations)
                except ValueError:
                    continue
                for vec in view_descriptors(patches, params):
                    db.add(tr.id, vec, g)
                    g += 1
    db.save(args.out)
    print(f"wrote {len(db)} descriptors ({args.method}) for {len(tracks)} "
          f"tracks to {args.out}")
    return 0


def _cmd_match(args) -> int:
    db = DescriptorDatabase.load(args.db)
    queries = DescriptorDatabase.load(args.queries)
    lines = ["query_index,query_track,predicted_track,distance"]
    correct = 0
    for i in range(len(queries)):
        tid, dist = nn_query(db, queries.vector(i), args.metric)
        truth = queries.track_ids[i]
        correct += int(tid == truth)
        lines.append(f"{i},{truth},{tid},{dist:.8f}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    print(f"# accuracy {correct}/{len(queries)} = {correct / len(queries):.4f}",
          file=sys.stderr)
    return 0


def _cmd_bench(args) -> int:
    overrides = quick_benchmark_config() if args.quick else {}
    if args.config:
        overrides.update(json.loads(Path(args.config).read_text()))
    report = run_benchmark(overrides, args.out)
    print(f"benchmark finished in {report['elapsed_seconds']:.1f}s; "
          f"outputs in {args.out}")
    for method, per in sorted(report["pooled"].items()):
        for size, rate in sorted(per.items()):
            print(f"  {method:8s} patch {size:>3s}: {rate:.3f}")
    return 0


def _cmd_report(args) -> int:
    path = Path(args.bench_dir) / "report.json"
    rep = json.loads(path.read_text())
    print("recognition rate, pooled over scenes")
    sizes = sorted({s for per in rep["pooled"].values() for s in per})
    print("method    " + "".join(f"patch {s:>4s}  " for s in sizes))
    for method in ("sv", "mv", "keepall", "rhog"):
        per = rep["pooled"].get(method, {})
        cells = "".join(f"{per.get(s, float('nan')):10.3f}  " for s in sizes)
        print(f"{method:8s}{cells}")
    exc = rep["excitation"]
    print(f"\nexcitation vs rate: spearman {exc['spearman']:.3f} "
          f"over {len(exc['points'])} points")
    mem = rep["memory"]
    print(f"storage slope keepall/mv: {mem['slope_ratio']} "
          f"(keepall {mem['keepall_slope']:.0f} B/frame, "
          f"mv {mem['mv_slope']:.1f} B/frame)")
    print("\ntracks used per scene/patch size:")
    for key, n in sorted(rep["n_tracks"].items()):
        print(f"  {key}: {n}")
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="mvdesc",
        description="multi-view gradient-orientation descriptors and their "
                    "synthetic matching benchmark")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="render a synthetic scene dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--kind", choices=["plane", "heightfield"], default="plane")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--name", default="scene")
    g.add_argument("--spec", help="JSON file overriding scene fields")
    g.set_defaults(func=_cmd_generate)

    t = sub.add_parser("track", help="detect corners and track them")
    t.add_argument("--dataset", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--features", type=int, default=400)
    t.add_argument("--levels", type=int, default=2)
    t.add_argument("--window", type=int, default=11)
    t.add_argument("--reject", type=float, default=0.04)
    t.add_argument("--patch-size", type=int, default=21)
    t.set_defaults(func=_cmd_track)

    d = sub.add_parser("describe", help="build a descriptor database from tracks")
    d.add_argument("--tracks", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--method", choices=["sv", "mv", "rhog"], default="mv")
    d.add_argument("--frame", type=int, default=0, help="frame index for sv")
    d.add_argument("--keyframes", type=int, default=10, help="keyframes for rhog")
    d.add_argument("--dataset", help="dataset dir (rhog needs depth maps)")
    d.add_argument("--patch-size", type=int)
    d.add_argument("--metric", default="l2", choices=list(METRICS))
    d.set_defaults(func=_cmd_describe)

    m = sub.add_parser("match", help="query one database against another")
    m.add_argument("--db", required=True)
    m.add_argument("--queries", required=True)
    m.add_argument("--metric", choices=list(METRICS))
    m.add_argument("--out", help="write CSV here instead of stdout")
    m.set_defaults(func=_cmd_match)

    b = sub.add_parser("bench", help="run the full matching benchmark")
    b.add_argument("--out", required=True)
    b.add_argument("--config", help="JSON overriding benchmark defaults")
    b.add_argument("--quick", action="store_true",
                   help="single small scene, for smoke tests")
    b.set_defaults(func=_cmd_bench)

    r = sub.add_parser("report", help="summarize a finished benchmark")
    r.add_argument("--bench-dir", required=True)
    r.set_defaults(func=_cmd_report)

    args = ap.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
