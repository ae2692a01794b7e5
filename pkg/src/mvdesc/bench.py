"""End-to-end matching benchmark on synthetic ground-truthed scenes.

The pipeline per scene: render a training orbit and held-out test views,
track corners through the orbit, build one descriptor database per method,
then query each database with descriptors computed at the ground-truth
location of every track in every test view. A query is correct when the
nearest stored track is the one it came from, so the reported rate is a
recognition rate over tracks.

Methods compared:

* ``sv``      one tracked frame per track (averaged over seeded draws)
* ``mv``      all frames averaged into a single density per track
* ``keepall`` every frame kept as its own row, best row wins
* ``rhog``    per-view descriptors synthesized from ground-truth depth,
              best row wins (max-out matching)
"""

from __future__ import annotations

import csv
import json
import math
import time
from pathlib import Path

import numpy as np

from .hog import DescriptorParams, normalize_density, sample_descriptor
from .image import GrayImage, base_to_level, build_pyramid, level_to_base
from .matching import DescriptorDatabase, match_all, likelihood_query
from .multiview import MultiViewAccumulator, excitation_score, patch_scatter
from .scene import VISIBLE, generate_dataset, ground_truth_correspondence
from .tracking import TrackerConfig, extract_patch, normalize_patch, run_tracker
from .viewsynth import (LocalSurface, patch_density, sample_rotations,
                        select_keyframes, synthesize_views, view_descriptors)

__all__ = [
    "default_benchmark_config",
    "quick_benchmark_config",
    "run_benchmark",
    "spearman",
    "memory_scaling",
    "update_cost_profile",
]


def default_benchmark_config() -> dict:
    """Desk-scale benchmark: five scenes, two patch sizes, minutes to run."""
    return {
        "seed": 7,
        "metric": "l2",
        "patch_sizes": [11, 21],
        "sv_trials": 5,
        "max_tracks": 140,
        "min_tracks": 100,
        "scenes": [
            {"name": "plane0", "kind": "plane", "seed": 101},
            {"name": "relief0", "kind": "heightfield", "seed": 202},
            {"name": "plane1", "kind": "plane", "seed": 303},
            {"name": "relief1", "kind": "heightfield", "seed": 404},
            {"name": "plane2", "kind": "plane", "seed": 505},
        ],
        "tracker": {
            "n_features": 500,
            "levels": 2,
            "window": 11,
            "reject_thresh": 0.04,
            "min_border": 13,
        },
        "rhog": {
            "keyframes": 4,
            "n_azimuth": 4,
            "n_inplane": 5,
            "tilt": math.pi / 6,
            "inplane_halfwidth": math.pi / 3,
            "min_facing": 0.2,
        },
        "excitation": {"ks": [2, 5, 10, 20, 30], "trials": 5, "patch_size": 21},
        "memory_lengths": [5, 10, 15, 20, 25, 30],
        "timing_lengths": [1, 5, 10, 15, 20, 25, 30],
        "timing_reps": 200,
        "include_likelihood": False,
    }


def quick_benchmark_config() -> dict:
    """Overrides for a single-scene run that finishes in well under a minute."""
    return {
        "scenes": [{"name": "plane0", "kind": "plane", "seed": 101}],
        "patch_sizes": [11],
        "sv_trials": 2,
        "max_tracks": 60,
        "min_tracks": 20,
        "tracker": {"n_features": 250},
        "excitation": {"ks": [2, 10, 30], "trials": 2, "patch_size": 11},
        "memory_lengths": [5, 15, 30],
        "timing_lengths": [1, 10, 30],
        "timing_reps": 50,
    }


def _merge_config(overrides: dict = None) -> dict:
    cfg = default_benchmark_config()
    for k, v in (overrides or {}).items():
        if isinstance(v, dict) and isinstance(cfg.get(k), dict):
            cfg[k] = {**cfg[k], **v}
        else:
            cfg[k] = v
    return cfg


# ---------------------------------------------------------------------------
# statistics helpers


def _avg_ranks(a: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties sharing their average rank."""
    a = np.asarray(a, dtype=np.float64)
    order = np.argsort(a, kind="stable")
    ranks = np.empty(a.size)
    ranks[order] = np.arange(1, a.size + 1)
    vals, inv, cnt = np.unique(a, return_inverse=True, return_counts=True)
    sums = np.zeros(vals.size)
    np.add.at(sums, inv, ranks)
    return sums[inv] / cnt[inv]


def spearman(x, y) -> float:
    """Rank correlation in [-1, 1]; 0 when either input is constant."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if x.size != y.size or x.size < 2:
        raise ValueError("need two same-length samples")
    rx = _avg_ranks(x) - (x.size + 1) / 2.0
    ry = _avg_ranks(y) - (y.size + 1) / 2.0
    denom = math.sqrt(float((rx * rx).sum()) * float((ry * ry).sum()))
    if denom == 0.0:
        return 0.0
    return float((rx * ry).sum() / denom)


# ---------------------------------------------------------------------------
# storage and update-cost studies


def memory_scaling(track_densities: list, params: DescriptorParams,
                   lengths) -> dict:
    """Stored bytes versus track length for the running-average and keep-all
    strategies, with fitted slopes (bytes per extra frame).

    ``track_densities`` holds one list of per-frame unnormalized densities
    per track; databases are actually built for each prefix length, and their
    real storage cost is measured.
    """
    lengths = [int(t) for t in lengths]
    mv_bytes, keep_bytes = [], []
    for t in lengths:
        mv_db = DescriptorDatabase("mv", params)
        keep_db = DescriptorDatabase("sv", params)
        for tid, dens in enumerate(track_densities):
            if len(dens) < t:
                raise ValueError(f"track {tid} has fewer than {t} frames")
            acc = MultiViewAccumulator(params)
            for d in dens[:t]:
                acc.update(d)
            mv_db.add(tid, sample_descriptor(acc.finalize(), "mv"))
            for g, d in enumerate(dens[:t]):
                keep_db.add(tid, sample_descriptor(normalize_density(d), "sv"), g)
        mv_bytes.append(mv_db.memory_bytes)
        keep_bytes.append(keep_db.memory_bytes)

    mv_slope = float(np.polyfit(lengths, mv_bytes, 1)[0])
    keep_slope = float(np.polyfit(lengths, keep_bytes, 1)[0])
    ratio = math.inf if abs(mv_slope) < 1e-9 else keep_slope / abs(mv_slope)
    return {
        "lengths": lengths,
        "mv_bytes": mv_bytes,
        "keepall_bytes": keep_bytes,
        "mv_slope": mv_slope,
        "keepall_slope": keep_slope,
        "slope_ratio": ratio,
    }


def update_cost_profile(densities: list, params: DescriptorParams,
                        lengths, reps: int = 200) -> dict:
    """Wall-clock cost of folding in one more frame, at several track lengths.

    One accumulator per length is advanced once, then a single extra update
    is timed at each length (best of ``reps``, reverting the state between
    repetitions). The rounds interleave the lengths so a transient load spike
    inflates all of them alike instead of biasing one; flatness is a ratio
    across lengths, so correlated noise cancels. For a constant-time update
    the profile is flat.
    """
    lengths = [int(t) for t in lengths]
    probe = densities[-1]
    accs = []
    for t in lengths:
        acc = MultiViewAccumulator(params)
        for i in range(t):
            acc.update(densities[i % len(densities)])
        accs.append(acc)

    def probe_once(acc):
        t0 = time.perf_counter()
        acc.update(probe)
        dt = time.perf_counter() - t0
        acc.density_sum -= probe.grid  # revert, keeping the length fixed
        acc.frames -= 1
        return dt

    for acc in accs:
        probe_once(acc)  # warm-up round, not timed
    best = [math.inf] * len(lengths)
    for _ in range(reps):
        for k, acc in enumerate(accs):
            best[k] = min(best[k], probe_once(acc))
    return {"lengths": lengths, "update_seconds": best,
            "flatness": max(best) / min(best)}


# ---------------------------------------------------------------------------
# per-scene pipeline


class _SceneRun:
    """Everything the benchmark derives from one scene."""

    def __init__(self, spec: dict, cfg: dict, out_dir: Path):
        self.cfg = cfg
        self.dataset = generate_dataset(spec, out_dir)
        self.name = self.dataset.name
        tcfg = TrackerConfig(**cfg["tracker"])
        self.tracker_cfg = tcfg
        self.n_frames = len(self.dataset.frames)

        images = [v.image for v in self.dataset.frames]
        self.frame_pyrs = [build_pyramid(im, tcfg.levels) for im in images]
        self.test_pyrs = [build_pyramid(v.image, tcfg.levels)
                          for v in self.dataset.tests]

        tracks = run_tracker(images, tcfg)
        self.tracks = [t for t in tracks
                       if t.alive and t.length == self.n_frames]

        # ground-truth location of each track's frame-0 anchor in each test view
        self.corrs = {}
        for tr in self.tracks:
            base0 = level_to_base(tr.positions[0], tr.level)
            self.corrs[tr.id] = [
                ground_truth_correspondence(self.dataset.frames[0], tv, base0)
                for tv in self.dataset.tests
            ]

    # -- per patch size ---------------------------------------------------

    def prepare(self, patch_size: int):
        """Patches, densities, synthesized-view surfaces for one patch size.

        Drops tracks that cannot supply every ingredient (full patch support
        in every frame at their level, and a liftable surface in at least one
        keyframe), so every method sees the same track set.
        """
        cfg = self.cfg
        params = DescriptorParams(patch_size)
        rot = sample_rotations(cfg["rhog"]["n_azimuth"], cfg["rhog"]["n_inplane"],
                               cfg["rhog"]["tilt"], cfg["rhog"]["inplane_halfwidth"])
        keyframes = select_keyframes(self.n_frames, cfg["rhog"]["keyframes"])
        half = (patch_size - 1) / 2.0

        usable = []
        for tr in self.tracks:
            if len(usable) >= cfg["max_tracks"]:
                break
            ok = True
            for f, pos in enumerate(tr.positions):
                h, w = self.frame_pyrs[f].level(tr.level).shape
                if not (half + 1 <= pos[0] <= w - 2 - half
                        and half + 1 <= pos[1] <= h - 2 - half):
                    ok = False
                    break
            if not ok:
                continue
            surfaces = []
            for k in keyframes:
                try:
                    surfaces.append((int(k), LocalSurface.from_frame(
                        self.dataset.frames[k].depth, self.dataset.camera,
                        tr.positions[k], patch_size, tr.level)))
                except ValueError:
                    continue
            if not surfaces:
                continue
            usable.append((tr, surfaces))

        track_densities = []
        track_patches = []
        for tr, _ in usable:
            dens, pats = [], []
            for f, pos in enumerate(tr.positions):
                raw = extract_patch(self.frame_pyrs[f].level(tr.level), pos,
                                    patch_size)
                patch = GrayImage.from_u8(GrayImage(normalize_patch(raw)).to_u8()).data
                pats.append(patch)
                dens.append(patch_density(patch, params))
            track_densities.append(dens)
            track_patches.append(np.array(pats))

        queries = self._build_queries(usable, params)
        return {
            "params": params,
            "usable": usable,
            "densities": track_densities,
            "patches": track_patches,
            "rotations": rot,
            "queries": queries,
        }

    def _build_queries(self, usable, params: DescriptorParams):
        """Descriptors at ground-truth positions in the test views.

        The same query set serves every method, so rate differences come
        only from what each database stores.
        """
        half = (params.patch_size - 1) / 2.0
        ids, views, values = [], [], []
        for tr, _ in usable:
            for vi, corr in enumerate(self.corrs[tr.id]):
                if corr.status != VISIBLE:
                    continue
                lvl_img = self.test_pyrs[vi].level(tr.level)
                h, w = lvl_img.shape
                xy = base_to_level(corr.xy, tr.level)
                if not (half + 1 <= xy[0] <= w - 2 - half
                        and half + 1 <= xy[1] <= h - 2 - half):
                    continue
                raw = extract_patch(lvl_img, xy, params.patch_size)
                patch = GrayImage.from_u8(GrayImage(normalize_patch(raw)).to_u8()).data
                dens = normalize_density(patch_density(patch, params))
                ids.append(tr.id)
                views.append(vi)
                values.append(dens.grid.reshape(-1))
        return {"track_ids": np.array(ids, dtype=int),
                "view_idx": np.array(views, dtype=int),
                "values": np.array(values) if values else np.zeros((0, 0))}

    # -- databases ---------------------------------------------------------

    def build_mv_db(self, prep, subset=None) -> DescriptorDatabase:
        params = prep["params"]
        db = DescriptorDatabase("mv", params, self.cfg["metric"])
        for (tr, _), dens in zip(prep["usable"], prep["densities"]):
            acc = MultiViewAccumulator(params)
            for f in (subset if subset is not None else range(len(dens))):
                acc.update(dens[f])
            db.add(tr.id, sample_descriptor(acc.finalize(), "mv"))
        return db

    def build_sv_db(self, prep, rng: np.random.Generator) -> DescriptorDatabase:
        params = prep["params"]
        db = DescriptorDatabase("sv", params, self.cfg["metric"])
        for (tr, _), dens in zip(prep["usable"], prep["densities"]):
            f = int(rng.integers(0, len(dens)))
            db.add(tr.id, sample_descriptor(normalize_density(dens[f]), "sv"))
        return db

    def build_keepall_db(self, prep) -> DescriptorDatabase:
        params = prep["params"]
        db = DescriptorDatabase("sv", params, self.cfg["metric"])
        for (tr, _), dens in zip(prep["usable"], prep["densities"]):
            for f, d in enumerate(dens):
                db.add(tr.id, sample_descriptor(normalize_density(d), "sv"), f)
        return db

    def build_rhog_db(self, prep) -> DescriptorDatabase:
        # max-out matching is squared-l2 over rows, so the metric is fixed
        params = prep["params"]
        db = DescriptorDatabase("r", params, "l2")
        for tr, surfaces in prep["usable"]:
            g = 0
            for k, surf in surfaces:
                lvl_img = self.frame_pyrs[k].level(tr.level)
                try:
                    patches, _ = synthesize_views(
                        surf, lvl_img, prep["rotations"],
                        self.cfg["rhog"]["min_facing"])
                except ValueError:
                    continue
                for vec in view_descriptors(patches, params):
                    db.add(tr.id, vec, g)
                    g += 1
        return db

    def rate(self, db: DescriptorDatabase, prep, metric: str = None):
        q = prep["queries"]
        if q["values"].shape[0] == 0:
            return 0.0, 0
        pred, _ = match_all(db, q["values"], metric)
        return float(np.mean(pred == q["track_ids"])), len(pred)

    def likelihood_rate(self, db: DescriptorDatabase, prep):
        q = prep["queries"]
        correct = 0
        for truth, vals in zip(q["track_ids"], q["values"]):
            pred, _ = likelihood_query(db, vals)
            correct += int(pred == truth)
        n = len(q["track_ids"])
        return (correct / n if n else 0.0), n


# ---------------------------------------------------------------------------
# the full run


def run_benchmark(config: dict = None, out_dir="bench_out") -> dict:
    """Run the full benchmark and write report/excitation/timing files.

    Everything except ``timing.csv`` (wall-clock measurements) is a pure
    function of the config, so repeated runs produce byte-identical output.
    Returns the report dictionary.
    """
    cfg = _merge_config(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()

    runs = [_SceneRun(spec, cfg, out / "scenes" / spec["name"])
            for spec in cfg["scenes"]]

    methods = ["sv", "mv", "keepall", "rhog"]
    rows = []                 # (scene, method, patch_size, metric, rate)
    pooled = {m: {} for m in methods}
    n_tracks = {}
    preps = {}

    for run in runs:
        for size in cfg["patch_sizes"]:
            prep = run.prepare(size)
            preps[(run.name, size)] = prep
            n_tracks[f"{run.name}/{size}"] = len(prep["usable"])
            truth = prep["queries"]["track_ids"]

            mv_db = run.build_mv_db(prep)
            keep_db = run.build_keepall_db(prep)
            rhog_db = run.build_rhog_db(prep)

            sv_rates = []
            n_q = 0
            for trial in range(cfg["sv_trials"]):
                rng = np.random.default_rng(np.random.SeedSequence(
                    (cfg["seed"], hash_name(run.name), size, 11, trial)))
                r, n_q = run.rate(run.build_sv_db(prep, rng), prep)
                sv_rates.append(r)
            scene_rates = {
                "sv": float(np.mean(sv_rates)),
                "mv": run.rate(mv_db, prep)[0],
                "keepall": run.rate(keep_db, prep)[0],
                "rhog": run.rate(rhog_db, prep, "l2")[0],
            }
            for m in methods:
                metric = "l2" if m == "rhog" else cfg["metric"]
                rows.append((run.name, m, size, metric, scene_rates[m]))
                bucket = pooled[m].setdefault(size, {"correct": 0.0, "n": 0})
                bucket["correct"] += scene_rates[m] * len(truth)
                bucket["n"] += len(truth)
            if cfg["include_likelihood"]:
                r, _ = run.likelihood_rate(mv_db, prep)
                rows.append((run.name, "mv", size, "loglik", r))

    pooled_rates = {m: {str(s): (b["correct"] / b["n"] if b["n"] else 0.0)
                        for s, b in per.items()}
                    for m, per in pooled.items()}
    for m in methods:
        for s, r in pooled_rates[m].items():
            metric = "l2" if m == "rhog" else cfg["metric"]
            rows.append(("ALL", m, int(s), metric, r))

    # -- excitation study --------------------------------------------------
    # Subsets are contiguous windows of the (closed) orbit with a random
    # start: window length stands in for how long the point was observed,
    # so both the excitation proxy and the appearance coverage grow with k.
    exc_cfg = cfg["excitation"]
    exc_size = exc_cfg["patch_size"]
    exc_points = []
    for k in exc_cfg["ks"]:
        for trial in range(exc_cfg["trials"]):
            rng = np.random.default_rng(np.random.SeedSequence(
                (cfg["seed"], 77, int(k), trial)))
            correct = total = 0
            exc_vals = []
            for run in runs:
                prep = preps[(run.name, exc_size)]
                n = min(int(k), run.n_frames)
                start = int(rng.integers(0, run.n_frames))
                subset = (start + np.arange(n)) % run.n_frames
                db = run.build_mv_db(prep, subset=subset)
                r, nq = run.rate(db, prep)
                correct += r * nq
                total += nq
                for pats in prep["patches"]:
                    exc_vals.append(excitation_score(pats[subset],
                                                     patch_scatter(pats)))
            exc_points.append({
                "k": int(k),
                "trial": trial,
                "excitation": float(np.mean(exc_vals)),
                "rate": (correct / total) if total else 0.0,
            })
    ks = sorted({p["k"] for p in exc_points})
    mean_exc = [float(np.mean([p["excitation"] for p in exc_points if p["k"] == k]))
                for k in ks]
    mean_rate = [float(np.mean([p["rate"] for p in exc_points if p["k"] == k]))
                 for k in ks]
    exc_spearman = spearman(mean_exc, mean_rate)

    # -- storage and update-cost studies -----------------------------------
    ref_prep = preps[(runs[0].name, cfg["patch_sizes"][-1])]
    memory = memory_scaling(ref_prep["densities"], ref_prep["params"],
                            cfg["memory_lengths"])
    timing = update_cost_profile(ref_prep["densities"][0], ref_prep["params"],
                                 cfg["timing_lengths"], cfg["timing_reps"])

    elapsed = time.perf_counter() - t_start
    report = {
        "config": cfg,
        "rows": [{"scene": s, "method": m, "patch_size": p, "metric": met,
                  "rate": r} for (s, m, p, met, r) in rows],
        "pooled": pooled_rates,
        "n_tracks": n_tracks,
        "excitation": {"points": exc_points, "spearman": exc_spearman,
                       "mean_excitation": mean_exc, "mean_rate": mean_rate,
                       "ks": ks},
        "memory": memory,
    }

    _write_report_csv(out / "report.csv", rows)
    (out / "report.json").write_text(
        json.dumps(_jsonable(report), sort_keys=True, indent=1) + "\n")
    _write_excitation_csv(out / "excitation.csv", exc_points)
    _write_timing_csv(out / "timing.csv", timing, elapsed)
    report["timing"] = timing
    report["elapsed_seconds"] = elapsed
    return report


def hash_name(name: str) -> int:
    """Stable small integer from a scene name (hash() is salted per process)."""
    h = 0
    for ch in name:
        h = (h * 131 + ord(ch)) % 1000003
    return h


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    return obj


def _write_report_csv(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scene", "method", "patch_size", "metric", "rate"])
        for scene, method, size, metric, rate in rows:
            w.writerow([scene, method, size, metric, f"{rate:.6f}"])


def _write_excitation_csv(path: Path, points) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "trial", "excitation", "rate"])
        for p in points:
            w.writerow([p["k"], p["trial"], f"{p['excitation']:.8f}",
                        f"{p['rate']:.6f}"])


def _write_timing_csv(path: Path, timing: dict, elapsed: float) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frames", "update_seconds"])
        for t, s in zip(timing["lengths"], timing["update_seconds"]):
            w.writerow([t, f"{s:.9f}"])
        w.writerow(["total_wall_seconds", f"{elapsed:.3f}"])
