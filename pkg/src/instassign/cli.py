"""Command-line entry point: simulate, assign, eval, bench.

Exit codes: 0 success, 1 internal error, 2 usage or validation error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import statistics
import sys
import time
from pathlib import Path
from typing import List, Sequence

import numpy as np

from . import __version__
from .evalmetrics import duplicate_rate, evaluate
from .maskcore import MaskOpsConfig
from .matcher import solve
from .oyor import LevelSpec, OyorConfig, ScoredPrediction, assign
from .parallel import ThreadConfigError, pmap, thread_count
from .scenefile import SceneFormatError, dump_scene, load_scene, scene_paths
from .scoring import rerank_score
from .simgen import (
    GenerationError,
    PredictorModel,
    SceneConfig,
    generate_scene,
    prediction_seed,
    synthesize_predictions,
)
from .suppress import NmsConfig, apply_nms

log = logging.getLogger("instassign")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _write_json(path: Path, payload) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    try:
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc}") from None


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def load_sim_config(path: Path | None):
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise UsageError(f"{path}: config must be a JSON object")
    unknown = set(raw) - {"scene", "predictor", "levels"}
    if unknown:
        raise UsageError(f"{path}: unknown config sections {sorted(unknown)}")
    try:
        scene_cfg = SceneConfig.from_json(raw.get("scene", {}))
        model = PredictorModel.from_json(raw.get("predictor", {}))
        levels = [LevelSpec(int(i)) for i in raw.get("levels", [3, 4, 5, 6, 7])]
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid config: {exc}") from None
    if not levels:
        raise UsageError("invalid config: 'levels' must not be empty")
    return scene_cfg, model, levels


def cmd_simulate(args) -> int:
    scene_cfg, model, levels = load_sim_config(args.config)
    if args.seed is not None:
        scene_cfg = SceneConfig.from_json({**scene_cfg.to_json(), "seed": args.seed})
    if args.num_scenes < 0:
        raise UsageError("--num-scenes must be >= 0")
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as exc:
        raise UsageError(f"output directory {out} is not writable: {exc}") from None

    config = {
        "scene": scene_cfg.to_json(),
        "predictor": model.to_json(),
        "levels": [lv.level_id for lv in levels],
    }

    def make(index: int):
        gts, shape = generate_scene(scene_cfg, index)
        pseed = prediction_seed(scene_cfg.seed, index)
        scored = synthesize_predictions(gts, model, levels, seed=pseed,
                                        categories=scene_cfg.categories)
        name = f"scene_{index:05d}.json"
        dump_scene(out / name, gts, [s.pred for s in scored], shape)
        return {"file": name, "index": index, "prediction_seed": pseed}

    entries = pmap(make, range(args.num_scenes))
    manifest = {
        "tool": "instassign",
        "version": __version__,
        "config": config,
        "config_sha256": hashlib.sha256(_canonical(config).encode()).hexdigest(),
        "seed": scene_cfg.seed,
        "num_scenes": args.num_scenes,
        "rng": "numpy Philox keyed by SeedSequence(seed, spawn_key=(scene_index, stream, ...))",
        "scenes": entries,
    }
    _write_json(out / "manifest.json", manifest)
    log.info("wrote %d scenes to %s", args.num_scenes, out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# assign / eval
# ---------------------------------------------------------------------------

def _load_scenes(directory) -> List:
    d = Path(directory)
    if not d.is_dir():
        raise UsageError(f"scene directory {d} does not exist")
    paths = scene_paths(d)
    return list(zip(paths, pmap(load_scene, paths)))


def cmd_assign(args) -> int:
    try:
        cfg = OyorConfig(alpha=args.alpha)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    scenes = _load_scenes(args.scenes)
    mcfg = MaskOpsConfig()

    def run(item):
        path, (gts, preds, _) = item
        a = assign(preds, gts, cfg, mcfg)
        rec = {"file": path.name, **a.to_json(),
               "num_gts": len(gts), "num_predictions": len(preds)}
        rec["mean_quality"] = (sum(q for _, _, q in a.pairs) / len(a.pairs)) if a.pairs else 0.0
        return rec, a

    results = pmap(run, scenes)
    all_q = [q for _, a in results for _, _, q in a.pairs]
    n_gts = sum(r["num_gts"] for r, _ in results)
    n_unmatched = sum(len(a.unmatched_gts) for _, a in results)
    report = {
        "alpha": cfg.alpha,
        "center_radius_multiplier": cfg.center_radius_multiplier,
        "scenes": [r for r, _ in results],
        "summary": {
            "num_scenes": len(results),
            "num_gts": n_gts,
            "num_matched": len(all_q),
            "mean_quality": (sum(all_q) / len(all_q)) if all_q else 0.0,
            "unmatched_fraction": (n_unmatched / n_gts) if n_gts else 0.0,
        },
    }
    _write_json(Path(args.out), report)
    return EXIT_OK


def rank_predictions(preds, ranking: str) -> List[ScoredPrediction]:
    """Score raw predictions by their top class, optionally re-ranked by predicted IoU."""
    out = []
    for p in preds:
        c = p.top_category
        score = rerank_score(p, c) if ranking == "rerank" else p.score(c)
        out.append(ScoredPrediction(p, c, score))
    return out


def cmd_eval(args) -> int:
    scenes = _load_scenes(args.scenes)
    nms_cfg = NmsConfig()

    def prepare(item):
        _, (gts, preds, _) = item
        scored = rank_predictions(preds, args.ranking)
        if args.nms == "on":
            scored = apply_nms(scored, nms_cfg)
        return gts, scored

    prepared = pmap(prepare, scenes)
    report = evaluate(prepared).to_json()
    report["duplicate_rate"] = duplicate_rate(prepared, 0.5)
    report["settings"] = {"ranking": args.ranking, "nms": args.nms,
                          "num_scenes": len(prepared)}
    _write_json(Path(args.out), report)
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def parse_sizes(text: str):
    sizes = []
    for tok in text.replace(" ", "").split(","):
        if not tok:
            continue
        try:
            g, n = tok.lower().split("x")
            sizes.append((int(g), int(n)))
        except ValueError:
            raise UsageError(f"bad size {tok!r}; expected GxN, e.g. 5x50") from None
        if sizes[-1][0] < 0 or sizes[-1][1] < 0:
            raise UsageError(f"sizes must be non-negative, got {tok!r}")
    if not sizes:
        raise UsageError("--sizes is empty")
    return sizes


def _bench_scene(g: int, n: int, rng: np.random.Generator, side: int = 32):
    from .oyor import GroundTruth, Prediction

    gts = []
    for _ in range(g):
        m = rng.random((side, side)) < 0.2
        m[rng.integers(0, side), rng.integers(0, side)] = True
        gts.append(GroundTruth(int(rng.integers(0, 3)), m.astype(np.float64)))
    preds = []
    for _ in range(n):
        m = (rng.random((side, side)) < 0.2).astype(np.float64)
        p = Prediction((side / 2, side / 2), LevelSpec(3), rng.random(3), m, float(rng.random()))
        preds.append(ScoredPrediction(p, p.top_category, p.score(p.top_category)))
    return gts, preds


def _timed(fn, repeats: int):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return times


def scaling_exponent(rows) -> float | None:
    """Least-squares slope of log(solve time) against log(max(G, N))."""
    pts = [(math.log(max(r["G"], r["N"])), math.log(r["solve_mean_s"]))
           for r in rows if r["G"] > 0 and r["N"] > 0 and r["solve_mean_s"] > 0]
    if len({x for x, _ in pts}) < 2:
        return None
    xs, ys = zip(*pts)
    return float(np.polyfit(xs, ys, 1)[0])


def cmd_bench(args) -> int:
    sizes = parse_sizes(args.sizes)
    if args.repeats < 1:
        raise UsageError("--repeats must be >= 1")
    rng = np.random.default_rng(args.seed)
    rows = []
    for g, n in sizes:
        q = rng.random((g, n))
        solve_t = _timed(lambda: solve(q), args.repeats)
        scene = _bench_scene(g, n, rng)
        eval_t = _timed(lambda: evaluate([scene], workers=1), args.repeats)
        rows.append({
            "G": g, "N": n, "repeats": args.repeats,
            "solve_mean_s": statistics.fmean(solve_t),
            "solve_std_s": statistics.pstdev(solve_t),
            "eval_mean_s": statistics.fmean(eval_t),
            "eval_std_s": statistics.pstdev(eval_t),
        })
    exponent = scaling_exponent(rows)
    subcubic = exponent is None or exponent < 3.0
    print(f"{'G':>5} {'N':>6} {'solve mean(s)':>14} {'solve std':>10} "
          f"{'eval mean(s)':>13} {'eval std':>10}")
    for r in rows:
        print(f"{r['G']:>5} {r['N']:>6} {r['solve_mean_s']:>14.6f} {r['solve_std_s']:>10.6f} "
              f"{r['eval_mean_s']:>13.6f} {r['eval_std_s']:>10.6f}")
    if exponent is not None:
        print(f"solve scaling exponent vs max(G, N): {exponent:.2f} "
              f"({'sub-cubic' if subcubic else 'NOT sub-cubic'})")
    if args.out:
        _write_json(Path(args.out), {"rows": rows, "scaling_exponent": exponent,
                                     "subcubic": subcubic})
    return EXIT_OK if subcubic else EXIT_INTERNAL


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="instassign", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate synthetic scene files")
    p.add_argument("--config", type=Path, default=None,
                   help="JSON with optional 'scene', 'predictor' and 'levels' sections")
    p.add_argument("--out", required=True)
    p.add_argument("--num-scenes", type=int, required=True)
    p.add_argument("--seed", type=int, default=None, help="overrides scene.seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("assign", help="one-to-one assignment over scene files")
    p.add_argument("--scenes", required=True)
    p.add_argument("--alpha", type=float, default=0.9)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_assign)

    p = sub.add_parser("eval", help="mask AP/AR over scene files")
    p.add_argument("--scenes", required=True)
    p.add_argument("--ranking", choices=("cls", "rerank"), default="rerank")
    p.add_argument("--nms", choices=("on", "off"), default="off")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="time the matcher and the evaluator")
    p.add_argument("--sizes", default="5x50,10x100,20x200,40x400",
                   help="comma-separated GxN grid, e.g. 5x50,10x100")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        thread_count()
        return args.func(args)
    except (UsageError, SceneFormatError, GenerationError, ThreadConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception:  # noqa: BLE001
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
