"""Command implementations: pool building, selection sweeps, proxy simulation, reports."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .config import RunConfig
from .gating import gate_report, load_quality_csv
from .geometry import Pose, Scene, VisibilitySet, coverage_value, pose_visibility
from .proxy import ClearanceEstimator, aggregate, episodes_csv, load_script_csv, run_episodes
from .sampling import CandidatePool, build_candidate_pool
from .scenes import demo_scene, demo_trajectory, load_obj, load_tum, procedural_scene
from .selection import SelectionParams, attach_coverage, select


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _finite(x):
    # strict JSON has no NaN/Infinity; write null instead
    if isinstance(x, float) and not np.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    return x


def dump(obj) -> str:
    return json.dumps(_finite(obj), indent=1, sort_keys=True, allow_nan=False) + "\n"


def load_scene(cfg: RunConfig) -> Scene:
    s = cfg.scene
    if "mesh" in s:
        return load_obj(cfg.resolve(s["mesh"]), s.get("id"))
    if "spec" in s:
        return procedural_scene(s["spec"])
    return demo_scene()


def load_train_poses(cfg: RunConfig) -> list[Pose]:
    stamped = load_tum(cfg.resolve(cfg.trajectory)) if cfg.trajectory else demo_trajectory()
    poses = [p for _, p in stamped][:: int(cfg.train_stride)]
    if not poses:
        raise ValueError("trajectory has no poses")
    return poses


def build_pool(cfg: RunConfig, scene: Scene, train: list[Pose]) -> CandidatePool:
    return build_candidate_pool(train, cfg.sampler, scene.id, cfg.seed)


def pool_visibility(cfg: RunConfig, scene: Scene, pool: CandidatePool) -> list[VisibilitySet]:
    return [pose_visibility(scene, cfg.camera, T, cfg.coverage) for T in pool.candidates]


def cmd_pool(cfg: RunConfig) -> dict:
    scene = load_scene(cfg)
    train = load_train_poses(cfg)
    pool = build_pool(cfg, scene, train)
    out = Path(cfg.out) / "pool" / f"{scene.id}_{cfg.seed}.json"
    doc = {"config": cfg.to_dict(), "pool": pool.to_dict()}
    write_atomic(out, dump(doc))
    counts = {tag: len(pool.indices(tag)) for tag in ("random", "robot")}
    return {"path": str(out), "size": len(pool), **counts}


def _run_key(policy: str, n: int, seed: int) -> str:
    return f"{policy}_{n}_{seed}"


def cmd_select(cfg: RunConfig) -> dict:
    """Sweep every (policy, N); one JSON per run plus summary.csv and timing.json."""
    timing = {}
    t0 = time.perf_counter()
    scene = load_scene(cfg)
    train = load_train_poses(cfg)
    pool = build_pool(cfg, scene, train)
    timing["pool_build_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    vis = pool_visibility(cfg, scene, pool)
    timing["voxel_extract_s"] = time.perf_counter() - t0
    scene_union = VisibilitySet.union(VisibilitySet(), *vis)

    opts = cfg.selection
    jobs = [(p, int(n)) for p in opts.policies for n in opts.budgets]
    out_dir = Path(cfg.out) / "select"
    echo = cfg.to_dict()

    def run(job):
        policy, n = job
        params = SelectionParams(
            budget=n,
            policy=policy,
            sigma=opts.sigma,
            lambda_yaw=opts.lambda_yaw,
            unique_cap=opts.unique_cap,
            stoch_subsample_eps=opts.stoch_subsample_eps,
            seed=cfg.seed,
        )
        start = time.perf_counter()
        result = attach_coverage(select(pool, vis, train, params), scene_union)
        elapsed = time.perf_counter() - start
        key = _run_key(policy, n, cfg.seed)
        doc = {"run_key": key, "scene_id": scene.id, "config": echo, "result": result.to_dict()}
        write_atomic(out_dir / f"{key}.json", dump(doc))
        write_atomic(out_dir / f"{key}.trace.csv", result.trace_csv())
        return key, result, elapsed

    failures = {}
    rows = []
    select_times = []
    with ThreadPoolExecutor(max_workers=int(cfg.threads)) as ex:
        futures = [(job, ex.submit(run, job)) for job in jobs]
        for job, fut in futures:
            try:
                key, result, elapsed = fut.result()
            except ValueError as e:
                failures[_run_key(job[0], job[1], cfg.seed)] = str(e)
                continue
            select_times.append(elapsed)
            rows.append(
                {
                    "policy": job[0],
                    "N": job[1],
                    "n_unique": len(result.selected),
                    "stream_len": len(result.training_stream),
                    "covered_voxels": result.covered.size,
                    "coverage_fraction": result.coverage_fraction,
                }
            )

    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["policy", "N", "n_unique", "stream_len", "covered_voxels", "coverage_fraction"], lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({**r, "coverage_fraction": repr(r["coverage_fraction"])})
    write_atomic(out_dir / "summary.csv", buf.getvalue())

    timing["greedy_select_s_mean"] = float(np.mean(select_times)) if select_times else 0.0
    timing["total_select_s"] = timing["pool_build_s"] + timing["voxel_extract_s"] + sum(select_times)
    # same normalisation as a total-select-time / pool-size figure
    timing["per_candidate_score_ms"] = 1000.0 * timing["total_select_s"] / max(len(pool), 1)
    write_atomic(out_dir / "timing.json", dump(timing))
    return {
        "rows": rows,
        "failures": failures,
        "timing": timing,
        "scene_union": scene_union.size,
        "pool_size": len(pool),
        "coverage_value_check": coverage_value(vis),
    }


def make_estimator(cfg: RunConfig) -> ClearanceEstimator:
    e = cfg.estimator
    script = load_script_csv(cfg.resolve(e.script)) if e.kind == "scripted" else {}
    return ClearanceEstimator(kind=e.kind, sigma=e.sigma, offset=e.offset, factor=e.factor, script=script)


def cmd_simulate(cfg: RunConfig, per_episode_csv: bool = True) -> dict:
    scene = load_scene(cfg)
    est = make_estimator(cfg)
    ep_cfg = replace(cfg.episodes, seed=cfg.seed)
    logs = run_episodes(scene, est, ep_cfg)
    report = aggregate(logs, ep_cfg)
    report["estimator"] = est.describe()
    report["scene_id"] = scene.id
    report["run_config"] = cfg.to_dict()
    if cfg.quality:
        q = load_quality_csv(cfg.resolve(cfg.quality), cfg.gate)
        if scene.id in q:
            report["gate"] = gate_report(scene.id, q[scene.id], cfg.gate)
    out_dir = Path(cfg.out) / "simulate"
    key = f"{est.kind}_{ep_cfg.n_episodes}_{cfg.seed}"
    write_atomic(out_dir / f"{key}.json", dump(report))
    if per_episode_csv:
        write_atomic(out_dir / f"{key}.episodes.csv", episodes_csv(logs))
    return report


def _rows_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def load_novelty_csv(path) -> list[dict]:
    """Read ``method,N,scene_id,novelty,error`` per-frame rows."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            try:
                rows.append(
                    {
                        "method": row["method"],
                        "N": int(row["N"]),
                        "scene_id": row["scene_id"],
                        "novelty": float(row["novelty"]),
                        "error": float(row["error"]),
                    }
                )
            except (KeyError, TypeError, ValueError) as e:
                raise ValueError(f"{path}: line {reader.line_num}: {e}") from None
    return rows


def tail_table(rows: list[dict], k: int = 5) -> list[dict]:
    """Bins each (method, N, scene) sequence separately, then averages per bin across scenes."""
    seqs: dict[tuple, list[dict]] = {}
    for r in rows:
        seqs.setdefault((r["method"], r["N"], r["scene_id"]), []).append(r)
    per_scene: dict[tuple, list[float]] = {}
    for (m, n, s), rs in sorted(seqs.items()):
        for b in dg.tail_profile([r["novelty"] for r in rs], [r["error"] for r in rs], k):
            if b["n"]:
                per_scene.setdefault((m, n, b["bin"]), []).append(b["mean_error"])
    out = []
    for (m, n, b), vals in sorted(per_scene.items()):
        v = np.array(vals)
        ci = 1.96 * v.std(ddof=1) / np.sqrt(len(v)) if len(v) > 1 else float("nan")
        out.append({"method": m, "N": n, "bin": b, "n_scenes": len(v), "mean_error": float(v.mean()), "ci95": float(ci)})
    return out


def cmd_report(cfg: RunConfig) -> dict:
    rep = cfg.report
    if rep.records is None:
        raise ValueError("report.records: no RunRecord CSV given")
    records = dg.load_run_records(cfg.resolve(rep.records))
    if rep.best_of:
        records = records + dg.best_of(records, rep.best_of)
    tables = {
        "scaling": dg.scaling_table(records),
        "stability": dg.stability_table(records, rep.floor),
        "correlation": dg.correlation_table(records),
    }
    if rep.target:
        comps = rep.comparators or tuple(sorted({r.method for r in records} - {rep.target}))
        tables["paired"] = dg.paired_table(records, rep.target, comps)
    if rep.novelty:
        tables["tail"] = tail_table(load_novelty_csv(cfg.resolve(rep.novelty)))
    out_dir = Path(cfg.out) / "report"
    write_atomic(out_dir / "report.json", dump({"config": cfg.to_dict(), "tables": tables}))
    for name, rows in tables.items():
        write_atomic(out_dir / f"{name}.csv", _rows_csv(rows))
    return tables
