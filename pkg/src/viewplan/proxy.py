"""Kinematic navigation proxy scored on success, collisions and safe progress.

Each action turns the agent toward its goal and attempts one forward step. A
step is taken only when the estimator's predicted clearance exceeds the
threshold; a taken step whose true clearance is at or below the threshold is a
collision and the agent is bumped back (it does not move).
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .geometry import Scene
from .rng import stream

log = logging.getLogger(__name__)

Z95 = 1.96


@dataclass(frozen=True)
class EpisodeConfig:
    n_episodes: int = 1000
    horizon: int = 12
    step_length: float = 0.25
    clearance_threshold: float = 1.2
    min_start_goal_sep: float = 1.5
    progress_success_fraction: float = 0.8
    seed: int = 0
    agent_height: float = 0.5
    max_range: float = 10.0
    max_retries: int = 100
    count_attempts: bool = False  # Col/100 denominator: attempted instead of taken moves

    def __post_init__(self):
        for name in ("n_episodes", "horizon", "step_length", "clearance_threshold", "min_start_goal_sep", "max_range"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.progress_success_fraction <= 1:
            raise ValueError("progress_success_fraction must lie in (0, 1]")


@dataclass
class ClearanceEstimator:
    """Predicted clearance as a function of the true one.

    ``additive_noise``: true + offset + N(0, sigma). ``multiplicative_bias``:
    true * factor. ``scripted``: table keyed by (episode, step); steps not in
    the table fall back to the true clearance.
    """

    kind: str = "oracle"
    sigma: float = 0.0
    offset: float = 0.0
    factor: float = 1.0
    script: Mapping[tuple[int, int], float] = field(default_factory=dict)

    KINDS = ("oracle", "additive_noise", "multiplicative_bias", "scripted")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown estimator kind {self.kind!r}; expected one of {self.KINDS}")
        if self.sigma < 0:
            raise ValueError("noise sigma must be nonnegative")

    def predict(self, true: float, episode: int, step: int, rng: np.random.Generator) -> float:
        if self.kind == "oracle":
            return true
        if self.kind == "additive_noise":
            return true + self.offset + self.sigma * rng.standard_normal()
        if self.kind == "multiplicative_bias":
            return true * self.factor
        return float(self.script.get((episode, step), true))

    def describe(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "additive_noise":
            d.update(sigma=self.sigma, offset=self.offset)
        elif self.kind == "multiplicative_bias":
            d.update(factor=self.factor)
        elif self.kind == "scripted":
            d.update(script_entries=len(self.script))
        return d


def load_script_csv(path) -> dict[tuple[int, int], float]:
    """Read ``episode,step,predicted_clearance`` rows."""
    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            try:
                out[(int(row["episode"]), int(row["step"]))] = float(row["predicted_clearance"])
            except (KeyError, ValueError) as e:
                raise ValueError(f"{path}:{reader.line_num}: bad row {row}: {e}") from None
    return out


@dataclass
class Move:
    predicted_clearance: float
    true_clearance: float
    taken: bool
    collision: bool
    progress_gain: float


@dataclass
class EpisodeLog:
    episode: int
    start: tuple[float, ...]
    goal: tuple[float, ...]
    moves: list[Move] = field(default_factory=list)
    outcome: str = "fail"
    steps: int = 0
    collisions: int = 0
    progress_moves: int = 0
    oracle_safe_moves: int = 0
    attempts: int = 0
    skipped: str | None = None

    @property
    def progress_ratio(self) -> float:
        return self.progress_moves / max(self.oracle_safe_moves, 1)


def true_clearance(scene: Scene, position, heading: float, max_range: float = 10.0) -> float:
    """Distance to the nearest surface along the horizontal ``heading``; ``max_range`` on a miss."""
    d = np.array([[math.cos(heading), math.sin(heading), 0.0]])
    t = float(scene.intersect(np.asarray(position, dtype=float), d)[0])
    return min(t, max_range)


_PROBE_DIRS = np.array([[math.cos(a), math.sin(a), 0.0] for a in np.arange(8) * math.pi / 4])


def is_free(scene: Scene, position) -> bool:
    """Outside every closed surface (even crossing parity along +x) and not touching one."""
    p = np.asarray(position, dtype=float)
    lo, hi = scene.bounds
    if np.any(p < lo) or np.any(p > hi):
        return False
    if len(scene) == 0:
        return True
    if _crossings(scene, p, np.array([1.0, 0.0, 0.0])) % 2:
        return False
    return bool(np.all(scene.intersect(p, _PROBE_DIRS) > 1e-6))


def _crossings(scene: Scene, origin, direction) -> int:
    count = 0
    o = origin.copy()
    for _ in range(len(scene) + 1):
        t = float(scene.intersect(o, direction[None, :])[0])
        if not math.isfinite(t):
            break
        count += 1
        o = o + direction * (t + 1e-9)
    return count


def sample_start_goal(scene: Scene, cfg: EpisodeConfig, rng: np.random.Generator):
    lo, hi = scene.bounds
    for _ in range(cfg.max_retries):
        xy = rng.uniform(lo[:2], hi[:2], size=(2, 2))
        start = np.array([xy[0, 0], xy[0, 1], cfg.agent_height])
        goal = np.array([xy[1, 0], xy[1, 1], cfg.agent_height])
        if np.linalg.norm(goal - start) < cfg.min_start_goal_sep:
            continue
        if is_free(scene, start) and is_free(scene, goal):
            return start, goal
    return None


def run_episode(
    scene: Scene,
    estimator: ClearanceEstimator,
    cfg: EpisodeConfig,
    rng: np.random.Generator,
    episode: int = 0,
    start=None,
    goal=None,
) -> EpisodeLog:
    if start is None or goal is None:
        pair = sample_start_goal(scene, cfg, rng)
        if pair is None:
            reason = f"no valid start/goal after {cfg.max_retries} retries"
            log.warning("episode %d skipped: %s", episode, reason)
            return EpisodeLog(episode, (), (), skipped=reason)
        start, goal = pair
    pos = np.asarray(start, dtype=float).copy()
    goal = np.asarray(goal, dtype=float)
    ep = EpisodeLog(episode, tuple(pos.tolist()), tuple(goal.tolist()))
    thr = cfg.clearance_threshold
    for step in range(cfg.horizon):
        delta = goal[:2] - pos[:2]
        dist = float(np.hypot(*delta))
        if dist <= 1e-9:
            break
        heading = math.atan2(delta[1], delta[0])
        true = true_clearance(scene, pos, heading, cfg.max_range)
        pred = estimator.predict(true, episode, step, rng)
        ep.attempts += 1
        if true > thr:
            ep.oracle_safe_moves += 1
        taken = pred > thr
        collision = taken and true <= thr
        gain = 0.0
        if taken:
            ep.steps += 1
            if collision:
                ep.collisions += 1
            else:
                stride = min(cfg.step_length, dist)
                pos[:2] += stride * delta / dist
                gain = dist - float(np.hypot(*(goal[:2] - pos[:2])))
                if gain > 0:
                    ep.progress_moves += 1
        ep.moves.append(Move(pred, true, taken, collision, gain))
    if ep.collisions == 0 and ep.progress_ratio >= cfg.progress_success_fraction:
        ep.outcome = "success"
    return ep


def run_episodes(scene: Scene, estimator: ClearanceEstimator, cfg: EpisodeConfig, pairs=None) -> list[EpisodeLog]:
    """Episode ``i`` uses the stream keyed by ``(cfg.seed, i)``.

    ``pairs`` optionally fixes (start, goal) per episode.
    """
    logs = []
    for i in range(cfg.n_episodes):
        rng = stream(cfg.seed, i, name=f"episode:{scene.id}")
        start, goal = pairs[i] if pairs is not None else (None, None)
        logs.append(run_episode(scene, estimator, cfg, rng, i, start, goal))
    return logs


def _mean_ci(values: Sequence[float]) -> dict:
    v = np.asarray(values, dtype=float)
    if len(v) == 0:
        return {"mean": 0.0, "ci95": None, "n": 0}
    mean = float(v.mean())
    if len(v) < 2:
        return {"mean": mean, "ci95": None, "n": 1}
    half = Z95 * float(v.std(ddof=1)) / math.sqrt(len(v))
    return {"mean": mean, "ci95": half, "n": int(len(v))}


def aggregate(logs: Sequence[EpisodeLog], cfg: EpisodeConfig) -> dict:
    """Per-episode statistics averaged with normal-approximation 95% CIs.

    ``ci95`` is the half-width, or None when fewer than two episodes contribute.
    """
    done = [e for e in logs if e.skipped is None]
    failed = [e for e in done if e.outcome != "success"]
    denom = (lambda e: e.attempts) if cfg.count_attempts else (lambda e: e.steps)
    metrics = {
        "succ": _mean_ci([float(e.outcome == "success") for e in done]),
        "col_per_100": _mean_ci([100.0 * e.collisions / max(denom(e), 1) for e in done]),
        "col_per_fail": _mean_ci([float(e.collisions) for e in failed]),
        "path_ratio": _mean_ci([e.progress_ratio for e in done]),
    }
    return {
        "config": asdict(cfg),
        "metrics": metrics,
        "n_episodes": len(done),
        "n_skipped": len(logs) - len(done),
    }


def run_benchmark(scene: Scene, estimator: ClearanceEstimator, cfg: EpisodeConfig, pairs=None) -> dict:
    logs = run_episodes(scene, estimator, cfg, pairs)
    report = aggregate(logs, cfg)
    report["estimator"] = estimator.describe()
    report["scene_id"] = scene.id
    return report


def episodes_csv(logs: Sequence[EpisodeLog]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["episode", "outcome", "steps", "attempts", "collisions", "progress_moves", "oracle_safe_moves", "skipped"])
    for e in logs:
        w.writerow([e.episode, e.outcome, e.steps, e.attempts, e.collisions, e.progress_moves, e.oracle_safe_moves, e.skipped or ""])
    return buf.getvalue()


def report_json(report: dict) -> str:
    return json.dumps(report, indent=1, sort_keys=True)
