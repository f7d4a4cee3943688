"""View selection policies over a fixed candidate pool.

Scores are ``gain * weight`` where ``gain`` is the number of voxels a candidate
would newly cover and ``weight`` is its novelty factor ``exp(-d / sigma)``
(identically 1 for pure coverage). Ties go to the lowest pool index.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .geometry import Pose, VisibilitySet, unpack_voxels
from .rng import stream
from .sampling import RANDOM, ROBOT, CandidatePool

POLICIES = ("random", "robot", "coverage", "cn_coverage", "stoch_greedy_coverage")


@dataclass(frozen=True)
class SelectionParams:
    budget: int = 0
    policy: str = "cn_coverage"
    sigma: float = 0.35
    lambda_yaw: float = 0.20
    unique_cap: int = 500
    stoch_subsample_eps: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}; expected one of {POLICIES}")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.lambda_yaw < 0:
            raise ValueError("lambda_yaw must be nonnegative")
        if self.unique_cap < 1:
            raise ValueError("unique_cap must be >= 1")
        if self.budget < 0:
            raise ValueError("budget must be >= 0")
        if not 0 < self.stoch_subsample_eps < 1:
            raise ValueError("stoch_subsample_eps must lie in (0, 1)")

    @property
    def n_select(self) -> int:
        return min(self.budget, self.unique_cap)


@dataclass(frozen=True)
class Selection:
    pool_index: int
    gain: int
    novelty_weight: float
    cumulative_coverage: int


@dataclass
class SelectionResult:
    params: SelectionParams
    selected: list[Selection]
    covered: VisibilitySet
    training_stream: list[int] = field(default_factory=list)
    coverage_fraction_trace: list[float] = field(default_factory=list)
    coverage_fraction: float = 0.0

    @property
    def indices(self) -> list[int]:
        return [s.pool_index for s in self.selected]

    @property
    def gains(self) -> list[int]:
        return [s.gain for s in self.selected]

    def to_dict(self) -> dict:
        return {
            "params": asdict(self.params),
            "selected": [asdict(s) for s in self.selected],
            "training_stream": list(self.training_stream),
            "coverage_fraction_trace": list(self.coverage_fraction_trace),
            "coverage_fraction": self.coverage_fraction,
            "covered_voxels": self.covered.size,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def trace_csv(self) -> str:
        rows = ["step,pool_index,gain,novelty_weight,cumulative_coverage,coverage_fraction"]
        fracs = self.coverage_fraction_trace or [float("nan")] * len(self.selected)
        for k, (s, f) in enumerate(zip(self.selected, fracs)):
            rows.append(f"{k},{s.pool_index},{s.gain},{s.novelty_weight!r},{s.cumulative_coverage},{f!r}")
        return "\n".join(rows) + "\n"


def novelty_distance(T: Pose, train_poses: Sequence[Pose], lambda_yaw: float = 0.20) -> float:
    """Nearest train pose under ``|dt| + lambda_yaw * |wrap(dyaw)|`` (meters)."""
    if not train_poses:
        raise ValueError("train_poses must be nonempty")
    t = np.array([p.position for p in train_poses])
    yaw = np.array([p.yaw for p in train_poses])
    return float(_novelty_distances(np.array([T.position]), np.array([T.yaw]), t, yaw, lambda_yaw)[0])


def _novelty_distances(pos, yaw, train_pos, train_yaw, lambda_yaw) -> np.ndarray:
    dt = np.linalg.norm(pos[:, None, :] - train_pos[None, :, :], axis=2)
    dpsi = yaw[:, None] - train_yaw[None, :]
    # wrap into (-pi, pi], same formula as geometry.wrap_angle
    dpsi = dpsi - 2 * np.pi * np.ceil((dpsi - np.pi) / (2 * np.pi))
    return np.min(dt + lambda_yaw * np.abs(dpsi), axis=1)


def novelty_weight(T: Pose, train_poses: Sequence[Pose], params: SelectionParams) -> float:
    return math.exp(-novelty_distance(T, train_poses, params.lambda_yaw) / params.sigma)


def novelty_weights(candidates: Sequence[Pose], train_poses: Sequence[Pose], params: SelectionParams) -> np.ndarray:
    if params.policy in ("coverage", "stoch_greedy_coverage"):
        return np.ones(len(candidates))
    if not train_poses:
        raise ValueError("train_poses must be nonempty")
    d = _novelty_distances(
        np.array([p.position for p in candidates]).reshape(-1, 3),
        np.array([p.yaw for p in candidates]),
        np.array([p.position for p in train_poses]),
        np.array([p.yaw for p in train_poses]),
        params.lambda_yaw,
    )
    return np.exp(-d / params.sigma)


class _Coverage:
    """Covered-voxel bookkeeping over dense ids shared by all candidates."""

    def __init__(self, vis_sets: Sequence[VisibilitySet]):
        keys = [s.keys for s in vis_sets]
        sizes = [len(k) for k in keys]
        flat = np.concatenate(keys) if keys else np.zeros(0, dtype=np.int64)
        self.universe, inverse = np.unique(flat, return_inverse=True)
        self.ids = np.split(inverse.astype(np.int64), np.cumsum(sizes)[:-1]) if keys else []
        self.covered = np.zeros(len(self.universe), dtype=bool)
        self.count = 0

    def gain(self, i: int) -> int:
        return int(len(self.ids[i]) - np.count_nonzero(self.covered[self.ids[i]]))

    def add(self, i: int) -> int:
        g = self.gain(i)
        self.covered[self.ids[i]] = True
        self.count += g
        return g

    def covered_set(self) -> VisibilitySet:
        return VisibilitySet(unpack_voxels(self.universe[self.covered]))


def _check(pool_size: int, vis_sets, params: SelectionParams):
    if len(vis_sets) != pool_size:
        raise ValueError(f"{len(vis_sets)} visibility sets for {pool_size} candidates")
    if params.n_select > pool_size:
        raise ValueError(f"cannot select {params.n_select} unique poses from a pool of {pool_size}")


def _finish(params, cov: _Coverage, picks, weights) -> SelectionResult:
    selected = []
    total = 0
    for i, g in picks:
        total += g
        selected.append(Selection(int(i), int(g), float(weights[i]), total))
    result = SelectionResult(params, selected, cov.covered_set())
    result.training_stream = resample_to_budget(result, params.budget, params.seed)
    return result


def greedy_order(vis_sets: Sequence[VisibilitySet], weights: np.ndarray, n_select: int) -> tuple[_Coverage, list]:
    """Lazy greedy over a max-heap of stale scores.

    An entry refreshed in the current round that reaches the top of the heap
    is the exact argmax: every other entry's stale score bounds its fresh one.
    """
    cov = _Coverage(vis_sets)
    w = np.asarray(weights, dtype=float)
    heap = [(-(len(cov.ids[i]) * w[i]), i, 0) for i in range(len(vis_sets))]
    heapq.heapify(heap)
    picks = []
    rnd = 0
    while len(picks) < n_select:
        neg, i, stamp = heapq.heappop(heap)
        if stamp == rnd:
            picks.append((i, cov.add(i)))
            rnd += 1
            continue
        heapq.heappush(heap, (-(cov.gain(i) * w[i]), i, rnd))
    return cov, picks


def naive_greedy_order(vis_sets: Sequence[VisibilitySet], weights: np.ndarray, n_select: int) -> tuple[_Coverage, list]:
    """Reference greedy that rescores every remaining candidate each round."""
    cov = _Coverage(vis_sets)
    w = np.asarray(weights, dtype=float)
    remaining = list(range(len(vis_sets)))
    picks = []
    for _ in range(n_select):
        best, best_score = -1, -1.0
        for i in remaining:
            s = cov.gain(i) * w[i]
            if s > best_score:
                best, best_score = i, s
        remaining.remove(best)
        picks.append((best, cov.add(best)))
    return cov, picks


def greedy_select(
    pool: CandidatePool, vis_sets: Sequence[VisibilitySet], train_poses: Sequence[Pose], params: SelectionParams, lazy: bool = True
) -> SelectionResult:
    _check(len(pool), vis_sets, params)
    weights = novelty_weights(pool.candidates, train_poses, params)
    order = greedy_order if lazy else naive_greedy_order
    cov, picks = order(vis_sets, weights, params.n_select)
    return _finish(params, cov, picks, weights)


def stochastic_subsample_size(pool_size: int, n_select: int, eps: float) -> int:
    return int(math.ceil(pool_size / n_select * math.log(1.0 / eps)))


def stochastic_greedy_select(
    pool: CandidatePool, vis_sets: Sequence[VisibilitySet], train_poses: Sequence[Pose], params: SelectionParams
) -> SelectionResult:
    """Each round scores a seeded uniform subsample of the remaining candidates."""
    _check(len(pool), vis_sets, params)
    weights = novelty_weights(pool.candidates, train_poses, params)
    cov = _Coverage(vis_sets)
    n_sel = params.n_select
    picks = []
    if n_sel:
        size = stochastic_subsample_size(len(pool), n_sel, params.stoch_subsample_eps)
        rng = stream(params.seed, 0, name=f"stoch_greedy:{pool.scene_id}")
        remaining = np.arange(len(pool))
        for _ in range(n_sel):
            if size >= len(remaining):
                sub = remaining
            else:
                sub = np.sort(rng.choice(remaining, size=size, replace=False))
            scores = np.array([cov.gain(i) * weights[i] for i in sub])
            best = int(sub[int(np.argmax(scores))])
            picks.append((best, cov.add(best)))
            remaining = remaining[remaining != best]
    return _finish(params, cov, picks, weights)


def provenance_select(
    pool: CandidatePool, vis_sets: Sequence[VisibilitySet], train_poses: Sequence[Pose], params: SelectionParams
) -> SelectionResult:
    """Random/Robot policies: the first N_sel candidates of that provenance, in pool order."""
    _check(len(pool), vis_sets, params)
    tag = RANDOM if params.policy == "random" else ROBOT
    idx = pool.indices(tag)[: params.n_select]
    if len(idx) < params.n_select:
        raise ValueError(f"pool has only {len(idx)} {tag} candidates, need {params.n_select}")
    weights = novelty_weights(pool.candidates, train_poses, params)
    cov = _Coverage(vis_sets)
    picks = [(i, cov.add(i)) for i in idx]
    return _finish(params, cov, picks, weights)


def select(
    pool: CandidatePool, vis_sets: Sequence[VisibilitySet], train_poses: Sequence[Pose], params: SelectionParams
) -> SelectionResult:
    if params.policy in ("random", "robot"):
        return provenance_select(pool, vis_sets, train_poses, params)
    if params.policy == "stoch_greedy_coverage":
        return stochastic_greedy_select(pool, vis_sets, train_poses, params)
    return greedy_select(pool, vis_sets, train_poses, params)


def resample_to_budget(selected: SelectionResult, N: int, seed: int) -> list[int]:
    """Training stream of length N: the unique selections, then uniform draws with replacement."""
    idx = selected.indices
    if N <= len(idx):
        return idx[:N]
    if not idx:
        raise ValueError(f"cannot fill a budget of {N} from an empty selection")
    rng = stream(seed, len(idx), name="resample")
    extra = rng.integers(len(idx), size=N - len(idx))
    return idx + [idx[k] for k in extra]


def coverage_fraction(result: SelectionResult, scene_union: VisibilitySet) -> float:
    if scene_union.size == 0:
        raise ValueError("scene union is empty")
    return result.covered.size / scene_union.size


def attach_coverage(result: SelectionResult, scene_union: VisibilitySet) -> SelectionResult:
    """Fill the per-step and final coverage fractions against ``scene_union``."""
    n = scene_union.size
    if n == 0:
        raise ValueError("scene union is empty")
    result.coverage_fraction_trace = [s.cumulative_coverage / n for s in result.selected]
    result.coverage_fraction = coverage_fraction(result, scene_union)
    return result
