"""Candidate pose pool: random-jitter and robot-arc perturbations of train poses."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .geometry import Pose, wrap_angle
from .rng import stream

RANDOM = "random"
ROBOT = "robot"


@dataclass(frozen=True)
class SamplerParams:
    trans_sigma: tuple[float, float, float] = (0.12, 0.12, 0.05)
    yaw_sigma: float = 10.0  # degrees
    arc_radius_range: tuple[float, float] = (0.15, 0.35)
    arc_heading_range: tuple[float, float] = (-45.0, 45.0)  # degrees
    arc_z_jitter: float = 0.05
    pool_size: int = 1000
    random_fraction: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "trans_sigma", tuple(float(v) for v in self.trans_sigma))
        object.__setattr__(self, "arc_radius_range", tuple(float(v) for v in self.arc_radius_range))
        object.__setattr__(self, "arc_heading_range", tuple(float(v) for v in self.arc_heading_range))
        if len(self.trans_sigma) != 3 or min(self.trans_sigma) < 0 or self.yaw_sigma < 0:
            raise ValueError("sigmas must be nonnegative (3 translation sigmas)")
        for name in ("arc_radius_range", "arc_heading_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} is empty: {lo} > {hi}")
        if self.arc_radius_range[0] < 0 or self.arc_z_jitter < 0:
            raise ValueError("arc radius and z jitter must be nonnegative")
        if int(self.pool_size) != self.pool_size or self.pool_size < 1:
            raise ValueError("pool_size must be an integer >= 1")
        if not 0.0 <= self.random_fraction <= 1.0:
            raise ValueError("random_fraction must lie in [0, 1]")

    @property
    def n_random(self) -> int:
        return int(round(self.pool_size * self.random_fraction))


def sample_random_candidate(anchor: Pose, params: SamplerParams, rng: np.random.Generator) -> Pose:
    dt = rng.normal(0.0, 1.0, size=3) * np.array(params.trans_sigma)
    dyaw = rng.normal(0.0, 1.0) * math.radians(params.yaw_sigma)
    moved = anchor.translated(dt)
    if dyaw == 0.0:
        return moved
    return moved.with_yaw(wrap_angle(anchor.yaw + dyaw))


def sample_robot_candidate(anchor: Pose, params: SamplerParams, rng: np.random.Generator) -> Pose:
    rho = rng.uniform(*params.arc_radius_range)
    theta = math.radians(rng.uniform(*params.arc_heading_range))
    dz = rng.uniform(-params.arc_z_jitter, params.arc_z_jitter)
    heading = wrap_angle(anchor.yaw + theta)
    moved = anchor.translated((rho * math.cos(heading), rho * math.sin(heading), dz))
    if theta == 0.0:
        return moved
    return moved.with_yaw(heading)


@dataclass
class CandidatePool:
    scene_id: str
    seed: int
    params: SamplerParams
    candidates: list[Pose]
    provenance: list[str]
    anchors: list[int] = field(default_factory=list)

    def __len__(self):
        return len(self.candidates)

    def indices(self, tag: str) -> list[int]:
        return [i for i, p in enumerate(self.provenance) if p == tag]

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "seed": self.seed,
            "params": asdict(self.params),
            "candidates": [
                {
                    "position": list(p.position),
                    "quaternion": list(p.orientation),
                    "yaw": p.yaw,
                    "provenance": tag,
                    "anchor": a,
                }
                for p, tag, a in zip(self.candidates, self.provenance, self.anchors)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "CandidatePool":
        cands = d["candidates"]
        return cls(
            scene_id=d["scene_id"],
            seed=int(d["seed"]),
            params=SamplerParams(**d["params"]),
            candidates=[Pose(c["position"], c["quaternion"]) for c in cands],
            provenance=[c["provenance"] for c in cands],
            anchors=[int(c.get("anchor", -1)) for c in cands],
        )


_POOL_CACHE: dict[tuple, CandidatePool] = {}


def build_candidate_pool(
    train_poses: Sequence[Pose], params: SamplerParams, scene_id: str, seed: int
) -> CandidatePool:
    """Build Omega: the first ``n_random`` entries are random-jitter candidates, the rest robot-arc.

    Candidate ``i`` draws its anchor and its perturbation from its own stream
    keyed by ``(scene_id, seed, i)``. Pools are memoized on all inputs.
    """
    if not train_poses:
        raise ValueError("train_poses must be nonempty")
    key = (scene_id, int(seed), params, tuple(train_poses))
    if key in _POOL_CACHE:
        return _POOL_CACHE[key]
    n_random = params.n_random
    cands, tags, anchors = [], [], []
    for i in range(params.pool_size):
        rng = stream(seed, i, name=scene_id)
        a = int(rng.integers(len(train_poses)))
        if i < n_random:
            cands.append(sample_random_candidate(train_poses[a], params, rng))
            tags.append(RANDOM)
        else:
            cands.append(sample_robot_candidate(train_poses[a], params, rng))
            tags.append(ROBOT)
        anchors.append(a)
    pool = CandidatePool(scene_id, int(seed), params, cands, tags, anchors)
    _POOL_CACHE[key] = pool
    return pool
