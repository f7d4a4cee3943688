"""Poses, cameras, triangle scenes and the voxelized visibility oracle.

Camera frames follow the OpenCV convention (x right, y down, z forward).
Orientations are camera-to-world rotations. The world up axis is +z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi
RAY_EPS = 1e-12


def wrap_angle(a: float) -> float:
    """Wrap an angle in radians into (-pi, pi]."""
    return a - TWO_PI * math.ceil((a - math.pi) / TWO_PI)


def quat_to_matrix(q: Sequence[float]) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R: np.ndarray) -> tuple[float, float, float, float]:
    tr = float(np.trace(R))
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2.0
        w = 0.25 * s
        x = (R[2, 1] - R[1, 2]) / s
        y = (R[0, 2] - R[2, 0]) / s
        z = (R[1, 0] - R[0, 1]) / s
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        w = (R[2, 1] - R[1, 2]) / s
        x = 0.25 * s
        y = (R[0, 1] + R[1, 0]) / s
        z = (R[0, 2] + R[2, 0]) / s
    elif R[1, 1] > R[2, 2]:
        s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        w = (R[0, 2] - R[2, 0]) / s
        x = (R[0, 1] + R[1, 0]) / s
        y = 0.25 * s
        z = (R[1, 2] + R[2, 1]) / s
    else:
        s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        w = (R[1, 0] - R[0, 1]) / s
        x = (R[0, 2] + R[2, 0]) / s
        y = (R[1, 2] + R[2, 1]) / s
        z = 0.25 * s
    q = np.array([w, x, y, z], dtype=float)
    if q[0] < 0:
        q = -q
    q /= np.linalg.norm(q)
    return tuple(float(v) for v in q)


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


# Camera looking along world +x with image-down along world -z.
_LEVEL_CAMERA = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])


@dataclass(frozen=True)
class Pose:
    """Camera-to-world pose: position in meters and unit quaternion (w, x, y, z).

    ``yaw`` is the heading of the optical axis about world +z. When the optical
    axis is vertical the heading of the camera's -y axis is used instead.
    """

    position: tuple[float, float, float]
    orientation: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        p = tuple(float(v) for v in self.position)
        q = tuple(float(v) for v in self.orientation)
        if len(p) != 3 or len(q) != 4:
            raise ValueError("pose needs a 3-vector position and a 4-vector quaternion")
        if not all(math.isfinite(v) for v in p + q):
            raise ValueError(f"non-finite pose: position={p}, orientation={q}")
        n = math.sqrt(sum(v * v for v in q))
        if n < 1e-12:
            raise ValueError("zero-norm quaternion")
        q = tuple(v / n for v in q)
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation", q)

    @classmethod
    def from_matrix(cls, position: Sequence[float], R: np.ndarray) -> "Pose":
        return cls(tuple(position), matrix_to_quat(np.asarray(R, dtype=float)))

    @classmethod
    def level(cls, position: Sequence[float], yaw: float) -> "Pose":
        """Horizontal camera at ``position`` whose optical axis points along ``yaw``."""
        return cls.from_matrix(position, rot_z(yaw) @ _LEVEL_CAMERA)

    @cached_property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    @property
    def t(self) -> np.ndarray:
        return np.array(self.position)

    @cached_property
    def yaw(self) -> float:
        R = self.rotation
        fwd = R[:, 2]
        if math.hypot(fwd[0], fwd[1]) > 1e-9:
            return wrap_angle(math.atan2(fwd[1], fwd[0]))
        up = -R[:, 1]
        return wrap_angle(math.atan2(up[1], up[0]))

    def with_yaw(self, yaw: float) -> "Pose":
        """Rotate about world +z so the heading becomes ``yaw``; roll and pitch are kept."""
        return Pose.from_matrix(self.position, rot_z(yaw - self.yaw) @ self.rotation)

    def translated(self, delta: Sequence[float]) -> "Pose":
        p = self.position
        return Pose((p[0] + delta[0], p[1] + delta[1], p[2] + delta[2]), self.orientation)


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the image")

    @classmethod
    def default(cls) -> "Intrinsics":
        # 160x120 pinhole with a ~60 degree horizontal field of view
        return cls(fx=138.6, fy=138.6, cx=80.0, cy=60.0, width=160, height=120)


@dataclass(frozen=True)
class CoverageParams:
    voxel_size: float = 0.10
    depth_stride: int = 12
    max_range: float = 4.0

    def __post_init__(self):
        if not self.voxel_size > 0:
            raise ValueError("voxel_size must be positive")
        if int(self.depth_stride) != self.depth_stride or self.depth_stride < 1:
            raise ValueError("depth_stride must be an integer >= 1")
        if not self.max_range > 0:
            raise ValueError("max_range must be positive")


class Scene:
    """Triangle soup with an axis-aligned bounding box.

    ``triangles`` is an (F, 3, 3) float array. Ray casting is brute force over
    all faces; exact nearest hit with ties going to the lowest face index.
    """

    def __init__(self, triangles, scene_id: str = "scene", bounds=None):
        tris = np.array(triangles, dtype=float).reshape(-1, 3, 3)
        if not np.all(np.isfinite(tris)):
            raise ValueError("scene has non-finite vertex coordinates")
        self.triangles = tris
        self.triangles.setflags(write=False)
        self.id = scene_id
        if bounds is None:
            if len(tris):
                pts = tris.reshape(-1, 3)
                bounds = (pts.min(axis=0), pts.max(axis=0))
            else:
                bounds = (np.zeros(3), np.zeros(3))
        lo, hi = (np.asarray(b, dtype=float) for b in bounds)
        if len(tris) and (np.any(tris.reshape(-1, 3) < lo - 1e-9) or np.any(tris.reshape(-1, 3) > hi + 1e-9)):
            raise ValueError("bounds do not contain all vertices")
        self.bounds = (lo, hi)
        self._v0 = tris[:, 0]
        self._e1 = tris[:, 1] - tris[:, 0]
        self._e2 = tris[:, 2] - tris[:, 0]
        self._normal = np.cross(self._e1, self._e2)

    def __len__(self):
        return len(self.triangles)

    def __repr__(self):
        return f"Scene(id={self.id!r}, triangles={len(self)})"

    def intersect(self, origin, directions: np.ndarray, return_index: bool = False):
        """Ray parameter of the nearest hit for each direction (inf on miss).

        Directions need not be unit length; the returned parameter is in units
        of the direction vector. Möller-Trumbore against every face. With
        ``return_index`` the hit face index (-1 on miss) is returned as well.
        """
        dirs = np.asarray(directions, dtype=float).reshape(-1, 3)
        out = np.full(len(dirs), np.inf)
        face = np.full(len(dirs), -1, dtype=np.int64)
        if len(self.triangles) == 0 or len(dirs) == 0:
            return (out, face) if return_index else out
        o = np.asarray(origin, dtype=float)
        tvec = o[None, :] - self._v0  # (F,3)
        qvec = np.cross(tvec, self._e1)  # (F,3)
        t_num = np.einsum("fk,fk->f", qvec, self._e2)
        # (d x e2) . x == d . (e2 x x): det and u become plain matmuls
        det_vec = np.cross(self._e2, self._e1)
        u_vec = np.cross(self._e2, tvec)
        chunk = max(1, 250_000 // len(self.triangles))
        for start in range(0, len(dirs), chunk):
            d = dirs[start : start + chunk]
            det = d @ det_vec.T  # (R,F)
            ok = np.abs(det) > RAY_EPS
            inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
            u = (d @ u_vec.T) * inv
            v = (d @ qvec.T) * inv
            t = t_num[None, :] * inv
            hit = ok & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (t > RAY_EPS)
            t = np.where(hit, t, np.inf)
            # argmin returns the first minimum: lowest face index wins ties
            idx = np.argmin(t, axis=1)
            best = t[np.arange(len(d)), idx]
            # refine on the winning face's plane; exact for axis-aligned faces
            hit_rows = np.isfinite(best)
            if hit_rows.any():
                n = self._normal[idx[hit_rows]]
                num = np.einsum("rk,rk->r", n, self._v0[idx[hit_rows]] - o[None, :])
                best[hit_rows] = num / np.einsum("rk,rk->r", n, d[hit_rows])
            out[start : start + chunk] = best
            face[start : start + chunk] = np.where(np.isfinite(best), idx, -1)
        return (out, face) if return_index else out


@dataclass(frozen=True)
class DepthImage:
    depth: np.ndarray
    valid: np.ndarray


@dataclass(frozen=True)
class VisibilitySet:
    """Sorted, unique (n, 3) int64 voxel ids."""

    voxels: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))

    def __post_init__(self):
        v = np.asarray(self.voxels, dtype=np.int64).reshape(-1, 3)
        v = np.unique(v, axis=0) if len(v) else v
        v.setflags(write=False)
        object.__setattr__(self, "voxels", v)

    @property
    def size(self) -> int:
        return len(self.voxels)

    def __len__(self):
        return len(self.voxels)

    @cached_property
    def keys(self) -> np.ndarray:
        return pack_voxels(self.voxels)

    def union(self, *others: "VisibilitySet") -> "VisibilitySet":
        return VisibilitySet(np.concatenate([self.voxels] + [o.voxels for o in others]))

    def __eq__(self, other):
        return isinstance(other, VisibilitySet) and np.array_equal(self.voxels, other.voxels)

    def __hash__(self):
        return hash(self.voxels.tobytes())


_PACK_OFFSET = 1 << 20
_PACK_BITS = 21


def pack_voxels(voxels: np.ndarray) -> np.ndarray:
    """Pack (n, 3) voxel ids into sortable int64 keys (|id| < 2**20 per axis)."""
    v = np.asarray(voxels, dtype=np.int64).reshape(-1, 3)
    if len(v) and (v.min() < -_PACK_OFFSET or v.max() >= _PACK_OFFSET):
        raise ValueError("voxel id out of packable range")
    v = v + _PACK_OFFSET
    return (v[:, 0] << (2 * _PACK_BITS)) | (v[:, 1] << _PACK_BITS) | v[:, 2]


def unpack_voxels(keys: np.ndarray) -> np.ndarray:
    mask = (1 << _PACK_BITS) - 1
    k = np.asarray(keys, dtype=np.int64)
    v = np.stack([(k >> (2 * _PACK_BITS)) & mask, (k >> _PACK_BITS) & mask, k & mask], axis=1)
    return v - _PACK_OFFSET


def pixel_rays(K: Intrinsics, T: Pose, us: np.ndarray, vs: np.ndarray) -> np.ndarray:
    """World-frame ray directions whose camera-z component is 1."""
    cam = np.stack([(us - K.cx) / K.fx, (vs - K.cy) / K.fy, np.ones(len(us))], axis=1)
    return cam @ T.rotation.T


def render_pixels(scene: Scene, K: Intrinsics, T: Pose, us, vs, max_range: float) -> np.ndarray:
    """Camera-z depth at the given pixel coordinates; 0 where nothing is hit in range."""
    us = np.asarray(us, dtype=float).ravel()
    vs = np.asarray(vs, dtype=float).ravel()
    dirs = pixel_rays(K, T, us, vs)
    z = scene.intersect(T.position, dirs)
    # z is camera depth because dirs have unit camera-z; range is Euclidean
    dist = z * np.linalg.norm(dirs, axis=1)
    return np.where(np.isfinite(z) & (dist <= max_range), z, 0.0)


def render_depth(scene: Scene, K: Intrinsics, T: Pose, max_range: float) -> DepthImage:
    if not all(math.isfinite(v) for v in T.position + T.orientation):
        raise ValueError("non-finite pose")
    vs, us = np.mgrid[0 : K.height, 0 : K.width]
    depth = render_pixels(scene, K, T, us, vs, max_range).reshape(K.height, K.width)
    return DepthImage(depth=depth, valid=depth > 0)


def stride_grid(K: Intrinsics, stride: int) -> tuple[np.ndarray, np.ndarray]:
    vs, us = np.mgrid[0 : K.height : stride, 0 : K.width : stride]
    return us.ravel(), vs.ravel()


def backproject(K: Intrinsics, T: Pose, us, vs, depth) -> np.ndarray:
    dirs = pixel_rays(K, T, np.asarray(us, float), np.asarray(vs, float))
    return T.t[None, :] + dirs * np.asarray(depth, float)[:, None]


def voxelize(points: np.ndarray, voxel_size: float) -> VisibilitySet:
    return VisibilitySet(np.floor(np.asarray(points) / voxel_size).astype(np.int64))


def visibility_set(depth: DepthImage, K: Intrinsics, T: Pose, params: CoverageParams) -> VisibilitySet:
    r = int(params.depth_stride)
    sub_valid = depth.valid[::r, ::r]
    vs, us = np.nonzero(sub_valid)
    us, vs = us * r, vs * r
    pts = backproject(K, T, us, vs, depth.depth[vs, us])
    return voxelize(pts, params.voxel_size)


def pose_visibility(scene: Scene, K: Intrinsics, T: Pose, params: CoverageParams) -> VisibilitySet:
    """Visibility set rendering only the stride-grid pixels.

    Same result as ``visibility_set(render_depth(...))`` at a fraction of the cost.
    """
    us, vs = stride_grid(K, int(params.depth_stride))
    z = render_pixels(scene, K, T, us, vs, params.max_range)
    keep = z > 0
    pts = backproject(K, T, us[keep], vs[keep], z[keep])
    return voxelize(pts, params.voxel_size)


def coverage_value(sets: Iterable[VisibilitySet]) -> int:
    keys = [s.keys for s in sets]
    if not keys:
        return 0
    return len(np.unique(np.concatenate(keys)))
