"""Scene and trajectory ingestion: OBJ meshes, procedural box rooms, TUM trajectories."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .geometry import Pose, Scene, rot_z

# Faces of the unit cube [-0.5, 0.5]^3, wound counter-clockwise seen from outside.
_CUBE_VERTS = np.array(
    [[x, y, z] for x in (-0.5, 0.5) for y in (-0.5, 0.5) for z in (-0.5, 0.5)]
)
_CUBE_FACES = [
    (0, 1, 3), (0, 3, 2),  # -x
    (4, 6, 7), (4, 7, 5),  # +x
    (0, 4, 5), (0, 5, 1),  # -y
    (2, 3, 7), (2, 7, 6),  # +y
    (0, 2, 6), (0, 6, 4),  # -z
    (1, 5, 7), (1, 7, 3),  # +z
]


def box_triangles(center, size, yaw_deg: float = 0.0) -> np.ndarray:
    """Closed box as 12 triangles, rotated ``yaw_deg`` about +z."""
    size = np.asarray(size, dtype=float)
    if np.any(size <= 0):
        raise ValueError(f"box size must be positive, got {size.tolist()}")
    verts = (_CUBE_VERTS * size) @ rot_z(math.radians(yaw_deg)).T + np.asarray(center, dtype=float)
    return np.array([[verts[i] for i in f] for f in _CUBE_FACES])


def room_boxes(size, thickness: float = 0.1) -> list[dict]:
    """Floor, ceiling and four walls enclosing [0, sx] x [0, sy] x [0, sz]."""
    sx, sy, sz = (float(v) for v in size)
    t = thickness
    return [
        {"center": [sx / 2, sy / 2, -t / 2], "size": [sx + 2 * t, sy + 2 * t, t]},
        {"center": [sx / 2, sy / 2, sz + t / 2], "size": [sx + 2 * t, sy + 2 * t, t]},
        {"center": [-t / 2, sy / 2, sz / 2], "size": [t, sy, sz]},
        {"center": [sx + t / 2, sy / 2, sz / 2], "size": [t, sy, sz]},
        {"center": [sx / 2, -t / 2, sz / 2], "size": [sx, t, sz]},
        {"center": [sx / 2, sy + t / 2, sz / 2], "size": [sx, t, sz]},
    ]


def procedural_scene(spec: Mapping[str, Any]) -> Scene:
    """Expand ``{"id", "room": {"size", "wall_thickness"}, "boxes": [...]}`` into a Scene.

    Each box entry has ``center``, ``size`` and an optional ``yaw_deg``.
    """
    boxes = []
    if "room" in spec:
        room = spec["room"]
        boxes += room_boxes(room["size"], room.get("wall_thickness", 0.1))
    boxes += list(spec.get("boxes", []))
    tris = [box_triangles(b["center"], b["size"], b.get("yaw_deg", 0.0)) for b in boxes]
    tris = np.concatenate(tris) if tris else np.zeros((0, 3, 3))
    return Scene(tris, scene_id=str(spec.get("id", "procedural")))


def load_obj(path, scene_id: str | None = None) -> Scene:
    """Read ``v`` and ``f`` records of an ASCII OBJ; polygons are fan-triangulated."""
    path = Path(path)
    verts: list[list[float]] = []
    faces: list[tuple[int, int, int]] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split("#", 1)[0].split()
            if not parts:
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise ValueError(f"{path}:{lineno}: vertex needs 3 coordinates")
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = []
                for tok in parts[1:]:
                    i = int(tok.split("/")[0])
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                if len(idx) < 3:
                    raise ValueError(f"{path}:{lineno}: face needs >= 3 vertices")
                if any(i < 0 or i >= len(verts) for i in idx):
                    raise ValueError(f"{path}:{lineno}: face index out of range")
                for k in range(1, len(idx) - 1):
                    faces.append((idx[0], idx[k], idx[k + 1]))
    v = np.array(verts, dtype=float).reshape(-1, 3)
    tris = v[np.array(faces, dtype=int).reshape(-1, 3)] if faces else np.zeros((0, 3, 3))
    return Scene(tris, scene_id=scene_id or path.stem)


def write_obj(scene: Scene, path) -> None:
    with open(path, "w") as fh:
        for tri in scene.triangles:
            for v in tri:
                fh.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for i in range(len(scene.triangles)):
            fh.write(f"f {3 * i + 1} {3 * i + 2} {3 * i + 3}\n")


def load_tum(path) -> list[tuple[float, Pose]]:
    """Parse ``timestamp tx ty tz qx qy qz qw`` lines; ``#`` lines are skipped."""
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 8:
                raise ValueError(f"{path}:{lineno}: expected 8 fields, got {len(parts)}")
            ts, tx, ty, tz, qx, qy, qz, qw = (float(p) for p in parts)
            out.append((ts, Pose((tx, ty, tz), (qw, qx, qy, qz))))
    return out


def write_tum(stamped_poses, path) -> None:
    with open(path, "w") as fh:
        fh.write("# timestamp tx ty tz qx qy qz qw\n")
        for ts, p in stamped_poses:
            w, x, y, z = p.orientation
            fh.write(" ".join(repr(float(v)) for v in (ts, *p.position, x, y, z, w)) + "\n")


DEMO_SCENE = {
    "id": "demo_room",
    "room": {"size": [6.0, 5.0, 2.5], "wall_thickness": 0.1},
    "boxes": [
        {"center": [1.2, 1.0, 0.4], "size": [1.2, 0.6, 0.8]},
        {"center": [4.6, 3.8, 0.5], "size": [0.8, 1.4, 1.0], "yaw_deg": 20.0},
        {"center": [3.0, 2.6, 0.75], "size": [0.5, 0.5, 1.5]},
        {"center": [5.2, 1.0, 0.9], "size": [0.6, 0.6, 1.8], "yaw_deg": -35.0},
    ],
}


def demo_scene() -> Scene:
    return procedural_scene(DEMO_SCENE)


def demo_trajectory(n: int = 40, height: float = 1.3) -> list[tuple[float, Pose]]:
    """Level camera looping around the demo room, looking outward-ish along its path."""
    out = []
    for i in range(n):
        a = 2 * math.pi * i / n
        pos = (3.0 + 1.6 * math.cos(a), 2.5 + 1.2 * math.sin(a), height)
        yaw = a + math.pi / 2 + 0.6 * math.sin(3 * a)
        out.append((i / 30.0, Pose.level(pos, yaw)))
    return out
