import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import quad
from viewplan.geometry import (
    CoverageParams,
    DepthImage,
    Intrinsics,
    Pose,
    Scene,
    VisibilitySet,
    coverage_value,
    pose_visibility,
    render_depth,
    visibility_set,
    wrap_angle,
)
from viewplan.scenes import demo_scene, demo_trajectory


def test_fronto_parallel_wall_depth_is_exact(wall_scene, small_K):
    d = render_depth(wall_scene, small_K, Pose((0, 0, 0)), max_range=10.0)
    assert d.valid.sum() > 0
    assert np.all(d.depth[d.valid] == 2.0)
    # the wall spans +-1 m at 2 m: pixels with |u - cx| <= 25 are inside it
    assert d.valid[24, 32] and not d.valid[0, 0]


def test_near_wall_occludes_far_wall(small_K):
    scene = Scene(np.concatenate([quad(3.0, 5.0), quad(1.0, 5.0)]))
    d = render_depth(scene, small_K, Pose((0, 0, 0)), max_range=10.0)
    assert d.valid.all()
    assert np.all(d.depth == 1.0)


def test_empty_scene_renders_all_invalid(small_K):
    d = render_depth(Scene(np.zeros((0, 3, 3))), small_K, Pose((0, 0, 0)), 5.0)
    assert not d.valid.any()
    assert np.all(d.depth == 0)


def test_depth_is_camera_z_not_ray_length(small_K):
    d = render_depth(Scene(quad(2.0, 10.0)), small_K, Pose((0, 0, 0)), 100.0)
    # off-axis pixels see the plane at the same camera z
    assert d.depth[0, 0] == pytest.approx(2.0, abs=1e-12)


def test_max_range_drops_far_hits(wall_scene, small_K):
    d = render_depth(wall_scene, small_K, Pose((0, 0, 0)), max_range=1.5)
    assert not d.valid.any()


def test_nonfinite_pose_is_rejected():
    with pytest.raises(ValueError):
        Pose((float("nan"), 0.0, 0.0))
    with pytest.raises(ValueError):
        Pose((0.0, 0.0, 0.0), (float("inf"), 0, 0, 0))


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        Intrinsics(0, 1, 0, 0, 10, 10)
    with pytest.raises(ValueError):
        Intrinsics(1, 1, 10, 0, 10, 10)


def test_shared_edge_resolves_to_lowest_face_index():
    a = [[0, 0, 1], [1, 0, 1], [0, 1, 1]]
    b = [[1, 0, 1], [1, 1, 1], [0, 1, 1]]
    ray = np.array([[0.5, 0.5, 1.0]])  # passes through the shared diagonal
    t, idx = Scene([a, b]).intersect((0, 0, 0), ray, return_index=True)
    assert t[0] == pytest.approx(1.0) and idx[0] == 0
    t, idx = Scene([b, a]).intersect((0, 0, 0), ray, return_index=True)
    assert idx[0] == 0


def test_miss_reports_minus_one():
    t, idx = Scene(quad(2.0)).intersect((0, 0, 0), np.array([[0, 0, -1.0]]), return_index=True)
    assert math.isinf(t[0]) and idx[0] == -1


# --- poses -------------------------------------------------------------------


@given(st.floats(-20, 20, allow_nan=False))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)


def test_wrap_angle_boundaries():
    assert wrap_angle(math.pi) == math.pi
    assert wrap_angle(-math.pi) == math.pi
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)


@given(st.floats(-math.pi + 1e-6, math.pi), st.floats(-3, 3), st.floats(-3, 3))
def test_level_pose_yaw_roundtrip(yaw, x, y):
    p = Pose.level((x, y, 1.0), yaw)
    assert p.yaw == pytest.approx(yaw, abs=1e-9)
    assert abs(math.sqrt(sum(q * q for q in p.orientation)) - 1) < 1e-9


@given(st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi), st.floats(-0.6, 0.6))
def test_with_yaw_keeps_pitch(yaw0, yaw1, pitch):
    c, s = math.cos(pitch), math.sin(pitch)
    tilt = np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
    base = Pose.from_matrix((0, 0, 0), Pose.level((0, 0, 0), yaw0).rotation @ tilt)
    turned = base.with_yaw(yaw1)
    assert turned.yaw == pytest.approx(wrap_angle(yaw1), abs=1e-9) or abs(abs(turned.yaw - yaw1) - 2 * math.pi) < 1e-9
    assert turned.rotation[2, 2] == pytest.approx(base.rotation[2, 2], abs=1e-12)


# --- visibility sets ---------------------------------------------------------


def test_all_invalid_depth_gives_empty_set(small_K):
    z = np.zeros((small_K.height, small_K.width))
    vs = visibility_set(DepthImage(z, z > 0), small_K, Pose((0, 0, 0)), CoverageParams())
    assert vs.size == 0


def test_principal_pixel_backprojects_on_axis():
    K = Intrinsics(fx=100, fy=100, cx=20, cy=10, width=40, height=20)
    d = 2.37
    z = np.zeros((20, 40))
    z[10, 20] = d
    vs = visibility_set(DepthImage(z, z > 0), K, Pose((0, 0, 0)), CoverageParams(voxel_size=0.1, depth_stride=10))
    assert vs.voxels.tolist() == [[0, 0, math.floor(d / 0.1)]]


def test_wall_3x3_grid_matches_hand_backprojection():
    K = Intrinsics(fx=40.0, fy=40.0, cx=20.0, cy=20.0, width=41, height=41)
    params = CoverageParams(voxel_size=0.5, depth_stride=20, max_range=10.0)
    scene = Scene(quad(2.0, 1.2))  # covers the 3x3 samples with margin
    got = visibility_set(render_depth(scene, K, Pose((0, 0, 0)), 10.0), K, Pose((0, 0, 0)), params)
    # oracle: pixels (0,20,40)^2, X = (u-cx)/fx * z, z = 2
    cells = set()
    for v in (0, 20, 40):
        for u in (0, 20, 40):
            x, y, zz = (u - 20) / 40 * 2.0, (v - 20) / 40 * 2.0, 2.0
            cells.add((math.floor(x / 0.5), math.floor(y / 0.5), math.floor(zz / 0.5)))
    assert {tuple(r) for r in got.voxels.tolist()} == cells
    assert got.size == len(cells) == 9


def test_strided_render_matches_full_render():
    scene = demo_scene()
    K = Intrinsics.default()
    params = CoverageParams()
    for _, T in demo_trajectory(6):
        full = visibility_set(render_depth(scene, K, T, params.max_range), K, T, params)
        assert pose_visibility(scene, K, T, params) == full


def test_visibility_is_deterministic_and_within_range():
    scene = demo_scene()
    K = Intrinsics.default()
    params = CoverageParams(max_range=3.0)
    T = demo_trajectory(5)[2][1]
    a = pose_visibility(scene, K, T, params)
    b = pose_visibility(scene, K, T, params)
    assert a.voxels.tobytes() == b.voxels.tobytes()
    # each voxel's nearest corner is within range of the camera
    lo = a.voxels * params.voxel_size
    nearest = np.clip(T.t, lo, lo + params.voxel_size)
    assert np.all(np.linalg.norm(nearest - T.t, axis=1) <= params.max_range + 1e-9)


def test_visibility_set_is_sorted_unique_and_idempotent():
    v = VisibilitySet([[3, 0, 0], [1, 2, 3], [1, 2, 3], [-1, 5, 0]])
    assert v.voxels.tolist() == [[-1, 5, 0], [1, 2, 3], [3, 0, 0]]
    assert v.size == 3
    assert v.union(v) == v


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_occluder_never_increases_depth(seed):
    rng = np.random.default_rng(seed)
    K = Intrinsics(fx=30, fy=30, cx=16, cy=12, width=32, height=24)
    back = quad(4.0, 6.0)
    z = rng.uniform(0.5, 3.5)
    c = rng.uniform(-1, 1, size=2)
    tri = np.array([[c[0], c[1], z], [c[0] + rng.uniform(0.2, 2), c[1], z], [c[0], c[1] + rng.uniform(0.2, 2), z]])
    before = render_depth(Scene(back), K, Pose((0, 0, 0)), 10.0)
    after = render_depth(Scene(np.concatenate([back, tri[None]])), K, Pose((0, 0, 0)), 10.0)
    b = np.where(before.valid, before.depth, np.inf)
    a = np.where(after.valid, after.depth, np.inf)
    assert np.all(a <= b)


# --- coverage value ----------------------------------------------------------


def _vs(ids):
    return VisibilitySet([[i, 0, 0] for i in ids])


def test_coverage_value_examples():
    assert coverage_value([]) == 0
    assert coverage_value([_vs([1, 2, 3]), _vs([4, 5, 6, 7])]) == 7
    assert coverage_value([_vs("abc".encode()), _vs("bcd".encode())]) == 4


family = st.lists(st.frozensets(st.integers(0, 30), max_size=12), min_size=1, max_size=6)


@given(family, family)
def test_coverage_is_monotone(a, b):
    sa = [_vs(s) for s in a]
    sb = [_vs(s) for s in b]
    assert coverage_value(sa) <= coverage_value(sa + sb)


@given(family, family, st.frozensets(st.integers(0, 30), max_size=12))
def test_coverage_has_diminishing_returns(small, extra, t):
    S = [_vs(s) for s in small]
    S2 = S + [_vs(s) for s in extra]
    T = _vs(t)
    gain_small = coverage_value(S + [T]) - coverage_value(S)
    gain_big = coverage_value(S2 + [T]) - coverage_value(S2)
    assert gain_small >= gain_big
