import json
import math

import numpy as np
import pytest

from viewplan.geometry import Scene
from viewplan.proxy import (
    ClearanceEstimator,
    EpisodeConfig,
    aggregate,
    episodes_csv,
    is_free,
    load_script_csv,
    report_json,
    run_benchmark,
    run_episode,
    run_episodes,
    true_clearance,
)
from viewplan.rng import stream
from viewplan.scenes import box_triangles, demo_scene, procedural_scene

ARENA = procedural_scene({"id": "arena", "room": {"size": [10.0, 10.0, 3.0]}})
ORACLE = ClearanceEstimator()


def test_true_clearance_cases():
    wall = Scene(box_triangles([3.05, 0, 0.5], [0.1, 4, 1]))
    assert true_clearance(wall, (1.0, 0.0, 0.5), 0.0) == pytest.approx(2.0)
    assert true_clearance(wall, (1.0, 0.0, 0.5), math.pi / 2, max_range=7.0) == 7.0
    assert true_clearance(wall, (1.0, 0.0, 0.5), math.pi, max_range=7.0) == 7.0


def test_free_space_parity():
    scene = procedural_scene({"room": {"size": [4, 4, 2]}, "boxes": [{"center": [2, 2, 0.5], "size": [1, 1, 1]}]})
    assert is_free(scene, (0.5, 0.5, 0.5))
    assert not is_free(scene, (2.0, 2.0, 0.5))  # inside the box
    assert not is_free(scene, (9.0, 2.0, 0.5))  # outside the bounds


def test_open_arena_hand_rollout():
    cfg = EpisodeConfig(n_episodes=1)
    ep = run_episode(ARENA, ORACLE, cfg, stream(0), 0, start=(2.0, 5.0, 0.5), goal=(4.5, 5.0, 0.5))
    # 2.5 m at 0.25 m per step: 10 taken steps, then the goal check ends the episode
    assert ep.steps == 10 and ep.attempts == 10
    assert ep.collisions == 0 and ep.progress_moves == 10 and ep.oracle_safe_moves == 10
    assert ep.progress_ratio == 1.0 and ep.outcome == "success"
    assert all(m.progress_gain == pytest.approx(0.25) for m in ep.moves)


def test_infinite_prediction_collides_first():
    wall = Scene(box_triangles([1.55, 0, 0.5], [0.1, 4, 1]))
    est = ClearanceEstimator("additive_noise", offset=math.inf)
    ep = run_episode(wall, est, EpisodeConfig(), stream(0), 0, start=(1.0, 0.0, 0.5), goal=(3.0, 0.0, 0.5))
    first = next(m for m in ep.moves if m.taken)
    assert first.collision and first.true_clearance == pytest.approx(0.5)
    assert ep.outcome == "fail"


def test_oracle_never_collides_demo_scene():
    logs = run_episodes(demo_scene(), ORACLE, EpisodeConfig(n_episodes=200, seed=4))
    assert all(e.collisions == 0 for e in logs)
    assert all(e.skipped is None for e in logs)
    for e in logs:
        assert e.outcome == ("success" if e.progress_ratio >= 0.8 else "fail")


def test_sampled_pairs_respect_separation_and_free_space():
    scene = demo_scene()
    for e in run_episodes(scene, ORACLE, EpisodeConfig(n_episodes=50, seed=1)):
        s, g = np.array(e.start), np.array(e.goal)
        assert np.linalg.norm(g - s) >= 1.5
        assert is_free(scene, s) and is_free(scene, g)


def test_log_invariants_with_noisy_estimator():
    est = ClearanceEstimator("additive_noise", sigma=0.8)
    cfg = EpisodeConfig(n_episodes=100, seed=2)
    for e in run_episodes(demo_scene(), est, cfg):
        for m in e.moves:
            if m.collision:
                assert m.predicted_clearance > 1.2 and m.true_clearance <= 1.2
        if e.outcome == "success":
            assert e.collisions == 0 and e.progress_ratio >= 0.8
        assert e.collisions == sum(m.collision for m in e.moves)


@pytest.mark.parametrize("c1, c2", [(0.0, 0.3), (0.3, 1.0), (0.0, 5.0)])
def test_more_optimism_never_fewer_collisions(c1, c2):
    cfg = EpisodeConfig(n_episodes=150, seed=6)
    a = run_episodes(demo_scene(), ClearanceEstimator("additive_noise", offset=c1), cfg)
    b = run_episodes(demo_scene(), ClearanceEstimator("additive_noise", offset=c2), cfg)
    assert all(eb.collisions >= ea.collisions for ea, eb in zip(a, b))
    assert sum(e.collisions for e in b) > 0


SCRIPT_PAIRS = [
    ((2.0, 5.0, 0.5), (4.0, 5.0, 0.5)),
    ((8.0, 5.0, 0.5), (9.5, 5.0, 0.5)),
    ((2.0, 2.0, 0.5), (2.0, 8.0, 0.5)),
]
SCRIPT = {(0, 0): 0.5, (1, 4): 5.0, (2, 0): 1.0, (2, 1): 1.0, (2, 2): 1.0, (2, 3): 1.0}


def test_scripted_three_episode_aggregation():
    """Hand aggregation in a 10 m arena (inner wall faces at x, y = 0 and 10).

    ep0: step 0 predicted unsafe and skipped; 8 steps reach the goal. attempts 9,
         taken 8, oracle-safe 9, progress 8 -> ratio 8/9, success.
    ep1: 4 safe steps to x = 9.0 (clearance 1.0); step 4 is scripted to 5.0 and
         collides; steps 5..11 predicted 1.0 and skipped. taken 5, collisions 1,
         oracle-safe 4, progress 4 -> fail, Col/100 = 20.
    ep2: steps 0..3 skipped, then 8 steps along +y (goal 6 m away). oracle-safe 12,
         progress 8 -> ratio 2/3 < 0.8, fail without collisions.
    """
    cfg = EpisodeConfig(n_episodes=3)
    logs = run_episodes(ARENA, ClearanceEstimator("scripted", script=SCRIPT), cfg, pairs=SCRIPT_PAIRS)
    e0, e1, e2 = logs
    assert (e0.attempts, e0.steps, e0.oracle_safe_moves, e0.progress_moves, e0.outcome) == (9, 8, 9, 8, "success")
    assert (e1.attempts, e1.steps, e1.collisions, e1.oracle_safe_moves, e1.progress_moves, e1.outcome) == (12, 5, 1, 4, 4, "fail")
    assert (e2.attempts, e2.steps, e2.collisions, e2.oracle_safe_moves, e2.progress_moves, e2.outcome) == (12, 8, 0, 12, 8, "fail")

    m = aggregate(logs, cfg)["metrics"]
    assert m["succ"]["mean"] == pytest.approx(1 / 3)
    assert m["succ"]["ci95"] == pytest.approx(1.96 * math.sqrt(1 / 3) / math.sqrt(3))
    assert m["col_per_100"]["mean"] == pytest.approx(20 / 3)
    assert m["col_per_fail"]["mean"] == pytest.approx(0.5)
    assert m["path_ratio"]["mean"] == pytest.approx((8 / 9 + 1.0 + 8 / 12) / 3)


def test_attempt_denominator_flag():
    cfg = EpisodeConfig(n_episodes=3, count_attempts=True)
    logs = run_episodes(ARENA, ClearanceEstimator("scripted", script=SCRIPT), cfg, pairs=SCRIPT_PAIRS)
    assert aggregate(logs, cfg)["metrics"]["col_per_100"]["mean"] == pytest.approx(100 / 12 / 3)


def test_all_fail_with_one_collision_each():
    wall = Scene(box_triangles([1.55, 0, 0.5], [0.1, 4, 1]))
    est = ClearanceEstimator("scripted", script={(i, 0): 9.0 for i in range(4)})
    cfg = EpisodeConfig(n_episodes=4, horizon=3)
    pairs = [((1.0, 0.0, 0.5), (3.0, 0.0, 0.5))] * 4
    m = aggregate(run_episodes(wall, est, cfg, pairs), cfg)["metrics"]
    assert m["succ"]["mean"] == 0.0
    assert m["col_per_fail"]["mean"] == 1.0


def test_benchmark_oracle_aggregation_and_determinism():
    cfg = EpisodeConfig(n_episodes=60, seed=11)
    pairs = [((2.0, 5.0, 0.5), (2.0 + 0.5 * (i % 5) + 1.5, 5.0, 0.5)) for i in range(60)]
    r = run_benchmark(ARENA, ORACLE, cfg, pairs)
    assert r["metrics"]["succ"]["mean"] == 1.0
    assert r["metrics"]["col_per_100"]["mean"] == 0.0
    assert r["metrics"]["col_per_fail"] == {"mean": 0.0, "ci95": None, "n": 0}
    a = report_json(run_benchmark(demo_scene(), ORACLE, cfg))
    b = report_json(run_benchmark(demo_scene(), ORACLE, cfg))
    assert a == b


def test_single_episode_ci_is_undefined():
    r = run_benchmark(ARENA, ORACLE, EpisodeConfig(n_episodes=1, seed=0))
    assert all(m["ci95"] is None for m in r["metrics"].values())


def test_unsampleable_scene_skips_with_reason(caplog):
    solid = Scene(box_triangles([0, 0, 0], [2, 2, 2]))  # bounds are the box itself
    logs = run_episodes(solid, ORACLE, EpisodeConfig(n_episodes=2, max_retries=5))
    assert all(e.skipped for e in logs)
    assert aggregate(logs, EpisodeConfig())["n_skipped"] == 2
    assert "skipped" in caplog.text


def test_script_csv(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("episode,step,predicted_clearance\n0,1,2.5\n3,0,0.1\n")
    assert load_script_csv(p) == {(0, 1): 2.5, (3, 0): 0.1}
    p.write_text("episode,step,predicted_clearance\n0,x,2.5\n")
    with pytest.raises(ValueError, match=":2:"):
        load_script_csv(p)


def test_episode_csv_header():
    logs = run_episodes(ARENA, ORACLE, EpisodeConfig(n_episodes=2))
    lines = episodes_csv(logs).splitlines()
    assert lines[0].startswith("episode,outcome") and len(lines) == 3


def test_invalid_configs():
    with pytest.raises(ValueError):
        EpisodeConfig(progress_success_fraction=0)
    with pytest.raises(ValueError):
        ClearanceEstimator("psychic")
