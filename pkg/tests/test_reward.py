"""Table-driven step-reward checks, every expected value evaluated by hand."""

import numpy as np
import pytest
from conftest import human, make_world, poi, robot

from hypersam.world import (
    ARRIVAL_REWARD,
    FAILURE_PENALTY,
    TEAM_REWARD,
    Event,
    EventKind,
    PoiStatus,
    compute_reward,
    reward_branch,
)

# A robot at the origin heading for a goal 5 m east; radii 0.3 everywhere.
FAR_GOAL = (5.0, 0.0)


def step_pair(robot_after, humans=(), robots_extra=(), events=(), robot_before=None, step=1):
    """Build a (before, after) world pair around a single focal robot."""
    before = make_world(
        robots=(robot_before or robot((0.0, 0.0), goal=FAR_GOAL),) + tuple(robots_extra),
        humans=humans,
        pois=(poi((40.0, 40.0)),),
        step_index=step - 1,
    )
    after = make_world(
        robots=(robot_after,) + tuple(robots_extra),
        humans=humans,
        pois=(poi((40.0, 40.0)),),
        step_index=step,
    )
    return before, after, list(events)


def gap_to_center(gap, r_robot=0.3, r_human=0.3):
    """Place a human so the surface clearance to a robot at the origin is ``gap``."""
    return (gap + r_robot + r_human, 0.0)


def evaluate(robot_after, **kw):
    before, after, events = step_pair(robot_after, **kw)
    return reward_branch(before, after, 0, events)


class TestProximityBranch:
    def test_gap_020_clamps_to_minus_five(self):
        value, branch = evaluate(robot((0.0, 0.0), goal=FAR_GOAL), humans=(human(gap_to_center(0.2)),))
        assert branch == "proximity"
        assert value == pytest.approx(-5.0)  # max(-1/0.2, -5) = -5

    def test_gap_040_is_minus_two_point_five(self):
        value, branch = evaluate(robot((0.0, 0.0), goal=FAR_GOAL), humans=(human(gap_to_center(0.4)),))
        assert branch == "proximity"
        assert value == pytest.approx(-2.5)  # -1/0.4

    def test_gap_at_boundary_045_still_penalized(self):
        value, branch = evaluate(robot((0.0, 0.0), goal=FAR_GOAL), humans=(human(gap_to_center(0.45)),))
        assert branch == "proximity"
        assert value == pytest.approx(-1.0 / 0.45)

    def test_gap_just_outside_boundary_is_progress_branch(self):
        value, branch = evaluate(robot((0.0, 0.0), goal=FAR_GOAL), humans=(human(gap_to_center(0.450001)),))
        assert branch == "progress"

    def test_penalty_strictly_above_floor_inside_band(self):
        for gap in (0.25, 0.3, 0.44):
            value, branch = evaluate(robot((0.0, 0.0), goal=FAR_GOAL), humans=(human(gap_to_center(gap)),))
            assert branch == "proximity"
            assert -5.0 < value == pytest.approx(-1.0 / gap)

    def test_gap_below_clamp_point_still_minus_five(self):
        value, branch = evaluate(robot((0.0, 0.0), goal=FAR_GOAL), humans=(human(gap_to_center(0.1)),))
        assert branch == "proximity"
        assert value == pytest.approx(-5.0)  # max(-10, -5)


class TestProgressBranch:
    def test_progress_formula(self):
        # Moved from 5.0 m to 4.6 m from goal: 0.5*0.4 - 0.15*0.25 = 0.1625.
        before = robot((0.0, 0.0), goal=FAR_GOAL)
        after = robot((0.4, 0.0), goal=FAR_GOAL)
        value, branch = evaluate(after, robot_before=before)
        assert branch == "progress"
        assert value == pytest.approx(0.1625)

    def test_zero_progress_pays_time_penalty_only(self):
        value, branch = evaluate(robot((0.0, 0.0), goal=FAR_GOAL))
        assert branch == "progress"
        assert value == pytest.approx(-0.15 * 0.25)  # -0.0375

    def test_retreat_is_negative_progress(self):
        before = robot((0.0, 0.0), goal=FAR_GOAL)
        after = robot((-0.4, 0.0), goal=FAR_GOAL)
        value, _ = evaluate(after, robot_before=before)
        assert value == pytest.approx(0.5 * -0.4 - 0.0375)

    def test_goalless_robot_gets_time_penalty(self):
        value, branch = evaluate(robot((0.0, 0.0), goal=(9.0, 9.0)), robots_extra=(robot((3.0, 3.0), goal=FAR_GOAL),))
        assert branch == "progress"
        assert value == pytest.approx(-0.0375)

    def test_time_penalty_scales_with_dt(self):
        before = make_world(robots=(robot((0.0, 0.0), goal=FAR_GOAL),), dt=0.5)
        after = make_world(robots=(robot((0.0, 0.0), goal=FAR_GOAL),), dt=0.5, step_index=1)
        assert compute_reward(before, after, 0, []) == pytest.approx(-0.075)


class TestTerminalBranches:
    def test_team_success_pays_hundred_to_everyone(self):
        r0 = robot((5.0, 0.0), goal=(5.0, 0.1))
        r1 = robot((0.0, 5.0), goal=(0.0, 5.1))
        before = make_world(robots=(robot((4.0, 0.0), goal=(5.0, 0.1)), robot((0.0, 4.0), goal=(0.0, 5.1))))
        after = make_world(robots=(r0, r1), step_index=1)
        for rid in (0, 1):
            assert compute_reward(before, after, rid, []) == TEAM_REWARD

    def test_goalless_robots_count_as_arrived_for_team_reward(self):
        after = make_world(robots=(robot((1.0, 1.0)), robot((2.0, 2.0))), step_index=1)
        before = make_world(robots=(robot((1.0, 1.0)), robot((2.0, 2.0))))
        assert compute_reward(before, after, 0, []) == TEAM_REWARD

    def test_single_arrival_pays_twenty_five(self):
        arriving = robot((5.0, 0.05), goal=(5.0, 0.0))
        far = robot((0.0, 5.0), goal=(0.0, 9.0))
        before = make_world(robots=(robot((4.0, 0.0), goal=(5.0, 0.0)), far))
        after = make_world(robots=(arriving, far), step_index=1)
        assert compute_reward(before, after, 0, []) == ARRIVAL_REWARD

    def test_arrival_outranks_collision_in_case_order(self):
        arriving = robot((5.0, 0.05), goal=(5.0, 0.0))
        intruder = robot((5.0, 0.5), goal=(0.0, 9.0))  # 0.45 m apart: overlapping
        before = make_world(robots=(robot((4.0, 0.0), goal=(5.0, 0.0)), intruder))
        after = make_world(robots=(arriving, intruder), step_index=1)
        assert compute_reward(before, after, 0, []) == ARRIVAL_REWARD
        assert compute_reward(before, after, 1, []) == FAILURE_PENALTY

    def test_robot_robot_collision(self):
        a = robot((0.0, 0.0), goal=FAR_GOAL)
        b = robot((0.5, 0.0), goal=FAR_GOAL)
        before = make_world(robots=(a, b))
        after = make_world(robots=(a, b), step_index=1)
        assert compute_reward(before, after, 0, []) == FAILURE_PENALTY
        assert compute_reward(before, after, 1, []) == FAILURE_PENALTY

    def test_robot_human_collision(self):
        value, branch = evaluate(robot((0.0, 0.0), goal=FAR_GOAL), humans=(human((0.55, 0.0)),))
        assert branch == "collision"
        assert value == FAILURE_PENALTY

    def test_collision_boundary_exact_touch_counts(self):
        value, branch = evaluate(robot((0.0, 0.0), goal=FAR_GOAL), humans=(human((0.6, 0.0)),))
        assert branch == "collision"

    def test_timeout_penalty(self):
        events = [Event(EventKind.TIMEOUT, 400)]
        value, branch = evaluate(robot((0.0, 0.0), goal=FAR_GOAL), events=events, step=400)
        assert branch == "timeout"
        assert value == FAILURE_PENALTY

    def test_timeout_checked_before_proximity(self):
        events = [Event(EventKind.TIMEOUT, 400)]
        value, branch = evaluate(
            robot((0.0, 0.0), goal=FAR_GOAL), humans=(human(gap_to_center(0.3)),), events=events, step=400
        )
        assert branch == "timeout"
        assert value == FAILURE_PENALTY

    def test_team_success_outranks_own_arrival(self):
        r0 = robot((5.0, 0.0), goal=(5.0, 0.1))
        r1 = robot((0.0, 5.0), goal=(0.0, 5.1))
        before = make_world(robots=(r0, r1))
        after = make_world(robots=(r0, r1), step_index=1)
        value, branch = reward_branch(before, after, 0, [])
        assert branch == "team_success"
        assert value == TEAM_REWARD


def random_world_pair(rng):
    robots = tuple(
        robot(rng.uniform(-8, 8, 2), goal=rng.uniform(-8, 8, 2) if rng.random() < 0.9 else None)
        for _ in range(rng.integers(1, 4))
    )
    humans = tuple(human(rng.uniform(-8, 8, 2)) for _ in range(rng.integers(0, 4)))
    before = make_world(robots=robots, humans=humans, step_index=3)
    moved = tuple(
        robot(
            np.asarray(r.position) + rng.uniform(-0.25, 0.25, 2),
            goal=r.goal,
        )
        for r in robots
    )
    after = make_world(robots=moved, humans=humans, step_index=4)
    events = [Event(EventKind.TIMEOUT, 4)] if rng.random() < 0.1 else []
    return before, after, events


def test_exactly_one_branch_fires_on_random_states():
    rng = np.random.default_rng(42)
    seen = set()
    for _ in range(500):
        before, after, events = random_world_pair(rng)
        for rid in range(len(after.robots)):
            value, branch = reward_branch(before, after, rid, events)
            assert np.isfinite(value)
            assert branch in {"team_success", "arrival", "collision", "timeout", "proximity", "progress"}
            seen.add(branch)
    assert {"progress", "collision", "team_success"} <= seen  # the generator reaches several branches
