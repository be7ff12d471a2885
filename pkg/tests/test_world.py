"""World construction, observation, stepping, events, macro clock."""

import dataclasses

import numpy as np
import pytest
from conftest import human, make_world, poi, robot

from hypersam.config import ScenarioConfig
from hypersam.errors import ConfigError, DimensionMismatch, HypersamError, UnknownAgent
from hypersam.world import (
    EventKind,
    LocalAction,
    MacroAction,
    ObservationHistory,
    PoiStatus,
    advance_macro_clock,
    apply_assignments,
    check_conditions,
    init_scenario,
    observe,
    step_world,
)

CFG = ScenarioConfig(n_robots=3, n_humans=5, n_pois=10)


class TestInitScenario:
    def test_counts_and_initial_statuses(self):
        world = init_scenario(CFG, seed=7)
        assert len(world.robots) == 3
        assert len(world.humans) == 5
        assert len(world.pois) == 10
        assert all(p.status is PoiStatus.UNEXPLORED for p in world.pois)
        assert world.t == 0.0 and world.step_index == 0

    def test_degenerate_minimum(self):
        cfg = ScenarioConfig(n_robots=1, n_humans=0, n_pois=1)
        world = init_scenario(cfg, seed=123)
        assert len(world.humans) == 0
        assert len(world.robots) == 1

    def test_determinism_bit_identical(self):
        assert init_scenario(CFG, seed=99) == init_scenario(CFG, seed=99)

    def test_seeds_differ(self):
        assert init_scenario(CFG, seed=1) != init_scenario(CFG, seed=2)

    def test_agents_on_spawn_circle_pois_on_task_circle(self):
        world = init_scenario(CFG, seed=5)
        for agent in world.robots + world.humans:
            assert np.hypot(*agent.position) == pytest.approx(CFG.spawn_radius)
        for p in world.pois:
            assert np.hypot(*p.position) == pytest.approx(CFG.poi_radius)

    def test_no_initial_overlap(self):
        world = init_scenario(CFG, seed=11)
        agents = world.robots + world.humans
        for i in range(len(agents)):
            for j in range(i + 1, len(agents)):
                gap = agents[i].distance_to(agents[j].position)
                assert gap > agents[i].radius + agents[j].radius

    def test_overcrowded_config_raises(self):
        cfg = ScenarioConfig(n_robots=500, n_humans=0, n_pois=1, spawn_radius=1.0)
        with pytest.raises(ConfigError):
            init_scenario(cfg, seed=0)

    def test_zero_robots_rejected(self):
        with pytest.raises(ConfigError):
            init_scenario(ScenarioConfig(n_robots=0), seed=0)


class TestObserve:
    def test_single_pair_observation(self):
        world = make_world(robots=(robot((0, 0)),), humans=(human((1, 1)),), pois=(poi((2, 2)),))
        obs = observe(world, 0)
        assert len(obs.others) == 1
        assert [f.name for f in dataclasses.fields(obs.others[0])] == ["px", "py", "vx", "vy", "radius"]

    def test_others_count(self):
        world = init_scenario(CFG, seed=3)
        assert len(observe(world, 0).others) == 7  # 2 other robots + 5 humans

    def test_self_state_has_nine_components(self):
        world = init_scenario(CFG, seed=3)
        me = observe(world, 1).self_state
        flat = [*me.position, *me.velocity, me.radius, *(me.goal or (0.0, 0.0)), me.v_pref, me.policy_tag]
        assert len(flat) == 9

    def test_no_private_fields_leak(self):
        world = init_scenario(CFG, seed=3)
        obs = observe(world, 0)
        human_goals = {h.goal for h in world.humans}
        for entry in obs.others:
            values = {getattr(entry, f.name) for f in dataclasses.fields(entry)}
            for goal in human_goals:
                assert goal[0] not in values or goal[1] not in values
            assert not hasattr(entry, "goal")
            assert not hasattr(entry, "v_pref")

    def test_unknown_robot_raises(self):
        world = init_scenario(CFG, seed=3)
        with pytest.raises(UnknownAgent):
            observe(world, 17)

    def test_poi_statuses_reflect_world(self):
        world = make_world(
            robots=(robot((0, 0)),),
            pois=(poi((1, 0)), poi((2, 0), PoiStatus.ASSIGNED, 0), poi((3, 0), PoiStatus.EXPLORED)),
        )
        statuses = [v.status for v in observe(world, 0).poi_view]
        assert statuses == [PoiStatus.UNEXPLORED, PoiStatus.ASSIGNED, PoiStatus.EXPLORED]

    def test_history_window_is_bounded(self):
        world = make_world(robots=(robot((0, 0)),), pois=(poi((1, 0)),))
        tracker = ObservationHistory(window=5)
        for _ in range(9):
            obs = tracker.push(observe(world, 0))
        assert len(obs.history) == 5


class TestStepWorld:
    def test_euler_integration(self):
        world = make_world(robots=(robot((0, 0), goal=(9, 0)),), pois=(poi((9, 0)),))
        nxt, _ = step_world(world, [LocalAction((1.0, 0.0))], CFG)
        assert nxt.robots[0].position == (0.25, 0.0)
        assert nxt.t == pytest.approx(0.25)
        assert nxt.step_index == 1

    def test_speed_clamped_same_heading(self):
        world = make_world(robots=(robot((0, 0), goal=(9, 0)),), pois=(poi((9, 0)),))
        nxt, _ = step_world(world, [LocalAction((2.0, 0.0))], CFG)
        assert nxt.robots[0].velocity == (1.0, 0.0)
        nxt, _ = step_world(world, [LocalAction((1.6, 1.2))], CFG)  # norm 2, heading 3-4-5
        assert np.hypot(*nxt.robots[0].velocity) == pytest.approx(1.0)
        assert nxt.robots[0].velocity[0] / nxt.robots[0].velocity[1] == pytest.approx(1.6 / 1.2)

    def test_arrival_event_marks_poi_explored(self):
        world = make_world(
            robots=(robot((0.9, 0.0), goal=(1.0, 0.0)),),
            pois=(poi((1.0, 0.0), PoiStatus.ASSIGNED, 0),),
        )
        nxt, events = step_world(world, [LocalAction((1.0, 0.0))], CFG)
        kinds = [e.kind for e in events]
        assert EventKind.ARRIVAL in kinds
        assert EventKind.ALL_POIS_EXPLORED in kinds
        assert nxt.pois[0].status is PoiStatus.EXPLORED
        arrival = next(e for e in events if e.kind is EventKind.ARRIVAL)
        assert arrival.robot_id == 0 and arrival.poi_id == 0

    def test_unassigned_poi_not_explored_by_passing(self):
        world = make_world(robots=(robot((0.9, 0.0)),), pois=(poi((1.0, 0.0)),))
        nxt, events = step_world(world, [LocalAction((1.0, 0.0))], CFG)
        assert nxt.pois[0].status is PoiStatus.UNEXPLORED
        assert all(e.kind is not EventKind.ARRIVAL for e in events)

    def test_action_count_mismatch(self):
        world = make_world(robots=(robot((0, 0)), robot((3, 3))), pois=(poi((9, 9)),))
        with pytest.raises(DimensionMismatch):
            step_world(world, [LocalAction((0.0, 0.0))], CFG)

    def test_stepping_terminal_world_raises(self):
        world = make_world(robots=(robot((0, 0)), robot((0.5, 0.0))), pois=(poi((9, 9)),))
        nxt, events = step_world(world, [LocalAction((0, 0))] * 2, CFG)
        assert nxt.done
        with pytest.raises(HypersamError):
            step_world(nxt, [LocalAction((0, 0))] * 2, CFG)

    def test_humans_advance_toward_goals(self):
        world = make_world(
            robots=(robot((8.0, 8.0)),),
            humans=(human((0.0, 0.0), goal=(5.0, 0.0)),),
            pois=(poi((9, 9)),),
        )
        nxt, _ = step_world(world, [LocalAction((0, 0))], CFG)
        assert nxt.humans[0].position[0] > 0.0

    def test_step_determinism(self):
        cfg = ScenarioConfig(n_robots=2, n_humans=3, n_pois=2)
        world = init_scenario(cfg, seed=21)
        actions = [LocalAction((0.3, 0.1)), LocalAction((-0.2, 0.4))]
        a, ev_a = step_world(world, actions, cfg)
        b, ev_b = step_world(world, actions, cfg)
        assert a == b and ev_a == ev_b


class TestCheckConditions:
    def test_robot_robot_collision(self):
        world = make_world(robots=(robot((0, 0)), robot((0.5, 0))), pois=(poi((9, 9)),), step_index=1)
        kinds = [e.kind for e in check_conditions(world)]
        assert kinds == [EventKind.ROBOT_ROBOT_COLLISION]

    def test_all_explored_success(self):
        world = make_world(robots=(robot((0, 0)),), pois=(poi((9, 9), PoiStatus.EXPLORED),))
        kinds = [e.kind for e in check_conditions(world)]
        assert kinds == [EventKind.ALL_POIS_EXPLORED]

    def test_timeout_with_unexplored_poi(self):
        world = make_world(robots=(robot((0, 0)),), pois=(poi((9, 9)),), step_index=400)
        kinds = [e.kind for e in check_conditions(world)]
        assert kinds == [EventKind.TIMEOUT]

    def test_no_timeout_when_everything_explored_at_limit(self):
        world = make_world(robots=(robot((0, 0)),), pois=(poi((9, 9), PoiStatus.EXPLORED),), step_index=400)
        kinds = [e.kind for e in check_conditions(world)]
        assert kinds == [EventKind.ALL_POIS_EXPLORED]

    def test_no_events_in_clear_state(self):
        world = make_world(robots=(robot((0, 0)),), humans=(human((3, 3)),), pois=(poi((9, 9)),), step_index=5)
        assert check_conditions(world) == []

    def test_collision_constraints_consistent(self):
        # No collision events while every pairwise distance respects the radii sums.
        rng = np.random.default_rng(0)
        for _ in range(200):
            pts = rng.uniform(-5, 5, size=(4, 2))
            world = make_world(
                robots=tuple(robot(p) for p in pts[:2]),
                humans=tuple(human(p) for p in pts[2:]),
                pois=(poi((9, 9)),),
                step_index=1,
            )
            events = check_conditions(world)
            agents = world.robots + world.humans
            overlap = any(
                agents[i].distance_to(agents[j].position) <= agents[i].radius + agents[j].radius
                for i in range(len(agents))
                for j in range(i + 1, len(agents))
                if i < 2 or j < 2  # at least one robot involved
            )
            has_collision = any(
                e.kind in (EventKind.ROBOT_ROBOT_COLLISION, EventKind.ROBOT_HUMAN_COLLISION) for e in events
            )
            assert overlap == has_collision


class TestMacroClock:
    def world(self):
        return make_world(
            robots=(robot((0, 0)), robot((1, 5))),
            pois=(poi((5, 0), PoiStatus.ASSIGNED, 0), poi((9, 9), PoiStatus.ASSIGNED, 1)),
            step_index=10,
        )

    def test_head_completed_forces_decision(self):
        world = self.world()
        world = make_world(
            robots=world.robots,
            pois=(poi((5, 0), PoiStatus.EXPLORED), world.pois[1]),
            step_index=10,
        )
        actions = [MacroAction((0,), issued_at=9), MacroAction((1,), issued_at=9)]
        assert advance_macro_clock(world, actions, interval=40)

    def test_empty_sequence_forces_decision(self):
        actions = [MacroAction((), issued_at=9), MacroAction((1,), issued_at=9)]
        assert advance_macro_clock(self.world(), actions, interval=40)

    def test_quiet_step_no_decision(self):
        actions = [MacroAction((0,), issued_at=9), MacroAction((1,), issued_at=9)]
        assert not advance_macro_clock(self.world(), actions, interval=40)

    def test_interval_elapsed_forces_decision(self):
        world = make_world(
            robots=(robot((0, 0)), robot((1, 5))),
            pois=(poi((5, 0), PoiStatus.ASSIGNED, 0), poi((9, 9), PoiStatus.ASSIGNED, 1)),
            step_index=40,
        )
        actions = [MacroAction((0,), issued_at=0), MacroAction((1,), issued_at=0)]
        assert advance_macro_clock(world, actions, interval=40)
        world39 = dataclasses.replace(world, step_index=39)
        assert not advance_macro_clock(world39, actions, interval=40)


class TestAssignments:
    def test_assignment_sets_statuses_and_goals(self):
        world = make_world(robots=(robot((0, 0)), robot((5, 5))), pois=(poi((1, 0)), poi((6, 5)), poi((9, 9))))
        updated = apply_assignments(world, [MacroAction((0, 2)), MacroAction((1,))])
        assert updated.pois[0].status is PoiStatus.ASSIGNED and updated.pois[0].assigned_to == 0
        assert updated.pois[1].status is PoiStatus.ASSIGNED and updated.pois[1].assigned_to == 1
        assert updated.pois[2].status is PoiStatus.ASSIGNED and updated.pois[2].assigned_to == 0
        assert updated.robots[0].goal == (1.0, 0.0)
        assert updated.robots[1].goal == (6.0, 5.0)

    def test_reallocation_reverts_dropped_sites(self):
        world = make_world(robots=(robot((0, 0)),), pois=(poi((1, 0), PoiStatus.ASSIGNED, 0), poi((2, 0))))
        updated = apply_assignments(world, [MacroAction((1,))])
        assert updated.pois[0].status is PoiStatus.UNEXPLORED
        assert updated.pois[0].assigned_to is None
        assert updated.pois[1].status is PoiStatus.ASSIGNED

    def test_explored_sites_stay_explored_and_are_skipped(self):
        world = make_world(robots=(robot((0, 0)),), pois=(poi((1, 0), PoiStatus.EXPLORED), poi((2, 0))))
        updated = apply_assignments(world, [MacroAction((0, 1))])
        assert updated.pois[0].status is PoiStatus.EXPLORED
        assert updated.robots[0].goal == (2.0, 0.0)  # head skips the explored site

    def test_empty_itinerary_clears_goal(self):
        world = make_world(robots=(robot((0, 0), goal=(1, 0)),), pois=(poi((1, 0), PoiStatus.EXPLORED),))
        updated = apply_assignments(world, [MacroAction(())])
        assert updated.robots[0].goal is None

    def test_duplicate_claims_rejected(self):
        world = make_world(robots=(robot((0, 0)), robot((5, 5))), pois=(poi((1, 0)),))
        with pytest.raises(ConfigError):
            apply_assignments(world, [MacroAction((0,)), MacroAction((0,))])

    def test_duplicate_within_sequence_rejected(self):
        with pytest.raises(ConfigError):
            MacroAction((1, 1))
