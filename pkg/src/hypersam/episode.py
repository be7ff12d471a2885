"""Episode execution shared by training, evaluation, baselines, and replay.

A pipeline supplies macro itineraries and per-step velocity commands; the
driver owns the simulation loop, the observation histories, assignment
bookkeeping, reward accounting, and optional trace rows. Keeping one
driver for every pipeline kind means a stored (config, seed, policy)
triple always replays to the same trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import ScenarioConfig
from .nn.tensor import no_grad
from .world import (
    EventKind,
    MacroAction,
    Observation,
    ObservationHistory,
    PoiStatus,
    WorldState,
    advance_macro_clock,
    apply_assignments,
    check_conditions,
    compute_reward,
    init_scenario,
    nearest_human_gap,
    observe,
    step_world,
)

PROXIMITY_THRESHOLD = 0.45


class Pipeline:
    """Decision-making plugged into the episode driver."""

    def reset(self, world: WorldState, observations, rng) -> list[MacroAction]:
        raise NotImplementedError

    def maybe_redecide(self, world, observations, rng, macro_actions) -> list[MacroAction] | None:
        raise NotImplementedError

    def local_actions(self, world, observations, rng):
        raise NotImplementedError

    def post_step(self, world_after, events, rewards):
        pass


@dataclass
class EpisodeOutcome:
    """Raw per-episode record consumed by metrics and trace export."""

    seed: int
    steps: int
    completion_time: float
    success: bool
    collision: bool
    timeout: bool
    discomfort_steps: int
    explored_pois: int
    total_pois: int
    path_lengths: np.ndarray
    total_rewards: np.ndarray
    reward_series: list[np.ndarray]
    final_world: WorldState
    decision_steps: list[int]
    trace_rows: list[dict] | None = None


def _trace_row(world: WorldState, events, rewards) -> dict:
    return {
        "step": world.step_index,
        "t": world.t,
        "robots": [[*r.position, *r.velocity] for r in world.robots],
        "humans": [[*h.position, *h.velocity] for h in world.humans],
        "poi_status": [p.status.value for p in world.pois],
        "events": [
            {"kind": e.kind.value, "robot": e.robot_id, "poi": e.poi_id} for e in events
        ],
        "rewards": list(map(float, rewards)),
    }


def run_episode(
    config: ScenarioConfig,
    seed: int,
    pipeline: Pipeline,
    collect_trace: bool = False,
) -> EpisodeOutcome:
    world = init_scenario(config, seed)
    n = len(world.robots)
    rng = np.random.default_rng([int(seed) & 0x7FFFFFFF, 0xE19])
    histories = [ObservationHistory(config.history_window) for _ in range(n)]

    observations = [histories[i].push(observe(world, i)) for i in range(n)]
    macro_actions = pipeline.reset(world, observations, rng)
    world = apply_assignments(world, macro_actions)
    observations = [histories[i].replace_last(observe(world, i)) for i in range(n)]
    decision_steps = [0]

    path_lengths = np.zeros(n)
    total_rewards = np.zeros(n)
    reward_series: list[np.ndarray] = []
    discomfort = 0
    trace_rows = [_trace_row(world, [], np.zeros(n))] if collect_trace else None

    while not world.done:
        actions = pipeline.local_actions(world, observations, rng)
        before = world
        world, events = step_world(world, actions, config)
        rewards = np.array([compute_reward(before, world, i, events) for i in range(n)])
        pipeline.post_step(world, events, rewards)

        for i in range(n):
            path_lengths[i] += math.dist(before.robots[i].position, world.robots[i].position)
        if any(
            (gap := nearest_human_gap(world, i)) is not None and gap <= PROXIMITY_THRESHOLD
            for i in range(n)
        ):
            discomfort += 1
        total_rewards += rewards
        reward_series.append(rewards)
        if collect_trace:
            trace_rows.append(_trace_row(world, events, rewards))

        observations = [histories[i].push(observe(world, i)) for i in range(n)]
        if world.done:
            break
        decision = pipeline.maybe_redecide(world, observations, rng, macro_actions)
        if decision is not None:
            macro_actions = decision
            world = apply_assignments(world, macro_actions)
            observations = [histories[i].replace_last(observe(world, i)) for i in range(n)]
            decision_steps.append(world.step_index)

    explored = sum(p.status is PoiStatus.EXPLORED for p in world.pois)
    return EpisodeOutcome(
        seed=int(seed),
        steps=world.step_index,
        completion_time=world.t,
        success=world.succeeded,
        collision=any(
            e.kind in (EventKind.ROBOT_ROBOT_COLLISION, EventKind.ROBOT_HUMAN_COLLISION)
            for e in world.events
        ),
        timeout=any(e.kind is EventKind.TIMEOUT for e in world.events),
        discomfort_steps=discomfort,
        explored_pois=explored,
        total_pois=len(world.pois),
        path_lengths=path_lengths,
        total_rewards=total_rewards,
        reward_series=reward_series,
        final_world=world,
        decision_steps=decision_steps,
        trace_rows=trace_rows,
    )
