"""Shared world-construction helpers for the test suite."""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from hypersam.world import AgentState, PoiState, PoiStatus, WorldState


def robot(pos, goal=None, vel=(0.0, 0.0), radius=0.3, v_pref=1.0):
    return AgentState(tuple(pos), tuple(vel), radius, None if goal is None else tuple(goal), v_pref, "learned")


def human(pos, goal=(0.0, 0.0), vel=(0.0, 0.0), radius=0.3, v_pref=1.0):
    return AgentState(tuple(pos), tuple(vel), radius, tuple(goal), v_pref, "orca")


def poi(pos, status=PoiStatus.UNEXPLORED, assigned_to=None):
    return PoiState(tuple(pos), status, assigned_to)


def make_world(robots=(), humans=(), pois=(), step_index=0, dt=0.25, max_steps=400, seed=0, events=()):
    return WorldState(
        robots=tuple(robots),
        humans=tuple(humans),
        pois=tuple(pois),
        t=step_index * dt,
        step_index=step_index,
        dt=dt,
        max_steps=max_steps,
        seed=seed,
        events=tuple(events),
    )
