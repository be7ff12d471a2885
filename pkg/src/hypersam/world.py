"""The crowd-simulation world: state, observations, transition, reward.

Robots execute velocity commands between decision timesteps; pedestrians
run reciprocal collision avoidance toward wandering goals and treat the
robots as non-reacting obstacles. Task sites sit on an outer circle and
flip from unexplored to assigned to explored as robots claim and reach
them. Everything is a frozen dataclass: stepping returns a new world, and
all in-episode randomness is drawn from a counter-based generator keyed
by the scenario seed, so a (config, seed, actions) triple fully
determines the trajectory.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import orca
from .config import ScenarioConfig
from .errors import ConfigError, DimensionMismatch, HypersamError, UnknownAgent

# Reward constants (fixed by the reward definition, not tunable config).
TEAM_REWARD = 100.0
ARRIVAL_REWARD = 25.0
FAILURE_PENALTY = -100.0
PROXIMITY_THRESHOLD = 0.45  # meters; comfort distance to pedestrians
PROXIMITY_FLOOR = -5.0
PROGRESS_GAIN = 0.5
TIME_PENALTY_RATE = 0.15  # per second of step duration

_PLACEMENT_ATTEMPTS = 400


class PoiStatus(Enum):
    UNEXPLORED = "unexplored"
    ASSIGNED = "assigned"
    EXPLORED = "explored"


class EventKind(Enum):
    ROBOT_ROBOT_COLLISION = "robot_robot_collision"
    ROBOT_HUMAN_COLLISION = "robot_human_collision"
    ARRIVAL = "arrival"
    TIMEOUT = "timeout"
    ALL_POIS_EXPLORED = "all_pois_explored"


TERMINAL_KINDS = frozenset(
    {
        EventKind.ROBOT_ROBOT_COLLISION,
        EventKind.ROBOT_HUMAN_COLLISION,
        EventKind.TIMEOUT,
        EventKind.ALL_POIS_EXPLORED,
    }
)


@dataclass(frozen=True)
class Event:
    kind: EventKind
    step_index: int
    robot_id: int | None = None
    poi_id: int | None = None


@dataclass(frozen=True)
class AgentState:
    """Kinematic state; the last four fields are private to the agent."""

    position: tuple[float, float]
    velocity: tuple[float, float]
    radius: float
    goal: tuple[float, float] | None
    v_pref: float
    policy_tag: str = "learned"

    def __post_init__(self):
        if self.radius <= 0 or self.v_pref <= 0:
            raise ConfigError("radius and v_pref must be positive")
        if math.hypot(*self.velocity) > self.v_pref + 1e-9:
            raise ConfigError("velocity exceeds preferred speed")

    def distance_to(self, point) -> float:
        return math.hypot(self.position[0] - point[0], self.position[1] - point[1])


@dataclass(frozen=True)
class PoiState:
    position: tuple[float, float]
    status: PoiStatus = PoiStatus.UNEXPLORED
    assigned_to: int | None = None

    def __post_init__(self):
        if (self.status is PoiStatus.ASSIGNED) != (self.assigned_to is not None):
            raise ConfigError("assigned_to must be set exactly when status is ASSIGNED")


@dataclass(frozen=True)
class ObservedState:
    """The public part of an agent's state, as seen by anyone else."""

    px: float
    py: float
    vx: float
    vy: float
    radius: float


@dataclass(frozen=True)
class PoiView:
    position: tuple[float, float]
    status: PoiStatus


@dataclass(frozen=True)
class Observation:
    """One robot's egocentric view plus a bounded frame history."""

    self_state: AgentState
    others: tuple[ObservedState, ...]
    poi_view: tuple[PoiView, ...]
    history: tuple["Observation", ...] = ()


@dataclass(frozen=True)
class MacroAction:
    """Ordered task-site itinerary issued at a decision timestep.

    ``issued_at`` records the simulator step index of that decision so the
    re-decision interval can be measured.
    """

    goal_sequence: tuple[int, ...]
    issued_at: int = 0

    def __post_init__(self):
        if len(set(self.goal_sequence)) != len(self.goal_sequence):
            raise ConfigError("duplicate task ids in one itinerary")

    @property
    def head(self) -> int | None:
        return self.goal_sequence[0] if self.goal_sequence else None


@dataclass(frozen=True)
class LocalAction:
    velocity_command: tuple[float, float]


@dataclass(frozen=True)
class WorldState:
    robots: tuple[AgentState, ...]
    humans: tuple[AgentState, ...]
    pois: tuple[PoiState, ...]
    t: float
    step_index: int
    dt: float
    max_steps: int
    seed: int
    events: tuple[Event, ...] = ()

    @property
    def done(self) -> bool:
        return any(e.kind in TERMINAL_KINDS for e in self.events)

    @property
    def succeeded(self) -> bool:
        return any(e.kind is EventKind.ALL_POIS_EXPLORED for e in self.events)


# -- scenario construction ----------------------------------------------------


def _place_on_circle(rng, radius, own_radius, taken, min_gap_extra, attempts=_PLACEMENT_ATTEMPTS):
    """Rejection-sample a circle point that clears every (pos, radius) in taken."""
    for _ in range(attempts):
        angle = rng.uniform(0.0, 2.0 * np.pi)
        pos = (radius * math.cos(angle), radius * math.sin(angle))
        ok = all(
            math.hypot(pos[0] - p[0], pos[1] - p[1]) > own_radius + r + min_gap_extra
            for p, r in taken
        )
        if ok:
            return pos
    raise ConfigError("could not place agents without overlap; too crowded")


def init_scenario(config: ScenarioConfig, seed: int) -> WorldState:
    """Spawn robots and pedestrians on the inner circle and task sites on the outer one.

    Deterministic for a fixed (config, seed); raises ConfigError when the
    non-overlap constraint cannot be met within bounded retries.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    taken: list[tuple[tuple[float, float], float]] = []

    robots = []
    for _ in range(config.n_robots):
        pos = _place_on_circle(rng, config.spawn_radius, config.robot_radius, taken, 0.1)
        taken.append((pos, config.robot_radius))
        robots.append(
            AgentState(pos, (0.0, 0.0), config.robot_radius, None, config.v_pref, "learned")
        )

    humans = []
    for _ in range(config.n_humans):
        pos = _place_on_circle(rng, config.spawn_radius, config.human_radius, taken, 0.1)
        taken.append((pos, config.human_radius))
        angle = rng.uniform(0.0, 2.0 * np.pi)
        rad = config.spawn_radius * math.sqrt(rng.uniform())
        goal = (rad * math.cos(angle), rad * math.sin(angle))
        v_pref = float(rng.uniform(*config.human_speed_range))
        humans.append(AgentState(pos, (0.0, 0.0), config.human_radius, goal, v_pref, "orca"))

    pois = []
    poi_taken: list[tuple[tuple[float, float], float]] = []
    for _ in range(config.n_pois):
        pos = _place_on_circle(rng, config.poi_radius, 0.25, poi_taken, 0.0)
        poi_taken.append((pos, 0.25))
        pois.append(PoiState(pos))

    return WorldState(
        robots=tuple(robots),
        humans=tuple(humans),
        pois=tuple(pois),
        t=0.0,
        step_index=0,
        dt=config.dt,
        max_steps=config.max_steps,
        seed=int(seed),
    )


# -- observation --------------------------------------------------------------


def observed(agent: AgentState) -> ObservedState:
    return ObservedState(agent.position[0], agent.position[1], agent.velocity[0], agent.velocity[1], agent.radius)


def observe(world: WorldState, robot_id: int) -> Observation:
    """Egocentric view: own full state, everyone else's public state, task board."""
    if not 0 <= robot_id < len(world.robots):
        raise UnknownAgent(f"no robot with id {robot_id}")
    others = tuple(
        observed(agent)
        for i, agent in enumerate(world.robots)
        if i != robot_id
    ) + tuple(observed(h) for h in world.humans)
    poi_view = tuple(PoiView(p.position, p.status) for p in world.pois)
    return Observation(self_state=world.robots[robot_id], others=others, poi_view=poi_view)


class ObservationHistory:
    """Sliding window of the most recent frames for one robot."""

    def __init__(self, window: int):
        self.window = window
        self.frames: list[Observation] = []

    def push(self, obs: Observation) -> Observation:
        self.frames.append(obs)
        if len(self.frames) > self.window:
            self.frames = self.frames[-self.window :]
        return dataclasses.replace(obs, history=tuple(self.frames))

    def replace_last(self, obs: Observation) -> Observation:
        """Swap the newest frame (e.g. after goals were reassigned mid-step)."""
        self.frames[-1] = obs
        return dataclasses.replace(obs, history=tuple(self.frames))


# -- transition ---------------------------------------------------------------


def _clamp_speed(v: tuple[float, float], limit: float) -> tuple[float, float]:
    speed = math.hypot(*v)
    if speed <= limit or speed == 0.0:
        return (float(v[0]), float(v[1]))
    scale = limit / speed
    return (float(v[0] * scale), float(v[1] * scale))


def _step_rng(world: WorldState) -> np.random.Generator:
    # Counter-based stream: step i always sees the same draws for a given seed.
    key = world.seed & 0xFFFFFFFFFFFFFFFF
    return np.random.Generator(np.random.Philox(key=key, counter=[world.step_index + 1, 0, 0, 0]))


def _advance_humans(world: WorldState, config: ScenarioConfig) -> tuple[AgentState, ...]:
    if not world.humans:
        return ()
    rng = _step_rng(world)
    updated = []
    for h, human in enumerate(world.humans):
        neighbors = [x for i, x in enumerate(world.humans) if i != h] + list(world.robots)
        shares = [0.5] * (len(world.humans) - 1) + [1.0] * len(world.robots)
        velocity = orca.orca_velocity(human, neighbors, config.orca, world.dt, responsibility=shares)
        velocity = _clamp_speed(tuple(velocity), human.v_pref)
        position = (
            human.position[0] + velocity[0] * world.dt,
            human.position[1] + velocity[1] * world.dt,
        )
        updated.append(dataclasses.replace(human, position=position, velocity=velocity))
    # Goal wandering happens after motion so arrivals this step trigger a redraw.
    return tuple(orca.resample_human_goal(h, rng, config) for h in updated)


def step_world(world: WorldState, joint_actions, config: ScenarioConfig) -> tuple[WorldState, list[Event]]:
    """Advance one step: integrate robots, move pedestrians, collect events."""
    if world.done:
        raise HypersamError("cannot step a terminal world")
    if len(joint_actions) != len(world.robots):
        raise DimensionMismatch(
            f"{len(joint_actions)} actions for {len(world.robots)} robots"
        )

    robots = []
    for robot, action in zip(world.robots, joint_actions):
        velocity = _clamp_speed(action.velocity_command, robot.v_pref)
        position = (
            robot.position[0] + velocity[0] * world.dt,
            robot.position[1] + velocity[1] * world.dt,
        )
        robots.append(dataclasses.replace(robot, position=position, velocity=velocity))

    humans = _advance_humans(world, config)
    step_index = world.step_index + 1

    events: list[Event] = []
    pois = list(world.pois)
    for j, poi in enumerate(pois):
        if poi.status is not PoiStatus.ASSIGNED:
            continue
        robot = robots[poi.assigned_to]
        if robot.distance_to(poi.position) < robot.radius:
            pois[j] = dataclasses.replace(poi, status=PoiStatus.EXPLORED, assigned_to=None)
            events.append(Event(EventKind.ARRIVAL, step_index, robot_id=poi.assigned_to, poi_id=j))

    new_world = WorldState(
        robots=tuple(robots),
        humans=humans,
        pois=tuple(pois),
        t=step_index * world.dt,
        step_index=step_index,
        dt=world.dt,
        max_steps=world.max_steps,
        seed=world.seed,
        events=world.events,
    )
    events.extend(check_conditions(new_world))
    new_world = dataclasses.replace(new_world, events=world.events + tuple(events))
    return new_world, events


def _robot_in_collision(world: WorldState, robot_id: int) -> bool:
    me = world.robots[robot_id]
    for i, other in enumerate(world.robots):
        if i != robot_id and me.distance_to(other.position) <= me.radius + other.radius:
            return True
    return any(me.distance_to(h.position) <= me.radius + h.radius for h in world.humans)


def check_conditions(world: WorldState) -> list[Event]:
    """Detect collisions, timeout, and completion in the given state."""
    events: list[Event] = []
    step = world.step_index
    robots = world.robots
    if any(
        robots[i].distance_to(robots[j].position) <= robots[i].radius + robots[j].radius
        for i in range(len(robots))
        for j in range(i + 1, len(robots))
    ):
        events.append(Event(EventKind.ROBOT_ROBOT_COLLISION, step))
    if any(
        r.distance_to(h.position) <= r.radius + h.radius for r in robots for h in world.humans
    ):
        events.append(Event(EventKind.ROBOT_HUMAN_COLLISION, step))
    all_explored = all(p.status is PoiStatus.EXPLORED for p in world.pois)
    if step >= world.max_steps and not all_explored:
        events.append(Event(EventKind.TIMEOUT, step))
    if all_explored:
        events.append(Event(EventKind.ALL_POIS_EXPLORED, step))
    return events


# -- reward -------------------------------------------------------------------


def _goal_distance(robot: AgentState) -> float | None:
    return None if robot.goal is None else robot.distance_to(robot.goal)


def nearest_human_gap(world: WorldState, robot_id: int) -> float | None:
    """Smallest surface-to-surface clearance between a robot and any pedestrian.

    Clearance (centers minus both radii) is the quantity proxemics bounds
    apply to; with center distance the comfort band below 0.45 m would sit
    entirely inside the collision region for the default radii.
    """
    robot = world.robots[robot_id]
    if not world.humans:
        return None
    return min(robot.distance_to(h.position) - robot.radius - h.radius for h in world.humans)


def reward_branch(world_before: WorldState, world_after: WorldState, robot_id: int,
                  events) -> tuple[float, str]:
    """Evaluate the piecewise step reward; returns (value, branch name).

    Branches are checked in a fixed order and exactly one fires:
    team success, own arrival, collision, timeout, pedestrian proximity,
    and otherwise progress toward the goal minus a per-step time penalty.
    """
    all_reached = all(
        (d := _goal_distance(r)) is None or d < r.radius for r in world_after.robots
    )
    if all_reached:
        return TEAM_REWARD, "team_success"

    me = world_after.robots[robot_id]
    own = _goal_distance(me)
    if own is not None and own < me.radius:
        return ARRIVAL_REWARD, "arrival"

    if _robot_in_collision(world_after, robot_id):
        return FAILURE_PENALTY, "collision"

    if any(e.kind is EventKind.TIMEOUT for e in events):
        return FAILURE_PENALTY, "timeout"

    gap = nearest_human_gap(world_after, robot_id)
    if gap is not None and gap <= PROXIMITY_THRESHOLD:
        return max(-1.0 / gap, PROXIMITY_FLOOR), "proximity"

    if me.goal is not None:
        before = world_before.robots[robot_id].distance_to(me.goal)
        progress = before - own
    else:
        progress = 0.0
    return PROGRESS_GAIN * progress - TIME_PENALTY_RATE * world_after.dt, "progress"


def compute_reward(world_before: WorldState, world_after: WorldState, robot_id: int, events) -> float:
    value, _ = reward_branch(world_before, world_after, robot_id, events)
    return value


# -- macro-action clock and task bookkeeping ----------------------------------


def advance_macro_clock(world: WorldState, macro_actions, interval: int = 40) -> bool:
    """True when a new decision timestep is due.

    Triggered by any robot finishing (or lacking) the head of its
    itinerary, or by ``interval`` steps elapsing since the last decision.
    """
    if len(macro_actions) != len(world.robots):
        raise DimensionMismatch("one macro action per robot required")
    for ma in macro_actions:
        if ma.head is None:
            return True
        if world.pois[ma.head].status is PoiStatus.EXPLORED:
            return True
    last_issued = max(ma.issued_at for ma in macro_actions)
    return world.step_index - last_issued >= interval


def apply_assignments(world: WorldState, macro_actions) -> WorldState:
    """Write itineraries into the task board and point robots at their heads.

    Explored sites never change; sites claimed by a robot become assigned
    to it; previously assigned sites dropped from every itinerary revert
    to unexplored. Already-explored entries in an itinerary are skipped
    when picking the head goal.
    """
    if len(macro_actions) != len(world.robots):
        raise DimensionMismatch("one macro action per robot required")
    owner: dict[int, int] = {}
    heads: list[int | None] = []
    for rid, ma in enumerate(macro_actions):
        head = None
        for poi_id in ma.goal_sequence:
            if not 0 <= poi_id < len(world.pois):
                raise ConfigError(f"itinerary references unknown task site {poi_id}")
            if world.pois[poi_id].status is PoiStatus.EXPLORED:
                continue
            if poi_id in owner:
                raise ConfigError(f"task site {poi_id} claimed by two robots")
            owner[poi_id] = rid
            if head is None:
                head = poi_id
        heads.append(head)

    pois = []
    for j, poi in enumerate(world.pois):
        if poi.status is PoiStatus.EXPLORED:
            pois.append(poi)
        elif j in owner:
            pois.append(dataclasses.replace(poi, status=PoiStatus.ASSIGNED, assigned_to=owner[j]))
        else:
            pois.append(dataclasses.replace(poi, status=PoiStatus.UNEXPLORED, assigned_to=None))

    robots = tuple(
        dataclasses.replace(robot, goal=None if head is None else world.pois[head].position)
        for robot, head in zip(world.robots, heads)
    )
    return dataclasses.replace(world, robots=robots, pois=tuple(pois))
