"""Classical comparators: random-averaged allocation, grid A*, ORCA tracking."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from . import orca
from .config import ScenarioConfig
from .errors import ConfigError, MissingCheckpoint, NoPath
from .world import LocalAction, MacroAction, PoiStatus, WorldState

SQRT2 = math.sqrt(2.0)


# -- random averaged task allocation -------------------------------------------


def rta_allocate(poi_ids, n_robots: int, rng: np.random.Generator) -> list[MacroAction]:
    """Shuffle the sites uniformly and deal them round-robin.

    Per-robot counts differ by at most one; the visiting order is the
    (random) dealing order.
    """
    if n_robots < 1:
        raise ConfigError("need at least one robot to allocate to")
    ids = list(poi_ids)
    order = [ids[i] for i in rng.permutation(len(ids))]
    return [MacroAction(tuple(order[r::n_robots]), issued_at=0) for r in range(n_robots)]


def advance_static_itineraries(world: WorldState, macro_actions) -> list[MacroAction] | None:
    """Drop explored sites from fixed itineraries; None when nothing changed."""
    changed = False
    advanced = []
    for ma in macro_actions:
        kept = tuple(j for j in ma.goal_sequence if world.pois[j].status is not PoiStatus.EXPLORED)
        if kept != ma.goal_sequence:
            changed = True
            advanced.append(MacroAction(kept, issued_at=world.step_index))
        else:
            advanced.append(ma)
    return advanced if changed else None


# -- ORCA as the robot-side local planner ---------------------------------------


def orca_local_action(world: WorldState, robot_id: int, config: ScenarioConfig) -> LocalAction:
    robot = world.robots[robot_id]
    neighbors = [r for i, r in enumerate(world.robots) if i != robot_id] + list(world.humans)
    velocity = orca.orca_velocity(robot, neighbors, config.orca, world.dt)
    return LocalAction((float(velocity[0]), float(velocity[1])))


# -- occupancy grid and A* -------------------------------------------------------


@dataclass
class GridMap:
    resolution: float
    origin: tuple[float, float]  # world coordinates of cell (0, 0)'s center
    occupancy: np.ndarray  # [nx, ny] bool, True = blocked

    def __post_init__(self):
        if self.resolution <= 0:
            raise ConfigError("grid resolution must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return self.occupancy.shape

    def cell_of(self, point) -> tuple[int, int]:
        return (
            int(round((point[0] - self.origin[0]) / self.resolution)),
            int(round((point[1] - self.origin[1]) / self.resolution)),
        )

    def center_of(self, cell) -> np.ndarray:
        return np.array(
            [
                self.origin[0] + cell[0] * self.resolution,
                self.origin[1] + cell[1] * self.resolution,
            ]
        )

    def in_bounds(self, cell) -> bool:
        return 0 <= cell[0] < self.shape[0] and 0 <= cell[1] < self.shape[1]

    def free(self, cell) -> bool:
        return self.in_bounds(cell) and not self.occupancy[cell[0], cell[1]]

    def block_disc(self, center, radius: float):
        """Mark every cell whose center lies within ``radius`` of ``center``."""
        lo = self.cell_of((center[0] - radius, center[1] - radius))
        hi = self.cell_of((center[0] + radius, center[1] + radius))
        for ix in range(max(lo[0], 0), min(hi[0] + 1, self.shape[0])):
            for iy in range(max(lo[1], 0), min(hi[1] + 1, self.shape[1])):
                if np.hypot(*(self.center_of((ix, iy)) - np.asarray(center))) <= radius:
                    self.occupancy[ix, iy] = True

    @classmethod
    def parse(cls, text: str, resolution: float = 1.0, origin=(0.0, 0.0)) -> "GridMap":
        """Plain-text fixture: '.' free, '#' blocked; rows are y, columns x."""
        rows = [line for line in text.strip().splitlines()]
        ny, nx = len(rows), len(rows[0])
        if any(len(r) != nx for r in rows):
            raise ConfigError("ragged grid fixture")
        occupancy = np.zeros((nx, ny), dtype=bool)
        for iy, row in enumerate(rows):
            for ix, ch in enumerate(row):
                if ch == "#":
                    occupancy[ix, iy] = True
                elif ch != ".":
                    raise ConfigError(f"unknown map character {ch!r}")
        return cls(resolution=resolution, origin=origin, occupancy=occupancy)


_ORTHO = ((1, 0), (-1, 0), (0, 1), (0, -1))
_DIAG = ((1, 1), (1, -1), (-1, 1), (-1, -1))


def grid_successors(grid: GridMap, cell):
    """8-connected moves; diagonals require both adjacent orthogonals free."""
    for dx, dy in _ORTHO:
        nxt = (cell[0] + dx, cell[1] + dy)
        if grid.free(nxt):
            yield nxt, 1.0
    for dx, dy in _DIAG:
        nxt = (cell[0] + dx, cell[1] + dy)
        if grid.free(nxt) and grid.free((cell[0] + dx, cell[1])) and grid.free((cell[0], cell[1] + dy)):
            yield nxt, SQRT2


def octile(a, b) -> float:
    dx, dy = abs(a[0] - b[0]), abs(a[1] - b[1])
    return max(dx, dy) + (SQRT2 - 1.0) * min(dx, dy)


def astar_plan(grid: GridMap, start, goal, max_expansions: int = 200_000) -> list[tuple[int, int]]:
    """Octile-optimal 8-connected path; raises NoPath when unreachable."""
    start, goal = tuple(start), tuple(goal)
    if not grid.free(start):
        raise NoPath(f"start cell {start} blocked or out of bounds")
    if not grid.free(goal):
        raise NoPath(f"goal cell {goal} blocked or out of bounds")
    frontier = [(octile(start, goal), 0.0, start)]
    best = {start: 0.0}
    came: dict[tuple[int, int], tuple[int, int]] = {}
    closed: set[tuple[int, int]] = set()
    expansions = 0
    while frontier:
        _, g, cell = heapq.heappop(frontier)
        if cell in closed:
            continue
        if cell == goal:
            path = [cell]
            while cell in came:
                cell = came[cell]
                path.append(cell)
            return path[::-1]
        closed.add(cell)
        expansions += 1
        if expansions > max_expansions:
            raise NoPath("expansion budget exhausted")
        for nxt, cost in grid_successors(grid, cell):
            candidate = g + cost
            if candidate < best.get(nxt, np.inf):
                best[nxt] = candidate
                came[nxt] = cell
                heapq.heappush(frontier, (candidate + octile(nxt, goal), candidate, nxt))
    raise NoPath(f"no route from {start} to {goal}")


def path_cost(path) -> float:
    return sum(
        1.0 if abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1 else SQRT2
        for a, b in zip(path, path[1:])
    )


class AstarLocalPlanner:
    """Replanning grid planner with straight-line waypoint tracking.

    Pedestrians (and the other robots) are frozen into the grid as discs
    inflated by the sum of the involved radii; plans refresh every
    ``replan_every`` steps. A robot that cannot find a path keeps still;
    with ``redeal_stranded`` its leftover sites go to the other robots
    after several blocked replans in a row.
    """

    def __init__(self, config: ScenarioConfig, replan_every: int = 4, lookahead_cells: int = 3,
                 resolution: float = 0.25, redeal_stranded: bool = False, stuck_limit: int = 8):
        self.config = config
        self.replan_every = replan_every
        self.lookahead = lookahead_cells
        self.resolution = resolution
        self.redeal_stranded = redeal_stranded
        self.stuck_limit = stuck_limit
        self.paths: dict[int, list[tuple[int, int]]] = {}
        self.goals: dict[int, tuple[float, float]] = {}
        self.stuck: dict[int, int] = {}

    def _grid(self, world: WorldState, robot_id: int) -> GridMap:
        extent = self.config.poi_radius + 2.0
        cells = int(2 * extent / self.resolution) + 1
        grid = GridMap(self.resolution, (-extent, -extent), np.zeros((cells, cells), dtype=bool))
        me = world.robots[robot_id]
        for h in world.humans:
            grid.block_disc(h.position, me.radius + h.radius)
        for i, other in enumerate(world.robots):
            if i != robot_id:
                grid.block_disc(other.position, me.radius + other.radius)
        return grid

    def _replan(self, world: WorldState, robot_id: int):
        me = world.robots[robot_id]
        grid = self._grid(world, robot_id)
        start = grid.cell_of(me.position)
        if not grid.free(start):
            start = self._nearest_free(grid, start)
        goal = grid.cell_of(me.goal)
        try:
            if start is None:
                raise NoPath("robot enclosed by obstacles")
            self.paths[robot_id] = astar_plan(grid, start, goal)
            self.stuck[robot_id] = 0
        except NoPath:
            self.paths[robot_id] = []
            self.stuck[robot_id] = self.stuck.get(robot_id, 0) + 1
        self.goals[robot_id] = me.goal

    @staticmethod
    def _nearest_free(grid: GridMap, cell, radius: int = 4):
        options = [
            (abs(dx) + abs(dy), (cell[0] + dx, cell[1] + dy))
            for dx in range(-radius, radius + 1)
            for dy in range(-radius, radius + 1)
            if grid.free((cell[0] + dx, cell[1] + dy))
        ]
        return min(options)[1] if options else None

    def local_action(self, world: WorldState, robot_id: int) -> LocalAction:
        me = world.robots[robot_id]
        if me.goal is None:
            return LocalAction((0.0, 0.0))
        due = (
            robot_id not in self.paths
            or self.goals.get(robot_id) != me.goal
            or world.step_index % self.replan_every == 0
        )
        if due:
            self._replan(world, robot_id)
        path = self.paths.get(robot_id, [])
        if not path:
            return LocalAction((0.0, 0.0))
        if me.distance_to(me.goal) <= self.lookahead * self.resolution:
            target = np.asarray(me.goal)
        else:
            grid_extent = self.config.poi_radius + 2.0
            grid = GridMap(self.resolution, (-grid_extent, -grid_extent), np.zeros((1, 1), dtype=bool))
            here = np.asarray(me.position)
            target = None
            for cell in path:
                center = grid.center_of(cell)
                if np.hypot(*(center - here)) >= self.lookahead * self.resolution:
                    target = center
                    break
            if target is None:
                target = grid.center_of(path[-1])
        offset = target - np.asarray(me.position)
        dist = float(np.hypot(*offset))
        if dist < 1e-9:
            return LocalAction((0.0, 0.0))
        speed = min(me.v_pref, dist / world.dt)
        velocity = offset / dist * speed
        return LocalAction((float(velocity[0]), float(velocity[1])))

    def maybe_redeal(self, world: WorldState, macro_actions) -> list[MacroAction] | None:
        if not self.redeal_stranded:
            return None
        stranded = [
            rid
            for rid, ma in enumerate(macro_actions)
            if ma.goal_sequence and self.stuck.get(rid, 0) >= self.stuck_limit
        ]
        if not stranded:
            return None
        out = [list(ma.goal_sequence) for ma in macro_actions]
        orphans = [j for rid in stranded for j in out[rid]]
        for rid in stranded:
            out[rid] = []
            self.stuck[rid] = 0
        receivers = [r for r in range(len(out)) if r not in stranded] or list(range(len(out)))
        for i, j in enumerate(orphans):
            out[receivers[i % len(receivers)]].append(j)
        return [MacroAction(tuple(seq), issued_at=world.step_index) for seq in out]


# -- dispatcher ------------------------------------------------------------------

POLICY_KINDS = ("rta_astar", "rta_orca", "rta_learned_la", "mlp_ablation", "hyper")


def build_pipeline(policy_kind: str, config: ScenarioConfig, policy=None, record: bool = False,
                   diffusion_mode: str = "pure"):
    from .pipelines import LearnedPipeline, RtaAstarPipeline, RtaOrcaPipeline

    kind = policy_kind.lower()
    if kind == "rta_orca":
        return RtaOrcaPipeline(config)
    if kind == "rta_astar":
        return RtaAstarPipeline(config)
    if kind in ("rta_learned_la", "mlp_ablation", "hyper"):
        if policy is None:
            raise MissingCheckpoint(f"policy kind {policy_kind} needs a checkpoint")
        allocator = "rta" if kind == "rta_learned_la" else "learned"
        return LearnedPipeline(policy, config, diffusion_mode=diffusion_mode,
                               allocator=allocator, record=record)
    raise ConfigError(f"unknown policy kind {policy_kind!r}; expected one of {POLICY_KINDS}")


def run_baseline(config: ScenarioConfig, policy_kind: str, seed: int, policy=None,
                 collect_trace: bool = False):
    """One full episode under the named pipeline; returns (report, outcome)."""
    from .episode import run_episode
    from .metrics import build_report

    pipeline = build_pipeline(policy_kind, config, policy=policy)
    outcome = run_episode(config, seed, pipeline, collect_trace=collect_trace)
    return build_report(outcome, config), outcome
