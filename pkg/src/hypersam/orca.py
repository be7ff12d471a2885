"""Optimal reciprocal collision avoidance in velocity space.

Each neighbor induces a half-plane of permitted velocities; the returned
velocity is the one closest to the preferred velocity inside the
intersection (sequential 2D linear program), falling back to the
least-violating velocity via the 3D-lifted program when the intersection
is empty. Agents are duck-typed: anything with position, velocity,
radius, goal, and v_pref attributes works.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

_EPS = 1e-10


@dataclass(frozen=True)
class OrcaParams:
    time_horizon: float = 5.0
    time_horizon_static: float = 5.0
    neighbor_dist: float = 10.0
    max_neighbors: int = 10

    def validate(self):
        if min(self.time_horizon, self.time_horizon_static, self.neighbor_dist) <= 0:
            raise ConfigError("ORCA horizons and neighbor distance must be positive")
        if self.max_neighbors < 1:
            raise ConfigError("ORCA max_neighbors must be >= 1")
        return self


@dataclass(frozen=True)
class HalfPlane:
    """Permitted velocities satisfy (v - point) . normal >= 0."""

    point: np.ndarray
    normal: np.ndarray

    @property
    def direction(self) -> np.ndarray:
        # Boundary line direction; the permitted side lies to its left.
        return np.array([self.normal[1], -self.normal[0]])


def _det(a: np.ndarray, b: np.ndarray) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _norm(v: np.ndarray) -> float:
    return float(np.hypot(v[0], v[1]))


def preferred_velocity(agent, dt: float) -> np.ndarray:
    """Straight toward the goal at v_pref, slowing down to stop on it."""
    if agent.goal is None:
        return np.zeros(2)
    offset = np.asarray(agent.goal, dtype=np.float64) - np.asarray(agent.position, dtype=np.float64)
    distance = _norm(offset)
    if distance < _EPS:
        return np.zeros(2)
    speed = min(agent.v_pref, distance / dt)
    return offset / distance * speed


def induced_half_plane(agent, other, time_horizon: float, dt: float, responsibility: float) -> HalfPlane:
    """ORCA constraint that ``agent`` takes against ``other``.

    ``responsibility`` is the share of the needed relative-velocity change
    this agent absorbs: 0.5 for reciprocating peers, 1.0 when the other
    agent is assumed not to react.
    """
    rel_pos = np.asarray(other.position, dtype=np.float64) - np.asarray(agent.position, dtype=np.float64)
    rel_vel = np.asarray(agent.velocity, dtype=np.float64) - np.asarray(other.velocity, dtype=np.float64)
    dist_sq = float(rel_pos @ rel_pos)
    combined = float(agent.radius + other.radius)
    combined_sq = combined * combined

    if dist_sq > combined_sq:
        inv_horizon = 1.0 / time_horizon
        w = rel_vel - inv_horizon * rel_pos
        w_len_sq = float(w @ w)
        dot1 = float(w @ rel_pos)
        if dot1 < 0.0 and dot1 * dot1 > combined_sq * w_len_sq:
            # Closest point lies on the truncation arc of the cone.
            w_len = np.sqrt(w_len_sq)
            unit_w = w / w_len
            direction = np.array([unit_w[1], -unit_w[0]])
            u = (combined * inv_horizon - w_len) * unit_w
        else:
            # Closest point lies on one of the cone legs.
            leg = np.sqrt(dist_sq - combined_sq)
            if _det(rel_pos, w) > 0.0:
                direction = np.array([rel_pos[0] * leg - rel_pos[1] * combined,
                                      rel_pos[0] * combined + rel_pos[1] * leg]) / dist_sq
            else:
                direction = -np.array([rel_pos[0] * leg + rel_pos[1] * combined,
                                       -rel_pos[0] * combined + rel_pos[1] * leg]) / dist_sq
            u = float(rel_vel @ direction) * direction - rel_vel
    else:
        # Already interpenetrating: resolve within one time step.
        inv_step = 1.0 / dt
        w = rel_vel - inv_step * rel_pos
        w_len = _norm(w)
        unit_w = w / w_len if w_len > _EPS else np.array([1.0, 0.0])
        direction = np.array([unit_w[1], -unit_w[0]])
        u = (combined * inv_step - w_len) * unit_w

    point = np.asarray(agent.velocity, dtype=np.float64) + responsibility * u
    normal = np.array([-direction[1], direction[0]])
    return HalfPlane(point=point, normal=normal)


def _lp1(lines: list[HalfPlane], line_no: int, radius: float, opt_vel: np.ndarray,
         direction_opt: bool, result: np.ndarray):
    """Optimize along the boundary of constraint ``line_no``; None if infeasible."""
    line = lines[line_no]
    direction = line.direction
    dot = float(line.point @ direction)
    discriminant = dot * dot + radius * radius - float(line.point @ line.point)
    if discriminant < 0.0:
        return None
    sqrt_disc = np.sqrt(discriminant)
    t_left, t_right = -dot - sqrt_disc, -dot + sqrt_disc

    for i in range(line_no):
        other_dir = lines[i].direction
        denominator = _det(direction, other_dir)
        numerator = _det(other_dir, line.point - lines[i].point)
        if abs(denominator) <= _EPS:
            if numerator < 0.0:
                return None
            continue
        t = numerator / denominator
        if denominator >= 0.0:
            t_right = min(t_right, t)
        else:
            t_left = max(t_left, t)
        if t_left > t_right:
            return None

    if direction_opt:
        t = t_right if float(opt_vel @ direction) > 0.0 else t_left
    else:
        t = float(direction @ (opt_vel - line.point))
        t = min(max(t, t_left), t_right)
    return line.point + t * direction


def _lp2(lines: list[HalfPlane], radius: float, opt_vel: np.ndarray, direction_opt: bool):
    """Sequential 2D LP; returns (first failing index or len(lines), velocity)."""
    if direction_opt:
        result = opt_vel * radius
    elif float(opt_vel @ opt_vel) > radius * radius:
        result = opt_vel / _norm(opt_vel) * radius
    else:
        result = opt_vel.copy()

    for i, line in enumerate(lines):
        if _det(line.direction, line.point - result) > 0.0:
            new_result = _lp1(lines, i, radius, opt_vel, direction_opt, result)
            if new_result is None:
                return i, result
            result = new_result
    return len(lines), result


def _lp3(lines: list[HalfPlane], begin: int, radius: float, result: np.ndarray) -> np.ndarray:
    """Minimize the worst violation when the 2D program is infeasible."""
    distance = 0.0
    for i in range(begin, len(lines)):
        line = lines[i]
        if _det(line.direction, line.point - result) > distance:
            projected: list[HalfPlane] = []
            for j in range(i):
                other = lines[j]
                denominator = _det(line.direction, other.direction)
                if abs(denominator) <= _EPS:
                    if float(line.direction @ other.direction) > 0.0:
                        continue  # parallel, same direction: redundant
                    point = 0.5 * (line.point + other.point)
                else:
                    shift = _det(other.direction, line.point - other.point) / denominator
                    point = line.point + shift * line.direction
                diff = other.direction - line.direction
                direction = diff / _norm(diff)
                projected.append(HalfPlane(point=point, normal=np.array([-direction[1], direction[0]])))
            opt_dir = np.array([-line.direction[1], line.direction[0]])
            fail, candidate = _lp2(projected, radius, opt_dir, True)
            if fail >= len(projected):
                result = candidate
            distance = _det(line.direction, line.point - result)
    return result


def orca_velocity(agent, neighbors, params: OrcaParams, dt: float,
                  responsibility=0.5, pref_velocity: np.ndarray | None = None) -> np.ndarray:
    """Collision-free velocity closest to the preferred one.

    ``responsibility`` may be a scalar applied to every neighbor or a
    sequence aligned with ``neighbors``. The result never exceeds the
    agent's preferred speed.
    """
    if dt <= 0:
        raise ConfigError("dt must be positive")
    if pref_velocity is None:
        pref_velocity = preferred_velocity(agent, dt)

    position = np.asarray(agent.position, dtype=np.float64)
    scored = []
    for idx, other in enumerate(neighbors):
        gap = np.asarray(other.position, dtype=np.float64) - position
        d2 = float(gap @ gap)
        if d2 < params.neighbor_dist**2:
            scored.append((d2, idx, other))
    scored.sort(key=lambda item: (item[0], item[1]))
    scored = scored[: params.max_neighbors]

    shares = responsibility if not np.isscalar(responsibility) else None
    lines = [
        induced_half_plane(agent, other, params.time_horizon, dt,
                           float(shares[idx]) if shares is not None else float(responsibility))
        for _, idx, other in scored
    ]

    fail, velocity = _lp2(lines, agent.v_pref, pref_velocity, False)
    if fail < len(lines):
        velocity = _lp3(lines, fail, agent.v_pref, velocity)
    speed = _norm(velocity)
    if speed > agent.v_pref:
        velocity = velocity / speed * agent.v_pref
    return velocity


def resample_human_goal(human, rng: np.random.Generator, config):
    """Redraw a pedestrian's goal and preferred speed.

    Triggered with probability ``config.goal_resample_prob`` per step and
    always on goal arrival. New goals land on the activity disc at least
    1 m away from the current position; the preferred speed is uniform in
    ``config.human_speed_range``.
    """
    position = np.asarray(human.position, dtype=np.float64)
    at_goal = human.goal is not None and _norm(np.asarray(human.goal) - position) < human.radius
    if not at_goal and rng.random() >= config.goal_resample_prob:
        return human
    while True:
        angle = rng.uniform(0.0, 2.0 * np.pi)
        rad = config.spawn_radius * np.sqrt(rng.uniform())
        goal = np.array([rad * np.cos(angle), rad * np.sin(angle)])
        if _norm(goal - position) > 1.0:
            break
    v_pref = float(rng.uniform(*config.human_speed_range))
    velocity = np.asarray(human.velocity, dtype=np.float64)
    speed = _norm(velocity)
    if speed > v_pref:  # keep the speed invariant when v_pref shrinks
        velocity = velocity / speed * v_pref
    return dataclasses.replace(
        human,
        goal=(float(goal[0]), float(goal[1])),
        v_pref=v_pref,
        velocity=(float(velocity[0]), float(velocity[1])),
    )
