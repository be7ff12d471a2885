"""Concrete decision pipelines: learned policies and classical baselines."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import baselines
from .actions import (
    local_numeric_input,
    select_joint_macro_actions,
    select_local_action,
)
from .config import ScenarioConfig
from .episode import Pipeline
from .errors import ConfigError
from .nn.tensor import Tensor, no_grad
from .policy import ObsFeatures, PolicyNetwork, featurize, joint_features
from .world import MacroAction, PoiStatus, WorldState, advance_macro_clock


@dataclass
class DecisionRecord:
    """Everything needed to recompute one decision under new parameters."""

    step: int
    feats: list[ObsFeatures]
    masks: list[tuple[int, ...]]
    heads: list[int | None]
    logps: np.ndarray
    joints: np.ndarray
    values: np.ndarray


@dataclass
class LocalRecord:
    step: int
    segment: int
    numeric: np.ndarray
    raw_samples: np.ndarray
    logps: np.ndarray
    joints: np.ndarray
    values: np.ndarray
    v_prefs: np.ndarray
    rewards: np.ndarray | None = None


@dataclass
class EpisodeRollout:
    decisions: list[DecisionRecord] = field(default_factory=list)
    locals: list[LocalRecord] = field(default_factory=list)


class LearnedPipeline(Pipeline):
    """Policy-driven pipeline; the task allocator can be the learned head or RTA.

    ``diffusion_mode`` picks fixed unrolling through the learnable
    operators ("learned", used while training) or thresholded analytic
    diffusion ("pure", used for evaluation).
    """

    def __init__(
        self,
        policy: PolicyNetwork,
        config: ScenarioConfig,
        diffusion_mode: str = "pure",
        allocator: str = "learned",
        record: bool = False,
    ):
        if allocator not in ("learned", "rta"):
            raise ConfigError(f"unknown allocator {allocator!r}")
        self.policy = policy
        self.config = config
        self.diffusion_mode = diffusion_mode
        self.allocator = allocator
        self.rollout = EpisodeRollout() if record else None
        self.fused_rows: np.ndarray | None = None
        self.balanced_rows: np.ndarray | None = None
        self.segment = -1
        self._rta_rng: np.random.Generator | None = None

    # -- features ---------------------------------------------------------

    def _refresh_features(self, observations) -> tuple[list[ObsFeatures], list[Tensor]]:
        feats = [featurize(o, self.config.history_window) for o in observations]
        with no_grad():
            fused = self.policy.encode(feats)
            balanced = [
                self.policy.diffused(fused[i], feats[i].positions, mode=self.diffusion_mode)
                for i in range(len(feats))
            ]
        self.fused_rows = np.stack([fused.data[i, 0] for i in range(len(feats))])
        self.balanced_rows = np.stack([b.data[0] for b in balanced])
        return feats, balanced

    def _critic_values(self, world: WorldState, head) -> tuple[np.ndarray, np.ndarray]:
        joints = np.stack([joint_features(world, i, self.config) for i in range(len(world.robots))])
        with no_grad():
            values = head(Tensor(joints)).data[:, 0]
        return joints, values

    # -- macro ------------------------------------------------------------

    def _decide(self, world: WorldState, observations, rng) -> list[MacroAction]:
        feats, balanced = self._refresh_features(observations)
        self.segment += 1
        if self.allocator == "rta":
            unexplored = [j for j, p in enumerate(world.pois) if p.status is not PoiStatus.EXPLORED]
            selections = None
            actions = baselines.rta_allocate(unexplored, len(world.robots), self._rta_rng)
            actions = [
                MacroAction(a.goal_sequence, issued_at=world.step_index) for a in actions
            ]
        else:
            picks = select_joint_macro_actions(self.policy, balanced, world, rng, world.step_index)
            selections = picks
            actions = [p.action for p in picks]
        if self.rollout is not None:
            joints, values = self._critic_values(world, self.policy.macro_value)
            if selections is None:
                masks = [()] * len(actions)
                heads = [None] * len(actions)
                logps = np.zeros(len(actions))
            else:
                masks = [p.mask for p in selections]
                heads = [p.head for p in selections]
                logps = np.array([p.logp for p in selections])
            self.rollout.decisions.append(
                DecisionRecord(world.step_index, feats, masks, heads, logps, joints, values)
            )
        return actions

    def reset(self, world, observations, rng):
        if self.allocator == "rta":
            self._rta_rng = np.random.default_rng([world.seed & 0x7FFFFFFF, 0x47A])
        return self._decide(world, observations, rng)

    def maybe_redecide(self, world, observations, rng, macro_actions):
        if self.allocator == "rta":
            advanced = baselines.advance_static_itineraries(world, macro_actions)
            if advanced is None:
                return None
            # Keep the feature snapshot aligned with the new heads.
            feats, _ = self._refresh_features(observations)
            self.segment += 1
            if self.rollout is not None:
                joints, values = self._critic_values(world, self.policy.macro_value)
                self.rollout.decisions.append(
                    DecisionRecord(
                        world.step_index,
                        feats,
                        [()] * len(advanced),
                        [None] * len(advanced),
                        np.zeros(len(advanced)),
                        joints,
                        values,
                    )
                )
            return advanced
        if not advance_macro_clock(world, macro_actions, interval=self.config.macro_interval):
            return None
        return self._decide(world, observations, rng)

    # -- local ------------------------------------------------------------

    def local_actions(self, world, observations, rng):
        feats = [featurize(o, self.config.history_window) for o in observations]
        selections = [
            select_local_action(
                self.policy,
                feats[i],
                self.fused_rows[i],
                self.balanced_rows[i],
                world.robots[i].v_pref,
                rng,
            )
            for i in range(len(world.robots))
        ]
        if self.rollout is not None:
            joints, values = self._critic_values(world, self.policy.local_value)
            self.rollout.locals.append(
                LocalRecord(
                    step=world.step_index,
                    segment=self.segment,
                    numeric=np.stack([local_numeric_input(f) for f in feats]),
                    raw_samples=np.stack([s.raw_sample for s in selections]),
                    logps=np.array([s.logp for s in selections]),
                    joints=joints,
                    values=values,
                    v_prefs=np.array([r.v_pref for r in world.robots]),
                )
            )
        return [s.action for s in selections]

    def post_step(self, world_after, events, rewards):
        if self.rollout is not None:
            self.rollout.locals[-1].rewards = np.asarray(rewards, dtype=np.float64)


class RtaOrcaPipeline(Pipeline):
    """Random allocation once at start; reciprocal collision avoidance locally."""

    def __init__(self, config: ScenarioConfig):
        self.config = config

    def reset(self, world, observations, rng):
        alloc_rng = np.random.default_rng([world.seed & 0x7FFFFFFF, 0x47A])
        unexplored = list(range(len(world.pois)))
        return baselines.rta_allocate(unexplored, len(world.robots), alloc_rng)

    def maybe_redecide(self, world, observations, rng, macro_actions):
        return baselines.advance_static_itineraries(world, macro_actions)

    def local_actions(self, world, observations, rng):
        return [baselines.orca_local_action(world, i, self.config) for i in range(len(world.robots))]


class RtaAstarPipeline(Pipeline):
    """Random allocation plus grid planning against frozen pedestrian discs."""

    def __init__(self, config: ScenarioConfig, redeal_stranded: bool = False):
        self.config = config
        self.planner = baselines.AstarLocalPlanner(config, redeal_stranded=redeal_stranded)

    def reset(self, world, observations, rng):
        alloc_rng = np.random.default_rng([world.seed & 0x7FFFFFFF, 0x47A])
        unexplored = list(range(len(world.pois)))
        return baselines.rta_allocate(unexplored, len(world.robots), alloc_rng)

    def maybe_redecide(self, world, observations, rng, macro_actions):
        redealt = self.planner.maybe_redeal(world, macro_actions)
        if redealt is not None:
            return redealt
        return baselines.advance_static_itineraries(world, macro_actions)

    def local_actions(self, world, observations, rng):
        return [self.planner.local_action(world, i) for i in range(len(world.robots))]
