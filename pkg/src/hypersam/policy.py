"""Shared policy network: encoders, diffusion, and both actor-critic heads.

One network serves every robot (homogeneous agents). Per decision step a
robot encodes its egocentric observation history into per-entity fused
features, diffuses them over the proximity hypergraph, and scores the
still-unexplored task sites with a dot-product head. Between decisions a
squashed-Gaussian velocity head drives the robot toward its current head
goal. Critics are centralized: they read a flat encoding of the joint
state (which includes every robot's current head-goal offset) and are
used only during training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import hypergraph as hgm
from .config import ScenarioConfig
from .errors import ConfigError
from .nn import tensor as T
from .nn.layers import MLP, Embedding, EncoderLayer, Linear, Module, MultiHeadAttention
from .nn.tensor import Tensor
from .world import Observation, PoiStatus, WorldState

NORM_POS = 25.0
NORM_VEL = 1.5
NORM_LOCAL = 5.0

_STATUS_CODE = {PoiStatus.UNEXPLORED: 1.0, PoiStatus.ASSIGNED: 0.5, PoiStatus.EXPLORED: 0.0}

SELF_DIM = 7
AGENT_DIM = 5
POI_DIM = 3
LOCAL_EXTRA_DIM = 5


def _self_vector(obs: Observation) -> np.ndarray:
    me = obs.self_state
    if me.goal is None:
        grel = (0.0, 0.0)
        has_goal = 0.0
    else:
        grel = (me.goal[0] - me.position[0], me.goal[1] - me.position[1])
        has_goal = 1.0
    return np.array(
        [
            me.velocity[0] / NORM_VEL,
            me.velocity[1] / NORM_VEL,
            me.radius,
            me.v_pref / NORM_VEL,
            grel[0] / NORM_POS,
            grel[1] / NORM_POS,
            has_goal,
        ]
    )


def _agent_rows(obs: Observation) -> np.ndarray:
    me = obs.self_state
    rows = [
        [
            (o.px - me.position[0]) / NORM_POS,
            (o.py - me.position[1]) / NORM_POS,
            o.vx / NORM_VEL,
            o.vy / NORM_VEL,
            o.radius,
        ]
        for o in obs.others
    ]
    return np.array(rows).reshape(len(obs.others), AGENT_DIM)


def _poi_rows(obs: Observation) -> np.ndarray:
    me = obs.self_state
    rows = [
        [
            (v.position[0] - me.position[0]) / NORM_POS,
            (v.position[1] - me.position[1]) / NORM_POS,
            _STATUS_CODE[v.status],
        ]
        for v in obs.poi_view
    ]
    return np.array(rows).reshape(len(obs.poi_view), POI_DIM)


def _local_extras(obs: Observation) -> np.ndarray:
    """Nearest-neighbor summary for the velocity head."""
    me = obs.self_state
    if not obs.others:
        return np.array([0.0, 0.0, 0.0, 0.0, 1.0])
    best, gap = None, np.inf
    for o in obs.others:
        d = math.hypot(o.px - me.position[0], o.py - me.position[1]) - me.radius - o.radius
        if d < gap:
            best, gap = o, d
    return np.array(
        [
            (best.px - me.position[0]) / NORM_LOCAL,
            (best.py - me.position[1]) / NORM_LOCAL,
            best.vx / NORM_VEL,
            best.vy / NORM_VEL,
            min(max(gap, 0.0), NORM_LOCAL) / NORM_LOCAL,
        ]
    )


@dataclass(frozen=True)
class ObsFeatures:
    """Numeric view of one observation (plus history), ready for the encoders."""

    self_now: np.ndarray  # [SELF_DIM]
    agents_now: np.ndarray  # [A, AGENT_DIM]
    pois_now: np.ndarray  # [P, POI_DIM]
    self_hist: np.ndarray  # [W, SELF_DIM]
    agents_hist: np.ndarray  # [A, W, AGENT_DIM]
    positions: np.ndarray  # [N, 2] entity offsets from self, current frame
    local_extras: np.ndarray  # [LOCAL_EXTRA_DIM]

    @property
    def n_entities(self) -> int:
        return 1 + self.agents_now.shape[0] + self.pois_now.shape[0]


def featurize(obs: Observation, window: int) -> ObsFeatures:
    """Turn an observation with history into fixed-shape arrays.

    Short histories are padded by repeating the oldest frame; task-site
    tokens always repeat the current frame since the sites are static.
    """
    frames = list(obs.history) if obs.history else [obs]
    frames = frames[-window:]
    while len(frames) < window:
        frames.insert(0, frames[0])

    me = obs.self_state
    agent_offsets = np.array(
        [[(o.px - me.position[0]), (o.py - me.position[1])] for o in obs.others]
    ).reshape(len(obs.others), 2)
    poi_offsets = np.array(
        [[(v.position[0] - me.position[0]), (v.position[1] - me.position[1])] for v in obs.poi_view]
    ).reshape(len(obs.poi_view), 2)
    positions = np.concatenate([np.zeros((1, 2)), agent_offsets, poi_offsets], axis=0)

    return ObsFeatures(
        self_now=_self_vector(obs),
        agents_now=_agent_rows(obs),
        pois_now=_poi_rows(obs),
        self_hist=np.stack([_self_vector(f) for f in frames]),
        agents_hist=np.stack([_agent_rows(f) for f in frames], axis=1),
        positions=positions,
        local_extras=_local_extras(obs),
    )


def vertex_kinds(n_agents: int, n_pois: int) -> list[hgm.VertexKind]:
    return (
        [hgm.VertexKind.ROBOT]
        + [hgm.VertexKind.HUMAN] * n_agents  # other robots and pedestrians alike are moving bodies
        + [hgm.VertexKind.POI] * n_pois
    )


def joint_features(world: WorldState, robot_id: int, config: ScenarioConfig) -> np.ndarray:
    """Centralized critic input: full joint state, focal robot first.

    Includes each robot's offset to its current head goal, so the value
    function is conditioned on the active itineraries.
    """
    rows: list[float] = []
    order = [robot_id] + [i for i in range(len(world.robots)) if i != robot_id]
    for idx in order:
        r = world.robots[idx]
        if r.goal is None:
            grel, has_goal = (0.0, 0.0), 0.0
        else:
            grel, has_goal = (r.goal[0] - r.position[0], r.goal[1] - r.position[1]), 1.0
        rows += [
            r.position[0] / NORM_POS,
            r.position[1] / NORM_POS,
            r.velocity[0] / NORM_VEL,
            r.velocity[1] / NORM_VEL,
            grel[0] / NORM_POS,
            grel[1] / NORM_POS,
            has_goal,
        ]
    for h in world.humans:
        rows += [
            h.position[0] / NORM_POS,
            h.position[1] / NORM_POS,
            h.velocity[0] / NORM_VEL,
            h.velocity[1] / NORM_VEL,
            (h.goal[0] - h.position[0]) / NORM_POS if h.goal else 0.0,
            (h.goal[1] - h.position[1]) / NORM_POS if h.goal else 0.0,
            h.v_pref / NORM_VEL,
        ]
    for p in world.pois:
        rows += [p.position[0] / NORM_POS, p.position[1] / NORM_POS, _STATUS_CODE[p.status]]
    return np.array(rows)


def joint_dim(config: ScenarioConfig) -> int:
    return 7 * (config.n_robots + config.n_humans) + 3 * config.n_pois


def matched_bypass_hidden(embed_dim: int, diffusion_hidden: int) -> int:
    """Hidden width of the two-layer bypass MLP with ~the diffusion's parameter count."""
    target = 2 * (2 * embed_dim * diffusion_hidden + diffusion_hidden + embed_dim)
    return max(1, round((target - embed_dim) / (2 * embed_dim + 1)))


class PolicyNetwork(Module):
    """Everything learnable: encoders, diffusion operators, actors, critics."""

    def __init__(self, config: ScenarioConfig, rng: np.random.Generator, ablate_diffusion: bool = False):
        model = config.model
        d = model.embed_dim
        heads = model.attention_heads
        gain = config.train.gain
        self.config = config
        self.ablated = ablate_diffusion

        self.embed_self = Linear(rng, SELF_DIM, d)
        self.embed_agent = Linear(rng, AGENT_DIM, d)
        self.embed_poi = Linear(rng, POI_DIM, d)
        self.kind_embedding = Embedding(rng, 3, d)  # self / other body / task site
        self.time_embedding = Embedding(rng, config.history_window, d)
        self.spatial_layers = [EncoderLayer(rng, d, heads) for _ in range(model.encoder_layers)]
        self.temporal_layers = [EncoderLayer(rng, d, heads) for _ in range(model.encoder_layers)]
        self.cross_spatial = MultiHeadAttention(rng, d, heads)
        self.cross_temporal = MultiHeadAttention(rng, d, heads)
        self.fuse = Linear(rng, 2 * d, d)
        self.fusion_layer = EncoderLayer(rng, d, heads)

        if ablate_diffusion:
            hidden = matched_bypass_hidden(d, model.diffusion_hidden)
            self.bypass = MLP(rng, [d, hidden, d])
            self.diffusion_ops = None
        else:
            self.bypass = None
            self.diffusion_ops = hgm.DiffusionOps.learned(
                rng, d, model.diffusion_hidden, power=config.diffusion.power
            )

        self.macro_robot_proj = Linear(rng, d, d, gain=gain)
        self.macro_poi_proj = Linear(rng, d, d, gain=gain)
        local_in = SELF_DIM + LOCAL_EXTRA_DIM + 2 * d
        self.local_mlp = MLP(rng, [local_in, model.mlp_hidden, model.mlp_hidden, 2], out_gain=gain)
        self.log_std = Tensor(np.full(2, math.log(0.5)), requires_grad=True)

        j = joint_dim(config)
        self.macro_critic = MLP(rng, [j, model.mlp_hidden, model.mlp_hidden, 1], out_gain=1.0)
        self.local_critic = MLP(rng, [j, model.mlp_hidden, model.mlp_hidden, 1], out_gain=1.0)

    # -- encoders -------------------------------------------------------------

    def encode(self, feats: list[ObsFeatures]) -> Tensor:
        """Fused per-entity features for a batch of observations: [B, N, d]."""
        if not feats:
            raise ConfigError("encode needs at least one observation")
        window = self.config.history_window
        n_agents = feats[0].agents_now.shape[0]
        n_pois = feats[0].pois_now.shape[0]

        self_now = Tensor(np.stack([f.self_now for f in feats])[:, None, :])
        pois_now = Tensor(np.stack([f.pois_now for f in feats]))
        parts = [self.embed_self(self_now)]
        if n_agents:
            parts.append(self.embed_agent(Tensor(np.stack([f.agents_now for f in feats]))))
        parts.append(self.embed_poi(pois_now))
        kinds = np.array([0] + [1] * n_agents + [2] * n_pois)
        kind_rows = self.kind_embedding(kinds)
        tokens = T.add(T.concatenate(parts, axis=1), kind_rows)

        x_s = tokens
        for layer in self.spatial_layers:
            x_s = layer(x_s)

        self_hist = Tensor(np.stack([f.self_hist for f in feats])[:, None, :, :])
        hist_parts = [self.embed_self(self_hist)]
        if n_agents:
            hist_parts.append(self.embed_agent(Tensor(np.stack([f.agents_hist for f in feats]))))
        poi_hist = np.repeat(np.stack([f.pois_now for f in feats])[:, :, None, :], window, axis=2)
        hist_parts.append(self.embed_poi(Tensor(poi_hist)))
        hist = T.concatenate(hist_parts, axis=1)  # [B, N, W, d]
        n_tokens = 1 + n_agents + n_pois
        kind_cols = T.reshape(kind_rows, (n_tokens, 1, self.config.model.embed_dim))
        hist = T.add(T.add(hist, self.time_embedding(np.arange(window))), kind_cols)
        x_t = hist
        for layer in self.temporal_layers:
            x_t = layer(x_t)
        x_t = x_t[:, :, window - 1, :]  # latest-frame summary per entity

        across = self.cross_spatial(x_s, x_t, x_t)
        along = self.cross_temporal(x_t, x_s, x_s)
        fused = self.fuse(T.concatenate([across, along], axis=-1))
        return self.fusion_layer(fused)

    def encode_one(self, obs: Observation) -> Tensor:
        return self.encode([featurize(obs, self.config.history_window)])[0]

    # -- diffusion ------------------------------------------------------------

    def diffused(self, fused: Tensor, positions: np.ndarray, mode: str | None = None) -> Tensor:
        """Balance fused features over the proximity hypergraph: [N, d].

        ``mode="learned"`` unrolls a fixed number of steps through the
        learnable operators (training); ``mode="pure"`` runs the analytic
        operators to the convergence threshold (evaluation).
        """
        n_pois = self.config.n_pois
        n_agents = positions.shape[0] - 1 - n_pois
        if self.bypass is not None:
            return self.bypass(T.softplus(fused))
        kinds = vertex_kinds(n_agents, n_pois)
        hg = hgm.build_hypergraph(positions, kinds, k=3)
        cfg = self.config.diffusion
        mode = mode or cfg.mode
        if mode == "learned":
            run_cfg = hgm.DiffusionConfig(
                alpha=cfg.alpha, power=cfg.power, tol=cfg.tol,
                max_iters=cfg.max_iters, unroll_iters=cfg.unroll_iters, mode="learned",
            )
            ops = self.diffusion_ops
        else:
            run_cfg = hgm.DiffusionConfig(
                alpha=cfg.alpha, power=cfg.power, tol=cfg.tol,
                max_iters=cfg.max_iters, unroll_iters=cfg.unroll_iters, mode="pure",
            )
            ops = hgm.DiffusionOps.pure(power=cfg.power)
        return hgm.diffuse(T.softplus(fused), hg, run_cfg, ops).features

    # -- heads ----------------------------------------------------------------

    def macro_logits(self, balanced: Tensor, available: np.ndarray) -> Tensor:
        """Scores for the available task sites from diffused features: [len(available)]."""
        d = self.config.model.embed_dim
        robot_row = self.macro_robot_proj(balanced[0])
        poi_rows = self.macro_poi_proj(balanced[np.asarray(available) + (balanced.shape[0] - self.config.n_pois)])
        return T.mul(T.matmul(poi_rows, robot_row), 1.0 / math.sqrt(d))

    def local_gaussian(self, numeric: Tensor, fused_row: Tensor, balanced_row: Tensor) -> tuple[Tensor, Tensor]:
        """Pre-squash mean and log-std of the velocity distribution."""
        inp = T.concatenate([numeric, fused_row, balanced_row], axis=-1)
        return self.local_mlp(inp), self.log_std

    def macro_value(self, joint: Tensor) -> Tensor:
        return self.macro_critic(joint)

    def local_value(self, joint: Tensor) -> Tensor:
        return self.local_critic(joint)


# -- squashed-Gaussian local action -------------------------------------------

_LOG_2PI = math.log(2.0 * math.pi)


def squash_scale(v_pref: float) -> float:
    # tanh of each component, norm bounded by v_pref overall.
    return v_pref / math.sqrt(2.0)


def sample_local_action(mean: np.ndarray, log_std: np.ndarray, v_pref: float, rng) -> tuple[np.ndarray, np.ndarray, float]:
    """Draw (velocity, pre-squash sample, log-density of the velocity)."""
    std = np.exp(log_std)
    z = mean + std * rng.standard_normal(2)
    action = squash_scale(v_pref) * np.tanh(z)
    return action, z, float(squashed_logp_np(z, mean, log_std, v_pref))


def squashed_logp_np(z: np.ndarray, mean: np.ndarray, log_std: np.ndarray, v_pref: float) -> float:
    std = np.exp(log_std)
    base = -0.5 * ((z - mean) / std) ** 2 - log_std - 0.5 * _LOG_2PI
    correction = np.log(squash_scale(v_pref) * (1.0 - np.tanh(z) ** 2) + 1e-300)
    return float(np.sum(base - correction))


def squashed_logp(z: np.ndarray, mean: Tensor, log_std: Tensor, v_pref) -> Tensor:
    """Tensor version over a batch: z [B,2], mean [B,2], v_pref [B] or scalar."""
    z_t = Tensor(z)
    std = T.exp(log_std)
    base = T.sub(
        T.mul(T.power(T.div(T.sub(z_t, mean), std), 2.0), -0.5),
        T.add(log_std, 0.5 * _LOG_2PI),
    )
    scale = np.asarray(v_pref, dtype=np.float64) / math.sqrt(2.0)
    correction = np.log(scale.reshape(-1, 1) * (1.0 - np.tanh(z) ** 2) + 1e-300)
    return T.tensor_sum(T.sub(base, Tensor(correction)), axis=-1)


def gaussian_entropy(log_std: Tensor) -> Tensor:
    """Entropy of the pre-squash Gaussian (standard surrogate for squashed policies)."""
    return T.tensor_sum(T.add(log_std, 0.5 * (_LOG_2PI + 1.0)))
