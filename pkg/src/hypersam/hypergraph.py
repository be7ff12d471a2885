"""Proximity hypergraphs and nonlinear feature diffusion over them.

A hypergraph groups each vertex with its spatial nearest neighbors into a
hyperedge; diffusion then iterates a normalized convex combination of a
propagated feature matrix and the (normalized) input features until the
relative change falls below tolerance. The propagation operators can run
in an analytic "pure" form or with learnable residual MLPs spliced into
the edge and vertex transforms; with those MLPs at their identity
initialization both forms coincide exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError, NumericalError, ShapeError, ZeroFeatures
from .nn import tensor as T
from .nn.layers import ResidualMLP
from .nn.tensor import Tensor, as_tensor


class VertexKind(Enum):
    ROBOT = 0
    HUMAN = 1
    POI = 2


@dataclass(frozen=True)
class Hypergraph:
    """Incidence structure plus the degree vectors derived from it.

    incidence[v, e] is 1.0 when vertex v belongs to hyperedge e.
    vertex_degrees[v] = sum_e weights[e] * incidence[v, e]
    edge_degrees[e]   = sum_v incidence[v, e]
    """

    incidence: np.ndarray
    weights: np.ndarray
    vertex_degrees: np.ndarray
    edge_degrees: np.ndarray
    vertex_kinds: tuple[VertexKind, ...]
    members: tuple[tuple[int, ...], ...]

    @property
    def n_vertices(self) -> int:
        return self.incidence.shape[0]

    @property
    def n_edges(self) -> int:
        return self.incidence.shape[1]

    @classmethod
    def from_members(cls, members, weights, kinds=None, n_vertices=None) -> "Hypergraph":
        """Build directly from membership lists (test fixtures, serialization)."""
        members = tuple(tuple(int(v) for v in e) for e in members)
        weights = np.asarray(weights, dtype=np.float64)
        if len(members) != weights.size:
            raise ShapeError("one weight per hyperedge required")
        if n_vertices is None:
            n_vertices = 1 + max(v for e in members for v in e)
        incidence = np.zeros((n_vertices, len(members)))
        for j, edge in enumerate(members):
            incidence[list(edge), j] = 1.0
        if kinds is None:
            kinds = tuple(VertexKind.ROBOT for _ in range(n_vertices))
        return cls(
            incidence=incidence,
            weights=weights,
            vertex_degrees=(incidence * weights).sum(axis=1),
            edge_degrees=incidence.sum(axis=0),
            vertex_kinds=tuple(kinds),
            members=members,
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "vertices": [k.name for k in self.vertex_kinds],
                "edges": [list(e) for e in self.members],
                "weights": self.weights.tolist(),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "Hypergraph":
        blob = json.loads(text)
        kinds = tuple(VertexKind[name] for name in blob["vertices"])
        return cls.from_members(blob["edges"], blob["weights"], kinds=kinds, n_vertices=len(kinds))


def _spread_coincident(positions: np.ndarray) -> np.ndarray:
    """Nudge exactly coincident points apart deterministically (1e-6 m scale)."""
    out = positions.copy()
    seen: dict[tuple[float, float], int] = {}
    for i, p in enumerate(positions):
        key = (float(p[0]), float(p[1]))
        count = seen.get(key, 0)
        if count:
            angle = 2.0 * np.pi * (count % 8) / 8.0
            out[i] = out[i] + 1e-6 * count * np.array([np.cos(angle), np.sin(angle)])
        seen[key] = count + 1
    return out


def build_hypergraph(positions, kinds, features=None, k: int = 3, similarity_scale: float = 5.0) -> Hypergraph:
    """Group each vertex with its k nearest neighbors into a hyperedge.

    Duplicate vertex sets are merged. Each hyperedge weight is the mean
    Gaussian distance similarity exp(-d^2 / (2 s^2)) over its member pairs.
    """
    positions = np.asarray(positions, dtype=np.float64)
    n = positions.shape[0]
    if n < 2:
        raise ConfigError("hypergraph needs at least 2 vertices")
    if k < 1:
        raise ConfigError("neighbor count k must be >= 1")
    if features is not None and np.asarray(features).shape[0] != n:
        raise ShapeError("feature row count must match vertex count")
    positions = _spread_coincident(positions)
    k = min(k, n - 1)

    deltas = positions[:, None, :] - positions[None, :, :]
    dist = np.sqrt((deltas**2).sum(axis=-1))
    order = np.argsort(dist, axis=1, kind="stable")

    members: list[tuple[int, ...]] = []
    seen: set[frozenset] = set()
    for v in range(n):
        neighbors = [j for j in order[v] if j != v][:k]
        edge = frozenset([v, *neighbors])
        if edge not in seen:
            seen.add(edge)
            members.append(tuple(sorted(edge)))

    weights = np.empty(len(members))
    for j, edge in enumerate(members):
        sims = [
            np.exp(-(dist[a, b] ** 2) / (2.0 * similarity_scale**2))
            for ai, a in enumerate(edge)
            for b in edge[ai + 1 :]
        ]
        weights[j] = float(np.mean(sims))

    return Hypergraph.from_members(members, weights, kinds=tuple(kinds), n_vertices=n)


# -- diffusion ---------------------------------------------------------------


@dataclass
class DiffusionConfig:
    """Knobs for the iterative feature diffusion."""

    alpha: float = 0.9
    power: float = 2.0
    tol: float = 1e-4
    max_iters: int = 200
    unroll_iters: int = 8
    mode: str = "pure"  # "pure" (thresholded) or "learned" (fixed unroll)

    def validate(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")
        if self.power <= 0:
            raise ConfigError("power must be positive")
        if self.tol <= 0:
            raise ConfigError("tolerance must be positive")
        if self.max_iters < 1 or self.unroll_iters < 1:
            raise ConfigError("iteration counts must be >= 1")
        if self.mode not in ("pure", "learned"):
            raise ConfigError(f"unknown diffusion mode {self.mode!r}")
        return self


@dataclass
class DiffusionOps:
    """Nonlinear operators used by the propagation map.

    The power stage is |x|**p (sign discarded); the edge and vertex
    transforms are identity when the residual MLPs are absent (pure mode).
    """

    power: float = 2.0
    edge_transform: ResidualMLP | None = None
    vertex_transform: ResidualMLP | None = None

    @classmethod
    def pure(cls, power: float = 2.0) -> "DiffusionOps":
        return cls(power=power)

    @classmethod
    def learned(cls, rng, dim: int, hidden: int, power: float = 2.0) -> "DiffusionOps":
        return cls(
            power=power,
            edge_transform=ResidualMLP(rng, dim, hidden),
            vertex_transform=ResidualMLP(rng, dim, hidden),
        )


def _scale_rows(x: Tensor, scale: np.ndarray) -> Tensor:
    return T.mul(x, scale[:, None])


def edge_means(features, hg: Hypergraph, ops: DiffusionOps) -> Tensor:
    """Per-hyperedge aggregated feature: the degree-normalized p-power mean."""
    g = as_tensor(features)
    if g.shape[0] != hg.n_vertices:
        raise ShapeError("feature rows must match vertex count")
    powered = T.power(T.absolute(_scale_rows(g, hg.vertex_degrees**-0.5)), ops.power)
    pooled = T.matmul(Tensor(hg.incidence.T), powered)
    base = T.power(_scale_rows(pooled, 1.0 / hg.edge_degrees), 1.0 / ops.power)
    return ops.edge_transform(base) if ops.edge_transform is not None else base


def aggregation_norm(features, hg: Hypergraph, ops: DiffusionOps) -> Tensor:
    """Scalar normalizer: twice the weighted rms of hyperedge aggregates."""
    mu = edge_means(features, hg, ops)
    total = T.tensor_sum(T.mul(T.tensor_sum(T.power(mu, 2.0), axis=1), Tensor(hg.weights)))
    value = T.mul(T.sqrt(total), 2.0)
    if value.data == 0.0:
        raise ZeroFeatures("aggregation norm is zero; features degenerate")
    return value


def feature_variance(features, hg: Hypergraph, ops: DiffusionOps) -> Tensor:
    """Weighted spread of member features around their hyperedge aggregate."""
    g = as_tensor(features)
    mu = edge_means(g, hg, ops)
    scaled = _scale_rows(g, hg.vertex_degrees**-0.5)
    total = Tensor(0.0)
    for j, edge in enumerate(hg.members):
        diff = T.sub(scaled[np.array(edge)], mu[j])
        total = T.add(total, T.mul(T.tensor_sum(T.power(diff, 2.0)), float(hg.weights[j])))
    return total


def diffusion_objective(features, anchor, hg: Hypergraph, alpha: float, ops: DiffusionOps) -> Tensor:
    """Distance-to-anchor plus weighted variance; monitoring only."""
    if alpha >= 1.0:
        raise ConfigError("objective requires alpha < 1")
    g = as_tensor(features)
    e = as_tensor(anchor)
    target = T.div(e, aggregation_norm(e, hg, ops))
    fit = T.tensor_sum(T.power(T.sub(g, target), 2.0))
    return T.add(fit, T.mul(feature_variance(g, hg, ops), alpha / (1.0 - alpha)))


def propagate(features, hg: Hypergraph, ops: DiffusionOps) -> Tensor:
    """One application of the nonlinear propagation map (edge pool + push back)."""
    mu = edge_means(features, hg, ops)
    pushed = T.matmul(Tensor(hg.incidence * hg.weights), mu)
    base = _scale_rows(pushed, hg.vertex_degrees**-0.5)
    out = ops.vertex_transform(base) if ops.vertex_transform is not None else base
    if not np.isfinite(out.data).all():
        raise NumericalError("propagation produced non-finite values")
    return out


def diffusion_step(features, anchor, hg: Hypergraph, config: DiffusionConfig, ops: DiffusionOps) -> Tensor:
    """Normalized convex combination of propagated features and the anchor."""
    mixed = T.add(
        T.mul(propagate(features, hg, ops), config.alpha),
        T.mul(as_tensor(anchor), 1.0 - config.alpha),
    )
    norm = aggregation_norm(mixed, hg, ops)
    if config.mode == "learned" and norm.data < 1e-6:
        norm = norm.detach()  # freeze a vanishing denominator instead of exploding grads
    return T.div(mixed, norm)


@dataclass
class DiffusionResult:
    features: Tensor
    iterations: int
    trace: list[float] = field(default_factory=list)
    converged: bool = True


def diffuse(raw_features, hg: Hypergraph, config: DiffusionConfig, ops: DiffusionOps) -> DiffusionResult:
    """Iterate diffusion steps from the normalized input features.

    Pure mode stops once the relative change drops to ``config.tol`` (or
    flags non-convergence at ``max_iters``); learned mode always runs a
    fixed number of unrolled steps so gradients can flow through them.
    """
    x = as_tensor(raw_features)
    if not np.isfinite(x.data).all():
        raise NumericalError("diffusion input must be finite")
    anchor = T.div(x, aggregation_norm(x, hg, ops))
    current = T.div(anchor, aggregation_norm(anchor, hg, ops))

    trace: list[float] = []
    if config.mode == "learned":
        for _ in range(config.unroll_iters):
            nxt = diffusion_step(current, anchor, hg, config, ops)
            trace.append(_relative_change(nxt.data, current.data))
            current = nxt
        return DiffusionResult(current, config.unroll_iters, trace, converged=True)

    for iteration in range(1, config.max_iters + 1):
        nxt = diffusion_step(current, anchor, hg, config, ops)
        change = _relative_change(nxt.data, current.data)
        trace.append(change)
        current = nxt
        if change <= config.tol:
            return DiffusionResult(current, iteration, trace, converged=True)
    return DiffusionResult(current, config.max_iters, trace, converged=False)


def _relative_change(new: np.ndarray, old: np.ndarray) -> float:
    denom = np.linalg.norm(new)
    return float(np.linalg.norm(new - old) / denom) if denom > 0 else 0.0
