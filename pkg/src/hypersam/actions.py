"""Sampling macro itineraries and local velocity commands from the policy."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nn import tensor as T
from .nn.tensor import Tensor, no_grad
from .policy import ObsFeatures, PolicyNetwork, sample_local_action
from .world import LocalAction, MacroAction, PoiStatus, WorldState


@dataclass(frozen=True)
class MacroSelection:
    """Outcome of one robot's task-site choice at a decision timestep."""

    action: MacroAction
    head: int | None
    logp: float
    mask: tuple[int, ...]  # site ids the categorical ranged over


def itinerary_cap(n_pois: int, n_robots: int) -> int:
    return math.ceil(n_pois / n_robots)


def head_probabilities(policy: PolicyNetwork, balanced: Tensor, available) -> np.ndarray:
    """Categorical over the available sites (computed without graph recording)."""
    with no_grad():
        logits = policy.macro_logits(balanced, np.asarray(available)).data
    shifted = np.exp(logits - logits.max())
    return shifted / shifted.sum()


def _greedy_tail(head: int, pool: list[int], positions, cap: int) -> list[int]:
    """Chain the nearest remaining sites onto the head, up to the cap."""
    sequence = [head]
    remaining = [j for j in pool if j != head]
    while remaining and len(sequence) < cap:
        last = np.asarray(positions[sequence[-1]])
        nearest = min(remaining, key=lambda j: (np.hypot(*(np.asarray(positions[j]) - last)), j))
        sequence.append(nearest)
        remaining.remove(nearest)
    return sequence


def select_macro_action(
    policy: PolicyNetwork,
    balanced: Tensor,
    unexplored: list[int],
    poi_positions,
    rng: np.random.Generator,
    issued_at: int,
    cap: int,
) -> MacroSelection:
    """One robot's itinerary: sampled head, then greedy nearest-neighbor tail."""
    if not unexplored:
        return MacroSelection(MacroAction((), issued_at), None, 0.0, ())
    probs = head_probabilities(policy, balanced, unexplored)
    choice = int(rng.choice(len(unexplored), p=probs))
    head = unexplored[choice]
    sequence = _greedy_tail(head, list(unexplored), poi_positions, cap)
    return MacroSelection(
        MacroAction(tuple(sequence), issued_at), head, float(np.log(probs[choice])), tuple(unexplored)
    )


def select_joint_macro_actions(
    policy: PolicyNetwork,
    balanced_per_robot: list[Tensor],
    world: WorldState,
    rng: np.random.Generator,
    issued_at: int,
) -> list[MacroSelection]:
    """All robots choose heads; collisions go to the lower index, losers resample.

    After the heads are fixed, the remaining unexplored sites are dealt
    round-robin by proximity so itineraries stay balanced and disjoint.
    """
    n = len(world.robots)
    positions = [p.position for p in world.pois]
    unexplored = [j for j, p in enumerate(world.pois) if p.status is not PoiStatus.EXPLORED]
    cap = itinerary_cap(len(world.pois), n)

    heads: dict[int, int | None] = {}
    masks: dict[int, tuple[int, ...]] = {}
    logps: dict[int, float] = {}
    taken: set[int] = set()
    pending = list(range(n))
    while pending:
        for rid in pending:
            avail = [j for j in unexplored if j not in taken]
            if not avail:
                heads[rid], masks[rid], logps[rid] = None, (), 0.0
                continue
            probs = head_probabilities(policy, balanced_per_robot[rid], avail)
            choice = int(rng.choice(len(avail), p=probs))
            heads[rid] = avail[choice]
            masks[rid] = tuple(avail)
            logps[rid] = float(np.log(probs[choice]))
        chosen: dict[int, list[int]] = {}
        for rid in pending:
            if heads[rid] is not None:
                chosen.setdefault(heads[rid], []).append(rid)
        next_pending = []
        for site, rids in sorted(chosen.items()):
            winner = min(rids)
            taken.add(site)
            next_pending.extend(r for r in rids if r != winner)
        pending = sorted(next_pending)

    pool = [j for j in unexplored if j not in taken]
    sequences = {rid: ([] if heads[rid] is None else [heads[rid]]) for rid in range(n)}
    progressed = True
    while pool and progressed:
        progressed = False
        for rid in range(n):
            seq = sequences[rid]
            if not seq or len(seq) >= cap or not pool:
                continue
            last = np.asarray(positions[seq[-1]])
            nearest = min(pool, key=lambda j: (np.hypot(*(np.asarray(positions[j]) - last)), j))
            seq.append(nearest)
            pool.remove(nearest)
            progressed = True

    return [
        MacroSelection(
            MacroAction(tuple(sequences[rid]), issued_at), heads[rid], logps[rid], masks[rid]
        )
        for rid in range(n)
    ]


@dataclass(frozen=True)
class LocalSelection:
    action: LocalAction
    raw_sample: np.ndarray  # pre-squash Gaussian draw, kept for exact density recomputation
    logp: float


def local_numeric_input(feats: ObsFeatures) -> np.ndarray:
    return np.concatenate([feats.self_now, feats.local_extras])


def select_local_action(
    policy: PolicyNetwork,
    feats: ObsFeatures,
    fused_row: np.ndarray,
    balanced_row: np.ndarray,
    v_pref: float,
    rng: np.random.Generator,
) -> LocalSelection:
    """Sample a velocity command from the squashed Gaussian head."""
    with no_grad():
        mean, log_std = policy.local_gaussian(
            Tensor(local_numeric_input(feats)), Tensor(fused_row), Tensor(balanced_row)
        )
    action, z, logp = sample_local_action(mean.data, log_std.data, v_pref, rng)
    return LocalSelection(LocalAction((float(action[0]), float(action[1]))), z, logp)
