"""Episode scoring and batch evaluation over seeded scenario suites."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .config import ScenarioConfig, SocialScoreParams
from .episode import EpisodeOutcome


@dataclass(frozen=True)
class EpisodeReport:
    seed: int
    allocation_score: float
    social_score: float  # SS-proxy; see SocialScoreParams
    success: bool
    collision: bool
    timeout: bool
    discomfort_steps: int
    completion_time: float
    path_lengths: tuple[float, ...]
    explored_pois: int
    total_pois: int
    steps: int
    mean_reward: float

    def __post_init__(self):
        assert 0.0 <= self.allocation_score <= 100.0
        assert 0.0 <= self.social_score <= 100.0
        if self.success:
            assert not self.collision and not self.timeout


def allocation_score(raw) -> float:
    """Percentage of task sites explored by the team at episode end."""
    if raw.total_pois < 1:
        raise ValueError("allocation score needs at least one task site")
    return 100.0 * raw.explored_pois / raw.total_pois


def social_score_proxy(raw, params: SocialScoreParams, time_budget: float) -> float:
    """Documented stand-in for the external social score (labeled ss_proxy).

    Penalizes collisions, per-step discomfort, timeouts, and slow
    completions beyond a grace fraction of the time budget; clamped to
    [0, 100].
    """
    slow_fraction = max(0.0, raw.completion_time / time_budget - params.slow_grace) / params.slow_grace
    score = (
        100.0
        - params.collision_penalty * bool(raw.collision)
        - params.discomfort_penalty * raw.discomfort_steps
        - params.timeout_penalty * bool(raw.timeout)
        - params.slow_penalty * slow_fraction
    )
    return float(min(max(score, 0.0), 100.0))


def build_report(outcome: EpisodeOutcome, config: ScenarioConfig) -> EpisodeReport:
    return EpisodeReport(
        seed=outcome.seed,
        allocation_score=allocation_score(outcome),
        social_score=social_score_proxy(outcome, config.social_score, config.time_budget),
        success=outcome.success,
        collision=outcome.collision,
        timeout=outcome.timeout,
        discomfort_steps=outcome.discomfort_steps,
        completion_time=outcome.completion_time,
        path_lengths=tuple(map(float, outcome.path_lengths)),
        explored_pois=outcome.explored_pois,
        total_pois=outcome.total_pois,
        steps=outcome.steps,
        mean_reward=float(outcome.total_rewards.mean()),
    )


def bootstrap_ci(values, n_resamples: int = 1000, level: float = 0.95, seed: int = 20_240_101):
    """Percentile bootstrap interval, deterministically seeded."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return (float("nan"), float("nan"))
    rng = np.random.default_rng(seed)
    means = rng.choice(values, size=(n_resamples, values.size), replace=True).mean(axis=1)
    lo, hi = np.percentile(means, [(1 - level) / 2 * 100, (1 + level) / 2 * 100])
    return float(lo), float(hi)


def summarize(reports: list[EpisodeReport]) -> dict:
    alloc = [r.allocation_score for r in reports]
    social = [r.social_score for r in reports]
    alloc_ci = bootstrap_ci(alloc)
    social_ci = bootstrap_ci(social)
    return {
        "episodes": len(reports),
        "allocation_score_mean": float(np.mean(alloc)),
        "allocation_score_ci95": [alloc_ci[0], alloc_ci[1]],
        "social_score_mean": float(np.mean(social)),
        "social_score_ci95": [social_ci[0], social_ci[1]],
        "success_rate": float(np.mean([r.success for r in reports])),
        "collision_rate": float(np.mean([r.collision for r in reports])),
        "timeout_rate": float(np.mean([r.timeout for r in reports])),
        "mean_discomfort_steps": float(np.mean([r.discomfort_steps for r in reports])),
        "mean_completion_time": float(np.mean([r.completion_time for r in reports])),
        "mean_reward": float(np.mean([r.mean_reward for r in reports])),
    }


def _evaluate_one(args):
    from .baselines import run_baseline
    from .config import config_from_dict
    from .checkpoint import policy_from_checkpoint

    config_dict, policy_kind, seed, checkpoint_path = args
    config = config_from_dict(config_dict)
    policy = policy_from_checkpoint(checkpoint_path, config) if checkpoint_path else None
    report, _ = run_baseline(config, policy_kind, seed, policy=policy)
    return report


def max_workers() -> int:
    return max(1, int(os.environ.get("HYPERSAM_THREADS", "1")))


def evaluate_suite(
    policy_kind: str,
    config: ScenarioConfig,
    seeds=None,
    n_episodes: int = 500,
    checkpoint_path=None,
    policy=None,
    workers: int | None = None,
) -> tuple[list[EpisodeReport], dict]:
    """Run seeded episodes under one policy kind; returns (reports, summary).

    Deterministic for a fixed seed list regardless of worker count: the
    reduce step orders results by episode index.
    """
    from .baselines import run_baseline
    from .config import config_to_dict

    if seeds is None:
        seeds = list(config.seeds) if config.seeds else list(range(n_episodes))
    seeds = list(seeds)[:n_episodes] if len(seeds) > n_episodes else list(seeds)

    workers = max_workers() if workers is None else max(1, workers)
    if workers > 1 and policy is None:
        from concurrent.futures import ProcessPoolExecutor

        jobs = [(config_to_dict(config), policy_kind, s, checkpoint_path) for s in seeds]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_evaluate_one, jobs))
    else:
        if policy is None and checkpoint_path:
            from .checkpoint import policy_from_checkpoint

            policy = policy_from_checkpoint(checkpoint_path, config)
        reports = [run_baseline(config, policy_kind, s, policy=policy)[0] for s in seeds]
    return reports, summarize(reports)
