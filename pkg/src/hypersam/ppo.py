"""PPO building blocks: returns, GAE, clipped actor and critic losses."""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, NumericalError
from .nn import tensor as T
from .nn.tensor import Tensor, as_tensor


def macro_reward(local_rewards, gamma: float) -> float:
    """Discounted sum of the local rewards inside one decision segment."""
    rewards = np.asarray(local_rewards, dtype=np.float64)
    if rewards.size == 0:
        raise DimensionMismatch("macro reward needs a non-empty segment")
    return float((rewards * gamma ** np.arange(rewards.size)).sum())


def gae(rewards, values, bootstrap_value=None, gamma=0.99, lam=0.95) -> np.ndarray:
    """Generalized advantage estimation (raw, unnormalized).

    ``values`` may already include the bootstrap entry (length
    len(rewards) + 1) or ``bootstrap_value`` is appended to it. ``gamma``
    may be a scalar or a per-transition array, which lets macro-level
    segments discount by their actual durations.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if values.size == rewards.size:
        if bootstrap_value is None:
            raise DimensionMismatch("values must include a bootstrap entry or one must be given")
        values = np.append(values, float(bootstrap_value))
    if values.size != rewards.size + 1:
        raise DimensionMismatch("values must have exactly one more entry than rewards")
    gammas = np.broadcast_to(np.asarray(gamma, dtype=np.float64), rewards.shape)

    advantages = np.zeros_like(rewards)
    carry = 0.0
    for t in range(rewards.size - 1, -1, -1):
        delta = rewards[t] + gammas[t] * values[t + 1] - values[t]
        carry = delta + gammas[t] * lam * carry
        advantages[t] = carry
    return advantages


def normalize_advantages(advantages: np.ndarray) -> np.ndarray:
    advantages = np.asarray(advantages, dtype=np.float64)
    return (advantages - advantages.mean()) / (advantages.std() + 1e-8)


def actor_loss(logp_new, logp_old, advantages, entropy, clip: float, entropy_coef: float) -> Tensor:
    """Negated clipped surrogate plus entropy bonus (to be minimized)."""
    logp_new = as_tensor(logp_new)
    ratio = T.exp(T.sub(logp_new, np.asarray(logp_old, dtype=np.float64)))
    if not np.isfinite(ratio.data).all():
        raise NumericalError("non-finite policy ratio")
    adv = np.asarray(advantages, dtype=np.float64)
    surrogate = T.minimum(T.mul(ratio, adv), T.mul(T.clip(ratio, 1.0 - clip, 1.0 + clip), adv))
    loss = T.mul(T.tensor_mean(surrogate), -1.0)
    if entropy_coef:
        loss = T.sub(loss, T.mul(T.tensor_mean(as_tensor(entropy)), entropy_coef))
    return loss


def critic_loss(values_new, values_old, returns, value_clip: float) -> Tensor:
    """Mean of the elementwise max of unclipped and clipped squared errors."""
    values_new = as_tensor(values_new)
    values_old = np.asarray(values_old, dtype=np.float64)
    returns = np.asarray(returns, dtype=np.float64)
    clipped = T.clip(values_new, values_old - value_clip, values_old + value_clip)
    raw_err = T.power(T.sub(values_new, returns), 2.0)
    clip_err = T.power(T.sub(clipped, returns), 2.0)
    return T.tensor_mean(T.maximum(raw_err, clip_err))


def discounted_returns(rewards, gamma, bootstrap: float = 0.0) -> np.ndarray:
    """Brute-force reward-to-go; the oracle for the lambda = 1 GAE identity."""
    rewards = np.asarray(rewards, dtype=np.float64)
    gammas = np.broadcast_to(np.asarray(gamma, dtype=np.float64), rewards.shape)
    out = np.zeros_like(rewards)
    carry = bootstrap
    for t in range(rewards.size - 1, -1, -1):
        carry = rewards[t] + gammas[t] * carry
        out[t] = carry
    return out


class Adam:
    """Deterministic Adam over a named parameter dict."""

    def __init__(self, params: dict[str, Tensor], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = dict(sorted(params.items()))
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self):
        self.step_count += 1
        b1c = 1.0 - self.beta1**self.step_count
        b2c = 1.0 - self.beta2**self.step_count
        for name, p in self.params.items():
            grad = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * grad
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * grad * grad
            p.data = p.data - self.lr * (self.m[name] / b1c) / (np.sqrt(self.v[name] / b2c) + self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        state: dict[str, np.ndarray] = {"step_count": np.array(self.step_count)}
        for name in self.params:
            state[f"m/{name}"] = self.m[name].copy()
            state[f"v/{name}"] = self.v[name].copy()
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]):
        self.step_count = int(state["step_count"])
        for name in self.params:
            self.m[name] = np.asarray(state[f"m/{name}"]).copy()
            self.v[name] = np.asarray(state[f"v/{name}"]).copy()


def clip_gradients(params: dict[str, Tensor], max_norm: float) -> float:
    """Scale all gradients so their joint norm is at most ``max_norm``."""
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float((p.grad**2).sum())
    total = np.sqrt(total)
    if total > max_norm and total > 0:
        scale = max_norm / total
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * scale
    return float(total)
