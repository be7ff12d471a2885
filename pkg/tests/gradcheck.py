"""Central-difference gradient oracle used across the test suite.

The oracle never touches the reverse-mode graph: it re-evaluates the
forward function at perturbed parameter values, so it stays independent
of the code path it checks.
"""

import numpy as np

from hypersam.nn.tensor import Tensor


def numerical_grad(fn, param: Tensor, eps: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``fn()`` w.r.t. every entry of ``param``."""
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = float(fn().data)
        flat[i] = orig - eps
        lo = float(fn().data)
        flat[i] = orig
        out[i] = (hi - lo) / (2.0 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / denom)


def assert_grads_match(fn, params, eps: float = 1e-5, tol: float = 1e-4):
    """Backprop ``fn()`` once and compare every parameter against the oracle."""
    items = list(params.items()) if isinstance(params, dict) else list(enumerate(params))
    for _, p in items:
        p.grad = None
    loss = fn()
    loss.backward()
    for name, p in items:
        numeric = numerical_grad(fn, p, eps=eps)
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        if np.linalg.norm(analytic - numeric) < 1e-7:
            continue  # both effectively zero; rel err would divide FD noise
        err = relative_error(analytic, numeric)
        assert err < tol, f"gradient mismatch for {name}: rel err {err:.2e}"
