"""Versioned named-tensor checkpoints for policies and optimizer state."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import ScenarioConfig, config_from_dict, config_to_dict
from .errors import CorruptTrace, MissingCheckpoint

FORMAT_NAME = "hypersam-checkpoint"
FORMAT_VERSION = 1


def save_checkpoint(path, params: dict[str, np.ndarray], meta: dict, optimizer_state: dict | None = None):
    """Write named arrays with a versioned JSON header entry."""
    header = {"format": FORMAT_NAME, "version": FORMAT_VERSION, "meta": meta}
    arrays = {f"param/{k}": np.asarray(v) for k, v in params.items()}
    if optimizer_state:
        arrays.update({f"opt/{k}": np.asarray(v) for k, v in optimizer_state.items()})
    arrays["__header__"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, **arrays)
    if path.suffix != ".npz":  # np.savez appends .npz
        Path(str(path) + ".npz").replace(path)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict, dict[str, np.ndarray]]:
    path = Path(path)
    if not path.exists():
        raise MissingCheckpoint(f"checkpoint {path} does not exist")
    with np.load(path, allow_pickle=False) as blob:
        if "__header__" not in blob:
            raise CorruptTrace(f"{path} is not a policy checkpoint (missing header)")
        header = json.loads(bytes(blob["__header__"]).decode())
        if header.get("format") != FORMAT_NAME or header.get("version") != FORMAT_VERSION:
            raise CorruptTrace(f"unsupported checkpoint header: {header.get('format')!r}")
        params = {k[len("param/"):]: blob[k].copy() for k in blob.files if k.startswith("param/")}
        opt = {k[len("opt/"):]: blob[k].copy() for k in blob.files if k.startswith("opt/")}
    return params, header["meta"], opt


def save_policy(path, policy, config: ScenarioConfig, extra_meta: dict | None = None,
                optimizer_state: dict | None = None):
    meta = {
        "config": config_to_dict(config),
        "ablated": bool(policy.ablated),
    }
    if extra_meta:
        meta.update(extra_meta)
    save_checkpoint(path, policy.state_dict(), meta, optimizer_state)


def policy_from_checkpoint(path, config: ScenarioConfig | None = None):
    """Rebuild a policy network from a checkpoint (config embedded in meta)."""
    from .policy import PolicyNetwork

    params, meta, _ = load_checkpoint(path)
    if config is None:
        config = config_from_dict(meta["config"])
    policy = PolicyNetwork(config, np.random.default_rng(0), ablate_diffusion=meta.get("ablated", False))
    policy.load_state_dict(params)
    return policy


def checkpoint_meta(path) -> dict:
    _, meta, _ = load_checkpoint(path)
    return meta
