"""JSON (de)serialisation of models and policies."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .models import BehaviorPolicy, MemorylessPolicy, SpaceSpec, TabularDPOMDP, TabularPOMDP


def _spaces_json(sp: SpaceSpec) -> dict:
    d = {"n_u": sp.n_u, "n_z": sp.n_z, "n_a": sp.n_a, "reward_values": list(sp.reward_values)}
    if sp.n_o is not None:
        d["n_o"] = sp.n_o
    return d


def model_to_json(m) -> dict:
    if isinstance(m, TabularDPOMDP):
        return {
            "kind": "dpomdp",
            "name": m.name,
            "spaces": _spaces_json(m.spaces),
            "transition": m.transition.tolist(),
            "independent_observation": m.independent_observation.tolist(),
            "reward": m.reward.tolist(),
            "gamma": m.gamma,
            "init": m.init.tolist(),
        }
    return {
        "kind": "pomdp",
        "name": m.name,
        "spaces": _spaces_json(m.spaces),
        "transition": m.transition.tolist(),
        "observation": m.observation.tolist(),
        "pre_observation": m.pre_observation.tolist(),
        "reward": m.reward.tolist(),
        "gamma": m.gamma,
        "init": m.init.tolist(),
    }


def model_from_json(d: dict):
    sp = d["spaces"]
    spaces = SpaceSpec(
        n_u=int(sp["n_u"]), n_z=int(sp["n_z"]), n_a=int(sp["n_a"]),
        reward_values=tuple(sp["reward_values"]),
        n_o=None if sp.get("n_o") is None else int(sp["n_o"]),
    )
    kind = d.get("kind")
    if kind == "dpomdp":
        return TabularDPOMDP(
            spaces=spaces,
            transition=np.array(d["transition"], dtype=float),
            independent_observation=np.array(d["independent_observation"], dtype=float),
            reward=np.array(d["reward"], dtype=np.int64),
            gamma=float(d["gamma"]),
            init=np.array(d["init"], dtype=float),
            name=d.get("name", ""),
        )
    if kind == "pomdp":
        return TabularPOMDP(
            spaces=spaces,
            transition=np.array(d["transition"], dtype=float),
            observation=np.array(d["observation"], dtype=float),
            pre_observation=None if d.get("pre_observation") is None else np.array(d["pre_observation"], dtype=float),
            reward=np.array(d["reward"], dtype=np.int64),
            gamma=float(d["gamma"]),
            init=np.array(d["init"], dtype=float),
            name=d.get("name", ""),
        )
    raise ValueError(f"unknown model kind {kind!r}")


def policy_to_json(p) -> dict:
    return {"kind": p.kind, "tables": p.tables.tolist()}


def policy_from_json(d: dict):
    tables = np.array(d["tables"], dtype=float)
    if d.get("kind") == "behavior":
        return BehaviorPolicy(tables)
    if d.get("kind") == "eval_memoryless":
        return MemorylessPolicy(tables)
    raise ValueError(f"unknown policy kind {d.get('kind')!r}")


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def save_json(obj: dict, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=1) + "\n")


def load_model(path):
    return model_from_json(load_json(path))


def load_policy(path):
    return policy_from_json(load_json(path))


def fingerprint(model, policy, horizon: int) -> str:
    """Content hash of (model, policy, horizon)."""
    blob = json.dumps([model_to_json(model), policy_to_json(policy), int(horizon)], sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
