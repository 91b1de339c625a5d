"""Seeded behaviour-policy rollouts and observable datasets.

Randomness is drawn per fixed-size chunk of trajectory indices from a stream
seeded by ``(seed, stream, chunk)``, so a dataset depends only on its inputs
and never on the number of worker threads.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ._chain import Chain, chain_of, check_policy
from .io import fingerprint
from .models import (
    BehaviorPolicy,
    GeneralPolicy,
    MemorylessPolicy,
    ObservableHistory,
    ObservableRecord,
    SpaceSpec,
    TabularDPOMDP,
    Trajectory,
)
from .probtables import ObservedArrays

CHUNK = 4096
STREAM_BEHAVIOR = 0
STREAM_EVAL = 1


def _categorical(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw, one row of ``probs`` per uniform in ``u``."""
    cum = np.cumsum(probs, axis=-1)
    idx = (u[:, None] >= cum).sum(axis=1)
    return np.minimum(idx, probs.shape[-1] - 1)


def _chunk_uniforms(seed: int, stream: int, chunk: int, rows: int, cols: int) -> np.ndarray:
    rng = np.random.default_rng([int(seed), stream, chunk])
    return rng.random((rows, cols))


def _rollout_chunk(chain: Chain, L: int, seed: int, stream: int, chunk: int, rows: int, act):
    """Simulate ``rows`` trajectories; ``act(t, s, z, o, history_arrays, u)`` draws actions."""
    U = _chunk_uniforms(seed, stream, chunk, rows, 2 + 4 * (L + 1))
    s = _categorical(np.broadcast_to(chain.init, (rows, chain.n_s)), U[:, 0])
    z_pre = _categorical(chain.pre[s], U[:, 1])
    S = np.empty((rows, L + 1), dtype=np.int64)
    Z, O, A, R = (np.empty((rows, L + 1), dtype=np.int64) for _ in range(4))
    for t in range(L + 1):
        c = 2 + 4 * t
        S[:, t] = s
        Z[:, t] = _categorical(chain.emit_z[s], U[:, c])
        O[:, t] = _categorical(chain.emit_o[s], U[:, c + 1])
        A[:, t] = act(t, s, Z, O, A, U[:, c + 2])
        R[:, t] = chain.reward_idx[s, A[:, t]]
        if t < L:
            s = _categorical(chain.trans[A[:, t], s], U[:, c + 3])
    return S, z_pre, Z, O, A, R


def _run_chunks(n: int, threads: int, fn):
    chunks = [(c, min(CHUNK, n - c * CHUNK)) for c in range((n + CHUNK - 1) // CHUNK)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda cr: fn(*cr), chunks))
    else:
        parts = [fn(c, r) for c, r in chunks]
    return [np.concatenate(p, axis=0) for p in zip(*parts)]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Behaviour rollouts with hidden states retained.

    ``s`` is the chain state (``u`` for POMDPs, ``u * n_z + z`` for decoupled
    models); ``u`` is the unobserved component.  ``r`` holds reward indices.
    """

    kind: str
    spaces: SpaceSpec
    gamma: float
    fingerprint: str
    seed: int
    horizon: int
    s: np.ndarray
    u: np.ndarray
    z_pre: np.ndarray
    z: np.ndarray
    o: np.ndarray | None
    a: np.ndarray
    r: np.ndarray

    @property
    def n(self) -> int:
        return self.z.shape[0]

    def __len__(self):
        return self.n

    @property
    def decoupled(self) -> bool:
        return self.kind == "dpomdp"

    @cached_property
    def reward_values(self) -> np.ndarray:
        return np.asarray(self.spaces.reward_values, dtype=float)

    def returns(self) -> np.ndarray:
        """Discounted return of each record from the logged rewards."""
        disc = self.gamma ** np.arange(self.horizon + 1)
        return self.reward_values[self.r] @ disc

    def arrays(self) -> ObservedArrays:
        o = self.o if self.o is not None else np.zeros_like(self.z)
        return ObservedArrays(z_pre=self.z_pre, z=self.z, o=o, a=self.a, r=self.r)

    @property
    def records(self) -> list[Trajectory]:
        out = []
        for i in range(self.n):
            out.append(Trajectory(
                z_pre=int(self.z_pre[i]), u=tuple(map(int, self.u[i])), z=tuple(map(int, self.z[i])),
                a=tuple(map(int, self.a[i])), r=tuple(map(int, self.r[i])),
                o=None if self.o is None else tuple(map(int, self.o[i])),
            ))
        return out

    def save(self, path) -> None:
        with open(path, "w") as fh:
            head = {"fingerprint": self.fingerprint, "seed": self.seed, "L": self.horizon, "n": self.n,
                    "kind": self.kind, "gamma": self.gamma,
                    "spaces": {"n_u": self.spaces.n_u, "n_z": self.spaces.n_z, "n_a": self.spaces.n_a,
                               "n_o": self.spaces.n_o, "reward_values": list(self.spaces.reward_values)}}
            fh.write(json.dumps(head) + "\n")
            for i in range(self.n):
                rec = {"u": self.u[i].tolist(), "z": self.z[i].tolist()}
                if self.o is not None:
                    rec["o"] = self.o[i].tolist()
                rec.update({"a": self.a[i].tolist(), "r": self.r[i].tolist(), "z_pre": int(self.z_pre[i])})
                fh.write(json.dumps(rec) + "\n")

    @classmethod
    def load(cls, path) -> "Dataset":
        with open(path) as fh:
            head = json.loads(fh.readline())
            rows = [json.loads(line) for line in fh if line.strip()]
        sp = head["spaces"]
        spaces = SpaceSpec(n_u=sp["n_u"], n_z=sp["n_z"], n_a=sp["n_a"], n_o=sp.get("n_o"),
                           reward_values=tuple(sp["reward_values"]))
        arr = {k: np.array([r[k] for r in rows], dtype=np.int64) for k in ("u", "z", "a", "r", "z_pre")}
        o = np.array([r["o"] for r in rows], dtype=np.int64) if rows and "o" in rows[0] else None
        s = arr["u"] * spaces.n_z + arr["z"] if head["kind"] == "dpomdp" else arr["u"]
        return cls(kind=head["kind"], spaces=spaces, gamma=head["gamma"], fingerprint=head["fingerprint"],
                   seed=head["seed"], horizon=head["L"], s=s, u=arr["u"], z_pre=arr["z_pre"], z=arr["z"],
                   o=o, a=arr["a"], r=arr["r"])


def sample_dataset(model, behavior_policy: BehaviorPolicy, L: int, n: int, seed: int, threads: int = 1) -> Dataset:
    """Draw ``n`` behaviour trajectories of ``L + 1`` steps."""
    if n <= 0:
        raise ValueError("n must be positive")
    if not isinstance(behavior_policy, BehaviorPolicy):
        raise TypeError("sample_dataset needs a BehaviorPolicy")
    check_policy(model, behavior_policy, L + 1)
    chain = chain_of(model)
    pib = chain.behavior_tables(behavior_policy)

    def act(t, s, Z, O, A, u):
        return _categorical(pib[t][s], u)

    S, z_pre, Z, O, A, R = _run_chunks(
        n, threads, lambda c, rows: _rollout_chunk(chain, L, seed, STREAM_BEHAVIOR, c, rows, act)
    )
    return Dataset(
        kind=model.kind, spaces=model.spaces, gamma=model.gamma,
        fingerprint=fingerprint(model, behavior_policy, L), seed=int(seed), horizon=L,
        s=S, u=chain.u_of_s[S], z_pre=z_pre, z=Z, o=O if chain.decoupled else None, a=A, r=R,
    )


def project_observable(d: Dataset) -> list[ObservableRecord]:
    """Drop hidden states, keeping z_pre, z, [o], a, r in order."""
    return [t.observable() for t in d.records]


def eval_rollouts(model, eval_policy, L: int, n: int, seed: int, threads: int = 1):
    """Rollouts under an evaluation policy; returns reward indices ``[n, L+1]``."""
    chain = chain_of(model)
    if isinstance(eval_policy, MemorylessPolicy):
        check_policy(model, eval_policy, L + 1)
        pie = chain.eval_tables(eval_policy)

        def act(t, s, Z, O, A, u):
            return _categorical(pie[t][Z[:, t], O[:, t]], u)
    elif isinstance(eval_policy, GeneralPolicy):
        def act(t, s, Z, O, A, u):
            out = np.empty(len(s), dtype=np.int64)
            for k in range(len(s)):
                h = ObservableHistory(
                    z=tuple(map(int, Z[k, : t + 1])), a=tuple(map(int, A[k, :t])),
                    o=tuple(map(int, O[k, : t + 1])) if chain.decoupled else None,
                )
                out[k] = _categorical(eval_policy.dist(t, h)[None, :], u[k : k + 1])[0]
            return out
    else:
        raise TypeError("eval_rollouts needs an evaluation policy")
    parts = _run_chunks(n, threads, lambda c, rows: _rollout_chunk(chain, L, seed, STREAM_EVAL, c, rows, act))
    return chain, parts[-1]
