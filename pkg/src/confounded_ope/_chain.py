"""Kind-agnostic view of a tabular model as a hidden Markov chain.

Both model kinds are reduced to: hidden state ``s``, per-step observables
``(z, o, a, r)`` emitted from ``s``, and a pre-observation ``z_{-1}``.  For a
plain POMDP ``s = u`` and ``o`` is a dummy axis of size one; for a decoupled
model ``s = u * n_z + z`` and ``z`` is a deterministic function of ``s``.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .models import (
    BehaviorPolicy,
    MemorylessPolicy,
    Model,
    TabularDPOMDP,
    require_valid,
    require_valid_policy,
)


@dataclass(frozen=True, eq=False)
class Chain:
    decoupled: bool
    n_u: int
    n_z: int
    n_o: int
    n_a: int
    reward_values: np.ndarray
    gamma: float
    init: np.ndarray  # [s]
    pre: np.ndarray  # [s, z_pre]
    emit_z: np.ndarray  # [s, z]
    emit_o: np.ndarray  # [s, o]
    reward_idx: np.ndarray  # [s, a]
    trans: np.ndarray  # [a, s, s']
    u_of_s: np.ndarray  # [s]
    z_of_s: np.ndarray | None  # [s] (decoupled only)

    @property
    def n_s(self) -> int:
        return self.init.shape[0]

    @property
    def n_r(self) -> int:
        return self.reward_values.shape[0]

    @cached_property
    def reward_onehot(self) -> np.ndarray:
        """[s, a, r] indicator of the deterministic reward."""
        oh = np.zeros((self.n_s, self.n_a, self.n_r))
        s, a = np.meshgrid(np.arange(self.n_s), np.arange(self.n_a), indexing="ij")
        oh[s, a, self.reward_idx] = 1.0
        return oh

    @cached_property
    def u_onehot(self) -> np.ndarray:
        oh = np.zeros((self.n_s, self.n_u))
        oh[np.arange(self.n_s), self.u_of_s] = 1.0
        return oh

    @cached_property
    def obs_emit(self) -> np.ndarray:
        """[s, z, o] joint emission of the per-step observation."""
        return self.emit_z[:, :, None] * self.emit_o[:, None, :]

    def behavior_tables(self, pi_b: BehaviorPolicy) -> np.ndarray:
        """pi_b as [t, s, a]."""
        tab = pi_b.tables
        if self.decoupled:
            t, nu, nz, na = tab.shape
            return tab.reshape(t, nu * nz, na)
        return tab

    def eval_tables(self, pi_e: MemorylessPolicy) -> np.ndarray:
        """Memoryless pi_e as [t, z, o, a]."""
        tab = pi_e.tables
        if self.decoupled:
            return tab
        return tab[:, :, None, :]


def chain_of(model: Model) -> Chain:
    require_valid(model)
    sp = model.spaces
    rv = np.asarray(sp.reward_values, dtype=float)
    if isinstance(model, TabularDPOMDP):
        nu, nz, no, na = sp.n_u, sp.n_z, sp.n_o, sp.n_a
        ns = nu * nz
        u_of_s = np.repeat(np.arange(nu), nz)
        z_of_s = np.tile(np.arange(nz), nu)
        emit_z = np.zeros((ns, nz))
        emit_z[np.arange(ns), z_of_s] = 1.0
        emit_o = model.independent_observation[u_of_s]
        trans = model.transition.transpose(0, 2, 1, 4, 3).reshape(na, ns, ns)
        joint0 = model.init.transpose(2, 1, 0).reshape(ns, nz)  # [(u0,z0), z-1]
        init = joint0.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            pre = np.where(init[:, None] > 0, joint0 / init[:, None], 1.0 / nz)
        return Chain(
            decoupled=True, n_u=nu, n_z=nz, n_o=no, n_a=na, reward_values=rv,
            gamma=model.gamma, init=init, pre=pre, emit_z=emit_z, emit_o=emit_o,
            reward_idx=model.reward.reshape(ns, na), trans=trans, u_of_s=u_of_s,
            z_of_s=z_of_s,
        )
    nu, nz, na = sp.n_u, sp.n_z, sp.n_a
    return Chain(
        decoupled=False, n_u=nu, n_z=nz, n_o=1, n_a=na, reward_values=rv,
        gamma=model.gamma, init=np.asarray(model.init), pre=np.asarray(model.pre_observation),
        emit_z=np.asarray(model.observation), emit_o=np.ones((nu, 1)),
        reward_idx=np.asarray(model.reward), trans=np.asarray(model.transition),
        u_of_s=np.arange(nu), z_of_s=None,
    )


def check_policy(model: Model, policy, steps: int) -> None:
    require_valid_policy(policy, model, steps)


def state_marginals(chain: Chain, pib: np.ndarray, steps: int) -> list[np.ndarray]:
    """Behaviour marginals P(s_t) for t = 0..steps-1."""
    mu = [chain.init.copy()]
    for t in range(steps - 1):
        mu.append(np.einsum("s,sa,asq->q", mu[-1], pib[t], chain.trans))
    return mu


# variable kinds carried per step, in a fixed axis order
VAR_SIZES = ("z", "o", "a", "r", "u")


def _size(chain: Chain, kind: str) -> int:
    return {"z": chain.n_z, "o": chain.n_o, "a": chain.n_a, "r": chain.n_r, "u": chain.n_u}[kind]


def population_joint(chain: Chain, pib: np.ndarray, variables: list[tuple[str, int]]) -> np.ndarray:
    """Exact behaviour joint P^b over the listed ``(kind, t)`` variables.

    ``kind`` is one of ``z, o, a, r, u``; ``("z", -1)`` is the pre-observation.
    The returned array has one axis per variable, in the order given.
    """
    ts = [t for _, t in variables]
    t_lo = max(min(ts), 0)
    t_hi = max(ts)
    letters = iter(string.ascii_letters)
    sym: dict[tuple[str, int], str] = {}
    operands: list[np.ndarray] = []
    subs: list[str] = []

    def var(key):
        if key not in sym:
            sym[key] = next(letters)
        return sym[key]

    mu = state_marginals(chain, pib, t_lo + 1)[t_lo]
    operands.append(mu)
    subs.append(var(("s", t_lo)))
    if ("z", -1) in variables:
        if t_lo != 0:
            raise ValueError("pre-observation requires the window to start at t=0")
        operands.append(chain.pre)
        subs.append(var(("s", 0)) + var(("z", -1)))
    for t in range(t_lo, t_hi + 1):
        s = var(("s", t))
        a = var(("a", t))
        operands.append(pib[t])
        subs.append(s + a)
        if ("z", t) in variables or ("o", t) in variables:
            operands.append(chain.obs_emit)
            subs.append(s + var(("z", t)) + var(("o", t)))
        if ("r", t) in variables:
            operands.append(chain.reward_onehot)
            subs.append(s + a + var(("r", t)))
        if ("u", t) in variables:
            operands.append(chain.u_onehot)
            subs.append(s + var(("u", t)))
        if t < t_hi:
            operands.append(chain.trans)
            subs.append(a + s + var(("s", t + 1)))
    out = "".join(sym[v] for v in variables)
    expr = ",".join(subs) + "->" + out
    return np.einsum(expr, *operands, optimize=True)
