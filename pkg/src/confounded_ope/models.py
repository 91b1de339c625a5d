"""Tabular POMDP / Decoupled POMDP containers, policies and trajectory records."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

PROB_TOL = 1e-12


class InvalidModelError(ValueError):
    """Raised when an operation receives a model or policy that fails validation."""


class PolicyContextError(ValueError):
    """Raised when a policy is queried with the wrong context kind or step."""


def _frozen(x, dtype=float) -> np.ndarray:
    arr = np.array(x, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SpaceSpec:
    n_u: int
    n_z: int
    n_a: int
    reward_values: tuple[float, ...]
    n_o: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "reward_values", tuple(float(r) for r in self.reward_values))

    @property
    def n_r(self) -> int:
        return len(self.reward_values)

    def issues(self, decoupled: bool = False) -> list[str]:
        out = []
        for name in ("n_u", "n_z", "n_a"):
            if int(getattr(self, name)) < 1:
                out.append(f"spaces.{name} must be >= 1 (got {getattr(self, name)})")
        if decoupled:
            if self.n_o is None or int(self.n_o) < 1:
                out.append(f"spaces.n_o must be >= 1 for a decoupled model (got {self.n_o})")
        rv = np.asarray(self.reward_values, dtype=float)
        if rv.size == 0:
            out.append("spaces.reward_values is empty")
        elif not np.all(np.isfinite(rv)):
            out.append("spaces.reward_values contains non-finite entries")
        elif np.any(np.diff(rv) <= 0):
            out.append("spaces.reward_values must be strictly increasing")
        return out


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.issues

    def __bool__(self) -> bool:  # truthy iff there is something to report
        return bool(self.issues)

    def __iter__(self):
        return iter(self.issues)

    def __len__(self):
        return len(self.issues)


def _check_stochastic(name: str, arr: np.ndarray, axis_labels: Sequence[str], out: list[str]):
    """Append an issue for every slice along the last axis that is not a distribution."""
    if np.any(~np.isfinite(arr)):
        out.append(f"{name}: non-finite entries")
        return
    bad = np.argwhere((arr < -PROB_TOL) | (arr > 1 + PROB_TOL))
    for idx in bad[:10]:
        out.append(f"{name}{_loc(axis_labels, idx)}: entry {arr[tuple(idx)]!r} outside [0,1]")
    sums = arr.sum(axis=-1)
    for idx in np.argwhere(np.abs(sums - 1.0) > PROB_TOL)[:10]:
        out.append(
            f"{name}{_loc(axis_labels[:-1], idx)}: slice sums to {sums[tuple(idx)]:.15g}, expected 1"
        )


def _loc(labels: Sequence[str], idx) -> str:
    return "[" + ", ".join(f"{l}={int(i)}" for l, i in zip(labels, idx)) + "]"


def _check_shape(name: str, arr: np.ndarray, shape: tuple[int, ...], out: list[str]) -> bool:
    if arr.shape != shape:
        out.append(f"{name}: shape {arr.shape}, expected {shape}")
        return False
    return True


def _check_gamma(gamma: float, out: list[str]):
    if not (0.0 < float(gamma) < 1.0):
        out.append(f"gamma must lie strictly inside (0,1) (got {gamma})")


def _check_reward(name, reward, shape, n_r, out):
    if not _check_shape(name, reward, shape, out):
        return
    bad = np.argwhere((reward < 0) | (reward >= n_r))
    for idx in bad[:10]:
        out.append(f"{name}{list(map(int, idx))}: index {int(reward[tuple(idx)])} not in reward_values")


@dataclass(frozen=True, eq=False)
class TabularPOMDP:
    """POMDP with hidden state u, observation z and a pre-observation z_{-1} ~ P(.|u_0).

    Array layouts: ``transition[a, u, u']``, ``observation[u, z]``,
    ``pre_observation[u, z]``, ``reward[u, a]`` (index into ``reward_values``),
    ``init[u]``.
    """

    spaces: SpaceSpec
    transition: np.ndarray
    observation: np.ndarray
    reward: np.ndarray
    gamma: float
    init: np.ndarray
    pre_observation: np.ndarray | None = None
    name: str = ""

    kind = "pomdp"

    def __post_init__(self):
        object.__setattr__(self, "transition", _frozen(self.transition))
        object.__setattr__(self, "observation", _frozen(self.observation))
        pre = self.observation if self.pre_observation is None else self.pre_observation
        object.__setattr__(self, "pre_observation", _frozen(pre))
        object.__setattr__(self, "reward", _frozen(self.reward, dtype=np.int64))
        object.__setattr__(self, "init", _frozen(self.init))
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def reward_table(self) -> np.ndarray:
        """Reward values r(u, a) as floats."""
        return np.asarray(self.spaces.reward_values)[self.reward]


@dataclass(frozen=True, eq=False)
class TabularDPOMDP:
    """Decoupled POMDP: observed chain z, unobserved chain u emitting o.

    Array layouts: ``transition[a, z, u, z', u']``, ``independent_observation[u, o]``,
    ``reward[u, z, a]`` (index into ``reward_values``), ``init[z_{-1}, z_0, u_0]``.
    """

    spaces: SpaceSpec
    transition: np.ndarray
    independent_observation: np.ndarray
    reward: np.ndarray
    gamma: float
    init: np.ndarray
    name: str = ""

    kind = "dpomdp"

    def __post_init__(self):
        object.__setattr__(self, "transition", _frozen(self.transition))
        object.__setattr__(self, "independent_observation", _frozen(self.independent_observation))
        object.__setattr__(self, "reward", _frozen(self.reward, dtype=np.int64))
        object.__setattr__(self, "init", _frozen(self.init))
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def reward_table(self) -> np.ndarray:
        return np.asarray(self.spaces.reward_values)[self.reward]


Model = TabularPOMDP | TabularDPOMDP


def validate_pomdp(m: TabularPOMDP) -> ValidationReport:
    out: list[str] = []
    sp = m.spaces
    out += sp.issues()
    if out:
        return ValidationReport(tuple(out))
    nu, nz, na = sp.n_u, sp.n_z, sp.n_a
    if _check_shape("transition", m.transition, (na, nu, nu), out):
        _check_stochastic("transition", m.transition, ("a", "u", "u'"), out)
    if _check_shape("observation", m.observation, (nu, nz), out):
        _check_stochastic("observation", m.observation, ("u", "z"), out)
    if _check_shape("pre_observation", m.pre_observation, (nu, nz), out):
        _check_stochastic("pre_observation", m.pre_observation, ("u", "z"), out)
    _check_reward("reward", m.reward, (nu, na), sp.n_r, out)
    _check_gamma(m.gamma, out)
    if _check_shape("init", m.init, (nu,), out):
        _check_stochastic("init", m.init, ("u",), out)
    return ValidationReport(tuple(out))


def validate_dpomdp(m: TabularDPOMDP) -> ValidationReport:
    out: list[str] = []
    sp = m.spaces
    out += sp.issues(decoupled=True)
    if out:
        return ValidationReport(tuple(out))
    nu, nz, no, na = sp.n_u, sp.n_z, sp.n_o, sp.n_a
    if _check_shape("transition", m.transition, (na, nz, nu, nz, nu), out):
        flat = m.transition.reshape(na, nz, nu, nz * nu)
        _check_stochastic("transition", flat, ("a", "z", "u", "(z',u')"), out)
    if _check_shape("independent_observation", m.independent_observation, (nu, no), out):
        _check_stochastic("independent_observation", m.independent_observation, ("u", "o"), out)
    _check_reward("reward", m.reward, (nu, nz, na), sp.n_r, out)
    _check_gamma(m.gamma, out)
    if _check_shape("init", m.init, (nz, nz, nu), out):
        _check_stochastic("init", m.init.reshape(-1), ("(z-1,z0,u0)",), out)
    return ValidationReport(tuple(out))


def validate(m: Model) -> ValidationReport:
    if isinstance(m, TabularDPOMDP):
        return validate_dpomdp(m)
    return validate_pomdp(m)


def require_valid(m: Model) -> None:
    report = validate(m)
    if not report.ok:
        raise InvalidModelError("invalid model: " + "; ".join(report.issues[:5]))


# ---------------------------------------------------------------------------
# policies


class ObservableHistory(NamedTuple):
    """h_t = (z_0, [o_0], a_0, ..., z_t, [o_t]); ``o`` is None for plain POMDPs."""

    z: tuple[int, ...]
    a: tuple[int, ...]
    o: tuple[int, ...] | None = None

    @property
    def t(self) -> int:
        return len(self.z) - 1


@dataclass(frozen=True, eq=False)
class BehaviorPolicy:
    """Time-indexed tables pi_b[t][u, a] (POMDP) or pi_b[t][u, z, a] (decoupled)."""

    tables: np.ndarray

    kind = "behavior"

    def __post_init__(self):
        object.__setattr__(self, "tables", _frozen(self.tables))

    @property
    def horizon(self) -> int:
        """Number of steps covered (L + 1)."""
        return self.tables.shape[0]

    @property
    def decoupled(self) -> bool:
        return self.tables.ndim == 4

    @classmethod
    def stationary(cls, table, steps: int) -> "BehaviorPolicy":
        table = np.asarray(table, dtype=float)
        return cls(np.broadcast_to(table, (steps,) + table.shape).copy())


@dataclass(frozen=True, eq=False)
class MemorylessPolicy:
    """Time-indexed tables pi_e[t][z, a] (POMDP) or pi_e[t][z, o, a] (decoupled)."""

    tables: np.ndarray

    kind = "eval_memoryless"

    def __post_init__(self):
        object.__setattr__(self, "tables", _frozen(self.tables))

    @property
    def horizon(self) -> int:
        return self.tables.shape[0]

    @property
    def decoupled(self) -> bool:
        return self.tables.ndim == 4

    @classmethod
    def stationary(cls, table, steps: int) -> "MemorylessPolicy":
        table = np.asarray(table, dtype=float)
        return cls(np.broadcast_to(table, (steps,) + table.shape).copy())

    def dist(self, t: int, history: ObservableHistory) -> np.ndarray:
        z = history.z[-1]
        if self.decoupled:
            return self.tables[t, z, history.o[-1]]
        return self.tables[t, z]


@dataclass(frozen=True, eq=False)
class GeneralPolicy:
    """Evaluation policy given by a pure function ``fn(t, history) -> action distribution``."""

    fn: Callable[[int, ObservableHistory], Sequence[float]]
    horizon: int
    n_a: int

    kind = "eval_general"

    def dist(self, t: int, history: ObservableHistory) -> np.ndarray:
        p = np.asarray(self.fn(t, history), dtype=float)
        if p.shape != (self.n_a,) or abs(p.sum() - 1.0) > PROB_TOL or np.any(p < -PROB_TOL):
            raise PolicyContextError(f"general policy returned an invalid distribution at t={t}: {p}")
        return p


EvaluationPolicy = MemorylessPolicy | GeneralPolicy


def policy_action_dist(policy, t: int, context) -> np.ndarray:
    """Action distribution of ``policy`` at step ``t``.

    Behaviour policies take a hidden context (``u`` or ``(u, z)``); evaluation
    policies take an :class:`ObservableHistory`.
    """
    if not 0 <= t < policy.horizon:
        raise PolicyContextError(f"step {t} outside policy horizon 0..{policy.horizon - 1}")
    if isinstance(policy, BehaviorPolicy):
        if isinstance(context, ObservableHistory):
            raise PolicyContextError("behavior policy needs a hidden-state context, got a history")
        idx = tuple(np.atleast_1d(context).astype(int))
        if len(idx) != policy.tables.ndim - 2:
            raise PolicyContextError(f"behavior policy expects {policy.tables.ndim - 2} context indices")
        return policy.tables[(t,) + idx]
    if not isinstance(context, ObservableHistory):
        raise PolicyContextError("evaluation policy needs an ObservableHistory context")
    if context.t != t:
        raise PolicyContextError(f"history length {context.t} does not match step {t}")
    return policy.dist(t, context)


def validate_policy(policy, model: Model, steps: int | None = None) -> ValidationReport:
    """Check table shapes against ``model`` and that every row is a distribution."""
    out: list[str] = []
    sp = model.spaces
    dec = isinstance(model, TabularDPOMDP)
    if steps is not None and policy.horizon < steps:
        out.append(f"policy covers {policy.horizon} steps, need {steps}")
    if isinstance(policy, BehaviorPolicy):
        ctx = (sp.n_u, sp.n_z) if dec else (sp.n_u,)
        labels = ("t", "u", "z", "a") if dec else ("t", "u", "a")
    elif isinstance(policy, MemorylessPolicy):
        ctx = (sp.n_z, sp.n_o) if dec else (sp.n_z,)
        labels = ("t", "z", "o", "a") if dec else ("t", "z", "a")
    else:
        if policy.n_a != sp.n_a:
            out.append(f"policy has n_a={policy.n_a}, model has {sp.n_a}")
        return ValidationReport(tuple(out))
    if _check_shape("policy", policy.tables, (policy.horizon,) + ctx + (sp.n_a,), out):
        _check_stochastic("policy", policy.tables, labels, out)
    return ValidationReport(tuple(out))


def require_valid_policy(policy, model: Model, steps: int | None = None) -> None:
    report = validate_policy(policy, model, steps)
    if not report.ok:
        raise InvalidModelError("invalid policy: " + "; ".join(report.issues[:5]))


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class ObservableRecord:
    z_pre: int
    z: tuple[int, ...]
    a: tuple[int, ...]
    r: tuple[int, ...]
    o: tuple[int, ...] | None = None


@dataclass(frozen=True)
class Trajectory:
    """One behaviour rollout; ``r`` holds indices into the model's reward_values."""

    z_pre: int
    u: tuple[int, ...]
    z: tuple[int, ...]
    a: tuple[int, ...]
    r: tuple[int, ...]
    o: tuple[int, ...] | None = None

    def observable(self) -> ObservableRecord:
        return ObservableRecord(z_pre=self.z_pre, z=self.z, a=self.a, r=self.r, o=self.o)


# ---------------------------------------------------------------------------
# embedding


def embed_dpomdp_as_pomdp(m: TabularDPOMDP) -> TabularPOMDP:
    """View a decoupled model as a POMDP over hidden (u, z) with observations (z, o).

    Hidden index is ``u * n_z + z`` and observation index ``z * n_o + o``.  The
    pre-observation of the embedded model is ``(z_{-1}, o~)`` where ``z_{-1}`` is
    drawn from the original init joint given ``(z_0, u_0)`` and ``o~`` is a fresh
    draw from the independent observation kernel of ``u_0``.
    """
    require_valid(m)
    sp = m.spaces
    nu, nz, no, na = sp.n_u, sp.n_z, sp.n_o, sp.n_a
    ns, ny = nu * nz, nz * no
    # transition[a, z, u, z', u'] -> [a, (u,z), (u',z')]
    trans = m.transition.transpose(0, 2, 1, 4, 3).reshape(na, ns, ns)
    obs = np.zeros((nu, nz, nz, no))
    for z in range(nz):
        obs[:, z, z, :] = m.independent_observation
    obs = obs.reshape(ns, ny)
    joint0 = m.init.transpose(2, 1, 0)  # [u0, z0, z-1]
    mu0 = joint0.sum(axis=2)
    with np.errstate(invalid="ignore", divide="ignore"):
        cond = np.where(mu0[..., None] > 0, joint0 / mu0[..., None], 1.0 / nz)
    pre = np.einsum("uzy,uo->uzyo", cond, m.independent_observation).reshape(ns, ny)
    reward = m.reward.reshape(ns, na)
    spaces = SpaceSpec(n_u=ns, n_z=ny, n_a=na, reward_values=sp.reward_values)
    return TabularPOMDP(
        spaces=spaces,
        transition=trans,
        observation=obs,
        pre_observation=pre,
        reward=reward,
        gamma=m.gamma,
        init=mu0.reshape(ns),
        name=f"embedded({m.name})" if m.name else "embedded",
    )


def embed_behavior_policy(pi_b: BehaviorPolicy) -> BehaviorPolicy:
    """Decoupled behaviour tables [t, u, z, a] -> embedded [t, (u,z), a]."""
    t, nu, nz, na = pi_b.tables.shape
    return BehaviorPolicy(pi_b.tables.reshape(t, nu * nz, na))


def embed_eval_policy(pi_e: EvaluationPolicy, n_o: int) -> EvaluationPolicy:
    """Decoupled evaluation policy -> policy over embedded observations (z, o)."""
    if isinstance(pi_e, MemorylessPolicy):
        t, nz, no, na = pi_e.tables.shape
        return MemorylessPolicy(pi_e.tables.reshape(t, nz * no, na))

    def fn(t, h: ObservableHistory, _inner=pi_e):
        z = tuple(y // n_o for y in h.z)
        o = tuple(y % n_o for y in h.z)
        return _inner.dist(t, ObservableHistory(z=z, a=h.a, o=o))

    return GeneralPolicy(fn=fn, horizon=pi_e.horizon, n_a=pi_e.n_a)
