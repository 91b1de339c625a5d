"""Exact evaluation from full model knowledge.

Everything here uses the model tables directly and is used as ground truth
for the estimators and for the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._chain import Chain, chain_of, check_policy, state_marginals
from .models import BehaviorPolicy, GeneralPolicy, MemorylessPolicy, ObservableHistory
from .probtables import (
    PopulationSource,
    d_o_given_zaU,
    d_o_given_zaZ,
    d_ooz_given,
    d_u_given_aZ,
    d_u_given_zaZ,
    d_uoz_given,
    d_uz_given_a_zprev2,
    d_z_given_a_zprev,
    d_z_given_aU,
    d_zz_given_a_zprev2,
    population_matrix,
)

DEFAULT_BUDGET = 10**8

__all__ = [
    "BudgetExceededError",
    "RewardDistribution",
    "ValueResult",
    "IdentityReport",
    "exact_value",
    "exact_reward_dist",
    "composite_reward_dist",
    "population_matrix",
    "verify_lemma_identities",
    "monte_carlo_value",
]


class BudgetExceededError(RuntimeError):
    """An exact enumeration would need more terms than the configured budget."""


@dataclass(frozen=True, eq=False)
class RewardDistribution:
    """P(r_t = v) for each support value v."""

    t: int
    values: np.ndarray
    probs: np.ndarray

    def as_dict(self) -> dict[float, float]:
        return {float(v): float(p) for v, p in zip(self.values, self.probs)}

    def mean(self) -> float:
        return float(self.values @ self.probs)

    def total(self) -> float:
        return float(self.probs.sum())


@dataclass(frozen=True, eq=False)
class ValueResult:
    v: float
    per_step: list[RewardDistribution]
    path: str = ""


def _value_from_steps(chain: Chain, dists: list[np.ndarray], path: str) -> ValueResult:
    steps = [RewardDistribution(t, chain.reward_values, p) for t, p in enumerate(dists)]
    v = sum(chain.gamma**t * s.mean() for t, s in enumerate(steps))
    return ValueResult(float(v), steps, path)


def _behavior_steps(chain: Chain, pib: np.ndarray, L: int) -> list[np.ndarray]:
    mus = state_marginals(chain, pib, L + 1)
    return [np.einsum("s,sa,sar->r", mus[t], pib[t], chain.reward_onehot) for t in range(L + 1)]


def _memoryless_steps(chain: Chain, pie: np.ndarray, L: int) -> list[np.ndarray]:
    """Forward pass over the hidden state; a memoryless policy needs no history."""
    mu = chain.init.copy()
    out = []
    for t in range(L + 1):
        # P(s, a) = mu(s) sum_{z,o} E(z,o|s) pi(a|z,o)
        sa = mu[:, None] * np.einsum("szo,zoa->sa", chain.obs_emit, pie[t])
        out.append(np.einsum("sa,sar->r", sa, chain.reward_onehot))
        if t < L:
            mu = np.einsum("sa,asq->q", sa, chain.trans)
    return out


def _enumerate_steps(chain: Chain, policy, L: int, budget: int) -> list[np.ndarray]:
    """Sum over observable histories carrying P(h_t, s_t) vectors.

    This is the direct product-of-kernels factorisation of P^e(tau); every
    observable history is kept separately so any history-dependent policy works.
    """
    ns, nz, no, na = chain.n_s, chain.n_z, chain.n_o, chain.n_a
    per_step_cost = nz * no * na * ns * ns
    hist: list[tuple[tuple, tuple, tuple, np.ndarray]] = [((), (), (), chain.init.copy())]
    out, used = [], 0
    for t in range(L + 1):
        used += len(hist) * per_step_cost
        if used > budget:
            raise BudgetExceededError(f"history enumeration needs more than {budget} terms at step {t}")
        dist = np.zeros(chain.n_r)
        nxt = []
        for zs, os_, as_, alpha in hist:
            for z in range(nz):
                for o in range(no):
                    a_obs = alpha * chain.obs_emit[:, z, o]
                    if not a_obs.any():
                        continue
                    h = ObservableHistory(z=zs + (z,), a=as_, o=(os_ + (o,)) if chain.decoupled else None)
                    pi = policy.dist(t, h)
                    dist += np.einsum("s,a,sar->r", a_obs, pi, chain.reward_onehot)
                    if t == L:
                        continue
                    for a in np.flatnonzero(pi > 0):
                        nxt.append((h.z, os_ + (o,), as_ + (int(a),), (a_obs * pi[a]) @ chain.trans[a]))
        out.append(dist)
        hist = nxt
    return out


def exact_value(model, policy, L: int, budget: int = DEFAULT_BUDGET) -> ValueResult:
    """Exact discounted value over steps 0..L.

    Behaviour policies and memoryless evaluation policies use a forward pass
    over hidden states; general evaluation policies enumerate observable
    histories and refuse when the enumeration would exceed ``budget`` terms.
    The path taken is reported in ``ValueResult.path``.
    """
    chain = chain_of(model)
    if isinstance(policy, BehaviorPolicy):
        check_policy(model, policy, L + 1)
        return _value_from_steps(chain, _behavior_steps(chain, chain.behavior_tables(policy), L), "behavior-forward")
    if isinstance(policy, MemorylessPolicy):
        check_policy(model, policy, L + 1)
        return _value_from_steps(chain, _memoryless_steps(chain, chain.eval_tables(policy), L), "memoryless-forward")
    if isinstance(policy, GeneralPolicy):
        check_policy(model, policy, L + 1)
        return _value_from_steps(chain, _enumerate_steps(chain, policy, L, budget), "history-enumeration")
    raise TypeError(f"unsupported policy type {type(policy).__name__}")


def exact_reward_dist(model, eval_policy, t: int, budget: int = DEFAULT_BUDGET) -> RewardDistribution:
    """P^e(r_t) by explicit history enumeration (any evaluation policy).

    A behaviour policy is also accepted and handled by the forward pass.
    """
    chain = chain_of(model)
    if isinstance(eval_policy, BehaviorPolicy):
        check_policy(model, eval_policy, t + 1)
        probs = _behavior_steps(chain, chain.behavior_tables(eval_policy), t)[t]
    else:
        check_policy(model, eval_policy, t + 1)
        probs = _enumerate_steps(chain, eval_policy, t, budget)[t]
    return RewardDistribution(t, chain.reward_values, probs)


def composite_reward_dist(model, behavior_policy: BehaviorPolicy, eval_policy: MemorylessPolicy, L: int) -> RewardDistribution:
    """P(r_L) when ``behavior_policy`` acts for t < L and ``eval_policy`` acts at L."""
    chain = chain_of(model)
    check_policy(model, behavior_policy, L + 1)
    check_policy(model, eval_policy, L + 1)
    mu = state_marginals(chain, chain.behavior_tables(behavior_policy), L + 1)[L]
    pie = chain.eval_tables(eval_policy)[L]
    sa = mu[:, None] * np.einsum("szo,zoa->sa", chain.obs_emit, pie)
    return RewardDistribution(L, chain.reward_values, np.einsum("sa,sar->r", sa, chain.reward_onehot))


# ---------------------------------------------------------------------------
# identity checks


@dataclass
class IdentityReport:
    t: int
    residuals: dict[str, float] = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values()) if self.residuals else 0.0

    def ok(self, tol: float = 1e-10) -> bool:
        return self.max_residual <= tol


def _v(m) -> np.ndarray:
    # a conditional on a zero-probability hidden context is NaN; such columns
    # only ever multiply zero mass in the identities below
    return np.nan_to_num(m.values, nan=0.0)


def _res(lhs: np.ndarray, rhs: np.ndarray) -> float:
    mask = ~np.isnan(rhs)
    return float(np.max(np.abs(lhs - rhs)[mask])) if mask.any() else 0.0


def verify_lemma_identities(model, behavior_policy: BehaviorPolicy, t: int) -> IdentityReport:
    """Max residuals of the proxy factorisation identities at step ``t``.

    ``multiplication``: P(Z_t|a_t,U_t) P(U_t,z_{t-1}|a_{t-1},Z_{t-2}) = P(Z_t,z_{t-1}|a_{t-1},Z_{t-2}).
    ``inverse-factor``: P(Z_t|a_t,Z_{t-1}) = P(Z_t|a_t,U_t) P(U_t|a_t,Z_{t-1}).
    Decoupled models get the same pair with O_t as the proxy instead of Z_t.
    """
    if t < 1:
        raise ValueError("identities are stated for t >= 1")
    src = PopulationSource(model, behavior_policy, t)
    rep = IdentityReport(t)
    n_z, n_a, n_o = src.n_z, src.n_a, src.n_o
    if not src.decoupled:
        mult, inv = 0.0, 0.0
        for a in range(n_a):
            A = _v(src.matrix(d_z_given_aU(t, a)))
            inv = max(inv, _res(A @ _v(src.matrix(d_u_given_aZ(t, a))), src.matrix(d_z_given_a_zprev(t, a)).values))
            for zp in range(n_z):
                for ap in range(n_a):
                    rhs = src.matrix(d_zz_given_a_zprev2(t, zp, ap)).values
                    lhs = A @ _v(src.matrix(d_uz_given_a_zprev2(t, zp, ap)))
                    mult = max(mult, _res(lhs, rhs))
        rep.residuals["multiplication"] = mult
        rep.residuals["inverse-factor"] = inv
        return rep
    mult, inv = 0.0, 0.0
    for z in range(n_z):
        for a in range(n_a):
            A = _v(src.matrix(d_o_given_zaU(t, z, a)))
            inv = max(inv, _res(A @ _v(src.matrix(d_u_given_zaZ(t, z, a))), src.matrix(d_o_given_zaZ(t, z, a)).values))
            for op in range(n_o):
                for zp in range(n_z):
                    for ap in range(n_a):
                        rhs = src.matrix(d_ooz_given(t, op, z, zp, ap)).values
                        lhs = A @ _v(src.matrix(d_uoz_given(t, op, z, zp, ap)))
                        mult = max(mult, _res(lhs, rhs))
    rep.residuals["multiplication-decoupled"] = mult
    rep.residuals["inverse-factor-decoupled"] = inv
    return rep


# ---------------------------------------------------------------------------
# Monte Carlo


def monte_carlo_value(model, eval_policy, L: int, n: int, seed: int, threads: int = 1) -> tuple[float, float]:
    """Mean discounted return of ``n`` rollouts under ``eval_policy`` and its standard error."""
    if n <= 0:
        raise ValueError("n must be positive")
    from .simulate import eval_rollouts

    chain, r = eval_rollouts(model, eval_policy, L, n, seed, threads=threads)
    ret = chain.reward_values[r] @ (chain.gamma ** np.arange(L + 1))
    se = float(ret.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return float(ret.mean()), se
