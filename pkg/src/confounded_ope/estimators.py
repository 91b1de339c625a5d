"""Off-policy estimators: proxy-matrix identification, importance sampling,
and the sufficient-condition check for unbiased naive IS."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ._chain import chain_of, check_policy
from .models import (
    BehaviorPolicy,
    GeneralPolicy,
    MemorylessPolicy,
    ObservableHistory,
)
from .oracle import DEFAULT_BUDGET, BudgetExceededError, RewardDistribution
from .probtables import (
    DEFAULT_COND_CAP,
    IndexSets,
    MatrixSource,
    PopulationSource,
    SingularMatrixError,
    as_arrays,
    behavior_action_probs,
    d_o_given_z,
    d_o_given_zaZ,
    d_ooz_given,
    d_ro_given_zaZ,
    d_rz_given_a_zprev,
    d_z_given_a_zprev,
    d_z_marginal,
    d_zz_given_a_zprev2,
    select_index_sets,
    solve_weights,
)


@dataclass
class EstimateRecord:
    """Estimated per-step reward distributions and their discounted value."""

    method: str
    v: float
    per_step: list[np.ndarray]
    reward_values: np.ndarray
    gamma: float
    diagnostics: dict = field(default_factory=dict)

    @classmethod
    def build(cls, method, per_step, reward_values, gamma, **diag) -> "EstimateRecord":
        rv = np.asarray(reward_values, dtype=float)
        v = float(sum(gamma**t * float(rv @ p) for t, p in enumerate(per_step)))
        diag.setdefault("normalization_residual", [abs(float(p.sum()) - 1.0) for p in per_step])
        return cls(method, v, [np.asarray(p, dtype=float) for p in per_step], rv, float(gamma), diag)

    @property
    def max_normalization_residual(self) -> float:
        return max(self.diagnostics.get("normalization_residual", [0.0]))

    def renormalized(self) -> "EstimateRecord":
        """Copy with each step clipped to [0, 1] and rescaled to sum to one (for plotting)."""
        steps = []
        for p in self.per_step:
            q = np.clip(p, 0.0, None)
            steps.append(q / q.sum() if q.sum() > 0 else q)
        return EstimateRecord.build(self.method, steps, self.reward_values, self.gamma, **dict(self.diagnostics))

    def reward_distributions(self) -> list[RewardDistribution]:
        return [RewardDistribution(t, self.reward_values, p) for t, p in enumerate(self.per_step)]

    def to_json(self) -> dict:
        def clean(x):
            if isinstance(x, float) and not math.isfinite(x):
                return None
            if isinstance(x, np.generic):
                return clean(x.item())
            if isinstance(x, (list, tuple)):
                return [clean(y) for y in x]
            if isinstance(x, dict):
                return {k: clean(y) for k, y in x.items()}
            return x

        return clean({
            "method": self.method,
            "v": self.v,
            "gamma": self.gamma,
            "reward_values": self.reward_values.tolist(),
            "per_step": [p.tolist() for p in self.per_step],
            "diagnostics": self.diagnostics,
        })


class _Tracker:
    """Collects condition numbers and dropped-context counts while solving."""

    def __init__(self, ridge: float, cond_cap: float):
        self.ridge, self.cond_cap = ridge, cond_cap
        self.worst = 0.0
        self.dropped = 0

    def solve(self, A, B) -> np.ndarray | None:
        if A.nan_columns.size:
            self.dropped += 1
            return None
        x, cond = solve_weights(A, B, ridge=self.ridge, cond_cap=self.cond_cap)
        self.worst = max(self.worst, cond)
        return x

    def clean(self, m) -> np.ndarray:
        """Matrix values with unobserved columns zeroed (and counted)."""
        if m.nan_columns.size:
            self.dropped += 1
            return np.nan_to_num(m.values, nan=0.0)
        return m.values


def _policy_tables(source: MatrixSource, pi_e, L: int) -> np.ndarray:
    """pi_e as [t, z, o, a] (o axis of size one for POMDPs)."""
    tab = np.asarray(pi_e.tables)
    if pi_e.horizon < L + 1:
        raise ValueError(f"evaluation policy covers {pi_e.horizon} steps, need {L + 1}")
    return tab if source.decoupled else tab[:, :, None, :]


def _check_source(source: MatrixSource, pi_e, decoupled: bool, L: int):
    if source.decoupled != decoupled:
        raise ValueError("matrix source kind does not match the estimator")
    if L > source.horizon:
        raise ValueError(f"L={L} exceeds the source horizon {source.horizon}")
    if isinstance(source, PopulationSource):
        check_policy(source.model, pi_e, L + 1)


def _history(zs, os_, as_, decoupled):
    return ObservableHistory(z=tuple(zs), a=tuple(as_), o=tuple(os_) if decoupled else None)


# ---------------------------------------------------------------------------
# POMDP proxy estimator


class _Theorem1Mats:
    """Lazily solved weight matrices for the POMDP chain."""

    def __init__(self, src: MatrixSource, tr: _Tracker):
        self.src, self.tr = src, tr
        self._M: dict = {}
        self._W: dict = {}

    def W0(self, a):
        key = (0, a)
        if key not in self._W:
            pz0 = self.tr.clean(self.src.matrix(d_z_marginal(0)))
            self._W[key] = self.tr.solve(self.src.matrix(d_z_given_a_zprev(0, a)), pz0[:, 0])
        return self._W[key]

    def Wi(self, i, a, z_prev, a_prev):
        key = (i, a, z_prev, a_prev)
        if key not in self._W:
            B = self.tr.clean(self.src.matrix(d_zz_given_a_zprev2(i, z_prev, a_prev)))
            self._W[key] = self.tr.solve(self.src.matrix(d_z_given_a_zprev(i, a)), B)
        return self._W[key]

    def final(self, t, a):
        """P(r_t, z_t | a_t, Z_{t-1}) as [r, z, Z_{t-1}]."""
        m = self.tr.clean(self.src.matrix(d_rz_given_a_zprev(t, a)))
        return m.reshape(self.src.n_r, self.src.n_z, -1)


def _theorem1_dp(src, mats: _Theorem1Mats, pie, L):
    nz, na, nr = src.n_z, src.n_a, src.n_r
    out = []
    psi = {a: mats.W0(a) for a in range(na)}
    for t in range(L + 1):
        if t > 0:
            new = {}
            for a in range(na):
                acc = None
                for ap in range(na):
                    if psi[ap] is None:
                        continue
                    for zp in range(nz):
                        w = pie[t - 1, zp, 0, ap]
                        if w == 0:
                            continue
                        W = mats.Wi(t, a, zp, ap)
                        if W is None:
                            continue
                        term = w * (W @ psi[ap])
                        acc = term if acc is None else acc + term
                new[a] = acc
            psi = new
        dist = np.zeros(nr)
        for a in range(na):
            if psi[a] is None:
                continue
            F = mats.final(t, a)  # [r, z, zprev]
            dist += np.einsum("z,rzy,y->r", pie[t, :, 0, a], F, psi[a])
        out.append(dist)
    return out


def _theorem1_enum(src, mats: _Theorem1Mats, policy, L, budget):
    nz, na, nr = src.n_z, src.n_a, src.n_r
    out = []
    for t in range(L + 1):
        n_terms = (nz * na) ** (t + 1)
        if n_terms * (t + 1) * nz * nz > budget:
            raise BudgetExceededError(f"explicit sum over {n_terms} observable trajectories exceeds the budget")
        dist = np.zeros(nr)
        for path in itertools.product(range(nz), range(na), repeat=t + 1):
            zs, as_ = path[0::2], path[1::2]
            pi = 1.0
            for i in range(t + 1):
                pi *= policy.dist(i, _history(zs[: i + 1], (), as_[:i], False))[as_[i]]
                if pi == 0:
                    break
            if pi == 0:
                continue
            omega = mats.W0(as_[0])
            for i in range(1, t + 1):
                if omega is None:
                    break
                W = mats.Wi(i, as_[i], zs[i - 1], as_[i - 1])
                omega = None if W is None else W @ omega
            if omega is None:
                continue
            F = mats.final(t, as_[t])[:, zs[t], :]
            dist += pi * (F @ omega)
        out.append(dist)
    return out


def theorem1_value(source: MatrixSource, eval_policy, L: int | None = None, gamma: float | None = None,
                   path: str = "auto", ridge: float = 0.0, cond_cap: float = DEFAULT_COND_CAP,
                   budget: int = DEFAULT_BUDGET) -> EstimateRecord:
    """Proxy-based value of ``eval_policy`` in a POMDP from behaviour matrices.

    ``path`` is ``"dp"`` (memoryless policies), ``"enumerate"`` (explicit sum
    over observable trajectories, any policy) or ``"auto"``.
    """
    L = source.horizon if L is None else L
    gamma = source.gamma if gamma is None else gamma
    _check_source(source, eval_policy, False, L)
    tr = _Tracker(ridge, cond_cap)
    mats = _Theorem1Mats(source, tr)
    if path == "auto":
        path = "dp" if isinstance(eval_policy, MemorylessPolicy) else "enumerate"
    if path == "dp":
        if not isinstance(eval_policy, MemorylessPolicy):
            raise TypeError("the dynamic program needs a memoryless evaluation policy")
        steps = _theorem1_dp(source, mats, _policy_tables(source, eval_policy, L), L)
    elif path == "enumerate":
        steps = _theorem1_enum(source, mats, eval_policy, L, budget)
    else:
        raise ValueError(f"unknown path {path!r}")
    return EstimateRecord.build("theorem1", steps, source.reward_values, gamma,
                                worst_condition=tr.worst, dropped=tr.dropped, path=path)


# ---------------------------------------------------------------------------
# decoupled proxy estimator


class _Theorem2Mats:
    def __init__(self, src: MatrixSource, sets: IndexSets, tr: _Tracker):
        self.src, self.sets, self.tr = src, sets, tr
        self._G: dict = {}

    def G0(self, z, a):
        key = (0, z, a)
        if key not in self._G:
            s = self.src
            K, J = self.sets.k(0), self.sets.j(-1)
            pz = self.tr.clean(s.matrix(d_z_marginal(0)))[z, 0]
            po = self.tr.clean(s.matrix(d_o_given_z(0, z)))[list(K), 0]
            A = s.matrix(d_o_given_zaZ(0, z, a)).subset(K, J)
            self._G[key] = self.tr.solve(A, po * pz)
        return self._G[key]

    def Gi(self, i, z, a, o_prev, z_prev, a_prev):
        key = (i, z, a, o_prev, z_prev, a_prev)
        if key not in self._G:
            s = self.src
            K, J1, J2 = self.sets.k(i), self.sets.j(i - 1), self.sets.j(i - 2)
            B = s.matrix(d_ooz_given(i, o_prev, z, z_prev, a_prev)).subset(K, J2)
            A = s.matrix(d_o_given_zaZ(i, z, a)).subset(K, J1)
            self._G[key] = self.tr.solve(A, self.tr.clean(B))
        return self._G[key]

    def final(self, t, z, a):
        """P_J(r_t, o_t | z_t, a_t, Z_{t-1}) as [r, o, |J_{t-1}|]."""
        m = self.src.matrix(d_ro_given_zaZ(t, z, a)).subset(None, self.sets.j(t - 1))
        return self.tr.clean(m).reshape(self.src.n_r, self.src.n_o, -1)


def _theorem2_dp(src, mats: _Theorem2Mats, pie, L):
    nz, na, no, nr = src.n_z, src.n_a, src.n_o, src.n_r
    out = []
    psi = {(z, a): mats.G0(z, a) for z in range(nz) for a in range(na)}
    for t in range(L + 1):
        if t > 0:
            new = {}
            for z in range(nz):
                for a in range(na):
                    acc = None
                    for (zp, ap), prev in psi.items():
                        if prev is None:
                            continue
                        for op in range(no):
                            w = pie[t - 1, zp, op, ap]
                            if w == 0:
                                continue
                            G = mats.Gi(t, z, a, op, zp, ap)
                            if G is None:
                                continue
                            term = w * (G @ prev)
                            acc = term if acc is None else acc + term
                    new[(z, a)] = acc
            psi = new
        dist = np.zeros(nr)
        for (z, a), vec in psi.items():
            if vec is None:
                continue
            dist += np.einsum("o,roy,y->r", pie[t, z, :, a], mats.final(t, z, a), vec)
        out.append(dist)
    return out


def _theorem2_enum(src, mats: _Theorem2Mats, policy, L, budget):
    nz, na, no, nr = src.n_z, src.n_a, src.n_o, src.n_r
    out = []
    for t in range(L + 1):
        n_terms = (nz * no * na) ** (t + 1)
        if n_terms * (t + 1) * src.n_u**2 > budget:
            raise BudgetExceededError(f"explicit sum over {n_terms} observable trajectories exceeds the budget")
        dist = np.zeros(nr)
        for path in itertools.product(range(nz), range(no), range(na), repeat=t + 1):
            zs, os_, as_ = path[0::3], path[1::3], path[2::3]
            pi = 1.0
            for i in range(t + 1):
                pi *= policy.dist(i, _history(zs[: i + 1], os_[: i + 1], as_[:i], True))[as_[i]]
                if pi == 0:
                    break
            if pi == 0:
                continue
            omega = mats.G0(zs[0], as_[0])
            for i in range(1, t + 1):
                if omega is None:
                    break
                G = mats.Gi(i, zs[i], as_[i], os_[i - 1], zs[i - 1], as_[i - 1])
                omega = None if G is None else G @ omega
            if omega is None:
                continue
            dist += pi * (mats.final(t, zs[t], as_[t])[:, os_[t], :] @ omega)
        out.append(dist)
    return out


def theorem2_value(source: MatrixSource, eval_policy, L: int | None = None, gamma: float | None = None,
                   index_sets: IndexSets | str = "auto", path: str = "auto", ridge: float = 0.0,
                   cond_cap: float = DEFAULT_COND_CAP, budget: int = DEFAULT_BUDGET) -> EstimateRecord:
    """Proxy-based value of ``eval_policy`` in a decoupled POMDP.

    ``index_sets`` is an :class:`IndexSets`, ``"auto"`` (condition-number
    driven selection) or ``"full"`` (first |U| indices; only sensible when
    |Z| = |O| = |U|).
    """
    L = source.horizon if L is None else L
    gamma = source.gamma if gamma is None else gamma
    _check_source(source, eval_policy, True, L)
    if isinstance(index_sets, str):
        if index_sets == "auto":
            index_sets = select_index_sets(source, L, cond_cap=cond_cap)
        elif index_sets == "full":
            index_sets = IndexSets.full(source.n_u, L)
        else:
            raise ValueError(f"unknown index_sets mode {index_sets!r}")
    index_sets.check(source.n_u, source.n_o, source.n_z, L)
    tr = _Tracker(ridge, cond_cap)
    mats = _Theorem2Mats(source, index_sets, tr)
    if path == "auto":
        path = "dp" if isinstance(eval_policy, MemorylessPolicy) else "enumerate"
    if path == "dp":
        if not isinstance(eval_policy, MemorylessPolicy):
            raise TypeError("the dynamic program needs a memoryless evaluation policy")
        steps = _theorem2_dp(source, mats, _policy_tables(source, eval_policy, L), L)
    elif path == "enumerate":
        steps = _theorem2_enum(source, mats, eval_policy, L, budget)
    else:
        raise ValueError(f"unknown path {path!r}")
    return EstimateRecord.build("theorem2", steps, source.reward_values, gamma, worst_condition=tr.worst,
                                dropped=tr.dropped, path=path, index_sets=index_sets.to_json())


# ---------------------------------------------------------------------------
# local (last-step) estimator


def proposition1_value(source: MatrixSource, eval_policy: MemorylessPolicy, L: int | None = None,
                       ridge: float = 0.0, cond_cap: float = DEFAULT_COND_CAP) -> RewardDistribution:
    """P(r_L) when the behaviour policy acts before step L and ``eval_policy`` acts at L."""
    L = source.horizon if L is None else L
    _check_source(source, eval_policy, False, L)
    if not isinstance(eval_policy, MemorylessPolicy):
        raise TypeError("the local estimator needs a memoryless evaluation policy")
    tr = _Tracker(ridge, cond_cap)
    pz = tr.clean(source.matrix(d_z_marginal(L)))[:, 0]
    pie = np.asarray(eval_policy.tables)[L]
    dist = np.zeros(source.n_r)
    for a in range(source.n_a):
        W = tr.solve(source.matrix(d_z_given_a_zprev(L, a)), pz)
        if W is None:
            continue
        F = tr.clean(source.matrix(d_rz_given_a_zprev(L, a))).reshape(source.n_r, source.n_z, -1)
        dist += np.einsum("z,rzy,y->r", pie[:, a], F, W)
    return RewardDistribution(L, np.asarray(source.reward_values, dtype=float), dist)


# ---------------------------------------------------------------------------
# importance sampling


def _eval_probs(eval_policy, arr, decoupled: bool) -> np.ndarray:
    """pi_e(a_t | h_t) for every record and step, shape [n, L+1]."""
    n, steps = arr.a.shape
    if isinstance(eval_policy, MemorylessPolicy):
        tab = np.asarray(eval_policy.tables)
        cols = []
        for t in range(steps):
            if decoupled:
                cols.append(tab[t, arr.z[:, t], arr.o[:, t], arr.a[:, t]])
            else:
                cols.append(tab[t, arr.z[:, t], arr.a[:, t]])
        return np.stack(cols, axis=1)
    out = np.empty((n, steps))
    for k in range(n):
        for t in range(steps):
            h = _history(arr.z[k, : t + 1], arr.o[k, : t + 1], arr.a[k, :t], decoupled)
            out[k, t] = eval_policy.dist(t, h)[arr.a[k, t]]
    return out


def _is_record(method, arr, weights, keep, reward_values, gamma, **diag) -> EstimateRecord:
    rv = np.asarray(reward_values, dtype=float)
    steps = arr.r.shape[1]
    n_keep = int(keep.sum())
    if n_keep == 0:
        raise ValueError("every record was excluded")
    w = np.where(keep, weights, 0.0)
    per_step = []
    for t in range(steps):
        per_step.append(np.bincount(arr.r[:, t], weights=w, minlength=len(rv)) / n_keep)
    ret = rv[arr.r] @ (gamma ** np.arange(steps))
    contrib = (ret * w)[keep]
    stderr = float(contrib.std(ddof=1) / np.sqrt(n_keep)) if n_keep > 1 else 0.0
    return EstimateRecord.build(method, per_step, rv, gamma, stderr=stderr, dropped=int((~keep).sum()), **diag)


def naive_is_value(data, eval_policy, gamma: float | None = None, context: str = "full", min_count: int = 5,
                   clip: float | None = None, spaces=None) -> EstimateRecord:
    """IS with weights pi_e(a_t|h_t) / P^b-hat(a_t|context_t) estimated from the data.

    Records whose behaviour context has fewer than ``min_count`` samples at any
    step are dropped and counted.  ``clip`` caps the trajectory weight.
    """
    arr = as_arrays(data)
    gamma = data.gamma if gamma is None else gamma
    spaces = getattr(data, "spaces", None) if spaces is None else spaces
    decoupled = getattr(data, "decoupled", eval_policy.decoupled if hasattr(eval_policy, "tables") else False)
    n_a = spaces.n_a if spaces is not None else None
    table = behavior_action_probs(arr, n_a=n_a, context=context, min_count=min_count)
    pb = table.record_probs(arr.a)
    pe = _eval_probs(eval_policy, arr, decoupled)
    w = np.prod(pe / pb, axis=1)
    clipped = 0
    if clip is not None:
        clipped = int((w > clip).sum())
        w = np.minimum(w, clip)
    keep = ~table.record_excluded()
    return _is_record("naive_is", arr, w, keep, spaces.reward_values, gamma, context=context,
                      excluded_contexts=table.n_excluded_contexts, clip_events=clipped)


def naive_is_population(model, behavior_policy: BehaviorPolicy, eval_policy, L: int, context: str = "full",
                        budget: int = DEFAULT_BUDGET) -> EstimateRecord:
    """The large-sample limit of naive IS, computed exactly from the model.

    Sums over observable trajectories with exact P^b(trajectory) and exact
    P^b(a_t | context_t) in place of their empirical estimates.
    """
    chain = chain_of(model)
    check_policy(model, behavior_policy, L + 1)
    check_policy(model, eval_policy, L + 1)
    if context not in ("full", "last"):
        raise ValueError("context must be 'full' or 'last'")
    pib = chain.behavior_tables(behavior_policy)
    ns, nz, no, na, nr = chain.n_s, chain.n_z, chain.n_o, chain.n_a, chain.n_r
    if context == "last":
        from ._chain import state_marginals

        mus = state_marginals(chain, pib, L + 1)
        last = []
        for t in range(L + 1):
            j = np.einsum("s,szo,sa->zoa", mus[t], chain.obs_emit, pib[t])
            with np.errstate(invalid="ignore", divide="ignore"):
                last.append(j / j.sum(axis=-1, keepdims=True))
    # entries: (z hist, o hist, a hist, alpha[s], beta[t, r, s], weight)
    hist = [((), (), (), chain.init.copy(), np.zeros((L + 1, nr, ns)), 1.0)]
    used = 0
    for t in range(L + 1):
        used += len(hist) * nz * no * na * ns * ns * (L + 1) * nr
        if used > budget:
            raise BudgetExceededError(f"population IS enumeration exceeds {budget} terms")
        nxt = []
        for zs, os_, as_, alpha, beta, w in hist:
            for z in range(nz):
                for o in range(no):
                    e = chain.obs_emit[:, z, o]
                    a_obs, b_obs = alpha * e, beta * e
                    mass = a_obs.sum()
                    if mass <= 0:
                        continue
                    if context == "full":
                        pb = (a_obs @ pib[t]) / mass
                    else:
                        pb = last[t][z, o]
                    h = _history(zs + (z,), os_ + (o,), as_, chain.decoupled)
                    pe = eval_policy.dist(t, h)
                    for a in range(na):
                        if pb[a] <= 0:
                            continue
                        act = pib[t][:, a]
                        a_new = a_obs * act
                        b_new = b_obs * act
                        b_new[t] += a_new[None, :] * chain.reward_onehot[:, a, :].T
                        if t < L:
                            a_new, b_new = a_new @ chain.trans[a], b_new @ chain.trans[a]
                        nxt.append((h.z, os_ + (o,), as_ + (a,), a_new, b_new, w * pe[a] / pb[a]))
        hist = nxt
    per_step = np.zeros((L + 1, nr))
    for *_, beta, w in hist:
        per_step += w * beta.sum(axis=-1)
    return EstimateRecord.build("naive_is_population", list(per_step), chain.reward_values, chain.gamma,
                                context=context, trajectories=len(hist))


def oracle_is_value(data, eval_policy, behavior_policy: BehaviorPolicy, gamma: float | None = None) -> EstimateRecord:
    """IS with the true weights pi_e(a_t|h_t) / pi_b(a_t|u_t); needs hidden states."""
    if not hasattr(data, "s"):
        raise TypeError("oracle IS needs a dataset that retains hidden states")
    gamma = data.gamma if gamma is None else gamma
    arr = data.arrays()
    tabs = np.asarray(behavior_policy.tables)
    if data.decoupled:
        tabs = tabs.reshape(tabs.shape[0], -1, tabs.shape[-1])
    steps = arr.a.shape[1]
    pb = np.stack([tabs[t, data.s[:, t], arr.a[:, t]] for t in range(steps)], axis=1)
    if np.any(pb <= 0):
        raise ValueError("realised action has zero behaviour probability; policy does not match the data")
    pe = _eval_probs(eval_policy, arr, data.decoupled)
    w = np.prod(pe / pb, axis=1)
    return _is_record("oracle_is", arr, w, np.ones(arr.n, dtype=bool), data.spaces.reward_values, gamma)


# ---------------------------------------------------------------------------
# sufficient condition for naive IS


@dataclass
class Assumption1Report:
    reward_condition: bool
    transition_condition: float
    holds: bool


def check_assumption1(model, behavior_policy: BehaviorPolicy, eval_policy, L: int,
                      budget: int = DEFAULT_BUDGET, tol: float = 1e-10) -> Assumption1Report:
    """Exact check of the sufficient condition for unbiased naive IS.

    Reward condition: all hidden paths consistent with an observable
    trajectory (and possible under the behaviour policy) share one return.
    Transition condition: the next-observation distribution given the
    observable past is the same whether actions were chosen by the behaviour
    policy (and hence carry information about u) or by the evaluation policy.
    """
    chain = chain_of(model)
    check_policy(model, behavior_policy, L + 1)
    pib = chain.behavior_tables(behavior_policy)
    ns, nz, no, na = chain.n_s, chain.n_z, chain.n_o, chain.n_a
    rv = chain.reward_values
    emit = chain.obs_emit.reshape(ns, nz * no)
    # entries: (alpha_b[s], alpha_e[s], {s: set of partial returns})
    hist = [(chain.init.copy(), chain.init.copy(), {s: {0.0} for s in np.flatnonzero(chain.init > 0)})]
    worst, reward_ok, used = 0.0, True, 0
    for t in range(L + 1):
        used += len(hist) * nz * no * na * ns * ns
        if used > budget:
            raise BudgetExceededError(f"assumption check exceeds {budget} terms")
        nxt = []
        for ab, ae, rets in hist:
            for y in range(nz * no):
                e = emit[:, y]
                ab_y, ae_y = ab * e, ae * e
                if ab_y.sum() <= 0:
                    continue
                for a in range(na):
                    ab_a = ab_y * pib[t][:, a]
                    if ab_a.sum() <= 0:
                        continue
                    live = np.flatnonzero(ab_a > 0)
                    new_rets: dict[int, set] = {}
                    for s in live:
                        r = chain.gamma**t * rv[chain.reward_idx[s, a]]
                        new_rets[s] = {round(x + r, 12) for x in rets.get(s, {0.0})}
                    if t == L:
                        vals = set().union(*new_rets.values())
                        if len(vals) > 1:
                            reward_ok = False
                        continue
                    nb, ne = ab_a @ chain.trans[a], ae_y @ chain.trans[a]
                    pb_next = (nb @ emit) / nb.sum()
                    pe_next = (ne @ emit) / ne.sum()
                    worst = max(worst, float(np.abs(pb_next - pe_next).max()))
                    carried: dict[int, set] = {}
                    for s in live:
                        for s2 in np.flatnonzero(chain.trans[a, s] > 0):
                            carried.setdefault(int(s2), set()).update(new_rets[s])
                    nxt.append((nb, ne, carried))
        hist = nxt
    return Assumption1Report(reward_ok, worst, bool(reward_ok and worst <= tol))
