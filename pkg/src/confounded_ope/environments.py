"""Concrete environments and seeded random model generators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .models import (
    BehaviorPolicy,
    MemorylessPolicy,
    SpaceSpec,
    TabularDPOMDP,
    TabularPOMDP,
)
from .probtables import (
    PopulationSource,
    d_o_given_zaZ,
    d_z_given_a_zprev,
    select_index_sets,
)

# ---------------------------------------------------------------------------
# IS-bias counterexample

FIGURE3_HORIZON = 1  # L: two decision steps
_F3_OBS = 2 / 3
# step-0 states A_0, A_1; step-1 states B_0..B_3 with labels j = 0, 1, 0, 1
_F3_LABELS = np.array([0, 1, 0, 1, 0, 1])
# rows (A_j, a_i) -> distribution over B_0..B_3
_F3_TRANS = np.array([
    [[0, 1, 0, 0], [0, 0, 0, 1]],
    [[2 / 3, 1 / 3, 0, 0], [0, 0, 1 / 3, 2 / 3]],
])
_F3_R0 = np.array([[13.81, 7.24], [-14.56, -7.99]])  # multiplied by alpha
_F3_R1 = np.array([[2.02, -1.54], [-0.21, 0.25]])  # by label j and action


def _label_policy(n_steps: int, labels: np.ndarray) -> np.ndarray:
    same = labels[:, None] == np.arange(2)[None, :]
    return np.broadcast_to(np.where(same, 2 / 3, 1 / 3), (n_steps, len(labels), 2)).copy()


def figure3_pomdp(alpha: float, gamma: float):
    """Six-state, two-observation POMDP where naive importance sampling is biased.

    Two start states A_0, A_1 (uniform), each observed correctly with
    probability 2/3, lead to four terminal-step states.  Both policies prefer
    the action matching their context label: pi_b(a_i | u with label j) and
    pi_e(a_i | z_j) are 2/3 when i == j and 1/3 otherwise.  Rewards at step 0
    scale with ``alpha``.  Returns ``(model, pi_b, pi_e)`` for horizon
    ``FIGURE3_HORIZON``.
    """
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    n_u, n_z, n_a = 6, 2, 2
    obs = np.where(_F3_LABELS[:, None] == np.arange(n_z)[None, :], _F3_OBS, 1 - _F3_OBS)
    trans = np.zeros((n_a, n_u, n_u))
    for j in range(2):
        for a in range(n_a):
            trans[a, j, 2:] = _F3_TRANS[j, a]
    for s in range(2, n_u):
        trans[:, s, s] = 1.0
    raw = np.zeros((n_u, n_a))
    raw[:2] = alpha * _F3_R0
    raw[2:] = _F3_R1[_F3_LABELS[2:]]
    support, idx = np.unique(raw, return_inverse=True)
    model = TabularPOMDP(
        spaces=SpaceSpec(n_u=n_u, n_z=n_z, n_a=n_a, reward_values=tuple(support)),
        transition=trans,
        observation=obs,
        reward=idx.reshape(n_u, n_a),
        gamma=gamma,
        init=np.array([0.5, 0.5, 0, 0, 0, 0]),
        name=f"figure3(alpha={alpha:g})",
    )
    steps = FIGURE3_HORIZON + 1
    pi_b = BehaviorPolicy(_label_policy(steps, _F3_LABELS))
    pi_e = MemorylessPolicy(_label_policy(steps, np.arange(n_z)))
    return model, pi_b, pi_e


# ---------------------------------------------------------------------------
# synthetic medical model


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _bits(i: int) -> np.ndarray:
    return np.array([i & 1, (i >> 1) & 1], dtype=float)


def phi2(i: int) -> np.ndarray:
    """Two binary features of a 4-valued entity plus a constant."""
    return np.append(_bits(i), 1.0)


def phi_look(look: int, z_next: int) -> np.ndarray:
    return np.concatenate([[look, 1 - look, 1.0], phi2(z_next)])


MEDICAL_REWARD_GRID = tuple(k / 7 for k in range(8))


@dataclass(frozen=True)
class MedicalConfig:
    """Parameters of the medical environment.

    ``u`` encodes (mood, look) as bits 1 and 0, ``z`` and ``o`` are 2-bit
    indices.  ``horizon`` counts decision steps (L + 1).  The initial joint of
    (z_{-1}, z_0, u_0) comes from running the behaviour policy for ``burn_in``
    virtual steps from a uniform (z, u).
    """

    seed: int = 0
    alpha: float = 0.5
    horizon: int = 4
    gamma: float = 0.9
    burn_in: int = 2
    weights: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.burn_in < 1:
            raise ValueError("burn_in must be >= 1")
        if self.weights is None:
            object.__setattr__(self, "weights", medical_weights(self.seed))

    @property
    def L(self) -> int:
        return self.horizon - 1


def medical_weights(seed: int) -> dict[str, np.ndarray]:
    """All weight vectors drawn i.i.d. N(0, 1) in a fixed order."""
    rng = np.random.default_rng([seed, 0])
    return {
        "c_z": rng.standard_normal((4, 2, 3)),  # [z', a] . phi(z)
        "c_o": rng.standard_normal((4, 3)),  # [o] . phi(u)
        "c_mood": rng.standard_normal((2, 2, 3)),  # [a, mood'] . phi(u)
        "c_look": rng.standard_normal((2, 6)),  # [look'] . phi_look(look, z')
        "c_rz": rng.standard_normal((2, 3)),  # [a] . phi(z)
        "c_ru": rng.standard_normal((2, 3)),
        "c_bz": rng.standard_normal((2, 3)),
        "c_bu": rng.standard_normal((2, 3)),
    }


def _normalize(x, axis=-1):
    return x / x.sum(axis=axis, keepdims=True)


def medical_dpomdp(cfg: MedicalConfig):
    """Decoupled POMDP with |Z| = |U| = |O| = 4 and two actions.

    Kernels are sigmoid scores normalised over the outcome axis.  The hidden
    state moves as P(z'|z,a) P(look'|z',look) P(mood'|u,a); reward and
    behaviour policy blend an observed-state term and a hidden-state term
    with weight ``alpha``.  Returns ``(model, pi_b)``.
    """
    w = cfg.weights
    a_ = cfg.alpha
    Z = np.array([phi2(z) for z in range(4)])
    U = np.array([phi2(u) for u in range(4)])
    mood = lambda u: (u >> 1) & 1  # noqa: E731
    look = lambda u: u & 1  # noqa: E731

    pz = _normalize(_sigmoid(np.einsum("yad,zd->azy", w["c_z"], Z)))  # [a, z, z']
    po = _normalize(_sigmoid(np.einsum("od,ud->uo", w["c_o"], U)))  # [u, o]
    pmood = _normalize(_sigmoid(np.einsum("amd,ud->aum", w["c_mood"], U)))  # [a, u, mood']
    plook = np.zeros((4, 2, 2))  # [z', look, look']
    for zn in range(4):
        for lk in range(2):
            plook[zn, lk] = _sigmoid(w["c_look"] @ phi_look(lk, zn))
    plook = _normalize(plook)

    trans = np.zeros((2, 4, 4, 4, 4))  # [a, z, u, z', u']
    for a in range(2):
        for z in range(4):
            for u in range(4):
                for zn in range(4):
                    for un in range(4):
                        trans[a, z, u, zn, un] = (
                            pz[a, z, zn] * plook[zn, look(u), look(un)] * pmood[a, u, mood(un)]
                        )

    def blend(cz, cu):
        s = (1 - a_) * np.einsum("ad,zd->za", cz, Z)[None, :, :] + a_ * np.einsum("ad,ud->ua", cu, U)[:, None, :]
        return _normalize(_sigmoid(s))  # [u, z, a]

    r_score = blend(w["c_rz"], w["c_ru"])
    grid = np.asarray(MEDICAL_REWARD_GRID)
    reward = np.abs(r_score[..., None] - grid).argmin(axis=-1)
    pib = blend(w["c_bz"], w["c_bu"])

    # start uniform over (z, u) burn_in steps before t = 0 and run pi_b forward;
    # the last virtual step gives nu(z_-1, z_0, u_0)
    pib_zu = pib.transpose(1, 0, 2)  # [z, u, a]
    joint = np.full((4, 4), 1 / 16.0)  # [z, u]
    for _ in range(cfg.burn_in - 1):
        joint = np.einsum("zu,zua,azuyv->yv", joint, pib_zu, trans)
    init = np.einsum("zu,zua,azuyv->zyv", joint, pib_zu, trans)
    model = TabularDPOMDP(
        spaces=SpaceSpec(n_u=4, n_z=4, n_a=2, n_o=4, reward_values=MEDICAL_REWARD_GRID),
        transition=trans,
        independent_observation=po,
        reward=reward,
        gamma=cfg.gamma,
        init=init,
        name=f"medical(seed={cfg.seed},alpha={cfg.alpha:g})",
    )
    return model, BehaviorPolicy.stationary(pib, cfg.horizon)


def medical_eval_policy(cfg: MedicalConfig) -> MemorylessPolicy:
    """Stationary pi_e(a|z,o) proportional to sigmoid(c_a . (z bits, o bits, 1))."""
    rng = np.random.default_rng([cfg.seed, 1])
    c = rng.standard_normal((2, 5))
    tab = np.zeros((4, 4, 2))
    for z in range(4):
        for o in range(4):
            tab[z, o] = _sigmoid(c @ np.concatenate([_bits(z), _bits(o), [1.0]]))
    return MemorylessPolicy.stationary(_normalize(tab), cfg.horizon)


# ---------------------------------------------------------------------------
# control environment where naive IS is valid


def assumption1_env(seed: int = 0, horizon: int = 3, gamma: float = 0.9):
    """POMDP whose hidden state is a deterministic function of the observation.

    Observations 0, 1 are emitted only by u = 0 and 2, 3 only by u = 1, so
    g(z) = z // 2 recovers u.  Returns ``(model, pi_b, pi_e)`` with
    ``horizon`` decision steps.
    """
    rng = np.random.default_rng([seed, 7])
    n_u, n_z, n_a = 2, 4, 2
    obs = np.zeros((n_u, n_z))
    obs[0, :2] = rng.dirichlet([2, 2])
    obs[1, 2:] = rng.dirichlet([2, 2])
    trans = rng.dirichlet(np.ones(n_u), size=(n_a, n_u))
    rv = (0.0, 0.5, 1.0)
    reward = rng.integers(0, len(rv), size=(n_u, n_a))
    model = TabularPOMDP(
        spaces=SpaceSpec(n_u=n_u, n_z=n_z, n_a=n_a, reward_values=rv),
        transition=trans, observation=obs, reward=reward, gamma=gamma,
        init=rng.dirichlet(np.ones(n_u)), name=f"assumption1(seed={seed})",
    )
    pi_b = BehaviorPolicy(rng.dirichlet(np.full(n_a, 2.0), size=(horizon, n_u)))
    pi_e = MemorylessPolicy(rng.dirichlet(np.full(n_a, 2.0), size=(horizon, n_z)))
    return model, pi_b, pi_e


# ---------------------------------------------------------------------------
# random generators


class GenerationError(RuntimeError):
    """No sample satisfied the invertibility certificate within ``max_tries``."""


@dataclass(frozen=True, eq=False)
class Generated:
    model: TabularPOMDP | TabularDPOMDP
    behavior_policy: BehaviorPolicy
    eval_policy: MemorylessPolicy
    certificate: float  # worst condition number over the certified matrices
    tries: int
    index_sets: object = None


def _reward_support(n_r: int) -> tuple[float, ...]:
    return tuple(np.linspace(0.0, 1.0, n_r)) if n_r > 1 else (1.0,)


def certify_pomdp(model, behavior_policy, L: int) -> float:
    """Worst condition number of P^b(Z_i | a_i, Z_{i-1}) over i <= L and a_i."""
    src = PopulationSource(model, behavior_policy, L)
    worst = 0.0
    for i in range(L + 1):
        for a in range(src.n_a):
            c = src.matrix(d_z_given_a_zprev(i, a)).condition_number
            worst = max(worst, c if math.isfinite(c) else math.inf)
    return worst


def certify_dpomdp(model, behavior_policy, L: int):
    """Index sets and the worst condition number of the selected
    P_(K_i, J_{i-1})(O_i | z_i, a_i, Z_{i-1})."""
    src = PopulationSource(model, behavior_policy, L)
    try:
        sets = select_index_sets(src, L)
    except np.linalg.LinAlgError:
        return None, math.inf
    worst = 0.0
    for i in range(L + 1):
        for z in range(src.n_z):
            for a in range(src.n_a):
                m = src.matrix(d_o_given_zaZ(i, z, a)).subset(sets.k(i), sets.j(i - 1))
                c = m.condition_number
                worst = max(worst, c if math.isfinite(c) else math.inf)
    return sets, worst


def random_pomdp(seed: int, n_u: int = 2, n_z: int = 2, n_a: int = 2, n_r: int = 3, L: int = 3,
                 condition_cap: float = 1e3, max_tries: int = 1000, gamma: float = 0.9,
                 iid_u: bool = False) -> Generated:
    """Dirichlet(1, ..., 1) POMDP with a random behaviour and evaluation policy.

    Samples are redrawn until every P^b(Z_i | a_i, Z_{i-1}) with i <= L has
    condition number at most ``condition_cap``.  With ``iid_u`` the transition
    ignores both the current state and the action (hidden states are i.i.d.),
    which can never be certified.
    """
    if n_z < n_u:
        raise ValueError("need n_z >= n_u")
    rng = np.random.default_rng([seed, 11])
    rv = _reward_support(n_r)
    for k in range(1, max_tries + 1):
        if iid_u:
            row = rng.dirichlet(np.ones(n_u))
            trans = np.broadcast_to(row, (n_a, n_u, n_u)).copy()
        else:
            trans = rng.dirichlet(np.ones(n_u), size=(n_a, n_u))
        model = TabularPOMDP(
            spaces=SpaceSpec(n_u=n_u, n_z=n_z, n_a=n_a, reward_values=rv),
            transition=trans,
            observation=rng.dirichlet(np.ones(n_z), size=n_u),
            reward=rng.integers(0, n_r, size=(n_u, n_a)),
            gamma=gamma,
            init=rng.dirichlet(np.ones(n_u)),
            name=f"random_pomdp(seed={seed})",
        )
        pi_b = BehaviorPolicy(rng.dirichlet(np.ones(n_a), size=(L + 1, n_u)))
        pi_e = MemorylessPolicy(rng.dirichlet(np.ones(n_a), size=(L + 1, n_z)))
        cert = certify_pomdp(model, pi_b, L)
        if cert <= condition_cap:
            return Generated(model, pi_b, pi_e, cert, k)
    raise GenerationError(f"no certified POMDP within {max_tries} tries (cap {condition_cap:g})")


def random_dpomdp(seed: int, n_u: int = 2, n_z: int = 2, n_o: int = 2, n_a: int = 2, n_r: int = 3,
                  L: int = 3, condition_cap: float = 1e3, max_tries: int = 1000,
                  gamma: float = 0.9) -> Generated:
    """Dirichlet decoupled POMDP certified through the selected index sets.

    The transition factorises as P(z'|z, a) P(u'|u, a, z'), so the next hidden
    state depends on the past observed state only through z'.
    """
    if n_z < n_u or n_o < n_u:
        raise ValueError("need n_z >= n_u and n_o >= n_u")
    rng = np.random.default_rng([seed, 13])
    rv = _reward_support(n_r)
    for k in range(1, max_tries + 1):
        pz = rng.dirichlet(np.ones(n_z), size=(n_a, n_z))  # [a, z, z']
        pu = rng.dirichlet(np.ones(n_u), size=(n_a, n_u, n_z))  # [a, u, z', u']
        trans = np.einsum("azy,auyv->azuyv", pz, pu)
        model = TabularDPOMDP(
            spaces=SpaceSpec(n_u=n_u, n_z=n_z, n_a=n_a, n_o=n_o, reward_values=rv),
            transition=trans,
            independent_observation=rng.dirichlet(np.ones(n_o), size=n_u),
            reward=rng.integers(0, n_r, size=(n_u, n_z, n_a)),
            gamma=gamma,
            init=rng.dirichlet(np.ones(n_z * n_z * n_u)).reshape(n_z, n_z, n_u),
            name=f"random_dpomdp(seed={seed})",
        )
        pi_b = BehaviorPolicy(rng.dirichlet(np.ones(n_a), size=(L + 1, n_u, n_z)))
        pi_e = MemorylessPolicy(rng.dirichlet(np.ones(n_a), size=(L + 1, n_z, n_o)))
        sets, cert = certify_dpomdp(model, pi_b, L)
        if cert <= condition_cap:
            return Generated(model, pi_b, pi_e, cert, k, sets)
    raise GenerationError(f"no certified decoupled POMDP within {max_tries} tries (cap {condition_cap:g})")
