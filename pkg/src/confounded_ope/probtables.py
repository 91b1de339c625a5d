"""Conditional-probability matrices (population or empirical), weight solving and
index-set selection for the decoupled estimator."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from ._chain import Chain, chain_of, check_policy, population_joint

DEFAULT_COND_CAP = 1e8

Var = tuple[str, int]


class SingularMatrixError(np.linalg.LinAlgError):
    """A matrix that must be inverted is (numerically) singular."""

    def __init__(self, descriptor: str, condition_number: float):
        self.descriptor = descriptor
        self.condition_number = condition_number
        super().__init__(f"singular matrix {descriptor} (condition number {condition_number:.3g})")


@dataclass(frozen=True)
class Descriptor:
    """Names one conditional matrix P(target, fixed | given, column).

    Rows enumerate the joint values of ``target``; ``fixed`` pins extra outcome
    coordinates (joint targets); ``given`` pins conditioning values shared by all
    columns; ``column`` is the conditioning variable spanning the columns (None
    for a single-column vector).
    """

    name: str
    target: tuple[Var, ...]
    fixed: tuple[tuple[Var, int], ...] = ()
    given: tuple[tuple[Var, int], ...] = ()
    column: Var | None = None

    @property
    def variables(self) -> tuple[Var, ...]:
        vs = list(self.target) + [v for v, _ in self.fixed] + [v for v, _ in self.given]
        if self.column is not None:
            vs.append(self.column)
        return tuple(vs)

    @property
    def hidden(self) -> bool:
        return any(k == "u" for k, _ in self.variables)

    def times(self) -> list[int]:
        return [t for _, t in self.variables]

    def __str__(self):
        return self.name


def _fmt(fixed) -> str:
    return ",".join(f"{k}{t}={v}" for (k, t), v in fixed)


# descriptor constructors -----------------------------------------------------


def d_z_given_a_zprev(i: int, a: int) -> Descriptor:
    """P(Z_i | a_i, Z_{i-1}); i = 0 uses the pre-observation."""
    return Descriptor(f"P(Z{i}|a{i}={a},Z{i-1})", (("z", i),), (), ((("a", i), a),), ("z", i - 1))


def d_zz_given_a_zprev2(i: int, z_prev: int, a_prev: int) -> Descriptor:
    """P(Z_i, z_{i-1} | a_{i-1}, Z_{i-2}) for i >= 1."""
    return Descriptor(
        f"P(Z{i},z{i-1}={z_prev}|a{i-1}={a_prev},Z{i-2})",
        (("z", i),), ((("z", i - 1), z_prev),), ((("a", i - 1), a_prev),), ("z", i - 2),
    )


def d_rz_given_a_zprev(t: int, a: int) -> Descriptor:
    """P(r_t, z_t | a_t, Z_{t-1}); rows are (r, z) pairs."""
    return Descriptor(f"P(r{t},Z{t}|a{t}={a},Z{t-1})", (("r", t), ("z", t)), (), ((("a", t), a),), ("z", t - 1))


def d_r_given_a_z(t: int, a: int) -> Descriptor:
    """P(r_t | a_t, Z_t); used by the scalar local estimator."""
    return Descriptor(f"P(r{t}|a{t}={a},Z{t})", (("r", t),), (), ((("a", t), a),), ("z", t))


def d_z_marginal(i: int) -> Descriptor:
    return Descriptor(f"P(Z{i})", (("z", i),))


def d_o_given_zaZ(i: int, z: int, a: int) -> Descriptor:
    """P(O_i | z_i, a_i, Z_{i-1})."""
    return Descriptor(
        f"P(O{i}|z{i}={z},a{i}={a},Z{i-1})", (("o", i),), (), ((("z", i), z), (("a", i), a)), ("z", i - 1)
    )


def d_ooz_given(i: int, o_prev: int, z: int, z_prev: int, a_prev: int) -> Descriptor:
    """P(O_i, o_{i-1}, z_i | z_{i-1}, a_{i-1}, Z_{i-2}) for i >= 1."""
    return Descriptor(
        f"P(O{i},o{i-1}={o_prev},z{i}={z}|z{i-1}={z_prev},a{i-1}={a_prev},Z{i-2})",
        (("o", i),),
        ((("o", i - 1), o_prev), (("z", i), z)),
        ((("z", i - 1), z_prev), (("a", i - 1), a_prev)),
        ("z", i - 2),
    )


def d_o_given_z(i: int, z: int) -> Descriptor:
    return Descriptor(f"P(O{i}|z{i}={z})", (("o", i),), (), ((("z", i), z),))


def d_ro_given_zaZ(t: int, z: int, a: int) -> Descriptor:
    """P(r_t, o_t | z_t, a_t, Z_{t-1}); rows are (r, o) pairs."""
    return Descriptor(
        f"P(r{t},O{t}|z{t}={z},a{t}={a},Z{t-1})", (("r", t), ("o", t)), (), ((("z", t), z), (("a", t), a)), ("z", t - 1)
    )


def d_u_given_aZ(i: int, a: int) -> Descriptor:
    return Descriptor(f"P(U{i}|a{i}={a},Z{i-1})", (("u", i),), (), ((("a", i), a),), ("z", i - 1))


def d_z_given_aU(i: int, a: int) -> Descriptor:
    return Descriptor(f"P(Z{i}|a{i}={a},U{i})", (("z", i),), (), ((("a", i), a),), ("u", i))


def d_uz_given_a_zprev2(i: int, z_prev: int, a_prev: int) -> Descriptor:
    """P(U_i, z_{i-1} | a_{i-1}, Z_{i-2})."""
    return Descriptor(
        f"P(U{i},z{i-1}={z_prev}|a{i-1}={a_prev},Z{i-2})",
        (("u", i),), ((("z", i - 1), z_prev),), ((("a", i - 1), a_prev),), ("z", i - 2),
    )


def d_u_given_zaZ(i: int, z: int, a: int) -> Descriptor:
    return Descriptor(
        f"P(U{i}|z{i}={z},a{i}={a},Z{i-1})", (("u", i),), (), ((("z", i), z), (("a", i), a)), ("z", i - 1)
    )


def d_o_given_zaU(i: int, z: int, a: int) -> Descriptor:
    return Descriptor(f"P(O{i}|z{i}={z},a{i}={a},U{i})", (("o", i),), (), ((("z", i), z), (("a", i), a)), ("u", i))


def d_uoz_given(i: int, o_prev: int, z: int, z_prev: int, a_prev: int) -> Descriptor:
    """P(U_i, z_i, o_{i-1} | z_{i-1}, a_{i-1}, Z_{i-2})."""
    return Descriptor(
        f"P(U{i},z{i}={z},o{i-1}={o_prev}|z{i-1}={z_prev},a{i-1}={a_prev},Z{i-2})",
        (("u", i),),
        ((("z", i), z), (("o", i - 1), o_prev)),
        ((("z", i - 1), z_prev), (("a", i - 1), a_prev)),
        ("z", i - 2),
    )


# matrices --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CondProbMatrix:
    descriptor: str
    row_labels: tuple[tuple[int, ...], ...]
    col_labels: tuple[tuple[int, ...], ...]
    values: np.ndarray
    counts: np.ndarray
    condition_number: float = field(default=math.nan)

    @property
    def shape(self):
        return self.values.shape

    @property
    def nan_columns(self) -> np.ndarray:
        return np.flatnonzero(np.isnan(self.values).any(axis=0))

    def subset(self, rows: Sequence[int] | None = None, cols: Sequence[int] | None = None) -> "CondProbMatrix":
        """The sub-matrix P_(I,J) on the given row / column index sets."""
        r = np.arange(self.values.shape[0]) if rows is None else np.asarray(rows, dtype=int)
        c = np.arange(self.values.shape[1]) if cols is None else np.asarray(cols, dtype=int)
        vals = self.values[np.ix_(r, c)]
        name = self.descriptor
        if rows is not None or cols is not None:
            name += f"[{list(map(int, r))},{list(map(int, c))}]"
        return CondProbMatrix(
            descriptor=name,
            row_labels=tuple(self.row_labels[i] for i in r),
            col_labels=tuple(self.col_labels[j] for j in c),
            values=vals,
            counts=self.counts[c],
            condition_number=condition_number(vals),
        )

    def to_json(self) -> dict:
        def clean(x):
            return None if isinstance(x, float) and not math.isfinite(x) else x

        return {
            "descriptor": self.descriptor,
            "row_labels": [list(r) for r in self.row_labels],
            "col_labels": [list(c) for c in self.col_labels],
            "values": [[clean(float(v)) for v in row] for row in self.values],
            "counts": [int(c) for c in self.counts],
            "condition_number": clean(float(self.condition_number)),
        }


def condition_number(values: np.ndarray) -> float:
    """Spectral condition number; NaN if non-square or containing NaN, inf if singular."""
    if values.ndim != 2 or values.shape[0] != values.shape[1] or np.isnan(values).any():
        return math.nan
    s = np.linalg.svd(values, compute_uv=False)
    if s[-1] <= 0 or s[0] / s[-1] > 1e300:
        return math.inf
    return float(s[0] / s[-1])


def _labels(sizes: Sequence[int]) -> tuple[tuple[int, ...], ...]:
    return tuple(itertools.product(*[range(n) for n in sizes]))


class MatrixSource:
    """Common machinery: build a CondProbMatrix from a joint table over variables."""

    decoupled: bool
    n_z: int
    n_o: int
    n_a: int
    n_r: int
    n_u: int
    horizon: int  # L
    population: bool

    def __init__(self):
        self._cache: dict[tuple[Var, ...], tuple[np.ndarray, np.ndarray | None]] = {}
        self.requested: dict[str, CondProbMatrix] = {}

    def size(self, kind: str) -> int:
        return {"z": self.n_z, "o": self.n_o, "a": self.n_a, "r": self.n_r, "u": self.n_u}[kind]

    def _joint(self, variables: tuple[Var, ...]) -> tuple[np.ndarray, np.ndarray | None]:
        raise NotImplementedError

    def joint(self, variables: tuple[Var, ...]):
        key = tuple(variables)
        if key not in self._cache:
            self._cache[key] = self._joint(key)
        return self._cache[key]

    def check(self, d: Descriptor):
        for k, t in d.variables:
            if t < -1 or (t == -1 and k != "z") or t > self.horizon:
                raise ValueError(f"descriptor {d} references step {t} outside -1..{self.horizon}")
        if d.hidden and not self.population:
            raise ValueError(f"descriptor {d} involves hidden states; only population sources provide it")

    def matrix(self, d: Descriptor, smoothing: float | None = None) -> CondProbMatrix:
        self.check(d)
        eps = self.smoothing if smoothing is None else smoothing
        joint, counts = self.joint(d.variables)
        nt, nf = len(d.target), len(d.fixed)
        tsizes = [self.size(k) for k, _ in d.target]
        n_target = int(np.prod(tsizes))
        n_cells = n_target * int(np.prod([self.size(k) for (k, _), _ in d.fixed]))
        pin = tuple([slice(None)] * (nt + nf) + [v for _, v in d.given])

        def split(table):
            # -> (numerator [target, col], per-column denominator)
            sub = table[pin]
            if d.column is None:
                sub = sub[..., None]
            ncol = sub.shape[-1]
            den = sub.reshape(-1, ncol).sum(axis=0)
            num = sub[tuple([slice(None)] * nt + [v for _, v in d.fixed])].reshape(n_target, ncol)
            return num, den

        num, den = split(joint)
        if counts is None:
            col_counts = np.zeros(num.shape[1], dtype=np.int64)
        else:
            num, col_counts = split(counts)
            col_counts = col_counts.astype(np.int64)
            num = num + eps
            den = col_counts + eps * n_cells
        with np.errstate(invalid="ignore", divide="ignore"):
            vals = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)
        col_labels = ((),) if d.column is None else _labels([self.size(d.column[0])])
        out = self.requested[d.name] = CondProbMatrix(
            descriptor=d.name,
            row_labels=_labels(tsizes),
            col_labels=col_labels,
            values=vals,
            counts=col_counts,
            condition_number=condition_number(vals),
        )
        return out

    smoothing: float = 0.0


class PopulationSource(MatrixSource):
    """Exact behaviour-distribution matrices computed from the full model."""

    population = True
    smoothing = 0.0

    def __init__(self, model, behavior_policy, horizon: int):
        super().__init__()
        check_policy(model, behavior_policy, horizon + 1)
        self.model = model
        self.chain: Chain = chain_of(model)
        self.pib = self.chain.behavior_tables(behavior_policy)
        c = self.chain
        self.decoupled = c.decoupled
        self.n_z, self.n_o, self.n_a, self.n_r, self.n_u = c.n_z, c.n_o, c.n_a, c.n_r, c.n_u
        self.horizon = horizon
        self.reward_values = c.reward_values
        self.gamma = c.gamma

    def _joint(self, variables):
        return population_joint(self.chain, self.pib, list(variables)), None


@dataclass(frozen=True, eq=False)
class ObservedArrays:
    """Column-wise observable data: ``z[n, L+1]`` etc.; ``o`` is all-zero for POMDPs."""

    z_pre: np.ndarray
    z: np.ndarray
    o: np.ndarray
    a: np.ndarray
    r: np.ndarray

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def horizon(self) -> int:
        return self.z.shape[1] - 1

    def column(self, kind: str, t: int) -> np.ndarray:
        if kind == "z" and t == -1:
            return self.z_pre
        return getattr(self, kind)[:, t]

    @classmethod
    def from_records(cls, records) -> "ObservedArrays":
        records = list(records)
        if not records:
            raise ValueError("empty data")
        z = np.array([r.z for r in records], dtype=np.int64)
        o = (np.zeros_like(z) if records[0].o is None
             else np.array([r.o for r in records], dtype=np.int64))
        return cls(
            z_pre=np.array([r.z_pre for r in records], dtype=np.int64),
            z=z, o=o,
            a=np.array([r.a for r in records], dtype=np.int64),
            r=np.array([r.r for r in records], dtype=np.int64),
        )


def as_arrays(data) -> ObservedArrays:
    if isinstance(data, ObservedArrays):
        return data
    if hasattr(data, "arrays"):
        return data.arrays()
    return ObservedArrays.from_records(data)


class EmpiricalSource(MatrixSource):
    """Frequency estimates from observable records.

    ``smoothing`` is the Laplace pseudo-count added to each outcome cell.  With
    ``pool_time`` the counts for windows that do not touch the pre-observation
    are summed over every time shift that fits in the horizon.
    """

    population = False

    def __init__(self, data, spaces, gamma: float, smoothing: float = 0.0, pool_time: bool = False,
                 decoupled: bool | None = None):
        super().__init__()
        self.data = as_arrays(data)
        if self.data.n == 0:
            raise ValueError("empty data")
        if smoothing < 0:
            raise ValueError("smoothing must be >= 0")
        self.smoothing = float(smoothing)
        self.pool_time = pool_time
        self.decoupled = spaces.n_o is not None if decoupled is None else decoupled
        self.n_z, self.n_a, self.n_r, self.n_u = spaces.n_z, spaces.n_a, spaces.n_r, spaces.n_u
        self.n_o = spaces.n_o if self.decoupled else 1
        self.horizon = self.data.horizon
        self.reward_values = np.asarray(spaces.reward_values, dtype=float)
        self.gamma = float(gamma)

    def _counts(self, variables, shift: int = 0):
        sizes = [self.size(k) for k, _ in variables]
        flat = np.zeros(self.data.n, dtype=np.int64)
        for (k, t), n in zip(variables, sizes):
            flat = flat * n + self.data.column(k, t + shift if not (k == "z" and t == -1) else -1)
        return np.bincount(flat, minlength=int(np.prod(sizes))).reshape(sizes)

    def _joint(self, variables):
        counts = self._counts(variables)
        ts = [t for _, t in variables]
        if self.pool_time and min(ts) >= 0:
            for shift in range(-min(ts), self.horizon - max(ts) + 1):
                if shift != 0:
                    counts = counts + self._counts(variables, shift)
        total = counts.sum()
        return counts / total, counts


def population_matrix(model, behavior_policy, descriptor: Descriptor, horizon: int | None = None) -> CondProbMatrix:
    """Exact P^b matrix for ``descriptor``."""
    if horizon is None:
        horizon = behavior_policy.horizon - 1
    return PopulationSource(model, behavior_policy, horizon).matrix(descriptor)


def empirical_cond_matrix(data, descriptor: Descriptor, smoothing: float = 0.0, spaces=None) -> CondProbMatrix:
    """Frequency estimate of ``descriptor`` from observable data.

    ``data`` is a Dataset (carries its spaces) or a list of ObservableRecord
    together with ``spaces``.
    """
    if spaces is None:
        spaces = data.spaces
    gamma = getattr(data, "gamma", 0.5)
    return EmpiricalSource(data, spaces, gamma, smoothing=smoothing).matrix(descriptor)


# solving ----------------------------------------------------------------------


class Solved(NamedTuple):
    x: np.ndarray
    condition_number: float


def solve_weights(A, B, ridge: float = 0.0, cond_cap: float = DEFAULT_COND_CAP) -> Solved:
    """Solve ``A X = B`` (least squares when A is tall; ridge-regularised when ``ridge > 0``).

    Raises :class:`SingularMatrixError` when ``ridge == 0`` and the condition
    number of ``A`` exceeds ``cond_cap``.
    """
    name = A.descriptor if isinstance(A, CondProbMatrix) else "A"
    a = A.values if isinstance(A, CondProbMatrix) else np.asarray(A, dtype=float)
    b = B.values if isinstance(B, CondProbMatrix) else np.asarray(B, dtype=float)
    if np.isnan(a).any():
        raise SingularMatrixError(name + " (NaN-marked columns)", math.nan)
    if a.shape[0] < a.shape[1]:
        raise ValueError(f"{name}: need rows >= cols, got shape {a.shape}")
    s = np.linalg.svd(a, compute_uv=False)
    cond = math.inf if s[-1] <= 0 else float(s[0] / s[-1])
    if ridge > 0:
        n = a.shape[1]
        x = np.linalg.solve(a.T @ a + ridge * np.eye(n), a.T @ b)
        return Solved(x, cond)
    if not cond <= cond_cap:
        raise SingularMatrixError(name, cond)
    if a.shape[0] == a.shape[1]:
        return Solved(np.linalg.solve(a, b), cond)
    return Solved(np.linalg.lstsq(a, b, rcond=None)[0], cond)


# index sets -------------------------------------------------------------------


@dataclass(frozen=True)
class IndexSets:
    """Row sets K_i (into O) for i = 0..L and column sets J_i (into Z) for i = -1..L-1."""

    K: tuple[tuple[int, ...], ...]
    J: tuple[tuple[int, ...], ...]  # J[0] is J_{-1}
    worst_condition: float = math.nan

    def k(self, i: int) -> tuple[int, ...]:
        return self.K[i]

    def j(self, i: int) -> tuple[int, ...]:
        return self.J[i + 1]

    def check(self, n_u: int, n_o: int, n_z: int, horizon: int):
        if len(self.K) != horizon + 1 or len(self.J) != horizon + 1:
            raise ValueError(f"index sets must cover steps 0..{horizon}")
        for name, sets, n in (("K", self.K, n_o), ("J", self.J, n_z)):
            for s in sets:
                if len(s) != n_u or len(set(s)) != n_u or min(s) < 0 or max(s) >= n:
                    raise ValueError(f"invalid index set {name}={s} (need {n_u} distinct indices < {n})")

    @classmethod
    def full(cls, n_u: int, horizon: int) -> "IndexSets":
        s = tuple(range(n_u))
        return cls(K=(s,) * (horizon + 1), J=(s,) * (horizon + 1))

    def to_json(self) -> dict:
        return {"K": [list(k) for k in self.K], "J": [list(j) for j in self.J]}


def _score(mats: list[np.ndarray], K, J) -> tuple[int, float]:
    worst, bad = 0.0, 0
    for m in mats:
        c = condition_number(m[np.ix_(K, J)])
        if not math.isfinite(c):
            bad += 1
        else:
            worst = max(worst, c)
    return bad, worst


def _best_sets(mats: list[np.ndarray], n_o: int, n_z: int, n_u: int, exhaustive_limit: int = 10_000):
    combos_k = list(itertools.combinations(range(n_o), n_u))
    combos_j = list(itertools.combinations(range(n_z), n_u))
    if len(combos_k) * len(combos_j) <= exhaustive_limit:
        best = None
        for K in combos_k:
            for J in combos_j:
                key = _score(mats, K, J) + (K, J)
                if best is None or key < best:
                    best = key
        return best
    # greedy swap descent from the lexicographically first sets
    K, J = list(combos_k[0]), list(combos_j[0])
    cur = _score(mats, K, J)
    improved = True
    while improved:
        improved = False
        for which, pool in (("K", n_o), ("J", n_z)):
            sets = K if which == "K" else J
            for pos in range(n_u):
                for cand in range(pool):
                    if cand in sets:
                        continue
                    trial = sorted(sets[:pos] + [cand] + sets[pos + 1:])
                    tk, tj = (trial, J) if which == "K" else (K, trial)
                    sc = _score(mats, tk, tj)
                    if sc < cur:
                        cur, K, J, improved = sc, tk, tj, True
                        sets = K if which == "K" else J
    return cur + (tuple(K), tuple(J))


def select_index_sets(source: MatrixSource, horizon: int | None = None,
                      cond_cap: float = DEFAULT_COND_CAP) -> IndexSets:
    """Per step i choose K_i, J_{i-1} minimising the worst condition number of
    P_(K_i, J_{i-1})(O_i | z_i, a_i, Z_{i-1}) over all (z_i, a_i) contexts."""
    if not source.decoupled:
        raise ValueError("index sets apply to decoupled sources only")
    L = source.horizon if horizon is None else horizon
    n_u, n_o, n_z = source.n_u, source.n_o, source.n_z
    if n_z < n_u or n_o < n_u:
        raise ValueError(f"need |Z|, |O| >= |U| (got n_z={n_z}, n_o={n_o}, n_u={n_u})")
    Ks, Js, worst = [], [], 0.0
    for i in range(L + 1):
        mats = []
        for z in range(n_z):
            for a in range(source.n_a):
                m = source.matrix(d_o_given_zaZ(i, z, a))
                if not source.population and m.counts.sum() == 0:
                    continue  # context never observed; the estimator drops it anyway
                mats.append(m.values)
        bad, w, K, J = _best_sets(mats, n_o, n_z, n_u)
        if mats and bad == len(mats):
            raise SingularMatrixError(f"P(O{i}|z{i},a{i},Z{i-1}) under every index set", math.inf)
        Ks.append(K)
        Js.append(J)
        worst = max(worst, w)
    return IndexSets(K=tuple(Ks), J=tuple(Js), worst_condition=worst)


# behaviour action probabilities ------------------------------------------------


@dataclass(frozen=True, eq=False)
class BehaviorActionTable:
    """Empirical P^b(a_t | context_t) per step with per-record lookups.

    ``probs[t][k]`` is the action distribution of context ``k`` at step ``t``,
    ``counts[t][k]`` its sample count and ``record_context[t]`` maps each record
    to its context id.  Contexts with fewer than ``min_count`` samples are
    flagged in ``excluded[t]``.
    """

    context: str
    keys: tuple[np.ndarray, ...]
    probs: tuple[np.ndarray, ...]
    counts: tuple[np.ndarray, ...]
    record_context: tuple[np.ndarray, ...]
    excluded: tuple[np.ndarray, ...]
    min_count: int

    @property
    def n_excluded_contexts(self) -> int:
        return int(sum(e.sum() for e in self.excluded))

    def record_probs(self, a: np.ndarray) -> np.ndarray:
        """P^b(a_t | context) for each record's logged action, shape [n, L+1]."""
        cols = [self.probs[t][self.record_context[t], a[:, t]] for t in range(len(self.probs))]
        return np.stack(cols, axis=1)

    def record_excluded(self) -> np.ndarray:
        cols = [self.excluded[t][self.record_context[t]] for t in range(len(self.probs))]
        return np.stack(cols, axis=1).any(axis=1)


def _history_columns(data: ObservedArrays, t: int, context: str) -> np.ndarray:
    if context == "last":
        return np.stack([data.z[:, t], data.o[:, t]], axis=1)
    cols = []
    for k in range(t + 1):
        cols += [data.z[:, k], data.o[:, k]]
        if k < t:
            cols.append(data.a[:, k])
    return np.stack(cols, axis=1)


def behavior_action_probs(data, n_a: int | None = None, context: str = "full", min_count: int = 5) -> BehaviorActionTable:
    """Empirical action frequencies given the full observable history (``"full"``)
    or the last observation only (``"last"``)."""
    if context not in ("full", "last"):
        raise ValueError("context must be 'full' or 'last'")
    arr = as_arrays(data)
    if arr.n == 0:
        raise ValueError("empty data")
    if n_a is None:
        n_a = int(arr.a.max()) + 1
    keys, probs, counts, rec, excl = [], [], [], [], []
    for t in range(arr.horizon + 1):
        cols = _history_columns(arr, t, context)
        uniq, inv = np.unique(cols, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        tab = np.zeros((len(uniq), n_a))
        np.add.at(tab, (inv, arr.a[:, t]), 1)
        cnt = tab.sum(axis=1)
        keys.append(uniq)
        probs.append(tab / cnt[:, None])
        counts.append(cnt.astype(np.int64))
        rec.append(inv)
        excl.append(cnt < min_count)
    return BehaviorActionTable(context, tuple(keys), tuple(probs), tuple(counts), tuple(rec), tuple(excl), min_count)


def dump_matrices(mats: Sequence[CondProbMatrix], path) -> None:
    with open(path, "w") as fh:
        json.dump([m.to_json() for m in mats], fh, indent=1)
