"""Alpha-sweep experiments, result tables, SVG plots and affine fits."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .environments import (
    FIGURE3_HORIZON,
    MedicalConfig,
    assumption1_env,
    figure3_pomdp,
    medical_dpomdp,
    medical_eval_policy,
    random_dpomdp,
    random_pomdp,
)
from .estimators import (
    EstimateRecord,
    naive_is_population,
    naive_is_value,
    oracle_is_value,
    theorem1_value,
    theorem2_value,
)
from .io import load_model, load_policy
from .oracle import exact_value
from .probtables import EmpiricalSource, PopulationSource, dump_matrices
from .simulate import sample_dataset

log = logging.getLogger(__name__)

CSV_HEADER = ("alpha", "estimator", "v_hat", "oracle_v_pie", "oracle_v_pib", "norm_residual",
              "cond_number", "dropped", "seed", "n", "error")
ESTIMATORS = ("theorem1", "theorem2", "naive_is", "oracle_is")


@dataclass
class ExperimentConfig:
    """Sweep description; see ``ExperimentConfig.from_json`` for the file format."""

    environment: dict
    estimators: list = field(default_factory=lambda: ["theorem2", "naive_is"])
    alphas: list[float] = field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 1.0])
    seeds: list[int] = field(default_factory=lambda: [0])
    n: int = 0
    output_dir: str | None = None
    smoothing: float = 1e-9
    ridge: float = 0.0
    cond_cap: float = 1e8
    clip: float | None = None
    is_context: str = "full"
    min_count: int = 5
    index_sets: str = "auto"
    pool_time: bool = False
    dump_matrices: bool = False
    threads: int = 1

    def __post_init__(self):
        if not self.environment or "name" not in self.environment:
            raise ValueError("environment.name is required")
        if any(not 0.0 <= a <= 1.0 for a in self.alphas):
            raise ValueError("alpha grid values must lie in [0, 1]")
        if self.n < 0:
            raise ValueError("n must be >= 0")
        self.estimators = [_estimator_spec(e) for e in self.estimators]
        if self.environment["name"] == "files":
            for key in ("model", "behavior_policy", "eval_policy"):
                if not Path(self.environment[key]).exists():
                    raise FileNotFoundError(self.environment[key])

    @classmethod
    def from_json(cls, d: dict, base: Path | None = None) -> "ExperimentConfig":
        d = dict(d)
        env = dict(d.pop("environment"))
        if base is not None and env.get("name") == "files":
            for key in ("model", "behavior_policy", "eval_policy"):
                env[key] = str((base / env[key]).resolve())
        return cls(environment=env, **d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        return cls.from_json(json.loads(path.read_text()), base=path.parent)


_OPTION_KEYS = ("smoothing", "ridge", "cond_cap", "clip", "is_context", "min_count", "index_sets")


def _estimator_spec(e) -> dict:
    """Normalise ``"naive-is"`` or ``{"name": ..., "ridge": ...}`` to a dict."""
    spec = {"name": e} if isinstance(e, str) else dict(e)
    spec["name"] = spec["name"].replace("-", "_")
    if spec["name"] not in ESTIMATORS:
        raise ValueError(f"unknown estimator {spec['name']!r} (choose from {', '.join(ESTIMATORS)})")
    extra = set(spec) - {"name", *_OPTION_KEYS}
    if extra:
        raise ValueError(f"unknown estimator options {sorted(extra)}")
    return spec


def build_environment(env: dict, alpha: float):
    """-> (model, pi_b, pi_e, L) for the named environment at ``alpha``."""
    name = env["name"]
    if name == "medical":
        cfg = MedicalConfig(seed=env.get("seed", 0), alpha=alpha, horizon=env.get("horizon", 4),
                            gamma=env.get("gamma", 0.9), burn_in=env.get("burn_in", 2))
        model, pi_b = medical_dpomdp(cfg)
        return model, pi_b, medical_eval_policy(cfg), cfg.L
    if name == "figure3":
        model, pi_b, pi_e = figure3_pomdp(alpha, env.get("gamma", 0.9))
        return model, pi_b, pi_e, FIGURE3_HORIZON
    if name == "assumption1":
        h = env.get("horizon", 3)
        model, pi_b, pi_e = assumption1_env(env.get("seed", 0), horizon=h, gamma=env.get("gamma", 0.9))
        return model, pi_b, pi_e, h - 1
    if name in ("random_pomdp", "random_dpomdp"):
        kw = {k: v for k, v in env.items() if k not in ("name", "seed")}
        gen = (random_pomdp if name == "random_pomdp" else random_dpomdp)(env.get("seed", 0), **kw)
        return gen.model, gen.behavior_policy, gen.eval_policy, kw.get("L", 3)
    if name == "files":
        pi_b = load_policy(env["behavior_policy"])
        return load_model(env["model"]), pi_b, load_policy(env["eval_policy"]), env.get("L", pi_b.horizon - 1)
    raise ValueError(f"unknown environment {name!r}")


@dataclass
class ResultRow:
    alpha: float
    estimator: str
    v_hat: float
    oracle_v_pie: float
    oracle_v_pib: float
    norm_residual: float
    cond_number: float
    dropped: int
    seed: int
    n: int
    error: str = ""

    def as_csv(self) -> list[str]:
        def f(x):
            return "nan" if isinstance(x, float) and math.isnan(x) else repr(float(x))

        return [f(self.alpha), self.estimator, f(self.v_hat), f(self.oracle_v_pie), f(self.oracle_v_pib),
                f(self.norm_residual), f(self.cond_number), str(int(self.dropped)), str(self.seed),
                str(self.n), self.error]


@dataclass
class ResultTable:
    rows: list[ResultRow] = field(default_factory=list)
    records: list[EstimateRecord] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow(r.as_csv())
        return buf.getvalue()

    def series(self, estimator: str) -> tuple[np.ndarray, np.ndarray]:
        rows = [r for r in self.rows if r.estimator == estimator]
        return np.array([r.alpha for r in rows]), np.array([r.v_hat for r in rows])

    @property
    def failed(self) -> bool:
        return any(r.error for r in self.rows)


def _run_estimator(spec: dict, cfg: ExperimentConfig, model, pi_b, pi_e, L, data, source):
    name = spec["name"]
    opt = {k: spec.get(k, getattr(cfg, k)) for k in _OPTION_KEYS}
    if data is not None and opt["smoothing"] != cfg.smoothing and name in ("theorem1", "theorem2"):
        source = EmpiricalSource(data, model.spaces, model.gamma, smoothing=opt["smoothing"], pool_time=cfg.pool_time)
    if name == "theorem1":
        return theorem1_value(source, pi_e, L, ridge=opt["ridge"], cond_cap=opt["cond_cap"])
    if name == "theorem2":
        return theorem2_value(source, pi_e, L, index_sets=opt["index_sets"], ridge=opt["ridge"],
                              cond_cap=opt["cond_cap"])
    if name == "naive_is":
        if data is None:
            return naive_is_population(model, pi_b, pi_e, L, context=opt["is_context"])
        return naive_is_value(data, pi_e, context=opt["is_context"], min_count=opt["min_count"], clip=opt["clip"])
    if name == "oracle_is":
        if data is None:
            raise ValueError("oracle_is needs sampled data (n > 0)")
        return oracle_is_value(data, pi_e, pi_b)
    raise ValueError(f"unknown estimator {name!r}")


def run_experiment(cfg: ExperimentConfig, strict: bool = False) -> ResultTable:
    """Evaluate every estimator on every (alpha, seed) cell.

    With ``n == 0`` estimators consume exact population matrices.  Failures
    become NaN rows with an error message unless ``strict`` is set, in which
    case they propagate.  Writes ``results.csv`` and ``plot.svg`` into
    ``cfg.output_dir`` when it is given.
    """
    table = ResultTable()
    for alpha in sorted(cfg.alphas):
        model, pi_b, pi_e, L = build_environment(cfg.environment, alpha)
        v_e = exact_value(model, pi_e, L).v
        v_b = exact_value(model, pi_b, L).v
        for seed in cfg.seeds:
            data = None
            if cfg.n > 0:
                data = sample_dataset(model, pi_b, L, cfg.n, seed, threads=cfg.threads)
                source = EmpiricalSource(data, model.spaces, model.gamma, smoothing=cfg.smoothing,
                                         pool_time=cfg.pool_time)
            else:
                source = PopulationSource(model, pi_b, L)
            if not cfg.estimators:
                table.rows.append(ResultRow(alpha, "oracle", math.nan, v_e, v_b, math.nan, math.nan, 0, seed, cfg.n))
            for spec in cfg.estimators:
                name = spec["name"]
                try:
                    rec = _run_estimator(spec, cfg, model, pi_b, pi_e, L, data, source)
                except Exception as exc:  # recorded as a NaN row unless strict
                    if strict:
                        raise
                    log.warning("alpha=%g seed=%d %s failed: %s", alpha, seed, name, exc)
                    table.rows.append(ResultRow(alpha, name, math.nan, v_e, v_b, math.nan, math.nan, 0,
                                                seed, cfg.n, f"{type(exc).__name__}: {exc}".replace("\n", " ")))
                    continue
                table.records.append(rec)
                d = rec.diagnostics
                table.rows.append(ResultRow(
                    alpha, name, rec.v, v_e, v_b, rec.max_normalization_residual,
                    float(d.get("worst_condition", math.nan)), int(d.get("dropped", 0)), seed, cfg.n,
                ))
            if cfg.dump_matrices and cfg.output_dir:
                Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
                dump_matrices(_cached_matrices(source), Path(cfg.output_dir) / f"matrices_alpha{alpha:g}_seed{seed}.json")
    if cfg.output_dir:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "results.csv").write_text(table.to_csv())
        (out / "plot.svg").write_text(render_svg(table))
    return table


def _cached_matrices(source):
    """Every matrix the estimators requested from ``source`` (for dumping)."""
    return list(getattr(source, "requested", {}).values())


# ---------------------------------------------------------------------------
# plotting

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def render_svg(table: ResultTable, width: int = 640, height: int = 400, title: str = "value vs alpha") -> str:
    """Static line chart: one polyline per estimator plus the two oracle series."""
    series: dict[str, list[tuple[float, float]]] = {}
    for r in table.rows:
        series.setdefault(r.estimator, []).append((r.alpha, r.v_hat))
    seen = set()
    for r in table.rows:
        if (r.alpha, r.seed) in seen:
            continue
        seen.add((r.alpha, r.seed))
        series.setdefault("oracle v(pi_e)", []).append((r.alpha, r.oracle_v_pie))
        series.setdefault("oracle v(pi_b)", []).append((r.alpha, r.oracle_v_pib))
    series = {k: v for k, v in series.items() if any(math.isfinite(y) for _, y in v)}
    pts = [(x, y) for s in series.values() for x, y in s]
    pts = [(x, y) for x, y in pts if math.isfinite(y)]
    x0, x1 = (min(p[0] for p in pts), max(p[0] for p in pts)) if pts else (0.0, 1.0)
    y0, y1 = (min(p[1] for p in pts), max(p[1] for p in pts)) if pts else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    ml, mr, mt, mb = 60, 150, 30, 45
    pw, ph = width - ml - mr, height - mt - mb

    def sx(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return mt + (1 - (y - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{ml + pw / 2:.1f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>',
        f'<text x="{ml + pw / 2:.1f}" y="{height - 8}" text-anchor="middle" font-size="12">alpha</text>',
        f'<text x="15" y="{mt + ph / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 15 {mt + ph / 2:.1f})">value</text>',
    ]
    for k in range(5):
        xv, yv = x0 + k * (x1 - x0) / 4, y0 + k * (y1 - y0) / 4
        out.append(f'<text x="{sx(xv):.1f}" y="{mt + ph + 16}" text-anchor="middle" font-size="10">{xv:.2f}</text>')
        out.append(f'<text x="{ml - 6}" y="{sy(yv) + 3:.1f}" text-anchor="end" font-size="10">{yv:.3g}</text>')
    for i, (name, s) in enumerate(series.items()):
        color = _COLORS[i % len(_COLORS)]
        # average over seeds at each alpha
        by_alpha: dict[float, list[float]] = {}
        for x, y in s:
            if math.isfinite(y):
                by_alpha.setdefault(x, []).append(y)
        coords = " ".join(f"{sx(x):.1f},{sy(float(np.mean(v))):.1f}" for x, v in sorted(by_alpha.items()))
        dash = ' stroke-dasharray="5,3"' if name.startswith("oracle") else ""
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2"{dash} points="{coords}"/>')
        ly = mt + 14 + 16 * i
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly - 4}" x2="{ml + pw + 30}" y2="{ly - 4}" stroke="{color}" stroke-width="2"{dash}/>')
        out.append(f'<text x="{ml + pw + 35}" y="{ly}" font-size="11">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# fits


def fit_affine(alphas, gammas, values) -> tuple[float, float, float]:
    """Least-squares ``v ~ c_alpha * alpha + c_gamma * gamma`` (no intercept).

    Returns ``(c_alpha, c_gamma, max_abs_residual)``.
    """
    a = np.asarray(alphas, dtype=float)
    g = np.asarray(gammas, dtype=float)
    v = np.asarray(values, dtype=float)
    if len(np.unique(a)) < 2 or len(np.unique(g)) < 2:
        raise ValueError("need at least two distinct alpha and two distinct gamma values")
    X = np.stack([a, g], axis=1)
    if np.linalg.matrix_rank(X) < 2:
        raise ValueError("degenerate (alpha, gamma) grid")
    coef = np.linalg.lstsq(X, v, rcond=None)[0]
    return float(coef[0]), float(coef[1]), float(np.max(np.abs(X @ coef - v)))


FIG3_ALPHAS = (0.2, 0.4, 0.6, 0.8, 1.0)
FIG3_GAMMAS = (0.3, 0.6, 0.9)


def figure3_series(alphas=FIG3_ALPHAS, gammas=FIG3_GAMMAS) -> dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Oracle v(pi_b), v(pi_e) and population naive IS over an (alpha, gamma) grid."""
    A, G, vb, ve, vis = [], [], [], [], []
    for g in gammas:
        for a in alphas:
            model, pi_b, pi_e = figure3_pomdp(a, g)
            A.append(a)
            G.append(g)
            vb.append(exact_value(model, pi_b, FIGURE3_HORIZON).v)
            ve.append(exact_value(model, pi_e, FIGURE3_HORIZON).v)
            vis.append(naive_is_population(model, pi_b, pi_e, FIGURE3_HORIZON).v)
    A, G = np.array(A), np.array(G)
    return {"v_pib": (A, G, np.array(vb)), "v_pie": (A, G, np.array(ve)), "naive_is": (A, G, np.array(vis))}


def figure3_crossing(gamma: float, lo: float = 1e-3, hi: float = 2.0, tol: float = 1e-10) -> float:
    """The alpha at which v(pi_b) equals population naive IS, by bisection."""

    def gap(a):
        model, pi_b, pi_e = figure3_pomdp(a, gamma)
        return exact_value(model, pi_b, FIGURE3_HORIZON).v - naive_is_population(model, pi_b, pi_e, FIGURE3_HORIZON).v

    flo, fhi = gap(lo), gap(hi)
    if flo * fhi > 0:
        raise ValueError("no sign change of v(pi_b) - IS in the bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = gap(mid)
        if fm * flo > 0:
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)
