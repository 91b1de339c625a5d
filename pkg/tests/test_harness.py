import csv
import io
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from confounded_ope.harness import (
    CSV_HEADER,
    ExperimentConfig,
    ResultRow,
    ResultTable,
    figure3_crossing,
    fit_affine,
    render_svg,
    run_experiment,
)


def _rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_population_sweep_reproduces_oracle(tmp_path):
    cfg = ExperimentConfig(environment={"name": "random_dpomdp", "seed": 2, "L": 2},
                           estimators=["theorem2", "naive-is"], alphas=[0.5], output_dir=str(tmp_path))
    table = run_experiment(cfg)
    rows = _rows((tmp_path / "results.csv").read_text())
    assert tuple(rows[0]) == CSV_HEADER
    t2 = [r for r in table.rows if r.estimator == "theorem2"][0]
    assert abs(t2.v_hat - t2.oracle_v_pie) <= 1e-8
    assert (tmp_path / "plot.svg").exists()


def test_figure3_population_sweep_theorem1():
    cfg = ExperimentConfig(environment={"name": "figure3", "gamma": 0.6}, estimators=["theorem1"],
                           alphas=[0.2, 0.6, 1.0])
    for r in run_experiment(cfg).rows:
        assert r.v_hat == pytest.approx(r.oracle_v_pie, abs=1e-10)
        assert r.error == ""


def test_empty_estimator_list_yields_oracle_rows():
    cfg = ExperimentConfig(environment={"name": "figure3"}, estimators=[], alphas=[0.5, 1.0])
    table = run_experiment(cfg)
    assert [r.estimator for r in table.rows] == ["oracle", "oracle"]
    assert all(math.isnan(r.v_hat) and np.isfinite(r.oracle_v_pie) for r in table.rows)


def test_failures_become_nan_rows_unless_strict():
    cfg = ExperimentConfig(environment={"name": "figure3"}, estimators=["oracle_is"], alphas=[1.0])
    row = run_experiment(cfg).rows[0]
    assert math.isnan(row.v_hat) and row.error.startswith("ValueError")
    assert run_experiment(cfg).failed
    with pytest.raises(ValueError):
        run_experiment(cfg, strict=True)


def test_sampled_sweep_runs_all_estimators():
    cfg = ExperimentConfig(environment={"name": "random_pomdp", "seed": 1, "L": 1},
                           estimators=["theorem1", "naive_is", {"name": "oracle_is"}],
                           alphas=[1.0], seeds=[0, 1], n=2000)
    table = run_experiment(cfg)
    assert len(table.rows) == 6
    assert all(np.isfinite(r.v_hat) for r in table.rows)


def test_config_validation(tmp_path):
    with pytest.raises(ValueError):
        ExperimentConfig(environment={"name": "figure3"}, alphas=[1.5])
    with pytest.raises(ValueError):
        ExperimentConfig(environment={"name": "figure3"}, estimators=["nope"])
    with pytest.raises(ValueError):
        ExperimentConfig(environment={"name": "figure3"}, estimators=[{"name": "theorem1", "bogus": 1}])
    with pytest.raises(FileNotFoundError):
        ExperimentConfig(environment={"name": "files", "model": str(tmp_path / "x"),
                                      "behavior_policy": "y", "eval_policy": "z"})


def test_csv_formats_nan_and_reprs():
    t = ResultTable([ResultRow(0.25, "theorem1", math.nan, 0.1, 0.2, 1e-17, 3.0, 2, 7, 100, "boom")])
    rows = _rows(t.to_csv())
    assert rows[1] == ["0.25", "theorem1", "nan", "0.1", "0.2", "1e-17", "3.0", "2", "7", "100", "boom"]


def test_svg_is_well_formed_and_has_series():
    cfg = ExperimentConfig(environment={"name": "figure3"}, estimators=["theorem1", "naive_is"],
                           alphas=[0.2, 0.6, 1.0])
    svg = render_svg(run_experiment(cfg))
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
    texts = " ".join(el.text or "" for el in root.iter() if el.tag.endswith("text"))
    for label in ("alpha", "theorem1", "naive_is", "oracle v(pi_e)"):
        assert label in texts
    assert sum(1 for el in root.iter() if el.tag.endswith("polyline")) >= 4


def test_svg_with_only_nan_values_still_parses():
    t = ResultTable([ResultRow(0.5, "theorem1", math.nan, math.nan, math.nan, math.nan, math.nan, 0, 0, 0)])
    ET.fromstring(render_svg(t))


def test_fit_affine_exact_and_zero():
    A = [0.2, 0.4, 0.2, 0.4]
    G = [0.3, 0.3, 0.9, 0.9]
    V = [0.5 * a - 0.25 * g for a, g in zip(A, G)]
    ca, cg, res = fit_affine(A, G, V)
    assert (ca, cg) == (pytest.approx(0.5), pytest.approx(-0.25)) and res <= 1e-12
    assert fit_affine(A, G, [0.0] * 4)[:2] == (pytest.approx(0.0), pytest.approx(0.0))


def test_fit_affine_rejects_degenerate_grid():
    with pytest.raises(ValueError):
        fit_affine([0.5, 0.5, 0.5], [0.1, 0.2, 0.3], [1, 2, 3])
    with pytest.raises(ValueError):
        fit_affine([0.1, 0.2], [0.2, 0.4], [1, 2])


@pytest.mark.parametrize("gamma", [0.3, 0.6, 0.9])
def test_figure3_crossing_near_point_eight_gamma(gamma):
    assert abs(figure3_crossing(gamma) - 0.8 * gamma) <= 0.02
