import json
import math

import numpy as np
import pytest

import oracles
from cpopt.backtest import (BacktestConfig, density_csv, excess_kurtosis, max_drawdown, paths_csv,
                            predictive_density_export, run_backtest, summarize)
from cpopt.changepoint import DetectorConfig
from cpopt.errors import DataError, NumericalError
from cpopt.ingest import ReturnPanel
from cpopt.optimizer import WeightVector

DET = DetectorConfig(arl0=500)


def step_panel(seed=0, n=800):
    """Two assets with mean shifts at different times, log returns around 1% vol."""
    rng = np.random.default_rng(seed)
    a = rng.normal(0, 0.01, n)
    b = rng.normal(0, 0.01, n)
    a[150:] += 0.05
    a[350:] -= 0.05
    b[250:] += 0.05
    return ReturnPanel.from_matrix(np.stack([a, b], 1), ["a", "b"])


TRAIN = ("2000-01-01", "2001-05-14")  # first 500 days
TEST = ("2001-05-15", "2002-03-10")


def test_constant_single_asset():
    g, T = 1.001, 30
    r = np.full(T, g - 1)
    rep = summarize("mvo", WeightVector(("a",), [1.0]), np.arange(T), r)
    assert rep.cumulative_return == pytest.approx(g**T, rel=1e-12)
    assert rep.std == 0 and rep.max_drawdown == 0
    assert rep.mean == pytest.approx(g, rel=1e-15)


def test_drawdown_examples():
    path = np.cumprod([1.0, 1.10, 0.80, 1.05])
    assert max_drawdown(path) == pytest.approx(20.0, abs=1e-12)
    assert max_drawdown([100, 80, 120]) == pytest.approx(20.0, abs=1e-12)
    assert max_drawdown(np.linspace(1, 3, 50)) == 0


def test_drawdown_oracle():
    rng = np.random.default_rng(1)
    for _ in range(20):
        path = np.cumprod(1 + rng.normal(0, 0.03, 80))
        assert max_drawdown(path) == pytest.approx(oracles.drawdown_pairs(path), abs=1e-12)


def test_kurtosis_examples():
    assert excess_kurtosis([-1, 1, -1, 1]) == pytest.approx(-2.0, abs=1e-12)
    with pytest.raises(NumericalError):
        excess_kurtosis([1, 1, 1, 1])
    with pytest.raises(DataError):
        excess_kurtosis([1, 2, 3])
    rng = np.random.default_rng(2)
    x = rng.standard_normal(20)
    assert excess_kurtosis(x) == pytest.approx(oracles.kurtosis_loop(list(x)), abs=1e-12)


def test_kurtosis_normal_sample():
    n = 100_000
    x = np.random.default_rng(3).standard_normal(n)
    assert abs(excess_kurtosis(x)) <= 3 * math.sqrt(24 / n)


def test_kurtosis_student_t():
    # nu = 9 keeps the eighth moment finite, so the sample kurtosis settles at 1e5 draws
    nu = 9
    x = np.random.default_rng(4).standard_t(nu, 100_000)
    assert excess_kurtosis(x) == pytest.approx(6 / (nu - 4), rel=0.25)


def _spreadsheet(panel, start, w):
    """Row-by-row compounding of the fixed-weight portfolio."""
    value, values = 1.0, [1.0]
    for row in panel.values[start:]:
        value *= 1 + sum(wi * (math.exp(x) - 1) for wi, x in zip(w, row))
        values.append(value)
    return values


def test_cpo_and_mvo_match_recomputation():
    panel = step_panel()
    reps = {m: run_backtest(panel, BacktestConfig(TRAIN, TEST, m, DET, resolution=0.01)) for m in ("cpo", "mvo")}
    assert not np.allclose(reps["cpo"].weights.weights, reps["mvo"].weights.weights)
    start = int(np.searchsorted(panel.timestamps, np.datetime64(TEST[0])))
    for rep in reps.values():
        values = _spreadsheet(panel, start, rep.weights.weights)[: len(rep.returns) + 1]
        assert rep.cumulative_return == pytest.approx(values[-1], rel=1e-10)
        assert rep.max_drawdown == pytest.approx(oracles.drawdown_pairs(values), abs=1e-10)
        assert rep.kurtosis == pytest.approx(oracles.kurtosis_loop(list(rep.returns)), abs=1e-10)
        assert rep.cumulative_return == pytest.approx(float(np.prod(1 + rep.returns)), rel=1e-12)


def test_no_look_ahead():
    panel = step_panel()
    cfg = BacktestConfig(TRAIN, TEST, "cpo", DET, resolution=0.01)
    base = run_backtest(panel, cfg)
    X = panel.values.copy()
    X[600:] += np.random.default_rng(9).normal(0, 0.05, X[600:].shape)
    moved = run_backtest(ReturnPanel.from_matrix(X, panel.asset_ids), cfg)
    np.testing.assert_array_equal(moved.weights.weights, base.weights.weights)
    assert moved.cumulative_return != base.cumulative_return


def test_config_validation():
    with pytest.raises(ValueError):
        BacktestConfig(("2001-01-01", "2001-12-31"), ("2001-06-01", "2002-01-01"))
    with pytest.raises(ValueError):
        BacktestConfig(TRAIN, TEST, method="equal")


def test_short_training_window():
    with pytest.raises(DataError):
        run_backtest(step_panel(), BacktestConfig(("2000-01-01", "2000-01-10"), TEST, "mvo"))


def test_report_json(tmp_path):
    panel = step_panel()
    rep = run_backtest(panel, BacktestConfig(TRAIN, TEST, "mvo", resolution=0.01))
    rep.write_json(tmp_path / "r.json")
    d = json.loads((tmp_path / "r.json").read_text())
    assert d["cumulative_return"] == rep.cumulative_return
    assert "kurtosis" in d["conventions"]
    assert float(np.prod(1 + np.array(d["returns"]))) == pytest.approx(d["cumulative_return"], rel=1e-12)
    assert paths_csv({"mvo": rep}).splitlines()[1] == "start,1"


def test_density_repeated_value():
    tab = predictive_density_export(np.full(40, 0.01), bins=10)
    assert tab.counts.max() == 40 and tab.counts.sum() == 40
    assert tab.x[np.argmax(tab.density)] == pytest.approx(0.01, abs=1e-4)


def test_density_normal_at_zero():
    x = np.random.default_rng(5).standard_normal(5000)
    tab = predictive_density_export(x, bins=40, grid_points=401)
    at0 = np.interp(0.0, tab.x, tab.density)
    assert at0 == pytest.approx(1 / math.sqrt(2 * math.pi), rel=0.10)
    assert tab.counts.sum() == 5000
    assert np.trapezoid(tab.density, tab.x) == pytest.approx(1.0, abs=1e-3)


def test_density_csv_layout():
    tab = predictive_density_export(np.random.default_rng(6).standard_normal(50), bins=5, grid_points=7)
    rows = density_csv({"cpo": tab}).splitlines()
    assert rows[0] == "method,kind,x_left,x_right,value" and len(rows) == 1 + 7 + 5
