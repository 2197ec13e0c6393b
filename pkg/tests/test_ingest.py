import logging
import math

import numpy as np
import pytest

from cpopt.errors import DataError
from cpopt.ingest import (CsvSchema, PriceSeries, ReturnPanel, ReturnSeries, align, load_csv,
                          load_returns, log_returns, write_prices_csv)


def _csv(tmp_path, text, name="p.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_three_rows(tmp_path):
    p = _csv(tmp_path, "date,SPX\n2020-01-01,100\n2020-01-02,101\n2020-01-03,99\n")
    (s,) = load_csv(p)
    assert s.asset_id == "SPX" and len(s) == 3


def test_blank_price_dropped_and_logged(tmp_path, caplog):
    rows = [f"2020-01-{d:02d},{'' if d == 5 else 100 + d}" for d in range(1, 11)]
    p = _csv(tmp_path, "date,SPX\n" + "\n".join(rows) + "\n")
    with caplog.at_level(logging.INFO):
        (s,) = load_csv(p)
    assert len(s) == 9
    assert "dropped 1 row" in caplog.text


def test_duplicate_timestamp(tmp_path):
    p = _csv(tmp_path, "date,SPX\n2020-01-01,100\n2020-01-01,101\n2020-01-02,102\n")
    with pytest.raises(DataError, match="duplicate timestamp"):
        load_csv(p)


def test_missing_file_names_path(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.csv"):
        load_csv(tmp_path / "nope.csv")


def test_no_parseable_rows(tmp_path):
    p = _csv(tmp_path, "date,SPX\n2020-01-01,x\n2020-01-02,\n")
    with pytest.raises(DataError, match="no parseable rows"):
        load_csv(p)


def test_schema_mapping(tmp_path):
    p = _csv(tmp_path, "day,a,b\n2020-01-01,1,2\n2020-01-02,2,3\n")
    out = load_csv(p, CsvSchema(date_column="day", price_columns={"b": "B"}))
    assert [s.asset_id for s in out] == ["B"]
    np.testing.assert_array_equal(out[0].prices, [2, 3])


def _ps(prices, start="2020-01-01"):
    ts = np.datetime64(start) + np.arange(len(prices))
    return PriceSeries("x", ts, prices)


@pytest.mark.parametrize("prices,expected", [
    ([100, 100, 100], [0.0, 0.0]),
    ([100, 110], [math.log(1.1)]),
    ([1, math.e, math.e**2], [1.0, 1.0]),
])
def test_log_returns(prices, expected):
    r = log_returns(_ps(prices))
    np.testing.assert_allclose(r.values, expected, rtol=0, atol=1e-15)
    assert r.timestamps[0] == np.datetime64("2020-01-02")


def test_price_invariants():
    with pytest.raises(DataError):
        _ps([100, -1])
    with pytest.raises(DataError):
        _ps([100])
    with pytest.raises(DataError):
        PriceSeries("x", np.array(["2020-01-02", "2020-01-01"], dtype="datetime64[D]"), [1, 2])


def test_round_trip_prices():
    rng = np.random.default_rng(3)
    prices = 50 * np.exp(np.cumsum(rng.normal(0, 0.02, 300)))
    r = log_returns(_ps(prices))
    rebuilt = np.exp(np.concatenate([[0.0], np.cumsum(r.values)]))
    np.testing.assert_allclose(rebuilt / rebuilt[0], prices / prices[0], rtol=1e-12)


def _rs(aid, start, n):
    ts = np.datetime64(start) + np.arange(n)
    return ReturnSeries(aid, ts, np.arange(n, dtype=float))


def test_align_identical_grids():
    p = align([_rs("a", "2020-01-01", 5), _rs("b", "2020-01-01", 5)])
    assert p.values.shape == (5, 2)


def test_align_intersection():
    p = align([_rs("a", "2020-01-01", 3), _rs("b", "2020-01-02", 3)])
    assert list(p.timestamps.astype(str)) == ["2020-01-02", "2020-01-03"]
    np.testing.assert_array_equal(p["a"].values, [1, 2])
    np.testing.assert_array_equal(p["b"].values, [0, 1])


def test_align_disjoint():
    with pytest.raises(DataError, match="empty intersection"):
        align([_rs("a", "2020-01-01", 3), _rs("b", "2021-01-01", 3)])


def test_align_idempotent():
    p = align([_rs("a", "2020-01-01", 6), _rs("b", "2020-01-03", 6), _rs("c", "2020-01-02", 4)])
    q = align(p.assets)
    assert np.array_equal(q.values, p.values) and np.array_equal(q.timestamps, p.timestamps)
    assert q.asset_ids == p.asset_ids


def test_types_are_read_only():
    s = _rs("a", "2020-01-01", 3)
    with pytest.raises(ValueError):
        s.values[0] = 1.0


def test_panel_between_and_matrix():
    p = ReturnPanel.from_matrix(np.arange(12.0).reshape(6, 2), ["a", "b"])
    sub = p.between("2000-01-02", "2000-01-04")
    assert sub.values.shape == (3, 2)


def test_write_then_load(tmp_path):
    ts = np.datetime64("2020-01-01") + np.arange(4)
    path = tmp_path / "w.csv"
    write_prices_csv(path, ts, {"a": np.array([1.0, 2.0, 4.0, 8.0])})
    panel = load_returns(path)
    np.testing.assert_allclose(panel["a"].values, [math.log(2)] * 3)
