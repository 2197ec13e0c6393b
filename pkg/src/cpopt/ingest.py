"""Price loading, log returns and calendar alignment."""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import DataError
from .io import atomic_write_text

log = logging.getLogger(__name__)


def _frozen(a, dtype=None) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


def _dates(values) -> np.ndarray:
    return np.asarray(values).astype("datetime64[D]")


@dataclass(frozen=True, eq=False)
class PriceSeries:
    asset_id: str
    timestamps: np.ndarray
    prices: np.ndarray

    def __post_init__(self):
        ts = _frozen(_dates(self.timestamps))
        px = _frozen(self.prices, dtype=float)
        if ts.shape != px.shape or ts.ndim != 1:
            raise DataError(f"{self.asset_id}: timestamps and prices differ in length")
        if len(px) < 2:
            raise DataError(f"{self.asset_id}: need at least 2 prices, got {len(px)}")
        if np.any(np.diff(ts) <= np.timedelta64(0, "D")):
            raise DataError(f"{self.asset_id}: timestamps must be strictly increasing")
        if not np.all(np.isfinite(px)) or np.any(px <= 0):
            raise DataError(f"{self.asset_id}: prices must be finite and positive")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "prices", px)

    def __len__(self) -> int:
        return len(self.prices)


@dataclass(frozen=True, eq=False)
class ReturnSeries:
    asset_id: str
    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ts = _frozen(_dates(self.timestamps))
        v = _frozen(self.values, dtype=float)
        if ts.shape != v.shape or ts.ndim != 1:
            raise DataError(f"{self.asset_id}: timestamps and values differ in length")
        if len(v) and np.any(np.diff(ts) <= np.timedelta64(0, "D")):
            raise DataError(f"{self.asset_id}: timestamps must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise DataError(f"{self.asset_id}: returns contain missing or infinite values")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.values)

    @classmethod
    def from_values(cls, values, asset_id: str = "x", start: str = "2000-01-01") -> "ReturnSeries":
        """Wrap a bare array on a consecutive daily calendar."""
        values = np.asarray(values, dtype=float)
        ts = np.datetime64(start, "D") + np.arange(len(values))
        return cls(asset_id, ts, values)

    def between(self, start=None, end=None) -> "ReturnSeries":
        mask = _date_mask(self.timestamps, start, end)
        return ReturnSeries(self.asset_id, self.timestamps[mask], self.values[mask])


def _date_mask(ts, start, end):
    mask = np.ones(len(ts), dtype=bool)
    if start is not None:
        mask &= ts >= np.datetime64(start, "D")
    if end is not None:
        mask &= ts <= np.datetime64(end, "D")
    return mask


@dataclass(frozen=True, eq=False)
class ReturnPanel:
    """Return series sharing one timestamp grid."""

    assets: tuple[ReturnSeries, ...]

    def __post_init__(self):
        assets = tuple(self.assets)
        if not assets:
            raise DataError("panel needs at least one asset")
        ts = assets[0].timestamps
        for s in assets[1:]:
            if not np.array_equal(s.timestamps, ts):
                raise DataError(f"{s.asset_id}: timestamps differ from {assets[0].asset_id}")
        ids = [s.asset_id for s in assets]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate asset ids in panel")
        object.__setattr__(self, "assets", assets)

    @property
    def asset_ids(self) -> list[str]:
        return [s.asset_id for s in self.assets]

    @property
    def timestamps(self) -> np.ndarray:
        return self.assets[0].timestamps

    @property
    def values(self) -> np.ndarray:
        """(T, n) matrix of returns, one column per asset."""
        return np.column_stack([s.values for s in self.assets])

    def __len__(self) -> int:
        return len(self.timestamps)

    def __getitem__(self, asset_id: str) -> ReturnSeries:
        for s in self.assets:
            if s.asset_id == asset_id:
                return s
        raise KeyError(asset_id)

    def between(self, start=None, end=None) -> "ReturnPanel":
        return ReturnPanel(tuple(s.between(start, end) for s in self.assets))

    @classmethod
    def from_matrix(cls, values, asset_ids: Sequence[str] | None = None,
                    start: str = "2000-01-01") -> "ReturnPanel":
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        ids = list(asset_ids) if asset_ids is not None else [f"a{i + 1}" for i in range(values.shape[1])]
        return cls(tuple(ReturnSeries.from_values(values[:, j], ids[j], start)
                         for j in range(values.shape[1])))


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for price CSVs.

    ``price_columns`` maps CSV column -> asset id. Left as None, every
    column other than the date column is an asset named after its header.
    A per-asset file is the special case of a single mapped column.
    """

    date_column: str = "date"
    price_columns: Mapping[str, str] | None = None
    date_format: str = "%Y-%m-%d"


def load_csv(path, schema: CsvSchema | None = None) -> list[PriceSeries]:
    schema = schema or CsvSchema()
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"price file not found: {path}")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    if schema.date_column not in frame.columns:
        raise DataError(f"{path}: missing date column {schema.date_column!r}")

    mapping = dict(schema.price_columns) if schema.price_columns is not None else {
        c: c for c in frame.columns if c != schema.date_column}
    missing = [c for c in mapping if c not in frame.columns]
    if missing:
        raise DataError(f"{path}: missing price columns {missing}")
    if not mapping:
        raise DataError(f"{path}: no price columns")

    dates = pd.to_datetime(frame[schema.date_column].str.strip(),
                           format=schema.date_format, errors="coerce")
    if dates.isna().any():
        bad = frame[schema.date_column][dates.isna()].iloc[0]
        raise DataError(f"{path}: unparseable date {bad!r}")
    dates = dates.to_numpy().astype("datetime64[D]")

    out = []
    for column, asset_id in mapping.items():
        prices = pd.to_numeric(frame[column].str.strip(), errors="coerce").to_numpy(dtype=float)
        keep = np.isfinite(prices)
        dropped = int((~keep).sum())
        if dropped:
            log.info("%s: dropped %d row(s) with unparseable price for %s", path, dropped, asset_id)
        ts, px = dates[keep], prices[keep]
        if len(px) == 0:
            raise DataError(f"{path}: no parseable rows for {asset_id}")
        uniq, counts = np.unique(ts, return_counts=True)
        if np.any(counts > 1):
            raise DataError(f"{path}: duplicate timestamp {uniq[counts > 1][0]} for {asset_id}")
        if np.any(px <= 0):
            raise DataError(f"{path}: non-positive price for {asset_id}")
        order = np.argsort(ts, kind="stable")
        out.append(PriceSeries(asset_id, ts[order], px[order]))
    return out


def log_returns(series: PriceSeries) -> ReturnSeries:
    values = np.diff(np.log(series.prices))
    return ReturnSeries(series.asset_id, series.timestamps[1:], values)


def align(series: Iterable[ReturnSeries]) -> ReturnPanel:
    """Restrict every series to the dates common to all of them."""
    series = list(series)
    if not series:
        raise DataError("align needs at least one series")
    common = reduce(np.intersect1d, (s.timestamps for s in series))
    if len(common) == 0:
        raise DataError("empty intersection of timestamps")
    out = []
    for s in series:
        mask = np.isin(s.timestamps, common)
        out.append(ReturnSeries(s.asset_id, s.timestamps[mask], s.values[mask]))
    return ReturnPanel(tuple(out))


def load_returns(path, schema: CsvSchema | None = None) -> ReturnPanel:
    """load_csv -> log_returns -> align."""
    return align(log_returns(p) for p in load_csv(path, schema))


def write_prices_csv(path, timestamps, prices: Mapping[str, np.ndarray]) -> None:
    frame = pd.DataFrame({"date": np.datetime_as_string(_dates(timestamps), unit="D")})
    for asset_id, px in prices.items():
        frame[asset_id] = [repr(float(v)) for v in px]
    atomic_write_text(path, frame.to_csv(index=False, lineterminator="\n"))
