"""Train/test evaluation of fixed-weight allocations.

Weights are fitted on the training window and then held fixed. Each test
period's portfolio return is sum_i w_i r_i on simple returns r = exp(x) - 1.
Reported statistics use these conventions:

- mean: average gross return 1 + r
- std: sample standard deviation of r (ddof = 1)
- max_drawdown: percent, on the value path starting at 1
- kurtosis: excess kurtosis of r with population moments
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .changepoint import DetectorConfig
from .errors import DataError, NumericalError
from .ingest import ReturnPanel
from .io import atomic_write_text, fmt
from .optimizer import WeightVector, allocate_cpo, allocate_mvo
from .setdist import DistanceMeasure

CONVENTIONS = {
    "returns": "simple, r = exp(log_return) - 1",
    "portfolio_return": "sum_i w_i r_i with weights fixed over the test window",
    "mean": "mean per-period gross return 1 + r",
    "std": "sample standard deviation of r, ddof = 1",
    "max_drawdown": "percent, peak to trough of the value path starting at 1",
    "kurtosis": "excess kurtosis m4 / m2^2 - 3, population moments",
}


def _date(d):
    return None if d is None or d == "" else np.datetime64(d, "D")


@dataclass(frozen=True)
class BacktestConfig:
    train_range: tuple
    test_range: tuple
    method: str = "cpo"
    detector_config: DetectorConfig = field(default_factory=DetectorConfig)
    measure: DistanceMeasure = field(default_factory=DistanceMeasure)
    bounds: tuple = (0.0, 1.0)
    resolution: float | None = None
    risk_free: float = 0.0

    def __post_init__(self):
        method = self.method.lower()
        if method not in ("cpo", "mvo"):
            raise ValueError("method must be 'cpo' or 'mvo'")
        object.__setattr__(self, "method", method)
        tr = tuple(_date(d) for d in self.train_range)
        te = tuple(_date(d) for d in self.test_range)
        if len(tr) != 2 or len(te) != 2:
            raise ValueError("ranges are (start, end) pairs")
        for a, b in (tr, te):
            if a is not None and b is not None and a > b:
                raise ValueError("range start after end")
        if tr[1] is None or te[0] is None or not tr[1] < te[0]:
            raise ValueError("training range must end before the test range starts")
        object.__setattr__(self, "train_range", tr)
        object.__setattr__(self, "test_range", te)


@dataclass(frozen=True, eq=False)
class BacktestReport:
    method: str
    weights: WeightVector
    timestamps: np.ndarray
    returns: np.ndarray
    cumulative_return: float
    mean: float
    std: float
    max_drawdown: float
    kurtosis: float
    objective_value: float | None = None
    resolution: float | None = None

    @property
    def path(self) -> np.ndarray:
        return np.concatenate([[1.0], np.cumprod(1.0 + self.returns)])

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "weights": self.weights.as_dict(),
            "cumulative_return": self.cumulative_return,
            "mean": self.mean,
            "std": self.std,
            "max_drawdown": self.max_drawdown,
            "kurtosis": None if np.isnan(self.kurtosis) else self.kurtosis,
            "objective_value": self.objective_value,
            "resolution": self.resolution,
            "n_periods": int(len(self.returns)),
            "test_start": str(self.timestamps[0]),
            "test_end": str(self.timestamps[-1]),
            "returns": [float(r) for r in self.returns],
            "conventions": CONVENTIONS,
        }

    def write_json(self, path) -> None:
        atomic_write_text(path, json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def max_drawdown(path) -> float:
    """Largest peak-to-trough fall of a positive value path, in percent."""
    v = np.asarray(path, dtype=float)
    if v.size == 0 or np.any(v <= 0):
        raise DataError("drawdown needs a non-empty path of positive values")
    peak = np.maximum.accumulate(v)
    return float(np.max((peak - v) / peak) * 100.0)


def excess_kurtosis(returns) -> float:
    r = np.asarray(returns, dtype=float)
    if r.size < 4:
        raise DataError("kurtosis needs at least four observations")
    d = r - r.mean()
    m2 = np.mean(d**2)
    if m2 == 0:
        raise NumericalError("kurtosis undefined for zero variance")
    return float(np.mean(d**4) / m2**2 - 3.0)


def portfolio_returns(panel: ReturnPanel, weights: WeightVector) -> np.ndarray:
    if tuple(panel.asset_ids) != weights.asset_ids:
        raise DataError("weights and panel list different assets")
    return np.expm1(panel.values) @ weights.weights


def summarize(method, weights, timestamps, r, objective=None, resolution=None) -> BacktestReport:
    r = np.asarray(r, dtype=float)
    gross = 1.0 + r
    path = np.concatenate([[1.0], np.cumprod(gross)])
    std = float(np.std(r, ddof=1)) if r.size > 1 else 0.0
    kurt = excess_kurtosis(r) if r.size >= 4 and np.ptp(r) > 0 else float("nan")
    return BacktestReport(method, weights, np.asarray(timestamps), r, float(path[-1]),
                          float(gross.mean()), std, max_drawdown(path), kurt, objective, resolution)


def fit_weights(train: ReturnPanel, config: BacktestConfig):
    bounds = config.bounds
    if config.method == "cpo":
        return allocate_cpo(train, config.detector_config, config.measure, bounds,
                            config.resolution, config.risk_free)
    return allocate_mvo(train, bounds, config.resolution, config.risk_free)


def run_backtest(panel: ReturnPanel, config: BacktestConfig) -> BacktestReport:
    train = panel.between(*config.train_range)
    test = panel.between(*config.test_range)
    if len(test.timestamps) == 0:
        raise DataError("test range holds no observations")
    need = 2 * config.detector_config.min_segment
    if len(train.timestamps) < max(need, 2):
        raise DataError(f"training range holds {len(train.timestamps)} observations, need {need}")
    fit = fit_weights(train, config)
    r = portfolio_returns(test, fit.weights)
    return summarize(config.method, fit.weights, test.timestamps, r, fit.value, fit.resolution)


@dataclass(frozen=True, eq=False)
class DensityTable:
    x: np.ndarray
    density: np.ndarray
    bin_edges: np.ndarray
    counts: np.ndarray
    bandwidth: float


def silverman_bandwidth(r: np.ndarray) -> float:
    n = r.size
    sd = np.std(r, ddof=1) if n > 1 else 0.0
    q75, q25 = np.percentile(r, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return float(0.9 * spread * n ** (-0.2))


def predictive_density_export(returns, bins: int = 50, grid_points: int = 200) -> DensityTable:
    """Gaussian KDE with Silverman's bandwidth plus a histogram of the same data."""
    r = np.asarray(returns, dtype=float)
    if r.size == 0:
        raise DataError("density needs at least one observation")
    bw = silverman_bandwidth(r)
    if not bw > 0:
        # degenerate sample: a narrow spike at the common value
        bw = 1e-3 * max(abs(float(r[0])), 1e-3)
    x = np.linspace(r.min() - 4 * bw, r.max() + 4 * bw, grid_points)
    u = (x[:, None] - r[None, :]) / bw
    dens = np.exp(-0.5 * u * u).sum(axis=1) / (r.size * bw * np.sqrt(2 * np.pi))
    counts, edges = np.histogram(r, bins=bins)
    return DensityTable(x, dens, edges, counts, bw)


def paths_csv(reports: dict[str, BacktestReport]) -> str:
    names = list(reports)
    first = reports[names[0]]
    lines = ["timestamp," + ",".join(names)]
    lines.append("start," + ",".join("1" for _ in names))
    for t, ts in enumerate(first.timestamps):
        lines.append(f"{ts}," + ",".join(fmt(reports[m].path[t + 1]) for m in names))
    return "\n".join(lines) + "\n"


def density_csv(tables: dict[str, DensityTable]) -> str:
    lines = ["method,kind,x_left,x_right,value"]
    for name, tab in tables.items():
        for x, d in zip(tab.x, tab.density):
            lines.append(f"{name},kde,{fmt(x)},{fmt(x)},{fmt(d)}")
        for a, b, c in zip(tab.bin_edges[:-1], tab.bin_edges[1:], tab.counts):
            lines.append(f"{name},hist,{fmt(a)},{fmt(b)},{int(c)}")
    return "\n".join(lines) + "\n"
