"""Nonparametric change-point detection with Mann-Whitney statistics.

Two regimes share one statistic. Batch (Phase I) detection scans a fixed
sample for its single most likely split. Sequential (Phase II) detection
grows a window one observation at a time, raises an alarm when the window
maximum crosses a length-dependent threshold, and restarts the window at the
estimated split.

Thresholds come from Monte-Carlo simulation of the null distribution. The
statistic is rank based, so i.i.d. standard normal draws cover every
continuous null. Tables are persisted in a JSON cache keyed by a hash of
everything that determines them.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .errors import DataError
from .ingest import ReturnSeries
from .io import atomic_write_text

log = logging.getLogger(__name__)

# smallest right-hand sample in sequential monitoring
RIGHT_MIN = 2
CACHE_VERSION = 2
_MIN_EXCEEDANCES = 2.0
_CHUNK_CELLS = 4_000_000


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BreakSet:
    """Detected breaks for one asset.

    ``indices`` are split points: index k means observations ``[0, k)``
    precede the change and ``k`` is the first observation after it.
    """

    asset_id: str
    indices: tuple[int, ...]
    timestamps: tuple | None = None

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(i < 1 for i in idx):
            raise DataError(f"{self.asset_id}: break indices must be >= 1")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise DataError(f"{self.asset_id}: break indices must be strictly increasing")
        object.__setattr__(self, "indices", idx)
        if self.timestamps is not None:
            ts = tuple(self.timestamps)
            if len(ts) != len(idx):
                raise DataError(f"{self.asset_id}: one timestamp per break required")
            object.__setattr__(self, "timestamps", ts)

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=float)


@dataclass(frozen=True)
class DetectorConfig:
    """Detector settings.

    Set ``alpha`` for batch detection or ``arl0`` for sequential detection,
    not both. ``horizon`` caps the window length used for sequential
    threshold calibration; longer windows reuse the last threshold.
    """

    alpha: float | None = None
    arl0: int | None = 1000
    min_segment: int = 20
    mc_reps: int = 5000
    seed: int = 0
    horizon: int = 2000

    def __post_init__(self):
        if (self.alpha is None) == (self.arl0 is None):
            raise ValueError("set exactly one of alpha (batch) or arl0 (sequential)")
        if self.alpha is not None and not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.arl0 is not None and self.arl0 < 1:
            raise ValueError("arl0 must be a positive integer")
        if self.min_segment < 2:
            raise ValueError("min_segment must be >= 2")
        if self.mc_reps < 1000:
            raise ValueError("mc_reps must be >= 1000")
        if self.arl0 is not None and self.arl0 <= self.min_segment + RIGHT_MIN:
            raise ValueError("arl0 must exceed the start-up length min_segment + 2")

    @property
    def hazard(self) -> float:
        """Per-step false-alarm probability once monitoring starts.

        Chosen so the expected run length, start-up included, equals arl0.
        """
        if self.arl0 is None:
            raise ValueError("hazard is defined for sequential configs only")
        return 1.0 / (self.arl0 - (self.min_segment + RIGHT_MIN - 1))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ThresholdTable:
    """Null thresholds by sequence length.

    ``kind`` is "batch" (h_n for a full sample of length n) or "sequential"
    (h_m for a monitoring window of length m; lengths past the table end use
    the last entry).
    """

    kind: str
    level: float
    lengths: tuple[int, ...]
    thresholds: tuple[float, ...]
    min_segment: int
    mc_reps: int
    seed: int

    def __post_init__(self):
        if self.kind not in ("batch", "sequential"):
            raise ValueError(f"unknown threshold kind {self.kind!r}")
        if len(self.lengths) != len(self.thresholds):
            raise ValueError("lengths and thresholds differ in size")
        if any(h < 0 for h in self.thresholds):
            raise ValueError("thresholds must be non-negative")

    def lookup(self, n: int) -> float:
        if self.kind == "batch":
            try:
                return self.thresholds[self.lengths.index(n)]
            except ValueError:
                raise KeyError(f"no batch threshold for length {n}") from None
        pos = int(np.searchsorted(self.lengths, n, side="right")) - 1
        if pos < 0:
            return math.inf
        return self.thresholds[pos]

    def as_array(self) -> np.ndarray:
        """Sequential thresholds indexed by window length (inf before start-up)."""
        if self.kind != "sequential":
            raise ValueError("as_array is for sequential tables")
        top = self.lengths[-1]
        h = np.full(top + 1, np.inf)
        h[np.asarray(self.lengths)] = self.thresholds
        return h

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lengths"] = list(self.lengths)
        d["thresholds"] = [float(x) for x in self.thresholds]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ThresholdTable":
        return cls(kind=d["kind"], level=float(d["level"]), lengths=tuple(d["lengths"]),
                   thresholds=tuple(float(x) for x in d["thresholds"]),
                   min_segment=int(d["min_segment"]), mc_reps=int(d["mc_reps"]),
                   seed=int(d["seed"]))


# ---------------------------------------------------------------------------
# threshold cache
# ---------------------------------------------------------------------------

def default_cache_dir() -> Path | None:
    env = os.environ.get("CPOPT_CACHE_DIR")
    if env is not None:
        return Path(env) if env else None
    return Path.home() / ".cache" / "cpopt"


class ThresholdCache:
    """JSON-backed store of threshold tables.

    The file holds ``{"version": 1, "entries": {key: table}}``; keys hash the
    statistic, level, length spec and simulation settings.
    """

    def __init__(self, directory=None):
        self.directory = Path(directory) if directory is not None else default_cache_dir()
        self._memory: dict[str, ThresholdTable] = {}

    @property
    def path(self) -> Path | None:
        return None if self.directory is None else self.directory / "thresholds.json"

    @staticmethod
    def key(kind: str, level: float, length_spec, config: DetectorConfig) -> str:
        payload = json.dumps({
            "v": CACHE_VERSION, "stat": "mann-whitney", "kind": kind, "level": repr(float(level)),
            "lengths": length_spec, "min_segment": config.min_segment,
            "right_min": RIGHT_MIN, "mc_reps": config.mc_reps, "seed": config.seed,
        }, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:24]

    def _load(self) -> dict:
        if self.path is None or not self.path.exists():
            return {}
        try:
            data = json.loads(self.path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            log.warning("ignoring unreadable threshold cache %s", self.path)
            return {}
        if data.get("version") != CACHE_VERSION:
            return {}
        return data.get("entries", {})

    def get(self, key: str) -> ThresholdTable | None:
        if key in self._memory:
            return self._memory[key]
        entry = self._load().get(key)
        if entry is None:
            return None
        table = ThresholdTable.from_dict(entry)
        self._memory[key] = table
        return table

    def put(self, key: str, table: ThresholdTable) -> None:
        self._memory[key] = table
        if self.path is None:
            return
        entries = self._load()
        entries[key] = table.to_dict()
        atomic_write_text(self.path, json.dumps({"version": CACHE_VERSION, "entries": entries},
                                                sort_keys=True))


_default_cache: ThresholdCache | None = None


def get_cache() -> ThresholdCache:
    global _default_cache
    if _default_cache is None or _default_cache.directory != default_cache_dir():
        _default_cache = ThresholdCache()
    return _default_cache


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------

def _values(series) -> np.ndarray:
    if isinstance(series, ReturnSeries):
        return np.asarray(series.values, dtype=float)
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise DataError("series must be one-dimensional")
    if not np.all(np.isfinite(x)):
        raise DataError("series contains non-finite values")
    return x


def _asset_id(series, default: str = "x") -> str:
    return series.asset_id if isinstance(series, ReturnSeries) else default


def mw_normalized_stat(series, k: int) -> float:
    """|U - E U| / sd(U) for the split of ``series`` after its first k values.

    U counts pairs (i <= k < j) with x_i > x_j, ties counting one half; the
    standard deviation carries the mid-rank tie correction. All-tied input
    gives 0.
    """
    x = _values(series)
    n = len(x)
    if not 2 <= k <= n - 2:
        raise ValueError(f"split k={k} outside [2, {n - 2}]")
    return float(kernels.mw_profile(x, k, k)[0])


def _simulate_rows(rng, reps, n):
    rows = max(1, _CHUNK_CELLS // max(n, 1))
    for lo in range(0, reps, rows):
        yield rng.standard_normal((min(rows, reps - lo), n))


def _weibull_quantile(values: np.ndarray, level: float) -> float:
    return float(np.quantile(values, level, method="weibull"))


def null_batch_stats(n: int, config: DetectorConfig, reps: int | None = None,
                     seed: int | None = None) -> np.ndarray:
    """Simulated null draws of the batch statistic D_n."""
    kmin = config.min_segment
    if n < 2 * kmin:
        raise DataError(f"length {n} below 2*min_segment={2 * kmin}")
    reps = config.mc_reps if reps is None else reps
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng([seed, 1, n])
    return np.concatenate([kernels.mw_scan_batch(X, kmin, n - kmin)
                           for X in _simulate_rows(rng, reps, n)])


def _sequential_horizon(config: DetectorConfig, reps: int) -> int:
    haz = config.hazard
    m0 = config.min_segment + RIGHT_MIN
    usable = math.log(reps * haz / _MIN_EXCEEDANCES) / -math.log1p(-haz) if reps * haz > _MIN_EXCEEDANCES else 0
    return int(min(config.horizon, max(m0, m0 + math.ceil(usable))))


def null_stream_stats(config: DetectorConfig, horizon: int, reps: int | None = None,
                      seed: int | None = None) -> np.ndarray:
    """Null D_m along growing windows, shape (reps, horizon)."""
    reps = config.mc_reps if reps is None else reps
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng([seed, 2, horizon])
    return np.concatenate([kernels.stream_stats(X, config.min_segment, RIGHT_MIN)
                           for X in _simulate_rows(rng, reps, horizon)])


def calibrate_sequential(stats: np.ndarray, hazard: float, m0: int) -> tuple[list[int], list[float]]:
    """Raw per-length thresholds with constant conditional hazard.

    At each window length the threshold is the upper-``hazard`` quantile of
    the statistic among streams without an earlier alarm; those exceeding it
    are then removed. Calibration stops when too few streams survive to
    resolve the quantile.
    """
    reps, H = stats.shape
    alive = np.ones(reps, dtype=bool)
    lengths, values = [], []
    for m in range(m0, H + 1):
        n_alive = int(alive.sum())
        if n_alive * hazard < _MIN_EXCEEDANCES:
            break
        col = stats[alive, m - 1]
        h = _weibull_quantile(col, 1.0 - hazard)
        lengths.append(m)
        values.append(h)
        alive[alive] = col <= h
    return lengths, values


def smooth_thresholds(h: np.ndarray, m0: int, frac: float = 0.1) -> np.ndarray:
    """Moving average whose half-width grows with window length."""
    h = np.asarray(h, dtype=float)
    csum = np.concatenate([[0.0], np.cumsum(h)])
    i = np.arange(len(h))
    w = (frac * (i + m0)).astype(int)
    a = np.maximum(0, i - w)
    b = np.minimum(len(h), i + w + 1)
    return (csum[b] - csum[a]) / (b - a)


def first_crossings(stats: np.ndarray, boundary: np.ndarray, m0: int) -> np.ndarray:
    """First window length at which each stream exceeds the boundary (H + 1 if never)."""
    reps, H = stats.shape
    exc = stats[:, m0 - 1:m0 - 1 + len(boundary)] > boundary[None, :]
    hit = exc.any(axis=1)
    return np.where(hit, exc.argmax(axis=1) + m0, H + 1)


def level_shift(stats: np.ndarray, boundary: np.ndarray, hazard: float, m0: int,
                iters: int = 60) -> float:
    """Shift making the alarm probability by the last length match the target."""
    H = m0 + len(boundary) - 1
    target = 1.0 - (1.0 - hazard) ** (H - m0 + 1)
    S = stats[:, :H]
    lo, hi = -1.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.mean(first_crossings(S, boundary + mid, m0) <= H) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def build_thresholds(kind: str, lengths, config: DetectorConfig,
                     cache: ThresholdCache | None = None) -> ThresholdTable:
    """Monte-Carlo threshold table.

    kind="batch": ``lengths`` is an iterable of sample sizes, level
    ``config.alpha``. kind="sequential": ``lengths`` is the largest window to
    calibrate (None for ``config.horizon``), level ``config.arl0``.
    """
    cache = get_cache() if cache is None else cache
    if kind == "batch":
        if config.alpha is None:
            raise ValueError("batch thresholds need config.alpha")
        lengths = sorted({int(n) for n in lengths})
        out = []
        for n in lengths:
            key = ThresholdCache.key("batch", config.alpha, n, config)
            table = cache.get(key)
            if table is None:
                h = _weibull_quantile(null_batch_stats(n, config), 1.0 - config.alpha)
                table = ThresholdTable("batch", config.alpha, (n,), (h,), config.min_segment,
                                       config.mc_reps, config.seed)
                cache.put(key, table)
            out.append(table.thresholds[0])
        return ThresholdTable("batch", config.alpha, tuple(lengths), tuple(out),
                              config.min_segment, config.mc_reps, config.seed)

    if kind == "sequential":
        if config.arl0 is None:
            raise ValueError("sequential thresholds need config.arl0")
        cap = config.horizon if lengths is None else min(int(lengths), config.horizon)
        horizon = min(cap, _sequential_horizon(config, config.mc_reps))
        key = ThresholdCache.key("sequential", config.arl0, horizon, config)
        table = cache.get(key)
        if table is None:
            stats = null_stream_stats(config, horizon)
            m0 = config.min_segment + RIGHT_MIN
            ls, raw = calibrate_sequential(stats, config.hazard, m0)
            if not ls:
                raise DataError("mc_reps too small to calibrate this arl0")
            # per-length quantiles overfit the simulated streams; smooth them
            # and refit a single level on the run-length distribution
            hs = smooth_thresholds(raw, m0)
            hs = np.maximum(hs + level_shift(stats, hs, config.hazard, m0), 0.0)
            table = ThresholdTable("sequential", float(config.arl0), tuple(ls), tuple(float(v) for v in hs),
                                   config.min_segment, config.mc_reps, config.seed)
            cache.put(key, table)
        return table

    raise ValueError(f"unknown threshold kind {kind!r}")


# ---------------------------------------------------------------------------
# detection
# ---------------------------------------------------------------------------

def batch_detect(series, config: DetectorConfig, table: ThresholdTable | None = None):
    """Single-break test on a fixed sample.

    Returns ``(tau, D_n)`` when the scan maximum exceeds the level-alpha null
    threshold, else None. tau is the smallest maximizing split.
    """
    x = _values(series)
    n = len(x)
    kmin = config.min_segment
    if n < 2 * kmin:
        raise DataError(f"series of length {n} too short for min_segment={kmin}")
    if table is None:
        table = build_thresholds("batch", [n], config)
    d, k = kernels.mw_scan(x, kmin, n - kmin)
    if d > table.lookup(n):
        return int(k), float(d)
    return None


@dataclass(frozen=True)
class Alarm:
    time: int
    location: int
    statistic: float


def sequential_alarms(series, config: DetectorConfig, table: ThresholdTable | None = None,
                      max_alarms: int | None = None) -> list[Alarm]:
    """Run sequential monitoring and return every alarm in order."""
    x = _values(series)
    if table is None:
        table = build_thresholds("sequential", None, config)
    if table.kind != "sequential":
        raise ValueError("sequential monitoring needs a sequential table")
    times, locs, stats = kernels.sequential_scan(x, table.as_array(), config.min_segment, RIGHT_MIN)
    alarms = [Alarm(int(t), int(k), float(s)) for t, k, s in zip(times, locs, stats)]
    return alarms if max_alarms is None else alarms[:max_alarms]


def sequential_detect(series, config: DetectorConfig,
                      table: ThresholdTable | None = None) -> BreakSet:
    x = _values(series)
    aid = _asset_id(series)
    if len(x) < config.min_segment:
        return BreakSet(aid, ())
    alarms = sequential_alarms(x, config, table)
    return _breakset(series, aid, [a.location for a in alarms])


def _breakset(series, aid, indices) -> BreakSet:
    ts = None
    if isinstance(series, ReturnSeries):
        ts = tuple(str(series.timestamps[i]) for i in indices)
    return BreakSet(aid, tuple(indices), ts)


def enforce_min_segment(indices: Sequence[int], min_segment: int) -> list[int]:
    kept: list[int] = []
    for i in indices:
        if i >= min_segment and (not kept or i - kept[-1] >= min_segment):
            kept.append(int(i))
    return kept


def detect_breaks(series, config: DetectorConfig | None = None,
                  table: ThresholdTable | None = None) -> BreakSet:
    """Multi-break detection over the full history."""
    config = config or DetectorConfig()
    bs = sequential_detect(series, config, table)
    kept = enforce_min_segment(bs.indices, config.min_segment)
    return _breakset(series, bs.asset_id, kept)


# ---------------------------------------------------------------------------
# CSV exchange
# ---------------------------------------------------------------------------

BREAKS_HEADER = ("asset_id", "index", "timestamp")


def breaks_to_csv(breaksets: Iterable[BreakSet]) -> str:
    lines = [",".join(BREAKS_HEADER)]
    for bs in breaksets:
        ts = bs.timestamps or ("",) * len(bs)
        for i, t in zip(bs.indices, ts):
            lines.append(f"{bs.asset_id},{i},{t}")
    return "\n".join(lines) + "\n"


def write_breaks(path, breaksets: Iterable[BreakSet]) -> None:
    atomic_write_text(path, breaks_to_csv(breaksets))


def read_breaks(path) -> list[BreakSet]:
    """Break sets in first-appearance order of their asset ids."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"break file not found: {path}")
    rows: dict[str, list[tuple[int, str]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"asset_id", "index"} <= set(reader.fieldnames):
            raise DataError(f"{path}: expected columns {BREAKS_HEADER}")
        for row in reader:
            try:
                idx = int(row["index"])
            except (TypeError, ValueError):
                raise DataError(f"{path}: bad index {row['index']!r}") from None
            rows.setdefault(row["asset_id"], []).append((idx, row.get("timestamp") or ""))
    out = []
    for aid, items in rows.items():
        items.sort()
        ts = tuple(t for _, t in items)
        out.append(BreakSet(aid, tuple(i for i, _ in items), ts if all(ts) else None))
    return out
