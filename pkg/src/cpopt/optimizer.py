"""Box-constrained simplex allocation by exhaustive grid search.

Both objectives share one form, excess return over a quadratic risk term:

    f(w) = (w.R - R_f) / (w' M w)

with M the sample covariance (mean-variance baseline) or the break
affinity matrix (MJ ratio). Affinity matrices need not be positive
semi-definite, so there is no convex solver here. Every composition of
1/resolution that satisfies the bounds is evaluated and the best point is
then polished with small pairwise mass transfers.

Grid sizes explode with the number of assets. When no resolution is given,
the finest value on RESOLUTION_LADDER whose grid fits ``max_points`` is used.
"""
from __future__ import annotations

import csv
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .changepoint import BreakSet, DetectorConfig, detect_breaks
from .errors import DataError, InfeasibleError, NumericalError
from .ingest import ReturnPanel
from .io import atomic_write_text, fmt, write_json
from .setdist import AffinityMatrix, DistanceMeasure, affinity_matrix, distance_matrix

log = logging.getLogger(__name__)

RESOLUTION_LADDER = (0.005, 0.01, 0.02, 0.025, 0.05, 0.1, 0.125, 0.2, 0.25, 0.5, 1.0)
DEFAULT_RESOLUTION = 0.005
MAX_GRID_POINTS = 50_000_000
TIE_RTOL = 1e-12
FEAS_TOL = 1e-9


def _readonly(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PortfolioSpec:
    asset_ids: tuple[str, ...]
    expected_returns: np.ndarray
    risk_free: float = 0.0
    lower_bounds: np.ndarray | None = None
    upper_bounds: np.ndarray | None = None

    def __post_init__(self):
        ids = tuple(str(a) for a in self.asset_ids)
        n = len(ids)
        if n < 1:
            raise DataError("portfolio needs at least one asset")
        R = _readonly(self.expected_returns)
        lo = _readonly(np.zeros(n) if self.lower_bounds is None else np.broadcast_to(self.lower_bounds, (n,)))
        hi = _readonly(np.ones(n) if self.upper_bounds is None else np.broadcast_to(self.upper_bounds, (n,)))
        if R.shape != (n,):
            raise DataError("one expected return per asset required")
        if not np.all(np.isfinite(R)):
            raise DataError("expected returns must be finite")
        if np.any(lo < 0) or np.any(hi > 1) or np.any(lo > hi):
            raise InfeasibleError("bounds must satisfy 0 <= lower <= upper <= 1")
        if lo.sum() > 1 + FEAS_TOL or hi.sum() < 1 - FEAS_TOL:
            raise InfeasibleError(
                f"infeasible bounds: sum(lower)={lo.sum():.6g}, sum(upper)={hi.sum():.6g} must bracket 1")
        object.__setattr__(self, "asset_ids", ids)
        object.__setattr__(self, "expected_returns", R)
        object.__setattr__(self, "risk_free", float(self.risk_free))
        object.__setattr__(self, "lower_bounds", lo)
        object.__setattr__(self, "upper_bounds", hi)

    @property
    def n(self) -> int:
        return len(self.asset_ids)


@dataclass(frozen=True, eq=False)
class WeightVector:
    asset_ids: tuple[str, ...]
    weights: np.ndarray

    def __post_init__(self):
        w = _readonly(self.weights)
        ids = tuple(str(a) for a in self.asset_ids)
        if w.shape != (len(ids),):
            raise DataError("one weight per asset required")
        if abs(w.sum() - 1.0) > FEAS_TOL:
            raise DataError(f"weights sum to {w.sum():.12g}, not 1")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "asset_ids", ids)

    def check(self, spec: PortfolioSpec) -> None:
        if np.any(self.weights < spec.lower_bounds - FEAS_TOL) or np.any(self.weights > spec.upper_bounds + FEAS_TOL):
            raise DataError("weights violate bounds")

    def as_dict(self) -> dict:
        return dict(zip(self.asset_ids, (float(x) for x in self.weights)))

    def to_csv(self) -> str:
        rows = ["asset_id,weight"] + [f"{a},{fmt(x)}" for a, x in zip(self.asset_ids, self.weights)]
        return "\n".join(rows) + "\n"

    def write_csv(self, path) -> None:
        atomic_write_text(path, self.to_csv())


@dataclass(frozen=True, eq=False)
class RiskMatrix:
    kind: str
    values: np.ndarray
    asset_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in ("covariance", "affinity"):
            raise ValueError(f"unknown risk kind {self.kind!r}")
        M = _readonly(self.values)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise DataError("risk matrix must be square")
        if not np.allclose(M, M.T, rtol=0, atol=1e-12 * max(1.0, np.abs(M).max(initial=0))):
            raise DataError("risk matrix must be symmetric")
        if kind == "covariance":
            scale = max(np.abs(M).max(initial=0), 1e-300)
            if np.linalg.eigvalsh(M).min() < -1e-10 * scale:
                raise DataError("covariance matrix is not positive semi-definite")
        elif np.any(M < 0) or np.any(M > 1) or np.any(np.diag(M) != 1):
            raise DataError("affinity entries must lie in [0, 1] with unit diagonal")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "values", M)
        if self.asset_ids is not None:
            object.__setattr__(self, "asset_ids", tuple(self.asset_ids))

    @classmethod
    def affinity(cls, A: AffinityMatrix) -> "RiskMatrix":
        return cls("affinity", A.values, A.asset_ids)


def covariance(panel: ReturnPanel) -> RiskMatrix:
    X = panel.values
    if X.shape[0] < 2:
        raise DataError("covariance needs at least two observations")
    C = np.cov(X, rowvar=False, ddof=1).reshape(X.shape[1], X.shape[1])
    return RiskMatrix("covariance", 0.5 * (C + C.T), panel.asset_ids)


def _check_shapes(spec: PortfolioSpec, risk: RiskMatrix):
    if risk.values.shape != (spec.n, spec.n):
        raise DataError("risk matrix size does not match the portfolio")
    if risk.asset_ids is not None and risk.asset_ids != spec.asset_ids:
        raise DataError("risk matrix assets differ from portfolio assets")


def objective_value(w, spec: PortfolioSpec, risk: RiskMatrix) -> float:
    w = np.asarray(getattr(w, "weights", w), dtype=float)
    _check_shapes(spec, risk)
    den = float(w @ risk.values @ w)
    if not den > 0:
        raise NumericalError("degenerate risk: w' M w is not positive")
    return (float(w @ spec.expected_returns) - spec.risk_free) / den


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------

def grid_units(resolution: float) -> int:
    N = round(1.0 / resolution)
    if N < 1 or abs(N * resolution - 1.0) > 1e-9:
        raise ValueError(f"resolution {resolution} does not divide 1")
    return N


def integer_bounds(spec: PortfolioSpec, N: int) -> tuple[np.ndarray, np.ndarray]:
    lo = np.ceil(spec.lower_bounds * N - 1e-9).astype(np.int64)
    hi = np.floor(spec.upper_bounds * N + 1e-9).astype(np.int64)
    return lo, hi


def grid_size(spec: PortfolioSpec, resolution: float) -> int:
    """Exact number of feasible grid points."""
    N = grid_units(resolution)
    lo, hi = integer_bounds(spec, N)
    if lo.sum() > N or hi.sum() < N:
        return 0
    return kernels.count_table(lo, hi, N)[0][N]


def choose_resolution(spec: PortfolioSpec, max_points: int = MAX_GRID_POINTS,
                      finest: float = DEFAULT_RESOLUTION) -> float:
    """Finest ladder resolution (not below ``finest``) with a non-empty grid under budget."""
    for r in RESOLUTION_LADDER:
        if r < finest - 1e-15:
            continue
        size = grid_size(spec, r)
        if 0 < size <= max_points:
            return r
    raise InfeasibleError("no grid resolution fits the bounds within the point budget")


@dataclass(frozen=True)
class OptimizationResult:
    weights: WeightVector
    value: float
    resolution: float
    evaluations: int
    polish_steps: int = 0
    wall_time: float | None = field(default=None, compare=False)

    def __iter__(self):
        yield self.weights
        yield self.value

    def report(self, timing: bool = False, **extra) -> dict:
        out = {
            "objective_value": float(self.value),
            "resolution": float(self.resolution),
            "evaluations": int(self.evaluations),
            "polish_steps": int(self.polish_steps),
            "wall_time": float(self.wall_time) if timing and self.wall_time is not None else None,
        }
        out.update(extra)
        return out

    def write_report(self, path, timing: bool = False, **extra) -> None:
        write_json(path, self.report(timing, **extra))


def _value(w, R, M, rf):
    den = w @ M @ w
    return (w @ R - rf) / den if den > 0 else -np.inf


def polish(w, spec: PortfolioSpec, M: np.ndarray, step: float, balance: bool = True,
           max_steps: int = 100_000):
    """Steepest-ascent pairwise transfers of ``step`` between assets.

    Moves only on strict improvement. Among moves tied on value (relative
    1e-12) the one leaving the smaller sum of squared weights wins when
    ``balance`` is set, then the first (receiver, giver) pair in index order.
    """
    w = np.array(w, dtype=float)
    R, rf = spec.expected_returns, spec.risk_free
    lo, hi = spec.lower_bounds, spec.upper_bounds
    n = len(w)
    cur = _value(w, R, M, rf)
    steps = 0
    while steps < max_steps:
        moves = []
        for i in range(n):
            if w[i] + step > hi[i] + FEAS_TOL:
                continue
            for j in range(n):
                if j == i or w[j] - step < lo[j] - FEAS_TOL:
                    continue
                w[i] += step
                w[j] -= step
                moves.append((_value(w, R, M, rf), float(w @ w) if balance else 0.0, i, j))
                w[i] -= step
                w[j] += step
        if not moves:
            break
        top = max(m[0] for m in moves)
        if not top > cur + TIE_RTOL * max(1.0, abs(cur)):
            break
        tol = TIE_RTOL * max(1.0, abs(top))
        v, _, i, j = min((m for m in moves if m[0] >= top - tol), key=lambda m: (m[1], m[2], m[3]))
        w[i] += step
        w[j] -= step
        cur = v
        steps += 1
    return w, cur, steps


def optimize(spec: PortfolioSpec, risk: RiskMatrix, resolution: float | None = None,
             polish_result: bool = True, tie_break: str = "balanced",
             max_points: int = MAX_GRID_POINTS) -> OptimizationResult:
    """Global grid search plus local polish.

    ``tie_break``: "balanced" prefers, among objective ties (relative 1e-12),
    the point with the smallest sum of squared weights and then the
    lexicographically smallest; "lexicographic" skips the balance key.
    """
    _check_shapes(spec, risk)
    if tie_break not in ("balanced", "lexicographic"):
        raise ValueError("tie_break must be 'balanced' or 'lexicographic'")
    t0 = time.perf_counter()
    if resolution is None:
        resolution = choose_resolution(spec, max_points)
    N = grid_units(resolution)
    lo, hi = integer_bounds(spec, N)
    if lo.sum() > N or hi.sum() < N:
        raise InfeasibleError(
            f"no grid point satisfies the bounds at resolution {resolution}; use a finer resolution")
    size = kernels.count_table(lo, hi, N)[0][N]
    if size > max_points:
        raise InfeasibleError(f"grid has {size} points, over the budget of {max_points}; use a coarser resolution")
    M = np.ascontiguousarray(risk.values, dtype=float)
    R = np.ascontiguousarray(spec.expected_returns, dtype=float)
    c, val, evals = kernels.grid_search(R, M, spec.risk_free, lo, hi, N, TIE_RTOL,
                                        1.0 if tie_break == "balanced" else 0.0)
    if c[0] < 0 or not np.isfinite(val):
        raise NumericalError("degenerate risk: no grid point has a positive denominator")
    w = c / N
    steps = 0
    if polish_result and spec.n > 1:
        w, val, steps = polish(w, spec, M, resolution / 10.0, tie_break == "balanced")
    w = np.clip(w, spec.lower_bounds, spec.upper_bounds)
    w = w / w.sum()
    wv = WeightVector(spec.asset_ids, w)
    wv.check(spec)
    return OptimizationResult(wv, float(_value(w, R, M, spec.risk_free)), float(resolution), int(evals),
                              steps, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# pipelines
# ---------------------------------------------------------------------------

def _bounds(bounds, n):
    if bounds is None:
        return np.zeros(n), np.ones(n)
    lo, hi = bounds
    return np.broadcast_to(np.asarray(lo, float), (n,)), np.broadcast_to(np.asarray(hi, float), (n,))


def mean_returns(panel: ReturnPanel) -> np.ndarray:
    return panel.values.mean(axis=0)


def cpo_spec(panel: ReturnPanel, bounds=None, risk_free: float = 0.0,
             expected_returns=None) -> PortfolioSpec:
    lo, hi = _bounds(bounds, len(panel.asset_ids))
    R = mean_returns(panel) if expected_returns is None else expected_returns
    return PortfolioSpec(panel.asset_ids, R, risk_free, lo, hi)


def allocate_from_breaks(breaksets: Sequence[BreakSet], spec: PortfolioSpec,
                         measure: DistanceMeasure | None = None, resolution: float | None = None,
                         **kw) -> OptimizationResult:
    by_id = {bs.asset_id: bs for bs in breaksets}
    missing = [a for a in spec.asset_ids if a not in by_id]
    if missing:
        raise DataError(f"no break set for assets: {', '.join(missing)}")
    ordered = [by_id[a] for a in spec.asset_ids]
    A = affinity_matrix(distance_matrix(ordered, measure or DistanceMeasure()))
    return optimize(spec, RiskMatrix.affinity(A), resolution, **kw)


def allocate_cpo(panel: ReturnPanel, detector_config: DetectorConfig | None = None,
                 measure: DistanceMeasure | None = None, bounds=None,
                 resolution: float | None = None, risk_free: float = 0.0,
                 expected_returns=None, **kw) -> OptimizationResult:
    """Detect breaks per asset, build the break affinity, maximize the MJ ratio."""
    detector_config = detector_config or DetectorConfig()
    breaks = [detect_breaks(panel[a], detector_config) for a in panel.asset_ids]
    for bs in breaks:
        if len(bs) == 0:
            raise DataError(f"empty break set for asset {bs.asset_id}; no structural breaks detected")
    spec = cpo_spec(panel, bounds, risk_free, expected_returns)
    return allocate_from_breaks(breaks, spec, measure, resolution, **kw)


def allocate_mvo(panel: ReturnPanel, bounds=None, resolution: float | None = None,
                 risk_free: float = 0.0, expected_returns=None, **kw) -> OptimizationResult:
    """Maximize excess return over portfolio variance with the sample covariance."""
    spec = cpo_spec(panel, bounds, risk_free, expected_returns)
    return optimize(spec, covariance(panel), resolution, **kw)


def read_weights(path) -> WeightVector:
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"weights file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    try:
        return WeightVector(tuple(r["asset_id"] for r in rows), [float(r["weight"]) for r in rows])
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: bad weights file ({exc})") from None
