"""Distances between finite sets of break locations.

Three measures are provided: the MJ_p semi-metric (averaged p-th powers of
nearest-point distances), the Hausdorff metric, and the 1-D Wasserstein
metric in quantile form. Break indices are treated as real positions on the
time axis, so distances are measured in observation periods.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .changepoint import BreakSet
from .errors import DataError
from .io import atomic_write_text, fmt

KINDS = ("mj", "hausdorff", "wasserstein")


def _points(S, name="S") -> np.ndarray:
    a = S.as_array() if isinstance(S, BreakSet) else np.asarray(S, dtype=float).ravel()
    if a.size == 0:
        label = S.asset_id if isinstance(S, BreakSet) else name
        raise DataError(f"empty break set: {label}")
    if not np.all(np.isfinite(a)):
        raise DataError(f"non-finite break location in {name}")
    return np.sort(a)


def nearest_distances(x: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """min_y |x_i - y| for each x_i; Y must be sorted."""
    pos = np.searchsorted(Y, x)
    left = Y[np.clip(pos - 1, 0, len(Y) - 1)]
    right = Y[np.clip(pos, 0, len(Y) - 1)]
    return np.minimum(np.abs(x - left), np.abs(x - right))


def mj_distance(S, T, p: float = 0.5) -> float:
    """MJ_p semi-metric.

    ( sum_t d(t,S)^p / (2|T|) + sum_s d(s,T)^p / (2|S|) )^(1/p)
    """
    if not p > 0:
        raise ValueError("p must be positive")
    s, t = _points(S, "S"), _points(T, "T")
    dt = nearest_distances(t, s)
    ds = nearest_distances(s, t)
    inner = np.sum(dt**p) / (2 * len(t)) + np.sum(ds**p) / (2 * len(s))
    return float(inner ** (1.0 / p))


def hausdorff_distance(S, T) -> float:
    s, t = _points(S, "S"), _points(T, "T")
    return float(max(nearest_distances(s, t).max(), nearest_distances(t, s).max()))


def wasserstein_distance(S, T, q: float = 1.0) -> float:
    """q-Wasserstein distance between the uniform empirical measures on S and T.

    Integrates |F_S^-1(u) - F_T^-1(u)|^q exactly: both quantile functions
    are step functions, constant between consecutive points of the merged
    grid {i/|S|} U {j/|T|}.
    """
    if not q >= 1:
        raise ValueError("q must be >= 1")
    s, t = _points(S, "S"), _points(T, "T")
    a, b = len(s), len(t)
    if a == b:
        return float(np.mean(np.abs(s - t) ** q) ** (1.0 / q))
    # breakpoints on the integer scale u * a * b
    grid = np.union1d(np.arange(a + 1) * b, np.arange(b + 1) * a)
    lo, hi = grid[:-1], grid[1:]
    i = -(-hi // b) - 1  # ceil(hi / b), zero-based
    j = -(-hi // a) - 1
    total = np.sum((hi - lo) * np.abs(s[i] - t[j]) ** q) / (a * b)
    return float(total ** (1.0 / q))


@dataclass(frozen=True)
class DistanceMeasure:
    kind: str = "mj"
    order: float = 0.5

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in KINDS:
            raise ValueError(f"unknown distance kind {self.kind!r}; choose from {KINDS}")
        object.__setattr__(self, "kind", kind)
        if kind == "mj" and not self.order > 0:
            raise ValueError("MJ order p must be positive")
        if kind == "wasserstein" and not self.order >= 1:
            raise ValueError("Wasserstein order q must be >= 1")

    def __call__(self, S, T) -> float:
        if self.kind == "mj":
            return mj_distance(S, T, self.order)
        if self.kind == "hausdorff":
            return hausdorff_distance(S, T)
        return wasserstein_distance(S, T, self.order)

    def label(self) -> str:
        return "hausdorff" if self.kind == "hausdorff" else f"{self.kind}(order={fmt(self.order)})"


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class _LabeledSquare:
    asset_ids: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        ids = tuple(str(a) for a in self.asset_ids)
        v = _readonly(self.values)
        if v.ndim != 2 or v.shape != (len(ids), len(ids)):
            raise DataError("matrix shape does not match asset ids")
        if len(set(ids)) != len(ids):
            raise DataError("duplicate asset id in matrix")
        if not np.allclose(v, v.T, rtol=0, atol=1e-12):
            raise DataError("matrix is not symmetric")
        object.__setattr__(self, "asset_ids", ids)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.asset_ids)

    def to_csv(self) -> str:
        lines = [",".join(("asset_id",) + self.asset_ids)]
        for aid, row in zip(self.asset_ids, self.values):
            lines.append(",".join([aid] + [fmt(x) for x in row]))
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        atomic_write_text(path, self.to_csv())

    @classmethod
    def read_csv(cls, path):
        path = os.fspath(path)
        if not os.path.exists(path):
            raise FileNotFoundError(f"matrix file not found: {path}")
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise DataError(f"{path}: empty matrix file")
        ids = rows[0][1:]
        body = rows[1:]
        if [r[0] for r in body] != ids:
            raise DataError(f"{path}: row labels do not match header")
        try:
            vals = np.array([[float(x) for x in r[1:]] for r in body])
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from None
        return cls(tuple(ids), vals)


class DistanceMatrix(_LabeledSquare):
    """Pairwise break-set distances: symmetric, zero diagonal, non-negative."""

    def __post_init__(self):
        super().__post_init__()
        if np.any(self.values < 0) or np.any(np.diag(self.values) != 0):
            raise DataError("distance matrix needs a zero diagonal and non-negative entries")


class AffinityMatrix(_LabeledSquare):
    """1 - D / max(D): symmetric, unit diagonal, entries in [0, 1]."""

    def __post_init__(self):
        super().__post_init__()
        v = self.values
        if np.any(v < 0) or np.any(v > 1) or np.any(np.diag(v) != 1):
            raise DataError("affinity entries must lie in [0, 1] with unit diagonal")


def distance_matrix(breaksets: Sequence[BreakSet], measure: DistanceMeasure | None = None) -> DistanceMatrix:
    measure = measure or DistanceMeasure()
    if len(breaksets) < 2:
        raise DataError("distance matrix needs at least two assets")
    for bs in breaksets:
        if len(bs) == 0:
            raise DataError(f"empty break set for asset {bs.asset_id}")
    n = len(breaksets)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            D[i, j] = D[j, i] = measure(breaksets[i], breaksets[j])
    return DistanceMatrix(tuple(bs.asset_id for bs in breaksets), D)


def affinity_matrix(D: DistanceMatrix) -> AffinityMatrix:
    top = D.values.max()
    if top == 0:
        A = np.ones_like(D.values)
    else:
        A = 1.0 - D.values / top
        np.fill_diagonal(A, 1.0)
    return AffinityMatrix(D.asset_ids, A)
