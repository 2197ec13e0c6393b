"""Agglomerative clustering of assets on a break-distance matrix.

Cluster ids follow the usual convention: leaves are 0..n-1 and the cluster
formed by merge k gets id n + k. Distances between clusters are updated with
the Lance-Williams recurrence.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .io import atomic_write_text, fmt
from .setdist import DistanceMatrix

LINKAGES = ("average", "single", "complete")


@dataclass(frozen=True)
class Merge:
    a: int
    b: int
    height: float
    size: int


@dataclass(frozen=True)
class Dendrogram:
    labels: tuple[str, ...]
    merges: tuple[Merge, ...]
    linkage: str = "average"

    def __post_init__(self):
        if len(self.merges) != len(self.labels) - 1:
            raise DataError("a dendrogram over n leaves has n - 1 merges")

    @property
    def heights(self) -> np.ndarray:
        return np.array([m.height for m in self.merges])

    def members(self, cid: int) -> list[int]:
        n = len(self.labels)
        if cid < n:
            return [cid]
        m = self.merges[cid - n]
        return sorted(self.members(m.a) + self.members(m.b))

    def to_newick(self) -> str:
        n = len(self.labels)

        def height(cid):
            return 0.0 if cid < n else self.merges[cid - n].height

        def node(cid):
            if cid < n:
                return self.labels[cid]
            m = self.merges[cid - n]
            kids = ",".join(f"{node(c)}:{fmt(m.height - height(c))}" for c in (m.a, m.b))
            return f"({kids})"

        return node(2 * n - 2) + ";"

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "linkage": self.linkage,
            "merges": [{"a": m.a, "b": m.b, "height": m.height, "size": m.size} for m in self.merges],
        }

    def write_json(self, path) -> None:
        atomic_write_text(path, json.dumps(self.to_dict(), indent=2) + "\n")

    def write_newick(self, path) -> None:
        atomic_write_text(path, self.to_newick() + "\n")


def hclust(D: DistanceMatrix, linkage: str = "average") -> Dendrogram:
    """Agglomerative clustering; ties go to the pair with the smallest (i, j) ids."""
    if linkage not in LINKAGES:
        raise ValueError(f"linkage must be one of {LINKAGES}")
    labels = D.asset_ids
    n = len(labels)
    if n < 2:
        raise DataError("clustering needs at least two assets")
    size = 2 * n - 1
    d = np.full((size, size), np.inf)
    d[:n, :n] = D.values
    count = np.zeros(size, dtype=int)
    count[:n] = 1
    active = list(range(n))
    merges = []
    for step in range(n - 1):
        best = (np.inf, 0, 0)
        for x in range(len(active)):
            i = active[x]
            for y in range(x + 1, len(active)):
                j = active[y]
                if d[i, j] < best[0]:
                    best = (d[i, j], i, j)
        h, i, j = best
        new = n + step
        ni, nj = count[i], count[j]
        for k in active:
            if k in (i, j):
                continue
            if linkage == "average":
                v = (ni * d[i, k] + nj * d[j, k]) / (ni + nj)
            elif linkage == "single":
                v = min(d[i, k], d[j, k])
            else:
                v = max(d[i, k], d[j, k])
            d[new, k] = d[k, new] = v
        count[new] = ni + nj
        active = [k for k in active if k not in (i, j)] + [new]
        merges.append(Merge(int(i), int(j), float(h), int(ni + nj)))
    return Dendrogram(tuple(labels), tuple(merges), linkage)


def cut(dendrogram: Dendrogram, k: int) -> list[list[str]]:
    """Partition left after undoing the k - 1 last (tallest) merges.

    Clusters are listed in order of their first leaf; members keep leaf order.
    """
    n = len(dendrogram.labels)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}]")
    parent = list(range(n))

    def root(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for m in dendrogram.merges[: n - k]:
        leaves_a = dendrogram.members(m.a)
        leaves_b = dendrogram.members(m.b)
        ra, rb = root(leaves_a[0]), root(leaves_b[0])
        parent[max(ra, rb)] = min(ra, rb)
    groups: dict[int, list[str]] = {}
    for leaf in range(n):
        groups.setdefault(root(leaf), []).append(dendrogram.labels[leaf])
    return [groups[r] for r in sorted(groups)]


def partition_csv(parts: list[list[str]]) -> str:
    lines = ["asset_id,cluster"]
    for c, members in enumerate(parts, start=1):
        lines += [f"{a},{c}" for a in members]
    return "\n".join(lines) + "\n"
