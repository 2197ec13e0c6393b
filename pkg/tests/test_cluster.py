import json

import numpy as np
import pytest

import oracles
from cpopt.cluster import Dendrogram, cut, hclust, partition_csv
from cpopt.errors import DataError
from cpopt.setdist import DistanceMatrix, distance_matrix
from cpopt.synthetic import eight_asset_regime


def _D(values, ids=None):
    values = np.asarray(values, float)
    ids = ids or tuple(f"x{i}" for i in range(len(values)))
    return DistanceMatrix(ids, values)


def random_D(rng, n):
    P = rng.uniform(0, 100, (n, 2))
    return _D(np.sqrt(((P[:, None] - P[None]) ** 2).sum(-1)))


def test_two_points():
    d = hclust(_D([[0, 1], [1, 0]]))
    assert len(d.merges) == 1 and d.merges[0].height == 1


def test_three_points_single():
    d = hclust(_D([[0, 1, 10], [1, 0, 10], [10, 10, 0]]), "single")
    assert (d.merges[0].a, d.merges[0].b, d.merges[0].height) == (0, 1, 1)
    assert d.merges[1].height == 10


@pytest.mark.parametrize("linkage", ["average", "single", "complete"])
def test_heights_match_naive(linkage):
    rng = np.random.default_rng(0)
    for _ in range(20):
        D = random_D(rng, 6)
        np.testing.assert_allclose(hclust(D, linkage).heights, oracles.linkage_naive(D.values, linkage),
                                   rtol=1e-12)


def test_average_heights_non_decreasing():
    rng = np.random.default_rng(1)
    for _ in range(20):
        h = hclust(random_D(rng, 8)).heights
        assert np.all(np.diff(h) >= -1e-12)


def test_tie_goes_to_smallest_pair():
    d = hclust(_D(np.ones((4, 4)) - np.eye(4)))
    assert (d.merges[0].a, d.merges[0].b) == (0, 1)


def test_permutation_isomorphic():
    rng = np.random.default_rng(2)
    D = random_D(rng, 7)
    perm = rng.permutation(7)
    Dp = _D(D.values[np.ix_(perm, perm)], tuple(D.asset_ids[i] for i in perm))
    a, b = hclust(D), hclust(Dp)
    np.testing.assert_allclose(a.heights, b.heights, rtol=1e-12)
    for k in range(1, 8):
        assert sorted(map(sorted, cut(a, k))) == sorted(map(sorted, cut(b, k)))


def test_cut_extremes_and_refinement():
    rng = np.random.default_rng(3)
    d = hclust(random_D(rng, 6))
    assert cut(d, 6) == [[f"x{i}"] for i in range(6)]
    assert cut(d, 1) == [[f"x{i}" for i in range(6)]]
    for k in range(2, 7):
        fine, coarse = cut(d, k), cut(d, k - 1)
        assert len(fine) == k
        assert all(any(set(f) <= set(c) for c in coarse) for f in fine)
    with pytest.raises(ValueError):
        cut(d, 0)


def test_errors():
    with pytest.raises(DataError):
        hclust(_D([[0.0]]))
    with pytest.raises(ValueError):
        hclust(_D([[0, 1], [1, 0]]), "ward")


def test_exports(tmp_path):
    d = hclust(_D([[0, 2, 6], [2, 0, 6], [6, 6, 0]], ("a", "b", "c")))
    assert d.to_newick() == "(c:6,(a:2,b:2):4);"
    d.write_json(tmp_path / "d.json")
    back = json.loads((tmp_path / "d.json").read_text())
    assert back["linkage"] == "average" and len(back["merges"]) == 2
    assert partition_csv(cut(d, 2)) == "asset_id,cluster\na,1\nb,1\nc,2\n"
    assert isinstance(d, Dendrogram)


def test_regime_grouping():
    sims = eight_asset_regime()
    d = hclust(distance_matrix([s.true_breaks for s in sims]))
    assert cut(d, 4) == [["asset1", "asset2", "asset3"], ["asset4", "asset5", "asset6"], ["asset7"], ["asset8"]]
