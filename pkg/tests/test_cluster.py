import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from causalboost.cluster import (Dendrogram, Merge, correlation_distance, cut_clusters, default_k,
                                 select_representatives, ward_linkage)
from causalboost.errors import DataQualityWarning, ValidationError
from causalboost.tabular import CorrelationMatrix, FrameTable, pearson_matrix


def ward_closed_form(D, A, B):
    """Ward distance between member sets from the original matrix, no recurrence."""
    nA, nB = len(A), len(B)
    ab = D[np.ix_(A, B)].mean()
    aa = D[np.ix_(A, A)].mean()
    bb = D[np.ix_(B, B)].mean()
    return 2.0 * nA * nB / (nA + nB) * (ab - 0.5 * aa - 0.5 * bb)


def brute_force_ward(D):
    """O(d^3)-per-step agglomeration re-deriving every distance from D."""
    d = len(D)
    clusters = {i: [i] for i in range(d)}
    merges = []
    for t in range(d - 1):
        ids = sorted(clusters)
        best = min((ward_closed_form(D, clusters[u], clusters[v]), u, v)
                   for i, u in enumerate(ids) for v in ids[i + 1:])
        h, u, v = best
        clusters[d + t] = clusters.pop(u) + clusters.pop(v)
        merges.append((u, v, h))
    return merges


def random_distance(rng, d):
    A = rng.uniform(size=(d, d))
    D = (A + A.T) / 2
    np.fill_diagonal(D, 0.0)
    return D


def test_closed_form_reduces_to_input_for_singletons():
    D = random_distance(np.random.default_rng(0), 4)
    assert ward_closed_form(D, [1], [3]) == pytest.approx(D[1, 3])


def test_matches_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(40):
        d = int(rng.integers(2, 11))
        D = random_distance(rng, d)
        got = ward_linkage(D).merges
        for m, (u, v, h) in zip(got, brute_force_ward(D)):
            assert (m.a, m.b) == (u, v)
            assert m.height == pytest.approx(h, abs=1e-9)


def test_heights_are_monotone():
    rng = np.random.default_rng(2)
    for _ in range(20):
        heights = [m.height for m in ward_linkage(random_distance(rng, 9)).merges]
        assert all(a <= b + 1e-12 for a, b in zip(heights, heights[1:]))


def test_identical_features_merge_first_at_zero():
    x = np.random.default_rng(3).normal(size=50)
    y = np.random.default_rng(4).normal(size=50)
    cm = pearson_matrix(FrameTable.from_columns({"a": x, "b": y, "c": 2 * x + 1}))
    first = ward_linkage(correlation_distance(cm)).merges[0]
    assert (first.a, first.b) == (0, 2)
    assert first.height == pytest.approx(0.0, abs=1e-12)


def test_block_structure_recovered():
    rng = np.random.default_rng(5)
    f1, f2 = rng.normal(size=400), rng.normal(size=400)
    cols = {f"a{i}": f1 + 0.1 * rng.normal(size=400) for i in range(3)}
    cols.update({f"b{i}": f2 + 0.1 * rng.normal(size=400) for i in range(3)})
    cm = pearson_matrix(FrameTable.from_columns(cols))
    dend = ward_linkage(correlation_distance(cm), cm.names)
    labels = cut_clusters(dend, 2)
    np.testing.assert_array_equal(labels, [0, 0, 0, 1, 1, 1])
    assert default_k(dend) == 2


def test_cut_refines_and_ranges():
    dend = ward_linkage(random_distance(np.random.default_rng(6), 7))
    assert np.all(cut_clusters(dend, 1) == 0)
    np.testing.assert_array_equal(cut_clusters(dend, 7), np.arange(7))
    for k in range(1, 7):
        coarse, fine = cut_clusters(dend, k), cut_clusters(dend, k + 1)
        assert len(set(fine)) == k + 1
        for label in set(fine):
            assert len(set(coarse[fine == label])) == 1
    with pytest.raises(ValidationError):
        cut_clusters(dend, 0)
    with pytest.raises(ValidationError):
        cut_clusters(dend, 8)


def test_single_feature():
    with pytest.warns(DataQualityWarning):
        dend = ward_linkage(np.zeros((1, 1)), ["x"])
    assert dend.merges == () and dend.leaf_order == [0]
    np.testing.assert_array_equal(cut_clusters(dend, 1), [0])


def test_bad_inputs():
    with pytest.raises(ValidationError):
        ward_linkage(np.zeros((2, 3)))
    with pytest.raises(ValidationError):
        ward_linkage(np.zeros((0, 0)))


def test_leaf_order_and_export(tmp_path):
    dend = Dendrogram(3, (Merge(0, 2, 0.1, 2), Merge(1, 3, 0.5, 3)), ("a", "b", "c"))
    assert dend.leaf_order == [1, 0, 2]
    dend.to_csv(tmp_path / "d.csv")
    assert (tmp_path / "d.csv").read_text().splitlines() == ["a,b,height,size", "0,2,0.1,2", "1,3,0.5,3"]


def test_representative_is_hub():
    rho = np.array([[1.0, 0.9, 0.9], [0.9, 1.0, 0.2], [0.9, 0.2, 1.0]])
    cm = CorrelationMatrix(("a", "b", "c"), rho)
    assert select_representatives(None, cm, [0, 0, 0]) == ["a"]


def test_representative_ties_and_singletons():
    rho = np.array([[1.0, -0.5, 0.0], [-0.5, 1.0, 0.0], [0.0, 0.0, 1.0]])
    cm = CorrelationMatrix(("a", "b", "c"), rho)
    assert select_representatives(None, cm, [0, 0, 1]) == ["a", "c"]
    with pytest.raises(ValidationError):
        select_representatives(None, cm, [0, 1])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_sign_flip_invariance(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(40, 6)) @ rng.normal(size=(6, 6))
    names = [f"c{j}" for j in range(6)]
    base = pearson_matrix(FrameTable.from_columns(dict(zip(names, X.T))))
    X[:, 2] *= -1
    flipped = pearson_matrix(FrameTable.from_columns(dict(zip(names, X.T))))
    a = ward_linkage(correlation_distance(base)).merges
    b = ward_linkage(correlation_distance(flipped)).merges
    assert [(m.a, m.b) for m in a] == [(m.a, m.b) for m in b]
    np.testing.assert_allclose([m.height for m in a], [m.height for m in b], atol=1e-9)
