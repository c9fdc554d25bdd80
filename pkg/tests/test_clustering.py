import numpy as np
import pytest

from diarkit.clustering import ahc_cluster, build_dendrogram
from diarkit.errors import ValidationError

from .oracles import naive_ahc, same_partition


def random_scores(rng, n, ties=False):
    if ties:
        A = rng.integers(-3, 4, size=(n, n)).astype(float)
    else:
        A = rng.standard_normal((n, n))
    S = np.triu(A, 1)
    S = S + S.T
    np.fill_diagonal(S, np.inf)
    return S


def test_spec_example():
    S = np.array([[0, 0.9, 0.1], [0.9, 0, 0.1], [0.1, 0.1, 0]])
    res = ahc_cluster(S, 0.5)
    assert list(res.labels) == [0, 0, 1]
    assert res.n_clusters == 2
    assert res.merge_trace == ((0, 1, 0.9),)


def test_single_and_empty():
    res = ahc_cluster(np.zeros((1, 1)), 0.0)
    assert list(res.labels) == [0] and res.n_clusters == 1 and res.merge_trace == ()


def test_all_below_threshold_singletons():
    rng = np.random.default_rng(0)
    S = random_scores(rng, 7)
    res = ahc_cluster(S, 100.0)
    assert list(res.labels) == list(range(7))


@pytest.mark.parametrize("seed", range(200))
def test_matches_naive(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 13))
    S = random_scores(rng, n, ties=seed % 2 == 0)
    for thr in (-1.0, 0.0, 0.5, float(rng.normal())):
        got = ahc_cluster(S, thr).labels
        want = naive_ahc(S, thr)
        np.testing.assert_array_equal(got, want)


def test_infinite_thresholds():
    rng = np.random.default_rng(1)
    for n in range(2, 10):
        S = random_scores(rng, n)
        assert ahc_cluster(S, -np.inf).n_clusters == 1
        assert ahc_cluster(S, np.inf).n_clusters == n


def test_threshold_monotone():
    rng = np.random.default_rng(2)
    for _ in range(50):
        S = random_scores(rng, int(rng.integers(2, 15)))
        counts = [ahc_cluster(S, t).n_clusters for t in np.linspace(-3, 3, 41)]
        assert counts == sorted(counts)


def test_invariants():
    rng = np.random.default_rng(3)
    for _ in range(50):
        n = int(rng.integers(1, 12))
        res = ahc_cluster(random_scores(rng, n), float(rng.normal()))
        assert sorted(set(res.labels)) == list(range(res.n_clusters))
        assert len(res.merge_trace) == n - res.n_clusters
        # numbered by first member
        firsts = [int(np.flatnonzero(res.labels == k)[0]) for k in range(res.n_clusters)]
        assert firsts == sorted(firsts)


def test_permutation_invariance():
    rng = np.random.default_rng(4)
    for _ in range(50):
        n = int(rng.integers(2, 12))
        S = random_scores(rng, n)
        perm = rng.permutation(n)
        a = ahc_cluster(S, 0.0).labels
        b = ahc_cluster(S[np.ix_(perm, perm)], 0.0).labels
        assert same_partition(a[perm], b)


def test_dendrogram_prefix():
    rng = np.random.default_rng(5)
    S = random_scores(rng, 9)
    d = build_dendrogram(S)
    assert len(d.merges) == 8
    for t in np.linspace(-2, 2, 9):
        np.testing.assert_array_equal(d.cut(t).labels, ahc_cluster(S, t).labels)


def test_errors():
    S = np.array([[0, 1.0], [0.5, 0]])
    with pytest.raises(ValidationError):
        ahc_cluster(S, 0)
    with pytest.raises(ValidationError):
        ahc_cluster(np.array([[0, np.nan], [np.nan, 0]]), 0)
    with pytest.raises(ValidationError):
        ahc_cluster(np.zeros((2, 3)), 0)
    # within tolerance is accepted
    ahc_cluster(np.array([[0, 1.0], [1.0 + 1e-12, 0]]), 0)
