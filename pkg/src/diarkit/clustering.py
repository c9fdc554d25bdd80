"""Average-linkage agglomerative clustering on a similarity matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

__all__ = ["ClusterAssignment", "Dendrogram", "build_dendrogram", "ahc_cluster"]


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray
    n_clusters: int
    # (first member of cluster a, first member of cluster b, average score)
    merge_trace: tuple = ()


@dataclass(frozen=True)
class Dendrogram:
    """Complete greedy merge sequence; any threshold cuts a prefix of it."""

    n: int
    merges: tuple

    def n_merges(self, threshold: float) -> int:
        for i, (_, _, score) in enumerate(self.merges):
            if score < threshold:
                return i
        return len(self.merges)

    def cut(self, threshold: float) -> ClusterAssignment:
        return self.cut_after(self.n_merges(threshold))

    def cut_after(self, n_merges: int) -> ClusterAssignment:
        parent = list(range(self.n))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for a, b, _ in self.merges[:n_merges]:
            ra, rb = find(a), find(b)
            parent[max(ra, rb)] = min(ra, rb)
        roots = [find(i) for i in range(self.n)]
        # roots are the smallest member, so sorting them numbers clusters by first segment
        relabel = {r: k for k, r in enumerate(sorted(set(roots)))}
        labels = np.array([relabel[r] for r in roots], dtype=int)
        return ClusterAssignment(labels, len(relabel), tuple(self.merges[:n_merges]))


def _check_scores(scores):
    S = np.asarray(scores, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValidationError(f"score matrix must be square, got shape {S.shape}")
    off = ~np.eye(len(S), dtype=bool)
    vals = S[off]
    if np.any(np.isnan(vals)):
        raise ValidationError("NaN in score matrix")
    with np.errstate(invalid="ignore"):
        diff = np.abs(S - S.T)[off]
    finite = np.isfinite(S[off]) & np.isfinite(S.T[off])
    if np.any(diff[finite] > 1e-9) or np.any(S[off][~finite] != S.T[off][~finite]):
        raise ValidationError("score matrix is not symmetric")
    return S


def build_dendrogram(scores) -> Dendrogram:
    """Run average-linkage merging to a single cluster.

    Clusters are keyed by their smallest member index. At each step the pair
    with the highest average inter-cluster score is merged; exact ties go to
    the lexicographically smallest (key_a, key_b).
    """
    S = _check_scores(scores)
    n = len(S)
    if n <= 1:
        return Dendrogram(n, ())
    # summed inter-cluster scores; averages are sums / (size_a * size_b)
    sums = S.copy()
    np.fill_diagonal(sums, 0.0)
    sizes = np.ones(n)
    active = np.ones(n, dtype=bool)
    merges = []
    iu = np.triu_indices(n, 1)
    with np.errstate(invalid="ignore"):
        for _ in range(n - 1):
            avg = sums / np.outer(sizes, sizes)
            vals = avg[iu]
            ok = active[iu[0]] & active[iu[1]]
            vals = np.where(ok, vals, -np.inf)
            best = vals.max()
            if best == -np.inf and not ok.any():
                break
            # triu_indices are in row-major order, so the first hit is the smallest (i, j)
            k = int(np.flatnonzero(ok & (vals == best))[0])
            i, j = int(iu[0][k]), int(iu[1][k])
            merges.append((i, j, float(best)))
            sums[i, :] += sums[j, :]
            sums[:, i] += sums[:, j]
            sums[i, i] = 0.0
            sizes[i] += sizes[j]
            active[j] = False
            sums[j, :] = 0.0
            sums[:, j] = 0.0
    return Dendrogram(n, tuple(merges))


def ahc_cluster(scores, threshold: float) -> ClusterAssignment:
    """Merge until the best average-linkage score drops below ``threshold``."""
    S = np.asarray(scores, dtype=float)
    if S.size == 1 or len(S) == 0:
        _check_scores(S.reshape(len(S), len(S)))
        return ClusterAssignment(np.zeros(len(S), dtype=int), len(S), ())
    return build_dendrogram(S).cut(threshold)
