"""Duplicate-goal grouping by bottom-up variance-minimizing merges.

Goals extracted across repeated samples are near-duplicates of each other;
this module groups them by agglomerative clustering over their embedding
vectors and samples one representative per group.  The merge criterion is
Ward linkage computed with the Lance-Williams update over squared Euclidean
distances:

    d(k, i+j)^2 = ((n_i + n_k) d(i,k)^2 + (n_j + n_k) d(j,k)^2
                   - n_k d(i,j)^2) / (n_i + n_j + n_k)

Two singletons are at plain Euclidean distance.  Merging always takes the
currently closest pair, breaking ties on the lowest (index, index) position
pair in the active cluster list, and stops once the minimum linkage distance
reaches the threshold.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

import numpy as np

from .extraction import ExtractedGoal


@dataclass(eq=False)
class EmbeddedGoal:
    goal: ExtractedGoal
    vector: np.ndarray


@dataclass(eq=False)
class GoalCluster:
    """A group of near-duplicate goals formed below the distance threshold.

    ``merge_height`` is the linkage distance of the merge that completed the
    cluster; singletons sit at 0.
    """

    members: list[EmbeddedGoal]
    representative: EmbeddedGoal | None = None
    merge_height: float = 0.0


def _check_vectors(items: list[EmbeddedGoal]) -> np.ndarray:
    if not items:
        raise ValueError("need at least one item to cluster")
    dims = {np.asarray(item.vector).shape for item in items}
    if len(dims) != 1 or len(next(iter(dims))) != 1:
        raise ValueError(f"all vectors must share one dimension, got shapes {sorted(map(str, dims))}")
    return np.stack([np.asarray(item.vector, dtype=np.float64) for item in items])


def cluster(items: list[EmbeddedGoal], threshold: float) -> list[GoalCluster]:
    """Partition items into clusters; merges happen strictly below ``threshold``."""
    if threshold <= 0:
        raise ValueError(f"threshold must be > 0, got {threshold}")
    x = _check_vectors(items)
    n = len(items)
    if n == 1:
        return [GoalCluster(members=list(items))]

    diff = x[:, None, :] - x[None, :, :]
    dist2 = np.einsum("ijk,ijk->ij", diff, diff)
    sizes = np.ones(n, dtype=np.int64)
    members: list[list[int]] = [[i] for i in range(n)]
    heights = [0.0] * n
    rows = list(range(n))  # active clusters; list position is the tie-break index
    threshold2 = threshold * threshold
    last_height = 0.0

    while len(rows) > 1:
        sub = dist2[np.ix_(rows, rows)]
        iu = np.triu_indices(len(rows), 1)
        flat = sub[iu]
        best = int(np.argmin(flat))  # first minimum = lexicographically lowest pair
        best_d2 = float(flat[best])
        if best_d2 >= threshold2:
            break
        pos_i, pos_j = int(iu[0][best]), int(iu[1][best])
        ri, rj = rows[pos_i], rows[pos_j]

        height = math.sqrt(max(best_d2, 0.0))
        if height < last_height - 1e-9:
            raise RuntimeError(
                f"non-monotone merge sequence: {height} after {last_height}"
            )
        last_height = max(last_height, height)

        ni, nj = int(sizes[ri]), int(sizes[rj])
        others = np.array([r for r in rows if r != ri and r != rj], dtype=np.int64)
        if others.size:
            nk = sizes[others]
            updated = (
                (ni + nk) * dist2[ri, others]
                + (nj + nk) * dist2[rj, others]
                - nk * best_d2
            ) / (ni + nj + nk)
            dist2[ri, others] = updated
            dist2[others, ri] = updated
        sizes[ri] = ni + nj
        members[ri] = members[ri] + members[rj]
        heights[ri] = height
        del rows[pos_j]

    clusters = []
    for r in rows:
        clusters.append(
            GoalCluster(
                members=[items[i] for i in members[r]],
                merge_height=heights[r],
            )
        )
    return clusters


def sample_representatives(
    clusters: list[GoalCluster], seed: int | str
) -> list[ExtractedGoal]:
    """Pick one uniformly random member per cluster, recorded on the cluster."""
    if not clusters:
        raise ValueError("no clusters to sample from")
    rng = random.Random(seed)
    chosen = []
    for c in clusters:
        if not c.members:
            raise ValueError("cluster has no members")
        c.representative = c.members[rng.randrange(len(c.members))]
        chosen.append(c.representative.goal)
    return chosen


def _cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def resample_mixed(
    c: GoalCluster, cosine_floor: float, seed: int | str
) -> list[ExtractedGoal]:
    """Pick extra representatives from a mixed cluster until it is covered.

    If every member pair is at least ``cosine_floor`` similar the single
    representative stands.  Otherwise representatives are added
    farthest-first (lowest maximum cosine to the current picks) until every
    member reaches the floor against some pick.
    """
    if len(c.members) < 2:
        raise ValueError("resampling needs a cluster with at least 2 members")
    if not 0.0 < cosine_floor < 1.0:
        raise ValueError(f"cosine_floor must be in (0, 1), got {cosine_floor}")
    rng = random.Random(seed)
    if c.representative is None:
        c.representative = c.members[rng.randrange(len(c.members))]
    vectors = [np.asarray(m.vector, dtype=np.float64) for m in c.members]
    k = len(vectors)
    sim = [[_cosine(vectors[i], vectors[j]) for j in range(k)] for i in range(k)]

    min_pairwise = min(sim[i][j] for i in range(k) for j in range(i + 1, k))
    if min_pairwise >= cosine_floor:
        return [c.representative.goal]

    selected = [next(i for i, m in enumerate(c.members) if m is c.representative)]
    while True:
        best_to_selected = [
            max(sim[i][j] for j in selected) for i in range(k)
        ]
        uncovered = [i for i in range(k) if best_to_selected[i] < cosine_floor]
        if not uncovered:
            break
        # farthest-first: the member least similar to every current pick
        uncovered.sort(key=lambda i: (best_to_selected[i], i))
        selected.append(uncovered[0])
    return [c.members[i].goal for i in selected]
