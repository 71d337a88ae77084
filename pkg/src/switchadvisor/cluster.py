"""Small deterministic k-means engine shared by the archetype and subtype
models, plus labeling-agreement metrics.

The engine is plain Lloyd iteration with k-means++ seeding, a fixed number of
restarts (seeds derived from the master seed by restart index, so the chosen
model does not depend on execution order), and empty-cluster repair by
reseeding from the point farthest from its centroid.  Assignment ties break
toward the lowest cluster id.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.metrics import adjusted_rand_score, normalized_mutual_info_score, silhouette_score


@dataclass(slots=True)
class KMeansResult:
    centroids: np.ndarray  # (k, d)
    labels: np.ndarray  # (n,)
    inertia: float
    n_iter: int
    inertia_history: list[float]


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # (n, k) squared Euclidean distances
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def assign_labels(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Nearest centroid per point; ties go to the lowest cluster id (argmin
    picks the first minimum)."""
    return np.argmin(_sq_dists(points, centroids), axis=1)


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]), dtype=float)
    first = rng.integers(n)
    centroids[0] = points[first]
    closest = np.einsum("nd,nd->n", points - centroids[0], points - centroids[0])
    for j in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=closest / total)
        centroids[j] = points[idx]
        d = np.einsum("nd,nd->n", points - centroids[j], points - centroids[j])
        np.minimum(closest, d, out=closest)
    return centroids


def _lloyd(points: np.ndarray, centroids: np.ndarray,
           max_iter: int, tol: float) -> KMeansResult:
    history = []
    labels = assign_labels(points, centroids)
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        new_centroids = centroids.copy()
        for j in range(centroids.shape[0]):
            members = points[labels == j]
            if len(members) == 0:
                # empty cluster: reseed from the point farthest from its centroid
                dists = _sq_dists(points, new_centroids)
                worst = int(np.argmax(dists[np.arange(len(points)), labels]))
                new_centroids[j] = points[worst]
            else:
                new_centroids[j] = members.mean(axis=0)
        labels = assign_labels(points, new_centroids)
        inertia = float(_sq_dists(points, new_centroids)[np.arange(len(points)), labels].sum())
        history.append(inertia)
        shift = float(np.max(np.abs(new_centroids - centroids)))
        centroids = new_centroids
        if shift < tol:
            break
    inertia = float(_sq_dists(points, centroids)[np.arange(len(points)), labels].sum())
    return KMeansResult(centroids=centroids, labels=labels, inertia=inertia,
                        n_iter=n_iter, inertia_history=history)


def kmeans(points: np.ndarray, k: int, seed: int = 0, restarts: int = 50,
           max_iter: int = 300, tol: float = 1e-8) -> KMeansResult:
    """k-means++ with restarts; the restart with the lowest inertia wins.

    Raises ValueError when there are fewer than k distinct points.
    """
    points = np.asarray(points, dtype=float)
    if np.unique(points, axis=0).shape[0] < k:
        raise ValueError(f"need at least {k} distinct points, got fewer")
    best: KMeansResult | None = None
    for r in range(restarts):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(r,)))
        init = _kmeanspp_init(points, k, rng)
        result = _lloyd(points, init, max_iter, tol)
        if best is None or result.inertia < best.inertia:
            best = result
    assert best is not None
    return best


# ---------------------------------------------------------------------------
# Labeling agreement / cluster quality


def labeling_agreement(labelings: list[np.ndarray]) -> tuple[float, float]:
    """Mean pairwise (ARI, NMI) over >= 2 labelings of the same points."""
    if len(labelings) < 2:
        raise ValueError("need at least two labelings")
    aris, nmis = [], []
    for i in range(len(labelings)):
        for j in range(i + 1, len(labelings)):
            aris.append(adjusted_rand_score(labelings[i], labelings[j]))
            nmis.append(normalized_mutual_info_score(labelings[i], labelings[j]))
    return float(np.mean(aris)), float(np.mean(nmis))


def silhouette(points: np.ndarray, labels: np.ndarray,
               sample_size: int | None = None, seed: int = 0) -> float:
    """Mean silhouette (b - a) / max(a, b); raises on degenerate labelings."""
    if len(np.unique(labels)) < 2:
        raise ValueError("silhouette undefined for a single-cluster labeling")
    return float(silhouette_score(points, labels, sample_size=sample_size,
                                  random_state=seed))
