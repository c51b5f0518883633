"""Lloyd k-means with seeded random restarts and deterministic tie-breaking."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from leafsev._validation import check_points, check_positive_int


@dataclass
class ClusterModel:
    k: int
    dim: int
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float
    iterations_run: int
    inertia_trace: list = field(default_factory=list, repr=False)

    def counts(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.k)


def _sq_dists(rows: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d2 = np.empty((rows.shape[0], centroids.shape[0]))
    for j, c in enumerate(centroids):
        diff = rows - c
        d2[:, j] = np.einsum("ij,ij->i", diff, diff)
    return d2


def _lloyd(rows, weights, centroids, max_iter):
    """One k-means run over deduplicated ``rows`` carrying multiplicities ``weights``."""
    k = centroids.shape[0]
    centroids = centroids.copy()
    d2 = _sq_dists(rows, centroids)
    labels = np.argmin(d2, axis=1)  # first minimum == lowest index on ties
    best = d2[np.arange(len(rows)), labels]
    trace = [float(weights @ best)]
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        counts = np.bincount(labels, weights=weights, minlength=k)
        for j in range(k):
            if counts[j] > 0:
                members = labels == j
                centroids[j] = weights[members] @ rows[members] / counts[j]
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            # reseed from the points worst served by their current centroid
            spread = best.copy()
            for j in empty:
                far = int(np.argmax(spread))
                centroids[j] = rows[far]
                spread[far] = -np.inf
        d2 = _sq_dists(rows, centroids)
        new_labels = np.argmin(d2, axis=1)
        best = d2[np.arange(len(rows)), new_labels]
        trace.append(float(weights @ best))
        stable = np.array_equal(new_labels, labels)
        labels = new_labels
        if stable:
            break
    return centroids, labels, trace, n_iter


def kmeans(points, k, seed=0, max_iter=300, restarts=10, init=None,
           sample_weight=None) -> ClusterModel:
    """Cluster feature vectors by Euclidean k-means, keeping the best of ``restarts`` runs.

    Each restart starts from ``k`` distinct input points drawn uniformly from a
    generator seeded with ``seed``.  ``init`` may instead give explicit starting
    centroids, shape ``(k, dim)`` or ``(runs, k, dim)``; ``restarts`` is then ignored.
    Ties between equal-inertia runs go to the earliest run.

    ``sample_weight`` gives each row a multiplicity (e.g. a colour palette with
    pixel counts); starting points are then drawn in proportion to weight.
    """
    X = check_points(points)
    n, dim = X.shape
    k = check_positive_int(k, "k")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of points ({n})")
    max_iter = check_positive_int(max_iter, "max_iter")

    if sample_weight is None:
        if dim == 1:
            rows, inverse, mult = np.unique(X[:, 0], return_inverse=True, return_counts=True)
            rows = rows[:, None]
        else:
            rows, inverse, mult = np.unique(X, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        weights = mult.astype(np.float64)
        draw_p = None
    else:
        weights = np.asarray(sample_weight, dtype=np.float64)
        if weights.shape != (n,) or (weights <= 0).any():
            raise ValueError("sample_weight must hold one positive weight per point")
        rows, inverse = X, np.arange(n)
        draw_p = weights / weights.sum()

    if init is not None:
        starts = np.asarray(init, dtype=np.float64)
        if starts.ndim == 2:
            starts = starts[None]
        if starts.shape[1:] != (k, dim):
            raise ValueError(f"init must have shape (k, dim) = ({k}, {dim}), got {starts.shape[-2:]}")
    else:
        restarts = check_positive_int(restarts, "restarts")
        rng = np.random.default_rng(seed)
        starts = np.stack(
            [X[rng.choice(n, size=k, replace=False, p=draw_p)] for _ in range(restarts)]
        )

    best = None
    for start in starts:
        centroids, labels, trace, n_iter = _lloyd(rows, weights, start, max_iter)
        if best is None or trace[-1] < best[2][-1]:
            best = (centroids, labels, trace, n_iter)
    centroids, labels, trace, n_iter = best
    assignments = labels[inverse]
    diff = X - centroids[assignments]
    per_point = np.einsum("ij,ij->i", diff, diff)
    inertia = float(per_point.sum() if sample_weight is None else weights @ per_point)
    return ClusterModel(
        k=k,
        dim=dim,
        centroids=centroids,
        assignments=assignments,
        inertia=inertia,
        iterations_run=n_iter,
        inertia_trace=trace,
    )


def predict(model: ClusterModel, point) -> int:
    """Index of the nearest centroid; the lowest index wins a tie."""
    p = np.atleast_1d(np.asarray(point, dtype=np.float64))
    if p.shape != (model.dim,):
        raise ValueError(f"point has dimension {p.size}, model expects {model.dim}")
    d2 = ((model.centroids - p) ** 2).sum(axis=1)
    return int(np.argmin(d2))


class KMeansClusterer(ClusterMixin, BaseEstimator):
    """Estimator wrapper around :func:`kmeans`.

    Parameters
    ----------
    n_clusters : int, default=5
    random_state : int, default=0
        Seed for the restart generator.
    max_iter : int, default=300
    n_init : int, default=10
        Number of random restarts; the lowest-inertia run is kept.
    """

    def __init__(self, n_clusters=5, random_state=0, max_iter=300, n_init=10):
        self.n_clusters = n_clusters
        self.random_state = random_state
        self.max_iter = max_iter
        self.n_init = n_init

    def fit(self, X, y=None):
        model = kmeans(
            X,
            self.n_clusters,
            seed=self.random_state,
            max_iter=self.max_iter,
            restarts=self.n_init,
        )
        self.model_ = model
        self.cluster_centers_ = model.centroids
        self.labels_ = model.assignments
        self.inertia_ = model.inertia
        self.n_iter_ = model.iterations_run
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_points(X, "X")
        if X.shape[1] != self.model_.dim:
            raise ValueError(f"X has {X.shape[1]} features, model was fit with {self.model_.dim}")
        return np.argmin(_sq_dists(X, self.cluster_centers_), axis=1)
