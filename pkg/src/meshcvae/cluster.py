"""k-means labelling of patch descriptors (the CVAE conditioning input)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInput, IndexOutOfRange, LengthMismatch, TooFewSamples

_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class ClusterModel:
    centroids: np.ndarray
    seed: int = 0
    n_iter: int = 0
    inertia_history: tuple[float, ...] = field(default=(), compare=False)

    @property
    def K(self) -> int:
        return len(self.centroids)

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - C[None, :, :]
    return np.einsum("ikd,ikd->ik", diff, diff)


def nearest(X: np.ndarray, C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index of (and squared distance to) the nearest centroid; ties go to the lowest index."""
    labels = np.empty(len(X), dtype=np.int64)
    dist = np.empty(len(X))
    for s in range(0, len(X), _CHUNK):
        d = _sq_dists(X[s:s + _CHUNK], C)
        labels[s:s + _CHUNK] = np.argmin(d, axis=1)
        dist[s:s + _CHUNK] = d[np.arange(len(d)), labels[s:s + _CHUNK]]
    return labels, dist


def _kmeans_pp(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    centers = np.empty((K, X.shape[1]))
    centers[0] = X[rng.integers(len(X))]
    d2 = _sq_dists(X, centers[:1])[:, 0]
    for k in range(1, K):
        total = d2.sum()
        if total > 0:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, len(X) - 1)
        else:
            idx = int(rng.integers(len(X)))
        centers[k] = X[idx]
        d2 = np.minimum(d2, _sq_dists(X, centers[k:k + 1])[:, 0])
    return centers


def kmeans_fit(descriptors, K: int, seed: int = 0, max_iter: int = 100) -> ClusterModel:
    """Lloyd iterations from k-means++ seeding.

    Stops when assignments stop changing or after ``max_iter`` assignment
    steps. An emptied cluster is reseeded at the point farthest from its own
    centroid, so the label dimension stays ``K``.
    """
    X = np.asarray(descriptors, dtype=np.float64)
    if X.size == 0:
        raise EmptyInput("no descriptors to cluster")
    X = X.reshape(len(X), -1)
    if len(X) < K:
        raise TooFewSamples(f"{len(X)} samples for K={K}")
    rng = np.random.Generator(np.random.PCG64(seed))
    C = _kmeans_pp(X, K, rng)
    labels = None
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        new_labels, dist = nearest(X, C)
        history.append(float(dist.sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        counts = np.bincount(labels, minlength=K)
        sums = np.zeros_like(C)
        for d in range(X.shape[1]):
            sums[:, d] = np.bincount(labels, weights=X[:, d], minlength=K)
        filled = counts > 0
        C[filled] = sums[filled] / counts[filled, None]
        if not filled.all():
            far = dist.copy()
            for k in np.flatnonzero(~filled):
                p = int(np.argmax(far))
                C[k] = X[p]
                far[p] = -1.0
    return ClusterModel(C, seed=seed, n_iter=it, inertia_history=tuple(history))


def assign_labels(model: ClusterModel, descriptors) -> np.ndarray:
    X = np.atleast_2d(np.asarray(descriptors, dtype=np.float64))
    if X.shape[1] != model.dim:
        raise LengthMismatch(f"descriptor length {X.shape[1]} != {model.dim}")
    return nearest(X, model.centroids)[0]


def assign_label(model: ClusterModel, descriptor) -> int:
    d = np.asarray(descriptor, dtype=np.float64)
    if d.ndim != 1:
        raise LengthMismatch("expected a single descriptor vector")
    return int(assign_labels(model, d[None])[0])


def one_hot(label, K: int) -> np.ndarray:
    """One-hot row(s); accepts a scalar label or an array of labels."""
    lab = np.asarray(label, dtype=np.int64)
    if np.any(lab < 0) or np.any(lab >= K):
        raise IndexOutOfRange(f"label out of range [0, {K})")
    out = np.zeros(lab.shape + (K,))
    flat = out.reshape(-1, K)
    flat[np.arange(lab.size), lab.ravel()] = 1.0
    return out
