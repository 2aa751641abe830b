"""K-means on the latent matrix and partition-comparison metrics."""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InvalidInputError

MAX_MATCH_CLASSES = 64


@dataclass
class ClusterResult:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    empty: list = field(default_factory=list)
    inertia_trace: list = field(default_factory=list)
    restart: int = 0


def _sq_dists(x, c):
    d = (x * x).sum(1)[:, None] - 2 * x @ c.T + (c * c).sum(1)[None, :]
    return np.maximum(d, 0.0)


def kmeans_pp(x, k, rng):
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    d2 = _sq_dists(x, np.array(centers))[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centers.append(x[idx])
        d2 = np.minimum(d2, _sq_dists(x, x[idx][None, :])[:, 0])
    return np.array(centers)


def _assign(x, centers):
    d = _sq_dists(x, centers)
    labels = d.argmin(axis=1)
    return labels, d[np.arange(x.shape[0]), labels]


def lloyd(x, centers, max_iter=300, tol=1e-9):
    k = centers.shape[0]
    centers = centers.copy()
    labels, d = _assign(x, centers)
    trace = [float(d.sum())]
    for _ in range(max_iter):
        empty = []
        for j in range(k):
            members = labels == j
            if members.any():
                centers[j] = x[members].mean(axis=0)
            else:
                empty.append(j)
        for j in empty:
            # reseed from the point farthest from its current centroid
            far = int(np.argmax(d))
            centers[j] = x[far]
            labels[far] = j
            d[far] = 0.0
        labels, d = _assign(x, centers)
        trace.append(float(d.sum()))
        if trace[-2] - trace[-1] <= tol and not empty:
            break
    # exact inertia of the returned centroids
    for j in range(k):
        members = labels == j
        if members.any():
            centers[j] = x[members].mean(axis=0)
    labels, d = _assign(x, centers)
    inertia = float(d.sum())
    if inertia < trace[-1]:
        trace.append(inertia)
    return labels, centers, inertia, trace


def kmeans(points, k, restarts=20, seed=0, max_iter=300, tol=1e-9):
    """Lloyd's algorithm, k-means++ seeding, best of ``restarts`` by inertia."""
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if not 1 <= k <= n:
        raise InvalidInputError(f"k={k} must lie in [1, N={n}]")
    best = None
    for r, child in enumerate(np.random.SeedSequence(seed).spawn(max(1, restarts))):
        rng = np.random.default_rng(child)
        labels, centers, inertia, trace = lloyd(x, kmeans_pp(x, k, rng), max_iter, tol)
        if best is None or inertia < best.inertia:
            empty = [j for j in range(k) if not np.any(labels == j)]
            best = ClusterResult(labels, centers, inertia, empty, trace, r)
    return best


def contingency(truth, pred):
    truth = np.asarray(truth)
    pred = np.asarray(pred)
    if truth.shape != pred.shape or truth.ndim != 1:
        raise InvalidInputError(
            f"label vectors differ in shape: {truth.shape} vs {pred.shape}")
    if truth.size == 0:
        raise InvalidInputError("label vectors are empty")
    _, ti = np.unique(truth, return_inverse=True)
    _, pi = np.unique(pred, return_inverse=True)
    table = np.zeros((ti.max() + 1, pi.max() + 1), dtype=np.int64)
    np.add.at(table, (ti, pi), 1)
    return table


def _entropy(counts, n):
    p = counts[counts > 0] / n
    return -math.fsum(p * np.log(p))


def nmi(truth, pred):
    """Mutual information normalised by the geometric mean of the entropies."""
    table = contingency(truth, pred)
    n = table.sum()
    h_t = _entropy(table.sum(axis=1), n)
    h_p = _entropy(table.sum(axis=0), n)
    if h_t == 0 and h_p == 0:
        return 1.0
    if h_t == 0 or h_p == 0:
        return 0.0
    nz = table > 0
    if np.all(nz.sum(axis=0) == 1) and np.all(nz.sum(axis=1) == 1):
        return 1.0  # same partition up to relabelling
    rows = table.sum(axis=1, keepdims=True)
    cols = table.sum(axis=0, keepdims=True)
    pij = table[nz] / n
    # fsum is exactly rounded, so the result does not depend on label order
    mi = math.fsum(pij * np.log(table[nz] * n / (rows * cols)[nz]))
    return float(min(1.0, max(0.0, mi / np.sqrt(h_t * h_p))))


def accuracy(truth, pred):
    """Best agreement fraction over injective cluster-to-class matchings."""
    table = contingency(truth, pred)
    if max(table.shape) > MAX_MATCH_CLASSES:
        raise InvalidInputError(
            f"at most {MAX_MATCH_CLASSES} classes/clusters supported")
    rows, cols = linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum() / table.sum())
