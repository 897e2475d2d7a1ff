"""Lloyd's K-means with k-means++ seeding.

Each iteration assigns every point to its nearest centroid, repairs empty clusters by
moving the point farthest from its own centroid into them, then replaces each centroid by
the mean of its members. Iteration stops when the assignment stops changing, when the
relative objective decrease drops below ``rel_tol``, or after ``max_iters``.

Centroid sums are taken in a fixed (sorted-by-cluster) order so results are bit-identical
for a given seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import KTooLarge

_ASSIGN_CHUNK = 1 << 22  # max elements of one point-by-centroid distance block
INIT_METHODS = ("kmeans++", "random")


@dataclass(frozen=True)
class KmeansConfig:
    k: int
    max_iters: int = 100
    rel_tol: float = 1e-6
    seed: int = 0
    init: str = "kmeans++"
    n_restarts: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.rel_tol < 0:
            raise ValueError("rel_tol must be non-negative")
        if self.init not in INIT_METHODS:
            raise ValueError(f"init must be one of {INIT_METHODS}")
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be at least 1")


@dataclass(frozen=True)
class KmeansResult:
    centroids: np.ndarray
    assignment: np.ndarray
    objective: float
    iters_run: int
    history: tuple[float, ...]
    """Objective after each iteration of the returned run."""
    histories: tuple[tuple[float, ...], ...] = ()
    """Objective traces of every restart, in restart order."""

    @property
    def k(self) -> int:
        return len(self.centroids)


def n_distinct(points: np.ndarray) -> int:
    return int(np.unique(np.asarray(points), axis=0).shape[0])


def objective(points: np.ndarray, centroids: np.ndarray, assignment: np.ndarray) -> float:
    """Within-cluster sum of squares."""
    diff = points - centroids[assignment]
    return float(np.einsum("ij,ij->", diff, diff))


def _rng(seed: int, restart: int) -> np.random.Generator:
    return np.random.default_rng([seed & 0xFFFF_FFFF_FFFF_FFFF, restart])


def kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of ``k`` seed points chosen with probability proportional to squared distance."""
    n = len(points)
    chosen = [int(rng.integers(n))]
    diff = points - points[chosen[0]]
    d2 = np.einsum("ij,ij->i", diff, diff)
    for _ in range(1, k):
        total = float(d2.sum())
        if total > 0:
            cum = np.cumsum(d2)
            i = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
            i = min(i, n - 1)
        else:
            # every point coincides with a chosen centre; fall back to an unused index
            unused = np.setdiff1d(np.arange(n), chosen)
            i = int(unused[rng.integers(len(unused))])
        chosen.append(i)
        diff = points - points[i]
        d2 = np.minimum(d2, np.einsum("ij,ij->i", diff, diff))
    return np.array(chosen, dtype=np.int64)


def _assign(points: np.ndarray, sq_norms: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    n, k = len(points), len(centroids)
    c_norms = np.einsum("ij,ij->i", centroids, centroids)
    labels = np.empty(n, dtype=np.int64)
    step = max(1, _ASSIGN_CHUNK // max(k, 1))
    for lo in range(0, n, step):
        hi = min(n, lo + step)
        d = sq_norms[lo:hi, None] - 2.0 * (points[lo:hi] @ centroids.T) + c_norms[None, :]
        labels[lo:hi] = np.argmin(d, axis=1)
    return labels


def _repair_empty(points, centroids, labels, k) -> None:
    counts = np.bincount(labels, minlength=k)
    empties = np.flatnonzero(counts == 0)
    if not empties.size:
        return
    diff = points - centroids[labels]
    dist = np.einsum("ij,ij->i", diff, diff)
    for j in empties:
        movable = counts[labels] > 1
        i = int(np.argmax(np.where(movable, dist, -np.inf)))
        counts[labels[i]] -= 1
        labels[i] = j
        counts[j] = 1
        dist[i] = 0.0


def _means(points: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    order = np.argsort(labels, kind="stable")
    sorted_labels = labels[order]
    starts = np.searchsorted(sorted_labels, np.arange(k))
    sums = np.add.reduceat(points[order], starts, axis=0)
    counts = np.bincount(labels, minlength=k)
    return sums / counts[:, None]


def lloyd(
    points: np.ndarray, centroids: np.ndarray, max_iters: int = 100, rel_tol: float = 1e-6
) -> KmeansResult:
    """Run Lloyd iterations from the given initial centroids."""
    x = np.asarray(points, dtype=np.float64)
    c = np.array(centroids, dtype=np.float64)
    k = len(c)
    sq_norms = np.einsum("ij,ij->i", x, x)
    history: list[float] = []
    prev_labels = None
    labels = None
    for _ in range(max_iters):
        labels = _assign(x, sq_norms, c)
        _repair_empty(x, c, labels, k)
        c = _means(x, labels, k)
        obj = objective(x, c, labels)
        history.append(obj)
        if prev_labels is not None and np.array_equal(labels, prev_labels):
            break
        if obj == 0.0:
            break
        if len(history) > 1 and (history[-2] - obj) < rel_tol * history[-2]:
            break
        prev_labels = labels
    c.setflags(write=False)
    labels.setflags(write=False)
    return KmeansResult(c, labels, history[-1], len(history), tuple(history), (tuple(history),))


def kmeans(points: Sequence | np.ndarray, cfg: KmeansConfig, init_centroids: np.ndarray | None = None) -> KmeansResult:
    """Cluster ``points`` into ``cfg.k`` groups; best objective over ``cfg.n_restarts`` seeds.

    ``init_centroids`` bypasses seeding and runs a single Lloyd pass from the given centres.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise ValueError("points must be a non-empty 2-D array")
    if cfg.k > len(x):
        raise KTooLarge(f"k={cfg.k} exceeds the number of points ({len(x)})")
    if init_centroids is not None:
        init = np.asarray(init_centroids, dtype=np.float64)
        if init.shape != (cfg.k, x.shape[1]):
            raise ValueError(f"init_centroids must have shape {(cfg.k, x.shape[1])}")
        return lloyd(x, init, cfg.max_iters, cfg.rel_tol)

    best = None
    histories = []
    for r in range(cfg.n_restarts):
        rng = _rng(cfg.seed, r)
        if cfg.init == "kmeans++":
            idx = kmeanspp_init(x, cfg.k, rng)
        else:
            idx = rng.choice(len(x), size=cfg.k, replace=False)
        res = lloyd(x, x[idx], cfg.max_iters, cfg.rel_tol)
        histories.append(res.history)
        if best is None or res.objective < best.objective:
            best = res
    return KmeansResult(best.centroids, best.assignment, best.objective, best.iters_run, best.history, tuple(histories))
