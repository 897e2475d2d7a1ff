"""Floorwise fingerprint compression, cluster-head floor classification, and the legacy
two-stage cluster search it is compared against.

The compact model keeps only the cluster heads and their floor labels; the two-stage
model clusters all fingerprints globally and must keep every fingerprint for its second
search stage.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import cached_property

import numpy as np

from .core import DistanceCounter, FingerprintDatabase, Observation, densify, sq_distances
from .kmeans import KmeansConfig, KmeansResult, kmeans, n_distinct

log = logging.getLogger(__name__)


def check_rho(rho: float) -> float:
    rho = float(rho)
    if not (0.0 < rho <= 1.0):
        raise ValueError(f"rho must be in (0, 1], got {rho}")
    return rho


def head_count(rho: float, n: int) -> int:
    """``ceil(rho * n)`` evaluated on the decimal value of ``rho`` (0.07 * 100 -> 7, not 8)."""
    return math.ceil(Fraction(repr(float(rho))) * n)


@dataclass(frozen=True)
class CompactModel:
    """Cluster heads (float32, one row each) with their floor labels; the shippable payload."""

    building_id: str
    aps: tuple[str, ...]
    heads: np.ndarray
    head_floors: np.ndarray
    rho: float
    not_heard_value: float = -100.0
    clamped_floors: tuple[int, ...] = field(default=(), compare=False)
    """Floors whose head count was clamped to their distinct-point count."""

    def __post_init__(self):
        heads = np.ascontiguousarray(self.heads, dtype=np.float32)
        floors = np.ascontiguousarray(self.head_floors, dtype=np.int64)
        if heads.ndim != 2 or heads.shape[1] != len(self.aps) or len(floors) != len(heads):
            raise ValueError("heads must be (N_c, N_ap) with one floor label per head")
        heads.setflags(write=False)
        floors.setflags(write=False)
        object.__setattr__(self, "aps", tuple(self.aps))
        object.__setattr__(self, "heads", heads)
        object.__setattr__(self, "head_floors", floors)
        object.__setattr__(self, "not_heard_value", float(np.float32(self.not_heard_value)))

    def __eq__(self, other):
        if not isinstance(other, CompactModel):
            return NotImplemented
        return (
            self.building_id == other.building_id
            and self.aps == other.aps
            and self.rho == other.rho
            and self.not_heard_value == other.not_heard_value
            and np.array_equal(self.head_floors, other.head_floors)
            and self.heads.tobytes() == other.heads.tobytes()
        )

    __hash__ = None

    @cached_property
    def ap_index(self) -> dict[str, int]:
        return {ap: i for i, ap in enumerate(self.aps)}

    @cached_property
    def heads64(self) -> np.ndarray:
        h = self.heads.astype(np.float64)
        h.setflags(write=False)
        return h

    @property
    def n_ap(self) -> int:
        return len(self.aps)

    @property
    def n_c(self) -> int:
        return len(self.heads)

    def heads_per_floor(self) -> dict[int, int]:
        labels, counts = np.unique(self.head_floors, return_counts=True)
        return dict(zip(labels.tolist(), counts.tolist()))

    def payload_params(self) -> int:
        return (self.n_ap + 1) * self.n_c


def _cluster_floor(points: np.ndarray, rho: float, cfg: KmeansConfig) -> tuple[KmeansResult, bool]:
    k = head_count(rho, len(points))
    distinct = n_distinct(points)
    clamped = k > distinct
    if clamped:
        k = distinct
    return kmeans(points, replace(cfg, k=k)), clamped


def floorwise_cluster(
    db: FingerprintDatabase,
    rho: float,
    cfg: KmeansConfig | None = None,
    workers: int = 1,
    results: dict[int, KmeansResult] | None = None,
) -> CompactModel:
    """K-means on each floor's fingerprints separately, ``ceil(rho * N_fp,f)`` heads per floor.

    Floor ``f`` is seeded with ``cfg.seed + f`` so the result does not depend on the order
    or parallelism of the per-floor runs. Pass a dict as ``results`` to receive the raw
    per-floor K-means results.
    """
    rho = check_rho(rho)
    cfg = cfg or KmeansConfig(k=1)
    counts = db.floor_counts()
    # declared floors without fingerprints contribute no heads
    labels = sorted(f for f, c in counts.items() if c > 0)

    def run(f):
        pts = db.dense[db.floor_labels == f]
        return _cluster_floor(pts, rho, replace(cfg, seed=cfg.seed + f))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            runs = list(pool.map(run, labels))
    else:
        runs = [run(f) for f in labels]

    heads, floors, clamped = [], [], []
    for f, (res, was_clamped) in zip(labels, runs):
        heads.append(res.centroids)
        floors.append(np.full(res.k, f, dtype=np.int64))
        if was_clamped:
            clamped.append(f)
            log.info("floor %d: head count clamped to %d distinct fingerprints", f, res.k)
        if results is not None:
            results[f] = res
    return CompactModel(
        building_id=db.building_id,
        aps=db.aps,
        heads=np.vstack(heads),
        head_floors=np.concatenate(floors),
        rho=rho,
        not_heard_value=db.not_heard_value,
        clamped_floors=tuple(clamped),
    )


@dataclass(frozen=True)
class HeadMatch:
    floor: int
    head_index: int
    distance: float


def _argmin_by_floor(d: np.ndarray, floors: np.ndarray) -> int:
    """Index of the minimum distance; ties go to the lower floor, then the lower index."""
    ties = np.flatnonzero(d == d.min())
    if len(ties) == 1:
        return int(ties[0])
    return int(ties[np.lexsort((ties, floors[ties]))[0]])


def classify_floor(model: CompactModel, obs: Observation, counter: DistanceCounter | None = None) -> HeadMatch:
    """Floor of the cluster head most similar to the observation."""
    vec, _ = densify(model, obs.readings)
    d = sq_distances(model.heads64, vec)
    if counter is not None:
        counter.add(model.n_c)
    i = _argmin_by_floor(d, model.head_floors)
    return HeadMatch(int(model.head_floors[i]), i, float(d[i]))


@dataclass(frozen=True)
class TwoStageModel:
    """Global cluster heads plus every fingerprint (float32) and its floor and cluster."""

    building_id: str
    aps: tuple[str, ...]
    heads: np.ndarray
    fingerprints: np.ndarray
    floors: np.ndarray
    assignment: np.ndarray
    rho: float
    not_heard_value: float = -100.0

    def __post_init__(self):
        arrays = {
            "heads": np.ascontiguousarray(self.heads, dtype=np.float32),
            "fingerprints": np.ascontiguousarray(self.fingerprints, dtype=np.float32),
            "floors": np.ascontiguousarray(self.floors, dtype=np.int64),
            "assignment": np.ascontiguousarray(self.assignment, dtype=np.int64),
        }
        n_ap = len(self.aps)
        if arrays["heads"].ndim != 2 or arrays["heads"].shape[1] != n_ap:
            raise ValueError("heads must be (N_c, N_ap)")
        if arrays["fingerprints"].ndim != 2 or arrays["fingerprints"].shape[1] != n_ap:
            raise ValueError("fingerprints must be (N_fp, N_ap)")
        n_fp = len(arrays["fingerprints"])
        if len(arrays["floors"]) != n_fp or len(arrays["assignment"]) != n_fp:
            raise ValueError("one floor label and one cluster index per fingerprint")
        a = arrays["assignment"]
        if n_fp and (a.min() < 0 or a.max() >= len(arrays["heads"])):
            raise ValueError("cluster index out of range")
        for name, arr in arrays.items():
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "aps", tuple(self.aps))
        object.__setattr__(self, "not_heard_value", float(np.float32(self.not_heard_value)))

    def __eq__(self, other):
        if not isinstance(other, TwoStageModel):
            return NotImplemented
        return (
            self.building_id == other.building_id
            and self.aps == other.aps
            and self.rho == other.rho
            and self.not_heard_value == other.not_heard_value
            and self.heads.tobytes() == other.heads.tobytes()
            and self.fingerprints.tobytes() == other.fingerprints.tobytes()
            and np.array_equal(self.floors, other.floors)
            and np.array_equal(self.assignment, other.assignment)
        )

    __hash__ = None

    @cached_property
    def ap_index(self) -> dict[str, int]:
        return {ap: i for i, ap in enumerate(self.aps)}

    @cached_property
    def heads64(self) -> np.ndarray:
        return self.heads.astype(np.float64)

    @cached_property
    def members(self) -> tuple[np.ndarray, ...]:
        """Record indices of each cluster, ascending."""
        order = np.argsort(self.assignment, kind="stable")
        bounds = np.searchsorted(self.assignment[order], np.arange(self.n_c + 1))
        return tuple(order[bounds[c] : bounds[c + 1]] for c in range(self.n_c))

    @cached_property
    def member_vectors(self) -> tuple[np.ndarray, ...]:
        return tuple(self.fingerprints[m].astype(np.float64) for m in self.members)

    @property
    def n_ap(self) -> int:
        return len(self.aps)

    @property
    def n_c(self) -> int:
        return len(self.heads)

    @property
    def n_fp(self) -> int:
        return len(self.fingerprints)

    def payload_params(self) -> int:
        return (self.n_ap + 1) * self.n_fp + self.n_ap * self.n_c


@dataclass(frozen=True)
class TwoStageMatch:
    floor: int
    record_index: int
    cluster: int
    distance: float


def two_stage_build(db: FingerprintDatabase, rho: float, cfg: KmeansConfig | None = None) -> TwoStageModel:
    """Global (floor-agnostic) K-means over all fingerprints with ``ceil(rho * N_fp)`` heads."""
    rho = check_rho(rho)
    cfg = cfg or KmeansConfig(k=1)
    k = min(head_count(rho, db.n_fp), n_distinct(db.dense))
    res = kmeans(db.dense, replace(cfg, k=k))
    return TwoStageModel(
        building_id=db.building_id,
        aps=db.aps,
        heads=res.centroids,
        fingerprints=db.dense,
        floors=db.floor_labels,
        assignment=res.assignment,
        rho=rho,
        not_heard_value=db.not_heard_value,
    )


def two_stage_query(model: TwoStageModel, obs: Observation, counter: DistanceCounter | None = None) -> TwoStageMatch:
    """Nearest head first, then the nearest fingerprint inside that head's cluster."""
    vec, _ = densify(model, obs.readings)
    dh = sq_distances(model.heads64, vec)
    c = int(np.argmin(dh))
    members = model.members[c]
    dm = sq_distances(model.member_vectors[c], vec)
    if counter is not None:
        counter.add(model.n_c + len(members))
    j = int(np.argmin(dm))
    rec = int(members[j])
    return TwoStageMatch(int(model.floors[rec]), rec, c, float(dm[j]))
