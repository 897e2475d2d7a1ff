"""Domain types shared by every estimator: floors, fingerprints, observations and the database.

RSS readings are kept sparse (``{ap_id: dBm}``) at the edges and densified against the
database's AP registry for any distance computation. Unheard APs take the database's
``not_heard_value`` sentinel, identically for fingerprints, cluster heads and observations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import AllApsUnknown, InvalidDatabase, LengthMismatch

DEFAULT_NOT_HEARD = -100.0
DEFAULT_RSS_MIN = -110.0
DEFAULT_RSS_MAX = 0.0

Position = tuple[float, float, float]


@dataclass(frozen=True)
class FloorSpec:
    """One floor: 0-based ``label`` and nominal measurement-plane height ``z_center`` (m).

    ``name`` is the building-native label, used only at I/O boundaries.
    """

    label: int
    z_center: float
    name: str | None = None


@dataclass(frozen=True)
class FingerprintRecord:
    position: Position
    floor: int
    readings: Mapping[str, float]


@dataclass(frozen=True)
class Observation:
    """An online RSS measurement; ``true_floor``/``position`` are ground truth for evaluation."""

    readings: Mapping[str, float]
    true_floor: int | None = None
    position: Position | None = None


class Densified(NamedTuple):
    vector: np.ndarray
    dropped: int


@dataclass
class DistanceCounter:
    """Counts vector-to-vector distance evaluations made by the online estimators."""

    evals: int = 0
    queries: int = 0

    def add(self, n: int) -> None:
        self.evals += n

    def reset(self) -> None:
        self.evals = 0
        self.queries = 0


def floor_half_gaps(floors: Sequence[FloorSpec]) -> dict[int, float]:
    """Half the distance to the nearest neighbouring floor, per label (inf for a lone floor)."""
    ordered = sorted(floors, key=lambda f: f.label)
    out = {}
    for i, f in enumerate(ordered):
        gaps = []
        if i > 0:
            gaps.append(f.z_center - ordered[i - 1].z_center)
        if i + 1 < len(ordered):
            gaps.append(ordered[i + 1].z_center - f.z_center)
        out[f.label] = min(gaps) / 2.0 if gaps else math.inf
    return out


def check_floors(floors: Sequence[FloorSpec]) -> str | None:
    if not floors:
        return "no floors"
    labels = [f.label for f in floors]
    if len(set(labels)) != len(labels):
        return "duplicate floor label"
    if any(lab < 0 for lab in labels):
        return "negative floor label"
    ordered = sorted(floors, key=lambda f: f.label)
    for f in ordered:
        if not math.isfinite(f.z_center):
            return f"floor {f.label}: non-finite z_center"
    for a, b in zip(ordered, ordered[1:]):
        if not b.z_center > a.z_center:
            return f"floor z_center not strictly increasing at label {b.label}"
    return None


def check_record(
    rec: FingerprintRecord,
    ap_index: Mapping[str, int],
    half_gaps: Mapping[int, float],
    floor_z: Mapping[int, float],
    rss_min: float,
    rss_max: float,
) -> str | None:
    """Return the reason ``rec`` is invalid against a database context, or None."""
    if len(rec.position) != 3 or not all(math.isfinite(c) for c in rec.position):
        return "position must be three finite coordinates"
    if rec.floor not in floor_z:
        return f"unknown floor label {rec.floor}"
    if not rec.readings:
        return "empty readings"
    for ap, rss in rec.readings.items():
        if ap not in ap_index:
            return f"unknown AP {ap!r}"
        if not math.isfinite(rss) or not rss_min <= rss <= rss_max:
            return f"RSS {rss!r} for AP {ap!r} outside [{rss_min}, {rss_max}]"
    if not abs(rec.position[2] - floor_z[rec.floor]) < half_gaps[rec.floor]:
        return f"z={rec.position[2]} inconsistent with floor {rec.floor}"
    return None


def infer_floor_heights(
    labels: Sequence[int], records: Sequence[FingerprintRecord], names: Mapping[int, str | None] | None = None
) -> list[FloorSpec]:
    """Floor specs whose heights are the per-floor median fingerprint z."""
    out = []
    for lab in sorted(labels):
        zs = [r.position[2] for r in records if r.floor == lab]
        if not zs:
            raise InvalidDatabase(f"floor {lab} has no fingerprints to infer its height from")
        out.append(FloorSpec(lab, float(np.median(zs)), (names or {}).get(lab)))
    return out


@dataclass(frozen=True)
class FingerprintDatabase:
    """A building's survey campaign. Immutable once built; dense views are cached lazily."""

    building_id: str
    aps: tuple[str, ...]
    floors: tuple[FloorSpec, ...]
    records: tuple[FingerprintRecord, ...]
    not_heard_value: float = DEFAULT_NOT_HEARD
    rss_min: float = DEFAULT_RSS_MIN
    rss_max: float = DEFAULT_RSS_MAX
    meta: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "aps", tuple(self.aps))
        object.__setattr__(self, "floors", tuple(sorted(self.floors, key=lambda f: f.label)))
        object.__setattr__(self, "records", tuple(self.records))
        if not self.aps:
            raise InvalidDatabase("AP registry is empty")
        if len(set(self.aps)) != len(self.aps):
            raise InvalidDatabase("duplicate AP id in registry")
        if not self.records:
            raise InvalidDatabase("no records")
        reason = check_floors(self.floors)
        if reason:
            raise InvalidDatabase(reason)
        half = floor_half_gaps(self.floors)
        fz = {f.label: f.z_center for f in self.floors}
        for i, rec in enumerate(self.records):
            reason = check_record(rec, self.ap_index, half, fz, self.rss_min, self.rss_max)
            if reason:
                raise InvalidDatabase(f"record {i}: {reason}")

    @cached_property
    def ap_index(self) -> dict[str, int]:
        return {ap: i for i, ap in enumerate(self.aps)}

    @property
    def n_ap(self) -> int:
        return len(self.aps)

    @property
    def n_fp(self) -> int:
        return len(self.records)

    @cached_property
    def dense(self) -> np.ndarray:
        """``(N_fp, N_ap)`` float64 RSS matrix, sentinel-filled; read-only."""
        m = np.full((self.n_fp, self.n_ap), self.not_heard_value, dtype=np.float64)
        idx = self.ap_index
        for n, rec in enumerate(self.records):
            cols = [idx[a] for a in rec.readings]
            m[n, cols] = list(rec.readings.values())
        m.setflags(write=False)
        return m

    @cached_property
    def floor_labels(self) -> np.ndarray:
        a = np.array([r.floor for r in self.records], dtype=np.int64)
        a.setflags(write=False)
        return a

    @cached_property
    def positions(self) -> np.ndarray:
        a = np.array([r.position for r in self.records], dtype=np.float64)
        a.setflags(write=False)
        return a

    def floor_counts(self) -> dict[int, int]:
        labels, counts = np.unique(self.floor_labels, return_counts=True)
        return {int(f.label): 0 for f in self.floors} | dict(zip(labels.tolist(), counts.tolist()))

    def observations(self) -> list[Observation]:
        """Every record as an observation carrying its floor and position as ground truth."""
        return [Observation(r.readings, r.floor, r.position) for r in self.records]


def densify(registry, readings: Mapping[str, float]) -> Densified:
    """Dense RSS vector in registry order for sparse ``readings``.

    ``registry`` is anything exposing ``ap_index`` and ``not_heard_value`` (a database or a
    model). APs missing from the registry are dropped and counted.
    """
    index = registry.ap_index
    vec = np.full(len(index), registry.not_heard_value, dtype=np.float64)
    dropped = 0
    kept = 0
    for ap, rss in readings.items():
        i = index.get(ap)
        if i is None:
            dropped += 1
        else:
            vec[i] = rss
            kept += 1
    if kept == 0:
        raise AllApsUnknown(f"none of {len(readings)} observed APs are in the registry")
    return Densified(vec, dropped)


def sparsify(registry, vector: np.ndarray) -> dict[str, float]:
    """Inverse of :func:`densify` for vectors built from it: sentinel entries are omitted."""
    aps = list(registry.ap_index)
    return {aps[i]: float(v) for i, v in enumerate(vector) if v != registry.not_heard_value}


def sq_euclidean(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise LengthMismatch(f"vector shapes differ: {a.shape} vs {b.shape}")
    diff = a - b
    return float(diff @ diff)


def sq_distances(matrix: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Squared Euclidean distance from every row of ``matrix`` to ``v``."""
    if matrix.ndim != 2 or v.shape != (matrix.shape[1],):
        raise LengthMismatch(f"cannot compare vector of shape {v.shape} with rows of {matrix.shape}")
    diff = matrix - v
    return np.einsum("ij,ij->i", diff, diff)
