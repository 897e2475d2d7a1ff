"""1-NN fingerprint matching over the full database (linear scan, no index structure)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DistanceCounter, FingerprintDatabase, Observation, Position, densify, sq_distances


@dataclass(frozen=True)
class NnEstimate:
    position: Position
    floor: int
    best_index: int
    best_distance: float


def nn_estimate(
    db: FingerprintDatabase, obs: Observation, counter: DistanceCounter | None = None
) -> NnEstimate:
    """Location and floor of the fingerprint closest to ``obs`` in RSS space.

    Ties go to the lowest record index (``np.argmin`` returns the first minimum).
    """
    vec, _ = densify(db, obs.readings)
    d = sq_distances(db.dense, vec)
    if counter is not None:
        counter.add(db.n_fp)
    j = int(np.argmin(d))
    rec = db.records[j]
    return NnEstimate(rec.position, rec.floor, j, float(d[j]))
