"""Weighted centroid localization for the height coordinate.

AP positions are not known in advance; they are bootstrapped from the fingerprints as an
RSS-weighted mean of the positions that hear each AP. Online, the mobile's height is the
RSS-weighted mean of the heard APs' heights, snapped to the nearest floor.

dBm readings are negative, so they are turned into non-negative weights before averaging.
The default ``"shift"`` mode uses ``rss - w0`` (``w0`` defaults to the database's not-heard
sentinel); ``"power"`` uses linear power ``10 ** (rss / 10)`` and ignores ``w0``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .core import FingerprintDatabase, FloorSpec, Observation
from .errors import NoCoverage, ZeroWeightSum

log = logging.getLogger(__name__)

WEIGHT_MODES = ("shift", "power")


def rss_weight(rss: float, w0: float = -100.0) -> float:
    """Shifted RSS weight; readings below ``w0`` clamp to zero."""
    return max(rss - w0, 0.0)


def rss_weights(rss: np.ndarray, w0: float = -100.0, mode: str = "shift") -> tuple[np.ndarray, int]:
    """Vectorised weights plus the number of readings clamped to zero."""
    rss = np.asarray(rss, dtype=np.float64)
    if mode == "shift":
        w = rss - w0
        clamped = int(np.count_nonzero(w < 0))
        return np.maximum(w, 0.0), clamped
    if mode == "power":
        return np.power(10.0, rss / 10.0), 0
    raise ValueError(f"unknown weight mode {mode!r}; expected one of {WEIGHT_MODES}")


def weighted_centroid(weights: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Convex combination of ``values`` (rows) with non-negative ``weights``."""
    weights = np.asarray(weights, dtype=np.float64)
    total = weights.sum()
    if not total > 0:
        raise ZeroWeightSum("weights sum to zero")
    return (weights @ np.asarray(values, dtype=np.float64)) / total


def snap_to_floor(z_hat: float, floors: Sequence[FloorSpec]) -> int:
    """Label of the floor whose ``z_center`` is nearest; ties go to the lower floor."""
    best = None
    best_gap = None
    for f in sorted(floors, key=lambda f: f.label):
        gap = abs(z_hat - f.z_center)
        if best_gap is None or gap < best_gap:
            best, best_gap = f.label, gap
    if best is None:
        raise ValueError("no floors to snap to")
    return best


@dataclass(frozen=True)
class ApPositionTable:
    """Estimated AP coordinates, only for APs heard by at least one fingerprint.

    ``fallback`` flags APs whose supporting readings all had zero weight; those use the
    unweighted mean of their supporting positions.
    """

    building_id: str
    ap_ids: tuple[str, ...]
    positions: np.ndarray
    support: np.ndarray
    fallback: np.ndarray
    floors: tuple[FloorSpec, ...]
    w0: float
    mode: str = "shift"

    @cached_property
    def index(self) -> dict[str, int]:
        return {ap: i for i, ap in enumerate(self.ap_ids)}

    def __len__(self) -> int:
        return len(self.ap_ids)

    def payload_params(self) -> int:
        # the mobile needs only the AP heights
        return len(self.ap_ids)


@dataclass(frozen=True)
class WclEstimate:
    z_hat: float
    floor: int
    heard_count: int
    clamped: int = 0


def heard_mask(db: FingerprintDatabase) -> np.ndarray:
    """Boolean ``(N_fp, N_ap)``: True where the record actually holds a reading for the AP."""
    mask = np.zeros((db.n_fp, db.n_ap), dtype=bool)
    idx = db.ap_index
    for n, rec in enumerate(db.records):
        mask[n, [idx[a] for a in rec.readings]] = True
    return mask


def estimate_ap_positions(
    db: FingerprintDatabase, w0: float | None = None, mode: str = "shift", strict: bool = False
) -> ApPositionTable:
    if w0 is None:
        w0 = db.not_heard_value
    mask = heard_mask(db)
    weights, clamped = rss_weights(db.dense, w0, mode)
    weights = np.where(mask, weights, 0.0)
    support = mask.sum(axis=0)
    keep = np.flatnonzero(support > 0)
    wsum = weights.sum(axis=0)
    pos = db.positions

    positions = np.empty((len(keep), 3))
    fallback = np.zeros(len(keep), dtype=bool)
    for row, ap in enumerate(keep):
        if wsum[ap] > 0:
            positions[row] = weights[:, ap] @ pos / wsum[ap]
        else:
            if strict:
                raise ZeroWeightSum(f"every reading of AP {db.aps[ap]!r} has zero weight")
            positions[row] = pos[mask[:, ap]].mean(axis=0)
            fallback[row] = True
    if fallback.any():
        log.warning("%d APs fell back to unweighted position means", int(fallback.sum()))
    positions.setflags(write=False)
    return ApPositionTable(
        building_id=db.building_id,
        ap_ids=tuple(db.aps[i] for i in keep),
        positions=positions,
        support=support[keep].astype(np.int64),
        fallback=fallback,
        floors=db.floors,
        w0=float(w0),
        mode=mode,
    )


def wcl_estimate(table: ApPositionTable, obs: Observation) -> WclEstimate:
    """Height and floor of the mobile as the weighted mean of heard AP heights."""
    rows = []
    rss = []
    for ap, value in obs.readings.items():
        i = table.index.get(ap)
        if i is not None:
            rows.append(i)
            rss.append(value)
    if not rows:
        raise NoCoverage("no observed AP has an estimated position")
    weights, clamped = rss_weights(np.array(rss), table.w0, table.mode)
    if not weights.sum() > 0:
        raise NoCoverage("all heard APs have zero weight")
    z_hat = float(weighted_centroid(weights, table.positions[rows, 2]))
    return WclEstimate(z_hat, snap_to_floor(z_hat, table.floors), len(rows), clamped)
