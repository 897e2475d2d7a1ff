"""Synthetic multi-storey campaigns: AP placement, log-distance path loss with per-floor
attenuation and i.i.d. log-normal shadowing, grid fingerprints and random-waypoint tracks.

Randomness comes from numpy's PCG64 generator seeded with ``[seed, stream, floor]`` so
every floor (and every purpose) has its own reproducible stream.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import DEFAULT_NOT_HEARD, DEFAULT_RSS_MAX, DEFAULT_RSS_MIN, FingerprintDatabase, FingerprintRecord, FloorSpec, Observation
from .errors import EmptyCampaign

# stream ids for derived generators
_AP_STREAM, _FP_STREAM, _TRACK_STREAM = 0, 1, 2


@dataclass(frozen=True)
class BuildingPlan:
    n_floors: int = 4
    floor_spacing: float = 3.5
    width: float = 60.0
    depth: float = 40.0
    n_aps: int = 100
    seed: int = 0
    building_id: str = "synthetic"
    ap_height_max: float = 1.0
    """APs sit between the floor's measurement plane and this height above it."""

    def __post_init__(self):
        if self.n_floors < 1 or self.n_aps < 1:
            raise ValueError("need at least one floor and one AP")
        if self.floor_spacing <= 0 or self.width <= 0 or self.depth <= 0:
            raise ValueError("floor spacing and footprint must be positive")
        if not 0 <= self.ap_height_max < self.floor_spacing / 2:
            raise ValueError("ap_height_max must keep APs inside their floor's slab")

    def floor_specs(self) -> list[FloorSpec]:
        return [FloorSpec(f, f * self.floor_spacing, str(f + 1)) for f in range(self.n_floors)]

    def ap_ids(self) -> list[str]:
        return [f"ap-{i:04d}" for i in range(self.n_aps)]

    def ap_layout(self) -> tuple[np.ndarray, np.ndarray]:
        """AP positions ``(n_aps, 3)`` and floor labels, spread evenly over floors."""
        per_floor = [self.n_aps // self.n_floors + (f < self.n_aps % self.n_floors) for f in range(self.n_floors)]
        pos, floors = [], []
        for f, count in enumerate(per_floor):
            rng = np.random.default_rng([self.seed, _AP_STREAM, f])
            xy = rng.uniform((0.0, 0.0), (self.width, self.depth), size=(count, 2))
            z = f * self.floor_spacing + rng.uniform(0.0, self.ap_height_max, size=count)
            pos.append(np.column_stack([xy, z]))
            floors.append(np.full(count, f))
        return np.vstack(pos), np.concatenate(floors)


@dataclass(frozen=True)
class PropagationModel:
    tx_power_dbm: float = -30.0
    path_loss_exponent: float = 3.0
    floor_attenuation_db: float = 15.0
    shadowing_sigma_db: float = 4.0
    hearability_threshold_dbm: float = -95.0
    quantize_db: float = 1.0
    """Reported RSS resolution; 0 keeps raw values."""

    def mean_rss(self, distance, floors_crossed):
        d = np.maximum(np.asarray(distance, dtype=np.float64), 1.0)
        return (
            self.tx_power_dbm
            - 10.0 * self.path_loss_exponent * np.log10(d)
            - self.floor_attenuation_db * np.asarray(floors_crossed)
        )

    def sample(self, distance, floors_crossed, rng: np.random.Generator | None = None) -> np.ndarray:
        """Noisy, quantised, clamped RSS; unheard entries are NaN."""
        rss = self.mean_rss(distance, floors_crossed)
        if self.shadowing_sigma_db > 0:
            if rng is None:
                raise ValueError("shadowing needs a random generator")
            rss = rss + rng.normal(0.0, self.shadowing_sigma_db, size=rss.shape)
        if self.quantize_db > 0:
            rss = np.round(rss / self.quantize_db) * self.quantize_db
        rss = np.clip(rss, DEFAULT_RSS_MIN, DEFAULT_RSS_MAX)
        return np.where(rss >= self.hearability_threshold_dbm, rss, np.nan)

    def max_floors_heard(self) -> int:
        """Largest floor crossing at which the mean RSS at the reference distance is still heard."""
        budget = self.tx_power_dbm - self.hearability_threshold_dbm
        if budget < 0:
            return -1
        if self.floor_attenuation_db <= 0:
            return math.inf
        return int(budget // self.floor_attenuation_db)


def _rss_block(points, point_floors, ap_pos, ap_floor, prop, rng):
    d = np.linalg.norm(points[:, None, :] - ap_pos[None, :, :], axis=2)
    crossed = np.abs(point_floors[:, None] - ap_floor[None, :])
    return prop.sample(d, crossed, rng)


def grid_points(plan: BuildingPlan, grid_step: float) -> np.ndarray:
    """Cell-centred ``(x, y)`` survey grid covering the footprint."""
    nx = int(plan.width / grid_step + 1e-9)
    ny = int(plan.depth / grid_step + 1e-9)
    xs = (np.arange(nx) + 0.5) * grid_step
    ys = (np.arange(ny) + 0.5) * grid_step
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def _readings(row: np.ndarray, ap_ids: Sequence[str]) -> dict[str, float]:
    return {ap_ids[i]: float(row[i]) for i in np.flatnonzero(~np.isnan(row))}


def generate_campaign(
    plan: BuildingPlan,
    prop: PropagationModel,
    grid_step: float = 1.5,
    seed: int = 0,
    meta: dict | None = None,
) -> FingerprintDatabase:
    """Fingerprints on a per-floor grid; the registry holds every AP heard at least once.

    Grid points that hear no AP are skipped.
    """
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    ap_pos, ap_floor = plan.ap_layout()
    ap_ids = plan.ap_ids()
    xy = grid_points(plan, grid_step)
    if not len(xy):
        raise EmptyCampaign("grid step larger than the footprint")
    records = []
    heard = np.zeros(plan.n_aps, dtype=bool)
    for spec in plan.floor_specs():
        rng = np.random.default_rng([seed, _FP_STREAM, spec.label])
        pts = np.column_stack([xy, np.full(len(xy), spec.z_center)])
        rss = _rss_block(pts, np.full(len(pts), spec.label), ap_pos, ap_floor, prop, rng)
        heard |= ~np.isnan(rss).all(axis=0)
        for p, row in zip(pts, rss):
            readings = _readings(row, ap_ids)
            if readings:
                records.append(FingerprintRecord(tuple(float(c) for c in p), spec.label, readings))
    if not records:
        raise EmptyCampaign("no AP is heard anywhere; check the propagation thresholds")
    floors_used = {r.floor for r in records}
    floors = [f for f in plan.floor_specs() if f.label in floors_used]
    if len(floors) != plan.n_floors:
        raise EmptyCampaign("some floors hear no AP at all")
    registry = [ap for ap, h in zip(ap_ids, heard) if h]
    return FingerprintDatabase(
        building_id=plan.building_id,
        aps=tuple(registry),
        floors=tuple(floors),
        records=tuple(records),
        not_heard_value=DEFAULT_NOT_HEARD,
        meta=dict(meta or {}),
    )


def _walk(rng, plan: BuildingPlan, n: int, step: float) -> np.ndarray:
    """``n`` points of a random-waypoint walk with fixed stride inside the footprint."""
    hi = np.array([plan.width, plan.depth])
    pos = rng.uniform((0.0, 0.0), hi)
    target = rng.uniform((0.0, 0.0), hi)
    out = np.empty((n, 2))
    for i in range(n):
        out[i] = pos
        left = step
        while left > 0:
            gap = target - pos
            dist = float(np.hypot(*gap))
            if dist <= left:
                pos = target
                left -= dist
                target = rng.uniform((0.0, 0.0), hi)
            else:
                pos = pos + gap * (left / dist)
                left = 0.0
    return out


def generate_tracks(
    plan: BuildingPlan,
    prop: PropagationModel,
    n_points: int,
    seed: int = 0,
    floors: Iterable[int] | None = None,
    track_length: int = 50,
    stride: float = 1.0,
) -> list[Observation]:
    """Random-waypoint walks, each on one floor, with fresh shadowing per observation.

    Tracks pick their floor uniformly from ``floors`` (all floors by default). Observations
    that hear nothing are kept with empty readings; estimators report them as no-coverage.
    """
    if n_points < 0:
        raise ValueError("n_points must be non-negative")
    if n_points == 0:
        return []
    allowed = sorted(set(floors)) if floors is not None else list(range(plan.n_floors))
    if not allowed or min(allowed) < 0 or max(allowed) >= plan.n_floors:
        raise ValueError("track floors must be valid floor labels")
    ap_pos, ap_floor = plan.ap_layout()
    ap_ids = plan.ap_ids()
    rng = np.random.default_rng([seed, _TRACK_STREAM])
    obs: list[Observation] = []
    while len(obs) < n_points:
        f = int(allowed[rng.integers(len(allowed))])
        n = min(track_length, n_points - len(obs))
        xy = _walk(rng, plan, n, stride)
        pts = np.column_stack([xy, np.full(n, f * plan.floor_spacing)])
        rss = _rss_block(pts, np.full(n, f), ap_pos, ap_floor, prop, rng)
        for p, row in zip(pts, rss):
            obs.append(Observation(_readings(row, ap_ids), f, tuple(float(c) for c in p)))
    return obs


def tracks_database(plan: BuildingPlan, tracks: Sequence[Observation], meta: dict | None = None) -> FingerprintDatabase:
    """Pack labelled observations into a database so they can be written as a campaign file.

    Observations with empty readings cannot be stored and are skipped.
    """
    heard = set()
    for o in tracks:
        heard.update(o.readings)
    registry = tuple(ap for ap in plan.ap_ids() if ap in heard)
    records = tuple(FingerprintRecord(o.position, o.true_floor, dict(o.readings)) for o in tracks if o.readings)
    if not records:
        raise EmptyCampaign("no track observation hears any AP")
    return FingerprintDatabase(plan.building_id, registry, tuple(plan.floor_specs()), records, meta=dict(meta or {}))


# Shapes follow the four measured buildings: floors, fingerprints, test points, APs.
PRESETS: dict[str, dict] = {
    "univ1": dict(n_floors=4, width=100.5, depth=90.0, grid_step=1.5, n_aps=509, n_tracks=6796),
    "univ2": dict(n_floors=3, width=88.5, depth=84.0, grid_step=1.5, n_aps=489, n_tracks=2301),
    "mall": dict(n_floors=6, width=68.0, depth=64.0, grid_step=4.0, n_aps=468, n_tracks=3503),
    "office": dict(n_floors=4, width=33.0, depth=24.0, grid_step=3.0, n_aps=1103, n_tracks=3873),
}


def preset(name: str, seed: int = 0) -> tuple[BuildingPlan, float, int]:
    """``(plan, grid_step, n_tracks)`` for a named building shape."""
    try:
        p = dict(PRESETS[name])
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    grid_step = p.pop("grid_step")
    n_tracks = p.pop("n_tracks")
    return BuildingPlan(seed=seed, building_id=name, **p), grid_step, n_tracks


def describe(plan: BuildingPlan, prop: PropagationModel) -> dict:
    return {"plan": asdict(plan), "propagation": asdict(prop)}
