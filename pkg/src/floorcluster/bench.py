"""Benchmark harness: floor detection probability, online latency and mobile payload for
the four floor estimators on a (train, test) pair.

Offline builds run once and are not timed. The online loop times each query call with a
monotonic clock; observations that an estimator cannot handle (no usable AP) are counted
as no-coverage and left out of the detection-probability denominator.
"""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .clustering import CompactModel, TwoStageModel, classify_floor, floorwise_cluster, two_stage_build, two_stage_query
from .core import DistanceCounter, FingerprintDatabase, Observation
from .errors import BuildingMismatch, EmptyTestSet, NoCoverage, UnknownMethod
from .kmeans import KmeansConfig
from .nn import nn_estimate
from .wcl import ApPositionTable, estimate_ap_positions, wcl_estimate

METHODS = ("nn", "wcl", "two_stage", "proposed")
BYTES_PER_PARAM = 4
CSV_FIELDS = (
    "method",
    "rho",
    "detection_prob",
    "mean_latency_s",
    "median_latency_s",
    "payload_bytes",
    "n_queries",
    "no_coverage",
)


def payload_params(method: str, n_ap: int, n_fp: int = 0, n_c: int = 0) -> int:
    """Number of parameters the mobile needs for online floor estimation.

    nn: every fingerprint vector plus its height label, ``(N_ap + 1) * N_fp``.
    wcl: one height per AP, ``N_ap``.
    two_stage: all fingerprints plus the heads, ``(N_ap + 1) * N_fp + N_ap * N_c``.
    proposed: heads plus their floor labels, ``(N_ap + 1) * N_c``.
    """
    if min(n_ap, n_fp, n_c) < 0:
        raise ValueError("counts must be non-negative")
    if method == "nn":
        return (n_ap + 1) * n_fp
    if method == "wcl":
        return n_ap
    if method == "two_stage":
        return (n_ap + 1) * n_fp + n_ap * n_c
    if method == "proposed":
        return (n_ap + 1) * n_c
    raise UnknownMethod(f"unknown method {method!r}; expected one of {METHODS}")


def sparse_campaign_params(n_buildings: int, points_per_building: int, heard_per_point: int, coord_dims: int = 3) -> int:
    """Parameters of a sparse fingerprint store: per point, one RSS per heard AP plus its coordinates."""
    return n_buildings * points_per_building * (heard_per_point + coord_dims)


def megabits(params: int, bits_per_param: int = 32) -> float:
    return params * bits_per_param / 1e6


class NearestNeighbourMethod:
    name = "nn"
    rho = None

    def build(self, train: FingerprintDatabase) -> None:
        self.db = train
        self.params = payload_params("nn", train.n_ap, train.n_fp)

    def query(self, obs: Observation, counter: DistanceCounter | None = None) -> int:
        return nn_estimate(self.db, obs, counter).floor


class WclMethod:
    name = "wcl"
    rho = None

    def __init__(self, table: ApPositionTable | None = None, mode: str = "shift"):
        self.table = table
        self.mode = mode

    def build(self, train: FingerprintDatabase | None) -> None:
        if self.table is None:
            self.table = estimate_ap_positions(train, mode=self.mode)
        self.params = payload_params("wcl", len(self.table))

    def query(self, obs: Observation, counter: DistanceCounter | None = None) -> int:
        return wcl_estimate(self.table, obs).floor


class TwoStageMethod:
    name = "two_stage"

    def __init__(self, rho: float, cfg: KmeansConfig | None = None, model: TwoStageModel | None = None):
        self.rho = rho if model is None else model.rho
        self.cfg = cfg
        self.model = model

    def build(self, train: FingerprintDatabase | None) -> None:
        if self.model is None:
            self.model = two_stage_build(train, self.rho, self.cfg)
        self.params = self.model.payload_params()

    def query(self, obs: Observation, counter: DistanceCounter | None = None) -> int:
        return two_stage_query(self.model, obs, counter).floor


class ProposedMethod:
    name = "proposed"

    def __init__(self, rho: float, cfg: KmeansConfig | None = None, model: CompactModel | None = None):
        self.rho = rho if model is None else model.rho
        self.cfg = cfg
        self.model = model

    def build(self, train: FingerprintDatabase | None) -> None:
        if self.model is None:
            self.model = floorwise_cluster(train, self.rho, self.cfg)
        self.params = self.model.payload_params()

    def query(self, obs: Observation, counter: DistanceCounter | None = None) -> int:
        return classify_floor(self.model, obs, counter).floor


def make_method(name: str, rho: float | None = None, cfg: KmeansConfig | None = None):
    if name == "nn":
        return NearestNeighbourMethod()
    if name == "wcl":
        return WclMethod()
    if name in ("two_stage", "proposed"):
        if rho is None:
            raise ValueError(f"method {name!r} needs a clustering ratio")
        return (TwoStageMethod if name == "two_stage" else ProposedMethod)(rho, cfg)
    raise UnknownMethod(f"unknown method {name!r}; expected one of {METHODS}")


@dataclass
class EvalReport:
    method: str
    rho: float | None
    detection_probability: float
    mean_latency_s: float
    median_latency_s: float
    total_latency_s: float
    payload_params: int
    payload_bytes: int
    n_queries: int
    no_coverage_count: int
    distance_evals_per_query: float
    latencies: list[float] = field(default_factory=list, repr=False)

    def csv_row(self) -> dict:
        return {
            "method": self.method,
            "rho": "" if self.rho is None else repr(self.rho),
            "detection_prob": repr(self.detection_probability),
            "mean_latency_s": f"{self.mean_latency_s:.9f}",
            "median_latency_s": f"{self.median_latency_s:.9f}",
            "payload_bytes": self.payload_bytes,
            "n_queries": self.n_queries,
            "no_coverage": self.no_coverage_count,
        }

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("latencies")
        return d


def evaluate(method, train: FingerprintDatabase | None, test: Sequence[Observation], building_id: str | None = None) -> EvalReport:
    """Build ``method`` on ``train`` (untimed) and time its online loop over ``test``.

    ``building_id`` names the test set's building; it must match the training data.
    """
    if not test:
        raise EmptyTestSet("test set is empty")
    if train is not None and building_id is not None and train.building_id != building_id:
        raise BuildingMismatch(f"train building {train.building_id!r} != test building {building_id!r}")
    method.build(train)
    counter = DistanceCounter()
    latencies = []
    correct = 0
    no_cov = 0
    clock = time.perf_counter
    for obs in test:
        t0 = clock()
        try:
            floor = method.query(obs, counter)
        except NoCoverage:
            latencies.append(clock() - t0)
            no_cov += 1
            continue
        latencies.append(clock() - t0)
        correct += floor == obs.true_floor
    answered = len(test) - no_cov
    return EvalReport(
        method=method.name,
        rho=method.rho,
        detection_probability=correct / answered if answered else math.nan,
        mean_latency_s=statistics.fmean(latencies),
        median_latency_s=statistics.median(latencies),
        total_latency_s=math.fsum(latencies),
        payload_params=method.params,
        payload_bytes=BYTES_PER_PARAM * method.params,
        n_queries=len(test),
        no_coverage_count=no_cov,
        distance_evals_per_query=counter.evals / len(test),
        latencies=latencies,
    )


def compare_all(
    train: FingerprintDatabase,
    test: Sequence[Observation],
    rhos: Sequence[float],
    cfg: KmeansConfig | None = None,
    building_id: str | None = None,
) -> list[EvalReport]:
    """NN, WCL, then the two-stage baseline and the proposed method at each ratio."""
    methods = [NearestNeighbourMethod(), WclMethod()]
    methods += [TwoStageMethod(r, cfg) for r in rhos]
    methods += [ProposedMethod(r, cfg) for r in rhos]
    return [evaluate(m, train, test, building_id) for m in methods]


def reports_csv(reports: Sequence[EvalReport], provenance: dict | None = None) -> str:
    buf = io.StringIO()
    if provenance is not None:
        buf.write("# " + json.dumps(provenance, sort_keys=True) + "\n")
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for r in reports:
        writer.writerow(r.csv_row())
    return buf.getvalue()


def reports_json(reports: Sequence[EvalReport], provenance: dict | None = None) -> str:
    return json.dumps({"provenance": provenance or {}, "reports": [r.to_dict() for r in reports]}, indent=2, sort_keys=True) + "\n"


def read_reports_csv(text: str) -> list[dict]:
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))
