"""File formats.

Campaign files (text, UTF-8, JSON lines)
    Line 1 is a header object::

        {"format": "fpcampaign", "version": 1, "building_id": ..., "not_heard_value": -100.0,
         "rss_bounds": [-110.0, 0.0], "floors": [{"label": 0, "z_center": 0.0, "name": "1"}, ...],
         "aps": ["ap-0000", ...], "meta": {...}}

    ``z_center`` may be null, in which case it is the median z of that floor's records.
    Every further line is one record ``{"pos": [x, y, z], "floor": 0, "rss": {"ap-0000": -61.0}}``
    with readings written in registry order. Floats use Python's shortest round-trip repr.

Binary payloads (little-endian)
    Common header: magic (4 bytes), version (u16), then format-specific counts. A string
    block follows: building id and then the AP ids in registry order, each as a u16 byte
    length plus UTF-8 bytes.

    ``FPCM`` compact model:  N_ap u32, N_c u32, rho f64, not_heard f32, strings,
                             then N_c x [floor i16][N_ap x f32].
    ``FPTS`` two-stage model: N_ap u32, N_fp u32, N_c u32, rho f64, not_heard f32, strings,
                             N_c x [N_ap x f32] heads, then N_fp x [floor i16][cluster u32][N_ap x f32].
    ``FPAP`` AP positions:   N u32, n_floors u16, w0 f64, mode u8 (0 shift, 1 power), strings,
                             n_floors x [label i16][z_center f64], then N x [x f64][y f64][z f64][support u32][fallback u8].

Readers check magic, version and every length against the bytes actually present before
allocating anything; all failures raise :class:`~floorcluster.errors.FormatError`
subclasses or :class:`~floorcluster.errors.LengthMismatch`.
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path
from typing import Any

import numpy as np

from .clustering import CompactModel, TwoStageModel
from .core import (
    DEFAULT_NOT_HEARD,
    DEFAULT_RSS_MAX,
    DEFAULT_RSS_MIN,
    FingerprintDatabase,
    FingerprintRecord,
    FloorSpec,
    check_floors,
    check_record,
    floor_half_gaps,
    infer_floor_heights,
)
from .errors import BadMagic, LengthMismatch, Malformed, TruncatedFile, VersionUnsupported
from .wcl import WEIGHT_MODES, ApPositionTable

CAMPAIGN_FORMAT = "fpcampaign"
CAMPAIGN_VERSION = 1
BINARY_VERSION = 1

MAGIC_COMPACT = b"FPCM"
MAGIC_TWO_STAGE = b"FPTS"
MAGIC_AP_TABLE = b"FPAP"

_CM_HEADER = struct.Struct("<4sHIIdf")
_TS_HEADER = struct.Struct("<4sHIIIdf")
_AP_HEADER = struct.Struct("<4sHIHdB")
_FLOOR_ENTRY = np.dtype([("label", "<i2"), ("z", "<f8")])


# ---------------------------------------------------------------------------
# campaign text files
# ---------------------------------------------------------------------------


def _dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"), allow_nan=False)


def campaign_lines(db: FingerprintDatabase) -> list[str]:
    header = {
        "format": CAMPAIGN_FORMAT,
        "version": CAMPAIGN_VERSION,
        "building_id": db.building_id,
        "not_heard_value": float(db.not_heard_value),
        "rss_bounds": [float(db.rss_min), float(db.rss_max)],
        "floors": [{"label": f.label, "z_center": float(f.z_center), "name": f.name} for f in db.floors],
        "aps": list(db.aps),
        "meta": db.meta,
    }
    lines = [_dumps(header)]
    idx = db.ap_index
    for rec in db.records:
        rss = {ap: float(rec.readings[ap]) for ap in sorted(rec.readings, key=idx.__getitem__)}
        lines.append(_dumps({"pos": [float(c) for c in rec.position], "floor": rec.floor, "rss": rss}))
    return lines


def write_campaign(db: FingerprintDatabase, path: str | Path) -> None:
    text = "\n".join(campaign_lines(db)) + "\n"
    Path(path).write_bytes(text.encode("utf-8"))


def _reject_constant(name):
    raise ValueError(f"non-finite number {name}")


def _parse_line(line: str, lineno: int) -> Any:
    try:
        return json.loads(line, parse_constant=_reject_constant)
    except ValueError as exc:
        raise Malformed(lineno, f"invalid JSON ({exc})") from None


def _number(v, lineno, what) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise Malformed(lineno, f"{what} must be a number")
    return float(v)


def _int(v, lineno, what) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise Malformed(lineno, f"{what} must be an integer")
    return v


def _expect_keys(obj, required, optional, lineno, what):
    if not isinstance(obj, dict):
        raise Malformed(lineno, f"{what} must be a JSON object")
    missing = [k for k in required if k not in obj]
    if missing:
        raise Malformed(lineno, f"{what} missing {', '.join(missing)}")
    extra = set(obj) - set(required) - set(optional)
    if extra:
        raise Malformed(lineno, f"{what} has unknown keys {sorted(extra)}")


def _parse_header(obj, lineno=1):
    _expect_keys(obj, ("format", "version", "building_id", "floors", "aps"), ("not_heard_value", "rss_bounds", "meta"), lineno, "header")
    if obj["format"] != CAMPAIGN_FORMAT:
        raise Malformed(lineno, f"not a campaign file (format={obj['format']!r})")
    if obj["version"] != CAMPAIGN_VERSION:
        raise VersionUnsupported(f"campaign version {obj['version']!r} not supported")
    if not isinstance(obj["building_id"], str):
        raise Malformed(lineno, "building_id must be a string")
    aps = obj["aps"]
    if not isinstance(aps, list) or not aps or not all(isinstance(a, str) and a for a in aps):
        raise Malformed(lineno, "aps must be a non-empty list of non-empty strings")
    if len(set(aps)) != len(aps):
        raise Malformed(lineno, "duplicate AP id in registry")
    floors_raw = obj["floors"]
    if not isinstance(floors_raw, list) or not floors_raw:
        raise Malformed(lineno, "floors must be a non-empty list")
    floors = []
    for f in floors_raw:
        _expect_keys(f, ("label", "z_center"), ("name",), lineno, "floor spec")
        label = _int(f["label"], lineno, "floor label")
        z = None if f["z_center"] is None else _number(f["z_center"], lineno, "z_center")
        name = f.get("name")
        if name is not None and not isinstance(name, str):
            raise Malformed(lineno, "floor name must be a string")
        floors.append((label, z, name))
    not_heard = _number(obj.get("not_heard_value", DEFAULT_NOT_HEARD), lineno, "not_heard_value")
    bounds = obj.get("rss_bounds", [DEFAULT_RSS_MIN, DEFAULT_RSS_MAX])
    if not isinstance(bounds, list) or len(bounds) != 2:
        raise Malformed(lineno, "rss_bounds must be [min, max]")
    rss_min, rss_max = (_number(b, lineno, "rss bound") for b in bounds)
    if not rss_min <= rss_max:
        raise Malformed(lineno, "rss_bounds min exceeds max")
    meta = obj.get("meta", {})
    if not isinstance(meta, dict):
        raise Malformed(lineno, "meta must be an object")
    return obj["building_id"], aps, floors, not_heard, rss_min, rss_max, meta


def _parse_record(obj, lineno) -> FingerprintRecord:
    _expect_keys(obj, ("pos", "floor", "rss"), (), lineno, "record")
    pos = obj["pos"]
    if not isinstance(pos, list) or len(pos) != 3:
        raise Malformed(lineno, "pos must be [x, y, z]")
    pos = tuple(_number(c, lineno, "coordinate") for c in pos)
    floor = _int(obj["floor"], lineno, "floor")
    rss = obj["rss"]
    if not isinstance(rss, dict):
        raise Malformed(lineno, "rss must be an object")
    readings = {ap: _number(v, lineno, f"RSS of {ap!r}") for ap, v in rss.items()}
    return FingerprintRecord(pos, floor, readings)


def parse_campaign(text: str) -> FingerprintDatabase:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or not lines[0].strip():
        raise Malformed(1, "missing header")
    building_id, aps, floor_raw, not_heard, rss_min, rss_max, meta = _parse_header(_parse_line(lines[0], 1))

    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            raise Malformed(lineno, "blank line")
        records.append((lineno, _parse_record(_parse_line(line, lineno), lineno)))
    if not records:
        raise Malformed(None, "no records")

    labels = [lab for lab, _, _ in floor_raw]
    if len(set(labels)) != len(labels):
        raise Malformed(1, "duplicate floor label")
    known = set(labels)
    for lineno, rec in records:
        if rec.floor not in known:
            raise Malformed(lineno, f"unknown floor label {rec.floor}")
    if any(z is None for _, z, _ in floor_raw):
        given = {lab: z for lab, z, _ in floor_raw if z is not None}
        names = {lab: name for lab, _, name in floor_raw}
        try:
            inferred = {f.label: f.z_center for f in infer_floor_heights(labels, [r for _, r in records], names)}
        except ValueError as exc:
            raise Malformed(1, str(exc)) from None
        floors = [FloorSpec(lab, given.get(lab, inferred[lab]), name) for lab, _, name in floor_raw]
    else:
        floors = [FloorSpec(lab, z, name) for lab, z, name in floor_raw]
    reason = check_floors(floors)
    if reason:
        raise Malformed(1, reason)

    ap_index = {ap: i for i, ap in enumerate(aps)}
    half = floor_half_gaps(floors)
    fz = {f.label: f.z_center for f in floors}
    for lineno, rec in records:
        reason = check_record(rec, ap_index, half, fz, rss_min, rss_max)
        if reason:
            raise Malformed(lineno, reason)
    return FingerprintDatabase(
        building_id=building_id,
        aps=tuple(aps),
        floors=tuple(floors),
        records=tuple(r for _, r in records),
        not_heard_value=not_heard,
        rss_min=rss_min,
        rss_max=rss_max,
        meta=meta,
    )


def read_campaign(path: str | Path) -> FingerprintDatabase:
    data = Path(path).read_bytes()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise Malformed(None, f"not UTF-8 ({exc.reason} at byte {exc.start})") from None
    return parse_campaign(text)


# ---------------------------------------------------------------------------
# binary helpers
# ---------------------------------------------------------------------------


def _strings(items) -> bytes:
    out = bytearray()
    for s in items:
        b = s.encode("utf-8")
        if len(b) > 0xFFFF:
            raise ValueError(f"identifier too long: {s[:20]!r}...")
        out += struct.pack("<H", len(b)) + b
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def remaining(self) -> int:
        return len(self.data) - self.pos

    def take(self, n: int) -> memoryview:
        if n > self.remaining():
            raise TruncatedFile(f"need {n} bytes at offset {self.pos}, only {self.remaining()} left")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, st: struct.Struct):
        return st.unpack(self.take(st.size))

    def strings(self, n: int) -> list[str]:
        # each string needs at least its 2-byte length prefix
        if 2 * n > self.remaining():
            raise TruncatedFile(f"string block of {n} entries cannot fit in {self.remaining()} bytes")
        out = []
        for _ in range(n):
            (length,) = struct.unpack("<H", self.take(2))
            raw = self.take(length)
            try:
                out.append(bytes(raw).decode("utf-8"))
            except UnicodeDecodeError:
                raise Malformed(None, f"identifier at offset {self.pos - length} is not UTF-8") from None
        return out

    def array(self, dtype: np.dtype, count: int) -> np.ndarray:
        need = dtype.itemsize * count
        if need > self.remaining():
            raise TruncatedFile(f"need {need} bytes for {count} entries, only {self.remaining()} left")
        return np.frombuffer(self.take(need), dtype=dtype, count=count).copy()

    def finish(self) -> None:
        if self.remaining():
            raise LengthMismatch(f"{self.remaining()} unexpected trailing bytes")


def _check_magic(r: _Reader, magic: bytes) -> None:
    head = bytes(r.data[:4])
    if len(head) < 4:
        raise TruncatedFile("file shorter than its magic number")
    if head != magic:
        raise BadMagic(f"expected magic {magic!r}, found {head!r}")


def _check_version(version: int) -> None:
    if version != BINARY_VERSION:
        raise VersionUnsupported(f"payload version {version} not supported")


def _check_registry(names: list[str]) -> tuple[str, tuple[str, ...]]:
    building, aps = names[0], tuple(names[1:])
    if not all(aps):
        raise Malformed(None, "empty AP id")
    if len(set(aps)) != len(aps):
        raise Malformed(None, "duplicate AP id")
    return building, aps


def _check_rho(rho: float) -> None:
    if not (0.0 < rho <= 1.0):
        raise Malformed(None, f"rho {rho!r} outside (0, 1]")


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.isfinite(arr).all():
        raise Malformed(None, f"non-finite value in {what}")


def _check_exact(r: _Reader, expected: int, what: str) -> None:
    have = r.remaining()
    if have < expected:
        raise TruncatedFile(f"{what}: need {expected} bytes, {have} present")
    if have > expected:
        raise LengthMismatch(f"{what}: expected {expected} bytes, {have} present")


# ---------------------------------------------------------------------------
# compact model
# ---------------------------------------------------------------------------


def _head_dtype(n_ap: int) -> np.dtype:
    return np.dtype([("floor", "<i2"), ("rss", "<f4", (n_ap,))])


def encode_compact_model(model: CompactModel) -> bytes:
    if model.head_floors.size and (model.head_floors.min() < 0 or model.head_floors.max() > 0x7FFF):
        raise ValueError("floor labels must fit in a signed 16-bit integer")
    header = _CM_HEADER.pack(MAGIC_COMPACT, BINARY_VERSION, model.n_ap, model.n_c, model.rho, model.not_heard_value)
    body = np.empty(model.n_c, dtype=_head_dtype(model.n_ap))
    body["floor"] = model.head_floors
    body["rss"] = model.heads
    return header + _strings([model.building_id, *model.aps]) + body.tobytes()


def compact_body_size(n_ap: int, n_c: int) -> int:
    return n_c * (2 + 4 * n_ap)


def decode_compact_model(data: bytes) -> CompactModel:
    r = _Reader(data)
    _check_magic(r, MAGIC_COMPACT)
    _, version, n_ap, n_c, rho, not_heard = r.unpack(_CM_HEADER)
    _check_version(version)
    if n_ap == 0 or n_c == 0:
        raise Malformed(None, "model must have at least one AP and one head")
    _check_rho(rho)
    if not math.isfinite(not_heard):
        raise Malformed(None, "non-finite not-heard value")
    if 2 * (n_ap + 1) + compact_body_size(n_ap, n_c) > r.remaining():
        raise TruncatedFile(f"header declares {n_ap} APs and {n_c} heads; file too short")
    building, aps = _check_registry(r.strings(n_ap + 1))
    _check_exact(r, compact_body_size(n_ap, n_c), "head block")
    body = r.array(_head_dtype(n_ap), n_c)
    r.finish()
    floors = body["floor"].astype(np.int64)
    if (floors < 0).any():
        raise Malformed(None, "negative floor label")
    heads = body["rss"].astype(np.float32).reshape(n_c, n_ap)
    _check_finite(heads, "cluster heads")
    return CompactModel(building, aps, heads, floors, rho, not_heard)


def write_compact_model(model: CompactModel, path: str | Path) -> int:
    data = encode_compact_model(model)
    Path(path).write_bytes(data)
    return len(data)


def read_compact_model(path: str | Path) -> CompactModel:
    return decode_compact_model(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# two-stage model
# ---------------------------------------------------------------------------


def _fp_dtype(n_ap: int) -> np.dtype:
    return np.dtype([("floor", "<i2"), ("cluster", "<u4"), ("rss", "<f4", (n_ap,))])


def encode_two_stage_model(model: TwoStageModel) -> bytes:
    header = _TS_HEADER.pack(
        MAGIC_TWO_STAGE, BINARY_VERSION, model.n_ap, model.n_fp, model.n_c, model.rho, model.not_heard_value
    )
    heads = np.ascontiguousarray(model.heads, dtype="<f4")
    body = np.empty(model.n_fp, dtype=_fp_dtype(model.n_ap))
    body["floor"] = model.floors
    body["cluster"] = model.assignment
    body["rss"] = model.fingerprints
    return header + _strings([model.building_id, *model.aps]) + heads.tobytes() + body.tobytes()


def decode_two_stage_model(data: bytes) -> TwoStageModel:
    r = _Reader(data)
    _check_magic(r, MAGIC_TWO_STAGE)
    _, version, n_ap, n_fp, n_c, rho, not_heard = r.unpack(_TS_HEADER)
    _check_version(version)
    if n_ap == 0 or n_fp == 0 or n_c == 0:
        raise Malformed(None, "model must have at least one AP, fingerprint and head")
    if n_c > n_fp:
        raise Malformed(None, "more heads than fingerprints")
    _check_rho(rho)
    if not math.isfinite(not_heard):
        raise Malformed(None, "non-finite not-heard value")
    body_size = 4 * n_ap * n_c + (6 + 4 * n_ap) * n_fp
    if 2 * (n_ap + 1) + body_size > r.remaining():
        raise TruncatedFile("file too short for the declared counts")
    building, aps = _check_registry(r.strings(n_ap + 1))
    _check_exact(r, body_size, "two-stage body")
    heads = r.array(np.dtype("<f4"), n_ap * n_c).reshape(n_c, n_ap)
    body = r.array(_fp_dtype(n_ap), n_fp)
    r.finish()
    floors = body["floor"].astype(np.int64)
    clusters = body["cluster"].astype(np.int64)
    if (floors < 0).any():
        raise Malformed(None, "negative floor label")
    if (clusters >= n_c).any():
        raise Malformed(None, "cluster index out of range")
    if len(np.unique(clusters)) != n_c:
        raise Malformed(None, "empty cluster")
    fps = body["rss"].astype(np.float32).reshape(n_fp, n_ap)
    _check_finite(heads, "cluster heads")
    _check_finite(fps, "fingerprints")
    return TwoStageModel(building, aps, heads, fps, floors, clusters, rho, not_heard)


def write_two_stage_model(model: TwoStageModel, path: str | Path) -> int:
    data = encode_two_stage_model(model)
    Path(path).write_bytes(data)
    return len(data)


def read_two_stage_model(path: str | Path) -> TwoStageModel:
    return decode_two_stage_model(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# AP position table
# ---------------------------------------------------------------------------

_AP_ENTRY = np.dtype([("x", "<f8"), ("y", "<f8"), ("z", "<f8"), ("support", "<u4"), ("fallback", "u1")])


def encode_ap_table(table: ApPositionTable) -> bytes:
    header = _AP_HEADER.pack(
        MAGIC_AP_TABLE, BINARY_VERSION, len(table), len(table.floors), table.w0, WEIGHT_MODES.index(table.mode)
    )
    floors = np.empty(len(table.floors), dtype=_FLOOR_ENTRY)
    floors["label"] = [f.label for f in table.floors]
    floors["z"] = [f.z_center for f in table.floors]
    entries = np.empty(len(table), dtype=_AP_ENTRY)
    for i, axis in enumerate("xyz"):
        entries[axis] = table.positions[:, i]
    entries["support"] = table.support
    entries["fallback"] = table.fallback
    return header + _strings([table.building_id, *table.ap_ids]) + floors.tobytes() + entries.tobytes()


def decode_ap_table(data: bytes) -> ApPositionTable:
    r = _Reader(data)
    _check_magic(r, MAGIC_AP_TABLE)
    _, version, n, n_floors, w0, mode = r.unpack(_AP_HEADER)
    _check_version(version)
    if n_floors == 0:
        raise Malformed(None, "no floors")
    if mode >= len(WEIGHT_MODES):
        raise Malformed(None, f"unknown weight mode {mode}")
    if not math.isfinite(w0):
        raise Malformed(None, "non-finite w0")
    body_size = _FLOOR_ENTRY.itemsize * n_floors + _AP_ENTRY.itemsize * n
    if 2 * (n + 1) + body_size > r.remaining():
        raise TruncatedFile("file too short for the declared counts")
    building, aps = _check_registry(r.strings(n + 1))
    _check_exact(r, body_size, "AP table body")
    floor_arr = r.array(_FLOOR_ENTRY, n_floors)
    entries = r.array(_AP_ENTRY, n)
    r.finish()
    floors = [FloorSpec(int(f["label"]), float(f["z"])) for f in floor_arr]
    reason = check_floors(floors)
    if reason:
        raise Malformed(None, reason)
    positions = np.column_stack([entries["x"], entries["y"], entries["z"]]) if n else np.empty((0, 3))
    _check_finite(positions, "AP positions")
    if (entries["fallback"] > 1).any():
        raise Malformed(None, "fallback flag must be 0 or 1")
    if (entries["support"] == 0).any():
        raise Malformed(None, "AP with zero support")
    positions.setflags(write=False)
    return ApPositionTable(
        building_id=building,
        ap_ids=aps,
        positions=positions,
        support=entries["support"].astype(np.int64),
        fallback=entries["fallback"].astype(bool),
        floors=tuple(floors),
        w0=w0,
        mode=WEIGHT_MODES[mode],
    )


def write_ap_table(table: ApPositionTable, path: str | Path) -> int:
    data = encode_ap_table(table)
    Path(path).write_bytes(data)
    return len(data)


def read_ap_table(path: str | Path) -> ApPositionTable:
    return decode_ap_table(Path(path).read_bytes())


def sniff(path: str | Path) -> str:
    """Kind of file at ``path``: "campaign", "compact", "two_stage" or "ap_table"."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    kinds = {MAGIC_COMPACT: "compact", MAGIC_TWO_STAGE: "two_stage", MAGIC_AP_TABLE: "ap_table"}
    if head in kinds:
        return kinds[head]
    if head.startswith(b"{"):
        return "campaign"
    raise BadMagic(f"unrecognised file type (starts with {head!r})")
