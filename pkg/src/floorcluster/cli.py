"""Command-line entry point: ``floorcluster generate|train|eval|compare|inspect``.

Exit codes: 0 success, 1 a method failed to build or run, 2 usage/config/file errors.
The default seed can be overridden with the ``FLOORCLUSTER_SEED`` environment variable.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import os
import sys
from pathlib import Path

from . import __version__
from .bench import METHODS, compare_all, evaluate, make_method, reports_csv, reports_json
from .bench import ProposedMethod, TwoStageMethod, WclMethod
from .clustering import check_rho, floorwise_cluster, two_stage_build
from .errors import BuildingMismatch, FloorClusterError
from .formats import (
    read_ap_table,
    read_campaign,
    read_compact_model,
    read_two_stage_model,
    sniff,
    write_ap_table,
    write_campaign,
    write_compact_model,
    write_two_stage_model,
)
from .kmeans import KmeansConfig
from .synth import BuildingPlan, PropagationModel, generate_campaign, generate_tracks, preset, tracks_database
from .wcl import estimate_ap_positions

SEED_ENV = "FLOORCLUSTER_SEED"

EXIT_OK, EXIT_METHOD, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class MethodFailure(Exception):
    pass


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _rho_arg(text: str) -> float:
    try:
        return check_rho(float(text))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _rhos_arg(text: str) -> list[float]:
    return [_rho_arg(t) for t in text.split(",") if t.strip()]


_PLAN_FIELDS = {f.name: f for f in dataclasses.fields(BuildingPlan)}
_PROP_FIELDS = {f.name: f for f in dataclasses.fields(PropagationModel)}
_RUN_KEYS = {"grid_step": float, "n_tracks": int, "track_length": int}


def _coerce(field_type, raw: str, key: str):
    kind = {"int": int, "float": float, "str": str}.get(str(field_type), float)
    try:
        return kind(raw)
    except ValueError:
        raise UsageError(f"config key {key!r}: cannot parse {raw!r}") from None


def read_config(path: str) -> dict:
    """Key-value config (``key = value`` per line, ``#`` comments) for plan/propagation/run settings."""
    parser = configparser.ConfigParser(comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    try:
        text = Path(path).read_text(encoding="utf-8")
        parser.read_string("[config]\n" + text)
    except (OSError, configparser.Error) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    out = {}
    for key, raw in parser["config"].items():
        if key in _PLAN_FIELDS:
            out[key] = _coerce(_PLAN_FIELDS[key].type, raw, key)
        elif key in _PROP_FIELDS:
            out[key] = _coerce(_PROP_FIELDS[key].type, raw, key)
        elif key in _RUN_KEYS:
            out[key] = _coerce(_RUN_KEYS[key].__name__, raw, key)
        else:
            raise UsageError(f"unknown config key {key!r}")
    return out


def _provenance(command: str, config: dict) -> dict:
    return {"tool": "floorcluster", "version": __version__, "command": command, "config": config}


def _kmeans_cfg(args) -> KmeansConfig:
    return KmeansConfig(k=1, max_iters=args.max_iters, seed=args.seed, n_restarts=args.restarts)


def _out_dir(path: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise UsageError(f"output directory {path} does not exist")
    return p


def _out_file(path: str) -> Path:
    p = Path(path)
    if not p.parent.is_dir():
        raise UsageError(f"output directory {p.parent} does not exist")
    return p


# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    out = _out_dir(args.out)
    plan, grid_step, n_tracks = preset(args.preset, args.seed)
    settings = {"grid_step": grid_step, "n_tracks": n_tracks, "track_length": 50}
    overrides = read_config(args.config) if args.config else {}
    for key, flag in [
        ("grid_step", args.grid_step),
        ("n_tracks", args.n_tracks),
        ("tx_power_dbm", args.tx_power),
        ("path_loss_exponent", args.path_loss_exponent),
        ("floor_attenuation_db", args.floor_attenuation),
        ("shadowing_sigma_db", args.shadowing_sigma),
        ("hearability_threshold_dbm", args.threshold),
    ]:
        if flag is not None:
            overrides[key] = flag
    plan_kw = {k: v for k, v in overrides.items() if k in _PLAN_FIELDS}
    prop_kw = {k: v for k, v in overrides.items() if k in _PROP_FIELDS}
    settings.update({k: v for k, v in overrides.items() if k in _RUN_KEYS})
    try:
        plan = dataclasses.replace(plan, **plan_kw)
        prop = PropagationModel(**prop_kw)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None

    meta = {
        "generator": "floorcluster",
        "version": __version__,
        "preset": args.preset,
        "seed": args.seed,
        **settings,
        "plan": dataclasses.asdict(plan),
        "propagation": dataclasses.asdict(prop),
    }
    db = generate_campaign(plan, prop, settings["grid_step"], args.seed, meta={**meta, "role": "train"})
    tracks = generate_tracks(plan, prop, settings["n_tracks"], args.seed, track_length=settings["track_length"])
    test = tracks_database(plan, tracks, meta={**meta, "role": "test"})
    write_campaign(db, out / "campaign.jsonl")
    write_campaign(test, out / "tracks.jsonl")

    mean_heard = sum(len(r.readings) for r in db.records) / db.n_fp
    print(f"building {plan.building_id}  seed {args.seed}")
    print(f"{'N_fl':>6} {'N_fp':>8} {'N_t':>8} {'N_ap':>6} {'heard/pt':>9}")
    print(f"{len(db.floors):>6} {db.n_fp:>8} {test.n_fp:>8} {db.n_ap:>6} {mean_heard:>9.1f}")
    print(f"wrote {out / 'campaign.jsonl'} and {out / 'tracks.jsonl'}")
    return EXIT_OK


def cmd_train(args) -> int:
    out = _out_file(args.out)
    db = read_campaign(args.campaign)
    if args.method in ("proposed", "two_stage") and args.rho is None:
        raise UsageError(f"--rho is required for method {args.method}")
    cfg = _kmeans_cfg(args)
    if args.method == "proposed":
        model = floorwise_cluster(db, args.rho, cfg, workers=args.workers)
        size = write_compact_model(model, out)
        for f, n in sorted(model.heads_per_floor().items()):
            flag = "  (clamped to distinct fingerprints)" if f in model.clamped_floors else ""
            print(f"floor {f}: {n} heads{flag}")
        params = model.payload_params()
        print(f"N_c = {model.n_c}, N_ap = {model.n_ap}")
    elif args.method == "two_stage":
        model = two_stage_build(db, args.rho, cfg)
        size = write_two_stage_model(model, out)
        params = model.payload_params()
        print(f"N_c = {model.n_c} global heads over N_fp = {model.n_fp}, N_ap = {model.n_ap}")
    else:
        table = estimate_ap_positions(db)
        size = write_ap_table(table, out)
        params = table.payload_params()
        print(f"{len(table)} AP positions ({int(table.fallback.sum())} unweighted fallbacks)")
    print(f"payload: {params} parameters = {4 * params} bytes at 32 bits; file {out} is {size} bytes")
    return EXIT_OK


def _load_model_method(path: str):
    kind = sniff(path)
    if kind == "compact":
        return ProposedMethod(0, model=read_compact_model(path))
    if kind == "two_stage":
        return TwoStageMethod(0, model=read_two_stage_model(path))
    if kind == "ap_table":
        return WclMethod(table=read_ap_table(path))
    raise UsageError(f"{path} is a campaign file, not a model")


def _emit(reports, args, command: str) -> None:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command")}
    prov = _provenance(command, config)
    text = reports_csv(reports, prov) if args.format == "csv" else reports_json(reports, prov)
    if args.out:
        _out_file(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_eval(args) -> int:
    test = read_campaign(args.test)
    if args.model:
        method = _load_model_method(args.model)
        model_building = (getattr(method, "model", None) or method.table).building_id
        if model_building != test.building_id:
            raise BuildingMismatch(f"model building {model_building!r} != test building {test.building_id!r}")
        if args.method and args.method != method.name:
            raise UsageError(f"--method {args.method} does not match model type {method.name}")
        train = None
    else:
        if not args.train or not args.method:
            raise UsageError("eval needs --train and --method, or --model")
        if args.method in ("proposed", "two_stage") and args.rho is None:
            raise UsageError(f"--rho is required for method {args.method}")
        train = read_campaign(args.train)
        if train.building_id != test.building_id:
            raise BuildingMismatch(f"train building {train.building_id!r} != test building {test.building_id!r}")
        method = make_method(args.method, args.rho, _kmeans_cfg(args))
    try:
        report = evaluate(method, train, test.observations())
    except FloorClusterError as exc:
        raise MethodFailure(str(exc)) from exc
    _emit([report], args, "eval")
    return EXIT_OK


def cmd_compare(args) -> int:
    train = read_campaign(args.train)
    test = read_campaign(args.test)
    if train.building_id != test.building_id:
        raise BuildingMismatch(f"train building {train.building_id!r} != test building {test.building_id!r}")
    try:
        reports = compare_all(train, test.observations(), args.rhos, _kmeans_cfg(args))
    except FloorClusterError as exc:
        raise MethodFailure(str(exc)) from exc
    _emit(reports, args, "compare")
    return EXIT_OK


def cmd_inspect(args) -> int:
    kind = sniff(args.file)
    if kind == "campaign":
        db = read_campaign(args.file)
        counts = db.floor_counts()
        print(f"campaign {db.building_id}: N_fl={len(db.floors)} N_fp={db.n_fp} N_ap={db.n_ap} not_heard={db.not_heard_value}")
        for f in db.floors:
            print(f"  floor {f.label} (name {f.name}) z={f.z_center}: {counts[f.label]} records")
        if db.meta:
            print("  meta: " + json.dumps(db.meta, sort_keys=True))
    elif kind == "compact":
        m = read_compact_model(args.file)
        print(f"compact model {m.building_id}: N_ap={m.n_ap} N_c={m.n_c} rho={m.rho} payload={m.payload_params()} params")
        for f, n in sorted(m.heads_per_floor().items()):
            print(f"  floor {f}: {n} heads")
    elif kind == "two_stage":
        m = read_two_stage_model(args.file)
        print(f"two-stage model {m.building_id}: N_ap={m.n_ap} N_fp={m.n_fp} N_c={m.n_c} rho={m.rho} payload={m.payload_params()} params")
    else:
        t = read_ap_table(args.file)
        print(f"AP table {t.building_id}: {len(t)} APs, {len(t.floors)} floors, mode={t.mode} w0={t.w0}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="floorcluster", description="Floor estimation from RSS fingerprints.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def seeded(sp):
        sp.add_argument("--seed", type=int, default=None, help=f"random seed (default ${SEED_ENV} or 0)")

    def kmeans_opts(sp):
        sp.add_argument("--max-iters", type=int, default=100)
        sp.add_argument("--restarts", type=int, default=1)

    g = sub.add_parser("generate", help="synthesise a campaign and test tracks")
    g.add_argument("--preset", default="univ1", choices=["univ1", "univ2", "mall", "office"])
    g.add_argument("--out", default=".", help="existing output directory")
    g.add_argument("--config", help="key = value file overriding plan/propagation settings")
    g.add_argument("--grid-step", type=float)
    g.add_argument("--n-tracks", type=int)
    g.add_argument("--tx-power", type=float)
    g.add_argument("--path-loss-exponent", type=float)
    g.add_argument("--floor-attenuation", type=float)
    g.add_argument("--shadowing-sigma", type=float)
    g.add_argument("--threshold", type=float, help="hearability threshold, dBm")
    seeded(g)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="build a model file from a campaign")
    t.add_argument("--campaign", required=True)
    t.add_argument("--method", choices=["proposed", "two_stage", "wcl"], default="proposed")
    t.add_argument("--rho", type=_rho_arg)
    t.add_argument("--out", required=True)
    t.add_argument("--workers", type=int, default=1)
    kmeans_opts(t)
    seeded(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate one method")
    e.add_argument("--test", required=True)
    e.add_argument("--train")
    e.add_argument("--model", help="prebuilt model file (compact, two-stage or AP table)")
    e.add_argument("--method", choices=METHODS)
    e.add_argument("--rho", type=_rho_arg)
    e.add_argument("--format", choices=["csv", "json"], default="csv")
    e.add_argument("--out")
    kmeans_opts(e)
    seeded(e)
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("compare", help="evaluate all four methods")
    c.add_argument("--train", required=True)
    c.add_argument("--test", required=True)
    c.add_argument("--rhos", type=_rhos_arg, default=[0.01, 0.05, 0.1])
    c.add_argument("--format", choices=["csv", "json"], default="csv")
    c.add_argument("--out")
    kmeans_opts(c)
    seeded(c)
    c.set_defaults(func=cmd_compare)

    i = sub.add_parser("inspect", help="summarise a campaign or model file")
    i.add_argument("file")
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if hasattr(args, "seed") and args.seed is None:
            args.seed = _default_seed()
        return args.func(args)
    except MethodFailure as exc:
        print(f"error: method failed: {exc}", file=sys.stderr)
        return EXIT_METHOD
    except (UsageError, FloorClusterError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
