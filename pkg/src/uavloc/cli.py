"""Command-line entry point: ``uavloc <subcommand>``.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 runtime error
(e.g. an empty neighbor domain under the ``fail`` policy).
"""

from __future__ import annotations

import argparse
import logging
import math
import secrets
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, _jsonl
from .augment import SAMPLINGS, RotationCrop, rotated_crop
from .dataset import class_geo, load_manifest, load_trace
from .embed import EmbeddingStore, read_store, toy_descriptor, write_store
from .errors import ConfigError, DataError, RuntimeDomainError, UavlocError
from .geo import GeoPoint
from .metrics import DEFAULT_S, QueryTruth, SdmConfig, evaluate, report_summary, write_report
from .raster import read_raster, write_raster
from .replay import ON_EMPTY, Strategy, replay, write_geojson
from .replay import write_report as write_replay_report
from .gallery import build_index, read_gallery
from .retrieval import RankedEntry, RankedList, rank_global, rank_neighbor, read_ranked, write_ranked
from .tilecut import cut_tiles, load_mosaic, write_tile_manifest

log = logging.getLogger("uavloc")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit 2, which we reserve for data errors
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_geopoint(text: str) -> GeoPoint:
    try:
        lat, lon = (float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"expected 'lat,lon', got {text!r}") from None
    try:
        return GeoPoint(lat, lon)
    except DataError as exc:
        raise UsageError(str(exc)) from None


# --------------------------------------------------------------------------- commands


def cmd_cut(args) -> int:
    mosaic = load_mosaic(args.mosaic, args.world_file)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = cut_tiles(mosaic, args.windows, args.stride_fraction, out)
    t = mosaic.transform
    write_tile_manifest(
        result.tiles,
        out / "tiles.jsonl",
        mosaic=args.mosaic,
        width=mosaic.width,
        height=mosaic.height,
        channels=mosaic.channels,
        transform=[t.origin_lon, t.origin_lat, t.px_size_lon, t.px_size_lat],
        windows=sorted(set(args.windows)),
        stride_fraction=str(args.stride_fraction),
        warnings=result.warnings,
    )
    print(f"{len(result.tiles)} tiles -> {out / 'tiles.jsonl'}")
    return EXIT_OK


def cmd_embed(args) -> int:
    items = read_gallery(args.manifest, "any")
    if args.external:
        ext = read_store(args.external, normalize=args.normalize)
        missing = [g.entry.sample_id for g in items if g.entry.sample_id not in ext]
        if missing:
            raise DataError(f"external store lacks embeddings for {missing[:5]}")
        ids = [g.entry.sample_id for g in items]
        store = EmbeddingStore(ids, np.array([ext.vector(i) for i in ids]).reshape(len(ids), ext.dimension), ext.dimension)
    else:
        embs = []
        for g in items:
            if g.raster_path is None:
                raise DataError(f"{g.entry.sample_id}: manifest gives no raster path")
            embs.append(toy_descriptor(read_raster(g.raster_path), args.grid, g.entry.sample_id))
        store = EmbeddingStore.from_embeddings(embs, dimension=args.grid * args.grid * 3)
    write_store(store, args.out)
    print(f"{len(store)} embeddings (d={store.dimension}) -> {args.out}")
    return EXIT_OK


def cmd_index(args) -> int:
    index = build_index(args.store, args.manifest, args.gallery_view, args.normalize)
    lats = [e.geo.lat for e in index.entries]
    lons = [e.geo.lon for e in index.entries]
    summary = {
        "entries": len(index),
        "dimension": index.dimension,
        "classes": len({e.class_id for e in index.entries}),
        "bbox": [min(lats), min(lons), max(lats), max(lons)] if lats else None,
    }
    print(_jsonl.dumps(summary))
    return EXIT_OK


def _search_config(args) -> dict:
    if args.use_global and (args.center or args.radius_m is not None):
        raise UsageError("--global conflicts with --center/--radius-m")
    if (args.center is None) != (args.radius_m is None):
        raise UsageError("--center and --radius-m must be given together")
    if args.radius_m is not None and not args.radius_m > 0:
        raise UsageError("--radius-m must be > 0")
    if args.center:
        return {"kind": "neighbor", "center": parse_geopoint(args.center).as_list(), "radius_m": args.radius_m}
    return {"kind": "global"}


def cmd_search(args) -> int:
    strategy = _search_config(args)
    if not args.server and not (args.gallery and args.gallery_manifest):
        raise UsageError("--gallery and --gallery-manifest are required unless --server is given")
    queries = read_store(args.queries, normalize=args.normalize)
    if args.server:
        lists = _remote_search(args.server, queries, args.k, strategy)
    else:
        index = build_index(args.gallery, args.gallery_manifest, args.gallery_view, args.normalize)
        lists = []
        for qid in queries.ids:
            vec = queries.vector(qid)
            if strategy["kind"] == "neighbor":
                lists.append(rank_neighbor(index, vec, GeoPoint(*strategy["center"]), strategy["radius_m"], args.k, qid))
            else:
                lists.append(rank_global(index, vec, args.k, qid))
    write_ranked(
        lists,
        args.out,
        gallery=args.gallery,
        gallery_manifest=args.gallery_manifest,
        queries=args.queries,
        k=args.k,
        strategy=strategy,
        normalize=args.normalize,
        server=args.server,
    )
    print(f"{len(lists)} ranked lists -> {args.out}")
    return EXIT_OK


def _remote_search(server: str, queries: EmbeddingStore, k: int, strategy: dict) -> list[RankedList]:
    try:
        import httpx
    except ImportError:
        raise ConfigError("--server needs httpx (pip install 'uavloc[client]')") from None

    lists = []
    with httpx.Client(base_url=server, timeout=60.0) as client:
        for qid in queries.ids:
            body = {"query_id": qid, "vector": queries.vector(qid).tolist(), "k": k}
            if strategy["kind"] == "neighbor":
                body["center"] = {"lat": strategy["center"][0], "lon": strategy["center"][1]}
                body["radius_m"] = strategy["radius_m"]
            resp = client.post("/search", json=body)
            if resp.status_code == 409:
                raise RuntimeDomainError(resp.json().get("detail", "empty search domain"))
            if resp.status_code >= 400:
                raise DataError(f"server rejected query {qid!r}: {resp.status_code} {resp.text}")
            data = resp.json()
            lists.append(
                RankedList(
                    data["query_id"],
                    [RankedEntry(e["sample_id"], e["distance"], GeoPoint(e["lat"], e["lon"]), e["class_id"])
                     for e in data["entries"]],
                    data["strategy"],
                )
            )
    return lists


def cmd_eval(args) -> int:
    _, lists = read_ranked(args.ranked)
    qm = load_manifest(args.query_manifest, geo_tol_m=args.geo_tol_m)
    truth_geo = args.truth_geo
    if truth_geo == "auto":
        # trace labels are nearest tiles, so a class mean is not a position
        truth_geo = "record" if qm.records and all(r.step is not None for r in qm.records) else "class"
    gallery = read_gallery(args.gallery_manifest, args.gallery_view)
    rel_counts: dict[str, int] = {}
    for g in gallery:
        rel_counts[g.entry.class_id] = rel_counts.get(g.entry.class_id, 0) + 1
    truths = {}
    class_pos = {}
    for r in qm.records:
        if truth_geo == "class":
            if r.class_id not in class_pos:
                class_pos[r.class_id] = class_geo(qm, r.class_id)
            geo = class_pos[r.class_id]
        else:
            geo = r.geo
        truths[r.sample_id] = QueryTruth(r.class_id, geo, rel_counts.get(r.class_id, 0))
    cfg = SdmConfig(tuple(args.k_values), args.s)
    report = evaluate(lists, truths, cfg, gallery_size=len(gallery), per_class=args.per_class)
    write_report(report, args.out, ranked=args.ranked, query_manifest=args.query_manifest,
                 gallery_manifest=args.gallery_manifest, truth_geo=truth_geo)
    print(_jsonl.dumps(report_summary(report)))
    return EXIT_OK


def cmd_augment(args) -> int:
    if args.theta is not None and args.seed is not None:
        raise UsageError("--theta and --seed are mutually exclusive")
    if args.theta is not None:
        theta = math.radians(args.theta) if args.degrees else args.theta
        seed = None
    else:
        seed = args.seed if args.seed is not None else secrets.randbits(32)
        if args.seed is None:
            print(f"seed: {seed}")
        theta = float(np.random.default_rng(seed).uniform(0.0, 2 * math.pi))
    out = rotated_crop(read_raster(args.image), RotationCrop(theta, args.out_size, args.sampling))
    write_raster(out, args.out)
    print(f"theta={theta!r} rad -> {args.out} ({out.shape[1]}x{out.shape[0]})")
    return EXIT_OK


def _strategy(args) -> Strategy:
    if args.strategy == "global":
        if args.radius_m is not None or args.bootstrap != "global" or args.reglobal_distance is not None or args.oracle_anchor:
            raise UsageError("--strategy global conflicts with neighbor-search flags")
        return Strategy("global")
    if args.radius_m is None:
        raise UsageError("--strategy neighbor requires --radius-m")
    if not args.radius_m > 0:
        raise UsageError("--radius-m must be > 0")
    bootstrap = "global" if args.bootstrap == "global" else parse_geopoint(args.bootstrap)
    return Strategy(
        "neighbor",
        radius_m=args.radius_m,
        bootstrap=bootstrap,
        on_empty=args.on_empty,
        reglobal_distance=args.reglobal_distance,
        anchor="truth" if args.oracle_anchor else "predicted",
    )


def cmd_replay(args) -> int:
    strategy = _strategy(args)
    if args.queries and args.grid is not None:
        raise UsageError("--queries and --grid are mutually exclusive")
    trace = load_trace(args.trace)
    index = build_index(args.gallery, args.gallery_manifest, args.gallery_view, args.normalize)
    if args.queries:
        queries = read_store(args.queries, normalize=args.normalize)
    else:
        grid = args.grid if args.grid is not None else 4
        base = Path(args.trace).parent
        queries = EmbeddingStore.from_embeddings(
            [toy_descriptor(read_raster(base / r.image_path), grid, r.sample_id) for r in trace],
            dimension=index.dimension,
        )
    report = replay(trace, queries, index, strategy, args.k, args.k_values, args.s)
    write_replay_report(
        report,
        args.out,
        trace=args.trace,
        gallery=args.gallery,
        gallery_manifest=args.gallery_manifest,
        queries=args.queries or f"toy_descriptor(grid={args.grid if args.grid is not None else 4})",
        normalize=args.normalize,
    )
    if args.geojson:
        write_geojson(report, args.geojson)
    agg = report.aggregates()
    print(f"{agg['steps']} steps, mean error {agg['mean_error_m']:.2f} m, max {agg['max_error_m']:.2f} m -> {args.out}")
    return EXIT_OK


def cmd_serve(args) -> int:
    try:
        import uvicorn
    except ImportError:
        raise ConfigError("serving needs uvicorn (pip install 'uavloc[serve]')") from None
    from .service import create_app

    index = build_index(args.gallery, args.gallery_manifest, args.gallery_view, args.normalize) if args.gallery else None
    uvicorn.run(create_app(index), host=args.host, port=args.port)
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synth import make_world

    info = make_world(args.out_dir, args.seed)
    print(f"synthetic world ({info['steps']} trace steps) -> {args.out_dir}")
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def _add_gallery(p, required: bool = True) -> None:
    p.add_argument("--gallery", required=required, help="gallery embedding store (EMB1)")
    p.add_argument("--gallery-manifest", required=required, help="tile manifest or sample manifest for the gallery")
    p.add_argument("--gallery-view", choices=("satellite", "drone", "any"), default="satellite",
                   help="view filter for sample manifests (default: satellite)")
    p.add_argument("--normalize", action="store_true", help="L2-normalize vectors on load")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="uavloc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"uavloc {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("cut", help="cut a georeferenced mosaic into a tile database")
    p.add_argument("mosaic")
    p.add_argument("--world-file", default=None)
    p.add_argument("--windows", type=int, nargs="+", default=[512, 640, 768])
    p.add_argument("--stride-fraction", default="1/4")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_cut)

    p = sub.add_parser("embed", help="compute (or import) embeddings for a manifest")
    p.add_argument("manifest")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--grid", type=int, default=4, help="toy descriptor grid (d = grid^2 * 3)")
    g.add_argument("--external", help="existing EMB1 store to reorder and validate against the manifest")
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("index", help="validate a gallery store against its manifest and summarize it")
    p.add_argument("--store", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--gallery-view", choices=("satellite", "drone", "any"), default="satellite")
    p.add_argument("--normalize", action="store_true")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("search", help="rank every query against the gallery")
    _add_gallery(p, required=False)
    p.add_argument("--queries", required=True)
    p.add_argument("-k", type=int, default=10)
    p.add_argument("--global", dest="use_global", action="store_true", help="search the whole gallery (default)")
    p.add_argument("--center", help="neighbor-search center 'lat,lon'")
    p.add_argument("--radius-m", type=float)
    p.add_argument("--server", help="send queries to a running 'uavloc serve' instead of searching locally")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("eval", help="score a ranked file: Recall@K, R@Top1%%, mAP, SDM_K")
    p.add_argument("--ranked", required=True)
    p.add_argument("--query-manifest", required=True)
    p.add_argument("--gallery-manifest", required=True)
    p.add_argument("--gallery-view", choices=("satellite", "drone", "any"), default="satellite")
    p.add_argument("--k-values", type=int, nargs="+", default=[1, 3, 5, 10])
    p.add_argument("--s", type=float, default=DEFAULT_S)
    p.add_argument("--per-class", action="store_true", help="average per class before averaging classes")
    p.add_argument("--truth-geo", choices=("auto", "class", "record"), default="auto",
                   help="query position: class mean, the record's own, or auto (record for traces)")
    p.add_argument("--geo-tol-m", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("augment", help="rotation crop of the inscribed square")
    p.add_argument("image")
    p.add_argument("--theta", type=float, help="rotation angle (radians, or degrees with --degrees)")
    p.add_argument("--degrees", action="store_true")
    p.add_argument("--seed", type=int, help="draw theta uniformly from [0, 2pi) with this seed")
    p.add_argument("--out-size", type=int)
    p.add_argument("--sampling", choices=SAMPLINGS, default="bilinear")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("replay", help="replay a flight trace and report localization error")
    p.add_argument("--trace", required=True)
    _add_gallery(p)
    p.add_argument("--queries", help="query embedding store; default: toy descriptors of the trace images")
    p.add_argument("--grid", type=int, help="toy descriptor grid when --queries is absent (default 4)")
    p.add_argument("--strategy", choices=("global", "neighbor"), default="global")
    p.add_argument("--radius-m", type=float)
    p.add_argument("--bootstrap", default="global", help="'global' or an initial anchor 'lat,lon'")
    p.add_argument("--on-empty", choices=ON_EMPTY, default="fallback_global")
    p.add_argument("--reglobal-distance", type=float, help="re-run global search above this top-1 feature distance")
    p.add_argument("--oracle-anchor", action="store_true", help="diagnostic: anchor on ground truth")
    p.add_argument("-k", type=int, default=10)
    p.add_argument("--k-values", type=int, nargs="+", default=None, help="default: those of 1 3 5 not above -k")
    p.add_argument("--s", type=float, default=DEFAULT_S)
    p.add_argument("--out", required=True)
    p.add_argument("--geojson")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="run the HTTP localization service")
    _add_gallery(p, required=False)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("synth", help="write the synthetic demo world")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"uavloc {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"uavloc {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"uavloc {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"uavloc {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (RuntimeDomainError, UavlocError) as exc:
        print(f"uavloc {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
