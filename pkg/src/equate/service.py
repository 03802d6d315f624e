"""Read-only HTTP JSON API over a precomputed snapshot.

Every handler resolves the current snapshot reference exactly once, so a
request is served entirely from one build even if the snapshot is swapped
mid-flight. Payload builders are plain functions shared with the CLI export
path, which guarantees cross-interface equality by construction.
"""

from __future__ import annotations

import math
import os

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from starlette.exceptions import HTTPException

from .snapshot import ApiSnapshot

DIMENSIONS = {
    "overall": None,
    "ai": "ai_resources",
    "socio": "socioeconomic",
    "infra": "digital_infrastructure",
}

STAT_KINDS = ("zipf", "diffusion", "ols", "pca")

MAX_ZOOM = 12


class BadRequest(Exception):
    def __init__(self, message: str):
        self.message = message


def _score(snap: ApiSnapshot, code: str, dimension: str) -> float:
    entry = snap.entry(code)
    sub = DIMENSIONS[dimension]
    return entry.overall if sub is None else entry.subscores[sub]


def _summary(snap: ApiSnapshot, code: str) -> dict:
    rec = snap.record(code)
    entry = snap.entry(code)
    return {
        "glottocode": code,
        "name": rec.name,
        "n_speakers": rec.n_speakers,
        "country": rec.primary_country,
        "macroarea": rec.macroarea,
        "overall": entry.overall,
        "ai_resources": entry.subscores.get("ai_resources"),
        "socioeconomic": entry.subscores.get("socioeconomic"),
        "digital_infrastructure": entry.subscores.get("digital_infrastructure"),
        "binary_penalty": entry.binary_penalty,
        "rank": entry.rank,
        "tier": entry.tier,
        "category": snap.categories.get(code),
    }


def rankings_payload(
    snap: ApiSnapshot,
    min_speakers: int = 0,
    country: str | None = None,
    dimension: str = "overall",
    limit: int | None = None,
    offset: int = 0,
) -> dict:
    if dimension not in DIMENSIONS:
        raise BadRequest(f"unknown dimension {dimension!r}")
    if min_speakers < 0 or offset < 0 or (limit is not None and limit < 0):
        raise BadRequest("negative paging or filter parameter")
    # snapshots are immutable, so the per-dimension sort order is computed
    # once and reused; filters below preserve it
    cache = getattr(snap, "_order_cache", None)
    if cache is None:
        cache = {}
        object.__setattr__(snap, "_order_cache", cache)
    if dimension not in cache:
        codes = sorted(
            (e.glottocode for e in snap.index_result.entries),
            key=lambda c: (-_score(snap, c, dimension), -snap.record(c).n_speakers, c),
        )
        cache[dimension] = codes
    keep = []
    for code in cache[dimension]:
        rec = snap.record(code)
        if rec.n_speakers < min_speakers:
            continue
        if country is not None and rec.primary_country != country:
            continue
        keep.append(code)
    total = len(keep)
    page = keep[offset:] if limit is None else keep[offset : offset + limit]
    return {
        "build_id": snap.build_id,
        "total": total,
        "offset": offset,
        "items": [_summary(snap, c) for c in page],
    }


def detail_payload(snap: ApiSnapshot, glottocode: str) -> dict | None:
    rec = snap.record(glottocode)
    entry = snap.entry(glottocode)
    if rec is None or entry is None:
        return None
    out = _summary(snap, glottocode)
    out["centroid_lat"] = rec.centroid_lat
    out["centroid_lon"] = rec.centroid_lon
    out["family"] = rec.family
    out["vitality"] = rec.vitality
    out["is_dead"] = rec.is_dead
    out["features"] = [c.to_dict() for c in snap.features.get(glottocode, [])]
    out["build_id"] = snap.build_id
    return out


def parse_bbox(raw: str) -> tuple[float, float, float, float]:
    parts = raw.split(",")
    if len(parts) != 4:
        raise BadRequest("bbox must be min_lon,min_lat,max_lon,max_lat")
    try:
        min_lon, min_lat, max_lon, max_lat = (float(p) for p in parts)
    except ValueError as exc:
        raise BadRequest(f"bad bbox number: {exc}") from exc
    if not (min_lon <= max_lon and min_lat <= max_lat):
        raise BadRequest("bbox min must not exceed max")
    if not (-180 <= min_lon <= 180 and -180 <= max_lon <= 180):
        raise BadRequest("bbox longitude out of range")
    if not (-90 <= min_lat <= 90 and -90 <= max_lat <= 90):
        raise BadRequest("bbox latitude out of range")
    return min_lon, min_lat, max_lon, max_lat


def clusters_payload(snap: ApiSnapshot, bbox: str, zoom: int) -> dict:
    if not 0 <= zoom <= MAX_ZOOM:
        raise BadRequest(f"zoom must be in [0, {MAX_ZOOM}]")
    min_lon, min_lat, max_lon, max_lat = parse_bbox(bbox)
    cell = 360.0 / (2**zoom)

    buckets: dict[tuple[int, int], list[str]] = {}
    for rec in snap.records:
        if not (min_lon <= rec.centroid_lon <= max_lon and min_lat <= rec.centroid_lat <= max_lat):
            continue
        gx = math.floor((rec.centroid_lon + 180.0) / cell)
        gy = math.floor((rec.centroid_lat + 90.0) / cell)
        buckets.setdefault((gx, gy), []).append(rec.glottocode)

    clusters = []
    for key in sorted(buckets):
        codes = sorted(buckets[key])
        lats = [snap.record(c).centroid_lat for c in codes]
        lons = [snap.record(c).centroid_lon for c in codes]
        clusters.append(
            {
                "lat": sum(lats) / len(lats),
                "lon": sum(lons) / len(lons),
                "count": len(codes),
                "sample_codes": codes[:5],
            }
        )
    return {"build_id": snap.build_id, "clusters": clusters}


def stats_payload(snap: ApiSnapshot, kind: str) -> dict | None:
    if kind not in STAT_KINDS or kind not in snap.fits:
        return None
    return {"build_id": snap.build_id, "kind": kind, **snap.fits[kind]}


# ---------------------------------------------------------------------------
# FastAPI wiring


def create_app(snapshot: ApiSnapshot | None = None) -> FastAPI:
    app = FastAPI(title="equate", docs_url=None, redoc_url=None, openapi_url=None)
    app.state.snapshot = snapshot
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["GET"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def bad_params(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": "malformed parameters"})

    @app.exception_handler(BadRequest)
    async def bad_request(request: Request, exc: BadRequest):
        return JSONResponse(status_code=400, content={"error": exc.message})

    def current() -> ApiSnapshot:
        snap = app.state.snapshot
        if snap is None:
            raise HTTPException(status_code=503, detail="no snapshot loaded")
        return snap

    @app.get("/v1/languages")
    def languages(
        min_speakers: int = 0,
        country: str | None = None,
        dimension: str = "overall",
        limit: int = 50,
        offset: int = 0,
    ):
        return rankings_payload(current(), min_speakers, country, dimension, limit, offset)

    @app.get("/v1/languages/{glottocode}")
    def language_detail(glottocode: str):
        payload = detail_payload(current(), glottocode)
        if payload is None:
            raise HTTPException(status_code=404, detail="unknown glottocode")
        return payload

    @app.get("/v1/map/clusters")
    def map_clusters(bbox: str = "-180,-90,180,90", zoom: int = 2):
        return clusters_payload(current(), bbox, zoom)

    @app.get("/v1/stats/{kind}")
    def stats(kind: str):
        payload = stats_payload(current(), kind)
        if payload is None:
            raise HTTPException(status_code=404, detail="unknown stats kind")
        return payload

    @app.get("/v1/openapi")
    def openapi():
        return app.openapi()

    return app


def swap_snapshot(app: FastAPI, snapshot: ApiSnapshot) -> None:
    """Atomically publish a new snapshot; in-flight requests keep the
    reference they already resolved."""
    app.state.snapshot = snapshot


def app_from_env() -> FastAPI:
    path = os.environ.get("EQUATE_SNAPSHOT")
    snap = ApiSnapshot.load(path) if path else None
    return create_app(snap)
