"""Fixture-file ingestion: snapshot/registry/geo-table/manifest parsing,
the centroid-to-boundary geographic join, and assembly of the feature
matrix and diffusion series.

All parsers are pure per-file; matrix assembly is a deterministic fold.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from datetime import date

import numpy as np
from scipy import stats as sps
from shapely.geometry import Point, shape

from .errors import (
    DuplicateKey,
    EmptyInput,
    NoBoundaries,
    ParseError,
    SpecMismatch,
)
from .model import DiffusionSeries, FeatureMatrix, FeatureSpec, LanguageRecord

EARTH_RADIUS_KM = 6371.0088


@dataclass(frozen=True)
class SnapshotRow:
    snapshot_date: date
    language_code: str
    n_models: int
    n_datasets: int


@dataclass(frozen=True)
class GeoRow:
    country: str
    admin1: str | None
    feature_id: str
    value: float
    year: int


@dataclass(frozen=True)
class CoverageManifest:
    model_name: str
    release_date: date
    languages: tuple[str, ...]


def _text(data) -> str:
    if isinstance(data, bytes):
        return data.decode("utf-8")
    return data


def _parse_date(s: str, line: int) -> date:
    try:
        return date.fromisoformat(s.strip())
    except ValueError as exc:
        raise ParseError(f"bad date {s!r}: {exc}", line) from exc


def parse_snapshot(data) -> list[SnapshotRow]:
    """Parse a resource-snapshot CSV with header
    snapshot_date,language_code,n_models,n_datasets."""
    reader = csv.reader(io.StringIO(_text(data)))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty file", 1)
    expected = ["snapshot_date", "language_code", "n_models", "n_datasets"]
    if [h.strip() for h in header] != expected:
        raise ParseError(f"bad header {header!r}", 1)
    rows = []
    seen = set()
    for lineno, raw in enumerate(reader, start=2):
        if not raw or all(not c.strip() for c in raw):
            continue
        if len(raw) != 4:
            raise ParseError(f"expected 4 fields, got {len(raw)}", lineno)
        d = _parse_date(raw[0], lineno)
        code = raw[1].strip()
        if not code:
            raise ParseError("empty language_code", lineno)
        try:
            n_models = int(raw[2])
            n_datasets = int(raw[3])
        except ValueError as exc:
            raise ParseError(f"bad count: {exc}", lineno) from exc
        if n_models < 0 or n_datasets < 0:
            raise ParseError("counts must be nonnegative", lineno)
        key = (d, code)
        if key in seen:
            raise DuplicateKey(f"duplicate snapshot row {key}")
        seen.add(key)
        rows.append(SnapshotRow(d, code, n_models, n_datasets))
    return rows


def parse_registry(data) -> list[LanguageRecord]:
    """Parse the language registry CSV mirroring LanguageRecord fields."""
    reader = csv.DictReader(io.StringIO(_text(data)))
    records = []
    for lineno, row in enumerate(reader, start=2):
        try:
            records.append(
                LanguageRecord(
                    glottocode=row["glottocode"].strip(),
                    iso639_3=(row.get("iso639_3") or "").strip() or None,
                    name=row["name"],
                    centroid_lat=float(row["centroid_lat"]),
                    centroid_lon=float(row["centroid_lon"]),
                    macroarea=row["macroarea"],
                    family=row["family"],
                    primary_country=row["primary_country"],
                    admin1=(row.get("admin1") or "").strip() or None,
                    n_speakers=int(row["n_speakers"]),
                    vitality=row.get("vitality", "living"),
                    institutional=row.get("institutional", "0") in ("1", "true", "True"),
                    is_dead=row.get("is_dead", "0") in ("1", "true", "True"),
                )
            )
        except (KeyError, ValueError) as exc:
            raise ParseError(f"bad registry row: {exc}", lineno) from exc
    return records


def parse_geo_table(data) -> list[GeoRow]:
    """Parse a geo table CSV country,admin1,feature_id,value,year; an empty
    admin1 marks a country-level value."""
    reader = csv.DictReader(io.StringIO(_text(data)))
    rows = []
    seen = set()
    for lineno, row in enumerate(reader, start=2):
        try:
            admin1 = (row.get("admin1") or "").strip() or None
            rec = GeoRow(
                country=row["country"].strip(),
                admin1=admin1,
                feature_id=row["feature_id"].strip(),
                value=float(row["value"]),
                year=int(row["year"]),
            )
        except (KeyError, ValueError) as exc:
            raise ParseError(f"bad geo row: {exc}", lineno) from exc
        key = (rec.country, rec.admin1, rec.feature_id, rec.year)
        if key in seen:
            raise DuplicateKey(f"duplicate geo row {key}")
        seen.add(key)
        rows.append(rec)
    return rows


def parse_manifest(data) -> CoverageManifest:
    """Parse one model-coverage manifest JSON document."""
    try:
        doc = json.loads(_text(data))
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad manifest JSON: {exc}") from exc
    try:
        langs = tuple(doc["languages"])
        if not langs:
            raise ParseError("manifest language list is empty")
        return CoverageManifest(
            model_name=doc["model_name"],
            release_date=date.fromisoformat(doc["release_date"]),
            languages=langs,
        )
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad manifest: {exc}") from exc


def parse_boundaries(data) -> dict[tuple[str, str], object]:
    """Parse a GeoJSON FeatureCollection with country/admin1 properties into
    shapely geometries keyed by (country, admin1)."""
    doc = json.loads(_text(data))
    out = {}
    for feat in doc.get("features", []):
        props = feat.get("properties", {})
        key = (props["country"], props["admin1"])
        out[key] = shape(feat["geometry"])
    return out


def geo_join(
    records: list[LanguageRecord],
    boundaries: dict[tuple[str, str], object],
) -> tuple[dict[str, tuple[str, str]], dict[str, str]]:
    """Assign each language to the admin1 polygon containing its centroid.

    Centroids outside every polygon (coastal/island cases) fall back to the
    polygon with the nearest centroid. Ties on shared edges resolve by
    lexicographic (country, admin1). Returns (assignment, method per code)
    with method in {contains, nearest}.
    """
    if not boundaries:
        raise NoBoundaries("empty boundary set")
    keys = sorted(boundaries)
    poly_centroids = {k: boundaries[k].centroid for k in keys}
    assignment = {}
    methods = {}
    for rec in records:
        pt = Point(rec.centroid_lon, rec.centroid_lat)
        covering = [k for k in keys if boundaries[k].covers(pt)]
        if covering:
            assignment[rec.glottocode] = covering[0]
            methods[rec.glottocode] = "contains"
        else:
            nearest = min(keys, key=lambda k: (pt.distance(poly_centroids[k]), k))
            assignment[rec.glottocode] = nearest
            methods[rec.glottocode] = "nearest"
    return assignment, methods


def nearest_university_distance(
    centroid: tuple[float, float],
    universities: list[tuple[float, float]],
    mode: str = "euclidean",
) -> float:
    """Minimum distance from a (lat, lon) centroid to any university.

    The default is planar Euclidean distance in coordinate degrees; the
    great-circle mode returns kilometres instead.
    """
    if not universities:
        raise EmptyInput("no universities")
    lat, lon = centroid
    if mode == "euclidean":
        return min(math.hypot(lat - ulat, lon - ulon) for ulat, ulon in universities)
    if mode == "greatcircle":
        best = math.inf
        phi1 = math.radians(lat)
        for ulat, ulon in universities:
            phi2 = math.radians(ulat)
            dphi = math.radians(ulat - lat)
            dlmb = math.radians(ulon - lon)
            a = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
            best = min(best, 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(a))))
        return best
    raise ValueError(f"unknown mode {mode!r}")


# language-level feature ids resolvable without a geo table
_SNAPSHOT_FIELDS = ("n_models", "n_datasets")
_RECORD_FIELDS = {
    "n_speakers": lambda r: float(r.n_speakers),
    "institutional": lambda r: 1.0 if r.institutional else 0.0,
}


def build_feature_matrix(
    records: list[LanguageRecord],
    snapshots: list[SnapshotRow],
    geo_tables: list[GeoRow],
    manifests: list[CoverageManifest],
    specs: list[FeatureSpec],
    geo_assignment: dict[str, tuple[str, str]] | None = None,
    language_values: dict[str, dict[str, float]] | None = None,
) -> tuple[FeatureMatrix, list[str]]:
    """Assemble one row per language from the parsed sources.

    Language-level snapshot counts default to zero when a language has no
    snapshot row (absence of a model is an observed zero). admin1/country
    features propagate to every language mapped there; unmatched cells stay
    missing for the impute pass. Returns the matrix plus a warning list of
    snapshot codes that map to no language.
    """
    geo_assignment = geo_assignment or {}
    language_values = language_values or {}
    warnings: list[str] = []

    by_iso = {r.iso639_3: r for r in records if r.iso639_3}
    by_code = {r.glottocode: r for r in records}

    # latest snapshot per language
    latest: dict[str, SnapshotRow] = {}
    for row in snapshots:
        rec = by_iso.get(row.language_code) or by_code.get(row.language_code)
        if rec is None:
            warnings.append(row.language_code)
            continue
        cur = latest.get(rec.glottocode)
        if cur is None or row.snapshot_date > cur.snapshot_date:
            latest[rec.glottocode] = row

    # latest year per (country, admin1, feature)
    geo_lookup: dict[tuple[str, str | None, str], tuple[int, float]] = {}
    geo_feature_ids = set()
    for row in geo_tables:
        geo_feature_ids.add(row.feature_id)
        key = (row.country, row.admin1, row.feature_id)
        cur = geo_lookup.get(key)
        if cur is None or row.year > cur[0]:
            geo_lookup[key] = (row.year, row.value)

    covered_codes: set[str] = set()
    for m in manifests:
        covered_codes.update(m.languages)

    values = np.full((len(records), len(specs)), np.nan)
    for j, spec in enumerate(specs):
        fid = spec.feature_id
        if spec.geo_level == "language":
            known = (
                fid in _SNAPSHOT_FIELDS
                or fid in _RECORD_FIELDS
                or fid == "covered_by_conversational_model"
                or fid in language_values
            )
            if not known:
                raise SpecMismatch(f"no source for language-level feature {fid}")
            for i, rec in enumerate(records):
                if fid in _SNAPSHOT_FIELDS:
                    row = latest.get(rec.glottocode)
                    values[i, j] = float(getattr(row, fid)) if row else 0.0
                elif fid in _RECORD_FIELDS:
                    values[i, j] = _RECORD_FIELDS[fid](rec)
                elif fid == "covered_by_conversational_model":
                    hit = rec.glottocode in covered_codes or (
                        rec.iso639_3 and rec.iso639_3 in covered_codes
                    )
                    values[i, j] = 1.0 if hit else 0.0
                else:
                    values[i, j] = language_values[fid].get(rec.glottocode, np.nan)
        else:
            if fid not in geo_feature_ids:
                raise SpecMismatch(f"no geo table provides feature {fid}")
            for i, rec in enumerate(records):
                country, admin1 = geo_assignment.get(
                    rec.glottocode, (rec.primary_country, rec.admin1)
                )
                if spec.geo_level == "admin1":
                    hit = geo_lookup.get((country, admin1, fid))
                else:
                    hit = geo_lookup.get((country, None, fid))
                if hit is not None:
                    values[i, j] = hit[1]
    return FeatureMatrix([r.glottocode for r in records], list(specs), values), warnings


def date_to_year_fraction(d: date) -> float:
    start = date(d.year, 1, 1).toordinal()
    end = date(d.year + 1, 1, 1).toordinal()
    return d.year + (d.toordinal() - start) / (end - start)


def build_diffusion_series(
    records: list[LanguageRecord],
    manifests: list[CoverageManifest],
    timestamps: list[date],
) -> tuple[DiffusionSeries, list[str]]:
    """Cumulative covered-speaker totals per timestamp.

    A language counts as covered at t once any manifest released at or
    before t lists it (by glottocode or ISO code); coverage never retracts.
    Returns the series plus a warning list of manifest codes matching no
    registry language.
    """
    if any(a > b for a, b in zip(timestamps, timestamps[1:])):
        raise ValueError("timestamps must be sorted ascending")
    by_iso = {r.iso639_3: r for r in records if r.iso639_3}
    by_code = {r.glottocode: r for r in records}
    warnings: list[str] = []

    first_covered: dict[str, date] = {}
    for m in sorted(manifests, key=lambda m: m.release_date):
        for code in m.languages:
            rec = by_iso.get(code) or by_code.get(code)
            if rec is None:
                if code not in warnings:
                    warnings.append(code)
                continue
            first_covered.setdefault(rec.glottocode, m.release_date)

    coverage = {}
    for rec in records:
        since = first_covered.get(rec.glottocode)
        coverage[rec.glottocode] = [
            1 if (since is not None and since <= t) else 0 for t in timestamps
        ]
    totals = [
        float(sum(by_code[c].n_speakers * flags[k] for c, flags in coverage.items()))
        for k in range(len(timestamps))
    ]
    series = DiffusionSeries(
        timestamps=[date_to_year_fraction(t) for t in timestamps],
        coverage=coverage,
        totals=totals,
    )
    return series, warnings


def compare_source_distributions(
    counts_a: dict[str, float], counts_b: dict[str, float]
) -> dict[str, float]:
    """Spearman rank correlation and two-sample KS statistic between two
    per-language count maps, compared as proportions over the code union."""
    if not counts_a or not counts_b:
        raise EmptyInput("both count maps must be nonempty")
    codes = sorted(set(counts_a) | set(counts_b))
    a = np.array([counts_a.get(c, 0.0) for c in codes], dtype=float)
    b = np.array([counts_b.get(c, 0.0) for c in codes], dtype=float)
    pa = a / a.sum()
    pb = b / b.sum()
    rho = sps.spearmanr(pa, pb).statistic if len(codes) > 1 else 1.0
    ks = sps.ks_2samp(pa, pb).statistic
    return {"spearman_rho": float(rho), "ks_statistic": float(ks)}
