"""Command-line entry point: ingest -> index -> fit -> serve/export.

Every stage writes deterministic artifacts: stable ordering, floats at 12
significant digits, and a run manifest listing SHA-256 digests of inputs
and outputs so identical runs can be verified byte for byte.

Exit codes: 2 parse/missing-input failure, 3 validation failure, 4
pipeline or fit failure, 5 address in use.
"""

from __future__ import annotations

import csv
import errno
import hashlib
import json
import math
import sys
import time
from datetime import date
from pathlib import Path

import click
import numpy as np

from . import __version__, index as index_mod, ingest, stats
from .errors import EquateError, NonConvergence, ParseError, TooFewPoints
from .model import FeatureSpec, IndexConfig, LanguageRecord, validate_dataset
from .snapshot import ApiSnapshot, build_snapshot
from . import service as service_mod

EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_PIPELINE = 4
EXIT_ADDR_IN_USE = 5


def fmt(x) -> str:
    """Fixed 12-significant-digit float formatting for byte-stable exports."""
    if isinstance(x, float):
        return format(x, ".12g")
    return str(x)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))


def fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group(context_settings={"auto_envvar_prefix": "EQUATE"})
@click.version_option(version=__version__)
def main():
    """Language-AI readiness pipeline."""


# ---------------------------------------------------------------------------
# ingest


def _read(path):
    p = Path(path)
    if not p.exists():
        fail(EXIT_PARSE, f"missing input file {path}")
    return p.read_text(encoding="utf-8")


def _parse_language_values(text: str) -> dict[str, dict[str, float]]:
    out: dict[str, dict[str, float]] = {}
    reader = csv.DictReader(text.splitlines())
    for lineno, row in enumerate(reader, start=2):
        try:
            out.setdefault(row["feature_id"], {})[row["glottocode"]] = float(row["value"])
        except (KeyError, ValueError) as exc:
            raise ParseError(f"bad language-feature row: {exc}", lineno) from exc
    return out


def _parse_universities(text: str) -> list[tuple[float, float]]:
    reader = csv.DictReader(text.splitlines())
    try:
        return [(float(r["lat"]), float(r["lon"])) for r in reader]
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad universities row: {exc}") from exc


@main.command("ingest")
@click.option("--registry", required=True)
@click.option("--snapshots", "snapshot_paths", multiple=True, required=True)
@click.option("--geo", "geo_paths", multiple=True)
@click.option("--manifests", "manifest_paths", multiple=True)
@click.option("--boundaries", required=True)
@click.option("--features", "features_path", required=True)
@click.option("--universities", "universities_path", default=None)
@click.option("--language-features", "language_features_path", default=None)
@click.option("--out", required=True)
def cmd_ingest(
    registry,
    snapshot_paths,
    geo_paths,
    manifest_paths,
    boundaries,
    features_path,
    universities_path,
    language_features_path,
    out,
):
    """Parse and validate all input files into one dataset bundle."""
    try:
        records = ingest.parse_registry(_read(registry))
        snapshot_rows = []
        for p in snapshot_paths:
            snapshot_rows.extend(ingest.parse_snapshot(_read(p)))
        geo_rows = []
        for p in geo_paths:
            geo_rows.extend(ingest.parse_geo_table(_read(p)))
        manifests = [ingest.parse_manifest(_read(p)) for p in manifest_paths]
        polygons = ingest.parse_boundaries(_read(boundaries))
        specs_doc = json.loads(_read(features_path))
        specs = [FeatureSpec(**d) for d in specs_doc]
        language_values = {}
        if language_features_path:
            language_values = _parse_language_values(_read(language_features_path))
        universities = []
        if universities_path:
            universities = _parse_universities(_read(universities_path))
    except (EquateError, json.JSONDecodeError, TypeError, ValueError) as exc:
        fail(EXIT_PARSE, str(exc))

    report = validate_dataset(records)
    assignment, methods = ingest.geo_join(records, polygons)

    if universities:
        language_values["university_distance"] = {
            r.glottocode: ingest.nearest_university_distance(
                (r.centroid_lat, r.centroid_lon), universities
            )
            for r in records
        }

    bundle = {
        "records": [
            {
                "glottocode": r.glottocode,
                "iso639_3": r.iso639_3,
                "name": r.name,
                "centroid_lat": r.centroid_lat,
                "centroid_lon": r.centroid_lon,
                "macroarea": r.macroarea,
                "family": r.family,
                "primary_country": r.primary_country,
                "admin1": r.admin1,
                "n_speakers": r.n_speakers,
                "vitality": r.vitality,
                "institutional": r.institutional,
                "is_dead": r.is_dead,
            }
            for r in records
        ],
        "snapshots": [
            [s.snapshot_date.isoformat(), s.language_code, s.n_models, s.n_datasets]
            for s in snapshot_rows
        ],
        "geo": [[g.country, g.admin1 or "", g.feature_id, g.value, g.year] for g in geo_rows],
        "manifests": [
            {
                "model_name": m.model_name,
                "release_date": m.release_date.isoformat(),
                "languages": list(m.languages),
            }
            for m in manifests
        ],
        "specs": specs_doc,
        "geo_assignment": {c: list(v) for c, v in sorted(assignment.items())},
        "geo_methods": dict(sorted(methods.items())),
        "language_values": language_values,
        "validation": {"errors": report.errors, "warnings": report.warnings},
    }
    write_json(out, bundle)
    click.echo(f"bundle written to {out} ({len(records)} languages)")
    if not report.ok:
        for e in report.errors:
            click.echo(f"validation: {e}", err=True)
        sys.exit(EXIT_VALIDATION)


# ---------------------------------------------------------------------------
# bundle loading helpers


def load_bundle(path) -> dict:
    p = Path(path)
    if not p.exists():
        fail(EXIT_PARSE, f"missing bundle {path}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        fail(EXIT_PARSE, f"bad bundle JSON: {exc}")
    doc["_records"] = [LanguageRecord(**r) for r in doc["records"]]
    doc["_specs"] = [FeatureSpec(**s) for s in doc["specs"]]
    doc["_snapshots"] = [
        ingest.SnapshotRow(date.fromisoformat(d), code, m, n)
        for d, code, m, n in doc["snapshots"]
    ]
    doc["_geo"] = [
        ingest.GeoRow(c, a or None, f, v, y) for c, a, f, v, y in doc["geo"]
    ]
    doc["_manifests"] = [
        ingest.CoverageManifest(m["model_name"], date.fromisoformat(m["release_date"]), tuple(m["languages"]))
        for m in doc["manifests"]
    ]
    doc["_assignment"] = {c: tuple(v) for c, v in doc["geo_assignment"].items()}
    return doc


def development_scores_from_geo(geo_rows) -> tuple[dict[str, float], dict[str, float]]:
    """Country development and GDP levels (means over admin1 rows) used to
    pick imputation donors."""
    dev: dict[str, list[float]] = {}
    gdp: dict[str, list[float]] = {}
    for g in geo_rows:
        if g.feature_id == "hdi":
            dev.setdefault(g.country, []).append(g.value)
        elif g.feature_id == "gdp_per_capita":
            gdp.setdefault(g.country, []).append(g.value)
    return (
        {c: float(np.mean(v)) for c, v in dev.items()},
        {c: float(np.mean(v)) for c, v in gdp.items()},
    )


def latest_snapshot_year(snapshot_rows) -> int:
    if not snapshot_rows:
        fail(EXIT_PARSE, "bundle contains no snapshot rows")
    return max(s.snapshot_date.year for s in snapshot_rows)


def counts_for_year(bundle, year: int):
    """Per-language model/dataset counts for a snapshot year (0 when the
    language has no row)."""
    records = bundle["_records"]
    by_iso = {r.iso639_3: r.glottocode for r in records if r.iso639_3}
    by_code = {r.glottocode: r.glottocode for r in records}
    models = {r.glottocode: 0 for r in records}
    datasets = {r.glottocode: 0 for r in records}
    for s in bundle["_snapshots"]:
        if s.snapshot_date.year != year:
            continue
        code = by_iso.get(s.language_code) or by_code.get(s.language_code)
        if code is None:
            continue
        models[code] += s.n_models
        datasets[code] += s.n_datasets
    return models, datasets


def quarterly_dates(start_year: int, end_year: int) -> list[date]:
    return [date(y, m, 15) for y in range(start_year, end_year + 1) for m in (2, 5, 8, 11)]


# ---------------------------------------------------------------------------
# fit payload builders (shared by `fit`, `index`, and the snapshot)


def zipf_payload(bundle, year: int) -> dict:
    models, datasets = counts_for_year(bundle, year)
    out = {"year": year}
    for label, counts in (("models", models), ("datasets", datasets)):
        vals = sorted((v for v in counts.values() if v > 0), reverse=True)
        fit = stats.fit_power_law(vals)
        sigma = stats.zipf_residual_sigma(vals)
        out[label] = {
            **fit.to_dict(),
            "zipf_sigma": sigma,
            "points": [[k + 1, float(v)] for k, v in enumerate(vals)],
        }
    return out


def ols_payload(bundle, year: int) -> dict:
    records = bundle["_records"]
    models, _ = counts_for_year(bundle, year)
    x = np.array([float(r.n_speakers) for r in records])
    y = np.array([float(models[r.glottocode]) for r in records])
    fit = stats.fit_loglog_ols(x, y)
    categories = stats.classify_languages(fit, records, y)
    points = []
    for i, r in enumerate(records):
        if fit.included[i]:
            points.append(
                {
                    "glottocode": r.glottocode,
                    "n_speakers": float(x[i]),
                    "n_models": float(y[i]),
                    "studentized": float(fit.studentized_residuals[i]),
                    "p_value": float(fit.p_values[i]),
                    "category": categories[r.glottocode],
                }
            )
    return {"year": year, **fit.to_dict(), "points": points, "categories": categories}


def diffusion_payload(bundle) -> dict:
    records = bundle["_records"]
    manifests = bundle["_manifests"]
    if not manifests:
        fail(EXIT_PARSE, "bundle contains no coverage manifests")
    start = min(m.release_date.year for m in manifests)
    end = latest_snapshot_year(bundle["_snapshots"])
    timestamps = quarterly_dates(start, end)
    series, _ = ingest.build_diffusion_series(records, manifests, timestamps)
    tn, norm = stats.normalize_time(series.timestamps)
    fit = stats.fit_gompertz(tn, series.totals)
    fitted = fit.predict(tn)
    lin_points, excluded = stats.linearize_gompertz(fit, tn, series.totals)
    return {
        **fit.to_dict(),
        "time_normalization": {"mu_t": norm.mu_t, "sigma_t": norm.sigma_t},
        "points": [
            [float(t), float(s), float(f)]
            for t, s, f in zip(tn, series.totals, fitted)
        ],
        "linearized": [[float(a), float(b)] for a, b in lin_points],
        "linearized_excluded": excluded,
    }


def pca_payload(extract_path) -> dict:
    text = _read(extract_path)
    rows = list(csv.reader(text.splitlines()))
    names = rows[0]
    X = np.array([[float(v) for v in r] for r in rows[1:]])
    res = stats.pca_varimax(X, n_components=2)
    return {"variables": names, **res.to_dict()}


def stepwise_payload(bundle, year: int) -> dict:
    """Which language-level resource features predict log model counts,
    with macroarea dummies always retained."""
    records = bundle["_records"]
    models, _ = counts_for_year(bundle, year)
    y = np.log1p(np.array([float(models[r.glottocode]) for r in records]))
    candidates = {}
    for fid, by_code in sorted(bundle.get("language_values", {}).items()):
        col = np.array([float(by_code.get(r.glottocode, 0.0)) for r in records])
        if col.std() > 0:
            candidates[fid] = np.log1p(np.abs(col)) * np.sign(col)
    areas = sorted({r.macroarea for r in records})
    dummies = {
        f"area_{a}": np.array([1.0 if r.macroarea == a else 0.0 for r in records])
        for a in areas[1:]
    }
    res = stats.stepwise_select(y, candidates, group_dummies=dummies)
    return {"year": year, **res.to_dict(), "skipped_singular": res.skipped_singular}


# ---------------------------------------------------------------------------
# index


def run_index(bundle, cfg: IndexConfig, pca_extract=None):
    records = bundle["_records"]
    matrix, warnings = ingest.build_feature_matrix(
        records,
        bundle["_snapshots"],
        bundle["_geo"],
        bundle["_manifests"],
        bundle["_specs"],
        bundle["_assignment"],
        {f: dict(v) for f, v in bundle.get("language_values", {}).items()},
    )
    dev, gdp = development_scores_from_geo(bundle["_geo"])
    speakers = {r.glottocode: r.n_speakers for r in records}
    result, log, weights, normalized = index_mod.run_pipeline(
        matrix, cfg, bundle["_assignment"], dev, speakers, gdp
    )

    # imputed matrix for the detail endpoint: recompute the dense matrix
    from .impute import impute_all

    dense, _ = impute_all(matrix, bundle["_assignment"], dev, gdp)

    year = latest_snapshot_year(bundle["_snapshots"])
    fits = {
        "zipf": zipf_payload(bundle, year),
        "ols": ols_payload(bundle, year),
        "diffusion": diffusion_payload(bundle),
    }
    if pca_extract:
        fits["pca"] = pca_payload(pca_extract)
    categories = fits["ols"]["categories"]

    snap = build_snapshot(
        records,
        result,
        categories=categories,
        raw_matrix=dense,
        imputation_log=log,
        fits=fits,
    )
    # deterministic timestamp: snapshots are content-addressed, so the
    # build time is pinned to the data vintage rather than the wall clock
    snap.built_at = f"{year}-12-31T00:00:00+00:00"
    return result, log, weights, snap, warnings


INDEX_CSV_HEADER = [
    "glottocode",
    "name",
    "overall",
    "ai_resources",
    "socioeconomic",
    "digital_infrastructure",
    "penalty",
    "rank",
    "tier",
]


def write_index_csv(path, result, records):
    names = {r.glottocode: r.name for r in records}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(INDEX_CSV_HEADER)
        for e in result.entries:
            w.writerow(
                [
                    e.glottocode,
                    names[e.glottocode],
                    fmt(e.overall),
                    fmt(e.subscores.get("ai_resources", float("nan"))),
                    fmt(e.subscores.get("socioeconomic", float("nan"))),
                    fmt(e.subscores.get("digital_infrastructure", float("nan"))),
                    fmt(e.binary_penalty),
                    e.rank,
                    e.tier,
                ]
            )


@main.command("index")
@click.option("--bundle", "bundle_path", required=True)
@click.option("--config", "config_path", required=True)
@click.option("--pca-extract", "pca_extract", default=None)
@click.option("--out", "out_dir", required=True)
def cmd_index(bundle_path, config_path, pca_extract, out_dir):
    """Run the full scoring pipeline and build the API snapshot."""
    t0 = time.monotonic()
    bundle = load_bundle(bundle_path)
    cfg_file = Path(config_path)
    if not cfg_file.exists():
        fail(EXIT_PARSE, f"missing config {config_path}")
    try:
        cfg = IndexConfig.from_dict(json.loads(cfg_file.read_text()))
    except (json.JSONDecodeError, ValueError, TypeError) as exc:
        fail(EXIT_PARSE, f"bad config: {exc}")

    try:
        result, log, weights, snap, warnings = run_index(bundle, cfg, pca_extract)
    except EquateError as exc:
        fail(EXIT_PIPELINE, f"pipeline failure: {exc}")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_index_csv(out / "index.csv", result, bundle["_records"])
    write_json(
        out / "index.json",
        {
            "entries": [
                {
                    "glottocode": e.glottocode,
                    "overall": e.overall,
                    "subscores": e.subscores,
                    "binary_penalty": e.binary_penalty,
                    "rank": e.rank,
                    "tier": e.tier,
                }
                for e in result.entries
            ],
            "weights": {k: v for k, v in sorted(weights.weights.items())},
            "merges": [
                {"merged_id": m.merged_id, "sources": list(m.sources), "w_merged": m.w_merged}
                for m in weights.merges
            ],
        },
    )
    with open(out / "imputation_log.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["glottocode", "feature_id", "method", "donor", "value"])
        for row in sorted(log.to_rows()):
            w.writerow([row[0], row[1], row[2], row[3], fmt(row[4])])
    snap.save(out / "snapshot.json")

    manifest = {
        "tool_version": __version__,
        "inputs": {
            Path(bundle_path).name: sha256_file(bundle_path),
            cfg_file.name: sha256_file(config_path),
        },
        "outputs": {
            name: sha256_file(out / name)
            for name in ("index.csv", "index.json", "imputation_log.csv", "snapshot.json")
        },
        "build_id": snap.build_id,
        "elapsed_seconds": round(time.monotonic() - t0, 3),
    }
    write_json(out / "run_manifest.json", manifest)
    click.echo(f"index written to {out_dir} (build {snap.build_id})")
    if warnings:
        click.echo(f"{len(warnings)} unmapped snapshot codes", err=True)


# ---------------------------------------------------------------------------
# fit


@main.command("fit")
@click.option("--bundle", "bundle_path", required=True)
@click.option("--kind", type=click.Choice(["zipf", "ols", "gompertz", "pca", "stepwise"]), required=True)
@click.option("--year", type=int, default=None)
@click.option("--extract", "extract_path", default=None, help="PCA variable extract CSV")
@click.option("--out", "out_dir", required=True)
def cmd_fit(bundle_path, kind, year, extract_path, out_dir):
    """Run one statistical fit and write its JSON result + plot CSV."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if kind == "pca":
        if not extract_path:
            fail(EXIT_PARSE, "--extract is required for kind=pca")
        try:
            payload = pca_payload(extract_path)
        except EquateError as exc:
            fail(EXIT_PIPELINE, str(exc))
        write_json(out / "fit_pca.json", payload)
        with open(out / "fit_pca.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["variable", "loading_1", "loading_2", "rotated_1", "rotated_2"])
            for name, ld, rot in zip(
                payload["variables"], payload["loadings"], payload["rotated_loadings"]
            ):
                w.writerow([name, fmt(ld[0]), fmt(ld[1]), fmt(rot[0]), fmt(rot[1])])
        click.echo(f"pca fit written to {out_dir}")
        return

    bundle = load_bundle(bundle_path)
    if year is None:
        year = latest_snapshot_year(bundle["_snapshots"])

    try:
        if kind == "zipf":
            payload = zipf_payload(bundle, year)
            write_json(out / "fit_zipf.json", payload)
            with open(out / "fit_zipf.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["series", "rank", "count"])
                for label in ("models", "datasets"):
                    for k, v in payload[label]["points"]:
                        w.writerow([label, k, fmt(v)])
        elif kind == "ols":
            payload = ols_payload(bundle, year)
            write_json(out / "fit_ols.json", payload)
            with open(out / "fit_ols.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["glottocode", "n_speakers", "n_models", "studentized", "p_value", "category"])
                for p in payload["points"]:
                    w.writerow(
                        [
                            p["glottocode"],
                            fmt(p["n_speakers"]),
                            fmt(p["n_models"]),
                            fmt(p["studentized"]),
                            fmt(p["p_value"]),
                            p["category"],
                        ]
                    )
        elif kind == "gompertz":
            payload = diffusion_payload(bundle)
            write_json(out / "fit_gompertz.json", payload)
            with open(out / "fit_gompertz.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["t_norm", "covered_speakers", "fitted"])
                for t, s, f in payload["points"]:
                    w.writerow([fmt(t), fmt(s), fmt(f)])
            if not payload["converged"]:
                fail(EXIT_PIPELINE, "gompertz fit did not converge (result written)")
        else:  # stepwise
            payload = stepwise_payload(bundle, year)
            write_json(out / "fit_stepwise.json", payload)
            with open(out / "fit_stepwise.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["step", "bic"])
                for i, b in enumerate(payload["bic_trace"]):
                    w.writerow([i, fmt(b)])
    except NonConvergence as exc:
        fail(EXIT_PIPELINE, str(exc))
    except (EquateError,) as exc:
        fail(EXIT_PIPELINE, str(exc))
    click.echo(f"{kind} fit written to {out_dir}")


# ---------------------------------------------------------------------------
# serve / export


def _load_snapshot_or_die(path) -> ApiSnapshot:
    p = Path(path)
    if not p.exists():
        fail(EXIT_PARSE, f"missing snapshot {path}")
    try:
        return ApiSnapshot.load(p)
    except EquateError as exc:
        fail(EXIT_PARSE, f"bad snapshot: {exc}")


@main.command("serve")
@click.option("--snapshot", "snapshot_path", required=True)
@click.option("--addr", default="127.0.0.1:8000")
def cmd_serve(snapshot_path, addr):
    """Serve a snapshot over the read-only /v1 HTTP API."""
    import uvicorn

    snap = _load_snapshot_or_die(snapshot_path)
    app = service_mod.create_app(snap)
    host, _, port = addr.rpartition(":")
    host = host or "127.0.0.1"
    try:
        uvicorn.run(app, host=host, port=int(port), log_level="warning")
    except OSError as exc:
        if exc.errno == errno.EADDRINUSE:
            fail(EXIT_ADDR_IN_USE, f"address in use: {addr}")
        raise
    except SystemExit as exc:
        # uvicorn wraps startup failures (such as a busy port) in SystemExit(1)
        if exc.code:
            fail(EXIT_ADDR_IN_USE, f"server failed to start on {addr}")


RANKINGS_CSV_FIELDS = [
    "glottocode",
    "name",
    "n_speakers",
    "country",
    "macroarea",
    "overall",
    "ai_resources",
    "socioeconomic",
    "digital_infrastructure",
    "binary_penalty",
    "rank",
    "tier",
    "category",
]


@main.command("export")
@click.option("--snapshot", "snapshot_path", required=True)
@click.option(
    "--what",
    type=click.Choice(["rankings", "zipf", "ols", "diffusion", "pca"]),
    required=True,
)
@click.option("--out", required=True)
def cmd_export(snapshot_path, what, out):
    """Write API payloads to disk without running a server."""
    snap = _load_snapshot_or_die(snapshot_path)
    if what == "rankings":
        payload = service_mod.rankings_payload(snap, limit=None)
        with open(out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(RANKINGS_CSV_FIELDS)
            for item in payload["items"]:
                w.writerow([fmt(item[f]) if isinstance(item[f], float) else item[f] for f in RANKINGS_CSV_FIELDS])
    else:
        payload = service_mod.stats_payload(snap, what)
        if payload is None:
            fail(EXIT_PIPELINE, f"snapshot has no {what} fit")
        write_json(out, payload)
    click.echo(f"{what} exported to {out}")


if __name__ == "__main__":
    main()
