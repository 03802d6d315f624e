"""Acceptance gate: every top-level release criterion as one test.

Each test prints a single PASS line with the measured values so a verbose
run reads as a checklist. The suite exercises the bundled dataset through
the real CLI, the HTTP API, and independent numerical oracles.
"""

import csv
import json
import math
import shutil
import subprocess
import sys
import threading
import time
from pathlib import Path

import numpy as np
import pytest
from fastapi.testclient import TestClient

from equate import index as index_mod, ingest, stats
from equate.model import FeatureMatrix, FeatureSpec, IndexConfig
from equate.impute import impute_all
from equate.service import clusters_payload, create_app, rankings_payload, swap_snapshot
from equate.snapshot import ApiSnapshot

from conftest import DATA, make_record

ROOT = Path(__file__).resolve().parents[1]


def report(name, detail=""):
    print(f"PASS {name}" + (f" [{detail}]" if detail else ""))


def run_cli(args):
    return subprocess.run(
        [sys.executable, "-m", "equate.cli", *args],
        capture_output=True,
        text=True,
        cwd=ROOT,
    )


@pytest.fixture(scope="session")
def cli_outputs(tmp_path_factory):
    """Two identical full pipeline runs over the bundled dataset."""
    base = tmp_path_factory.mktemp("cli")
    ingest_args = [
        "ingest",
        "--registry", str(DATA / "registry.csv"),
        "--geo", str(DATA / "geo" / "admin1.csv"),
        "--geo", str(DATA / "geo" / "country.csv"),
        "--boundaries", str(DATA / "boundaries.geojson"),
        "--features", str(DATA / "features.json"),
        "--universities", str(DATA / "universities.csv"),
        "--language-features", str(DATA / "language_features.csv"),
    ]
    for p in sorted((DATA / "snapshots").glob("*.csv")):
        ingest_args += ["--snapshots", str(p)]
    for p in sorted((DATA / "manifests").glob("*.json")):
        ingest_args += ["--manifests", str(p)]

    runs = {}
    for tag in ("one", "two"):
        bundle = base / f"bundle_{tag}.json"
        out = base / f"out_{tag}"
        t0 = time.perf_counter()
        r1 = run_cli(ingest_args + ["--out", str(bundle)])
        assert r1.returncode == 0, r1.stderr
        r2 = run_cli(
            [
                "index",
                "--bundle", str(bundle),
                "--config", str(DATA / "config.json"),
                "--pca-extract", str(DATA / "pca_extract.csv"),
                "--out", str(out),
            ]
        )
        assert r2.returncode == 0, r2.stderr
        runs[tag] = {"bundle": bundle, "out": out, "elapsed": time.perf_counter() - t0}
    return runs


def _snapshot_counts(year):
    """Per-glottocode model/dataset totals for one snapshot year."""
    records = ingest.parse_registry((DATA / "registry.csv").read_text())
    rows = ingest.parse_snapshot((DATA / "snapshots" / f"hf_{year}.csv").read_text())
    by_iso = {r.iso639_3: r.glottocode for r in records if r.iso639_3}
    models = {}
    datasets = {}
    for s in rows:
        code = by_iso.get(s.language_code, s.language_code)
        models[code] = models.get(code, 0) + s.n_models
        datasets[code] = datasets.get(code, 0) + s.n_datasets
    return (
        sorted((v for v in models.values() if v > 0), reverse=True),
        sorted((v for v in datasets.values() if v > 0), reverse=True),
    )


class TestPowerLawRecovery:
    def test_exact_recovery_fast(self):
        counts = [1000.0 / k for k in range(1, 101)]
        t0 = time.perf_counter()
        fit = stats.fit_power_law(counts)
        elapsed = time.perf_counter() - t0
        assert abs(fit.alpha - 1.0) < 1e-9
        assert abs(fit.log_c - math.log(1000.0)) < 1e-6
        assert elapsed < 1.0
        report("power-law recovery", f"alpha err {abs(fit.alpha - 1):.1e}, {elapsed * 1e3:.1f} ms")


class TestZipfResiduals:
    def test_reference_sigmas(self):
        models, datasets = _snapshot_counts(2024)
        sm = stats.zipf_residual_sigma(models)
        sd = stats.zipf_residual_sigma(datasets)
        assert abs(sm - 0.668) < 0.05
        assert abs(sd - 0.133) < 0.05
        report("zipf residual sigmas", f"models {sm:.3f}, datasets {sd:.3f}")


class TestOlsReference:
    def test_reference_slope_and_r2(self):
        records = ingest.parse_registry((DATA / "registry.csv").read_text())
        rows = ingest.parse_snapshot((DATA / "snapshots" / "hf_2024.csv").read_text())
        by_iso = {r.iso639_3: r.glottocode for r in records if r.iso639_3}
        models = {r.glottocode: 0 for r in records}
        for s in rows:
            code = by_iso.get(s.language_code)
            if code:
                models[code] += s.n_models
        x = np.array([float(r.n_speakers) for r in records])
        y = np.array([float(models[r.glottocode]) for r in records])
        fit = stats.fit_loglog_ols(x, y)
        assert abs(fit.beta1 - 0.312) < 0.03
        assert abs(fit.r2 - 0.304) < 0.05
        report("ols reference", f"beta1 {fit.beta1:.4f}, r2 {fit.r2:.4f}")


class TestGompertz:
    def test_parameter_box_and_reference_series(self):
        rng = np.random.default_rng(7)
        t = np.linspace(-3, 3, 25)
        worst = 0.0
        max_fit_time = 0.0
        for _ in range(100):
            A = 10 ** rng.uniform(0, 9)
            B = 10 ** rng.uniform(-1, 1)
            C = rng.uniform(0.1, 5)
            s = A * np.exp(-B * np.exp(-C * t))
            t0 = time.perf_counter()
            fit = stats.fit_gompertz(t, s)
            max_fit_time = max(max_fit_time, time.perf_counter() - t0)
            rel = max(abs(fit.A - A) / A, abs(fit.B - B) / B, abs(fit.C - C) / C)
            worst = max(worst, rel)
        assert worst < 1e-4
        assert max_fit_time < 5.0

        records = ingest.parse_registry((DATA / "registry.csv").read_text())
        manifests = [
            ingest.parse_manifest(p.read_text())
            for p in sorted((DATA / "manifests").glob("*.json"))
        ]
        from datetime import date

        start = min(m.release_date.year for m in manifests)
        end = max(
            int(p.stem.split("_")[1]) for p in (DATA / "snapshots").glob("*.csv")
        )
        timestamps = [
            date(y, m, 15) for y in range(start, end + 1) for m in (2, 5, 8, 11)
        ]
        series, _ = ingest.build_diffusion_series(records, manifests, timestamps)
        tn, _ = stats.normalize_time(series.timestamps)
        t0 = time.perf_counter()
        fit = stats.fit_gompertz(tn, series.totals)
        elapsed = time.perf_counter() - t0
        assert abs(fit.B - 0.927) < 0.05
        assert abs(fit.C - 1.31) < 0.07
        assert fit.r2 >= 0.85
        assert elapsed < 5.0
        report(
            "gompertz recovery",
            f"box worst rel {worst:.1e}; series B {fit.B:.3f}, C {fit.C:.3f}, r2 {fit.r2:.3f}",
        )


class TestIndexPipelineOracle:
    def test_worked_example_every_intermediate(self):
        # Three languages, six features; f2 = 2*f1 forces one merge, f3
        # carries the log transform. Every intermediate below is computed
        # longhand, independent of the pipeline code.
        eps = 1e-6
        f1 = [4.0, 1.0, 0.0]
        f2 = [8.0, 2.0, 0.0]
        f3 = [99.0, 9.0, 0.0]
        f4 = [20.0, 50.0, 35.0]
        b1 = [1.0, 0.0, 0.0]
        b2 = [1.0, 1.0, 0.0]
        w = {"f1": 0.6, "f2": 0.4, "f3": 1.0, "f4": 1.0, "b1": 0.3, "b2": 0.2}

        # Step 1: merge f1,f2 (r = 1): weighted average, summed weight
        merged = [(0.6 * a + 0.4 * b) / (0.6 + 0.4) for a, b in zip(f1, f2)]

        # Steps 2-5 longhand per column: shift, optional log, min-max, floor
        def norm(col, use_log):
            shifted = [v + 1.0 for v in col]
            if use_log:
                shifted = [math.log(v + eps) for v in shifted]
            lo, hi = min(shifted), max(shifted)
            return [max((v - lo) / (hi - lo), eps) for v in shifted]

        n_merged = norm(merged, use_log=False)
        n_f3 = norm(f3, use_log=True)
        n_f4 = norm(f4, use_log=False)

        # Steps 6-7: single-feature groups, then cross-group geometric mean
        expected_groups = [
            {
                "ai_resources": n_merged[i],
                "socioeconomic": n_f3[i],
                "digital_infrastructure": n_f4[i],
            }
            for i in range(3)
        ]
        s_groups = [
            (n_merged[i] * n_f3[i] * n_f4[i]) ** (1.0 / 3.0) for i in range(3)
        ]

        # Steps 8-9: binary penalties and the final score
        penalties = [
            (1.0 - 0.3 * (1.0 - b1[i])) * (1.0 - 0.2 * (1.0 - b2[i])) for i in range(3)
        ]
        s_final = [s_groups[i] * penalties[i] for i in range(3)]

        specs = [
            FeatureSpec("f1", "ai_resources", weight=0.6, log_transform="never"),
            FeatureSpec("f2", "ai_resources", weight=0.4, log_transform="never"),
            FeatureSpec("f3", "socioeconomic", log_transform="always"),
            FeatureSpec("f4", "digital_infrastructure", log_transform="never"),
            FeatureSpec("b1", "ai_resources", kind="binary", weight=0.3),
            FeatureSpec("b2", "socioeconomic", kind="binary", weight=0.2),
        ]
        codes = ["aaa", "bbb", "ccc"]
        matrix = FeatureMatrix(
            codes, specs, np.column_stack([f1, f2, f3, f4, b1, b2]).astype(float)
        )
        cfg = IndexConfig(epsilon=eps)
        weights = index_mod.WeightTable(dict(w))
        merged_m, weights = index_mod.merge_correlated(matrix, weights, cfg.merge_corr_threshold)

        got_merged = merged_m.column("f1+f2")
        assert np.allclose(got_merged, merged, atol=1e-12)
        assert weights.weights["f1+f2"] == pytest.approx(1.0, abs=1e-15)

        normalized = index_mod.transform_and_normalize(merged_m, cfg)
        assert np.allclose(normalized.column("f1+f2"), n_merged, atol=1e-12)
        assert np.allclose(normalized.column("f3"), n_f3, atol=1e-12)
        assert np.allclose(normalized.column("f4"), n_f4, atol=1e-12)

        result = index_mod.compute_index(normalized, weights, cfg)
        by_code = result.by_code()
        for i, code in enumerate(codes):
            e = by_code[code]
            for g, v in expected_groups[i].items():
                assert abs(e.subscores[g] - v) < 1e-12
            assert abs(e.binary_penalty - penalties[i]) < 1e-12
            assert abs(e.overall - s_final[i]) < 1e-12
        report("index pipeline oracle", "all Steps 1-9 intermediates to 1e-12")


class TestIndexInvariantSuite:
    def _pipeline(self, values, specs, cfg, weights):
        m = FeatureMatrix([f"l{i:03d}" for i in range(values.shape[0])], specs, values.copy())
        merged, wt = index_mod.merge_correlated(m, index_mod.WeightTable(dict(weights)), cfg.merge_corr_threshold)
        normalized = index_mod.transform_and_normalize(merged, cfg)
        return index_mod.compute_index(normalized, wt, cfg)

    def test_invariants(self):
        rng = np.random.default_rng(13)
        n = 40
        specs = [
            FeatureSpec("a1", "ai_resources", weight=0.5, log_transform="never"),
            FeatureSpec("a2", "ai_resources", weight=0.5, log_transform="always"),
            FeatureSpec("s1", "socioeconomic", log_transform="never"),
            FeatureSpec("d1", "digital_infrastructure", log_transform="never"),
            FeatureSpec("b1", "ai_resources", kind="binary", weight=0.3),
        ]
        weights = {"a1": 0.5, "a2": 0.5, "s1": 1.0, "d1": 1.0, "b1": 0.3}
        values = np.column_stack(
            [
                rng.uniform(0, 50, n),
                rng.exponential(10, n),
                rng.uniform(0, 1, n),
                rng.uniform(5, 80, n),
                (rng.random(n) < 0.5).astype(float),
            ]
        )
        cfg = IndexConfig()
        base = self._pipeline(values, specs, cfg, weights).by_code()

        # monotonicity under 1,000 random single-cell increases
        for _ in range(1000):
            i = int(rng.integers(n))
            j = int(rng.integers(4))  # continuous columns only
            col = values[:, j]
            if col[i] >= col.max():
                continue
            bumped = values.copy()
            bumped[i, j] = col[i] + float(rng.uniform(0.0, col.max() - col[i]))
            new = self._pipeline(bumped, specs, cfg, weights).by_code()
            code = f"l{i:03d}"
            assert new[code].overall >= base[code].overall - 1e-12

        # binary flip multiplies the score by exactly 1/(1 - w_b)
        j_b = 4
        flipped = values.copy()
        off = np.flatnonzero(values[:, j_b] == 0.0)
        i0 = int(off[0])
        flipped[i0, j_b] = 1.0
        new = self._pipeline(flipped, specs, cfg, weights).by_code()
        code = f"l{i0:03d}"
        assert new[code].overall == pytest.approx(
            base[code].overall / (1.0 - 0.3), rel=1e-12
        )

        # weight scaling within a group changes nothing
        scaled = dict(weights, a1=5.0, a2=5.0)
        sc = self._pipeline(values, specs, cfg, scaled).by_code()
        for c in base:
            assert sc[c].overall == pytest.approx(base[c].overall, rel=1e-12)

        # permutation equivariance
        perm = rng.permutation(n)
        m2 = FeatureMatrix([f"l{i:03d}" for i in perm], specs, values[perm].copy())
        merged, wt = index_mod.merge_correlated(m2, index_mod.WeightTable(dict(weights)), cfg.merge_corr_threshold)
        permuted = index_mod.compute_index(index_mod.transform_and_normalize(merged, cfg), wt, cfg).by_code()
        for c in base:
            assert permuted[c].overall == pytest.approx(base[c].overall, abs=1e-15)
            assert permuted[c].rank == base[c].rank

        # imputation idempotence and observed-cell preservation
        holes = values.copy()
        mask = rng.random(values.shape) < 0.2
        mask[:, j_b] = False
        holes[mask] = np.nan
        hm = FeatureMatrix([f"l{i:03d}" for i in range(n)], specs, holes)
        geo = {f"l{i:03d}": (f"C{i % 4}", f"R{i % 2}") for i in range(n)}
        dev = {f"C{k}": 0.5 + 0.1 * k for k in range(4)}
        dense, _ = impute_all(hm, geo, dev)
        again, log2 = impute_all(dense, geo, dev)
        assert np.array_equal(dense.values, again.values)
        assert log2.entries == []
        obs = ~np.isnan(holes)
        assert np.array_equal(dense.values[obs], holes[obs])
        report("index invariant suite", "1000 perturbations + 5 invariants")


class TestPcaVarimaxAcceptance:
    def test_rotation_properties_and_reference_variance(self):
        rows = list(csv.reader((DATA / "pca_extract.csv").read_text().splitlines()))
        X = np.array([[float(v) for v in r] for r in rows[1:]])
        res = stats.pca_varimax(X, n_components=2)

        assert np.allclose(res.rotation.T @ res.rotation, np.eye(2), atol=1e-10)
        comm_pre = np.sum(res.loadings**2, axis=1)
        comm_post = np.sum(res.rotated_loadings**2, axis=1)
        assert np.allclose(comm_pre, comm_post, atol=1e-10)

        h = np.sqrt(comm_pre)
        Ln = res.loadings / h[:, None]
        mine = stats.varimax_criterion(Ln @ res.rotation)
        best = -np.inf
        for theta in np.arange(0.0, math.pi / 2, 1e-4):
            c, s = math.cos(theta), math.sin(theta)
            best = max(best, stats.varimax_criterion(Ln @ np.array([[c, -s], [s, c]])))
        assert mine >= best - 1e-6

        evr = float(res.explained_variance_ratio.sum())
        assert abs(evr - 0.584) < 0.03
        report("pca/varimax", f"evr {evr:.4f}, criterion margin {mine - best:+.2e}")


class TestStepwiseAcceptance:
    def test_selection_and_bic_properties(self):
        hits = 0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            n = 2000
            x1 = rng.normal(0, 1, n)
            y = 3.0 * x1 + rng.normal(0, 1, n)
            cands = {"x1": x1}
            for j in range(5):
                cands[f"decoy{j}"] = rng.normal(0, 1, n)
            res = stats.stepwise_select(y, cands)
            if res.selected_features == ["x1"]:
                hits += 1
            trace = res.bic_trace
            assert all(b < a for a, b in zip(trace, trace[1:]))
            assert trace[-1] <= trace[0]
        assert hits >= 95
        report("stepwise selection", f"{hits}/100 exact recoveries")


class TestEndToEndDeterminism:
    def test_byte_identical_runs_within_budget(self, cli_outputs):
        one, two = cli_outputs["one"], cli_outputs["two"]
        assert one["bundle"].read_bytes() == two["bundle"].read_bytes()
        for name in ("index.csv", "index.json", "imputation_log.csv", "snapshot.json"):
            assert (one["out"] / name).read_bytes() == (two["out"] / name).read_bytes()
        m1 = json.loads((one["out"] / "run_manifest.json").read_text())
        m2 = json.loads((two["out"] / "run_manifest.json").read_text())
        assert m1["outputs"] == m2["outputs"]
        assert m1["build_id"] == m2["build_id"]
        slowest = max(one["elapsed"], two["elapsed"])
        assert slowest < 60.0
        report("end-to-end determinism", f"6003 languages in {slowest:.1f} s")


class TestServiceContract:
    def test_cross_interface_equality_partition_and_atomic_swap(self, cli_outputs, tmp_path):
        out = cli_outputs["one"]["out"]
        snap = ApiSnapshot.load(out / "snapshot.json")
        client = TestClient(create_app(snap))

        # export/API equality
        csv_path = tmp_path / "rankings.csv"
        r = run_cli(
            ["export", "--snapshot", str(out / "snapshot.json"), "--what", "rankings", "--out", str(csv_path)]
        )
        assert r.returncode == 0, r.stderr
        rows = list(csv.DictReader(csv_path.read_text().splitlines()))
        api_items = []
        offset = 0
        while True:
            body = client.get(
                "/v1/languages", params={"limit": 2000, "offset": offset}
            ).json()
            api_items.extend(body["items"])
            offset += 2000
            if offset >= body["total"]:
                break
        assert len(rows) == len(api_items)
        for row, item in zip(rows, api_items):
            assert row["glottocode"] == item["glottocode"]
            assert int(row["rank"]) == item["rank"]
            assert float(row["overall"]) == pytest.approx(item["overall"], rel=1e-11)

        stats_file = tmp_path / "zipf.json"
        r = run_cli(
            ["export", "--snapshot", str(out / "snapshot.json"), "--what", "zipf", "--out", str(stats_file)]
        )
        assert r.returncode == 0
        assert json.loads(stats_file.read_text()) == client.get("/v1/stats/zipf").json()

        # cluster partition-sum over 50 random bbox partitions
        rng = np.random.default_rng(99)
        n_total = len(snap.records)
        for _ in range(50):
            cuts = sorted(rng.uniform(-179.9, 179.9, int(rng.integers(1, 5))))
            edges = [-180.0, *cuts, 180.0]
            total = 0
            for a, b in zip(edges, edges[1:]):
                body = client.get(
                    "/v1/map/clusters",
                    params={"bbox": f"{a},-90,{np.nextafter(b, -200)},90", "zoom": 3},
                ).json()
                total += sum(c["count"] for c in body["clusters"])
            assert total == n_total

        # atomic swap: 10,000 requests against two alternating snapshots
        doc = snap.to_dict()
        doc["build_id"] = ""
        for e in doc["index"]:
            e["overall"] *= 0.5  # exact halving keeps float round-trips exact
        other = ApiSnapshot.from_dict(doc)
        assert other.build_id != snap.build_id

        app = create_app(snap)
        swap_client = TestClient(app)
        expected = {
            snap.build_id: snap.index_result.entries[0].overall,
            other.build_id: other.index_result.entries[0].overall,
        }
        stop = threading.Event()

        def swapper():
            flip = True
            while not stop.is_set():
                swap_snapshot(app, other if flip else snap)
                flip = not flip
                time.sleep(0.0001)  # keep swapping while letting readers run

        t = threading.Thread(target=swapper)
        t.start()
        mixed = 0
        try:
            for _ in range(10_000):
                body = swap_client.get("/v1/languages", params={"limit": 1}).json()
                if body["items"][0]["overall"] != expected[body["build_id"]]:
                    mixed += 1
        finally:
            stop.set()
            t.join()
        assert mixed == 0
        report("service contract", "equality + partition sums + 10000-request swap, 0 mixed")
