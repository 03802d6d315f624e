import json
import math
from datetime import date

import numpy as np
import pytest

from equate import ingest
from equate.errors import (
    DuplicateKey,
    EmptyInput,
    NoBoundaries,
    ParseError,
    SpecMismatch,
)
from equate.model import FeatureSpec

from conftest import make_record

SNAPSHOT_OK = """snapshot_date,language_code,n_models,n_datasets
2024-12-01,eng,120,300
2024-12-01,fra,40,90
"""


class TestParseSnapshot:
    def test_round_trip(self):
        rows = ingest.parse_snapshot(SNAPSHOT_OK)
        assert rows[0] == ingest.SnapshotRow(date(2024, 12, 1), "eng", 120, 300)
        assert len(rows) == 2

    def test_bytes_input(self):
        assert len(ingest.parse_snapshot(SNAPSHOT_OK.encode())) == 2

    def test_bad_header(self):
        with pytest.raises(ParseError) as e:
            ingest.parse_snapshot("a,b,c,d\n2024-12-01,eng,1,2\n")
        assert e.value.line == 1

    def test_bad_date_reports_line(self):
        bad = SNAPSHOT_OK + "2024-13-40,deu,1,2\n"
        with pytest.raises(ParseError) as e:
            ingest.parse_snapshot(bad)
        assert e.value.line == 4

    def test_negative_count(self):
        with pytest.raises(ParseError):
            ingest.parse_snapshot(
                "snapshot_date,language_code,n_models,n_datasets\n2024-12-01,eng,-1,2\n"
            )

    def test_duplicate_key(self):
        dup = SNAPSHOT_OK + "2024-12-01,eng,5,5\n"
        with pytest.raises(DuplicateKey):
            ingest.parse_snapshot(dup)


class TestParseRegistry:
    def test_fixture_registry(self, data_dir):
        records = ingest.parse_registry((data_dir / "registry.csv").read_text())
        assert len(records) == 6003
        codes = {r.glottocode for r in records}
        assert len(codes) == 6003
        assert all(-90 <= r.centroid_lat <= 90 for r in records)

    def test_bad_row_reports_line(self):
        text = "glottocode,name,centroid_lat,centroid_lon,macroarea,family,primary_country,n_speakers\nabcd1234,X,notanumber,0,Eurasia,f,C1,10\n"
        with pytest.raises(ParseError) as e:
            ingest.parse_registry(text)
        assert e.value.line == 2


class TestParseGeoTable:
    def test_admin1_and_country_rows(self):
        text = (
            "country,admin1,feature_id,value,year\n"
            "C1,R1,hdi,0.7,2023\n"
            "C1,,gdp,1000,2023\n"
        )
        rows = ingest.parse_geo_table(text)
        assert rows[0].admin1 == "R1"
        assert rows[1].admin1 is None

    def test_duplicate(self):
        text = (
            "country,admin1,feature_id,value,year\n"
            "C1,R1,hdi,0.7,2023\n"
            "C1,R1,hdi,0.8,2023\n"
        )
        with pytest.raises(DuplicateKey):
            ingest.parse_geo_table(text)


class TestParseManifest:
    def test_ok(self):
        doc = {"model_name": "m1", "release_date": "2023-06-01", "languages": ["eng", "fra"]}
        m = ingest.parse_manifest(json.dumps(doc))
        assert m.release_date == date(2023, 6, 1)
        assert m.languages == ("eng", "fra")

    def test_empty_languages(self):
        doc = {"model_name": "m1", "release_date": "2023-06-01", "languages": []}
        with pytest.raises(ParseError):
            ingest.parse_manifest(json.dumps(doc))

    def test_bad_json(self):
        with pytest.raises(ParseError):
            ingest.parse_manifest("{not json")


def square(x0, y0, x1, y1):
    return {
        "type": "Polygon",
        "coordinates": [[[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]]],
    }


def boundary_doc():
    feats = []
    for country, admin1, box in [
        ("C1", "R1", (0, 0, 10, 10)),
        ("C1", "R2", (10, 0, 20, 10)),
        ("C2", "R1", (0, 10, 10, 20)),
    ]:
        feats.append(
            {
                "type": "Feature",
                "properties": {"country": country, "admin1": admin1},
                "geometry": square(*box),
            }
        )
    return json.dumps({"type": "FeatureCollection", "features": feats})


class TestGeoJoin:
    def test_containment(self):
        b = ingest.parse_boundaries(boundary_doc())
        recs = [make_record("aaaa1111", centroid_lat=5.0, centroid_lon=15.0)]
        assignment, methods = ingest.geo_join(recs, b)
        assert assignment["aaaa1111"] == ("C1", "R2")
        assert methods["aaaa1111"] == "contains"

    def test_nearest_fallback(self):
        b = ingest.parse_boundaries(boundary_doc())
        recs = [make_record("bbbb2222", centroid_lat=-40.0, centroid_lon=2.0)]
        assignment, methods = ingest.geo_join(recs, b)
        assert assignment["bbbb2222"] == ("C1", "R1")
        assert methods["bbbb2222"] == "nearest"

    def test_shared_edge_lexicographic(self):
        b = ingest.parse_boundaries(boundary_doc())
        # (10, 5) lies on the border of (C1,R1) and (C1,R2)
        recs = [make_record("cccc3333", centroid_lat=5.0, centroid_lon=10.0)]
        assignment, _ = ingest.geo_join(recs, b)
        assert assignment["cccc3333"] == ("C1", "R1")

    def test_empty_boundaries(self):
        with pytest.raises(NoBoundaries):
            ingest.geo_join([make_record()], {})

    def test_fixture_coverage(self, data_dir):
        b = ingest.parse_boundaries((data_dir / "boundaries.geojson").read_text())
        recs = ingest.parse_registry((data_dir / "registry.csv").read_text())[:200]
        assignment, methods = ingest.geo_join(recs, b)
        assert set(assignment) == {r.glottocode for r in recs}
        assert set(methods.values()) <= {"contains", "nearest"}


class TestUniversityDistance:
    def test_three_four_five(self):
        d = ingest.nearest_university_distance((0.0, 0.0), [(3.0, 4.0), (30.0, 40.0)])
        assert d == pytest.approx(5.0)

    def test_greatcircle_quarter_meridian(self):
        d = ingest.nearest_university_distance((0.0, 0.0), [(90.0, 0.0)], mode="greatcircle")
        assert d == pytest.approx(math.pi / 2 * ingest.EARTH_RADIUS_KM, rel=1e-9)

    def test_bruteforce_min(self):
        rng = np.random.default_rng(0)
        unis = [(float(a), float(b)) for a, b in rng.uniform(-60, 60, (1000, 2))]
        pt = (12.3, -45.6)
        d = ingest.nearest_university_distance(pt, unis)
        brute = min(math.hypot(pt[0] - a, pt[1] - b) for a, b in unis)
        assert d == pytest.approx(brute, abs=1e-12)

    def test_empty(self):
        with pytest.raises(EmptyInput):
            ingest.nearest_university_distance((0.0, 0.0), [])

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            ingest.nearest_university_distance((0.0, 0.0), [(1.0, 1.0)], mode="manhattan")


class TestBuildFeatureMatrix:
    def _records(self):
        return [
            make_record("aaaa1111", iso639_3="aaa", n_speakers=500),
            make_record("bbbb2222", iso639_3="bbb", n_speakers=9000),
        ]

    def test_snapshot_zero_vs_geo_missing(self):
        recs = self._records()
        snaps = ingest.parse_snapshot(
            "snapshot_date,language_code,n_models,n_datasets\n2024-12-01,aaa,7,3\n"
        )
        geo = ingest.parse_geo_table(
            "country,admin1,feature_id,value,year\nC1,R1,hdi,0.7,2023\n"
        )
        specs = [
            FeatureSpec("n_models", "ai_resources", geo_level="language"),
            FeatureSpec("hdi", "socioeconomic", geo_level="admin1"),
        ]
        assign = {"aaaa1111": ("C1", "R1"), "bbbb2222": ("C1", "R2")}
        m, warnings = ingest.build_feature_matrix(recs, snaps, geo, [], specs, assign)
        assert warnings == []
        # no snapshot row is an observed zero; no geo row is missing
        assert m.column("n_models")[1] == 0.0
        assert m.column("hdi")[0] == 0.7
        assert np.isnan(m.column("hdi")[1])

    def test_latest_snapshot_and_geo_year_win(self):
        recs = self._records()
        snaps = ingest.parse_snapshot(
            "snapshot_date,language_code,n_models,n_datasets\n"
            "2023-12-01,aaa,2,1\n2024-12-01,aaa,7,3\n"
        )
        geo = ingest.parse_geo_table(
            "country,admin1,feature_id,value,year\nC1,R1,hdi,0.5,2020\nC1,R1,hdi,0.7,2023\n"
        )
        specs = [
            FeatureSpec("n_models", "ai_resources", geo_level="language"),
            FeatureSpec("hdi", "socioeconomic", geo_level="admin1"),
        ]
        assign = {"aaaa1111": ("C1", "R1"), "bbbb2222": ("C1", "R1")}
        m, _ = ingest.build_feature_matrix(recs, snaps, geo, [], specs, assign)
        assert m.column("n_models")[0] == 7.0
        assert np.all(m.column("hdi") == 0.7)

    def test_coverage_flag_from_manifest(self):
        recs = self._records()
        mani = [ingest.CoverageManifest("m1", date(2024, 1, 1), ("aaa",))]
        specs = [
            FeatureSpec("covered_by_conversational_model", "ai_resources", kind="binary")
        ]
        m, _ = ingest.build_feature_matrix(recs, [], [], mani, specs)
        assert list(m.column("covered_by_conversational_model")) == [1.0, 0.0]

    def test_record_fields(self):
        recs = self._records()
        specs = [FeatureSpec("n_speakers", "socioeconomic", geo_level="language")]
        m, _ = ingest.build_feature_matrix(recs, [], [], [], specs)
        assert list(m.column("n_speakers")) == [500.0, 9000.0]

    def test_unknown_language_feature_rejected(self):
        with pytest.raises(SpecMismatch):
            ingest.build_feature_matrix(
                self._records(), [], [], [],
                [FeatureSpec("mystery", "ai_resources", geo_level="language")],
            )

    def test_unknown_geo_feature_rejected(self):
        with pytest.raises(SpecMismatch):
            ingest.build_feature_matrix(
                self._records(), [], [], [],
                [FeatureSpec("mystery", "socioeconomic", geo_level="country")],
            )

    def test_unmapped_snapshot_code_warns(self):
        snaps = ingest.parse_snapshot(
            "snapshot_date,language_code,n_models,n_datasets\n2024-12-01,zzz,1,1\n"
        )
        specs = [FeatureSpec("n_models", "ai_resources", geo_level="language")]
        _, warnings = ingest.build_feature_matrix(self._records(), snaps, [], [], specs)
        assert warnings == ["zzz"]


class TestDiffusionSeries:
    def test_year_fraction(self):
        assert ingest.date_to_year_fraction(date(2023, 1, 1)) == pytest.approx(2023.0)
        assert ingest.date_to_year_fraction(date(2023, 7, 2)) == pytest.approx(2023.4986, abs=1e-3)

    def test_cumulative_totals(self):
        recs = [
            make_record("aaaa1111", iso639_3="aaa", n_speakers=100),
            make_record("bbbb2222", iso639_3="bbb", n_speakers=50),
        ]
        mani = [
            ingest.CoverageManifest("m1", date(2021, 1, 1), ("aaa",)),
            ingest.CoverageManifest("m2", date(2023, 1, 1), ("aaa", "bbb")),
        ]
        ts = [date(2020, 6, 1), date(2021, 6, 1), date(2023, 6, 1)]
        series, warnings = ingest.build_diffusion_series(recs, mani, ts)
        assert warnings == []
        assert series.totals == [0.0, 100.0, 150.0]
        assert series.coverage["bbbb2222"] == [0, 0, 1]

    def test_coverage_never_retracts(self):
        recs = [make_record("aaaa1111", iso639_3="aaa", n_speakers=10)]
        mani = [ingest.CoverageManifest("m1", date(2021, 1, 1), ("aaa",))]
        ts = [date(2020, 1, 1), date(2022, 1, 1), date(2024, 1, 1)]
        series, _ = ingest.build_diffusion_series(recs, mani, ts)
        flags = series.coverage["aaaa1111"]
        assert all(a <= b for a, b in zip(flags, flags[1:]))

    def test_unsorted_timestamps_rejected(self):
        with pytest.raises(ValueError):
            ingest.build_diffusion_series([], [], [date(2022, 1, 1), date(2021, 1, 1)])

    def test_unknown_manifest_code_warns(self):
        recs = [make_record("aaaa1111", iso639_3="aaa")]
        mani = [ingest.CoverageManifest("m1", date(2021, 1, 1), ("xxx",))]
        _, warnings = ingest.build_diffusion_series(recs, mani, [date(2022, 1, 1)])
        assert warnings == ["xxx"]


class TestCompareSourceDistributions:
    def test_identical_maps(self):
        counts = {"a": 10.0, "b": 5.0, "c": 1.0}
        res = ingest.compare_source_distributions(counts, dict(counts))
        assert res["spearman_rho"] == pytest.approx(1.0)
        assert res["ks_statistic"] == pytest.approx(0.0, abs=1e-12)

    def test_scaled_maps_identical_proportions(self):
        a = {"a": 10.0, "b": 5.0, "c": 1.0}
        b = {k: 7 * v for k, v in a.items()}
        res = ingest.compare_source_distributions(a, b)
        assert res["spearman_rho"] == pytest.approx(1.0)
        assert res["ks_statistic"] == pytest.approx(0.0, abs=1e-12)

    def test_reversed_ranks(self):
        a = {"a": 1.0, "b": 2.0, "c": 3.0, "d": 4.0}
        b = {"a": 4.0, "b": 3.0, "c": 2.0, "d": 1.0}
        res = ingest.compare_source_distributions(a, b)
        assert res["spearman_rho"] == pytest.approx(-1.0)

    def test_empty_raises(self):
        with pytest.raises(EmptyInput):
            ingest.compare_source_distributions({}, {"a": 1.0})
