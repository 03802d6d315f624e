"""Two-level geographic imputation of missing feature values.

Missing admin1-level cells are filled with the mean of observed sibling
regions in the same country; countries with no observed region copy the
value of the observed country with the closest development score. Donor
choice is deliberately non-geographic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NoDonor
from .model import FeatureMatrix


@dataclass(frozen=True)
class ImputationEntry:
    glottocode: str
    feature_id: str
    method: str  # subnational_mean | similar_country | binary_absent | global_mean
    donor: str
    value: float


@dataclass
class ImputationLog:
    entries: list[ImputationEntry] = field(default_factory=list)

    def extend(self, other: "ImputationLog"):
        self.entries.extend(other.entries)

    def to_rows(self):
        return [
            (e.glottocode, e.feature_id, e.method, e.donor, e.value) for e in self.entries
        ]

    def imputed_cells(self) -> set[tuple[str, str]]:
        return {(e.glottocode, e.feature_id) for e in self.entries}


def impute_subnational(
    matrix: FeatureMatrix,
    feature_id: str,
    geo_assignment: dict[str, tuple[str, str | None]],
) -> tuple[FeatureMatrix, ImputationLog]:
    """Fill missing admin1-level values with the mean of observed sibling
    regions in the same country; fully-missing countries are left for the
    national pass."""
    out = matrix.copy()
    log = ImputationLog()
    j = out.col_index(feature_id)
    col = out.values[:, j]

    by_country: dict[str, list[int]] = {}
    for i, code in enumerate(out.languages):
        country, _ = geo_assignment.get(code, (None, None))
        if country is not None:
            by_country.setdefault(country, []).append(i)

    for country, rows in by_country.items():
        # one observation per distinct region; languages sharing a region
        # share its value, so dedupe by admin1 before averaging
        region_vals: dict[str | None, float] = {}
        for i in rows:
            if not np.isnan(col[i]):
                _, admin1 = geo_assignment[out.languages[i]]
                region_vals[admin1] = col[i]
        if not region_vals:
            continue
        mean = float(np.mean(list(region_vals.values())))
        for i in rows:
            if np.isnan(col[i]):
                col[i] = mean
                log.entries.append(
                    ImputationEntry(out.languages[i], feature_id, "subnational_mean", country, mean)
                )
    return out, log


def impute_national(
    matrix: FeatureMatrix,
    feature_id: str,
    development_scores: dict[str, float],
    geo_assignment: dict[str, tuple[str, str | None]],
    gdp_per_capita: dict[str, float] | None = None,
) -> tuple[FeatureMatrix, ImputationLog]:
    """Copy a fully-missing country's value from the observed country with
    the nearest development score (ties: nearest GDP per capita, then ISO
    code). Raises NoDonor when no country observes the feature."""
    out = matrix.copy()
    log = ImputationLog()
    j = out.col_index(feature_id)
    col = out.values[:, j]
    gdp = gdp_per_capita or {}

    country_rows: dict[str, list[int]] = {}
    for i, code in enumerate(out.languages):
        country, _ = geo_assignment.get(code, (None, None))
        if country is not None:
            country_rows.setdefault(country, []).append(i)

    observed: dict[str, float] = {}
    missing_countries = []
    for country, rows in country_rows.items():
        vals = [col[i] for i in rows if not np.isnan(col[i])]
        if vals:
            observed[country] = float(np.mean(vals))
        elif any(np.isnan(col[i]) for i in rows):
            missing_countries.append(country)

    if missing_countries and not observed:
        raise NoDonor(f"no country observes feature {feature_id}")

    inf = float("inf")
    for country in missing_countries:
        dev = development_scores.get(country)

        def donor_key(c):
            d_dev = abs(development_scores.get(c, inf) - dev) if dev is not None else inf
            d_gdp = abs(gdp[c] - gdp[country]) if country in gdp and c in gdp else inf
            return (d_dev, d_gdp, c)

        donor = min(observed, key=donor_key)
        value = observed[donor]
        for i in country_rows[country]:
            if np.isnan(col[i]):
                col[i] = value
                log.entries.append(
                    ImputationEntry(out.languages[i], feature_id, "similar_country", donor, value)
                )
    return out, log


def impute_all(
    matrix: FeatureMatrix,
    geo_assignment: dict[str, tuple[str, str | None]],
    development_scores: dict[str, float],
    gdp_per_capita: dict[str, float] | None = None,
) -> tuple[FeatureMatrix, ImputationLog]:
    """Run the subnational pass then the national pass per feature; missing
    binary cells become 0 (conservative absence). Output has no missing
    cells; observed cells are never modified."""
    out = matrix.copy()
    log = ImputationLog()
    for spec in out.specs:
        j = out.col_index(spec.feature_id)
        if spec.kind == "binary":
            col = out.values[:, j]
            for i in np.flatnonzero(np.isnan(col)):
                col[i] = 0.0
                log.entries.append(
                    ImputationEntry(out.languages[i], spec.feature_id, "binary_absent", "", 0.0)
                )
            continue
        if spec.geo_level == "admin1":
            out, sub_log = impute_subnational(out, spec.feature_id, geo_assignment)
            log.extend(sub_log)
        if spec.geo_level in ("admin1", "country"):
            out, nat_log = impute_national(
                out, spec.feature_id, development_scores, geo_assignment, gdp_per_capita
            )
            log.extend(nat_log)
        col = out.values[:, j]
        if np.any(np.isnan(col)):
            # cells outside the geographic rules (language-level gaps or
            # languages missing from the geo assignment) take the global
            # observed mean so the matrix leaves here dense
            mean = float(np.nanmean(col))
            for i in np.flatnonzero(np.isnan(col)):
                col[i] = mean
                log.entries.append(
                    ImputationEntry(out.languages[i], spec.feature_id, "global_mean", "", mean)
                )
    return out, log
