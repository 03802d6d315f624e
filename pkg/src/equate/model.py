"""Domain types shared by the whole pipeline, plus ranking/tier assignment.

Everything here is immutable after construction and safe to share across
threads; the operations are pure functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInput

MACROAREAS = (
    "Africa",
    "Australia",
    "Eurasia",
    "North America",
    "South America",
    "Papunesia",
)

FEATURE_GROUPS = ("ai_resources", "socioeconomic", "digital_infrastructure")


@dataclass(frozen=True)
class LanguageRecord:
    """One attested language: identity, location, genealogy, demography."""

    glottocode: str
    name: str
    centroid_lat: float
    centroid_lon: float
    macroarea: str
    family: str
    primary_country: str
    n_speakers: int
    iso639_3: str | None = None
    admin1: str | None = None
    vitality: str = "living"
    institutional: bool = False
    is_dead: bool = False


@dataclass(frozen=True)
class FeatureSpec:
    feature_id: str
    group: str
    kind: str = "continuous"  # continuous | binary
    geo_level: str = "language"  # language | admin1 | country
    weight: float = 1.0
    log_transform: str = "auto"  # auto | always | never

    def __post_init__(self):
        if self.group not in FEATURE_GROUPS:
            raise ValueError(f"unknown group {self.group!r}")
        if self.kind not in ("continuous", "binary"):
            raise ValueError(f"unknown kind {self.kind!r}")
        if not self.weight > 0:
            raise ValueError("weight must be > 0")


@dataclass
class FeatureMatrix:
    """Languages x features value table; NaN marks a missing cell."""

    languages: list[str]
    specs: list[FeatureSpec]
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.languages), len(self.specs)):
            raise ValueError(
                f"values shape {self.values.shape} does not match "
                f"{len(self.languages)} languages x {len(self.specs)} specs"
            )

    def column(self, feature_id: str) -> np.ndarray:
        return self.values[:, self.col_index(feature_id)]

    def col_index(self, feature_id: str) -> int:
        for j, spec in enumerate(self.specs):
            if spec.feature_id == feature_id:
                return j
        raise KeyError(feature_id)

    def copy(self) -> "FeatureMatrix":
        return FeatureMatrix(list(self.languages), list(self.specs), self.values.copy())


@dataclass
class IndexConfig:
    merge_corr_threshold: float = 0.85
    epsilon: float = 1e-6
    ks_alpha: float = 0.05
    constant_feature_value: float = 0.5
    group_rank_tables: dict[str, list[str]] = field(default_factory=dict)
    tier_quantiles: list[float] = field(default_factory=lambda: [0.25, 0.5, 0.75])

    def __post_init__(self):
        if not 0 < self.merge_corr_threshold < 1:
            raise ValueError("merge_corr_threshold must be in (0,1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.constant_feature_value <= 1:
            raise ValueError("constant_feature_value must be in (0,1]")
        qs = self.tier_quantiles
        if any(not 0 < q < 1 for q in qs) or any(a >= b for a, b in zip(qs, qs[1:])):
            raise ValueError("tier_quantiles must be strictly increasing within (0,1)")

    @classmethod
    def from_dict(cls, d: dict) -> "IndexConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def to_dict(self) -> dict:
        return {
            "merge_corr_threshold": self.merge_corr_threshold,
            "epsilon": self.epsilon,
            "ks_alpha": self.ks_alpha,
            "constant_feature_value": self.constant_feature_value,
            "group_rank_tables": self.group_rank_tables,
            "tier_quantiles": self.tier_quantiles,
        }


@dataclass(frozen=True)
class IndexEntry:
    glottocode: str
    overall: float
    subscores: dict[str, float]
    binary_penalty: float
    rank: int
    tier: int


@dataclass
class IndexResult:
    entries: list[IndexEntry]

    def by_code(self) -> dict[str, IndexEntry]:
        return {e.glottocode: e for e in self.entries}


@dataclass
class DiffusionSeries:
    """Cumulative covered-speaker totals over an ordered time axis.

    Coverage indicators are monotone nondecreasing per language and the
    stored totals satisfy S_t = sum_L speakers_L * covered(L, t) exactly.
    """

    timestamps: list[float]
    coverage: dict[str, list[int]]  # glottocode -> 0/1 per timestamp
    totals: list[float]

    def __post_init__(self):
        n = len(self.timestamps)
        if len(self.totals) != n:
            raise ValueError("totals length must match timestamps")
        for code, flags in self.coverage.items():
            if len(flags) != n:
                raise ValueError(f"coverage length mismatch for {code}")
            if any(a > b for a, b in zip(flags, flags[1:])):
                raise ValueError(f"coverage for {code} is not monotone")


# ---------------------------------------------------------------------------
# Fit result family


@dataclass
class PowerLawFit:
    alpha: float
    log_c: float
    slope_stderr: float
    r2: float
    residual_sigma: float

    @property
    def supported(self) -> bool:
        """Negative and significant slope at the 5% level (two-sided t)."""
        if self.slope_stderr == 0:
            return self.alpha > 0
        return self.alpha > 0 and abs(self.alpha / self.slope_stderr) > 1.96

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "log_c": self.log_c,
            "slope_stderr": self.slope_stderr,
            "r2": self.r2,
            "residual_sigma": self.residual_sigma,
        }


@dataclass
class LogLogOlsFit:
    beta0: float
    beta1: float
    r2: float
    residuals: np.ndarray
    studentized_residuals: np.ndarray
    p_values: np.ndarray  # one-sided lower-tail per point

    def to_dict(self) -> dict:
        return {
            "beta0": self.beta0,
            "beta1": self.beta1,
            "r2": self.r2,
            "residuals": list(map(float, self.residuals)),
            "studentized_residuals": list(map(float, self.studentized_residuals)),
            "p_values": list(map(float, self.p_values)),
        }


@dataclass
class GompertzFit:
    A: float
    B: float
    C: float
    r2: float
    iterations: int
    converged: bool

    def predict(self, t):
        t = np.asarray(t, dtype=float)
        return self.A * np.exp(-self.B * np.exp(-self.C * t))

    def to_dict(self) -> dict:
        return {
            "A": self.A,
            "B": self.B,
            "C": self.C,
            "r2": self.r2,
            "iterations": self.iterations,
            "converged": self.converged,
        }


@dataclass
class PcaResult:
    loadings: np.ndarray
    rotated_loadings: np.ndarray
    explained_variance_ratio: np.ndarray
    rotation: np.ndarray

    def to_dict(self) -> dict:
        return {
            "loadings": self.loadings.tolist(),
            "rotated_loadings": self.rotated_loadings.tolist(),
            "explained_variance_ratio": list(map(float, self.explained_variance_ratio)),
        }


@dataclass
class StepwiseResult:
    selected_features: list[str]
    coefficients: dict[str, float]
    stderrs: dict[str, float]
    bic_trace: list[float]
    skipped_singular: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "selected_features": self.selected_features,
            "coefficients": self.coefficients,
            "stderrs": self.stderrs,
            "bic_trace": self.bic_trace,
        }


@dataclass
class ExpTestResult:
    lambda_hat: float
    ks_statistic: float
    reject: bool

    def to_dict(self) -> dict:
        return {
            "lambda_hat": self.lambda_hat,
            "ks_statistic": self.ks_statistic,
            "reject": self.reject,
        }


# ---------------------------------------------------------------------------
# Validation


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def validate_dataset(records: list[LanguageRecord], matrix: FeatureMatrix | None = None) -> ValidationReport:
    """Check dataset-level invariants; accepted iff the report has no errors."""
    report = ValidationReport()
    seen = set()
    for rec in records:
        if rec.glottocode in seen:
            report.errors.append(f"duplicate glottocode {rec.glottocode}")
        seen.add(rec.glottocode)
        if not -90 <= rec.centroid_lat <= 90:
            report.errors.append(f"{rec.glottocode}: centroid_lat {rec.centroid_lat} out of range")
        if not -180 <= rec.centroid_lon <= 180:
            report.errors.append(f"{rec.glottocode}: centroid_lon {rec.centroid_lon} out of range")
        if rec.n_speakers < 0:
            report.errors.append(f"{rec.glottocode}: negative n_speakers")
        if rec.macroarea not in MACROAREAS:
            report.errors.append(f"{rec.glottocode}: unknown macroarea {rec.macroarea!r}")
    if matrix is not None:
        if len(matrix.languages) != matrix.values.shape[0] or len(matrix.specs) != matrix.values.shape[1]:
            report.errors.append("feature matrix dimension mismatch")
        matrix_codes = set(matrix.languages)
        if matrix_codes - seen:
            report.errors.append(
                f"matrix rows for unknown languages: {sorted(matrix_codes - seen)[:5]}"
            )
        for j, spec in enumerate(matrix.specs):
            if spec.kind == "binary":
                col = matrix.values[:, j]
                bad = col[~np.isnan(col)]
                if bad.size and not np.all(np.isin(bad, (0.0, 1.0))):
                    report.errors.append(f"binary feature {spec.feature_id} has non-0/1 values")
    return report


# ---------------------------------------------------------------------------
# Ranking and tiers


def rank_and_tier(
    scores: dict[str, float],
    cfg: IndexConfig,
    speakers: dict[str, int] | None = None,
) -> dict[str, tuple[int, int]]:
    """Assign dense ranks (1 = best) and quantile tiers (1 = top tier).

    Ties break by larger speaker count, then lexicographic glottocode; tier
    membership depends only on score order, so any strictly increasing
    transform of the scores leaves the output unchanged.
    """
    if not scores:
        raise EmptyInput("no scores to rank")
    for code, s in scores.items():
        if not math.isfinite(s):
            raise ValueError(f"non-finite score for {code}")
    speakers = speakers or {}
    order = sorted(scores, key=lambda c: (-scores[c], -speakers.get(c, 0), c))
    n = len(order)
    values = np.array([scores[c] for c in order])
    qs = cfg.tier_quantiles
    out = {}
    for i, code in enumerate(order):
        # empirical CDF position: fraction of languages at or below this score
        frac = float(np.sum(values <= scores[code])) / n
        tier = 1 + sum(1 for q in qs if frac <= q)
        out[code] = (i + 1, tier)
    return out
