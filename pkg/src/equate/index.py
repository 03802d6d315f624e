"""Readiness-index pipeline: survey-rank weighting, correlated-feature
merging, transforms and normalization, geometric aggregation, binary
penalties, and final scoring with ranks and tiers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DuplicateFeature, NonPositiveValue, TooFewPoints
from .model import (
    FEATURE_GROUPS,
    FeatureMatrix,
    FeatureSpec,
    IndexConfig,
    IndexEntry,
    IndexResult,
    rank_and_tier,
)
from .stats import ks_exponential_test


@dataclass(frozen=True)
class MergedFeature:
    merged_id: str
    sources: tuple[str, ...]
    w_merged: float


@dataclass
class WeightTable:
    """Feature weights, normalized to sum 1 within each group."""

    weights: dict[str, float]
    merges: list[MergedFeature] = field(default_factory=list)

    def weight(self, feature_id: str) -> float:
        return self.weights[feature_id]


def weights_from_ranks(rank_table: list[str]) -> dict[str, float]:
    """Inverse-rank (linear Borda) weights: rank r of n gets
    (n - r + 1) / (n(n+1)/2); the weights sum to 1."""
    if not rank_table:
        raise ValueError("rank table is empty")
    if len(set(rank_table)) != len(rank_table):
        raise DuplicateFeature("duplicate feature in rank table")
    n = len(rank_table)
    denom = n * (n + 1) / 2
    return {fid: (n - r) / denom for r, fid in enumerate(rank_table)}


def build_weight_table(group_rank_tables: dict[str, list[str]]) -> WeightTable:
    weights: dict[str, float] = {}
    for group, table in group_rank_tables.items():
        if group not in FEATURE_GROUPS:
            raise ValueError(f"unknown group {group!r}")
        weights.update(weights_from_ranks(table))
    return WeightTable(weights=weights)


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    sa, sb = a.std(), b.std()
    if sa == 0 or sb == 0:
        return 0.0
    return float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))


def merge_correlated(
    matrix: FeatureMatrix, weights: WeightTable, threshold: float
) -> tuple[FeatureMatrix, WeightTable]:
    """Greedily merge the highest-correlated continuous pair within each
    group while any pairwise Pearson correlation exceeds the threshold.

    A merge replaces the pair with their weight-averaged column and sums the
    weights; provenance is recorded. Weights renormalize implicitly because
    aggregation renormalizes within group.
    """
    if not 0 < threshold < 1:
        raise ValueError("threshold must be in (0,1)")
    out = matrix.copy()
    w = dict(weights.weights)
    merges = list(weights.merges)

    for group in FEATURE_GROUPS:
        while True:
            idx = [
                j
                for j, s in enumerate(out.specs)
                if s.group == group and s.kind == "continuous"
            ]
            best = None
            for a_pos in range(len(idx)):
                for b_pos in range(a_pos + 1, len(idx)):
                    ja, jb = idx[a_pos], idx[b_pos]
                    r = _pearson(out.values[:, ja], out.values[:, jb])
                    if r > threshold and (best is None or r > best[0]):
                        best = (r, ja, jb)
            if best is None:
                break
            _, ja, jb = best
            sa, sb = out.specs[ja], out.specs[jb]
            wa = w.get(sa.feature_id, sa.weight)
            wb = w.get(sb.feature_id, sb.weight)
            merged_col = (wa * out.values[:, ja] + wb * out.values[:, jb]) / (wa + wb)
            merged_id = f"{sa.feature_id}+{sb.feature_id}"
            merged_spec = FeatureSpec(
                feature_id=merged_id,
                group=group,
                kind="continuous",
                geo_level=sa.geo_level,
                weight=wa + wb,
                log_transform=sa.log_transform,
            )
            keep = [j for j in range(len(out.specs)) if j not in (ja, jb)]
            new_values = np.column_stack([out.values[:, keep], merged_col])
            new_specs = [out.specs[j] for j in keep] + [merged_spec]
            out = FeatureMatrix(list(out.languages), new_specs, new_values)
            w.pop(sa.feature_id, None)
            w.pop(sb.feature_id, None)
            w[merged_id] = wa + wb
            merges.append(MergedFeature(merged_id, (sa.feature_id, sb.feature_id), wa + wb))
    return out, WeightTable(weights=w, merges=merges)


def transform_and_normalize(matrix: FeatureMatrix, cfg: IndexConfig) -> FeatureMatrix:
    """Shift (+1), optionally log-transform, then min-max normalize each
    continuous column to [epsilon, 1]; constant columns take the configured
    neutral value. Binary columns pass through untouched."""
    out = matrix.copy()
    for j, spec in enumerate(out.specs):
        if spec.kind == "binary":
            continue
        col = out.values[:, j] + 1.0
        apply_log = spec.log_transform == "always"
        if spec.log_transform == "auto":
            try:
                # exponential-looking columns get the log treatment
                apply_log = not ks_exponential_test(col, cfg.ks_alpha).reject
            except (TooFewPoints, NonPositiveValue):
                apply_log = False
        if apply_log:
            col = np.log(col + cfg.epsilon)
        lo, hi = float(col.min()), float(col.max())
        if hi == lo:
            col = np.full_like(col, cfg.constant_feature_value)
        else:
            col = (col - lo) / (hi - lo)
            col = np.maximum(col, cfg.epsilon)
        out.values[:, j] = col
    return out


def group_scores(matrix: FeatureMatrix, weights: WeightTable) -> dict[tuple[str, str], float]:
    """Weighted geometric mean of continuous features per group, with
    weights renormalized to sum 1 within the group."""
    out: dict[tuple[str, str], float] = {}
    for group in FEATURE_GROUPS:
        idx = [
            j for j, s in enumerate(matrix.specs) if s.group == group and s.kind == "continuous"
        ]
        if not idx:
            continue
        raw = np.array([weights.weights.get(matrix.specs[j].feature_id, matrix.specs[j].weight) for j in idx])
        wtil = raw / raw.sum()
        vals = matrix.values[:, idx]
        if np.any(vals <= 0):
            raise NonPositiveValue(f"non-positive normalized value in group {group}")
        logs = np.log(vals) @ wtil
        for i, code in enumerate(matrix.languages):
            out[(code, group)] = float(math.exp(logs[i]))
    return out


def compute_index(
    matrix: FeatureMatrix,
    weights: WeightTable,
    cfg: IndexConfig,
    speakers: dict[str, int] | None = None,
) -> IndexResult:
    """Combine group scores (unweighted geometric mean across groups) with
    multiplicative binary penalties, then rank and tier."""
    gscores = group_scores(matrix, weights)
    groups = sorted({g for (_, g) in gscores})
    n_groups = len(groups)
    if n_groups == 0:
        raise ValueError("no continuous features to score")

    binary_idx = [j for j, s in enumerate(matrix.specs) if s.kind == "binary"]
    scores: dict[str, float] = {}
    subscores: dict[str, dict[str, float]] = {}
    penalties: dict[str, float] = {}
    for i, code in enumerate(matrix.languages):
        subs = {g: gscores[(code, g)] for g in groups}
        s_groups = math.exp(sum(math.log(v) for v in subs.values()) / n_groups)
        penalty = 1.0
        for j in binary_idx:
            spec = matrix.specs[j]
            w_b = weights.weights.get(spec.feature_id, spec.weight)
            x = matrix.values[i, j]
            penalty *= 1.0 - w_b * (1.0 - x)
        scores[code] = s_groups * penalty
        subscores[code] = subs
        penalties[code] = penalty

    rt = rank_and_tier(scores, cfg, speakers)
    entries = [
        IndexEntry(
            glottocode=code,
            overall=scores[code],
            subscores=subscores[code],
            binary_penalty=penalties[code],
            rank=rt[code][0],
            tier=rt[code][1],
        )
        for code in matrix.languages
    ]
    entries.sort(key=lambda e: e.rank)
    return IndexResult(entries=entries)


def run_pipeline(
    matrix: FeatureMatrix,
    cfg: IndexConfig,
    geo_assignment: dict[str, tuple[str, str | None]],
    development_scores: dict[str, float],
    speakers: dict[str, int] | None = None,
    gdp_per_capita: dict[str, float] | None = None,
):
    """Full scoring pipeline: impute, weight, merge, transform, score.

    Returns (IndexResult, ImputationLog, WeightTable, normalized matrix).
    """
    from .impute import impute_all

    dense, log = impute_all(matrix, geo_assignment, development_scores, gdp_per_capita)
    if cfg.group_rank_tables:
        weights = build_weight_table(cfg.group_rank_tables)
    else:
        weights = WeightTable(weights={s.feature_id: s.weight for s in dense.specs})
    merged, weights = merge_correlated(dense, weights, cfg.merge_corr_threshold)
    normalized = transform_and_normalize(merged, cfg)
    result = compute_index(normalized, weights, cfg, speakers)
    return result, log, weights, normalized
