"""Immutable precomputed result snapshots served by the HTTP API.

A snapshot bundles everything the service exposes: the ranked index, the
language registry, classification categories, per-language feature values
with imputation provenance, and serialized fit payloads. The build id is a
content digest, so identical pipeline outputs produce identical ids.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .errors import ParseError
from .model import IndexEntry, IndexResult, LanguageRecord


@dataclass(frozen=True)
class FeatureCell:
    feature_id: str
    value: float
    imputed: bool = False
    method: str | None = None
    donor: str | None = None

    def to_dict(self) -> dict:
        d = {"feature_id": self.feature_id, "value": self.value, "imputed": self.imputed}
        if self.imputed:
            d["method"] = self.method
            d["donor"] = self.donor
        return d


@dataclass
class ApiSnapshot:
    """One published, internally consistent result set.

    Treated as immutable once built; the service swaps whole snapshots
    rather than mutating one in place.
    """

    records: list[LanguageRecord]
    index_result: IndexResult
    categories: dict[str, str] = field(default_factory=dict)
    features: dict[str, list[FeatureCell]] = field(default_factory=dict)
    fits: dict[str, dict] = field(default_factory=dict)
    build_id: str = ""
    built_at: str = ""

    def __post_init__(self):
        codes = {r.glottocode for r in self.records}
        for e in self.index_result.entries:
            if e.glottocode not in codes:
                raise ValueError(f"index entry {e.glottocode} missing from records")
        if not self.build_id:
            self.build_id = self._digest()
        if not self.built_at:
            self.built_at = datetime.now(timezone.utc).isoformat(timespec="seconds")

    def _digest(self) -> str:
        payload = self.to_dict(include_meta=False)
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def record(self, glottocode: str) -> LanguageRecord | None:
        if not hasattr(self, "_by_code"):
            object.__setattr__(self, "_by_code", {r.glottocode: r for r in self.records})
        return self._by_code.get(glottocode)

    def entry(self, glottocode: str) -> IndexEntry | None:
        if not hasattr(self, "_entries"):
            object.__setattr__(self, "_entries", self.index_result.by_code())
        return self._entries.get(glottocode)

    def to_dict(self, include_meta: bool = True) -> dict:
        d = {
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
                for r in self.records
            ],
            "index": [
                {
                    "glottocode": e.glottocode,
                    "overall": e.overall,
                    "subscores": e.subscores,
                    "binary_penalty": e.binary_penalty,
                    "rank": e.rank,
                    "tier": e.tier,
                }
                for e in self.index_result.entries
            ],
            "categories": self.categories,
            "features": {
                code: [c.to_dict() for c in cells] for code, cells in self.features.items()
            },
            "fits": self.fits,
        }
        if include_meta:
            d["build_id"] = self.build_id
            d["built_at"] = self.built_at
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ApiSnapshot":
        try:
            records = [LanguageRecord(**r) for r in d["records"]]
            entries = [
                IndexEntry(
                    glottocode=e["glottocode"],
                    overall=e["overall"],
                    subscores=e["subscores"],
                    binary_penalty=e["binary_penalty"],
                    rank=e["rank"],
                    tier=e["tier"],
                )
                for e in d["index"]
            ]
            features = {
                code: [
                    FeatureCell(
                        feature_id=c["feature_id"],
                        value=c["value"],
                        imputed=c.get("imputed", False),
                        method=c.get("method"),
                        donor=c.get("donor"),
                    )
                    for c in cells
                ]
                for code, cells in d.get("features", {}).items()
            }
            return cls(
                records=records,
                index_result=IndexResult(entries=entries),
                categories=d.get("categories", {}),
                features=features,
                fits=d.get("fits", {}),
                build_id=d.get("build_id", ""),
                built_at=d.get("built_at", ""),
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"bad snapshot document: {exc}") from exc

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, separators=(",", ":"))

    @classmethod
    def load(cls, path) -> "ApiSnapshot":
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(f"bad snapshot JSON: {exc}") from exc
        return cls.from_dict(doc)


def build_snapshot(
    records: list[LanguageRecord],
    index_result: IndexResult,
    categories: dict[str, str] | None = None,
    raw_matrix=None,
    imputation_log=None,
    fits: dict[str, dict] | None = None,
) -> ApiSnapshot:
    """Assemble a snapshot from pipeline outputs.

    Feature cells come from the post-imputation matrix with imputed flags
    and donors looked up in the imputation log.
    """
    features: dict[str, list[FeatureCell]] = {}
    if raw_matrix is not None:
        provenance = {}
        if imputation_log is not None:
            provenance = {
                (e.glottocode, e.feature_id): e for e in imputation_log.entries
            }
        for i, code in enumerate(raw_matrix.languages):
            cells = []
            for j, spec in enumerate(raw_matrix.specs):
                entry = provenance.get((code, spec.feature_id))
                cells.append(
                    FeatureCell(
                        feature_id=spec.feature_id,
                        value=float(raw_matrix.values[i, j]),
                        imputed=entry is not None,
                        method=entry.method if entry else None,
                        donor=entry.donor if entry else None,
                    )
                )
            features[code] = cells
    return ApiSnapshot(
        records=records,
        index_result=index_result,
        categories=categories or {},
        features=features,
        fits=fits or {},
    )
