"""Per-keyword alignment feedback and period summary reports.

In-time feedback compares a censorship result's keyword presence scores
against the co-preference panel, one entry per co-preference keyword,
classified by the sign of weight times score. Summary reports aggregate
feedback records over a period: per-keyword means, risk frequencies, and
time-bucketed risk trends. All aggregation is integer-exact until the
final division, so reports are invariant under record permutation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import ValidationError
from .guidelines import CommonGuidelineSet, WrongRole
from .preference import WEIGHT_LABELS, PreferencePanel, Role
from .provider import (
    PRESENCE_LABELS,
    AppropriatenessFinding,
    CensorshipResult,
    RiskFinding,
)
from .rounding import round_half_away

DEFAULT_BUCKET_MS = 86_400_000  # one day

SCALE_RANGE = (-2, -1, 0, 1, 2)


class Alignment(enum.Enum):
    ALIGNED = "aligned"
    MISALIGNED = "misaligned"
    INFORMATIONAL = "informational"


def classify(pref: int, score: int) -> Alignment:
    """Sign-product match rule; total over {-2..2} x {-2..2}."""
    if pref not in SCALE_RANGE:
        raise ValidationError(f"preference weight {pref!r} is outside -2..2")
    if score not in SCALE_RANGE:
        raise ValidationError(f"presence score {score!r} is outside -2..2")
    product = pref * score
    if product > 0 or (pref == 0 and score == 0):
        return Alignment.ALIGNED
    if product < 0:
        return Alignment.MISALIGNED
    return Alignment.INFORMATIONAL


def label_of(value: int, scale: str) -> str:
    if value not in SCALE_RANGE:
        raise ValidationError(f"value {value!r} is outside -2..2")
    if scale == "preference":
        return WEIGHT_LABELS[value]
    if scale == "presence":
        return PRESENCE_LABELS[value]
    raise ValidationError(f"unknown scale {scale!r}; expected 'preference' or 'presence'")


@dataclass(frozen=True)
class AlignmentEntry:
    keyword: str
    pref_weight: int
    video_score: int
    classification: Alignment

    def to_dict(self) -> dict:
        return {
            "keyword": self.keyword,
            "pref_weight": self.pref_weight,
            "video_score": self.video_score,
            "classification": self.classification.value,
        }

    @staticmethod
    def from_dict(doc: Mapping) -> "AlignmentEntry":
        return AlignmentEntry(
            keyword=doc["keyword"],
            pref_weight=int(doc["pref_weight"]),
            video_score=int(doc["video_score"]),
            classification=Alignment(doc["classification"]),
        )


@dataclass(frozen=True)
class CommonFeedback:
    """The guideline-driven half of a result, shared with the feedback view."""

    age_band: str
    risks: tuple[RiskFinding, ...]
    appropriateness: tuple[AppropriatenessFinding, ...]
    summary: str

    def to_dict(self) -> dict:
        return {
            "age_band": self.age_band,
            "risks": [r.to_dict() for r in self.risks],
            "appropriateness": [a.to_dict() for a in self.appropriateness],
            "summary": self.summary,
        }

    @staticmethod
    def from_dict(doc: Mapping) -> "CommonFeedback":
        return CommonFeedback(
            age_band=doc["age_band"],
            risks=tuple(RiskFinding(r["category"], r["level"], r.get("rationale", "")) for r in doc["risks"]),
            appropriateness=tuple(
                AppropriatenessFinding(a["category"], a["value"], a.get("rationale", ""))
                for a in doc["appropriateness"]
            ),
            summary=doc.get("summary", ""),
        )


@dataclass(frozen=True)
class InTimeFeedback:
    video_id: str
    entries: tuple[AlignmentEntry, ...]
    common: CommonFeedback
    produced_at: int

    def to_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "entries": [e.to_dict() for e in self.entries],
            "common": self.common.to_dict(),
            "produced_at": self.produced_at,
        }

    @staticmethod
    def from_dict(doc: Mapping) -> "InTimeFeedback":
        return InTimeFeedback(
            video_id=doc["video_id"],
            entries=tuple(AlignmentEntry.from_dict(e) for e in doc["entries"]),
            common=CommonFeedback.from_dict(doc["common"]),
            produced_at=int(doc["produced_at"]),
        )


def build_in_time(co_pref: PreferencePanel, result: CensorshipResult) -> InTimeFeedback:
    """One entry per co-preference keyword; absent keywords score -2."""
    if co_pref.role is not Role.CO:
        raise WrongRole("in-time feedback is computed against the co-preference panel")
    entries = []
    for kw in sorted(co_pref.entries):
        weight = co_pref.entries[kw]
        score = result.features.scores.get(kw, -2)
        entries.append(AlignmentEntry(kw, weight, score, classify(weight, score)))
    return InTimeFeedback(
        video_id=result.video_id,
        entries=tuple(entries),
        common=CommonFeedback(
            age_band=result.age_band,
            risks=result.risks,
            appropriateness=result.appropriateness,
            summary=result.summary,
        ),
        produced_at=result.produced_at,
    )


@dataclass(frozen=True)
class Period:
    start: int
    end: int
    bucket: int = DEFAULT_BUCKET_MS

    def __post_init__(self):
        if self.start >= self.end:
            raise ValidationError("period start must precede its end")
        if self.bucket <= 0:
            raise ValidationError("bucket duration must be positive")

    @property
    def bucket_count(self) -> int:
        return (self.end - self.start + self.bucket - 1) // self.bucket

    def bucket_index(self, at: int) -> int:
        return (at - self.start) // self.bucket

    def to_dict(self) -> dict:
        return {"from": self.start, "to": self.end, "bucket": self.bucket}


@dataclass(frozen=True)
class KeywordSummary:
    mean_score: float
    pref_weight: int
    display_label: str
    classification: Alignment

    def to_dict(self) -> dict:
        return {
            "mean_score": self.mean_score,
            "pref_weight": self.pref_weight,
            "display_label": self.display_label,
            "classification": self.classification.value,
        }


@dataclass(frozen=True)
class SummaryReport:
    period: Period
    per_keyword: Mapping[str, KeywordSummary]
    risk_frequency: Mapping[str, int]
    risk_trend: Mapping[str, tuple[int, ...]]
    video_count: int

    def to_dict(self) -> dict:
        return {
            "period": self.period.to_dict(),
            "per_keyword": {kw: self.per_keyword[kw].to_dict() for kw in sorted(self.per_keyword)},
            "risk_frequency": {c: self.risk_frequency[c] for c in sorted(self.risk_frequency)},
            "risk_trend": {c: list(self.risk_trend[c]) for c in sorted(self.risk_trend)},
            "video_count": self.video_count,
        }


def _lowest_level(category: str, guideline_set: CommonGuidelineSet | None) -> str:
    if guideline_set is not None:
        cat = guideline_set.risk_by_name().get(category)
        if cat is not None:
            return cat.levels[0]
    return "none"


def aggregate(
    records: Sequence[InTimeFeedback],
    period: Period,
    guideline_set: CommonGuidelineSet | None = None,
) -> SummaryReport:
    """Fold feedback records with produced_at in [start, end) into a report.

    Per keyword the mean is integer-sum / count, so permuting the records
    cannot change any output bit. When the co-preference changed between
    records, the weight of the newest record mentioning the keyword wins
    (ties broken by video_id).
    """
    included = sorted(
        (r for r in records if period.start <= r.produced_at < period.end),
        key=lambda r: (r.produced_at, r.video_id),
    )

    score_sums: dict[str, int] = {}
    score_counts: dict[str, int] = {}
    latest_weight: dict[str, int] = {}
    for record in included:
        for entry in record.entries:
            score_sums[entry.keyword] = score_sums.get(entry.keyword, 0) + entry.video_score
            score_counts[entry.keyword] = score_counts.get(entry.keyword, 0) + 1
            latest_weight[entry.keyword] = entry.pref_weight

    per_keyword = {}
    for kw in sorted(score_sums):
        mean = score_sums[kw] / score_counts[kw]
        rounded = round_half_away(mean)
        weight = latest_weight[kw]
        per_keyword[kw] = KeywordSummary(
            mean_score=mean,
            pref_weight=weight,
            display_label=label_of(rounded, "presence"),
            classification=classify(weight, rounded),
        )

    risk_frequency: dict[str, int] = {}
    risk_trend: dict[str, list[int]] = {}
    buckets = period.bucket_count
    for record in included:
        flagged = set()
        for finding in record.common.risks:
            if finding.category in flagged:
                continue
            risk_frequency.setdefault(finding.category, 0)
            risk_trend.setdefault(finding.category, [0] * buckets)
            if finding.level != _lowest_level(finding.category, guideline_set):
                flagged.add(finding.category)
                risk_frequency[finding.category] += 1
                risk_trend[finding.category][period.bucket_index(record.produced_at)] += 1

    return SummaryReport(
        period=period,
        per_keyword=per_keyword,
        risk_frequency=risk_frequency,
        risk_trend={c: tuple(series) for c, series in risk_trend.items()},
        video_count=len(included),
    )
