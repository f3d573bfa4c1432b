"""Analysis providers: deterministic lexicon mock and a generic live adapter.

A provider turns transcript chunks plus rendered guideline context into
VideoFeatures (keyword presence scores) and a CensorshipResult (risk,
appropriateness, age band, rationales). The mock provider is a pure
function of (chunks, lexicon) so fixtures and golden outputs stay
byte-stable; the live adapter speaks a generic chat-completion HTTP
interface and schema-validates every response.
"""

from __future__ import annotations

import enum
import json
import os
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .errors import CoviewError, ValidationError
from .guidelines import CommonGuidelineSet
from .ingest import Chunk
from .preference import normalize_keyword
from .rounding import clamp, round_ratio_half_away

PROVIDER_TOKEN_ENV = "YC_PROVIDER_TOKEN"

PRESENCE_LABELS = {
    -2: "very low",
    -1: "low",
    0: "medium",
    1: "high",
    2: "very high",
}

# Lexicon-hit token fraction -> presence score. Lower bounds, inclusive.
MOCK_PRESENCE_THRESHOLDS = ((0.08, 2), (0.03, 1), (0.01, 0))


class NoChunks(ValidationError):
    pass


class ProviderUnavailable(CoviewError):
    pass


class MalformedProviderOutput(CoviewError):
    pass


class GuidelineViolation(ValidationError):
    pass


class ProviderKind(enum.Enum):
    MOCK = "mock"
    LIVE = "live"


@dataclass(frozen=True)
class ProviderConfig:
    kind: ProviderKind = ProviderKind.MOCK
    endpoint: str | None = None
    model_name: str | None = None
    context_budget: int = 8000
    request_timeout: int = 30000  # milliseconds
    lexicon_path: str | None = None
    max_in_flight: int = 4

    def __post_init__(self):
        if self.kind is ProviderKind.LIVE and (not self.endpoint or not self.model_name):
            raise ValidationError("live provider requires endpoint and model_name")
        if self.kind is ProviderKind.MOCK and not self.lexicon_path:
            raise ValidationError("mock provider requires lexicon_path")

    @property
    def provider_id(self) -> str:
        return "mock" if self.kind is ProviderKind.MOCK else f"live:{self.model_name}"


@dataclass(frozen=True)
class VideoFeatures:
    scores: Mapping[str, int]  # keyword -> presence in -2..2
    coverage_ms: int = 0

    def to_dict(self) -> dict:
        return {
            "scores": {kw: self.scores[kw] for kw in sorted(self.scores)},
            "coverage_ms": self.coverage_ms,
        }

    @staticmethod
    def from_dict(doc: Mapping) -> "VideoFeatures":
        return VideoFeatures(scores=dict(doc.get("scores", {})), coverage_ms=int(doc.get("coverage_ms", 0)))


@dataclass(frozen=True)
class RiskFinding:
    category: str
    level: str
    rationale: str = ""

    def to_dict(self) -> dict:
        return {"category": self.category, "level": self.level, "rationale": self.rationale}


@dataclass(frozen=True)
class AppropriatenessFinding:
    category: str
    value: int
    rationale: str = ""

    def to_dict(self) -> dict:
        return {"category": self.category, "value": self.value, "rationale": self.rationale}


@dataclass(frozen=True)
class CensorshipResult:
    video_id: str
    age_band: str
    risks: tuple[RiskFinding, ...]
    appropriateness: tuple[AppropriatenessFinding, ...]
    features: VideoFeatures
    summary: str
    produced_at: int = 0
    provider_id: str = "mock"

    def to_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "age_band": self.age_band,
            "risks": [r.to_dict() for r in self.risks],
            "appropriateness": [a.to_dict() for a in self.appropriateness],
            "features": self.features.to_dict(),
            "summary": self.summary,
            "produced_at": self.produced_at,
            "provider_id": self.provider_id,
        }

    @staticmethod
    def from_dict(doc: Mapping) -> "CensorshipResult":
        return CensorshipResult(
            video_id=doc["video_id"],
            age_band=doc["age_band"],
            risks=tuple(RiskFinding(r["category"], r["level"], r.get("rationale", "")) for r in doc["risks"]),
            appropriateness=tuple(
                AppropriatenessFinding(a["category"], a["value"], a.get("rationale", ""))
                for a in doc["appropriateness"]
            ),
            features=VideoFeatures.from_dict(doc["features"]),
            summary=doc.get("summary", ""),
            produced_at=int(doc.get("produced_at", 0)),
            provider_id=doc.get("provider_id", "mock"),
        )


# --- chunk combination -----------------------------------------------------


def combine_chunks(partials: Sequence[tuple[VideoFeatures, int]]) -> VideoFeatures:
    """Duration-weighted merge of per-chunk features.

    A keyword absent from a chunk counts as presence -2 (the semantic
    floor) for that chunk's duration. Integer arithmetic throughout, so
    the result is invariant under permutation of the partials.
    """
    if not partials:
        raise NoChunks("no partial features to combine")
    for _, duration in partials:
        if duration <= 0:
            raise ValidationError("chunk durations must be positive")
    keywords = set()
    for features, _ in partials:
        keywords.update(features.scores)
    total = sum(duration for _, duration in partials)
    combined = {}
    for kw in sorted(keywords):
        weighted = sum(features.scores.get(kw, -2) * duration for features, duration in partials)
        combined[kw] = clamp(round_ratio_half_away(weighted, total), -2, 2)
    return VideoFeatures(scores=combined, coverage_ms=total)


def _max_level_risks(partial_risks: Sequence[Sequence[RiskFinding]], guideline_set: CommonGuidelineSet) -> tuple[RiskFinding, ...]:
    """Per category, keep the finding at the highest level seen across chunks."""
    by_name = guideline_set.risk_by_name()
    best: dict[str, RiskFinding] = {}
    for findings in partial_risks:
        for finding in findings:
            cat = by_name.get(finding.category)
            if cat is None:
                raise GuidelineViolation(f"unknown risk category {finding.category!r}")
            current = best.get(finding.category)
            if current is None or cat.levels.index(finding.level) > cat.levels.index(current.level):
                best[finding.category] = finding
    return tuple(best[name] for name in sorted(best))


# --- mock provider ---------------------------------------------------------

_TOKEN_RE = re.compile(r"[a-z0-9']+")


def load_lexicon(path: str | Path) -> dict[str, tuple[str, ...]]:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"lexicon: not found: {p}")
    try:
        raw = json.loads(p.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"lexicon: not valid JSON: {exc}") from None
    if not isinstance(raw, Mapping):
        raise ValidationError("lexicon: must be a JSON object of keyword -> terms")
    lexicon = {}
    for kw, terms in raw.items():
        if not isinstance(terms, list) or not all(isinstance(t, str) for t in terms):
            raise ValidationError(f"lexicon: terms for {kw!r} must be an array of strings")
        lexicon[normalize_keyword(kw)] = tuple(t.lower() for t in terms)
    return lexicon


def presence_from_fraction(r: float) -> int:
    """Map a lexicon-hit token fraction to a presence score."""
    if r == 0:
        return -2
    for bound, score in MOCK_PRESENCE_THRESHOLDS:
        if r >= bound:
            return score
    return -1


def mock_chunk_features(transcript: str, lexicon: Mapping[str, Sequence[str]]) -> dict[str, int]:
    tokens = _TOKEN_RE.findall(transcript.lower())
    total = len(tokens)
    scores = {}
    for kw in sorted(lexicon):
        terms = set(lexicon[kw])
        hits = sum(1 for t in tokens if t in terms)
        r = hits / total if total else 0.0
        scores[kw] = presence_from_fraction(r)
    return scores


def _mock_features(chunks: Sequence[Chunk], cfg: ProviderConfig) -> VideoFeatures:
    lexicon = load_lexicon(cfg.lexicon_path)
    partials = [
        (VideoFeatures(scores=mock_chunk_features(c.transcript, lexicon), coverage_ms=c.duration_ms), max(1, c.duration_ms))
        for c in chunks
    ]
    return combine_chunks(partials)


def mock_risk_level(presence: int, levels: Sequence[str]) -> str:
    if presence >= 2:
        return levels[-1]
    if presence == 1:
        return levels[max(0, len(levels) - 2)]
    return levels[0]


def _mock_censor(
    chunks: Sequence[Chunk],
    cfg: ProviderConfig,
    guideline_set: CommonGuidelineSet,
    video_id: str,
    at: int,
) -> CensorshipResult:
    features = _mock_features(chunks, cfg)

    risks = []
    highest = 0
    for risk in guideline_set.risks:
        presence = features.scores.get(normalize_keyword(risk.name), -2)
        level = mock_risk_level(presence, risk.levels)
        ordinal = risk.levels.index(level)
        highest = max(highest, ordinal)
        risks.append(
            RiskFinding(
                category=risk.name,
                level=level,
                rationale=f"transcript presence for '{risk.name}' is {PRESENCE_LABELS[presence]}",
            )
        )

    bands = guideline_set.age_bands
    age_band = bands[min(highest, len(bands) - 1)].name

    appropriateness = []
    for cat in guideline_set.appropriateness:
        presence = features.scores.get(normalize_keyword(cat.name), -2)
        sorted_values = sorted(cat.scale.values())
        value = sorted_values[clamp(presence + 1, 0, len(sorted_values) - 1)]
        appropriateness.append(
            AppropriatenessFinding(
                category=cat.name,
                value=value,
                rationale=f"transcript presence for '{cat.name}' is {PRESENCE_LABELS[presence]}",
            )
        )

    notable = [f"{kw} ({PRESENCE_LABELS[score]})" for kw, score in sorted(features.scores.items()) if score >= 1]
    risk_cats = guideline_set.risk_by_name()
    flagged = [f"{r.category} {r.level}" for r in risks if risk_cats[r.category].levels.index(r.level) > 0]
    summary = (
        f"Analyzed {features.coverage_ms} ms of content. "
        f"Notable keywords: {', '.join(notable) if notable else 'none'}. "
        f"Flagged risks: {', '.join(flagged) if flagged else 'none'}. "
        f"Suggested age band: {age_band}."
    )

    return CensorshipResult(
        video_id=video_id,
        age_band=age_band,
        risks=tuple(risks),
        appropriateness=tuple(appropriateness),
        features=features,
        summary=summary,
        produced_at=at,
        provider_id=cfg.provider_id,
    )


# --- live adapter ----------------------------------------------------------

LIVE_RETRIES = 2  # retries after the first attempt

_EXTRACTION_INSTRUCTIONS = (
    "You analyze a video from its transcript excerpts and guideline context. "
    "Respond with only a JSON object of the form "
    '{"keywords": [{"name": str, "score": int in -2..2}], '
    '"risks": [{"category": str, "level": str, "rationale": str}], '
    '"age_band": str, '
    '"appropriateness": [{"category": str, "value": int, "rationale": str}], '
    '"summary": str}. '
    "Use only the category names, levels, and age bands defined in the guidelines."
)

_live_slots = threading.BoundedSemaphore(16)
_live_slots_size = 16


def _configure_slots(cap: int) -> None:
    global _live_slots, _live_slots_size
    if cap != _live_slots_size:
        _live_slots = threading.BoundedSemaphore(cap)
        _live_slots_size = cap


def validate_provider_payload(payload) -> dict:
    """Structural validation of the live extraction schema."""
    if not isinstance(payload, Mapping):
        raise MalformedProviderOutput("payload is not an object")
    for key in ("keywords", "risks", "age_band", "appropriateness", "summary"):
        if key not in payload:
            raise MalformedProviderOutput(f"missing required field {key!r}")
    if not isinstance(payload["age_band"], str) or not payload["age_band"]:
        raise MalformedProviderOutput("age_band must be a non-empty string")
    if not isinstance(payload["summary"], str):
        raise MalformedProviderOutput("summary must be a string")
    if not isinstance(payload["keywords"], list):
        raise MalformedProviderOutput("keywords must be an array")
    for kw in payload["keywords"]:
        if not isinstance(kw, Mapping) or not isinstance(kw.get("name"), str) or not isinstance(kw.get("score"), int):
            raise MalformedProviderOutput(f"bad keyword entry {kw!r}")
    if not isinstance(payload["risks"], list):
        raise MalformedProviderOutput("risks must be an array")
    for r in payload["risks"]:
        if not isinstance(r, Mapping) or not isinstance(r.get("category"), str) or not isinstance(r.get("level"), str):
            raise MalformedProviderOutput(f"bad risk entry {r!r}")
    if not isinstance(payload["appropriateness"], list):
        raise MalformedProviderOutput("appropriateness must be an array")
    for a in payload["appropriateness"]:
        if not isinstance(a, Mapping) or not isinstance(a.get("category"), str) or not isinstance(a.get("value"), int):
            raise MalformedProviderOutput(f"bad appropriateness entry {a!r}")
    return dict(payload)


def _live_request(cfg: ProviderConfig, context: str, transcript: str) -> dict:
    import requests

    _configure_slots(cfg.max_in_flight)
    token = os.environ.get(PROVIDER_TOKEN_ENV, "")
    body = {
        "model": cfg.model_name,
        "messages": [
            {"role": "system", "content": _EXTRACTION_INSTRUCTIONS + "\n\n" + context},
            {"role": "user", "content": transcript},
        ],
    }
    headers = {"Content-Type": "application/json"}
    if token:
        headers["Authorization"] = f"Bearer {token}"

    last_error: Exception | None = None
    for _ in range(1 + LIVE_RETRIES):
        try:
            with _live_slots:
                resp = requests.post(
                    cfg.endpoint, json=body, headers=headers, timeout=cfg.request_timeout / 1000
                )
            resp.raise_for_status()
            doc = resp.json()
            content = doc["choices"][0]["message"]["content"]
            return validate_provider_payload(json.loads(content))
        except requests.RequestException as exc:
            raise ProviderUnavailable(str(exc)) from exc
        except (MalformedProviderOutput, KeyError, IndexError, TypeError, ValueError, json.JSONDecodeError) as exc:
            last_error = exc
    raise MalformedProviderOutput(f"provider output failed validation after {LIVE_RETRIES} retries: {last_error}")


def _payload_features(payload: Mapping, coverage_ms: int) -> VideoFeatures:
    scores = {}
    for kw in payload["keywords"]:
        scores[normalize_keyword(kw["name"])] = clamp(int(kw["score"]), -2, 2)
    return VideoFeatures(scores=scores, coverage_ms=coverage_ms)


def _live_features(chunks: Sequence[Chunk], cfg: ProviderConfig, context: str) -> VideoFeatures:
    partials = []
    for c in chunks:
        payload = _live_request(cfg, context, c.transcript)
        partials.append((_payload_features(payload, c.duration_ms), max(1, c.duration_ms)))
    return combine_chunks(partials)


def _live_censor(
    chunks: Sequence[Chunk],
    cfg: ProviderConfig,
    context: str,
    guideline_set: CommonGuidelineSet,
    video_id: str,
    at: int,
) -> CensorshipResult:
    feature_partials = []
    risk_partials = []
    appro_best: dict[str, AppropriatenessFinding] = {}
    band_ordinal = 0
    summaries = []
    band_names = guideline_set.band_names()
    for c in chunks:
        payload = _live_request(cfg, context, c.transcript)
        feature_partials.append((_payload_features(payload, c.duration_ms), max(1, c.duration_ms)))
        risk_partials.append(
            [RiskFinding(r["category"], r["level"], r.get("rationale", "")) for r in payload["risks"]]
        )
        for a in payload["appropriateness"]:
            finding = AppropriatenessFinding(a["category"], a["value"], a.get("rationale", ""))
            current = appro_best.get(finding.category)
            if current is None or finding.value > current.value:
                appro_best[finding.category] = finding
        if payload["age_band"] not in band_names:
            raise GuidelineViolation(f"unknown age band {payload['age_band']!r}")
        band_ordinal = max(band_ordinal, band_names.index(payload["age_band"]))
        if payload["summary"]:
            summaries.append(payload["summary"])

    result = CensorshipResult(
        video_id=video_id,
        age_band=band_names[band_ordinal],
        risks=_max_level_risks(risk_partials, guideline_set),
        appropriateness=tuple(appro_best[name] for name in sorted(appro_best)),
        features=combine_chunks(feature_partials),
        summary="\n".join(summaries),
        produced_at=at,
        provider_id=cfg.provider_id,
    )
    return validate_result(result, guideline_set)


# --- public entry points ---------------------------------------------------


def extract_features(chunks: Sequence[Chunk], cfg: ProviderConfig, context: str = "") -> VideoFeatures:
    """Per-chunk feature extraction, merged with combine_chunks."""
    if not chunks:
        raise NoChunks("chunk list is empty")
    if cfg.kind is ProviderKind.MOCK:
        return _mock_features(chunks, cfg)
    return _live_features(chunks, cfg, context)


def censor(
    chunks: Sequence[Chunk],
    context: str,
    cfg: ProviderConfig,
    guideline_set: CommonGuidelineSet,
    video_id: str = "",
    at: int = 0,
) -> CensorshipResult:
    """Full guideline-driven analysis of a chunked video."""
    if not chunks:
        raise NoChunks("chunk list is empty")
    if cfg.kind is ProviderKind.MOCK:
        result = _mock_censor(chunks, cfg, guideline_set, video_id, at)
    else:
        result = _live_censor(chunks, cfg, context, guideline_set, video_id, at)
    return validate_result(result, guideline_set)


def validate_result(result: CensorshipResult, guideline_set: CommonGuidelineSet) -> CensorshipResult:
    """Reject results naming categories, levels, or bands outside the active set.

    Presence scores are clamped to -2..2 on the way through.
    """
    if result.age_band not in guideline_set.band_names():
        raise GuidelineViolation(f"unknown age band {result.age_band!r}")
    risk_cats = guideline_set.risk_by_name()
    for finding in result.risks:
        cat = risk_cats.get(finding.category)
        if cat is None:
            raise GuidelineViolation(f"unknown risk category {finding.category!r}")
        if finding.level not in cat.levels:
            raise GuidelineViolation(f"unknown level {finding.level!r} for risk {finding.category!r}")
    appro_cats = guideline_set.appropriateness_by_name()
    for finding in result.appropriateness:
        cat = appro_cats.get(finding.category)
        if cat is None:
            raise GuidelineViolation(f"unknown appropriateness category {finding.category!r}")
        if finding.value not in set(cat.scale.values()):
            raise GuidelineViolation(f"value {finding.value} not on scale of {finding.category!r}")
    clamped = {normalize_keyword(kw): clamp(score, -2, 2) for kw, score in result.features.scores.items()}
    if clamped != dict(result.features.scores):
        result = CensorshipResult(
            video_id=result.video_id,
            age_band=result.age_band,
            risks=result.risks,
            appropriateness=result.appropriateness,
            features=VideoFeatures(scores=clamped, coverage_ms=result.features.coverage_ms),
            summary=result.summary,
            produced_at=result.produced_at,
            provider_id=result.provider_id,
        )
    return result


def default_lexicon_path() -> str:
    from importlib import resources

    return str(resources.files("coview.data").joinpath("mock_lexicon.json"))
