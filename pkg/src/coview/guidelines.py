"""Common guideline documents and personalized guideline derivation.

Common guidelines are an editable taxonomy (age bands, risk categories,
appropriateness categories) loaded from a JSON document; a default one
ships with the package. Personalized guidelines are seek/avoid/note
directives derived from the co-preference panel. Both render into the
deterministic prompt context handed to the analysis provider.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping

from .errors import RoleError, ValidationError
from .preference import PreferencePanel, Role, normalize_keyword

DEFAULT_RISK_LEVELS = ("none", "low", "medium", "high")
DEFAULT_APPROPRIATENESS_SCALE = {"none": 0, "low": 1, "medium": 2, "high": 3}


class SchemaError(ValidationError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field_name = field_name


class OverlapError(ValidationError):
    pass


class WrongRole(RoleError):
    pass


@dataclass(frozen=True)
class AgeBand:
    name: str
    min_age: int
    max_age: int | None  # None = open-ended


@dataclass(frozen=True)
class RiskCategory:
    name: str
    levels: tuple[str, ...] = DEFAULT_RISK_LEVELS
    description: str = ""


@dataclass(frozen=True)
class AppropriatenessCategory:
    name: str
    scale: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_APPROPRIATENESS_SCALE))

    def label_for(self, value: int) -> str:
        for label, v in self.scale.items():
            if v == value:
                return label
        raise ValidationError(f"value {value} not on scale of {self.name}")


@dataclass(frozen=True)
class CommonGuidelineSet:
    age_bands: tuple[AgeBand, ...]
    risks: tuple[RiskCategory, ...]
    appropriateness: tuple[AppropriatenessCategory, ...]
    source_notes: str = ""

    def band_names(self) -> list[str]:
        return [b.name for b in self.age_bands]

    def risk_by_name(self) -> dict[str, RiskCategory]:
        return {r.name: r for r in self.risks}

    def appropriateness_by_name(self) -> dict[str, AppropriatenessCategory]:
        return {a.name: a for a in self.appropriateness}


class Directive(enum.Enum):
    SEEK = "seek"
    AVOID = "avoid"
    NOTE = "note"


@dataclass(frozen=True)
class PersonalizedGuideline:
    co_pref: PreferencePanel
    emphasis: tuple[tuple[str, Directive], ...]


# --- loading and serialization ---------------------------------------------


def _load_age_bands(raw) -> tuple[AgeBand, ...]:
    if not isinstance(raw, list) or not raw:
        raise SchemaError("age_bands", "must be a non-empty array")
    bands = []
    for i, entry in enumerate(raw):
        where = f"age_bands[{i}]"
        if not isinstance(entry, Mapping):
            raise SchemaError(where, "must be an object")
        name = entry.get("name")
        if not isinstance(name, str) or not name:
            raise SchemaError(f"{where}.name", "must be a non-empty string")
        min_age = entry.get("min_age")
        if not isinstance(min_age, int) or min_age < 0:
            raise SchemaError(f"{where}.min_age", "must be a non-negative integer")
        max_age = entry.get("max_age")
        if max_age is not None and (not isinstance(max_age, int) or max_age < min_age):
            raise SchemaError(f"{where}.max_age", "must be an integer >= min_age, or omitted")
        bands.append(AgeBand(name=name, min_age=min_age, max_age=max_age))

    ordered = sorted(bands, key=lambda b: b.min_age)
    for prev, nxt in zip(ordered, ordered[1:]):
        prev_max = prev.max_age
        if prev_max is None or nxt.min_age <= prev_max:
            raise OverlapError(f"age bands {prev.name!r} and {nxt.name!r} overlap")
        if nxt.min_age != prev_max + 1:
            raise SchemaError("age_bands", f"gap between {prev.name!r} and {nxt.name!r}")
    if ordered[0].min_age != 0:
        raise SchemaError("age_bands", "coverage must start at age 0")
    if ordered[-1].max_age is not None:
        raise SchemaError("age_bands", "last band must be open-ended")
    if len({b.name for b in ordered}) != len(ordered):
        raise SchemaError("age_bands", "band names must be unique")
    return tuple(ordered)


def _load_risks(raw) -> tuple[RiskCategory, ...]:
    if not isinstance(raw, list) or not raw:
        raise SchemaError("risks", "must be a non-empty array")
    risks = []
    for i, entry in enumerate(raw):
        where = f"risks[{i}]"
        if not isinstance(entry, Mapping):
            raise SchemaError(where, "must be an object")
        name = entry.get("name")
        if not isinstance(name, str) or not name:
            raise SchemaError(f"{where}.name", "must be a non-empty string")
        levels = entry.get("levels")
        if levels is None:
            levels = list(DEFAULT_RISK_LEVELS)
        if not isinstance(levels, list) or not levels or len(set(levels)) != len(levels):
            raise SchemaError(f"{where}.levels", "must be a non-empty array of distinct labels")
        if not all(isinstance(lv, str) and lv for lv in levels):
            raise SchemaError(f"{where}.levels", "labels must be non-empty strings")
        description = entry.get("description", "")
        if not isinstance(description, str):
            raise SchemaError(f"{where}.description", "must be a string")
        risks.append(RiskCategory(name=name, levels=tuple(levels), description=description))
    if len({r.name for r in risks}) != len(risks):
        raise SchemaError("risks", "category names must be unique")
    return tuple(risks)


def _load_appropriateness(raw) -> tuple[AppropriatenessCategory, ...]:
    if not isinstance(raw, list) or not raw:
        raise SchemaError("appropriateness", "must be a non-empty array")
    cats = []
    for i, entry in enumerate(raw):
        where = f"appropriateness[{i}]"
        if not isinstance(entry, Mapping):
            raise SchemaError(where, "must be an object")
        name = entry.get("name")
        if not isinstance(name, str) or not name:
            raise SchemaError(f"{where}.name", "must be a non-empty string")
        scale = entry.get("scale")
        if scale is None:
            scale = dict(DEFAULT_APPROPRIATENESS_SCALE)
        if not isinstance(scale, Mapping) or not scale:
            raise SchemaError(f"{where}.scale", "must be a non-empty object")
        for label, value in scale.items():
            if not isinstance(label, str) or not label:
                raise SchemaError(f"{where}.scale", "labels must be non-empty strings")
            if not isinstance(value, int) or not (0 <= value <= 3):
                raise SchemaError(f"{where}.scale", f"value for {label!r} must be an integer in 0..3")
        if len(set(scale.values())) != len(scale):
            raise SchemaError(f"{where}.scale", "values must be distinct")
        cats.append(AppropriatenessCategory(name=name, scale=dict(scale)))
    if len({c.name for c in cats}) != len(cats):
        raise SchemaError("appropriateness", "category names must be unique")
    return tuple(cats)


def load_common(document: Mapping | str | bytes) -> CommonGuidelineSet:
    """Validate a guideline document and apply defaults for omitted fields."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError("document", f"not valid JSON: {exc}") from None
    if not isinstance(document, Mapping):
        raise SchemaError("document", "must be a JSON object")
    source_notes = document.get("source_notes", "")
    if not isinstance(source_notes, str):
        raise SchemaError("source_notes", "must be a string")
    return CommonGuidelineSet(
        age_bands=_load_age_bands(document.get("age_bands")),
        risks=_load_risks(document.get("risks")),
        appropriateness=_load_appropriateness(document.get("appropriateness")),
        source_notes=source_notes,
    )


def serialize_common(s: CommonGuidelineSet) -> dict:
    return {
        "age_bands": [
            {"name": b.name, "min_age": b.min_age}
            | ({} if b.max_age is None else {"max_age": b.max_age})
            for b in s.age_bands
        ],
        "risks": [
            {"name": r.name, "levels": list(r.levels), "description": r.description}
            for r in s.risks
        ],
        "appropriateness": [
            {"name": c.name, "scale": dict(c.scale)} for c in s.appropriateness
        ],
        "source_notes": s.source_notes,
    }


def load_default() -> CommonGuidelineSet:
    """The guideline document shipped with the package."""
    text = resources.files("coview.data").joinpath("default_guidelines.json").read_text("utf-8")
    return load_common(text)


def load_common_file(path) -> CommonGuidelineSet:
    from pathlib import Path

    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"guidelines: not found: {p}")
    return load_common(p.read_text("utf-8"))


# --- personalization -------------------------------------------------------


def derive_personalized(co_pref: PreferencePanel) -> PersonalizedGuideline:
    """Partition co-preference keywords into seek/avoid/note by weight sign."""
    if co_pref.role is not Role.CO:
        raise WrongRole(f"co-preference panel required, got role {co_pref.role.value!r}")
    emphasis = []
    for kw in sorted(co_pref.entries):
        weight = co_pref.entries[kw]
        if weight < 0:
            directive = Directive.AVOID
        elif weight > 0:
            directive = Directive.SEEK
        else:
            directive = Directive.NOTE
        emphasis.append((normalize_keyword(kw), directive))
    return PersonalizedGuideline(co_pref=co_pref, emphasis=tuple(emphasis))


def render_prompt_context(common: CommonGuidelineSet, personal: PersonalizedGuideline) -> str:
    """Deterministic guideline text block for analysis prompts.

    Byte-stable for equal inputs: plain string assembly, fixed ordering,
    no timestamps.
    """
    lines = ["## Age bands"]
    for band in common.age_bands:
        upper = "and up" if band.max_age is None else f"to {band.max_age}"
        lines.append(f"- {band.name}: ages {band.min_age} {upper}")

    lines.append("")
    lines.append("## Risk categories")
    for risk in common.risks:
        lines.append(f"- {risk.name} (levels: {' < '.join(risk.levels)})")
        if risk.description:
            lines.append(f"  {risk.description}")

    lines.append("")
    lines.append("## Appropriateness categories")
    for cat in common.appropriateness:
        ordered = sorted(cat.scale.items(), key=lambda kv: kv[1])
        scale_text = ", ".join(f"{label}={value}" for label, value in ordered)
        lines.append(f"- {cat.name} (scale: {scale_text})")

    lines.append("")
    lines.append("## Household emphasis")
    if not personal.emphasis:
        lines.append("none configured")
    else:
        for directive in (Directive.SEEK, Directive.AVOID, Directive.NOTE):
            kws = [kw for kw, d in personal.emphasis if d is directive]
            if kws:
                lines.append(f"{directive.value}: {', '.join(kws)}")
    return "\n".join(lines) + "\n"
