"""Keyword-weight preference panels and the operations that edit them.

A panel maps normalized keywords to integer weights in [-2, 2]
("strongly dislike" .. "strongly like"). Panels are immutable values:
every mutator returns a new panel with the revision bumped, so they can
be shared read-only across threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import ValidationError
from .rounding import clamp, round_ratio_half_away

MAX_KEYWORD_LEN = 64
MAX_PANEL_ENTRIES = 256

WEIGHT_LABELS = {
    -2: "strongly dislike",
    -1: "dislike",
    0: "neutral",
    1: "like",
    2: "strongly like",
}


class EmptyKeyword(ValidationError):
    pass


class TooLong(ValidationError):
    pass


class PanelFull(ValidationError):
    pass


class NoVideos(ValidationError):
    pass


class Role(enum.Enum):
    PARENT = "parent"
    YOUTH = "youth"
    CO = "co"


class SuitabilityLabel(enum.Enum):
    SUITABLE = "suitable"
    UNSUITABLE = "unsuitable"


@dataclass(frozen=True)
class LabeledVideoRef:
    video_id: str
    label: SuitabilityLabel


def normalize_keyword(raw: str) -> str:
    """Lowercase, trim, and collapse internal whitespace. Idempotent."""
    kw = " ".join(raw.lower().split())
    if not kw:
        raise EmptyKeyword("keyword is empty after normalization")
    if len(kw) > MAX_KEYWORD_LEN:
        raise TooLong(f"keyword exceeds {MAX_KEYWORD_LEN} characters: {kw[:32]}...")
    return kw


def check_weight(value: int) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value not in WEIGHT_LABELS:
        raise ValidationError(f"weight must be an integer in -2..2, got {value!r}")
    return value


@dataclass(frozen=True)
class PreferencePanel:
    role: Role
    entries: Mapping[str, int] = field(default_factory=dict)
    revision: int = 0
    updated_at: int = 0  # epoch milliseconds

    def weight_of(self, keyword: str) -> int | None:
        return self.entries.get(normalize_keyword(keyword))


def new_panel(role: Role, entries: Mapping[str, int] | None = None, at: int = 0) -> PreferencePanel:
    """Build a validated panel from raw entries (keys get normalized)."""
    clean: dict[str, int] = {}
    for raw_kw, w in (entries or {}).items():
        clean[normalize_keyword(raw_kw)] = check_weight(w)
    if len(clean) > MAX_PANEL_ENTRIES:
        raise PanelFull(f"panel holds at most {MAX_PANEL_ENTRIES} entries")
    return PreferencePanel(role=role, entries=clean, revision=0, updated_at=at)


def _bumped(panel: PreferencePanel, entries: dict[str, int], at: int | None) -> PreferencePanel:
    return PreferencePanel(
        role=panel.role,
        entries=entries,
        revision=panel.revision + 1,
        updated_at=panel.updated_at if at is None else at,
    )


def set_preference(panel: PreferencePanel, keyword: str, weight: int, at: int | None = None) -> PreferencePanel:
    kw = normalize_keyword(keyword)
    check_weight(weight)
    entries = dict(panel.entries)
    if kw not in entries and len(entries) >= MAX_PANEL_ENTRIES:
        raise PanelFull(f"panel holds at most {MAX_PANEL_ENTRIES} entries")
    entries[kw] = weight
    return _bumped(panel, entries, at)


def remove_preference(panel: PreferencePanel, keyword: str, at: int | None = None) -> PreferencePanel:
    """Remove a keyword. Removing an absent key is a no-op that still bumps revision."""
    kw = normalize_keyword(keyword)
    entries = dict(panel.entries)
    entries.pop(kw, None)
    return _bumped(panel, entries, at)


def infer_from_videos(
    panel: PreferencePanel,
    labeled: Iterable[tuple[LabeledVideoRef, object]],
    at: int | None = None,
) -> PreferencePanel:
    """Merge preferences inferred from labeled example videos into the panel.

    A keyword becomes a candidate when some labeled video carries it at
    presence >= 1. Its weight is the half-away-from-zero rounded mean of
    sign * presence over the videos whose features mention it, where sign
    is +1 for suitable and -1 for unsuitable. Candidates overwrite any
    existing entry for the same keyword.
    """
    labeled = list(labeled)
    if not labeled:
        raise NoVideos("labeled video list is empty")

    sums: dict[str, int] = {}
    counts: dict[str, int] = {}
    eligible: set[str] = set()
    for ref, features in labeled:
        scores = getattr(features, "scores", features)
        sign = 1 if ref.label is SuitabilityLabel.SUITABLE else -1
        for raw_kw, presence in scores.items():
            kw = normalize_keyword(raw_kw)
            sums[kw] = sums.get(kw, 0) + sign * presence
            counts[kw] = counts.get(kw, 0) + 1
            if presence >= 1:
                eligible.add(kw)

    entries = dict(panel.entries)
    for kw in sorted(eligible):
        candidate = clamp(round_ratio_half_away(sums[kw], counts[kw]), -2, 2)
        entries[kw] = candidate
    if len(entries) > MAX_PANEL_ENTRIES:
        raise PanelFull(f"panel holds at most {MAX_PANEL_ENTRIES} entries")
    return _bumped(panel, entries, at)


@dataclass(frozen=True)
class PanelConflict:
    """A keyword the two panels disagree on (absent counts as disagreement)."""

    keyword: str
    weight_a: int | None
    weight_b: int | None


def diff_panels(a: PreferencePanel, b: PreferencePanel) -> list[PanelConflict]:
    """One conflict per keyword present in exactly one panel or with differing weights."""
    conflicts = []
    for kw in sorted(set(a.entries) | set(b.entries)):
        wa = a.entries.get(kw)
        wb = b.entries.get(kw)
        if wa != wb:
            conflicts.append(PanelConflict(keyword=kw, weight_a=wa, weight_b=wb))
    return conflicts


def panel_to_doc(panel: PreferencePanel) -> dict:
    """Canonical interchange form used by the CLI, service, and UI."""
    return {
        "role": panel.role.value,
        "revision": panel.revision,
        "entries": {kw: panel.entries[kw] for kw in sorted(panel.entries)},
    }


def panel_from_doc(doc: Mapping) -> PreferencePanel:
    if not isinstance(doc, Mapping):
        raise ValidationError("panel document must be an object")
    try:
        role = Role(doc["role"])
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"panel document has no valid role: {exc}") from None
    entries = doc.get("entries", {})
    if not isinstance(entries, Mapping):
        raise ValidationError("panel entries must be an object")
    panel = new_panel(role, entries)
    revision = doc.get("revision", 0)
    if not isinstance(revision, int) or revision < 0:
        raise ValidationError("panel revision must be a non-negative integer")
    return PreferencePanel(role=panel.role, entries=panel.entries, revision=revision, updated_at=0)
