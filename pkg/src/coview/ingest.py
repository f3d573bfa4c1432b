"""Video bundle ingestion: subtitles, keyframes, alignment, chunking.

A bundle arrives as pre-extracted grayscale frames (with a timestamp
manifest) plus an SRT or WebVTT subtitle document. This module reduces
it to keyframe-anchored aligned segments and packs those into
context-sized chunks for the analysis provider. Everything here is a
pure function over immutable inputs.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError

DEFAULT_SIMILARITY_THRESHOLD = 0.85
DEFAULT_HISTOGRAM_BINS = 64
DEFAULT_CHUNK_BUDGET = 8000
# Window length granted to the final keyframe of a single-frame sequence.
FALLBACK_FRAME_INTERVAL_MS = 1000


class ParseError(ValidationError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DimensionMismatch(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class CueOutOfRange(ValidationError):
    pass


class SegmentTooLarge(ValidationError):
    pass


class SubtitleFormat(enum.Enum):
    SRT = "srt"
    WEBVTT = "webvtt"


@dataclass(frozen=True)
class SubtitleCue:
    start: int  # milliseconds
    end: int
    text: str

    @property
    def midpoint(self) -> float:
        return (self.start + self.end) / 2


@dataclass(frozen=True)
class FrameRef:
    index: int
    timestamp: int  # milliseconds
    image: np.ndarray  # 2-D uint8 luminance grid

    def __eq__(self, other):  # numpy arrays break the generated __eq__
        return (
            isinstance(other, FrameRef)
            and self.index == other.index
            and self.timestamp == other.timestamp
            and np.array_equal(self.image, other.image)
        )


@dataclass(frozen=True)
class KeyFrame:
    frame: FrameRef
    window_start: int
    window_end: int


@dataclass(frozen=True)
class AlignedSegment:
    keyframe: KeyFrame
    cues: tuple[SubtitleCue, ...]

    @property
    def transcript(self) -> str:
        return "\n".join(cue.text for cue in self.cues)


@dataclass(frozen=True)
class IngestConfig:
    similarity_threshold: float = DEFAULT_SIMILARITY_THRESHOLD
    histogram_bins: int = DEFAULT_HISTOGRAM_BINS
    chunk_budget: int = DEFAULT_CHUNK_BUDGET

    def __post_init__(self):
        if not (0 < self.similarity_threshold <= 1):
            raise ValidationError("similarity_threshold must be in (0, 1]")
        if self.histogram_bins < 2:
            raise ValidationError("histogram_bins must be >= 2")
        if self.chunk_budget < 256:
            raise ValidationError("chunk_budget must be >= 256")


@dataclass(frozen=True)
class Chunk:
    segments: tuple[AlignedSegment, ...]

    @property
    def transcript(self) -> str:
        return "\n".join(seg.transcript for seg in self.segments if seg.transcript)

    @property
    def char_len(self) -> int:
        return sum(len(seg.transcript) for seg in self.segments)

    @property
    def duration_ms(self) -> int:
        return sum(seg.keyframe.window_end - seg.keyframe.window_start for seg in self.segments)


# --- subtitle parsing ------------------------------------------------------

_SRT_TIME = re.compile(r"^(\d{1,2}):(\d{2}):(\d{2})[,.](\d{3})$")
_VTT_TIME = re.compile(r"^(?:(\d{1,2}):)?(\d{2}):(\d{2})\.(\d{3})$")


def _parse_timestamp(token: str, pattern: re.Pattern, line_no: int) -> int:
    m = pattern.match(token.strip())
    if not m:
        raise ParseError(line_no, f"malformed timestamp {token.strip()!r}")
    h, mnt, sec, ms = (int(g) if g else 0 for g in m.groups())
    if mnt >= 60 or sec >= 60:
        raise ParseError(line_no, f"timestamp out of range {token.strip()!r}")
    return ((h * 60 + mnt) * 60 + sec) * 1000 + ms


def _cue_from_block(times_line: str, line_no: int, text_lines: list[str], pattern: re.Pattern) -> SubtitleCue:
    parts = times_line.split("-->")
    if len(parts) != 2:
        raise ParseError(line_no, "expected 'start --> end' timing line")
    start = _parse_timestamp(parts[0], pattern, line_no)
    # WebVTT cue settings may trail the end timestamp; keep only the first token.
    end_token = parts[1].strip().split(" ")[0]
    end = _parse_timestamp(end_token, pattern, line_no)
    if start < 0 or end <= start:
        raise ParseError(line_no, f"cue end {end} must be after start {start}")
    text = "\n".join(t.rstrip() for t in text_lines).strip()
    if not text:
        raise ParseError(line_no, "cue has no text")
    return SubtitleCue(start=start, end=end, text=text)


def parse_subtitles(data: bytes | str, fmt: SubtitleFormat) -> list[SubtitleCue]:
    """Parse an SRT or WebVTT document into cues ordered by start time.

    Numbering lines, the WEBVTT header, NOTE/STYLE/REGION blocks, and cue
    settings are discarded. Raises ParseError with the offending line
    number on malformed timestamps or structure.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8-sig")
    else:
        data = data.lstrip("﻿")
    lines = data.replace("\r\n", "\n").replace("\r", "\n").split("\n")

    if fmt is SubtitleFormat.WEBVTT:
        if not lines or not lines[0].strip().startswith("WEBVTT"):
            raise ParseError(1, "missing WEBVTT header")
        pattern = _VTT_TIME
        body_start = 1
    else:
        pattern = _SRT_TIME
        body_start = 0

    cues: list[SubtitleCue] = []
    i = body_start
    n = len(lines)
    while i < n:
        line = lines[i].strip()
        if not line:
            i += 1
            continue
        if fmt is SubtitleFormat.WEBVTT and line.split(" ")[0] in ("NOTE", "STYLE", "REGION"):
            while i < n and lines[i].strip():
                i += 1
            continue
        # Optional cue identifier / SRT counter line before the timing line.
        if "-->" not in line:
            i += 1
            if i >= n or "-->" not in lines[i]:
                raise ParseError(i + 1, "expected timing line after cue identifier")
            line = lines[i].strip()
        timing_line_no = i + 1
        i += 1
        text_lines = []
        while i < n and lines[i].strip():
            text_lines.append(lines[i])
            i += 1
        cues.append(_cue_from_block(line, timing_line_no, text_lines, pattern))
    cues.sort(key=lambda c: (c.start, c.end))
    return cues


def sniff_format(path: str | Path) -> SubtitleFormat:
    suffix = Path(path).suffix.lower()
    if suffix == ".vtt":
        return SubtitleFormat.WEBVTT
    return SubtitleFormat.SRT


# --- keyframes -------------------------------------------------------------


def luminance_histogram(image: np.ndarray, bins: int) -> np.ndarray:
    hist, _ = np.histogram(image, bins=bins, range=(0, 256))
    total = image.size
    return hist.astype(np.float64) / total


def frame_similarity(a: FrameRef, b: FrameRef, bins: int = DEFAULT_HISTOGRAM_BINS) -> float:
    """Histogram intersection of normalized luminance histograms, in [0, 1]."""
    if a.image.shape != b.image.shape:
        raise DimensionMismatch(f"frame shapes differ: {a.image.shape} vs {b.image.shape}")
    ha = luminance_histogram(a.image, bins)
    hb = luminance_histogram(b.image, bins)
    return float(np.minimum(ha, hb).sum())


def nominal_frame_interval(frames: list[FrameRef]) -> int:
    if len(frames) < 2:
        return FALLBACK_FRAME_INTERVAL_MS
    span = frames[-1].timestamp - frames[0].timestamp
    return max(1, round(span / (len(frames) - 1)))


def extract_keyframes(frames: list[FrameRef], cfg: IngestConfig = IngestConfig()) -> list[KeyFrame]:
    """Sequential-scan keyframe selection.

    Frame 0 is always a keyframe; a later frame becomes one iff its
    similarity to the most recent keyframe drops below the threshold.
    Windows partition [0, duration] where duration is the last frame's
    timestamp plus the nominal frame interval.
    """
    if not frames:
        raise EmptyInput("no frames")
    picked = [frames[0]]
    for frame in frames[1:]:
        if frame_similarity(picked[-1], frame, cfg.histogram_bins) < cfg.similarity_threshold:
            picked.append(frame)

    duration = frames[-1].timestamp + nominal_frame_interval(frames)
    keyframes = []
    for pos, frame in enumerate(picked):
        # First window starts at 0 so the windows cover the whole timeline
        # even when frame 0 is stamped later than t=0.
        start = 0 if pos == 0 else frame.timestamp
        end = picked[pos + 1].timestamp if pos + 1 < len(picked) else duration
        keyframes.append(KeyFrame(frame=frame, window_start=start, window_end=end))
    return keyframes


# --- alignment and chunking ------------------------------------------------


def align(keyframes: list[KeyFrame], cues: list[SubtitleCue]) -> list[AlignedSegment]:
    """Assign each cue to the keyframe window containing its midpoint.

    Windows are half-open [start, end) except the last, which also owns
    its end point. Lossless: every cue lands in exactly one segment.
    """
    if not keyframes:
        raise EmptyInput("no keyframes")
    buckets: list[list[SubtitleCue]] = [[] for _ in keyframes]
    last = len(keyframes) - 1
    for cue in cues:
        mid = cue.midpoint
        placed = False
        for idx, kf in enumerate(keyframes):
            upper_ok = mid < kf.window_end or (idx == last and mid <= kf.window_end)
            if kf.window_start <= mid and upper_ok:
                buckets[idx].append(cue)
                placed = True
                break
        if not placed:
            raise CueOutOfRange(f"cue midpoint {mid} ms falls outside all windows")
    return [
        AlignedSegment(keyframe=kf, cues=tuple(sorted(bucket, key=lambda c: (c.start, c.end))))
        for kf, bucket in zip(keyframes, buckets)
    ]


def chunk(segments: list[AlignedSegment], budget: int = DEFAULT_CHUNK_BUDGET) -> list[Chunk]:
    """Greedy left-to-right packing of whole segments into chunks.

    A chunk's transcript size (sum of segment transcript lengths) never
    exceeds the budget; segment order and content are preserved.
    """
    for seg in segments:
        if len(seg.transcript) > budget:
            raise SegmentTooLarge(
                f"segment at {seg.keyframe.window_start} ms has {len(seg.transcript)} chars, budget {budget}"
            )
    chunks: list[Chunk] = []
    current: list[AlignedSegment] = []
    current_len = 0
    for seg in segments:
        seg_len = len(seg.transcript)
        if current and current_len + seg_len > budget:
            chunks.append(Chunk(segments=tuple(current)))
            current, current_len = [], 0
        current.append(seg)
        current_len += seg_len
    if current:
        chunks.append(Chunk(segments=tuple(current)))
    return chunks


# --- bundle loading --------------------------------------------------------

RGB_LUMA = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class VideoBundle:
    frames: tuple[FrameRef, ...]
    cues: tuple[SubtitleCue, ...]
    source: str = ""


def image_to_luminance(arr: np.ndarray) -> np.ndarray:
    """8-bit grayscale passthrough; RGB converted via the BT.601 weights."""
    if arr.ndim == 2:
        return arr.astype(np.uint8)
    if arr.ndim == 3 and arr.shape[2] >= 3:
        luma = arr[:, :, 0] * RGB_LUMA[0] + arr[:, :, 1] * RGB_LUMA[1] + arr[:, :, 2] * RGB_LUMA[2]
        return np.rint(luma).astype(np.uint8)
    raise ValidationError(f"unsupported image shape {arr.shape}")


def load_frames(frames_dir: str | Path) -> list[FrameRef]:
    """Read a frame manifest (manifest.json) and its image files."""
    from PIL import Image

    frames_dir = Path(frames_dir)
    manifest_path = frames_dir / "manifest.json"
    if not manifest_path.is_file():
        raise ValidationError(f"frames: manifest not found at {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"frames: manifest is not valid JSON: {exc}") from None
    if not isinstance(manifest, list):
        raise ValidationError("frames: manifest must be a JSON array")

    frames = []
    prev_index, prev_ts = -1, -1
    for entry in manifest:
        try:
            index = int(entry["index"])
            timestamp = int(entry["timestamp_ms"])
            file_rel = entry["file"]
        except (TypeError, KeyError, ValueError) as exc:
            raise ValidationError(f"frames: bad manifest entry {entry!r}: {exc}") from None
        if index <= prev_index:
            raise ValidationError("frames: manifest indices must be strictly increasing")
        if timestamp < max(prev_ts, 0):
            raise ValidationError("frames: manifest timestamps must be non-decreasing")
        path = frames_dir / file_rel
        if not path.is_file():
            raise ValidationError(f"frames: image not found: {path}")
        with Image.open(path) as img:
            arr = np.asarray(img)
        frames.append(FrameRef(index=index, timestamp=timestamp, image=image_to_luminance(arr)))
        prev_index, prev_ts = index, timestamp
    if not frames:
        raise EmptyInput("frames: manifest is empty")
    return frames


def load_bundle(frames_dir: str | Path, subtitles_path: str | Path) -> VideoBundle:
    subtitles_path = Path(subtitles_path)
    if not subtitles_path.is_file():
        raise ValidationError(f"subtitles: not found: {subtitles_path}")
    cues = parse_subtitles(subtitles_path.read_bytes(), sniff_format(subtitles_path))
    frames = load_frames(frames_dir)
    return VideoBundle(frames=tuple(frames), cues=tuple(cues), source=str(frames_dir))


def load_bundle_dir(bundle_dir: str | Path) -> VideoBundle:
    """A bundle directory holds manifest.json, its frames, and one subtitle file."""
    root = Path(bundle_dir)
    if not root.is_dir():
        raise ValidationError(f"bundle: not a directory: {root}")
    subs = sorted(p for p in root.iterdir() if p.suffix.lower() in (".srt", ".vtt"))
    if len(subs) != 1:
        raise ValidationError(f"bundle: expected exactly one subtitle file in {root}, found {len(subs)}")
    return load_bundle(root, subs[0])


def bundle_to_chunks(bundle: VideoBundle, cfg: IngestConfig = IngestConfig()) -> list[Chunk]:
    """The full ingest pipeline: keyframes -> alignment -> chunks."""
    keyframes = extract_keyframes(list(bundle.frames), cfg)
    segments = align(keyframes, list(bundle.cues))
    return chunk(segments, cfg.chunk_budget)
