"""Command line entry points: ingest, censor, consensus-sim, report, serve.

Exit codes: 0 success, 1 validation error (bad flags, unreadable or
schema-invalid inputs), 2 runtime error (provider unreachable or
persistently malformed, unexpected IO failure). With the mock provider
all output is byte-stable: timestamps default to 0 and JSON is dumped
with sorted keys.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Mapping

from . import consensus as cs
from .errors import CoviewError, NotFoundError, RoleError, StateError, ValidationError
from .feedback import DEFAULT_BUCKET_MS, InTimeFeedback, Period, aggregate, build_in_time
from .guidelines import derive_personalized, load_common_file, load_default, render_prompt_context
from .ingest import IngestConfig, align, bundle_to_chunks, chunk, extract_keyframes, load_bundle
from .preference import panel_from_doc
from .provider import ProviderConfig, ProviderKind, censor, default_lexicon_path
from .service import ServiceConfig, load_service_config, serve
from .simulate import AgentPolicy, format_stats, simulate


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad flags by default; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _dump(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _write_out(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _load_panel_file(path: str):
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"panel: not found: {p}")
    try:
        doc = json.loads(p.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"panel: not valid JSON: {exc}") from None
    return panel_from_doc(doc)


def _service_config(args) -> ServiceConfig:
    if getattr(args, "config", None):
        return load_service_config(args.config)
    return ServiceConfig()


def _provider_config(args, base: ServiceConfig) -> ProviderConfig:
    cfg = base.provider
    if getattr(args, "provider", None):
        kind = ProviderKind(args.provider)
        if kind is cfg.kind:
            return cfg
        if kind is ProviderKind.MOCK:
            return ProviderConfig(kind=kind, lexicon_path=cfg.lexicon_path or default_lexicon_path())
        return ProviderConfig(
            kind=kind,
            endpoint=cfg.endpoint,
            model_name=cfg.model_name,
            context_budget=cfg.context_budget,
            request_timeout=cfg.request_timeout,
            max_in_flight=cfg.max_in_flight,
        )
    return cfg


def _guideline_set(args, base: ServiceConfig):
    if getattr(args, "guidelines", None):
        return load_common_file(args.guidelines)
    return base.guideline_set()


# -- commands ----------------------------------------------------------------


def ingest_cmd(args) -> int:
    base = _service_config(args)
    bundle = load_bundle(args.frames, args.subs)
    keyframes = extract_keyframes(list(bundle.frames), base.ingest)
    segments = align(keyframes, list(bundle.cues))
    chunks = chunk(segments, base.ingest.chunk_budget)
    doc = {
        "frame_count": len(bundle.frames),
        "cue_count": len(bundle.cues),
        "keyframes": [
            {
                "index": kf.frame.index,
                "timestamp_ms": kf.frame.timestamp,
                "window_start": kf.window_start,
                "window_end": kf.window_end,
            }
            for kf in keyframes
        ],
        "chunks": [
            {"segments": len(c.segments), "char_len": c.char_len, "duration_ms": c.duration_ms}
            for c in chunks
        ],
    }
    _write_out(_dump(doc), args.out)
    return 0


def censor_cmd(args) -> int:
    base = _service_config(args)
    provider_cfg = _provider_config(args, base)
    guideline_set = _guideline_set(args, base)
    panel = _load_panel_file(args.panel)
    bundle = load_bundle(args.frames, args.subs)
    chunks = bundle_to_chunks(bundle, base.ingest)
    context = render_prompt_context(guideline_set, derive_personalized(panel))
    result = censor(chunks, context, provider_cfg, guideline_set, video_id=args.video_id, at=args.at)
    feedback = build_in_time(panel, result)
    _write_out(_dump({"result": result.to_dict(), "feedback": feedback.to_dict()}), args.out)
    return 0


def consensus_sim_cmd(args) -> int:
    initiator = AgentPolicy(accept_probability=0.0, compromise_probability=args.compromise_prob)
    reviewer = AgentPolicy(accept_probability=args.accept_prob, compromise_probability=args.compromise_prob)
    cfg = cs.ConsensusConfig(max_iterations=args.max_iter)
    stats = simulate(initiator, reviewer, args.sessions, args.seed, cfg)
    sys.stdout.write(format_stats(stats) + "\n")
    return 0


def _read_feedback_log(path: str) -> list[InTimeFeedback]:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"events: not found: {p}")
    records = []
    with p.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"events line {line_no}: not valid JSON: {exc}") from None
            if not isinstance(doc, Mapping):
                raise ValidationError(f"events line {line_no}: not an object")
            if doc.get("kind") == "censored":
                payload = doc.get("payload", {})
                feedback_doc = payload.get("feedback") if isinstance(payload, Mapping) else None
            elif "entries" in doc and "produced_at" in doc:
                feedback_doc = doc
            else:
                continue  # some other event kind; reports only consume feedback
            try:
                records.append(InTimeFeedback.from_dict(feedback_doc))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValidationError(f"events line {line_no}: bad feedback record: {exc}") from None
    return records


def report_cmd(args) -> int:
    base = _service_config(args)
    guideline_set = _guideline_set(args, base)
    records = _read_feedback_log(args.events)
    period = Period(start=args.from_ms, end=args.to_ms, bucket=args.bucket)
    report = aggregate(records, period, guideline_set)
    sys.stdout.write(_dump(report.to_dict()))
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["category", "bucket_index", "bucket_start_ms", "count"])
            for category in sorted(report.risk_trend):
                for i, count in enumerate(report.risk_trend[category]):
                    writer.writerow([category, i, period.start + i * period.bucket, count])
    return 0


def serve_cmd(args) -> int:
    cfg = _service_config(args)
    if args.host:
        cfg = ServiceConfig(
            host=args.host, port=cfg.port, data_dir=cfg.data_dir, provider=cfg.provider,
            guidelines_path=cfg.guidelines_path, consensus=cfg.consensus, ingest=cfg.ingest,
        )
    if args.port:
        cfg = ServiceConfig(
            host=cfg.host, port=args.port, data_dir=cfg.data_dir, provider=cfg.provider,
            guidelines_path=cfg.guidelines_path, consensus=cfg.consensus, ingest=cfg.ingest,
        )
    if args.data_dir:
        cfg = ServiceConfig(
            host=cfg.host, port=cfg.port, data_dir=args.data_dir, provider=cfg.provider,
            guidelines_path=cfg.guidelines_path, consensus=cfg.consensus, ingest=cfg.ingest,
        )
    serve(cfg)
    return 0


# -- wiring ------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="coview", description="Collaborative video censorship toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", parents=[], help="run keyframe extraction, alignment, and chunking")
    p_ingest.add_argument("--frames", required=True, help="directory with manifest.json and frame images")
    p_ingest.add_argument("--subs", required=True, help="subtitle file (.srt or .vtt)")
    p_ingest.add_argument("--config", help="service config JSON for ingest settings")
    p_ingest.add_argument("--out", help="output path for the summary JSON (default stdout)")
    p_ingest.set_defaults(func=ingest_cmd)

    p_censor = sub.add_parser("censor", help="analyze a bundle against guidelines and a co-preference panel")
    p_censor.add_argument("--frames", required=True, help="directory with manifest.json and frame images")
    p_censor.add_argument("--subs", required=True, help="subtitle file (.srt or .vtt)")
    p_censor.add_argument("--panel", required=True, help="co-preference panel JSON document")
    p_censor.add_argument("--guidelines", help="guideline document (default: the shipped set)")
    p_censor.add_argument("--provider", choices=["mock", "live"], help="analysis provider (default from config, else mock)")
    p_censor.add_argument("--config", help="service config JSON for provider and ingest settings")
    p_censor.add_argument("--video-id", default="local", help="video id stamped into the result")
    p_censor.add_argument("--at", type=int, default=0, help="result timestamp in epoch ms (default 0, keeps output byte-stable)")
    p_censor.add_argument("--out", help="output path for result + feedback JSON (default stdout)")
    p_censor.set_defaults(func=censor_cmd)

    p_sim = sub.add_parser("consensus-sim", help="run scripted agents through the consensus machine")
    p_sim.add_argument("--sessions", type=int, default=100, help="number of sessions")
    p_sim.add_argument("--seed", type=int, default=0, help="RNG seed")
    p_sim.add_argument("--accept-prob", type=float, default=0.2, help="reviewer probability of accepting outright")
    p_sim.add_argument("--compromise-prob", type=float, default=0.5, help="per-conflict probability of adopting the counterpart's position")
    p_sim.add_argument("--max-iter", type=int, default=cs.DEFAULT_MAX_ITERATIONS, help="iteration cap")
    p_sim.set_defaults(func=consensus_sim_cmd)

    p_report = sub.add_parser("report", help="aggregate a feedback log into a summary report")
    p_report.add_argument("--events", required=True, help="JSON-lines file: service event log or bare feedback records")
    p_report.add_argument("--from", dest="from_ms", type=int, required=True, help="period start, epoch ms (inclusive)")
    p_report.add_argument("--to", dest="to_ms", type=int, required=True, help="period end, epoch ms (exclusive)")
    p_report.add_argument("--bucket", type=int, default=DEFAULT_BUCKET_MS, help="trend bucket size in ms (default 1 day)")
    p_report.add_argument("--csv", help="also write the per-category trend series as CSV")
    p_report.add_argument("--guidelines", help="guideline document (default: the shipped set)")
    p_report.add_argument("--config", help="service config JSON")
    p_report.set_defaults(func=report_cmd)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--config", help="service config JSON")
    p_serve.add_argument("--host", help="listen address override")
    p_serve.add_argument("--port", type=int, help="listen port override")
    p_serve.add_argument("--data-dir", help="data directory override")
    p_serve.set_defaults(func=serve_cmd)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, RoleError, NotFoundError, StateError) as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return 1
    except CoviewError as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return 2
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
