// Pure renderers: service payload in, HTML string out. No state, no
// clock, no domain math beyond display geometry, so rendering the same
// snapshot twice yields byte-identical markup.

import { controlsFor } from "./gating";
import type {
  FeedbackDoc,
  PanelDoc,
  ReportDoc,
  SessionView,
  Weight,
} from "./types";
import { WEIGHT_LABELS } from "./types";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

/** Maps a -2..2 value onto a 0..100% bar length. Display only. */
function barPercent(value: number): number {
  return ((value + 2) / 4) * 100;
}

// -- panel editor ------------------------------------------------------------

export function renderWeightSelector(name: string, selected: number): string {
  const options = [...WEIGHT_LABELS.entries()]
    .map(([value, label]) => {
      const sel = value === selected ? " selected" : "";
      return `<option value="${value}"${sel}>${escapeHtml(label)}</option>`;
    })
    .join("");
  return `<select class="weight" name="${escapeHtml(name)}">${options}</select>`;
}

export function renderPanelEditor(panel: PanelDoc): string {
  const rows = Object.keys(panel.entries)
    .sort()
    .map((keyword) => {
      const weight = panel.entries[keyword] ?? 0;
      return (
        `<tr data-keyword="${escapeHtml(keyword)}">` +
        `<td>${escapeHtml(keyword)}</td>` +
        `<td>${renderWeightSelector(`w-${keyword}`, weight)}</td>` +
        `<td><button class="remove" data-keyword="${escapeHtml(keyword)}">remove</button></td>` +
        `</tr>`
      );
    })
    .join("");
  return (
    `<table class="panel-editor" data-role="${panel.role}" data-revision="${panel.revision}">` +
    `<thead><tr><th>keyword</th><th>weight</th><th></th></tr></thead>` +
    `<tbody>${rows}</tbody></table>` +
    `<form class="add-keyword"><input name="keyword" placeholder="new keyword">` +
    `${renderWeightSelector("new-weight", 0)}<button type="submit">add</button></form>`
  );
}

export function renderCoPanel(panel: PanelDoc | null): string {
  if (!panel || Object.keys(panel.entries).length === 0) {
    return `<div class="co-panel empty">No co-preference panel agreed yet.</div>`;
  }
  const items = Object.keys(panel.entries)
    .sort()
    .map((keyword) => {
      const weight = panel.entries[keyword] ?? 0;
      const label = WEIGHT_LABELS.get(weight as Weight) ?? String(weight);
      return `<li data-keyword="${escapeHtml(keyword)}">${escapeHtml(keyword)}: ${escapeHtml(label)} (${weight})</li>`;
    })
    .join("");
  return `<ul class="co-panel" data-revision="${panel.revision}">${items}</ul>`;
}

// -- consensus chat ----------------------------------------------------------

export function renderTranscript(view: SessionView): string {
  const bubbles = view.messages
    .map(
      (msg) =>
        `<div class="bubble mediator" data-seq="${msg.seq}" data-template="${escapeHtml(msg.template_id)}">` +
        `<span class="stage-tag">${escapeHtml(msg.stage)}</span>${escapeHtml(msg.text)}</div>`,
    )
    .join("");
  return `<div class="transcript">${bubbles}</div>`;
}

export function renderConsensusControls(view: SessionView): string {
  const gate = controlsFor(view);
  const dis = (enabled: boolean) => (enabled ? "" : " disabled");
  const conflictOptions = view.conflicts
    .filter((c) => !c.resolved)
    .map((c) => `<option value="${escapeHtml(c.keyword)}">${escapeHtml(c.keyword)}</option>`)
    .join("");
  const outcome =
    view.stage === "finalized"
      ? `<div class="outcome" data-outcome="${view.outcome ?? ""}">` +
        (view.outcome === "consensus_reached" ? "Consensus reached." : "No consensus this time.") +
        `</div>${renderCoPanel(view.co_panel)}`
      : "";
  return (
    `<div class="controls" data-stage="${view.stage}">` +
    `<button id="accept"${dis(gate.respond)}>Accept</button>` +
    `<button id="modify"${dis(gate.respond)}>Modify</button>` +
    `<span class="reason-group"><select id="reason-keyword"${dis(gate.reason)}>${conflictOptions}</select>` +
    `<input id="reason-text" placeholder="why this matters"${dis(gate.reason)}>` +
    `<button id="send-reason"${dis(gate.reason)}>Send reason</button></span>` +
    `<span class="position-group"><select id="position-keyword"${dis(gate.position)}>${conflictOptions}</select>` +
    `<select id="position-kind"${dis(gate.position)}>` +
    `<option value="keep">keep</option><option value="change">change</option><option value="drop">drop</option>` +
    `</select>${renderWeightSelector("position-weight", 0)}` +
    `<button id="send-position"${dis(gate.position)}>Take position</button></span>` +
    `<button id="advance"${dis(gate.advance)}>Continue</button>` +
    `</div>${outcome}`
  );
}

// -- in-time feedback --------------------------------------------------------

const CLASS_COLOR: Record<string, string> = {
  aligned: "green",
  misaligned: "red",
  informational: "gray",
};

export function renderFeedback(doc: FeedbackDoc): string {
  const rows = doc.entries
    .map((entry) => {
      // color comes from the classification field alone, never recomputed
      const color = CLASS_COLOR[entry.classification] ?? "gray";
      return (
        `<div class="feedback-row ${color}" data-keyword="${escapeHtml(entry.keyword)}" ` +
        `data-classification="${entry.classification}">` +
        `<span class="kw">${escapeHtml(entry.keyword)}</span>` +
        `<div class="bar light" style="width:${barPercent(entry.pref_weight)}%" ` +
        `data-value="${entry.pref_weight}"></div>` +
        `<div class="bar dark" style="width:${barPercent(entry.video_score)}%" ` +
        `data-value="${entry.video_score}"></div>` +
        `</div>`
      );
    })
    .join("");
  const risks = doc.common.risks
    .map(
      (r) =>
        `<li data-category="${escapeHtml(r.category)}">${escapeHtml(r.category)}: ${escapeHtml(r.level)}</li>`,
    )
    .join("");
  const appropriateness = doc.common.appropriateness
    .map(
      (a) =>
        `<li data-category="${escapeHtml(a.category)}">${escapeHtml(a.category)}: ${a.value}</li>`,
    )
    .join("");
  return (
    `<section class="feedback" data-video="${escapeHtml(doc.video_id)}">` +
    `<div class="bars">${rows}</div>` +
    `<aside class="common-card">` +
    `<div class="age-band">Suggested age band: ${escapeHtml(doc.common.age_band)}</div>` +
    `<ul class="risks">${risks}</ul>` +
    `<ul class="appropriateness">${appropriateness}</ul>` +
    `<p class="summary">${escapeHtml(doc.common.summary)}</p>` +
    `</aside></section>`
  );
}

// -- summary report ----------------------------------------------------------

function trendPolyline(series: number[], width: number, height: number): string {
  const peak = Math.max(1, ...series);
  const step = series.length > 1 ? width / (series.length - 1) : 0;
  const points = series
    .map((count, i) => `${(i * step).toFixed(1)},${(height - (count / peak) * height).toFixed(1)}`)
    .join(" ");
  return `<polyline fill="none" stroke="currentColor" points="${points}"/>`;
}

export function renderReport(report: ReportDoc): string {
  if (report.video_count === 0) {
    return `<div class="report empty">no videos in this period</div>`;
  }
  const keywordRows = Object.keys(report.per_keyword)
    .sort()
    .map((keyword) => {
      const row = report.per_keyword[keyword];
      if (!row) return "";
      return (
        `<tr class="${CLASS_COLOR[row.classification] ?? "gray"}" data-keyword="${escapeHtml(keyword)}">` +
        `<td>${escapeHtml(keyword)}</td><td>${row.mean_score.toFixed(2)}</td>` +
        `<td>${escapeHtml(row.display_label)}</td><td>${row.classification}</td></tr>`
      );
    })
    .join("");
  const maxFreq = Math.max(1, ...Object.values(report.risk_frequency));
  const freqBars = Object.keys(report.risk_frequency)
    .sort()
    .map((category) => {
      const count = report.risk_frequency[category] ?? 0;
      return (
        `<div class="freq-row" data-category="${escapeHtml(category)}">` +
        `<span>${escapeHtml(category)}</span>` +
        `<div class="bar" style="width:${((count / maxFreq) * 100).toFixed(1)}%" data-count="${count}"></div>` +
        `</div>`
      );
    })
    .join("");
  const trends = Object.keys(report.risk_trend)
    .sort()
    .map((category) => {
      const series = report.risk_trend[category] ?? [];
      return (
        `<figure class="trend" data-category="${escapeHtml(category)}">` +
        `<figcaption>${escapeHtml(category)}</figcaption>` +
        `<svg viewBox="0 0 120 40">${trendPolyline(series, 120, 40)}</svg></figure>`
      );
    })
    .join("");
  return (
    `<section class="report" data-videos="${report.video_count}">` +
    `<table class="keywords"><thead><tr><th>keyword</th><th>mean</th><th>label</th><th>alignment</th></tr></thead>` +
    `<tbody>${keywordRows}</tbody></table>` +
    `<div class="risk-frequency">${freqBars}</div>` +
    `<div class="risk-trends">${trends}</div>` +
    `</section>`
  );
}
