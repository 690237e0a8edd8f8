// Pure rendering and form-state logic: plain data in, HTML strings out.
// Keeping these free of fetch and DOM globals makes them directly testable.

import type {
  ArtifactRef,
  InsightDetail,
  InsightSummary,
  Question,
  ValidationRecord,
} from "./api.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

// -- verdict form gating -----------------------------------------------------

export const INVALIDATION_REASONS = [
  "insufficient-dataset-info",
  "workflow-dataset-inconsistency",
  "overly-generic",
  "other",
] as const;

export interface VerdictFormState {
  verdict: "validated" | "invalidated" | null;
  reason: string | null;
  notes: string;
  reviewer: string;
}

export function canSubmitVerdict(state: VerdictFormState): boolean {
  if (state.verdict === null) return false;
  if (state.verdict === "invalidated" && !state.reason) return false;
  return true;
}

// -- flag form gating --------------------------------------------------------

export const QUESTION_FLAGS = ["hallucination", "duplicate", "non-validated-part"] as const;

export interface FlagFormState {
  flags: string[];
  confirmed: boolean;
}

export function canSubmitFlags(state: FlagFormState): boolean {
  return state.confirmed || state.flags.length > 0;
}

// -- rendering ----------------------------------------------------------------

export function renderQueue(items: InsightSummary[]): string {
  if (items.length === 0) {
    return `<p class="empty">no pending insights</p>`;
  }
  const rows = items
    .map(
      (item) => `
      <li class="queue-row">
        <a href="#/insight/${encodeURIComponent(item.insight_id)}">${escapeHtml(item.insight_id)}</a>
        <span class="summary">${escapeHtml(item.summary)}</span>
      </li>`,
    )
    .join("");
  return `<ul class="queue">${rows}</ul>`;
}

export function renderErrorBanner(message: string): string {
  return `
    <div class="banner error" role="alert">
      <span>${escapeHtml(message)}</span>
      <button data-action="retry">retry</button>
    </div>`;
}

const IMAGE_EXTENSIONS = [".png", ".jpg", ".jpeg", ".gif", ".svg", ".webp"];

export function isImageArtifact(name: string): boolean {
  const lowered = name.toLowerCase();
  return IMAGE_EXTENSIONS.some((ext) => lowered.endsWith(ext));
}

export function renderArtifact(artifact: ArtifactRef, url: string, textBody?: string): string {
  if (isImageArtifact(artifact.name)) {
    return `<figure class="artifact">
      <img src="${url}" alt="${escapeHtml(artifact.name)}" />
      <figcaption>${escapeHtml(artifact.name)} (block ${artifact.block})</figcaption>
    </figure>`;
  }
  const body = textBody === undefined ? "" : `<pre class="artifact-text">${escapeHtml(textBody)}</pre>`;
  return `<figure class="artifact">
    <figcaption><a href="${url}">${escapeHtml(artifact.name)}</a> (block ${artifact.block})</figcaption>
    ${body}
  </figure>`;
}

export function renderMissingArtifact(index: number): string {
  return `<div class="artifact placeholder">artifact ${index} is unavailable</div>`;
}

export function renderVerdictForm(state: VerdictFormState, serverError: string | null): string {
  const reasons = INVALIDATION_REASONS.map(
    (reason) => `
      <label><input type="radio" name="reason" value="${reason}"
        ${state.reason === reason ? "checked" : ""} /> ${reason}</label>`,
  ).join("");
  const disabled = canSubmitVerdict(state) ? "" : "disabled";
  const error = serverError ? `<p class="server-error">${escapeHtml(serverError)}</p>` : "";
  return `
    <form class="verdict-form" data-form="verdict">
      <label><input type="radio" name="verdict" value="validated"
        ${state.verdict === "validated" ? "checked" : ""} /> validated</label>
      <label><input type="radio" name="verdict" value="invalidated"
        ${state.verdict === "invalidated" ? "checked" : ""} /> invalidated</label>
      <fieldset class="reasons" ${state.verdict === "invalidated" ? "" : "disabled"}>
        ${reasons}
      </fieldset>
      <textarea name="notes" placeholder="notes">${escapeHtml(state.notes)}</textarea>
      <input name="reviewer" placeholder="reviewer id" value="${escapeHtml(state.reviewer)}" />
      <button type="submit" ${disabled}>submit verdict</button>
      ${error}
    </form>`;
}

export function renderVerdict(record: ValidationRecord): string {
  const reason = record.reason ? ` (${escapeHtml(record.reason)})` : "";
  return `<p class="verdict ${record.verdict}">
    ${escapeHtml(record.verdict)}${reason} by ${escapeHtml(record.reviewer)}
  </p>`;
}

export function renderInsightDetail(detail: InsightDetail, artifactUrl: (index: number) => string): string {
  const insight = detail.insight;
  const blocks = (detail.bundle?.blocks ?? [])
    .map(
      (block, i) => `
      <section class="block">
        <h4>block ${i}</h4>
        <pre class="code" data-block="${i}">${escapeHtml(block.code)}</pre>
        <p class="reasoning">${escapeHtml(block.reasoning)}</p>
      </section>`,
    )
    .join("");
  const report = detail.report
    ? detail.report.blocks
        .map(
          (block, i) => `
        <section class="result ${block.status}">
          <h4>block ${i}: ${block.status}</h4>
          ${block.stdout ? `<pre class="stdout">${escapeHtml(block.stdout)}</pre>` : ""}
          ${block.stderr ? `<pre class="stderr">${escapeHtml(block.stderr)}</pre>` : ""}
        </section>`,
        )
        .join("")
    : `<p class="empty">not executed yet</p>`;
  const artifacts = detail.artifacts
    .map((artifact) => renderArtifact(artifact, artifactUrl(artifact.index)))
    .join("");
  return `
    <article class="insight-detail">
      <h2>${escapeHtml(insight.insight_id)} <span class="status">${escapeHtml(insight.status)}</span></h2>
      <section class="insight-text">
        <h3>summary</h3><p>${escapeHtml(insight.summary)}</p>
        <h3>how it was derived</h3><p>${escapeHtml(insight.derivation)}</p>
        <h3>grounding text</h3><blockquote>${escapeHtml(insight.grounding_text)}</blockquote>
      </section>
      <section class="bundle"><h3>workflow</h3>${blocks || `<p class="empty">no bundle</p>`}</section>
      <section class="execution">
        <h3>latest run</h3>
        <button data-action="execute">run workflow</button>
        ${report}
      </section>
      <section class="artifacts"><h3>artifacts</h3>${artifacts || `<p class="empty">none</p>`}</section>
    </article>`;
}

export function renderQuestionRow(question: Question, state: FlagFormState): string {
  const text = question.kind === "oeq" ? question.question : question.stem;
  const options = question.options
    ? `<ol class="options">${Object.entries(question.options)
        .map(([letter, body]) => `<li>${letter}) ${escapeHtml(body)}</li>`)
        .join("")}</ol>`
    : "";
  const answer =
    question.kind === "oeq"
      ? escapeHtml(question.answer ?? "")
      : (question.correct ?? []).join(",");
  const checkboxes = QUESTION_FLAGS.map(
    (flag) => `
      <label><input type="checkbox" name="flag" value="${flag}"
        ${state.flags.includes(flag) ? "checked" : ""} /> ${flag}</label>`,
  ).join("");
  const disabled = canSubmitFlags(state) ? "" : "disabled";
  return `
    <article class="question" data-question="${escapeHtml(question.question_id)}">
      <h3>${escapeHtml(question.question_id)} <span class="kind">${question.kind}</span></h3>
      <p class="stem">${escapeHtml(text ?? "")}</p>
      ${options}
      <p class="truth">ground truth: ${answer}</p>
      <form data-form="flags">
        ${checkboxes}
        <label><input type="checkbox" name="confirm" ${state.confirmed ? "checked" : ""} />
          confirm (no flags)</label>
        <button type="submit" ${disabled}>submit</button>
      </form>
    </article>`;
}
