/**
 * HTML renderers.  Pure string builders so they are testable without a
 * DOM; app.ts injects the results and wires events by delegation.
 */

import type { CataloguePayload, TraceRow } from "./api.js";
import type { DecisionView, SettingsField } from "./model.js";
import type { WizardState } from "./state.js";

export function escapeHtml(text: string): string {
    return text
        .replace(/&/g, "&amp;")
        .replace(/</g, "&lt;")
        .replace(/>/g, "&gt;")
        .replace(/"/g, "&quot;")
        .replace(/'/g, "&#39;");
}

export function renderBadge(version: number | null): string {
    const label = version === null ? "–" : String(version);
    return `<span class="kb-badge" data-kb-version="${escapeHtml(label)}">KB v${escapeHtml(label)}</span>`;
}

export function renderTopicList(catalogue: CataloguePayload): string {
    const items = catalogue.topics
        .map(
            (topic) => `<li>
  <button type="button" class="topic-btn" data-topic-id="${escapeHtml(topic.id)}">
    ${escapeHtml(topic.title)}
  </button>
  <span class="topic-queries">${Object.keys(topic.queries).length} questions</span>
</li>`,
        )
        .join("\n");
    return `<section class="topics"><h2>Consultations</h2><ul>${items}</ul></section>`;
}

/** Exactly two actionable controls, yes and no, for any prompt payload. */
export function renderPrompt(state: WizardState): string {
    const prompt = state.prompt;
    if (!prompt) return "";
    const disabled = state.busy ? " disabled" : "";
    return `<section class="prompt" data-query-id="${escapeHtml(prompt.query_id)}">
  <h2>${escapeHtml(state.topicTitle ?? "")}</h2>
  <p class="prompt-text">${escapeHtml(prompt.text)}</p>
  <div class="prompt-actions">
    <button type="button" class="answer-btn" data-answer="yes"${disabled}>Yes</button>
    <button type="button" class="answer-btn" data-answer="no"${disabled}>No</button>
  </div>
</section>`;
}

export function renderDecision(view: DecisionView): string {
    const verdictClass = view.okCode === 1 ? "approved" : view.okCode === 2 ? "denied" : "open";
    const exceptions = view.exceptions.length
        ? `<h3>Exceptions</h3><ul class="exceptions">${view.exceptions
              .map((e) => `<li>${escapeHtml(e)}</li>`)
              .join("")}</ul>`
        : "";
    const citations = view.citations.length
        ? `<h3>Arguments</h3><ul class="citations">${view.citations
              .map(
                  (c) =>
                      `<li class="citation"><a class="law-link" href="#law-${escapeHtml(c.id)}">${escapeHtml(
                          c.id,
                      )}</a> ${escapeHtml(c.text)}</li>`,
              )
              .join("")}</ul>`
        : "";
    return `<section class="decision verdict-${verdictClass}">
  <h2 class="verdict">${escapeHtml(view.verdict)}</h2>
  <p class="causes">${escapeHtml(view.causes)}</p>
  ${exceptions}
  ${citations}
</section>`;
}

export function renderExplanation(trace: TraceRow[]): string {
    if (!trace.length) {
        return `<section class="explanation"><p class="empty">No rules have fired yet.</p></section>`;
    }
    const rows = trace
        .map(
            (row, i) => `<tr class="trace-row">
  <td>${i + 1}</td>
  <td>${escapeHtml(row.rule)}</td>
  <td>${escapeHtml(row.module)}</td>
  <td>${row.salience}</td>
</tr>`,
        )
        .join("\n");
    return `<section class="explanation">
  <h3>Why</h3>
  <table><thead><tr><th>#</th><th>Rule</th><th>Module</th><th>Salience</th></tr></thead>
  <tbody>${rows}</tbody></table>
</section>`;
}

export function renderAnswerHistory(history: [string, string][]): string {
    if (!history.length) return `<section class="history"></section>`;
    const items = history
        .map(([qid, answer]) => `<li><code>${escapeHtml(qid)}</code> ${escapeHtml(answer)}</li>`)
        .join("");
    return `<section class="history">
  <h3>Answers</h3><ol>${items}</ol>
  <button type="button" class="export-btn">Export answers file</button>
</section>`;
}

export function renderErrorBanner(error: { code: string; message: string } | null): string {
    if (!error) return "";
    return `<div class="error-banner" role="alert">
  <strong>${escapeHtml(error.code)}</strong> ${escapeHtml(error.message)}
  <button type="button" class="retry-btn">Retry</button>
</div>`;
}

export function renderSettingsForm(fields: SettingsField[], errors: Record<string, string> = {}): string {
    const rows = fields
        .map((field) => {
            const error = errors[field.name]
                ? `<span class="field-error">${escapeHtml(errors[field.name] ?? "")}</span>`
                : "";
            if (field.kind === "ordinal-threshold" && field.choices) {
                const options = field.choices
                    .map(
                        (choice) =>
                            `<option value="${escapeHtml(choice)}"${choice === field.display ? " selected" : ""}>${escapeHtml(choice)}</option>`,
                    )
                    .join("");
                return `<label class="settings-field" data-setting="${escapeHtml(field.name)}">
  ${escapeHtml(field.name)}
  <select name="${escapeHtml(field.name)}">${options}</select>${error}
</label>`;
            }
            return `<label class="settings-field" data-setting="${escapeHtml(field.name)}">
  ${escapeHtml(field.name)} (${field.kind})
  <input name="${escapeHtml(field.name)}" value="${escapeHtml(field.display)}">${error}
</label>`;
        })
        .join("\n");
    return `<form class="settings-form">
  <h2>Settings</h2>
  ${rows}
  <button type="submit" class="save-settings-btn">Save</button>
</form>`;
}
