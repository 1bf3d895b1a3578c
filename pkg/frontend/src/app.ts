/**
 * Browser bootstrap: renders the wizard into #app and routes click events
 * to the state machine.  All state lives in WizardMachine; this file only
 * paints and delegates.
 */

import { AdvisorApi } from "./api.js";
import { buildDecisionView, exportAnswers, parseFieldValue, settingsFields } from "./model.js";
import { WizardMachine } from "./state.js";
import {
    renderAnswerHistory,
    renderBadge,
    renderDecision,
    renderErrorBanner,
    renderExplanation,
    renderPrompt,
    renderSettingsForm,
    renderTopicList,
} from "./views.js";

const api = new AdvisorApi("");
const wizard = new WizardMachine(api);
let showSettings = false;
let settingsErrors: Record<string, string> = {};
let explanationHtml = "";

function paint(): void {
    const root = document.getElementById("app");
    if (!root) return;
    const parts: string[] = [];
    parts.push(
        `<header><h1>Legal advisory consultations</h1>${renderBadge(wizard.state.kbVersion)}
  <button type="button" class="toggle-settings-btn">${showSettings ? "Back" : "Settings"}</button>
</header>`,
    );
    parts.push(renderErrorBanner(wizard.state.error));
    if (showSettings && wizard.catalogue) {
        parts.push(renderSettingsForm(settingsFields(wizard.catalogue.settings), settingsErrors));
    } else if (wizard.state.phase === "selecting" && wizard.catalogue) {
        parts.push(renderTopicList(wizard.catalogue));
    } else if (wizard.state.phase === "prompting") {
        parts.push(renderPrompt(wizard.state));
        parts.push(renderAnswerHistory(wizard.state.answerHistory));
    } else if (wizard.state.phase === "decided" && wizard.state.decision) {
        parts.push(renderDecision(buildDecisionView(wizard.state.decision)));
        parts.push(explanationHtml);
        parts.push(renderAnswerHistory(wizard.state.answerHistory));
        parts.push(`<button type="button" class="new-consultation-btn">New consultation</button>`);
    }
    root.innerHTML = parts.join("\n");
}

async function loadExplanation(): Promise<void> {
    explanationHtml = "";
    const sid = wizard.state.sessionId;
    if (!sid) return;
    try {
        const { trace } = await api.explanation(sid);
        explanationHtml = renderExplanation(trace);
    } catch {
        explanationHtml = "";
    }
}

function download(name: string, content: string): void {
    const blob = new Blob([content], { type: "text/plain" });
    const anchor = document.createElement("a");
    anchor.href = URL.createObjectURL(blob);
    anchor.download = name;
    anchor.click();
    URL.revokeObjectURL(anchor.href);
}

document.addEventListener("click", async (event) => {
    const target = event.target as HTMLElement;
    if (target.closest(".topic-btn")) {
        const id = (target.closest(".topic-btn") as HTMLElement).dataset.topicId;
        if (id) {
            await wizard.startTopic(id);
            if (wizard.state.phase === "decided") await loadExplanation();
            paint();
        }
    } else if (target.closest(".answer-btn")) {
        const answer = (target.closest(".answer-btn") as HTMLElement).dataset.answer;
        if (answer === "yes" || answer === "no") {
            await wizard.answer(answer);
            if (wizard.state.phase === "decided") await loadExplanation();
            paint();
        }
    } else if (target.closest(".retry-btn")) {
        await wizard.refresh();
        paint();
    } else if (target.closest(".export-btn")) {
        download("answers.txt", exportAnswers(wizard.state.answerHistory));
    } else if (target.closest(".toggle-settings-btn")) {
        showSettings = !showSettings;
        settingsErrors = {};
        paint();
    } else if (target.closest(".new-consultation-btn")) {
        wizard.state.phase = "selecting";
        wizard.state.prompt = null;
        wizard.state.decision = null;
        explanationHtml = "";
        await wizard.loadCatalogue();
        paint();
    }
});

document.addEventListener("submit", async (event) => {
    const form = (event.target as HTMLElement).closest(".settings-form");
    if (!form || !wizard.catalogue) return;
    event.preventDefault();
    settingsErrors = {};
    const fields = settingsFields(wizard.catalogue.settings);
    const changes: Record<string, unknown> = {};
    for (const field of fields) {
        const input = form.querySelector<HTMLInputElement | HTMLSelectElement>(
            `[name="${field.name}"]`,
        );
        if (!input) continue;
        try {
            changes[field.name] = parseFieldValue(field, input.value);
        } catch (err) {
            settingsErrors[field.name] = String(err instanceof Error ? err.message : err);
        }
    }
    if (Object.keys(settingsErrors).length === 0) {
        const version = await wizard.saveSettings(changes);
        if (version === undefined && wizard.state.error) {
            // map the server-side rejection onto the field it names
            for (const field of fields) {
                if (wizard.state.error.message.includes(field.name)) {
                    settingsErrors[field.name] = wizard.state.error.message;
                }
            }
        } else {
            await wizard.loadCatalogue();
        }
    }
    paint();
});

(async () => {
    await wizard.loadCatalogue();
    paint();
})();
