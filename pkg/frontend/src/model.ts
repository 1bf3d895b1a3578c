/**
 * Pure view-model builders.  No decision logic lives here: verdicts,
 * causes and citations are a direct rendering of the API payload.
 */

import type { DecisionPayload, SettingValue } from "./api.js";

export type Verdict = "No decision" | "Approved" | "Denied";

export interface Citation {
    id: string;
    text: string;
}

export interface DecisionView {
    verdict: Verdict;
    okCode: number;
    causes: string;
    exceptions: string[];
    citations: Citation[];
}

export function verdictLabel(okCode: number): Verdict {
    if (okCode === 1) return "Approved";
    if (okCode === 2) return "Denied";
    return "No decision";
}

export function buildDecisionView(decision: DecisionPayload): DecisionView {
    // citations pair link ids with the law texts positionally; a missing
    // text still yields a citation so the count always equals law_links
    const citations = decision.law_links.map((id, i) => ({
        id,
        text: decision.law_texts[i] ?? "",
    }));
    return {
        verdict: verdictLabel(decision.ok_code),
        okCode: decision.ok_code,
        causes: decision.causes,
        exceptions: [...decision.exceptions],
        citations,
    };
}

/** Serialize the answer history as a batch answers file (one yes/no per line). */
export function exportAnswers(history: [string, string][]): string {
    return history.map(([, answer]) => answer).join("\n") + (history.length ? "\n" : "");
}

export interface SettingsField {
    name: string;
    kind: SettingValue["kind"];
    /** current value rendered for an input control */
    display: string;
    /** select options for ordinal thresholds */
    choices?: string[];
}

export function settingsFields(settings: Record<string, SettingValue>): SettingsField[] {
    const fields: SettingsField[] = [];
    for (const [name, value] of Object.entries(settings)) {
        switch (value.kind) {
            case "integer":
                fields.push({ name, kind: value.kind, display: String(value.value) });
                break;
            case "integer-set":
                fields.push({ name, kind: value.kind, display: value.values.join(", ") });
                break;
            case "ordinal-scale":
                fields.push({ name, kind: value.kind, display: value.values.join(", ") });
                break;
            case "ordinal-threshold": {
                const scale = settings[value.scale];
                fields.push({
                    name,
                    kind: value.kind,
                    display: value.value,
                    choices: scale && scale.kind === "ordinal-scale" ? [...scale.values] : [],
                });
                break;
            }
        }
    }
    return fields;
}

/** Parse one form field back into the change payload the API expects. */
export function parseFieldValue(field: SettingsField, raw: string): unknown {
    if (field.kind === "integer") {
        const value = Number.parseInt(raw.trim(), 10);
        if (Number.isNaN(value)) throw new Error(`${field.name}: expected an integer`);
        return value;
    }
    if (field.kind === "integer-set") {
        return raw
            .split(",")
            .map((part) => part.trim())
            .filter((part) => part.length > 0)
            .map((part) => {
                const value = Number.parseInt(part, 10);
                if (Number.isNaN(value)) throw new Error(`${field.name}: expected integers`);
                return value;
            });
    }
    if (field.kind === "ordinal-scale") {
        return raw
            .split(",")
            .map((part) => part.trim())
            .filter((part) => part.length > 0);
    }
    return raw.trim();
}
