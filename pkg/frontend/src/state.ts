/**
 * Wizard state machine.  Mirrors the server session after every request;
 * an API failure keeps the answer history and the awaited prompt so the
 * user can retry.  At most one request is in flight per session: controls
 * stay disabled while `busy` is true.
 */

import { AdvisorApi, ApiRequestError } from "./api.js";
import type { CataloguePayload, DecisionPayload, Prompt } from "./api.js";

export type WizardPhase = "selecting" | "prompting" | "decided";

export interface WizardState {
    phase: WizardPhase;
    busy: boolean;
    kbVersion: number | null;
    sessionId: string | null;
    topicId: string | null;
    topicTitle: string | null;
    prompt: Prompt | null;
    decision: DecisionPayload | null;
    answerHistory: [string, string][];
    error: { code: string; message: string } | null;
}

export class WizardMachine {
    state: WizardState = {
        phase: "selecting",
        busy: false,
        kbVersion: null,
        sessionId: null,
        topicId: null,
        topicTitle: null,
        prompt: null,
        decision: null,
        answerHistory: [],
        error: null,
    };

    catalogue: CataloguePayload | null = null;

    constructor(private readonly api: AdvisorApi) {}

    private async guard<T>(work: () => Promise<T>): Promise<T | undefined> {
        if (this.state.busy) return undefined;
        this.state.busy = true;
        this.state.error = null;
        try {
            return await work();
        } catch (err) {
            if (err instanceof ApiRequestError) {
                this.state.error = { code: err.code, message: err.message };
            } else {
                this.state.error = { code: "network", message: String(err) };
            }
            return undefined;
        } finally {
            this.state.busy = false;
        }
    }

    async loadCatalogue(): Promise<void> {
        await this.guard(async () => {
            this.catalogue = await this.api.catalogue();
            this.state.kbVersion = this.catalogue.kb_version;
        });
    }

    async startTopic(topicId: string): Promise<void> {
        await this.guard(async () => {
            const created = await this.api.createSession(topicId);
            this.state.sessionId = created.session_id;
            this.state.kbVersion = created.kb_version;
            this.state.topicId = topicId;
            this.state.topicTitle =
                this.catalogue?.topics.find((t) => t.id === topicId)?.title ?? topicId;
            this.state.answerHistory = [];
            this.applyStep(created);
        });
    }

    /** One button click, one POST. */
    async answer(answer: "yes" | "no"): Promise<void> {
        const { sessionId, prompt } = this.state;
        if (!sessionId || !prompt) return;
        await this.guard(async () => {
            const step = await this.api.answer(sessionId, prompt.query_id, answer);
            // history grows only after the server accepted the answer
            this.state.answerHistory = [...this.state.answerHistory, [prompt.query_id, answer]];
            this.applyStep(step);
        });
    }

    private applyStep(step: { prompt?: Prompt; decision?: DecisionPayload }): void {
        if (step.prompt) {
            this.state.phase = "prompting";
            this.state.prompt = step.prompt;
            this.state.decision = null;
        } else if (step.decision) {
            this.state.phase = "decided";
            this.state.prompt = null;
            this.state.decision = step.decision;
        }
    }

    /** Re-sync from the server after an error, keeping local history. */
    async refresh(): Promise<void> {
        const { sessionId } = this.state;
        if (!sessionId) return;
        await this.guard(async () => {
            const session = await this.api.session(sessionId);
            this.state.kbVersion = session.kb_version;
            this.state.answerHistory = [...session.answer_log];
            this.applyStep(session);
        });
    }

    async saveSettings(changes: Record<string, unknown>): Promise<number | undefined> {
        return await this.guard(async () => {
            const result = await this.api.putSettings(changes);
            this.state.kbVersion = result.version;
            if (this.catalogue) this.catalogue.kb_version = result.version;
            return result.version;
        });
    }
}
