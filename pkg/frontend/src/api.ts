/**
 * Typed client for the advisor HTTP API.  The wizard never computes
 * decisions locally; everything it shows comes from these endpoints.
 */

export interface Prompt {
    query_id: string;
    text: string;
    options: string[];
}

export interface DecisionPayload {
    ok_code: number;
    causes: string;
    law_texts: string[];
    law_links: string[];
    exceptions: string[];
}

export interface StepPayload {
    prompt?: Prompt;
    decision?: DecisionPayload;
}

export interface CreateSessionPayload extends StepPayload {
    session_id: string;
    kb_version: number;
}

export interface TopicInfo {
    id: string;
    title: string;
    regulation_id: string;
    queries: Record<string, string>;
}

export type SettingValue =
    | { kind: "integer"; value: number }
    | { kind: "integer-set"; values: number[] }
    | { kind: "ordinal-scale"; values: string[] }
    | { kind: "ordinal-threshold"; scale: string; value: string };

export interface CataloguePayload {
    kb_version: number;
    regulations: { id: string; name: string; declared_rule_count: number }[];
    topics: TopicInfo[];
    settings: Record<string, SettingValue>;
}

export interface TraceRow {
    rule: string;
    module: string;
    salience: number;
    bindings: Record<string, unknown>;
    facts: string[];
}

export interface SessionState {
    session_id: string;
    topic_id: string;
    kb_version: number;
    status: string;
    answer_log: [string, string][];
    prompt?: Prompt;
    decision?: DecisionPayload;
}

export class ApiRequestError extends Error {
    constructor(
        readonly status: number,
        readonly code: string,
        message: string,
    ) {
        super(message);
        this.name = "ApiRequestError";
    }
}

async function parseError(response: Response): Promise<ApiRequestError> {
    let code = "http_error";
    let message = `${response.status} ${response.statusText}`;
    try {
        const body = await response.json();
        if (body && typeof body.code === "string") code = body.code;
        if (body && typeof body.message === "string") message = body.message;
    } catch {
        /* non-JSON error body; keep the status text */
    }
    return new ApiRequestError(response.status, code, message);
}

export class AdvisorApi {
    constructor(readonly baseUrl: string = "") {}

    private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
        const response = await fetch(this.baseUrl + path, {
            method,
            headers: body === undefined ? {} : { "content-type": "application/json" },
            body: body === undefined ? undefined : JSON.stringify(body),
        });
        if (!response.ok) {
            throw await parseError(response);
        }
        return (await response.json()) as T;
    }

    health(): Promise<{ status: string; kb_version: number }> {
        return this.request("GET", "/api/health");
    }

    catalogue(): Promise<CataloguePayload> {
        return this.request("GET", "/api/catalogue");
    }

    createSession(topicId: string): Promise<CreateSessionPayload> {
        return this.request("POST", "/api/sessions", { topic_id: topicId });
    }

    answer(sessionId: string, queryId: string, answer: string): Promise<StepPayload> {
        return this.request("POST", `/api/sessions/${sessionId}/answers`, {
            query_id: queryId,
            answer,
        });
    }

    session(sessionId: string): Promise<SessionState> {
        return this.request("GET", `/api/sessions/${sessionId}`);
    }

    explanation(sessionId: string): Promise<{ trace: TraceRow[] }> {
        return this.request("GET", `/api/sessions/${sessionId}/explanation`);
    }

    putSettings(changes: Record<string, unknown>): Promise<{ version: number }> {
        return this.request("PUT", "/api/settings", { changes });
    }
}
