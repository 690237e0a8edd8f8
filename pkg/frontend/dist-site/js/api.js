// Typed client over the workbench HTTP API. The UI performs no computation
// on scores or verdicts; every state change round-trips through these calls.
export class ApiError extends Error {
    constructor(status, detail) {
        super(`${status}: ${detail}`);
        this.status = status;
        this.detail = detail;
    }
}
async function asJson(response) {
    if (!response.ok) {
        let detail = response.statusText;
        try {
            const body = await response.json();
            if (body && typeof body.detail === "string")
                detail = body.detail;
        }
        catch {
            // non-JSON error body: keep the status text
        }
        throw new ApiError(response.status, detail);
    }
    return (await response.json());
}
export class ApiClient {
    constructor(baseUrl = "") {
        this.baseUrl = baseUrl;
    }
    url(path) {
        return `${this.baseUrl}${path}`;
    }
    async listPending() {
        const body = await asJson(await fetch(this.url("/api/insights?status=pending")));
        return body.insights;
    }
    async getInsight(insightId) {
        return asJson(await fetch(this.url(`/api/insights/${insightId}`)));
    }
    artifactUrl(insightId, index) {
        return this.url(`/api/insights/${insightId}/artifacts/${index}`);
    }
    async fetchArtifact(insightId, index) {
        return fetch(this.artifactUrl(insightId, index));
    }
    async execute(insightId) {
        return asJson(await fetch(this.url(`/api/insights/${insightId}/execute`), { method: "POST" }));
    }
    async submitVerdict(insightId, verdict, reason, notes, reviewer) {
        return asJson(await fetch(this.url(`/api/insights/${insightId}/verdict`), {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify({ verdict, reason, notes, reviewer }),
        }));
    }
    async submitEdit(insightId, workflowId, category, patch, author, justification = null) {
        return asJson(await fetch(this.url(`/api/insights/${insightId}/edits`), {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify({
                workflow_id: workflowId,
                category,
                patch,
                author,
                justification,
            }),
        }));
    }
    async listQuestions(status = null) {
        const query = status ? `?status=${encodeURIComponent(status)}` : "";
        const body = await asJson(await fetch(this.url(`/api/questions${query}`)));
        return body.questions;
    }
    async submitFlags(questionId, flags, reviewer) {
        return asJson(await fetch(this.url(`/api/questions/${questionId}/flags`), {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify({ flags, reviewer }),
        }));
    }
}
