// Typed client over the workbench HTTP API. The UI performs no computation
// on scores or verdicts; every state change round-trips through these calls.

export interface InsightSummary {
  insight_id: string;
  summary: string;
  status: string;
}

export interface WorkflowBlock {
  code: string;
  reasoning: string;
  derived_from: string[];
}

export interface WorkflowBundle {
  workflow_id: string;
  insight_id: string;
  blocks: WorkflowBlock[];
  language_hint: string;
}

export interface BlockResult {
  status: string;
  stdout: string;
  stderr: string;
  emitted_artifacts: string[];
}

export interface ExecutionReport {
  workflow_id: string;
  blocks: BlockResult[];
  total_wall_clock: number;
}

export interface Insight {
  insight_id: string;
  summary: string;
  derivation: string;
  grounding_text: string;
  status: string;
}

export interface ValidationRecord {
  insight_id: string;
  verdict: string;
  reason: string | null;
  notes: string;
  reviewer: string;
  decided_at: string;
}

export interface ArtifactRef {
  index: number;
  block: number;
  name: string;
}

export interface InsightDetail {
  insight: Insight;
  bundle: WorkflowBundle | null;
  report: ExecutionReport | null;
  verdict: ValidationRecord | null;
  artifacts: ArtifactRef[];
}

export interface Question {
  question_id: string;
  insight_id: string;
  kind: string;
  filter_status: string;
  flags: string[];
  question?: string;
  answer?: string;
  stem?: string;
  options?: Record<string, string>;
  correct?: string[];
}

export interface BlockPatch {
  block_index: number;
  before: string;
  after: string;
}

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`${status}: ${detail}`);
  }
}

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      // non-JSON error body: keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(private baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async listPending(): Promise<InsightSummary[]> {
    const body = await asJson<{ insights: InsightSummary[] }>(
      await fetch(this.url("/api/insights?status=pending")),
    );
    return body.insights;
  }

  async getInsight(insightId: string): Promise<InsightDetail> {
    return asJson(await fetch(this.url(`/api/insights/${insightId}`)));
  }

  artifactUrl(insightId: string, index: number): string {
    return this.url(`/api/insights/${insightId}/artifacts/${index}`);
  }

  async fetchArtifact(insightId: string, index: number): Promise<Response> {
    return fetch(this.artifactUrl(insightId, index));
  }

  async execute(insightId: string): Promise<{ report_id: string; report: ExecutionReport }> {
    return asJson(
      await fetch(this.url(`/api/insights/${insightId}/execute`), { method: "POST" }),
    );
  }

  async submitVerdict(
    insightId: string,
    verdict: string,
    reason: string | null,
    notes: string,
    reviewer: string,
  ): Promise<{ record_id: string; status: string }> {
    return asJson(
      await fetch(this.url(`/api/insights/${insightId}/verdict`), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ verdict, reason, notes, reviewer }),
      }),
    );
  }

  async submitEdit(
    insightId: string,
    workflowId: string,
    category: string,
    patch: BlockPatch[],
    author: string,
    justification: string | null = null,
  ): Promise<{ bundle_id: string }> {
    return asJson(
      await fetch(this.url(`/api/insights/${insightId}/edits`), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({
          workflow_id: workflowId,
          category,
          patch,
          author,
          justification,
        }),
      }),
    );
  }

  async listQuestions(status: string | null = null): Promise<Question[]> {
    const query = status ? `?status=${encodeURIComponent(status)}` : "";
    const body = await asJson<{ questions: Question[] }>(
      await fetch(this.url(`/api/questions${query}`)),
    );
    return body.questions;
  }

  async submitFlags(
    questionId: string,
    flags: string[],
    reviewer: string,
  ): Promise<{ question_id: string; filter_status: string }> {
    return asJson(
      await fetch(this.url(`/api/questions/${questionId}/flags`), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ flags, reviewer }),
      }),
    );
  }
}
