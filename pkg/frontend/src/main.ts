// DOM wiring: a hash-routed single page over the workbench API. All state
// lives on the server; each navigation or submit re-fetches.

import { ApiClient, ApiError } from "./api.js";
import {
  FlagFormState,
  VerdictFormState,
  canSubmitFlags,
  canSubmitVerdict,
  renderErrorBanner,
  renderInsightDetail,
  renderQueue,
  renderQuestionRow,
  renderVerdict,
  renderVerdictForm,
} from "./views.js";

const api = new ApiClient("");
const root = document.getElementById("app") as HTMLElement;

function navTemplate(): string {
  return `<nav>
    <a href="#/">pending insights</a>
    <a href="#/questions">question flags</a>
  </nav>`;
}

async function showQueue(): Promise<void> {
  try {
    const items = await api.listPending();
    root.innerHTML = `${navTemplate()}<h1>pending insights</h1>${renderQueue(items)}`;
  } catch (error) {
    root.innerHTML = `${navTemplate()}${renderErrorBanner(describe(error))}`;
    wireRetry(showQueue);
  }
}

async function showInsight(insightId: string): Promise<void> {
  const formState: VerdictFormState = {
    verdict: null,
    reason: null,
    notes: "",
    reviewer: "",
  };
  let serverError: string | null = null;

  async function draw(): Promise<void> {
    try {
      const detail = await api.getInsight(insightId);
      root.innerHTML = `
        ${navTemplate()}
        ${renderInsightDetail(detail, (index) => api.artifactUrl(insightId, index))}
        <section class="verdict-box">
          <h3>verdict</h3>
          ${detail.verdict ? renderVerdict(detail.verdict) : ""}
          ${renderVerdictForm(formState, serverError)}
        </section>`;
      wireVerdictForm(draw);
      wireExecute(draw);
    } catch (error) {
      root.innerHTML = `${navTemplate()}${renderErrorBanner(describe(error))}`;
      wireRetry(draw);
    }
  }

  function wireVerdictForm(redraw: () => Promise<void>): void {
    const form = root.querySelector<HTMLFormElement>('form[data-form="verdict"]');
    if (!form) return;
    form.addEventListener("change", () => {
      const verdict = form.querySelector<HTMLInputElement>('input[name="verdict"]:checked');
      const reason = form.querySelector<HTMLInputElement>('input[name="reason"]:checked');
      formState.verdict = (verdict?.value as VerdictFormState["verdict"]) ?? null;
      formState.reason = reason?.value ?? null;
      formState.notes = form.querySelector<HTMLTextAreaElement>('textarea[name="notes"]')!.value;
      formState.reviewer = form.querySelector<HTMLInputElement>('input[name="reviewer"]')!.value;
      const submit = form.querySelector<HTMLButtonElement>('button[type="submit"]')!;
      submit.disabled = !canSubmitVerdict(formState);
      form.querySelector<HTMLFieldSetElement>("fieldset.reasons")!.disabled =
        formState.verdict !== "invalidated";
    });
    form.addEventListener("submit", async (event) => {
      event.preventDefault();
      if (!canSubmitVerdict(formState)) return; // blocked client-side
      try {
        await api.submitVerdict(
          insightId, formState.verdict!, formState.reason, formState.notes, formState.reviewer,
        );
        window.location.hash = "#/";
      } catch (error) {
        serverError = describe(error); // surfaced verbatim, no optimistic state
        await redraw();
      }
    });
  }

  function wireExecute(redraw: () => Promise<void>): void {
    const button = root.querySelector<HTMLButtonElement>('button[data-action="execute"]');
    if (!button) return;
    button.addEventListener("click", async () => {
      button.disabled = true;
      try {
        await api.execute(insightId);
      } catch (error) {
        serverError = describe(error);
      }
      await redraw();
    });
  }

  await draw();
}

async function showQuestions(): Promise<void> {
  try {
    const questions = await api.listQuestions("auto-kept");
    const states = new Map<string, FlagFormState>();
    const bodies = questions
      .map((question) => {
        const state: FlagFormState = { flags: [], confirmed: false };
        states.set(question.question_id, state);
        return renderQuestionRow(question, state);
      })
      .join("");
    root.innerHTML = `${navTemplate()}<h1>auto-kept questions</h1>${
      bodies || `<p class="empty">nothing awaiting manual review</p>`}`;
    for (const article of root.querySelectorAll<HTMLElement>("article.question")) {
      wireFlagForm(article, states);
    }
  } catch (error) {
    root.innerHTML = `${navTemplate()}${renderErrorBanner(describe(error))}`;
    wireRetry(showQuestions);
  }
}

function wireFlagForm(article: HTMLElement, states: Map<string, FlagFormState>): void {
  const questionId = article.dataset.question!;
  const state = states.get(questionId)!;
  const form = article.querySelector<HTMLFormElement>('form[data-form="flags"]')!;
  form.addEventListener("change", () => {
    state.flags = Array.from(
      form.querySelectorAll<HTMLInputElement>('input[name="flag"]:checked'),
    ).map((box) => box.value);
    state.confirmed = form.querySelector<HTMLInputElement>('input[name="confirm"]')!.checked;
    form.querySelector<HTMLButtonElement>('button[type="submit"]')!.disabled =
      !canSubmitFlags(state);
  });
  form.addEventListener("submit", async (event) => {
    event.preventDefault();
    if (!canSubmitFlags(state)) return;
    try {
      await api.submitFlags(questionId, state.confirmed ? [] : state.flags, "reviewer-ui");
      await showQuestions();
    } catch (error) {
      article.insertAdjacentHTML("beforeend", renderErrorBanner(describe(error)));
    }
  });
}

function wireRetry(again: () => Promise<void>): void {
  root.querySelector<HTMLButtonElement>('button[data-action="retry"]')
    ?.addEventListener("click", () => void again());
}

function describe(error: unknown): string {
  if (error instanceof ApiError) return `server error ${error.status}: ${error.detail}`;
  return `workbench unreachable: ${String(error)}`;
}

async function route(): Promise<void> {
  const hash = window.location.hash || "#/";
  const insightMatch = hash.match(/^#\/insight\/(.+)$/);
  if (insightMatch) {
    await showInsight(decodeURIComponent(insightMatch[1]));
  } else if (hash === "#/questions") {
    await showQuestions();
  } else {
    await showQueue();
  }
}

window.addEventListener("hashchange", () => void route());
void route();
