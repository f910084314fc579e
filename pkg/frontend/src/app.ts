// Single-page wiring: hash routes, one render per navigation, and event
// handlers that call the HTTP API. All state of record lives on the server;
// the client keeps only the session (URL + token) and in-flight form state.

import { ApiClient, ApiError } from "./api.js";
import type { Me, QuestionDoc, TourDoc, TourRecord } from "./types.js";
import {
  renderAssigned,
  renderDashboard,
  renderDialogue,
  renderError,
  renderLogin,
  renderNav,
  renderPlayer,
  renderQuiz,
  renderQuizResult,
  renderReview,
  renderTourList,
} from "./views.js";

let client: ApiClient | null = null;
let me: Me | null = null;

// Per-tour quiz form state; cleared when the quiz is submitted.
const quizState = new Map<string, { index: number; answers: Record<string, number> }>();
// Working copy for the review editor (reorder/delete before saving).
let reviewDoc: TourDoc | null = null;

function appRoot(): HTMLElement {
  return document.querySelector("#app") as HTMLElement;
}

function setContent(html: string): void {
  const nav = me && client ? renderNav(me.id, isExpert()) : "";
  appRoot().innerHTML = nav + html;
}

function isExpert(): boolean {
  return Object.values(me?.roles ?? {}).includes("expert");
}

function showError(err: unknown): void {
  const message = err instanceof ApiError
    ? `${err.code}: ${err.message}`
    : String(err);
  const banner = document.createElement("div");
  banner.innerHTML = renderError(message);
  appRoot().prepend(banner);
}

function restoreSession(): void {
  const baseUrl = sessionStorage.getItem("baseUrl");
  const token = sessionStorage.getItem("token");
  const user = sessionStorage.getItem("me");
  if (baseUrl && token && user) {
    client = new ApiClient(baseUrl, token);
    me = JSON.parse(user) as Me;
  }
}

// ---------------------------------------------------------------------------
// Routes
// ---------------------------------------------------------------------------

async function route(): Promise<void> {
  const hash = location.hash || "#/assigned";
  const parts = hash.slice(2).split("/");
  if (!client || !me) {
    setContent(renderLogin());
    wireLogin();
    return;
  }
  try {
    if (parts[0] === "logout") {
      sessionStorage.clear();
      client = null;
      me = null;
      location.hash = "#/login";
      return;
    }
    if (parts[0] === "tours" && parts.length === 1) {
      setContent(renderTourList(await client.listTours()));
    } else if (parts[0] === "tours" && parts[2] === "player") {
      await showPlayer(parts[1], Number(parts[3] ?? 0));
    } else if (parts[0] === "tours" && parts[2] === "quiz") {
      await showQuiz(parts[1]);
    } else if (parts[0] === "tours" && parts[2] === "review") {
      await showReview(parts[1]);
    } else if (parts[0] === "dashboard") {
      await showDashboard();
    } else {
      setContent(renderAssigned(await client.learnerDetail(me.id)));
    }
  } catch (err) {
    setContent("");
    showError(err);
  }
}

async function showPlayer(tourId: string, stepIndex: number): Promise<void> {
  const record = await client!.getTour(tourId, true);
  // Play the visible version; pending draft edits belong to the review screen.
  const tour = record.tour;
  const index = Math.max(0, Math.min(stepIndex, tour.steps.length - 1));
  let completed: string[] = [];
  try {
    const detail = await client!.learnerDetail(me!.id);
    const row = detail.tours.find((r) => r.tourId === tourId);
    completed = row ? tour.steps.slice(0, row.completedSteps).map((s) => s.id) : [];
  } catch {
    // not assigned (e.g. an expert previewing); fine, nothing is marked done
  }
  setContent(renderPlayer(tour, record.resolution ?? [], index, completed)
    + renderDialogue(tour));
  wirePlayer(tour, index);
}

async function showQuiz(tourId: string): Promise<void> {
  const record = await client!.getTour(tourId);
  const tour = record.tour;
  if (!tour.quiz) {
    setContent(renderError("this tour has no quiz"));
    return;
  }
  const state = quizState.get(tourId) ?? { index: 0, answers: {} };
  quizState.set(tourId, state);
  setContent(renderQuiz(tourId, tour.quiz, state.index, state.answers));
  wireQuiz(tour, state);
}

async function showReview(tourId: string): Promise<void> {
  const record = await client!.getTour(tourId);
  reviewDoc = structuredClone(record.draft ?? record.tour);
  setContent(renderReview({ ...record, draft: reviewDoc }));
  wireReview(tourId, record);
}

async function showDashboard(): Promise<void> {
  const [rows, gaps, tours] = await Promise.all([
    client!.dashboardSummary(),
    client!.coverageGaps(),
    client!.listTours({ status: "published" }),
  ]);
  const openQuestions: { tour: TourDoc; question: QuestionDoc }[] = [];
  for (const tour of tours) {
    const questions = await client!.listQuestions(tour.id);
    for (const question of questions) {
      if (question.answer === null) openQuestions.push({ tour, question });
    }
  }
  setContent(renderDashboard(rows, gaps, openQuestions));
  wireDashboard();
}

// ---------------------------------------------------------------------------
// Handlers
// ---------------------------------------------------------------------------

function wireLogin(): void {
  const form = document.querySelector("#login-form") as HTMLFormElement | null;
  form?.addEventListener("submit", async (event) => {
    event.preventDefault();
    const data = new FormData(form);
    const candidate = new ApiClient(String(data.get("baseUrl")), String(data.get("token")));
    try {
      const user = await candidate.me();
      client = candidate;
      me = user;
      sessionStorage.setItem("baseUrl", candidate.baseUrl);
      sessionStorage.setItem("token", String(data.get("token")));
      sessionStorage.setItem("me", JSON.stringify(user));
      location.hash = "#/assigned";
    } catch (err) {
      setContent(renderLogin(err instanceof ApiError ? err.message : String(err)));
      wireLogin();
    }
  });
}

function wirePlayer(tour: TourDoc, index: number): void {
  document.querySelector("#prev-step")?.addEventListener("click", () => {
    location.hash = `#/tours/${tour.id}/player/${index - 1}`;
  });
  document.querySelector("#next-step")?.addEventListener("click", async () => {
    try {
      // Advancing is what marks the step complete.
      await client!.recordProgress(tour.id, tour.steps[index].id);
    } catch (err) {
      if (!(err instanceof ApiError && err.code === "NOT_ASSIGNED")) {
        showError(err);
        return;
      }
    }
    if (index + 1 < tour.steps.length) {
      location.hash = `#/tours/${tour.id}/player/${index + 1}`;
    } else if (tour.quiz) {
      location.hash = `#/tours/${tour.id}/quiz`;
    } else {
      location.hash = "#/assigned";
    }
  });
  document.querySelector("#note-form")?.addEventListener("submit", async (event) => {
    event.preventDefault();
    const form = event.currentTarget as HTMLFormElement;
    const text = String(new FormData(form).get("text") ?? "").trim();
    if (!text) return;
    try {
      await client!.addNote(tour.id, form.dataset.stepId!, text);
      form.reset();
    } catch (err) {
      showError(err);
    }
  });
  document.querySelector("#question-form")?.addEventListener("submit", async (event) => {
    event.preventDefault();
    const form = event.currentTarget as HTMLFormElement;
    const text = String(new FormData(form).get("text") ?? "").trim();
    if (!text) return;
    try {
      await client!.askQuestion(tour.id, form.dataset.stepId!, text);
      form.reset();
    } catch (err) {
      showError(err);
    }
  });
}

function wireQuiz(tour: TourDoc, state: { index: number; answers: Record<string, number> }): void {
  const question = tour.quiz!.questions[state.index];
  document.querySelectorAll('input[name="answer"]').forEach((input) => {
    input.addEventListener("change", () => {
      state.answers[question.id] = Number((input as HTMLInputElement).value);
      setContent(renderQuiz(tour.id, tour.quiz!, state.index, state.answers));
      wireQuiz(tour, state);
    });
  });
  document.querySelector("#quiz-prev")?.addEventListener("click", () => {
    state.index -= 1;
    setContent(renderQuiz(tour.id, tour.quiz!, state.index, state.answers));
    wireQuiz(tour, state);
  });
  document.querySelector("#quiz-next")?.addEventListener("click", () => {
    state.index += 1;
    setContent(renderQuiz(tour.id, tour.quiz!, state.index, state.answers));
    wireQuiz(tour, state);
  });
  document.querySelector("#quiz-submit")?.addEventListener("click", async () => {
    try {
      const result = await client!.submitQuiz(tour.id, state.answers);
      quizState.delete(tour.id);
      setContent(renderQuizResult(tour, result));
      wireQuizResult(tour);
    } catch (err) {
      showError(err);
    }
  });
}

function wireQuizResult(tour: TourDoc): void {
  document.querySelector("#feedback-form")?.addEventListener("submit", async (event) => {
    event.preventDefault();
    const form = event.currentTarget as HTMLFormElement;
    const data = new FormData(form);
    const rating = Number(data.get("rating"));
    if (!rating) return;
    const comment = String(data.get("comment") ?? "").trim();
    try {
      await client!.sendFeedback(tour.id, rating, comment || undefined);
      form.innerHTML = "<p>Thanks for the feedback.</p>";
    } catch (err) {
      showError(err);
    }
  });
}

function collectReviewEdits(): void {
  if (!reviewDoc) return;
  document.querySelectorAll("#draft-steps .draft-step").forEach((item) => {
    const stepId = (item as HTMLElement).dataset.stepId;
    const step = reviewDoc!.steps.find((s) => s.id === stepId);
    if (!step) return;
    step.title = (item.querySelector(".step-title") as HTMLInputElement).value;
    const body = (item.querySelector(".step-body") as HTMLTextAreaElement).value;
    if (body !== step.body) {
      step.body = body;
      step.needsEdit = false;
    }
  });
  document.querySelectorAll("#draft-questions .draft-question").forEach((item) => {
    const questionId = (item as HTMLElement).dataset.questionId;
    const question = reviewDoc!.quiz?.questions.find((q) => q.id === questionId);
    if (!question) return;
    question.prompt = (item.querySelector(".question-prompt") as HTMLInputElement).value;
    item.querySelectorAll(".question-choice").forEach((choiceInput) => {
      const i = Number((choiceInput as HTMLElement).dataset.choiceIndex);
      question.choices[i] = (choiceInput as HTMLInputElement).value;
    });
    question.answerIndex = Number(
      (item.querySelector(".question-answer") as HTMLSelectElement).value);
  });
}

function wireReview(tourId: string, record: TourRecord): void {
  const rerender = () => {
    setContent(renderReview({ ...record, draft: reviewDoc }));
    wireReview(tourId, record);
  };
  document.querySelectorAll(".step-up, .step-down, .step-delete").forEach((button) => {
    button.addEventListener("click", () => {
      collectReviewEdits();
      const item = (button as HTMLElement).closest(".draft-step") as HTMLElement;
      const steps = reviewDoc!.steps;
      const i = steps.findIndex((s) => s.id === item.dataset.stepId);
      if (button.classList.contains("step-delete")) {
        steps.splice(i, 1);
      } else {
        const j = button.classList.contains("step-up") ? i - 1 : i + 1;
        [steps[i], steps[j]] = [steps[j], steps[i]];
      }
      steps.forEach((step, order) => { step.order = order; });
      rerender();
    });
  });
  document.querySelector("#save-draft")?.addEventListener("click", async () => {
    collectReviewEdits();
    try {
      const saved = await client!.updateTour(tourId, reviewDoc!.revision, reviewDoc!);
      reviewDoc!.revision = saved.revision;
      rerender();
    } catch (err) {
      if (err instanceof ApiError && err.code === "CONFLICT") {
        if (confirm("Someone else saved a newer revision. Reload their version?")) {
          location.reload();
        }
        return;
      }
      showError(err);
    }
  });
  document.querySelector("#publish-tour")?.addEventListener("click", async () => {
    const raw = (document.querySelector("#learner-ids") as HTMLInputElement).value;
    const learnerIds = raw.split(",").map((s) => s.trim()).filter(Boolean);
    try {
      await client!.publishTour(tourId, learnerIds);
      location.hash = "#/tours";
    } catch (err) {
      showError(err);
    }
  });
}

function wireDashboard(): void {
  document.querySelectorAll(".answer-form").forEach((form) => {
    form.addEventListener("submit", async (event) => {
      event.preventDefault();
      const element = form as HTMLFormElement;
      const text = String(new FormData(element).get("text") ?? "").trim();
      if (!text) return;
      try {
        await client!.answerQuestion(element.dataset.questionId!, text);
        await route();
      } catch (err) {
        showError(err);
      }
    });
  });
}

// ---------------------------------------------------------------------------

window.addEventListener("hashchange", () => { void route(); });
window.addEventListener("DOMContentLoaded", () => {
  restoreSession();
  void route();
});
