// HTML renderers, one per screen. All of them are pure string builders so
// they can be tested without a browser; app.ts attaches the behaviour.
//
// Thin-client rule: nothing here computes a score, a rate, or a status.
// Values arrive from the server and are printed verbatim.

import type {
  GapSignal,
  LearnerDetail,
  QuestionDoc,
  QuizDoc,
  QuizResult,
  ResolvedStep,
  SummaryRow,
  TourDoc,
  TourRecord,
} from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

/** Absent server values render as a dash, never as a made-up number. */
export function cell(value: number | string | null | undefined): string {
  return value === null || value === undefined ? "-" : String(value);
}

export function renderLogin(message = ""): string {
  return `
<section class="login">
  <h1>tourforge</h1>
  ${message ? `<p class="error">${escapeHtml(message)}</p>` : ""}
  <form id="login-form">
    <label>Server URL
      <input name="baseUrl" value="http://127.0.0.1:7340" autocomplete="off">
    </label>
    <label>Access token
      <input name="token" type="password" autocomplete="off">
    </label>
    <button type="submit">Sign in</button>
  </form>
</section>`;
}

export function renderNav(userId: string, isExpert: boolean): string {
  const expertLinks = isExpert
    ? `<a href="#/dashboard">Dashboard</a>`
    : "";
  return `
<nav class="top">
  <a href="#/assigned">My tours</a>
  <a href="#/tours">All tours</a>
  ${expertLinks}
  <span class="who">${escapeHtml(userId)}</span>
  <a href="#/logout" id="logout">Sign out</a>
</nav>`;
}

// ---------------------------------------------------------------------------
// Player
// ---------------------------------------------------------------------------

function codeRow(lineNo: number, text: string, cls: string): string {
  return `<tr class="code-line${cls ? " " + cls : ""}">` +
    `<td class="ln">${lineNo}</td>` +
    `<td class="src">${escapeHtml(text)}</td></tr>`;
}

function codePane(entry: ResolvedStep): string {
  const stale = entry.resolution.kind === "stale";
  const badge = stale
    ? `<span class="badge stale">STALE</span> <span class="stale-note">showing stored code</span>`
    : `<span class="badge ${entry.resolution.kind}">${entry.resolution.kind}</span>`;
  const rows: string[] = [];
  let lineNo = entry.startLine - entry.before.length;
  for (const line of entry.before) {
    rows.push(codeRow(lineNo++, line, "ctx"));
  }
  for (const line of entry.lines) {
    rows.push(codeRow(lineNo++, line, "hl"));
  }
  for (const line of entry.after) {
    rows.push(codeRow(lineNo++, line, "ctx"));
  }
  return `
<div class="code-pane">
  <div class="anchor-head">
    <span class="path">${escapeHtml(entry.path)}:${entry.startLine}-${entry.endLine}</span>
    ${badge}
  </div>
  <table class="code">${rows.join("")}</table>
</div>`;
}

export function renderPlayer(
  tour: TourDoc,
  resolution: ResolvedStep[],
  stepIndex: number,
  completedStepIds: string[],
): string {
  const step = tour.steps[stepIndex];
  const entry = resolution[stepIndex];
  const done = new Set(completedStepIds);
  const items = tour.steps.map((s, i) => {
    const classes = [
      i === stepIndex ? "current" : "",
      done.has(s.id) ? "done" : "",
    ].filter(Boolean).join(" ");
    return `<li class="${classes}" data-step-index="${i}">` +
      `<a href="#/tours/${tour.id}/player/${i}">${escapeHtml(s.title)}</a></li>`;
  });
  const atEnd = stepIndex === tour.steps.length - 1;
  const nextLabel = atEnd ? (tour.quiz ? "Finish &amp; take quiz" : "Finish") : "Next";
  return `
<div class="player" data-tour-id="${tour.id}">
  <aside class="steps">
    <h2>${escapeHtml(tour.title)}</h2>
    <ol id="step-list">${items.join("")}</ol>
  </aside>
  <section class="step">
    <h2>Step ${stepIndex + 1} of ${tour.steps.length}: ${escapeHtml(step.title)}</h2>
    ${codePane(entry)}
    <p class="explanation">${escapeHtml(step.body)}</p>
    <div class="controls">
      <button id="prev-step" ${stepIndex === 0 ? "disabled" : ""}>Previous</button>
      <button id="next-step">${nextLabel}</button>
    </div>
    <details class="note">
      <summary>Note to self</summary>
      <form id="note-form" data-step-id="${step.id}">
        <textarea name="text" rows="3"></textarea>
        <button type="submit">Save note</button>
      </form>
    </details>
    <details class="question">
      <summary>Ask the experts</summary>
      <form id="question-form" data-step-id="${step.id}">
        <textarea name="text" rows="3"></textarea>
        <button type="submit">Ask</button>
      </form>
    </details>
  </section>
</div>`;
}

export function renderDialogue(tour: TourDoc): string {
  if (!tour.dialogue) return "";
  const lines = tour.dialogue.lines.map((line) =>
    `<p class="line ${escapeHtml(line.speaker)}">` +
    `<strong>${escapeHtml(line.speaker)}:</strong> ${escapeHtml(line.text)}</p>`);
  return `<section class="dialogue"><h3>Dialogue transcript</h3>${lines.join("")}</section>`;
}

// ---------------------------------------------------------------------------
// Quiz
// ---------------------------------------------------------------------------

export function renderQuiz(
  tourId: string,
  quiz: QuizDoc,
  questionIndex: number,
  answers: Record<string, number>,
): string {
  const question = quiz.questions[questionIndex];
  const total = quiz.questions.length;
  const chosen = answers[question.id];
  const choices = question.choices.map((choice, i) =>
    `<label class="choice"><input type="radio" name="answer" value="${i}"` +
    `${chosen === i ? " checked" : ""}> ${escapeHtml(choice)}</label>`);
  const answered = quiz.questions.filter((q) => answers[q.id] !== undefined).length;
  const allAnswered = answered === total;
  const last = questionIndex === total - 1;
  return `
<div class="quiz" data-tour-id="${tourId}" data-question-id="${question.id}">
  <h2>Question ${questionIndex + 1} of ${total}</h2>
  <p class="prompt">${escapeHtml(question.prompt)}</p>
  <div class="choices">${choices.join("")}</div>
  <div class="controls">
    <button id="quiz-prev" ${questionIndex === 0 ? "disabled" : ""}>Back</button>
    ${last
      ? `<button id="quiz-submit" ${allAnswered ? "" : "disabled"}>Submit</button>`
      : `<button id="quiz-next">Next</button>`}
  </div>
  <p class="progress">${answered} of ${total} answered</p>
</div>`;
}

export function renderQuizResult(tour: TourDoc, result: QuizResult): string {
  const byId = new Map(tour.steps.map((step, i) => [step.id, { step, i }]));
  const wrong = result.wrongStepIds.map((stepId) => {
    const found = byId.get(stepId);
    if (!found) return "";
    return `<li><a class="wrong-step" href="#/tours/${tour.id}/player/${found.i}">` +
      `${escapeHtml(found.step.title)}</a></li>`;
  });
  const revisit = wrong.length
    ? `<h3>Worth revisiting</h3><ul id="wrong-steps">${wrong.join("")}</ul>`
    : `<p class="all-correct">Everything correct.</p>`;
  return `
<div class="quiz-result" data-tour-id="${tour.id}">
  <h2>Score: ${result.score}</h2>
  ${revisit}
  <form id="feedback-form">
    <label>Rate this tour
      <select name="rating">
        <option value="">choose</option>
        ${[1, 2, 3, 4, 5].map((n) => `<option value="${n}">${n}</option>`).join("")}
      </select>
    </label>
    <input name="comment" placeholder="optional comment">
    <button type="submit">Send feedback</button>
  </form>
</div>`;
}

// ---------------------------------------------------------------------------
// Assigned tours
// ---------------------------------------------------------------------------

export function renderAssigned(detail: LearnerDetail): string {
  const rows = detail.tours.map((row) => `
    <tr data-tour-id="${row.tourId}">
      <td><a href="#/tours/${row.tourId}/player/0">${escapeHtml(row.title)}</a></td>
      <td><span class="chip ${row.status}">${row.status}</span></td>
      <td data-field="steps">${row.completedSteps}/${row.totalSteps}</td>
      <td data-field="latestQuizScore">${cell(row.latestQuizScore)}</td>
    </tr>`);
  return `
<section class="assigned">
  <h1>Assigned to ${escapeHtml(detail.displayName)}</h1>
  <table class="assigned-table">
    <thead><tr><th>Tour</th><th>Status</th><th>Steps</th><th>Latest quiz</th></tr></thead>
    <tbody>${rows.join("")}</tbody>
  </table>
</section>`;
}

export function renderTourList(tours: TourDoc[]): string {
  const rows = tours.map((tour) => `
    <tr data-tour-id="${tour.id}">
      <td><a href="#/tours/${tour.id}/player/0">${escapeHtml(tour.title)}</a></td>
      <td>${tour.tourType}</td>
      <td><span class="chip ${tour.status}">${tour.status}</span></td>
      <td>${tour.revision}</td>
      <td>${escapeHtml(tour.author)}</td>
      <td>${tour.status === "draft"
        ? `<a href="#/tours/${tour.id}/review">review</a>` : ""}</td>
    </tr>`);
  return `
<section class="tours">
  <h1>Tours</h1>
  <table class="tour-table">
    <thead><tr><th>Title</th><th>Type</th><th>Status</th><th>Rev</th><th>Author</th><th></th></tr></thead>
    <tbody>${rows.join("")}</tbody>
  </table>
</section>`;
}

// ---------------------------------------------------------------------------
// Expert review
// ---------------------------------------------------------------------------

export function renderReview(record: TourRecord): string {
  const working = record.draft ?? record.tour;
  const steps = working.steps.map((step, i) => `
    <li class="draft-step" data-step-id="${step.id}">
      ${step.needsEdit ? `<span class="badge needs-edit">needs edit</span>` : ""}
      <input class="step-title" value="${escapeHtml(step.title)}">
      <textarea class="step-body" rows="4">${escapeHtml(step.body)}</textarea>
      <span class="anchor">${escapeHtml(step.anchor.path)}:${step.anchor.startLine}-${step.anchor.endLine}</span>
      <button class="step-up" ${i === 0 ? "disabled" : ""}>Move up</button>
      <button class="step-down" ${i === working.steps.length - 1 ? "disabled" : ""}>Move down</button>
      <button class="step-delete">Delete</button>
    </li>`);
  const questions = (working.quiz?.questions ?? []).map((q) => `
    <li class="draft-question" data-question-id="${q.id}">
      <input class="question-prompt" value="${escapeHtml(q.prompt)}">
      ${q.choices.map((choice, i) =>
        `<input class="question-choice" data-choice-index="${i}" value="${escapeHtml(choice)}">`,
      ).join("")}
      <label>Answer
        <select class="question-answer">
          ${q.choices.map((_, i) =>
            `<option value="${i}" ${i === q.answerIndex ? "selected" : ""}>${i + 1}</option>`,
          ).join("")}
        </select>
      </label>
    </li>`);
  return `
<section class="review" data-tour-id="${working.id}" data-revision="${working.revision}">
  <h1>Review: ${escapeHtml(working.title)}</h1>
  <p class="meta">${working.status} revision ${working.revision}, by ${escapeHtml(working.author)}
    ${record.provenance ? `(${escapeHtml(record.provenance)})` : ""}</p>
  <ol id="draft-steps">${steps.join("")}</ol>
  <h2>Quiz</h2>
  <ol id="draft-questions">${questions.join("")}</ol>
  <div class="actions">
    <button id="save-draft">Save changes</button>
  </div>
  <div class="publish">
    <input id="learner-ids" placeholder="learner ids, comma separated">
    <button id="publish-tour">Publish</button>
  </div>
</section>`;
}

// ---------------------------------------------------------------------------
// Dashboard
// ---------------------------------------------------------------------------

export function renderDashboard(
  rows: SummaryRow[],
  gaps: GapSignal[],
  openQuestions: { tour: TourDoc; question: QuestionDoc }[],
): string {
  const body = rows.map((row) => `
    <tr data-tour-id="${row.tourId}">
      <td data-field="title"><a href="#/tours/${row.tourId}/player/0">${escapeHtml(row.title)}</a></td>
      <td data-field="assignedCount">${cell(row.assignedCount)}</td>
      <td data-field="completedCount">${cell(row.completedCount)}</td>
      <td data-field="completionRate">${cell(row.completionRate)}</td>
      <td data-field="meanQuizScore">${cell(row.meanQuizScore)}</td>
      <td data-field="feedbackMean">${cell(row.feedbackMean)}</td>
      <td data-field="openQuestionCount">${cell(row.openQuestionCount)}</td>
    </tr>`);
  const gapItems = gaps.map((gap) =>
    `<li data-prefix="${escapeHtml(gap.pathPrefix)}">` +
    `<code>${escapeHtml(gap.pathPrefix)}</code>: ` +
    `${gap.exploratoryTourCount} exploratory tours, no guided coverage</li>`);
  const inbox = openQuestions.map(({ tour, question }) => `
    <li class="open-question" data-question-id="${question.id}">
      <p><strong>${escapeHtml(question.askerId)}</strong>
        on <em>${escapeHtml(tour.title)}</em>: ${escapeHtml(question.text)}</p>
      <form class="answer-form" data-question-id="${question.id}">
        <input name="text" placeholder="answer inline">
        <button type="submit">Answer</button>
      </form>
    </li>`);
  return `
<section class="dashboard">
  <h1>Dashboard</h1>
  <table class="summary">
    <thead><tr>
      <th>Tour</th><th>Assigned</th><th>Completed</th><th>Completion rate</th>
      <th>Mean quiz score</th><th>Feedback</th><th>Open questions</th>
    </tr></thead>
    <tbody>${body.join("")}</tbody>
  </table>
  <h2>Coverage gaps</h2>
  ${gaps.length ? `<ul class="gaps">${gapItems.join("")}</ul>`
                : `<p class="no-gaps">No gap signals.</p>`}
  <h2>Open questions</h2>
  ${inbox.length ? `<ul class="inbox">${inbox.join("")}</ul>`
                 : `<p class="no-questions">Inbox empty.</p>`}
</section>`;
}

export function renderError(message: string): string {
  return `<div class="error-banner">${escapeHtml(message)}</div>`;
}
