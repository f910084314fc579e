import type {
  AssignmentDoc,
  GapSignal,
  LearnerDetail,
  Me,
  NoteDoc,
  QuestionDoc,
  QuizResult,
  SelectionInput,
  SummaryRow,
  TourDoc,
  TourRecord,
} from "./types.js";

/** A domain error from the server, carrying its machine-readable code. */
export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public details?: Record<string, unknown>,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

interface ErrorBody {
  error?: { code?: string; message?: string; details?: Record<string, unknown> };
}

export class ApiClient {
  constructor(public baseUrl: string, private token: string) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(this.baseUrl + path, {
      method,
      headers: {
        Authorization: `Bearer ${this.token}`,
        ...(body === undefined ? {} : { "Content-Type": "application/json" }),
      },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let parsed: ErrorBody = {};
      try {
        parsed = (await response.json()) as ErrorBody;
      } catch {
        // non-JSON error body; fall through to the generic message
      }
      const err = parsed.error ?? {};
      throw new ApiError(
        response.status,
        err.code ?? `HTTP_${response.status}`,
        err.message ?? `request failed with status ${response.status}`,
        err.details,
      );
    }
    return (await response.json()) as T;
  }

  me(): Promise<Me> {
    return this.request("GET", "/me");
  }

  listTours(params: { repo?: string; status?: string; mine?: boolean } = {}): Promise<TourDoc[]> {
    const query = new URLSearchParams();
    if (params.repo) query.set("repo", params.repo);
    if (params.status) query.set("status", params.status);
    if (params.mine) query.set("mine", "true");
    const suffix = query.toString() ? `?${query}` : "";
    return this.request<{ tours: TourDoc[] }>("GET", `/tours${suffix}`)
      .then((body) => body.tours);
  }

  getTour(tourId: string, resolve = false): Promise<TourRecord> {
    const suffix = resolve ? "?resolve=true" : "";
    return this.request("GET", `/tours/${tourId}${suffix}`);
  }

  createTour(tour: TourDoc): Promise<{ tourId: string; revision: number }> {
    return this.request("POST", "/tours", { tour });
  }

  updateTour(tourId: string, expectedRevision: number, tour: TourDoc):
      Promise<{ tourId: string; revision: number }> {
    return this.request("PUT", `/tours/${tourId}`, { expectedRevision, tour });
  }

  publishTour(tourId: string, learnerIds: string[]): Promise<{ tour: TourDoc }> {
    return this.request("POST", `/tours/${tourId}/publish`, { learnerIds });
  }

  generateTour(repo: string, intent: string, selections: SelectionInput[]):
      Promise<{ tourId: string; revision: number; tour: TourDoc }> {
    return this.request("POST", "/generate/tour", { repo, intent, selections });
  }

  generateExploratory(repo: string, selections: SelectionInput[]):
      Promise<{ tourId: string; revision: number; tour: TourDoc }> {
    return this.request("POST", "/generate/exploratory", { repo, selections });
  }

  recordProgress(tourId: string, stepId: string): Promise<AssignmentDoc> {
    return this.request("POST", `/tours/${tourId}/progress`, { stepId });
  }

  submitQuiz(tourId: string, answers: Record<string, number>): Promise<QuizResult> {
    return this.request("POST", `/tours/${tourId}/quiz/submit`, { answers });
  }

  addNote(tourId: string, stepId: string, text: string): Promise<NoteDoc> {
    return this.request("POST", `/tours/${tourId}/steps/${stepId}/notes`, { text });
  }

  listNotes(tourId: string): Promise<NoteDoc[]> {
    return this.request<{ notes: NoteDoc[] }>("GET", `/tours/${tourId}/notes`)
      .then((body) => body.notes);
  }

  askQuestion(tourId: string, stepId: string, text: string): Promise<QuestionDoc> {
    return this.request("POST", `/tours/${tourId}/steps/${stepId}/questions`, { text });
  }

  listQuestions(tourId: string): Promise<QuestionDoc[]> {
    return this.request<{ questions: QuestionDoc[] }>("GET", `/tours/${tourId}/questions`)
      .then((body) => body.questions);
  }

  answerQuestion(questionId: string, text: string): Promise<QuestionDoc> {
    return this.request("POST", `/questions/${questionId}/answer`, { text });
  }

  sendFeedback(tourId: string, rating: number, comment?: string): Promise<unknown> {
    return this.request("POST", `/tours/${tourId}/feedback`,
      comment === undefined ? { rating } : { rating, comment });
  }

  dashboardSummary(repo?: string): Promise<SummaryRow[]> {
    const suffix = repo ? `?repo=${encodeURIComponent(repo)}` : "";
    return this.request<{ tours: SummaryRow[] }>("GET", `/dashboard/summary${suffix}`)
      .then((body) => body.tours);
  }

  learnerDetail(learnerId: string): Promise<LearnerDetail> {
    return this.request("GET", `/dashboard/learners/${learnerId}`);
  }

  coverageGaps(repo?: string): Promise<GapSignal[]> {
    const suffix = repo ? `?repo=${encodeURIComponent(repo)}` : "";
    return this.request<{ gaps: GapSignal[] }>("GET", `/dashboard/gaps${suffix}`)
      .then((body) => body.gaps);
  }
}
