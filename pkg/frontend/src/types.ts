// Mirrors of the server's JSON documents. The client renders these as-is:
// every number and status shown in the UI is server-provided.

export interface RepoRef {
  rootPath: string;
  commitId?: string;
}

export interface AnchorDoc {
  path: string;
  startLine: number;
  endLine: number;
  target: string[];
  before: string[];
  after: string[];
}

export interface StepDoc {
  id: string;
  order: number;
  title: string;
  body: string;
  anchor: AnchorDoc;
  needsEdit: boolean;
}

export interface QuizQuestionDoc {
  id: string;
  stepId: string;
  prompt: string;
  choices: string[];
  answerIndex: number;
}

export interface QuizDoc {
  questions: QuizQuestionDoc[];
}

export interface DialogueLineDoc {
  speaker: string;
  text: string;
}

export interface DialogueDoc {
  lines: DialogueLineDoc[];
}

export interface TourDoc {
  id: string;
  formatVersion: number;
  title: string;
  tourType: "guided-manual" | "guided-ai" | "voice" | "exploratory";
  status: "draft" | "published";
  revision: number;
  author: string;
  repoRef: RepoRef;
  steps: StepDoc[];
  quiz?: QuizDoc;
  dialogue?: DialogueDoc;
  createdAt: string;
  updatedAt: string;
}

/** GET /tours/{id}: the stored record, draft slot included. */
export interface TourRecord {
  tour: TourDoc;
  draft: TourDoc | null;
  provenance: string | null;
  rawProviderOutput: string | null;
  resolution?: ResolvedStep[];
}

export interface ResolutionDoc {
  kind: "exact" | "shifted" | "fuzzy" | "stale";
  score: number;
  ambiguous: boolean;
  newStartLine?: number;
  newEndLine?: number;
  note?: string;
}

/** One step re-located against the current repository files. */
export interface ResolvedStep {
  stepId: string;
  path: string;
  resolution: ResolutionDoc;
  startLine: number;
  endLine: number;
  lines: string[];
  before: string[];
  after: string[];
}

export interface QuizResult {
  score: number;
  wrongStepIds: string[];
}

export interface AssignmentDoc {
  tourId: string;
  learnerId: string;
  assignedAt: string;
  status: "not-started" | "in-progress" | "completed";
  completedStepIds: string[];
}

export interface NoteDoc {
  id: string;
  tourId: string;
  stepId: string;
  authorId: string;
  text: string;
}

export interface QuestionDoc {
  id: string;
  tourId: string;
  stepId: string;
  askerId: string;
  text: string;
  answer: { expertId: string; text: string; answeredAt: string } | null;
  askedAt: string;
}

export interface FeedbackDoc {
  tourId: string;
  learnerId: string;
  rating: number;
  comment?: string;
}

export interface SummaryRow {
  tourId: string;
  title: string;
  assignedCount: number;
  completedCount: number;
  openQuestionCount: number;
  completionRate?: number;
  meanQuizScore?: number;
  feedbackMean?: number;
}

export interface LearnerTourRow {
  tourId: string;
  title: string;
  status: "not-started" | "in-progress" | "completed";
  completedSteps: number;
  totalSteps: number;
  latestQuizScore: number | null;
}

export interface LearnerDetail {
  learnerId: string;
  displayName: string;
  tours: LearnerTourRow[];
}

export interface GapSignal {
  pathPrefix: string;
  exploratoryTourCount: number;
  hasGuidedCoverage: boolean;
}

export interface Me {
  id: string;
  displayName: string;
  roles: Record<string, "expert" | "learner">;
}

export interface SelectionInput {
  path: string;
  startLine: number;
  endLine: number;
}
