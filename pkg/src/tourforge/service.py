"""Scoring, dashboard aggregates, and the HTTP facade.

The pure functions at the top are the arithmetic contracts (quiz scoring,
per-tour stats, coverage-gap signals, amortized authoring cost).  The app
factory below wires them, the store, and the generation pipelines into a
JSON-over-HTTP API guarded by bearer-token auth.  Endpoints stay thin: every
state change is one store or pipeline call, so behavior can be contract-tested
through either path.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import replace
from pathlib import Path

from fastapi import Body, Depends, FastAPI, Query, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import genpipe, voice
from .anchors import STALE, AnchorResolution, resolve_anchor, reanchor_tour, split_lines
from .errors import (
    ForbiddenRoleError,
    InvalidCountError,
    InvalidTourError,
    MalformedError,
    MissingAnswerError,
    TourForgeError,
    UnknownEntityError,
    UnknownQuestionError,
)
from .model import Tour, validate_tour
from .store import COMPLETED, Store, User, open_store

# Exploratory tours under one prefix before it signals a documentation gap.
GAP_THRESHOLD = 2
# Parallel in-flight generation requests, protecting remote-provider quotas.
GENERATION_SLOTS = 4

DEFAULT_LISTEN = "127.0.0.1:7340"


# ---------------------------------------------------------------------------
# Scoring and aggregates
# ---------------------------------------------------------------------------

def quiz_score(quiz, answers: dict, step_order=None) -> dict:
    """Grade one attempt: integer percent (round half up) plus wrong steps.

    ``wrongStepIds`` is deduplicated and ordered by ``step_order`` when given
    (pass the tour's step ids), else by first appearance among the questions.
    """
    if not quiz.questions:
        raise ValueError("quiz has no questions")
    known = [q.id for q in quiz.questions]
    unknown = sorted(set(answers) - set(known))
    if unknown:
        raise UnknownQuestionError(
            f"answers reference unknown questions: {', '.join(unknown)}",
            questionIds=unknown)
    missing = [q_id for q_id in known if q_id not in answers]
    if missing:
        raise MissingAnswerError(
            f"{len(missing)} of {len(known)} questions unanswered",
            questionIds=missing)
    total = len(quiz.questions)
    correct = sum(1 for q in quiz.questions if answers[q.id] == q.answer_index)
    wrong_steps = []
    for question in quiz.questions:
        if answers[question.id] != question.answer_index \
                and question.step_id not in wrong_steps:
            wrong_steps.append(question.step_id)
    if step_order is not None:
        position = {step_id: i for i, step_id in enumerate(step_order)}
        wrong_steps.sort(key=lambda s: position.get(s, len(position)))
    # integer round-half-up of 100 * correct / total
    score = (200 * correct + total) // (2 * total)
    return {"score": score, "wrongStepIds": wrong_steps}


def dashboard_summary(store: Store, repo_root: str | None = None) -> list:
    """Per-tour stats for every published, assignable (non-exploratory) tour."""
    out = []
    for tour in store.list_tours(repo_root=repo_root, status="published"):
        if tour.tour_type == "exploratory":
            continue
        assignments = store.list_assignments(tour_id=tour.id)
        completed = sum(1 for a in assignments if a["status"] == COMPLETED)
        entry = {
            "tourId": tour.id,
            "title": tour.title,
            "assignedCount": len(assignments),
            "completedCount": completed,
            "openQuestionCount": sum(
                1 for q in store.questions_for(tour.id) if q["answer"] is None),
        }
        if assignments:
            entry["completionRate"] = completed / len(assignments)
        assigned_ids = {a["learnerId"] for a in assignments}
        latest = store.latest_attempts(tour.id)
        scores = [attempt["score"] for learner, attempt in latest.items()
                  if learner in assigned_ids]
        if scores:
            entry["meanQuizScore"] = round(sum(scores) / len(scores), 1)
        ratings = [f["rating"] for f in store.feedback_for(tour.id)]
        if ratings:
            entry["feedbackMean"] = round(sum(ratings) / len(ratings), 1)
        out.append(entry)
    return sorted(out, key=lambda e: e["tourId"])


def learner_detail(store: Store, learner_id: str) -> dict:
    """One learner's standing on every tour assigned to them."""
    user = store.get_user(learner_id)
    tours = []
    for assignment in store.list_assignments(learner_id=learner_id):
        tour = store.get_tour(assignment["tourId"])
        attempt = store.latest_attempts(tour.id).get(learner_id)
        tours.append({
            "tourId": tour.id,
            "title": tour.title,
            "status": assignment["status"],
            "completedSteps": len(assignment["completedStepIds"]),
            "totalSteps": len(tour.steps),
            "latestQuizScore": attempt["score"] if attempt else None,
        })
    return {"learnerId": learner_id, "displayName": user.display_name,
            "tours": tours}


def _gap_prefix(path: str) -> str:
    """Group key for coverage signals: up to two directory components."""
    parts = path.split("/")[:-1]
    if not parts:
        return path
    return "/".join(parts[:2])


def _most_visited_path(tour: Tour) -> str:
    counts: dict[str, int] = {}
    for step in tour.steps:
        counts[step.anchor.path] = counts.get(step.anchor.path, 0) + 1
    best = max(counts.values())
    for step in tour.steps:  # ties go to the earliest-visited path
        if counts[step.anchor.path] == best:
            return step.anchor.path
    raise AssertionError("unreachable: tours always have steps")


def coverage_gaps(store: Store, repo_root: str | None = None) -> list:
    """Prefixes that several people explored alone, with no guided tour.

    Each published exploratory tour is grouped under the two-component
    directory prefix of its most-visited anchor path; a prefix signals when
    at least GAP_THRESHOLD exploratory tours sit there and no published
    guided tour anchors under it.
    """
    published = store.list_tours(repo_root=repo_root, status="published")
    group_counts: dict[str, int] = {}
    for tour in published:
        if tour.tour_type != "exploratory" or not tour.steps:
            continue
        prefix = _gap_prefix(_most_visited_path(tour))
        group_counts[prefix] = group_counts.get(prefix, 0) + 1
    guided_paths = {step.anchor.path
                    for tour in published if tour.tour_type != "exploratory"
                    for step in tour.steps}
    signals = []
    for prefix, count in sorted(group_counts.items()):
        covered = any(p == prefix or p.startswith(prefix + "/")
                      for p in guided_paths)
        if count >= GAP_THRESHOLD and not covered:
            signals.append({"pathPrefix": prefix,
                            "exploratoryTourCount": count,
                            "hasGuidedCoverage": False})
    return signals


def amortized_expert_minutes(authoring_minutes, learner_count) -> float:
    """Expert cost per learner: one authoring effort split across N players."""
    if isinstance(learner_count, bool) or not isinstance(learner_count, int) \
            or learner_count < 1:
        raise InvalidCountError(
            f"learner count must be an integer >= 1, got {learner_count!r}")
    if authoring_minutes <= 0:
        raise InvalidCountError(
            f"authoring minutes must be positive, got {authoring_minutes!r}")
    return authoring_minutes / learner_count


# ---------------------------------------------------------------------------
# Repo file access
# ---------------------------------------------------------------------------

def load_file_tree(root) -> dict:
    """Text files under root, keyed by posix-relative path.

    Dotted directories (.git and friends) and undecodable files are skipped;
    anchors cannot target them anyway.
    """
    root = Path(root)
    tree: dict[str, str] = {}
    if not root.is_dir():
        return tree
    for path in sorted(root.rglob("*")):
        if not path.is_file():
            continue
        rel = path.relative_to(root).as_posix()
        if any(part.startswith(".") for part in rel.split("/")):
            continue
        try:
            tree[rel] = path.read_text(encoding="utf-8")
        except (UnicodeDecodeError, OSError):
            continue
    return tree


def listen_address() -> tuple[str, int]:
    raw = os.environ.get("TOURFORGE_LISTEN", DEFAULT_LISTEN)
    host, _, port = raw.rpartition(":")
    return host or "127.0.0.1", int(port)


def _load_tokens(path=None) -> dict:
    """Token -> userId map from TOURFORGE_TOKENS_FILE (empty if unset)."""
    path = path or os.environ.get("TOURFORGE_TOKENS_FILE")
    if not path:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# HTTP facade
# ---------------------------------------------------------------------------

STATUS_BY_CODE = {
    "CONFLICT": 409,
    "FORBIDDEN_ROLE": 403,
    "NOT_ASSIGNED": 403,
    "UNKNOWN_ENTITY": 404,
    "UNKNOWN_STEP": 404,
    "UNKNOWN_QUESTION": 404,
    "PROVIDER_UNREACHABLE": 502,
    "PROVIDER_CONFIG": 500,
}  # anything else is a request-content problem: 422


def _require(body: dict, key: str, kinds, where: str = "body"):
    if key not in body:
        raise MalformedError(f"{where} is missing required field {key!r}")
    value = body[key]
    if not isinstance(value, kinds) or isinstance(value, bool) and kinds is int:
        raise MalformedError(f"{where} field {key!r} has the wrong type")
    return value


def _parse_tour_doc(doc) -> Tour:
    report = validate_tour(doc)
    if report:
        raise InvalidTourError("tour document failed validation", report=report)
    return Tour.from_doc(doc)


def create_app(store: Store | None = None, provider=None, tokens: dict | None = None,
               repos_root=None) -> FastAPI:
    """Build the API app; arguments override the environment for tests."""
    store = store or open_store()
    if provider is None:
        provider = genpipe.make_provider(genpipe.ProviderConfig.from_env())
    tokens = dict(tokens) if tokens is not None else _load_tokens()
    repos_root = Path(repos_root or os.environ.get("TOURFORGE_REPOS_ROOT", "."))
    generation_slots = threading.BoundedSemaphore(GENERATION_SLOTS)

    app = FastAPI(title="tourforge", docs_url=None, redoc_url=None)
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])

    @app.exception_handler(TourForgeError)
    def domain_error(request: Request, exc: TourForgeError):
        payload = {"code": exc.code, "message": exc.message}
        if exc.details:
            payload["details"] = exc.details
        report = getattr(exc, "report", None)
        if report:
            payload["report"] = [issue.to_doc() for issue in report]
        field_path = getattr(exc, "field_path", "")
        if field_path:
            payload["fieldPath"] = field_path
        return JSONResponse({"error": payload},
                            status_code=STATUS_BY_CODE.get(exc.code, 422))

    def current_user(request: Request) -> User:
        header = request.headers.get("authorization", "")
        scheme, _, token = header.partition(" ")
        user_id = tokens.get(token.strip()) if scheme.lower() == "bearer" else None
        if user_id is None:
            raise _Unauthorized()
        return store.get_user(user_id)

    class _Unauthorized(Exception):
        pass

    @app.exception_handler(_Unauthorized)
    def unauthorized(request: Request, exc: _Unauthorized):
        return JSONResponse(
            {"error": {"code": "UNAUTHORIZED",
                       "message": "missing or unknown bearer token"}},
            status_code=401, headers={"WWW-Authenticate": "Bearer"})

    def require_expert(user: User, repo_root: str) -> None:
        if user.role_for(repo_root) != "expert":
            raise ForbiddenRoleError(
                f"{user.id!r} is not an expert for {repo_root!r}",
                repoRoot=repo_root)

    def can_edit(user: User, tour: Tour) -> None:
        if user.id != tour.author \
                and user.role_for(tour.repo_ref.root_path) != "expert":
            raise ForbiddenRoleError(
                f"{user.id!r} may not modify tour {tour.id!r}")

    def visible_tour_record(tour_id: str, user: User) -> dict:
        record = store.get_record(tour_id)
        tour = Tour.from_doc(record["tour"])
        if tour.tour_type == "exploratory" and tour.author != user.id:
            raise UnknownEntityError(f"no tour {tour_id!r}", tourId=tour_id)
        return record

    def repo_tree(repo_root: str, body: dict | None = None) -> dict:
        if body is not None and "fileTree" in body:
            tree = _require(body, "fileTree", dict)
            for path, text in tree.items():
                if not isinstance(path, str) or not isinstance(text, str):
                    raise MalformedError("fileTree must map paths to text")
            return tree
        target = (repos_root / repo_root).resolve()
        if not str(target).startswith(str(repos_root.resolve()) + os.sep) \
                and target != repos_root.resolve():
            raise UnknownEntityError(f"no repository {repo_root!r}",
                                     repoRoot=repo_root)
        return load_file_tree(target)

    # -- session / identity --

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/me")
    def me(user: User = Depends(current_user)):
        return user.to_doc()

    # -- tour CRUD --

    @app.post("/tours", status_code=201)
    def create_tour(body: dict = Body(...), user: User = Depends(current_user)):
        doc = body.get("tour", body)
        tour = _parse_tour_doc(doc)
        if tour.author != user.id:
            raise ForbiddenRoleError(
                f"tour author {tour.author!r} must be the requester")
        revision = store.put_tour(tour, 0)
        return {"tourId": tour.id, "revision": revision}

    @app.put("/tours/{tour_id}")
    def update_tour(tour_id: str, body: dict = Body(...),
                    user: User = Depends(current_user)):
        expected = _require(body, "expectedRevision", int)
        tour = _parse_tour_doc(_require(body, "tour", dict))
        if tour.id != tour_id:
            raise MalformedError(
                f"body tour id {tour.id!r} does not match path {tour_id!r}")
        can_edit(user, store.get_tour(tour_id))
        revision = store.put_tour(tour, expected)
        return {"tourId": tour_id, "revision": revision}

    @app.get("/tours")
    def list_tours(repo: str | None = Query(default=None),
                   mine: bool = Query(default=False),
                   status: str | None = Query(default=None),
                   user: User = Depends(current_user)):
        tours = store.list_tours(repo_root=repo, status=status, viewer=user.id)
        if mine:
            tours = [t for t in tours if t.author == user.id]
        return {"tours": [t.to_doc() for t in tours]}

    @app.get("/tours/{tour_id}")
    def get_tour(tour_id: str, resolve: bool = Query(default=False),
                 user: User = Depends(current_user)):
        record = visible_tour_record(tour_id, user)
        out = {"tour": record["tour"], "draft": record["draft"],
               "provenance": record["provenance"],
               "rawProviderOutput": record["rawProviderOutput"]}
        if resolve:
            tour = Tour.from_doc(record["tour"])
            out["resolution"] = _resolve_steps(
                tour, repo_tree(tour.repo_ref.root_path))
        return out

    @app.post("/tours/{tour_id}/publish")
    def publish_tour(tour_id: str, body: dict = Body(default={}),
                     user: User = Depends(current_user)):
        learner_ids = body.get("learnerIds", [])
        if not isinstance(learner_ids, list) \
                or not all(isinstance(l, str) for l in learner_ids):
            raise MalformedError("learnerIds must be a list of user ids")
        tour = store.get_tour(tour_id)
        require_expert(user, tour.repo_ref.root_path)
        published = store.publish_tour(tour_id, learner_ids)
        return {"tour": published.to_doc()}

    # -- generation --

    def _context_from(body: dict) -> tuple:
        repo = _require(body, "repo", str)
        intent = body.get("intent", "")
        if not isinstance(intent, str):
            raise MalformedError("intent must be a string")
        selections = _require(body, "selections", list)
        for item in selections:
            if not isinstance(item, dict):
                raise MalformedError("selections must be objects")
        tree = repo_tree(repo, body)
        ctx = genpipe.assemble_context(selections, intent, tree)
        return repo, ctx

    @app.post("/generate/tour", status_code=201)
    def generate_tour(body: dict = Body(...), user: User = Depends(current_user)):
        repo, ctx = _context_from(body)
        require_expert(user, repo)
        with generation_slots:
            draft = genpipe.generate_guided(ctx, provider, author=user.id,
                                            repo_root=repo)
        revision = store.put_draft(draft)
        return {"tourId": draft.tour.id, "revision": revision,
                "tour": draft.tour.to_doc(),
                "rawProviderOutput": draft.raw_provider_output}

    @app.post("/generate/exploratory", status_code=201)
    def generate_exploratory(body: dict = Body(...),
                             user: User = Depends(current_user)):
        repo, ctx = _context_from(body)
        with generation_slots:
            tour = genpipe.generate_exploratory(ctx, provider, user.id,
                                                repo_root=repo)
        revision = store.put_tour(tour, 0, provenance="ai")
        return {"tourId": tour.id, "revision": revision, "tour": tour.to_doc()}

    @app.post("/generate/dialogue")
    def generate_dialogue(body: dict = Body(...),
                          user: User = Depends(current_user)):
        tour_id = _require(body, "tourId", str)
        visible_tour_record(tour_id, user)
        tour = store.get_working_tour(tour_id)
        with generation_slots:
            script = genpipe.generate_dialogue(tour, provider)
        attached = tour.status == "draft"
        revision = None
        if attached:  # published tours stay frozen; the script just returns
            revision = store.put_tour(replace(tour, dialogue=script),
                                      tour.revision)
        return {"dialogue": script.to_doc(), "attached": attached,
                "revision": revision}

    @app.post("/generate/voice2tour", status_code=201)
    def voice_to_tour(body: dict = Body(...), user: User = Depends(current_user)):
        repo = _require(body, "repo", str)
        require_expert(user, repo)
        log = voice.parse_session_log(json.dumps(_require(body, "log", dict)))
        tree = repo_tree(repo, body)
        with generation_slots:
            draft = voice.align(log, tree, author=user.id, repo_root=repo)
        revision = store.put_draft(draft)
        return {"tourId": draft.tour.id, "revision": revision,
                "tour": draft.tour.to_doc()}

    # -- anchors --

    @app.post("/tours/{tour_id}/reanchor")
    def reanchor(tour_id: str, body: dict = Body(default={}),
                 user: User = Depends(current_user)):
        record = visible_tour_record(tour_id, user)
        working = Tour.from_doc(record["draft"] or record["tour"])
        can_edit(user, working)
        tree = repo_tree(working.repo_ref.root_path,
                         body if "fileTree" in body else None)
        reanchored, report = reanchor_tour(working, tree)
        changed = reanchored is not working
        if changed:
            # published tours take re-anchoring as a pending draft revision
            stored = reanchored if working.status == "draft" \
                else replace(reanchored, status="draft")
            store.put_tour(stored, working.revision)
        return {"report": report.to_doc(), "changed": changed,
                "revision": reanchored.revision if changed else working.revision}

    # -- learner actions --

    @app.post("/tours/{tour_id}/progress")
    def record_progress(tour_id: str, body: dict = Body(...),
                        user: User = Depends(current_user)):
        step_id = _require(body, "stepId", str)
        return store.record_progress(user.id, tour_id, step_id)

    @app.post("/tours/{tour_id}/quiz/submit")
    def submit_quiz(tour_id: str, body: dict = Body(...),
                    user: User = Depends(current_user)):
        answers = _require(body, "answers", dict)
        tour = store.get_tour(tour_id)
        if tour.quiz is None:
            raise UnknownEntityError(f"tour {tour_id!r} has no quiz",
                                     tourId=tour_id)
        result = quiz_score(tour.quiz, answers, step_order=tour.step_ids())
        store.record_attempt(user.id, tour_id, answers, result["score"])
        return result

    @app.post("/tours/{tour_id}/steps/{step_id}/notes", status_code=201)
    def add_note(tour_id: str, step_id: str, body: dict = Body(...),
                 user: User = Depends(current_user)):
        text = _require(body, "text", str)
        return store.add_note(user.id, tour_id, step_id, text)

    @app.get("/tours/{tour_id}/notes")
    def my_notes(tour_id: str, user: User = Depends(current_user)):
        return {"notes": store.notes_for(tour_id, user.id)}

    @app.post("/tours/{tour_id}/steps/{step_id}/questions", status_code=201)
    def add_question(tour_id: str, step_id: str, body: dict = Body(...),
                     user: User = Depends(current_user)):
        text = _require(body, "text", str)
        return store.add_question(user.id, tour_id, step_id, text)

    @app.get("/tours/{tour_id}/questions")
    def list_questions(tour_id: str, user: User = Depends(current_user)):
        visible_tour_record(tour_id, user)
        return {"questions": store.questions_for(tour_id)}

    @app.post("/questions/{question_id}/answer")
    def answer_question(question_id: str, body: dict = Body(...),
                        user: User = Depends(current_user)):
        text = _require(body, "text", str)
        return store.answer_question(user.id, question_id, text)

    @app.post("/tours/{tour_id}/feedback", status_code=201)
    def add_feedback(tour_id: str, body: dict = Body(...),
                     user: User = Depends(current_user)):
        rating = _require(body, "rating", int)
        comment = body.get("comment")
        if comment is not None and not isinstance(comment, str):
            raise MalformedError("comment must be a string")
        return store.add_feedback(user.id, tour_id, rating, comment)

    # -- dashboard --

    @app.get("/dashboard/summary")
    def summary(repo: str | None = Query(default=None),
                user: User = Depends(current_user)):
        return {"tours": dashboard_summary(store, repo)}

    @app.get("/dashboard/learners/{learner_id}")
    def learner(learner_id: str, user: User = Depends(current_user)):
        if user.id != learner_id \
                and "expert" not in set(user.roles.values()):
            raise ForbiddenRoleError(
                "only experts may view other learners' detail")
        return learner_detail(store, learner_id)

    @app.get("/dashboard/gaps")
    def gaps(repo: str | None = Query(default=None),
             user: User = Depends(current_user)):
        return {"gaps": coverage_gaps(store, repo)}

    return app


def _resolve_steps(tour: Tour, file_tree: dict) -> list:
    """Re-locate every step against current files, with display context.

    Stale steps fall back to the stored verbatim target so clients can still
    render something meaningful beside a STALE badge.
    """
    out = []
    for step in tour.steps:
        anchor = step.anchor
        text = file_tree.get(anchor.path)
        if text is None:
            resolution = AnchorResolution(kind=STALE, score=0.0,
                                          note="file missing from repository")
        else:
            lines = split_lines(text)
            resolution = resolve_anchor(anchor, lines)
        entry = {"stepId": step.id, "path": anchor.path,
                 "resolution": resolution.to_doc()}
        if resolution.kind == STALE:
            entry.update(startLine=anchor.start_line, endLine=anchor.end_line,
                         lines=list(anchor.target),
                         before=list(anchor.before), after=list(anchor.after))
        else:
            start, end = resolution.new_start_line, resolution.new_end_line
            entry.update(startLine=start, endLine=end,
                         lines=lines[start - 1:end],
                         before=lines[max(0, start - 4):start - 1],
                         after=lines[end:end + 3])
        out.append(entry)
    return out
