"""Tour document model: types, validation, and the on-disk format.

A tour is an ordered sequence of steps, each pairing a markdown explanation
with an anchor into the codebase, optionally followed by a quiz and a
two-speaker dialogue script.  Tours serialize to canonical JSON
(``*.tour.json``), so identical tours are byte-identical on disk.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any

from .canonical import canonical_dumps, is_timestamp
from .errors import InvalidTourError, MalformedError, UnsupportedVersionError

FORMAT_VERSION = 1

TOUR_TYPES = ("guided-manual", "guided-ai", "voice", "exploratory")
STATUSES = ("draft", "published")
SPEAKERS = ("expert", "learner")


# ---------------------------------------------------------------------------
# Value types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RepoRef:
    """Workspace-relative repository reference."""

    root_path: str
    commit_id: str | None = None

    def to_doc(self) -> dict:
        doc: dict[str, Any] = {"rootPath": self.root_path}
        if self.commit_id is not None:
            doc["commitId"] = self.commit_id
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "RepoRef":
        return cls(root_path=doc["rootPath"], commit_id=doc.get("commitId"))


@dataclass(frozen=True)
class Anchor:
    """Durable pointer into a file: range, verbatim target, and context.

    Lines are 1-based inclusive.  ``before``/``after`` hold up to a few
    context lines captured from each side (fewer at file boundaries); they
    are what lets the anchor be re-located after the file changes.
    """

    path: str
    start_line: int
    end_line: int
    target: list[str] = field(default_factory=list)
    before: list[str] = field(default_factory=list)
    after: list[str] = field(default_factory=list)

    def to_doc(self) -> dict:
        return {
            "path": self.path,
            "startLine": self.start_line,
            "endLine": self.end_line,
            "target": list(self.target),
            "before": list(self.before),
            "after": list(self.after),
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "Anchor":
        return cls(
            path=doc["path"],
            start_line=doc["startLine"],
            end_line=doc["endLine"],
            target=list(doc["target"]),
            before=list(doc["before"]),
            after=list(doc["after"]),
        )


@dataclass(frozen=True)
class TourStep:
    """One node of the walkthrough: explanation anchored to code."""

    id: str
    order: int
    title: str
    body: str
    anchor: Anchor
    needs_edit: bool = False

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "order": self.order,
            "title": self.title,
            "body": self.body,
            "anchor": self.anchor.to_doc(),
            "needsEdit": self.needs_edit,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "TourStep":
        return cls(
            id=doc["id"],
            order=doc["order"],
            title=doc["title"],
            body=doc["body"],
            anchor=Anchor.from_doc(doc["anchor"]),
            needs_edit=doc["needsEdit"],
        )


@dataclass(frozen=True)
class QuizQuestion:
    """Single-answer multiple choice, linked to a step for revisit-on-wrong."""

    id: str
    step_id: str
    prompt: str
    choices: list[str] = field(default_factory=list)
    answer_index: int = 0

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "stepId": self.step_id,
            "prompt": self.prompt,
            "choices": list(self.choices),
            "answerIndex": self.answer_index,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "QuizQuestion":
        return cls(
            id=doc["id"],
            step_id=doc["stepId"],
            prompt=doc["prompt"],
            choices=list(doc["choices"]),
            answer_index=doc["answerIndex"],
        )


@dataclass(frozen=True)
class Quiz:
    questions: list[QuizQuestion] = field(default_factory=list)

    def question_by_id(self, question_id: str) -> QuizQuestion | None:
        for question in self.questions:
            if question.id == question_id:
                return question
        return None

    def to_doc(self) -> dict:
        return {"questions": [q.to_doc() for q in self.questions]}

    @classmethod
    def from_doc(cls, doc: dict) -> "Quiz":
        return cls(questions=[QuizQuestion.from_doc(q) for q in doc["questions"]])


@dataclass(frozen=True)
class DialogueLine:
    speaker: str
    text: str

    def to_doc(self) -> dict:
        return {"speaker": self.speaker, "text": self.text}

    @classmethod
    def from_doc(cls, doc: dict) -> "DialogueLine":
        return cls(speaker=doc["speaker"], text=doc["text"])


@dataclass(frozen=True)
class DialogueScript:
    """Alternating expert/learner conversation derived from a tour."""

    lines: list[DialogueLine] = field(default_factory=list)

    def to_doc(self) -> dict:
        return {"lines": [line.to_doc() for line in self.lines]}

    @classmethod
    def from_doc(cls, doc: dict) -> "DialogueScript":
        return cls(lines=[DialogueLine.from_doc(line) for line in doc["lines"]])


@dataclass(frozen=True)
class Tour:
    """The reusable walkthrough artifact."""

    id: str
    title: str
    tour_type: str
    status: str
    revision: int
    author: str
    repo_ref: RepoRef
    steps: list[TourStep] = field(default_factory=list)
    quiz: Quiz | None = None
    dialogue: DialogueScript | None = None
    created_at: str = ""
    updated_at: str = ""
    format_version: int = FORMAT_VERSION

    def step_by_id(self, step_id: str) -> TourStep | None:
        for step in self.steps:
            if step.id == step_id:
                return step
        return None

    def step_ids(self) -> list[str]:
        return [step.id for step in self.steps]

    def with_steps(self, steps: list[TourStep]) -> "Tour":
        """Copy with ``steps`` replaced and order indices renumbered."""
        renumbered = [replace(s, order=i) for i, s in enumerate(steps)]
        return replace(self, steps=renumbered)

    def to_doc(self) -> dict:
        doc: dict[str, Any] = {
            "id": self.id,
            "formatVersion": self.format_version,
            "title": self.title,
            "tourType": self.tour_type,
            "status": self.status,
            "revision": self.revision,
            "author": self.author,
            "repoRef": self.repo_ref.to_doc(),
            "steps": [step.to_doc() for step in self.steps],
            "createdAt": self.created_at,
            "updatedAt": self.updated_at,
        }
        if self.quiz is not None:
            doc["quiz"] = self.quiz.to_doc()
        if self.dialogue is not None:
            doc["dialogue"] = self.dialogue.to_doc()
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "Tour":
        return cls(
            id=doc["id"],
            format_version=doc["formatVersion"],
            title=doc["title"],
            tour_type=doc["tourType"],
            status=doc["status"],
            revision=doc["revision"],
            author=doc["author"],
            repo_ref=RepoRef.from_doc(doc["repoRef"]),
            steps=[TourStep.from_doc(s) for s in doc["steps"]],
            quiz=Quiz.from_doc(doc["quiz"]) if "quiz" in doc else None,
            dialogue=DialogueScript.from_doc(doc["dialogue"]) if "dialogue" in doc else None,
            created_at=doc["createdAt"],
            updated_at=doc["updatedAt"],
        )


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ValidationIssue:
    code: str
    path: str
    message: str

    def to_doc(self) -> dict:
        return {"code": self.code, "path": self.path, "message": self.message}


class _Report:
    def __init__(self):
        self.issues: list[ValidationIssue] = []

    def add(self, code: str, path: str, message: str) -> None:
        self.issues.append(ValidationIssue(code, path, message))


def _require(doc: dict, key: str, kind, path: str, report: _Report) -> bool:
    """Check a required field exists with the right JSON type."""
    if key not in doc:
        report.add("FIELD_MISSING", f"{path}/{key}", f"missing required field '{key}'")
        return False
    value = doc[key]
    if kind is int and isinstance(value, bool):
        report.add("FIELD_TYPE", f"{path}/{key}", f"'{key}' must be an integer")
        return False
    if not isinstance(value, kind):
        report.add("FIELD_TYPE", f"{path}/{key}", f"'{key}' has wrong type")
        return False
    return True


def _is_string_list(value) -> bool:
    return isinstance(value, list) and all(isinstance(item, str) for item in value)


def _check_anchor(doc, path: str, report: _Report) -> None:
    if not isinstance(doc, dict):
        report.add("FIELD_TYPE", path, "anchor must be an object")
        return
    ok_path = _require(doc, "path", str, path, report)
    ok_start = _require(doc, "startLine", int, path, report)
    ok_end = _require(doc, "endLine", int, path, report)
    ok_target = _require(doc, "target", list, path, report)
    for key in ("target", "before", "after"):
        if key in doc and not _is_string_list(doc[key]):
            report.add("FIELD_TYPE", f"{path}/{key}", f"'{key}' must be a list of strings")
            if key == "target":
                ok_target = False
    for key in ("before", "after"):
        if key not in doc:
            report.add("FIELD_MISSING", f"{path}/{key}", f"missing required field '{key}'")

    if ok_path:
        anchor_path = doc["path"]
        parts = anchor_path.split("/")
        if not anchor_path or anchor_path.startswith("/") or ".." in parts:
            report.add("ANCHOR_PATH", f"{path}/path",
                       "anchor path must be repo-relative without parent traversal")
    if ok_start and ok_end:
        start, end = doc["startLine"], doc["endLine"]
        if not (1 <= start <= end):
            report.add("ANCHOR_RANGE", f"{path}/startLine",
                       f"line range {start}..{end} violates 1 <= start <= end")
        elif ok_target and _is_string_list(doc["target"]):
            expected = end - start + 1
            if len(doc["target"]) != expected:
                report.add("ANCHOR_TARGET_LENGTH", f"{path}/target",
                           f"target has {len(doc['target'])} lines, range covers {expected}")


def _check_steps(doc: dict, status: str, report: _Report) -> list[str]:
    """Validate the steps array; returns the step ids found (for quiz links)."""
    step_ids: list[str] = []
    if not _require(doc, "steps", list, "", report):
        return step_ids
    steps = doc["steps"]
    if len(steps) == 0:
        report.add("STEPS_EMPTY", "/steps", "a tour must have at least one step")
        return step_ids

    seen: set[str] = set()
    for index, step in enumerate(steps):
        path = f"/steps/{index}"
        if not isinstance(step, dict):
            report.add("FIELD_TYPE", path, "step must be an object")
            continue
        if _require(step, "id", str, path, report):
            step_id = step["id"]
            if not step_id:
                report.add("ID_EMPTY", f"{path}/id", "step id must be nonempty")
            elif step_id in seen:
                report.add("STEP_ID_DUPLICATE", f"{path}/id", f"duplicate step id '{step_id}'")
            else:
                seen.add(step_id)
                step_ids.append(step_id)
        if _require(step, "order", int, path, report) and step["order"] != index:
            report.add("STEP_ORDER", f"{path}/order",
                       f"order {step['order']} does not match position {index}")
        _require(step, "title", str, path, report)
        if _require(step, "body", str, path, report):
            if status == "published" and not step["body"].strip():
                report.add("STEP_BODY_EMPTY", f"{path}/body",
                           "published tours require a nonempty body on every step")
        _require(step, "needsEdit", bool, path, report)
        if "anchor" in step:
            _check_anchor(step["anchor"], f"{path}/anchor", report)
        else:
            report.add("FIELD_MISSING", f"{path}/anchor", "missing required field 'anchor'")
    return step_ids


def _check_quiz(doc: dict, tour_type: str, step_ids: list[str], report: _Report) -> None:
    quiz = doc.get("quiz")
    if quiz is None:
        return
    if tour_type == "exploratory":
        report.add("QUIZ_FORBIDDEN", "/quiz", "exploratory tours never carry a quiz")
    if not isinstance(quiz, dict) or not isinstance(quiz.get("questions"), list):
        report.add("FIELD_TYPE", "/quiz", "quiz must be an object with a questions list")
        return
    questions = quiz["questions"]
    if len(questions) == 0:
        report.add("QUIZ_EMPTY", "/quiz/questions", "a quiz must have at least one question")
    known_steps = set(step_ids)
    seen: set[str] = set()
    for index, question in enumerate(questions):
        path = f"/quiz/questions/{index}"
        if not isinstance(question, dict):
            report.add("FIELD_TYPE", path, "question must be an object")
            continue
        if _require(question, "id", str, path, report):
            qid = question["id"]
            if not qid:
                report.add("ID_EMPTY", f"{path}/id", "question id must be nonempty")
            elif qid in seen:
                report.add("QUIZ_ID_DUPLICATE", f"{path}/id", f"duplicate question id '{qid}'")
            else:
                seen.add(qid)
        if _require(question, "stepId", str, path, report):
            if question["stepId"] not in known_steps:
                report.add("QUIZ_DANGLING_STEP", f"{path}/stepId",
                           f"stepId '{question['stepId']}' does not refer to a step in this tour")
        _require(question, "prompt", str, path, report)
        if _require(question, "choices", list, path, report):
            choices = question["choices"]
            if not _is_string_list(choices) or len(choices) != 4:
                report.add("QUIZ_CHOICES", f"{path}/choices",
                           "a question must offer exactly 4 text choices")
        if _require(question, "answerIndex", int, path, report):
            if not (0 <= question["answerIndex"] <= 3):
                report.add("QUIZ_ANSWER_INDEX", f"{path}/answerIndex",
                           "answerIndex must be in [0, 3]")


def _check_dialogue(doc: dict, report: _Report) -> None:
    dialogue = doc.get("dialogue")
    if dialogue is None:
        return
    if not isinstance(dialogue, dict) or not isinstance(dialogue.get("lines"), list):
        report.add("FIELD_TYPE", "/dialogue", "dialogue must be an object with a lines list")
        return
    lines = dialogue["lines"]
    if len(lines) == 0:
        report.add("DIALOGUE_EMPTY", "/dialogue/lines", "dialogue must have at least one line")
    previous_speaker = None
    for index, line in enumerate(lines):
        path = f"/dialogue/lines/{index}"
        if not isinstance(line, dict):
            report.add("FIELD_TYPE", path, "dialogue line must be an object")
            previous_speaker = None
            continue
        speaker = line.get("speaker")
        if speaker not in SPEAKERS:
            report.add("ENUM_INVALID", f"{path}/speaker",
                       f"speaker must be one of {', '.join(SPEAKERS)}")
        elif speaker == previous_speaker:
            report.add("DIALOGUE_ALTERNATION", f"{path}/speaker",
                       "no two consecutive dialogue lines may share a speaker")
        previous_speaker = speaker if speaker in SPEAKERS else None
        text = line.get("text")
        if not isinstance(text, str) or not text.strip():
            report.add("DIALOGUE_TEXT_EMPTY", f"{path}/text",
                       "dialogue line text must be nonempty")


def validate_tour(doc) -> list[ValidationIssue]:
    """Validate a parsed tour document against every model invariant.

    Pure and deterministic: the same document always yields the same report,
    ordered by document position.  Malformed structures produce report items,
    never exceptions.
    """
    report = _Report()
    if not isinstance(doc, dict):
        report.add("FIELD_TYPE", "", "tour document must be a JSON object")
        return report.issues

    if _require(doc, "id", str, "", report) and not doc["id"]:
        report.add("ID_EMPTY", "/id", "tour id must be nonempty")
    if _require(doc, "formatVersion", int, "", report) and doc["formatVersion"] != FORMAT_VERSION:
        report.add("FORMAT_VERSION", "/formatVersion",
                   f"unsupported formatVersion {doc['formatVersion']}")
    if _require(doc, "title", str, "", report) and not doc["title"].strip():
        report.add("TITLE_EMPTY", "/title", "tour title must be nonempty")

    tour_type = ""
    if _require(doc, "tourType", str, "", report):
        tour_type = doc["tourType"]
        if tour_type not in TOUR_TYPES:
            report.add("ENUM_INVALID", "/tourType",
                       f"tourType must be one of {', '.join(TOUR_TYPES)}")
    status = ""
    if _require(doc, "status", str, "", report):
        status = doc["status"]
        if status not in STATUSES:
            report.add("ENUM_INVALID", "/status",
                       f"status must be one of {', '.join(STATUSES)}")
    if _require(doc, "revision", int, "", report) and doc["revision"] < 1:
        report.add("REVISION_INVALID", "/revision", "revision must be a positive integer")
    if _require(doc, "author", str, "", report) and not doc["author"]:
        report.add("ID_EMPTY", "/author", "author must be nonempty")

    if _require(doc, "repoRef", dict, "", report):
        repo = doc["repoRef"]
        if _require(repo, "rootPath", str, "/repoRef", report):
            root = repo["rootPath"]
            if root.startswith("/") or ".." in root.split("/"):
                report.add("REPO_PATH", "/repoRef/rootPath",
                           "rootPath must be relative without parent traversal")
        commit = repo.get("commitId")
        if commit is not None:
            if not isinstance(commit, str) or not commit or any(
                    c not in "0123456789abcdef" for c in commit):
                report.add("REPO_PATH", "/repoRef/commitId",
                           "commitId must be a lowercase hex string")

    for key in ("createdAt", "updatedAt"):
        if _require(doc, key, str, "", report) and not is_timestamp(doc[key]):
            report.add("TIMESTAMP_INVALID", f"/{key}",
                       f"'{key}' must be a UTC timestamp like 2026-01-01T00:00:00Z")

    step_ids = _check_steps(doc, status, report)
    _check_quiz(doc, tour_type, step_ids, report)
    _check_dialogue(doc, report)
    return report.issues


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def serialize_tour(tour: Tour) -> str:
    """Canonical text for a valid tour; byte-stable across runs."""
    return canonical_dumps(tour.to_doc())


def parse_tour(text: str) -> Tour:
    """Parse tour text, enforcing format version and every invariant.

    Raises ``MalformedError``, ``UnsupportedVersionError``, or
    ``InvalidTourError`` (which carries the validation report).
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedError(f"not valid JSON: {exc}") from exc
    if isinstance(doc, dict):
        version = doc.get("formatVersion")
        if isinstance(version, int) and not isinstance(version, bool) and version != FORMAT_VERSION:
            raise UnsupportedVersionError(f"formatVersion {version} is not supported")
    report = validate_tour(doc)
    if report:
        raise InvalidTourError(f"{len(report)} validation issue(s)", report=report)
    return Tour.from_doc(doc)
