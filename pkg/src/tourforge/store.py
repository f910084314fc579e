"""File-backed persistence for tours and organizational state.

One canonical JSON document per collection under a data directory, written
with a temp-file-then-atomic-rename discipline so a crash mid-write never
leaves a torn file.  Tours use optimistic versioning; everything else is a
validated last-write-wins record.  A published tour can carry one pending
draft revision alongside it; republishing swaps the draft in and keeps every
assignment intact.
"""

from __future__ import annotations

import json
import os
import threading
from contextlib import ExitStack
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import genpipe
from .canonical import canonical_dumps, content_id, iso_now, write_text_atomic
from .errors import (
    ConflictError,
    ForbiddenRoleError,
    InvalidRatingError,
    InvalidTourError,
    NotAssignedError,
    UnknownEntityError,
    UnknownStepError,
)
from .model import Tour, validate_tour

COLLECTIONS = ("tours", "users", "assignments", "progress", "attempts",
               "notes", "questions", "feedback")

NOT_STARTED = "not-started"
IN_PROGRESS = "in-progress"
COMPLETED = "completed"


def open_store(data_dir=None) -> "Store":
    """Open the store at data_dir, TOURFORGE_DATA_DIR, or ./data."""
    return Store(data_dir or os.environ.get("TOURFORGE_DATA_DIR", "data"))


@dataclass(frozen=True)
class User:
    id: str
    display_name: str
    roles: dict = field(default_factory=dict)  # repo root -> expert|learner

    def role_for(self, repo_root: str) -> str | None:
        return self.roles.get(repo_root)

    def to_doc(self) -> dict:
        return {"id": self.id, "displayName": self.display_name,
                "roles": dict(self.roles)}

    @classmethod
    def from_doc(cls, doc: dict) -> "User":
        return cls(id=doc["id"], display_name=doc["displayName"],
                   roles=dict(doc.get("roles", {})))


def derive_status(completed_step_ids, all_step_ids) -> str:
    """Assignment status is never stored; it is always this derivation."""
    done = set(completed_step_ids) & set(all_step_ids)
    if not done:
        return NOT_STARTED
    if done >= set(all_step_ids):
        return COMPLETED
    return IN_PROGRESS


class Store:
    def __init__(self, data_dir):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._locks = {name: threading.RLock() for name in COLLECTIONS}

    # -- file plumbing ------------------------------------------------------

    def _path(self, name: str) -> Path:
        return self.data_dir / f"{name}.json"

    def _load(self, name: str) -> dict:
        path = self._path(name)
        if not path.exists():
            return {}
        return json.loads(path.read_text(encoding="utf-8"))

    def _dump(self, name: str, data: dict) -> None:
        write_text_atomic(str(self._path(name)), canonical_dumps(data))

    def _locked(self, *names: str) -> ExitStack:
        """Hold the named collection locks, always in a fixed order."""
        stack = ExitStack()
        for name in sorted(set(names)):
            stack.enter_context(self._locks[name])
        return stack

    # -- users --------------------------------------------------------------

    def put_user(self, user: User) -> None:
        with self._locked("users"):
            users = self._load("users")
            users[user.id] = user.to_doc()
            self._dump("users", users)

    def get_user(self, user_id: str) -> User:
        users = self._load("users")
        if user_id not in users:
            raise UnknownEntityError(f"no user {user_id!r}", userId=user_id)
        return User.from_doc(users[user_id])

    def list_users(self) -> list:
        return [User.from_doc(doc) for _, doc in sorted(self._load("users").items())]

    # -- tours ---------------------------------------------------------------

    def put_tour(self, tour: Tour, expected_revision: int, *,
                 provenance: str | None = None,
                 raw_provider_output: str | None = None) -> int:
        """Optimistic write; returns the stored revision (= expected + 1).

        A draft written over a published tour lands in the record's draft
        slot, leaving the published version visible until republication.
        """
        stored = replace(tour, revision=expected_revision + 1)
        report = validate_tour(stored.to_doc())
        if report:
            raise InvalidTourError(
                f"tour {tour.id} failed validation", report=report)
        with self._locked("tours"):
            tours = self._load("tours")
            record = tours.get(tour.id)
            current = 0
            if record is not None:
                current = (record["draft"] or record["tour"])["revision"]
            if expected_revision != current:
                raise ConflictError(
                    f"expected revision {expected_revision}, current is {current}",
                    expected=expected_revision, current=current)
            doc = stored.to_doc()
            if record is not None and record["tour"]["status"] == "published" \
                    and stored.status == "draft":
                record["draft"] = doc
            else:
                record = record or {"tour": doc, "draft": None,
                                    "provenance": None, "rawProviderOutput": None}
                record["tour"] = doc
                if stored.status == "published":
                    record["draft"] = None
                    record["rawProviderOutput"] = None
            if provenance is not None:
                record["provenance"] = provenance
            if raw_provider_output is not None:
                record["rawProviderOutput"] = raw_provider_output
            tours[tour.id] = record
            self._dump("tours", tours)
            return stored.revision

    def put_draft(self, draft: genpipe.TourDraft, expected_revision: int = 0) -> int:
        return self.put_tour(draft.tour, expected_revision,
                             provenance=draft.provenance,
                             raw_provider_output=draft.raw_provider_output)

    def get_record(self, tour_id: str) -> dict:
        """Full stored record: tour, pending draft, provenance, raw output."""
        tours = self._load("tours")
        if tour_id not in tours:
            raise UnknownEntityError(f"no tour {tour_id!r}", tourId=tour_id)
        return tours[tour_id]

    def get_tour(self, tour_id: str) -> Tour:
        return Tour.from_doc(self.get_record(tour_id)["tour"])

    def get_working_tour(self, tour_id: str) -> Tour:
        """The editable version: the pending draft if present, else the tour."""
        record = self.get_record(tour_id)
        return Tour.from_doc(record["draft"] or record["tour"])

    def get_raw_provider_output(self, tour_id: str) -> str | None:
        return self.get_record(tour_id).get("rawProviderOutput")

    def begin_revision(self, tour_id: str, *, now=None) -> Tour:
        """Open a draft slot on a published tour and return it."""
        with self._locked("tours"):
            record = self.get_record(tour_id)
            if record["draft"] is not None:
                return Tour.from_doc(record["draft"])
            published = Tour.from_doc(record["tour"])
            draft = replace(published, status="draft",
                            revision=published.revision + 1,
                            updated_at=iso_now(now))
            tours = self._load("tours")
            tours[tour_id]["draft"] = draft.to_doc()
            self._dump("tours", tours)
            return draft

    def list_tours(self, *, repo_root: str | None = None,
                   status: str | None = None,
                   viewer: str | None = None) -> list:
        """All visible tours; exploratory ones only for their creator."""
        out = []
        for tour_id, record in sorted(self._load("tours").items()):
            tour = Tour.from_doc(record["tour"])
            if repo_root is not None and tour.repo_ref.root_path != repo_root:
                continue
            if status is not None and tour.status != status:
                continue
            if viewer is not None and tour.tour_type == "exploratory" \
                    and tour.author != viewer:
                continue
            out.append(tour)
        return out

    def publish_tour(self, tour_id: str, assignees=(), *, now=None) -> Tour:
        """Publish the working draft and assign it; keeps assignments stable."""
        with self._locked("tours", "assignments", "users"):
            users = self._load("users")
            missing = [a for a in assignees if a not in users]
            if missing:
                raise UnknownEntityError(
                    f"unknown assignees: {', '.join(missing)}", userIds=missing)
            record = self.get_record(tour_id)
            working = Tour.from_doc(record["draft"] or record["tour"])
            published = genpipe.publish(working, list(assignees), now=now)
            tours = self._load("tours")
            tours[tour_id].update({
                "tour": published.to_doc(), "draft": None,
                "rawProviderOutput": None,
            })
            self._dump("tours", tours)
            for learner_id in assignees:
                self.create_assignment(tour_id, learner_id, now=now)
            return published

    # -- assignments & progress ----------------------------------------------

    def create_assignment(self, tour_id: str, learner_id: str, *, now=None) -> dict:
        """Idempotent per (tour, learner); returns the assignment view."""
        with self._locked("tours", "assignments", "users"):
            self.get_record(tour_id)
            self.get_user(learner_id)
            assignments = self._load("assignments")
            per_tour = assignments.setdefault(tour_id, {})
            if learner_id not in per_tour:
                per_tour[learner_id] = {
                    "tourId": tour_id, "learnerId": learner_id,
                    "assignedAt": iso_now(now),
                }
                self._dump("assignments", assignments)
        return self.get_assignment(tour_id, learner_id)

    def get_assignment(self, tour_id: str, learner_id: str) -> dict:
        assignments = self._load("assignments")
        entry = assignments.get(tour_id, {}).get(learner_id)
        if entry is None:
            raise NotAssignedError(
                f"{learner_id!r} is not assigned tour {tour_id!r}",
                tourId=tour_id, learnerId=learner_id)
        tour = self.get_tour(tour_id)
        progress = self._load("progress").get(tour_id, {}).get(learner_id, {})
        completed = progress.get("completedStepIds", [])
        return dict(entry, status=derive_status(completed, tour.step_ids()),
                    completedStepIds=sorted(completed))

    def list_assignments(self, *, learner_id: str | None = None,
                         tour_id: str | None = None) -> list:
        out = []
        for t_id, per_tour in sorted(self._load("assignments").items()):
            if tour_id is not None and t_id != tour_id:
                continue
            for l_id in sorted(per_tour):
                if learner_id is not None and l_id != learner_id:
                    continue
                out.append(self.get_assignment(t_id, l_id))
        return out

    def record_progress(self, learner_id: str, tour_id: str, step_id: str) -> dict:
        with self._locked("tours", "assignments", "progress"):
            self.get_assignment(tour_id, learner_id)
            tour = self.get_tour(tour_id)
            if step_id not in tour.step_ids():
                raise UnknownStepError(
                    f"tour {tour_id!r} has no step {step_id!r}", stepId=step_id)
            progress = self._load("progress")
            entry = progress.setdefault(tour_id, {}).setdefault(learner_id, {
                "tourId": tour_id, "learnerId": learner_id, "completedStepIds": []})
            if step_id not in entry["completedStepIds"]:
                entry["completedStepIds"] = sorted(
                    entry["completedStepIds"] + [step_id])
                self._dump("progress", progress)
        return self.get_assignment(tour_id, learner_id)

    # -- quiz attempts ---------------------------------------------------------

    def record_attempt(self, learner_id: str, tour_id: str, answers: dict,
                       score: int, *, now=None) -> dict:
        # Callers compute the score; a bad one is a bug, not a domain error.
        if not isinstance(score, int) or not (0 <= score <= 100):
            raise ValueError(f"score {score!r} outside 0..100")
        with self._locked("tours", "assignments", "attempts"):
            self.get_assignment(tour_id, learner_id)
            attempt = {
                "tourId": tour_id, "learnerId": learner_id,
                "answers": dict(answers), "score": score,
                "submittedAt": iso_now(now),
            }
            attempts = self._load("attempts")
            attempts.setdefault(tour_id, {}).setdefault(learner_id, []).append(attempt)
            self._dump("attempts", attempts)
            return attempt

    def latest_attempts(self, tour_id: str) -> dict:
        """learnerId -> most recent attempt; retakes supersede earlier scores."""
        per_tour = self._load("attempts").get(tour_id, {})
        return {learner: entries[-1] for learner, entries in sorted(per_tour.items())
                if entries}

    # -- notes, questions, feedback ---------------------------------------------

    def add_note(self, author_id: str, tour_id: str, step_id: str,
                 text: str, *, now=None) -> dict:
        with self._locked("tours", "users", "notes"):
            tour = self.get_tour(tour_id)
            self.get_user(author_id)
            if step_id not in tour.step_ids():
                raise UnknownStepError(
                    f"tour {tour_id!r} has no step {step_id!r}", stepId=step_id)
            notes = self._load("notes")
            note = {
                "id": content_id("note", tour_id, step_id, author_id, text,
                                 str(len(notes))),
                "tourId": tour_id, "stepId": step_id, "authorId": author_id,
                "text": text, "private": True, "createdAt": iso_now(now),
            }
            notes[note["id"]] = note
            self._dump("notes", notes)
            return note

    def notes_for(self, tour_id: str, author_id: str) -> list:
        """Notes are always private: only the author's own come back."""
        return [note for _, note in sorted(self._load("notes").items())
                if note["tourId"] == tour_id and note["authorId"] == author_id]

    def add_question(self, asker_id: str, tour_id: str, step_id: str,
                     text: str, *, now=None) -> dict:
        with self._locked("tours", "users", "questions"):
            tour = self.get_tour(tour_id)
            self.get_user(asker_id)
            if step_id not in tour.step_ids():
                raise UnknownStepError(
                    f"tour {tour_id!r} has no step {step_id!r}", stepId=step_id)
            questions = self._load("questions")
            question = {
                "id": content_id("qst", tour_id, step_id, asker_id, text,
                                 str(len(questions))),
                "tourId": tour_id, "stepId": step_id, "askerId": asker_id,
                "text": text, "answer": None, "askedAt": iso_now(now),
            }
            questions[question["id"]] = question
            self._dump("questions", questions)
            return question

    def answer_question(self, expert_id: str, question_id: str,
                        text: str, *, now=None) -> dict:
        with self._locked("tours", "users", "questions"):
            questions = self._load("questions")
            if question_id not in questions:
                raise UnknownEntityError(
                    f"no question {question_id!r}", questionId=question_id)
            question = questions[question_id]
            tour = self.get_tour(question["tourId"])
            expert = self.get_user(expert_id)
            if expert.role_for(tour.repo_ref.root_path) != "expert":
                raise ForbiddenRoleError(
                    f"{expert_id!r} is not an expert for {tour.repo_ref.root_path!r}")
            question["answer"] = {"expertId": expert_id, "text": text,
                                  "answeredAt": iso_now(now)}
            self._dump("questions", questions)
            return question

    def questions_for(self, tour_id: str) -> list:
        return [q for _, q in sorted(self._load("questions").items())
                if q["tourId"] == tour_id]

    def add_feedback(self, learner_id: str, tour_id: str, rating: int,
                     comment: str | None = None, *, now=None) -> dict:
        """One rating per (tour, learner); a second submission replaces it."""
        if not isinstance(rating, int) or isinstance(rating, bool) \
                or not (1 <= rating <= 5):
            raise InvalidRatingError(f"rating {rating!r} outside 1..5")
        with self._locked("tours", "users", "feedback"):
            self.get_record(tour_id)
            self.get_user(learner_id)
            feedback = self._load("feedback")
            entry = {"tourId": tour_id, "learnerId": learner_id,
                     "rating": rating, "submittedAt": iso_now(now)}
            if comment is not None:
                entry["comment"] = comment
            feedback.setdefault(tour_id, {})[learner_id] = entry
            self._dump("feedback", feedback)
            return entry

    def feedback_for(self, tour_id: str) -> list:
        per_tour = self._load("feedback").get(tour_id, {})
        return [per_tour[learner] for learner in sorted(per_tour)]

    # -- integrity ----------------------------------------------------------------

    def validate_store(self) -> list:
        """Full referential-integrity sweep; returns human-readable issues."""
        issues = []
        tours = {}
        for tour_id, record in self._load("tours").items():
            tour = Tour.from_doc(record["tour"])
            tours[tour_id] = tour
            report = validate_tour(record["tour"])
            issues += [f"tours/{tour_id}: {item.code} at {item.path}"
                       for item in report]
            if tour.status == "published":
                flagged = [s.id for s in tour.steps if s.needs_edit]
                if flagged:
                    issues.append(
                        f"tours/{tour_id}: published with needsEdit steps "
                        f"{', '.join(flagged)}")
        users = set(self._load("users"))

        def check_tour(kind, key, tour_id):
            if tour_id not in tours:
                issues.append(f"{kind}/{key}: references missing tour {tour_id}")
                return None
            return tours[tour_id]

        def check_user(kind, key, user_id):
            if user_id not in users:
                issues.append(f"{kind}/{key}: references missing user {user_id}")

        for tour_id, per_tour in self._load("assignments").items():
            for learner_id in per_tour:
                check_tour("assignments", f"{tour_id}/{learner_id}", tour_id)
                check_user("assignments", f"{tour_id}/{learner_id}", learner_id)
        for tour_id, per_tour in self._load("progress").items():
            tour = check_tour("progress", tour_id, tour_id)
            for learner_id, entry in per_tour.items():
                check_user("progress", f"{tour_id}/{learner_id}", learner_id)
                if tour is not None:
                    unknown = set(entry["completedStepIds"]) - set(tour.step_ids())
                    if unknown:
                        issues.append(
                            f"progress/{tour_id}/{learner_id}: unknown steps "
                            f"{', '.join(sorted(unknown))}")
        for tour_id, per_tour in self._load("attempts").items():
            check_tour("attempts", tour_id, tour_id)
            for learner_id in per_tour:
                check_user("attempts", f"{tour_id}/{learner_id}", learner_id)
        for note_id, note in self._load("notes").items():
            tour = check_tour("notes", note_id, note["tourId"])
            check_user("notes", note_id, note["authorId"])
            if tour is not None and note["stepId"] not in tour.step_ids():
                issues.append(f"notes/{note_id}: unknown step {note['stepId']}")
        for question_id, question in self._load("questions").items():
            tour = check_tour("questions", question_id, question["tourId"])
            check_user("questions", question_id, question["askerId"])
            if tour is not None and question["stepId"] not in tour.step_ids():
                issues.append(
                    f"questions/{question_id}: unknown step {question['stepId']}")
            if question["answer"] is not None:
                check_user("questions", question_id, question["answer"]["expertId"])
        for tour_id, per_tour in self._load("feedback").items():
            check_tour("feedback", tour_id, tour_id)
            for learner_id in per_tour:
                check_user("feedback", f"{tour_id}/{learner_id}", learner_id)
        return issues
