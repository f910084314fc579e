"""Store behavior: optimistic versioning, derived status, integrity, crashes."""

import json
import os
import signal
import subprocess
import sys
import textwrap
import threading
import time
from dataclasses import replace
from datetime import datetime
from pathlib import Path

import pytest

from tourforge import genpipe
from tourforge.errors import (
    ConflictError,
    ForbiddenRoleError,
    InvalidRatingError,
    InvalidTourError,
    NotAssignedError,
    NotDraftError,
    UnknownEntityError,
    UnknownStepError,
)
from tourforge.store import COMPLETED, IN_PROGRESS, NOT_STARTED, Store, User, derive_status, open_store

NOW = datetime(2026, 3, 1, 9, 30, 0)

TREE = {
    "src/app.py": "def main():\n    run()\n    return 0\n",
    "src/util.py": "def helper(x):\n    return x + 1\n",
    "src/extra.py": "def extra():\n    return 3\n",
}


def make_draft(intent="Walk the entry point.", repo_root="demo/repo"):
    ctx = genpipe.assemble_context(
        [{"path": "src/app.py", "startLine": 1, "endLine": 3},
         {"path": "src/util.py", "startLine": 1, "endLine": 2}],
        intent, TREE)
    return genpipe.stub_generate(ctx, author="alice", repo_root=repo_root,
                                 now=NOW)


@pytest.fixture
def store(tmp_path):
    s = Store(tmp_path / "data")
    s.put_user(User(id="alice", display_name="Alice",
                    roles={"demo/repo": "expert"}))
    s.put_user(User(id="bob", display_name="Bob",
                    roles={"demo/repo": "learner"}))
    s.put_user(User(id="carol", display_name="Carol",
                    roles={"demo/repo": "learner", "other/repo": "expert"}))
    return s


def seeded_published(store, assignees=("bob",)):
    draft = make_draft()
    store.put_draft(draft)
    tour = store.publish_tour(draft.tour.id, list(assignees), now=NOW)
    return tour


class TestPutTour:
    def test_new_tour_expected_zero_gets_revision_one(self, store):
        draft = make_draft()
        assert store.put_draft(draft) == draft.tour.revision == 1
        assert store.get_tour(draft.tour.id) == draft.tour

    def test_new_tour_with_nonzero_expected_conflicts(self, store):
        draft = make_draft()
        with pytest.raises(ConflictError) as exc:
            store.put_tour(draft.tour, 3)
        assert exc.value.details["current"] == 0

    def test_stale_expected_conflicts(self, store):
        draft = make_draft()
        store.put_draft(draft)
        with pytest.raises(ConflictError):
            store.put_tour(draft.tour, 5)

    def test_sequential_writes_advance_revision(self, store):
        draft = make_draft()
        store.put_draft(draft)
        edited = genpipe.apply_review(
            draft.tour, [genpipe.ReviewEdit("editStepTitle", {
                "stepId": draft.tour.steps[0].id, "title": "Entry point"})],
            "alice", now=NOW)
        assert store.put_tour(edited, 1) == 2
        assert store.get_tour(draft.tour.id).steps[0].title == "Entry point"

    def test_invalid_tour_rejected_and_not_written(self, store):
        draft = make_draft()
        broken = replace(draft.tour, steps=[])
        with pytest.raises(InvalidTourError):
            store.put_tour(broken, 0)
        with pytest.raises(UnknownEntityError):
            store.get_tour(draft.tour.id)

    def test_concurrent_writers_exactly_one_conflict(self, store):
        draft = make_draft()
        store.put_draft(draft)
        edited = genpipe.apply_review(draft.tour, [], "alice", now=NOW)
        outcomes = []
        barrier = threading.Barrier(2)

        def writer():
            barrier.wait()
            try:
                store.put_tour(edited, 1)
                outcomes.append("ok")
            except ConflictError:
                outcomes.append("conflict")

        threads = [threading.Thread(target=writer) for _ in range(2)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert sorted(outcomes) == ["conflict", "ok"]

    def test_provenance_and_raw_output_stored(self, store):
        draft = make_draft()
        store.put_draft(draft)
        record_raw = store.get_raw_provider_output(draft.tour.id)
        assert record_raw == draft.raw_provider_output
        assert json.loads(record_raw)["title"]


class TestDraftSlot:
    def test_published_tour_keeps_draft_alongside(self, store):
        tour = seeded_published(store)
        draft = store.begin_revision(tour.id, now=NOW)
        assert draft.status == "draft"
        assert draft.revision == tour.revision + 1
        assert store.get_tour(tour.id).status == "published"
        assert store.get_working_tour(tour.id) == draft

    def test_begin_revision_is_idempotent(self, store):
        tour = seeded_published(store)
        first = store.begin_revision(tour.id, now=NOW)
        again = store.begin_revision(tour.id, now=NOW)
        assert first == again

    def test_draft_edits_version_against_draft_revision(self, store):
        tour = seeded_published(store)
        draft = store.begin_revision(tour.id, now=NOW)
        edited = genpipe.apply_review(draft, [], "alice", now=NOW)
        stored = store.put_tour(edited, draft.revision)
        assert stored == draft.revision + 1
        # the published version stays frozen while edits accumulate
        assert store.get_tour(tour.id).revision == tour.revision

    def test_republish_swaps_draft_in_and_keeps_assignments(self, store):
        tour = seeded_published(store, assignees=("bob", "carol"))
        store.record_progress("bob", tour.id, tour.steps[0].id)
        draft = store.begin_revision(tour.id, now=NOW)
        edited = genpipe.apply_review(
            draft, [genpipe.ReviewEdit("editStepBody", {
                "stepId": draft.steps[0].id, "body": "Fresh explanation."})],
            "alice", now=NOW)
        store.put_tour(edited, draft.revision)
        republished = store.publish_tour(tour.id, now=NOW)
        assert republished.status == "published"
        assert republished.steps[0].body == "Fresh explanation."
        assert store.get_working_tour(tour.id) == republished
        statuses = {a["learnerId"]: a["status"]
                    for a in store.list_assignments(tour_id=tour.id)}
        assert statuses == {"bob": IN_PROGRESS, "carol": NOT_STARTED}


class TestPublish:
    def test_publish_assigns_and_clears_raw_output(self, store):
        draft = make_draft()
        store.put_draft(draft)
        tour = store.publish_tour(draft.tour.id, ["bob"], now=NOW)
        assert tour.status == "published"
        assert store.get_raw_provider_output(tour.id) is None
        assignment = store.get_assignment(tour.id, "bob")
        assert assignment["status"] == NOT_STARTED

    def test_publish_unknown_assignee_rejected_before_any_write(self, store):
        draft = make_draft()
        store.put_draft(draft)
        with pytest.raises(UnknownEntityError):
            store.publish_tour(draft.tour.id, ["bob", "ghost"], now=NOW)
        assert store.get_tour(draft.tour.id).status == "draft"
        assert store.list_assignments(tour_id=draft.tour.id) == []

    def test_double_publish_rejected(self, store):
        tour = seeded_published(store)
        with pytest.raises(NotDraftError):
            store.publish_tour(tour.id, now=NOW)


class TestAssignmentsAndProgress:
    def test_create_assignment_idempotent(self, store):
        tour = seeded_published(store)
        first = store.create_assignment(tour.id, "carol", now=NOW)
        again = store.create_assignment(tour.id, "carol", now=NOW)
        assert first == again
        assert len(store.list_assignments(tour_id=tour.id)) == 2

    def test_assignment_requires_known_tour_and_user(self, store):
        tour = seeded_published(store)
        with pytest.raises(UnknownEntityError):
            store.create_assignment("t-missing", "bob")
        with pytest.raises(UnknownEntityError):
            store.create_assignment(tour.id, "ghost")

    def test_status_derivation_walks_not_started_to_completed(self, store):
        tour = seeded_published(store)
        assert store.get_assignment(tour.id, "bob")["status"] == NOT_STARTED
        record = store.record_progress("bob", tour.id, tour.steps[0].id)
        assert record["status"] == IN_PROGRESS
        record = store.record_progress("bob", tour.id, tour.steps[1].id)
        assert record["status"] == COMPLETED

    def test_progress_is_idempotent(self, store):
        tour = seeded_published(store)
        once = store.record_progress("bob", tour.id, tour.steps[0].id)
        twice = store.record_progress("bob", tour.id, tour.steps[0].id)
        assert once == twice

    def test_unassigned_learner_rejected(self, store):
        tour = seeded_published(store)
        with pytest.raises(NotAssignedError):
            store.record_progress("carol", tour.id, tour.steps[0].id)

    def test_unknown_step_rejected(self, store):
        tour = seeded_published(store)
        with pytest.raises(UnknownStepError):
            store.record_progress("bob", tour.id, "s-nope")

    def test_derive_status_ignores_steps_dropped_by_revision(self):
        assert derive_status([], ["a", "b"]) == NOT_STARTED
        assert derive_status(["a"], ["a", "b"]) == IN_PROGRESS
        assert derive_status(["a", "b"], ["a", "b"]) == COMPLETED
        # steps completed under an older revision no longer count
        assert derive_status(["gone"], ["a", "b"]) == NOT_STARTED
        assert derive_status(["gone", "a", "b"], ["a", "b"]) == COMPLETED


class TestAttempts:
    def test_attempt_recorded_and_latest_wins(self, store):
        tour = seeded_published(store)
        q = tour.quiz.questions[0].id
        store.record_attempt("bob", tour.id, {q: 1}, 50, now=NOW)
        store.record_attempt("bob", tour.id, {q: 0}, 100, now=NOW)
        latest = store.latest_attempts(tour.id)
        assert latest["bob"]["score"] == 100
        assert latest["bob"]["answers"] == {q: 0}

    def test_attempt_requires_assignment(self, store):
        tour = seeded_published(store)
        with pytest.raises(NotAssignedError):
            store.record_attempt("carol", tour.id, {}, 80)

    def test_out_of_range_score_is_a_caller_bug(self, store):
        tour = seeded_published(store)
        with pytest.raises(ValueError):
            store.record_attempt("bob", tour.id, {}, 101)


class TestNotesQuestionsFeedback:
    def test_notes_are_private_to_their_author(self, store):
        tour = seeded_published(store, assignees=("bob", "carol"))
        store.add_note("bob", tour.id, tour.steps[0].id, "my reminder", now=NOW)
        store.add_note("carol", tour.id, tour.steps[0].id, "hers", now=NOW)
        bob_notes = store.notes_for(tour.id, "bob")
        assert [n["text"] for n in bob_notes] == ["my reminder"]
        assert all(n["private"] for n in bob_notes)

    def test_note_ids_unique_for_identical_text(self, store):
        tour = seeded_published(store)
        a = store.add_note("bob", tour.id, tour.steps[0].id, "same", now=NOW)
        b = store.add_note("bob", tour.id, tour.steps[0].id, "same", now=NOW)
        assert a["id"] != b["id"]

    def test_note_requires_known_step(self, store):
        tour = seeded_published(store)
        with pytest.raises(UnknownStepError):
            store.add_note("bob", tour.id, "s-nope", "text")

    def test_question_thread_answered_by_expert(self, store):
        tour = seeded_published(store)
        q = store.add_question("bob", tour.id, tour.steps[0].id,
                               "Why does run() come first?", now=NOW)
        assert q["answer"] is None
        answered = store.answer_question("alice", q["id"],
                                         "It wires up the config.", now=NOW)
        assert answered["answer"]["expertId"] == "alice"
        assert store.questions_for(tour.id)[0]["answer"]["text"] \
            == "It wires up the config."

    def test_learner_cannot_answer(self, store):
        tour = seeded_published(store)
        q = store.add_question("bob", tour.id, tour.steps[0].id, "?", now=NOW)
        with pytest.raises(ForbiddenRoleError):
            store.answer_question("bob", q["id"], "because")

    def test_expert_role_is_per_repo(self, store):
        # carol is an expert elsewhere but a learner on this repo
        tour = seeded_published(store)
        q = store.add_question("bob", tour.id, tour.steps[0].id, "?", now=NOW)
        with pytest.raises(ForbiddenRoleError):
            store.answer_question("carol", q["id"], "nope")

    def test_answer_unknown_question(self, store):
        seeded_published(store)
        with pytest.raises(UnknownEntityError):
            store.answer_question("alice", "qst-nope", "text")

    def test_feedback_upserts_per_learner(self, store):
        tour = seeded_published(store)
        store.add_feedback("bob", tour.id, 3, "fine", now=NOW)
        store.add_feedback("bob", tour.id, 5, "great on reread", now=NOW)
        entries = store.feedback_for(tour.id)
        assert len(entries) == 1
        assert entries[0]["rating"] == 5
        assert entries[0]["comment"] == "great on reread"

    @pytest.mark.parametrize("rating", [0, 6, -1, True, 3.5])
    def test_bad_rating_rejected(self, store, rating):
        tour = seeded_published(store)
        with pytest.raises(InvalidRatingError):
            store.add_feedback("bob", tour.id, rating)

    def test_feedback_comment_optional(self, store):
        tour = seeded_published(store)
        entry = store.add_feedback("bob", tour.id, 4, now=NOW)
        assert "comment" not in entry


class TestListTours:
    def test_exploratory_visible_only_to_creator(self, store):
        seeded_published(store)
        ctx = genpipe.assemble_context(
            [{"path": "src/extra.py", "startLine": 1, "endLine": 2}],
            "What does extra do?", TREE)
        solo = genpipe.generate_exploratory(
            ctx, genpipe.StubProvider(), "carol", repo_root="demo/repo", now=NOW)
        store.put_tour(solo, 0)
        assert {t.id for t in store.list_tours(viewer="carol")} \
            == {t.id for t in store.list_tours()}
        bob_sees = store.list_tours(viewer="bob")
        assert solo.id not in {t.id for t in bob_sees}
        assert len(bob_sees) == 1

    def test_filters_by_repo_and_status(self, store):
        tour = seeded_published(store)
        other = make_draft(intent="Second tour.", repo_root="other/repo")
        store.put_draft(other)
        assert [t.id for t in store.list_tours(repo_root="demo/repo")] \
            == [tour.id]
        assert [t.id for t in store.list_tours(status="draft")] \
            == [other.tour.id]


class TestIntegrity:
    def test_clean_store_validates(self, store):
        tour = seeded_published(store)
        store.record_progress("bob", tour.id, tour.steps[0].id)
        store.add_note("bob", tour.id, tour.steps[0].id, "n", now=NOW)
        q = store.add_question("bob", tour.id, tour.steps[0].id, "?", now=NOW)
        store.answer_question("alice", q["id"], "a", now=NOW)
        store.add_feedback("bob", tour.id, 4, now=NOW)
        store.record_attempt("bob", tour.id, {}, 90, now=NOW)
        assert store.validate_store() == []

    def test_dangling_references_reported(self, store, tmp_path):
        tour = seeded_published(store)
        path = tmp_path / "data" / "assignments.json"
        data = json.loads(path.read_text())
        data["t-missing"] = {"ghost": {"tourId": "t-missing",
                                       "learnerId": "ghost",
                                       "assignedAt": "2026-03-01T09:30:00Z"}}
        path.write_text(json.dumps(data))
        issues = store.validate_store()
        assert any("missing tour t-missing" in issue for issue in issues)
        assert any("missing user ghost" in issue for issue in issues)

    def test_progress_against_removed_step_reported(self, store, tmp_path):
        tour = seeded_published(store)
        path = tmp_path / "data" / "progress.json"
        path.write_text(json.dumps({tour.id: {"bob": {
            "tourId": tour.id, "learnerId": "bob",
            "completedStepIds": ["s-gone"]}}}))
        issues = store.validate_store()
        assert any("unknown steps s-gone" in issue for issue in issues)

    def test_files_land_in_expected_layout(self, store, tmp_path):
        seeded_published(store)
        names = sorted(p.name for p in (tmp_path / "data").glob("*.json"))
        assert "tours.json" in names and "assignments.json" in names
        # canonical form: sorted keys, two-space indent, trailing newline
        text = (tmp_path / "data" / "tours.json").read_text()
        assert text.endswith("\n")
        assert json.dumps(json.loads(text), ensure_ascii=False,
                          sort_keys=True, indent=2) + "\n" == text


CRASH_SCRIPT = """
import os, sys
sys.path.insert(0, {src!r})
from tourforge.store import Store, User

store = Store({data!r})
store.put_user(User(id="writer", display_name="W", roles={{}}))
print("ready", flush=True)
for i in range(100000):
    store.put_user(User(id=f"user-{{i % 7}}", display_name=f"gen {{i}}", roles={{}}))
"""


class TestCrashSafety:
    def test_kill_during_write_loop_leaves_readable_state(self, tmp_path):
        data_dir = tmp_path / "data"
        script = CRASH_SCRIPT.format(
            src=str(Path(__file__).resolve().parents[1] / "src"),
            data=str(data_dir))
        proc = subprocess.Popen([sys.executable, "-c", script],
                                stdout=subprocess.PIPE, text=True)
        try:
            assert proc.stdout.readline().strip() == "ready"
            time.sleep(0.2)
        finally:
            proc.send_signal(signal.SIGKILL)
            proc.wait(timeout=10)
        store = Store(data_dir)
        users = store.list_users()
        assert any(u.id == "writer" for u in users)
        # every user document parsed back cleanly out of canonical JSON
        for user in users:
            assert user.display_name
        assert store.validate_store() == []
        # no temp files left visible as collections
        assert sorted(p.suffix for p in data_dir.glob("*")) \
            == [".json"] * len(list(data_dir.glob("*")))


class TestOpenStore:
    def test_env_var_controls_location(self, tmp_path, monkeypatch):
        monkeypatch.setenv("TOURFORGE_DATA_DIR", str(tmp_path / "envdata"))
        store = open_store()
        store.put_user(User(id="x", display_name="X", roles={}))
        assert (tmp_path / "envdata" / "users.json").exists()

    def test_explicit_argument_wins(self, tmp_path, monkeypatch):
        monkeypatch.setenv("TOURFORGE_DATA_DIR", str(tmp_path / "ignored"))
        store = open_store(tmp_path / "direct")
        store.put_user(User(id="x", display_name="X", roles={}))
        assert (tmp_path / "direct" / "users.json").exists()
        assert not (tmp_path / "ignored").exists()
