"""Anchor capture, similarity scoring, and re-resolution after edits."""

import random
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import EditReplay, levenshtein_oracle, make_file, random_tour
from tourforge.anchors import (
    EXACT,
    FUZZY,
    SHIFTED,
    STALE,
    AnchorConfig,
    capture_anchor,
    reanchor_tour,
    resolve_anchor,
    similarity,
    split_lines,
)
from tourforge.errors import AnchorRangeError
from tourforge.model import Anchor

TEN = [f"line {i}" for i in range(1, 11)]


class TestCapture:
    def test_interior_range_takes_three_lines_each_side(self):
        a = capture_anchor(TEN, 4, 5, path="f.py")
        assert a.target == ["line 4", "line 5"]
        assert a.before == ["line 1", "line 2", "line 3"]
        assert a.after == ["line 6", "line 7", "line 8"]

    def test_context_clipped_at_file_start(self):
        a = capture_anchor(TEN, 1, 1)
        assert a.before == []
        assert a.after == ["line 2", "line 3", "line 4"]

    def test_whole_file_has_no_context(self):
        a = capture_anchor(TEN, 1, 10)
        assert a.before == [] and a.after == []
        assert a.target == TEN

    def test_out_of_bounds_raises(self):
        for start, end in [(0, 2), (3, 2), (1, 11), (11, 11)]:
            with pytest.raises(AnchorRangeError):
                capture_anchor(TEN, start, end)

    def test_custom_context_width(self):
        a = capture_anchor(TEN, 5, 5, config=AnchorConfig(context_lines=1))
        assert a.before == ["line 4"] and a.after == ["line 6"]


class TestSimilarity:
    def test_identical_lines_score_one(self):
        assert similarity(["x"], ["x"]) == 1.0
        assert similarity([], []) == 1.0

    def test_trailing_whitespace_is_ignored(self):
        assert similarity(["foo  ", "bar\t"], ["foo", "bar"]) == 1.0

    def test_single_substitution_quarter_penalty(self):
        assert similarity(["abcd"], ["abxd"]) == 0.75

    def test_empty_versus_content(self):
        assert similarity([""], ["abcd"]) == 0.0

    @settings(max_examples=80, deadline=None)
    @given(st.lists(st.text(alphabet="ab c", max_size=6), max_size=4),
           st.lists(st.text(alphabet="ab c", max_size=6), max_size=4))
    def test_matches_full_matrix_oracle_and_is_symmetric(self, a, b):
        norm = lambda lines: "\n".join(line.rstrip() for line in lines)
        expected = 1.0 - (levenshtein_oracle(norm(a), norm(b))
                          / max(len(norm(a)), len(norm(b)), 1))
        got = similarity(a, b)
        assert got == expected
        assert got == similarity(b, a)
        assert 0.0 <= got <= 1.0


class TestSplitLines:
    def test_trailing_newline_adds_nothing(self):
        assert split_lines("a\nb\n") == ["a", "b"]
        assert split_lines("a\nb") == ["a", "b"]
        assert split_lines("") == []
        assert split_lines("\n") == [""]


class TestResolve:
    def test_unchanged_file_is_exact(self):
        lines = make_file(random.Random(1), 30)
        a = capture_anchor(lines, 12, 14, path="f.py")
        r = resolve_anchor(a, lines)
        assert (r.kind, r.new_start_line, r.new_end_line, r.score) == (EXACT, 12, 14, 1.0)
        assert not r.ambiguous

    def test_trailing_whitespace_change_is_still_exact(self):
        lines = make_file(random.Random(2), 30)
        a = capture_anchor(lines, 12, 14)
        edited = list(lines)
        edited[12] = edited[12] + "   "
        assert resolve_anchor(a, edited).kind == EXACT

    def test_insertion_above_shifts_by_exact_offset(self):
        rng = random.Random(3)
        replay = EditReplay(lines=make_file(rng, 40), zones=[(17, 22)], starts=[20])
        a = capture_anchor(replay.lines, 20, 21, path="f.py")
        replay.insert(5, make_file(rng, 7))
        r = resolve_anchor(a, replay.lines)
        assert r.kind == SHIFTED
        assert r.new_start_line == a.start_line + 7 == replay.starts[0]
        assert r.new_end_line == r.new_start_line + 1
        assert r.score == 1.0 and not r.ambiguous

    def test_deletion_above_shifts_up(self):
        rng = random.Random(4)
        replay = EditReplay(lines=make_file(rng, 40), zones=[(17, 22)], starts=[20])
        a = capture_anchor(replay.lines, 20, 21)
        replay.delete(3, 5)
        r = resolve_anchor(a, replay.lines)
        assert (r.kind, r.new_start_line) == (SHIFTED, 17)

    def test_duplicate_window_nearest_wins_and_flags_ambiguity(self):
        block = ["dup a", "dup b"]
        pad = lambda n, k: [f"pad {n}.{i}" for i in range(k)]
        # copies at lines 4-5 and 8-9; the stored range 6-7 sits midway
        lines = pad(0, 3) + block + pad(1, 2) + block + pad(2, 3)
        a = Anchor(path="f.py", start_line=6, end_line=7, target=block,
                   before=[], after=[])
        r = resolve_anchor(a, lines)
        assert r.kind == SHIFTED and r.ambiguous
        assert r.new_start_line == 4  # earlier window on a distance tie

    def test_nearer_duplicate_wins_without_ambiguity(self):
        block = ["dup a", "dup b"]
        pad = lambda n, k: [f"pad {n}.{i}" for i in range(k)]
        lines = pad(0, 3) + block + pad(1, 3) + block + pad(2, 3)
        a = Anchor(path="f.py", start_line=6, end_line=7, target=block,
                   before=[], after=[])
        r = resolve_anchor(a, lines)
        assert (r.kind, r.new_start_line, r.ambiguous) == (SHIFTED, 4, False)

    def test_single_character_edit_resolves_fuzzy_in_place(self):
        lines = make_file(random.Random(5), 30)
        a = capture_anchor(lines, 10, 12)
        edited = list(lines)
        edited[10] = edited[10].replace("(", "[", 1)
        r = resolve_anchor(a, edited)
        assert r.kind == FUZZY
        assert r.new_start_line == 10 and r.new_end_line == 12
        assert r.score >= 0.8

    def test_fuzzy_score_matches_weighted_formula(self):
        lines = make_file(random.Random(6), 20)
        a = capture_anchor(lines, 8, 9)
        edited = list(lines)
        edited[7] = edited[7][:6] + "Q" + edited[7][7:]
        r = resolve_anchor(a, edited)
        window = edited[7:9]
        ctx = edited[4:7] + edited[9:12]
        expected = (0.7 * similarity(window, a.target)
                    + 0.3 * similarity(ctx, list(a.before) + list(a.after)))
        assert r.kind == FUZZY and r.score == pytest.approx(expected, abs=1e-12)

    def test_full_target_deletion_goes_stale(self):
        lines = make_file(random.Random(7), 30)
        a = capture_anchor(lines, 14, 16)
        r = resolve_anchor(a, lines[:13] + lines[16:])
        assert r.kind == STALE
        assert r.new_start_line is None and r.new_end_line is None
        assert 0.0 <= r.score < 0.8

    def test_empty_file_goes_stale(self):
        lines = make_file(random.Random(8), 10)
        a = capture_anchor(lines, 4, 6)
        r = resolve_anchor(a, [])
        assert r.kind == STALE and r.score == 0.0

    def test_oversized_file_goes_stale_with_note(self):
        a = Anchor(path="f.py", start_line=1, end_line=1, target=["x"],
                   before=[], after=[])
        r = resolve_anchor(a, ["x"] * 50_001)
        assert r.kind == STALE and r.note and "50000" in r.note
        assert resolve_anchor(a, ["x"] * 3, AnchorConfig(max_scan_lines=2)).kind == STALE

    def test_resolution_is_pure(self):
        lines = make_file(random.Random(9), 25)
        a = capture_anchor(lines, 10, 11)
        edited = lines[:4] + lines[6:]
        assert resolve_anchor(a, edited) == resolve_anchor(a, edited)


class TestEditScriptProperty:
    """Edits that keep clear of the context zone must resolve losslessly."""

    @settings(max_examples=40, deadline=None)
    @given(st.integers(min_value=0, max_value=2**31), st.integers(min_value=1, max_value=8))
    def test_clear_zone_edits_resolve_exact_or_shifted(self, seed, ops):
        rng = random.Random(seed)
        line_count = rng.randint(20, 45)
        lines = make_file(rng, line_count)
        size = rng.randint(1, 3)
        start = rng.randint(1, line_count - size + 1)
        end = start + size - 1
        anchor = capture_anchor(lines, start, end, path="f.py")
        replay = EditReplay(
            lines=list(lines),
            zones=[(max(1, start - 3), min(line_count, end + 3))],
            starts=[start],
        )
        replay.apply_random_script(rng, ops)
        r = resolve_anchor(anchor, replay.lines)
        expected_start = replay.starts[0]
        assert r.kind in (EXACT, SHIFTED)
        assert r.kind == (EXACT if expected_start == start else SHIFTED)
        assert r.new_start_line == expected_start
        assert r.new_end_line == expected_start + size - 1
        assert r.score == 1.0 and not r.ambiguous


class TestReanchorTour:
    def _tour_with_files(self, rng):
        file_lines = {f"src/m{i}.py": make_file(rng, 30) for i in range(3)}
        tour = random_tour(rng)
        steps = []
        for i, step in enumerate(tour.steps):
            path = f"src/m{i % 3}.py"
            anchor = capture_anchor(file_lines[path], 10 + i, 11 + i, path=path)
            steps.append(replace(step, anchor=anchor, needs_edit=False))
        tree = {path: "\n".join(lines) + "\n" for path, lines in file_lines.items()}
        return tour.with_steps(steps), tree

    def test_untouched_tree_returns_equal_tour_all_exact(self):
        tour, files = self._tour_with_files(random.Random(11))
        out, report = reanchor_tour(tour, files)
        assert out == tour
        assert report.counts["exact"] == len(tour.steps)
        assert report.counts["shifted"] == report.counts["fuzzy"] == report.counts["stale"] == 0

    def test_shifted_file_updates_anchors_and_bumps_revision(self):
        tour, files = self._tour_with_files(random.Random(12))
        rng = random.Random(13)
        files["src/m0.py"] = "\n".join(make_file(rng, 4)) + "\n" + files["src/m0.py"]
        out, report = reanchor_tour(tour, files)
        assert out.revision == tour.revision + 1
        assert report.counts["shifted"] >= 1 and report.counts["stale"] == 0
        for step, old in zip(out.steps, tour.steps):
            if step.anchor.path == "src/m0.py":
                assert step.anchor.start_line == old.anchor.start_line + 4
                # anchor recaptured from the current file, context included
                fresh = capture_anchor(split_lines(files["src/m0.py"]),
                                       step.anchor.start_line,
                                       step.anchor.end_line, path="src/m0.py")
                assert step.anchor == fresh
                assert not step.needs_edit

    def test_missing_file_marks_step_stale_and_needs_edit(self):
        tour, files = self._tour_with_files(random.Random(14))
        del files["src/m1.py"]
        out, report = reanchor_tour(tour, files)
        assert report.counts["stale"] >= 1
        for step in out.steps:
            if step.anchor.path == "src/m1.py":
                assert step.needs_edit
        assert any(e.resolution.note for e in report.entries
                   if e.resolution.kind == STALE)

    def test_report_entries_cover_every_step_in_order(self):
        tour, files = self._tour_with_files(random.Random(15))
        _, report = reanchor_tour(tour, files)
        assert [e.step_id for e in report.entries] == [s.id for s in tour.steps]
        doc = report.to_doc()
        assert set(doc["counts"]) == {"exact", "shifted", "fuzzy", "stale"}
