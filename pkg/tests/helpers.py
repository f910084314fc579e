"""Shared test fixtures: generators and independent oracles.

The oracles here are deliberately naive (full-matrix DP, linear scans,
arithmetic replay of edit scripts) so they stay independent of the engine
code paths they check.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from tourforge.canonical import iso_now
from tourforge.model import (
    Anchor,
    DialogueLine,
    DialogueScript,
    Quiz,
    QuizQuestion,
    RepoRef,
    Tour,
    TourStep,
)

WORDS = [
    "ledger", "invoice", "transfer", "batch", "queue", "handler", "parser",
    "router", "config", "session", "token", "payment", "report", "audit",
    "export", "worker", "retry", "cache", "schema", "billing",
]


def levenshtein_oracle(a: str, b: str) -> int:
    """Full-matrix edit distance; the reference for the engine's DP."""
    rows, cols = len(a) + 1, len(b) + 1
    matrix = [[0] * cols for _ in range(rows)]
    for i in range(rows):
        matrix[i][0] = i
    for j in range(cols):
        matrix[0][j] = j
    for i in range(1, rows):
        for j in range(1, cols):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            matrix[i][j] = min(
                matrix[i - 1][j] + 1,
                matrix[i][j - 1] + 1,
                matrix[i - 1][j - 1] + cost,
            )
    return matrix[-1][-1]


# ---------------------------------------------------------------------------
# Random valid tours
# ---------------------------------------------------------------------------

def random_tour(rng: random.Random, index: int = 0) -> Tour:
    """A structurally valid tour with randomized shape and content."""
    tour_type = rng.choice(["guided-manual", "guided-ai", "voice", "exploratory"])
    status = rng.choice(["draft", "published"])
    step_count = rng.randint(1, 5)
    steps = []
    for i in range(step_count):
        start = rng.randint(1, 40)
        length = rng.randint(1, 4)
        target = [f"{rng.choice(WORDS)}_{rng.randrange(10_000)}" for _ in range(length)]
        before = [f"ctx_{rng.randrange(10_000)}" for _ in range(rng.randint(0, 3))]
        after = [f"ctx_{rng.randrange(10_000)}" for _ in range(rng.randint(0, 3))]
        body = f"Explains {rng.choice(WORDS)} behaviour, détail {rng.randrange(100)}."
        steps.append(TourStep(
            id=f"s{index}-{i}",
            order=i,
            title=f"Step {i + 1}: {rng.choice(WORDS)}",
            body=body if (status == "published" or rng.random() < 0.8) else "",
            anchor=Anchor(
                path=f"src/{rng.choice(WORDS)}/{rng.choice(WORDS)}.py",
                start_line=start,
                end_line=start + length - 1,
                target=target,
                before=before,
                after=after,
            ),
            needs_edit=False if status == "published" else rng.random() < 0.2,
        ))

    quiz = None
    if tour_type != "exploratory" and rng.random() < 0.6:
        questions = []
        for q in range(rng.randint(1, 4)):
            correct = rng.randint(0, 3)
            questions.append(QuizQuestion(
                id=f"q{index}-{q}",
                step_id=rng.choice(steps).id,
                prompt=f"What does {rng.choice(WORDS)} do?",
                choices=[f"choice {c}" for c in range(4)],
                answer_index=correct,
            ))
        quiz = Quiz(questions=questions)

    dialogue = None
    if rng.random() < 0.4:
        speakers = ["learner", "expert"] if rng.random() < 0.7 else ["expert", "learner"]
        lines = [
            DialogueLine(speaker=speakers[i % 2], text=f"Line {i} about {rng.choice(WORDS)}.")
            for i in range(rng.randint(1, 6))
        ]
        dialogue = DialogueScript(lines=lines)

    return Tour(
        id=f"t{index}-{rng.randrange(100_000)}",
        title=f"Tour of {rng.choice(WORDS)} №{index}",
        tour_type=tour_type,
        status=status,
        revision=rng.randint(1, 9),
        author=f"user-{rng.randint(1, 5)}",
        repo_ref=RepoRef(
            root_path=f"repos/{rng.choice(WORDS)}",
            commit_id="abc123def456" if rng.random() < 0.5 else None,
        ),
        steps=steps,
        quiz=quiz,
        dialogue=dialogue,
        created_at=iso_now(),
        updated_at=iso_now(),
    )


# ---------------------------------------------------------------------------
# Synthetic files and edit scripts for anchor fuzzing
# ---------------------------------------------------------------------------

_uid = 0


def unique_line(rng: random.Random) -> str:
    """A source-like line whose content never repeats across a test run.

    The hex tail keeps distinct lines dissimilar enough that a fully deleted
    region cannot accidentally score above the fuzzy threshold against its
    neighbours.
    """
    global _uid
    _uid += 1
    token = "".join(rng.choice("0123456789abcdef") for _ in range(rng.randint(8, 14)))
    return f"    {rng.choice(WORDS)}_{_uid:05d} = {rng.choice(WORDS)}({token})"


def make_file(rng: random.Random, line_count: int) -> list[str]:
    return [unique_line(rng) for _ in range(line_count)]


@dataclass
class EditReplay:
    """Arithmetic replay of an edit script over tracked anchor positions.

    Maintains, for each anchor, where its protected zone currently sits and
    what the engine should report as the new start line.  Used as the
    independent oracle for shifted-anchor resolution.
    """

    lines: list[str]
    zones: list[tuple[int, int]]          # 1-based inclusive protected zones
    starts: list[int]                     # tracked anchor start lines
    edits: int = 0

    def allowed_gaps(self) -> list[int]:
        """0-based insertion gaps that leave every protected zone contiguous."""
        gaps = []
        for gap in range(len(self.lines) + 1):
            if all(not (a <= gap <= b - 1) for a, b in self.zones):
                gaps.append(gap)
        return gaps

    def insert(self, gap: int, new_lines: list[str]) -> None:
        self.lines[gap:gap] = new_lines
        count = len(new_lines)
        self.zones = [
            (a + count, b + count) if gap <= a - 1 else (a, b)
            for a, b in self.zones
        ]
        self.starts = [s + count if gap <= s - 1 else s for s in self.starts]
        self.edits += 1

    def deletable_ranges(self, max_len: int) -> list[tuple[int, int]]:
        """1-based inclusive ranges of up to ``max_len`` untouched lines."""
        ranges = []
        for start in range(1, len(self.lines) + 1):
            for end in range(start, min(start + max_len - 1, len(self.lines)) + 1):
                if all(end < a or start > b for a, b in self.zones):
                    ranges.append((start, end))
        return ranges

    def delete(self, start: int, end: int) -> None:
        count = end - start + 1
        del self.lines[start - 1:end]
        self.zones = [
            (a - count, b - count) if end < a else (a, b)
            for a, b in self.zones
        ]
        self.starts = [s - count if end < s else s for s in self.starts]
        self.edits += 1

    def apply_random_script(self, rng: random.Random, op_count: int) -> None:
        for _ in range(op_count):
            if rng.random() < 0.5:
                gaps = self.allowed_gaps()
                if gaps:
                    inserted = [unique_line(rng) for _ in range(rng.randint(1, 4))]
                    self.insert(rng.choice(gaps), inserted)
            else:
                ranges = self.deletable_ranges(max_len=3)
                if ranges:
                    start, end = rng.choice(ranges)
                    self.delete(start, end)


# ---------------------------------------------------------------------------
# Random session logs for voice-to-tour
# ---------------------------------------------------------------------------

def random_session_log(rng: random.Random):
    """A valid session log plus the snapshot tree it was recorded against.

    Events may repeat consecutively (exercising merge), segments are ordered,
    non-overlapping, uniquely numbered, and all within the session window.
    """
    from tourforge.voice import SessionEvent, SessionLog, TranscriptSegment

    tree_lines = {f"src/f{i}.py": make_file(rng, rng.randint(12, 24))
                  for i in range(rng.randint(1, 4))}
    paths = sorted(tree_lines)
    regions = []
    for path in paths:
        count = len(tree_lines[path])
        for _ in range(2):
            start = rng.randint(1, count - 2)
            regions.append((path, start, start + rng.randint(0, 2)))

    events = []
    t = round(rng.uniform(0.0, 12.0), 2)
    for _ in range(rng.randint(1, 6)):
        path, start, end = rng.choice(regions)
        events.append(SessionEvent(t=t, path=path, start_line=start, end_line=end))
        if rng.random() < 0.3:  # consecutive duplicate to be merged away
            t = round(t + rng.uniform(0.5, 4.0), 2)
            events.append(SessionEvent(t=t, path=path, start_line=start, end_line=end))
        t = round(t + rng.uniform(5.0, 45.0), 2)
    session_end = round(events[-1].t + rng.uniform(8.0, 60.0), 2)

    segments = []
    cursor = round(rng.uniform(0.0, 3.0), 2)
    k = 0
    while True:
        length = round(rng.uniform(0.8, 7.0), 2)
        if cursor + length > session_end:
            break
        segments.append(TranscriptSegment(
            t_start=cursor, t_end=round(cursor + length, 2),
            text=f"utterance-{k} about {rng.choice(WORDS)}"))
        k += 1
        cursor = round(cursor + length + rng.uniform(0.0, 9.0), 2)

    log = SessionLog(session_end=session_end, events=tuple(events),
                     segments=tuple(segments), snapshot_dir="snapshot")
    tree = {path: "\n".join(lines) + "\n" for path, lines in tree_lines.items()}
    return log, tree


# ---------------------------------------------------------------------------
# Midpoint oracle for voice-to-tour alignment
# ---------------------------------------------------------------------------

def midpoint_assignment_oracle(
    event_times: list[float], session_end: float,
    segments: list[tuple[float, float]],
) -> list[int]:
    """Brute-force: for each segment, the interval containing its midpoint.

    Intervals are ``[t_i, t_{i+1})`` with the last closed at ``session_end``;
    midpoints before the first event map to interval 0.
    """
    assignments = []
    for t_start, t_end in segments:
        mid = (t_start + t_end) / 2.0
        if mid < event_times[0]:
            assignments.append(0)
            continue
        chosen = None
        for i, t in enumerate(event_times):
            upper = event_times[i + 1] if i + 1 < len(event_times) else session_end
            if i + 1 < len(event_times):
                if t <= mid < upper:
                    chosen = i
                    break
            else:
                if t <= mid <= upper:
                    chosen = i
                    break
        assignments.append(chosen if chosen is not None else len(event_times) - 1)
    return assignments
