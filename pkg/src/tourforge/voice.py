"""Compile a recorded walkthrough into a draft tour.

A session log pairs timestamped code-selection events with transcript
segments.  Consecutive duplicate events are noise and collapse away; the
remaining events slice the session into intervals, and each segment lands in
the interval containing its midpoint.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass

from .anchors import capture_anchor, split_lines
from .canonical import canonical_dumps, canonical_loads, content_id, iso_now
from .errors import MalformedError, NoEventsError, SnapshotFileMissingError
from .genpipe import TourDraft
from .model import RepoRef, Tour, TourStep


@dataclass(frozen=True)
class SessionEvent:
    t: float
    path: str
    start_line: int
    end_line: int

    def key(self) -> tuple:
        return (self.path, self.start_line, self.end_line)

    def to_doc(self) -> dict:
        return {"t": self.t, "path": self.path,
                "startLine": self.start_line, "endLine": self.end_line}


@dataclass(frozen=True)
class TranscriptSegment:
    t_start: float
    t_end: float
    text: str

    def midpoint(self) -> float:
        return (self.t_start + self.t_end) / 2.0

    def to_doc(self) -> dict:
        return {"tStart": self.t_start, "tEnd": self.t_end, "text": self.text}


@dataclass(frozen=True)
class SessionLog:
    session_end: float
    events: tuple[SessionEvent, ...]
    segments: tuple[TranscriptSegment, ...]
    snapshot_dir: str | None = None

    def to_doc(self) -> dict:
        doc = {
            "sessionEnd": self.session_end,
            "events": [event.to_doc() for event in self.events],
            "segments": [segment.to_doc() for segment in self.segments],
        }
        if self.snapshot_dir is not None:
            doc["snapshotDir"] = self.snapshot_dir
        return doc


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MalformedError(f"{where} must be a number")
    return float(value)


def parse_session_log(text: str) -> SessionLog:
    """Parse and sanity-check a ``*.session.json`` document."""
    try:
        doc = canonical_loads(text)
    except Exception as exc:
        raise MalformedError(f"session log is not valid JSON: {exc}")
    if not isinstance(doc, dict):
        raise MalformedError("session log must be a JSON object")

    session_end = _number(doc.get("sessionEnd"), "sessionEnd")
    raw_events = doc.get("events")
    raw_segments = doc.get("segments")
    if not isinstance(raw_events, list) or not isinstance(raw_segments, list):
        raise MalformedError("events and segments must be lists")

    events = []
    previous_t = None
    for i, entry in enumerate(raw_events):
        where = f"events[{i}]"
        if not isinstance(entry, dict) or not isinstance(entry.get("path"), str):
            raise MalformedError(f"{where} must be an object with a path")
        t = _number(entry.get("t"), f"{where}.t")
        start, end = entry.get("startLine"), entry.get("endLine")
        if not (isinstance(start, int) and isinstance(end, int)
                and not isinstance(start, bool) and not isinstance(end, bool)
                and 1 <= start <= end):
            raise MalformedError(f"{where} has an invalid line range")
        if t < 0 or t > session_end:
            raise MalformedError(f"{where}.t is outside [0, sessionEnd]")
        if previous_t is not None and t < previous_t:
            raise MalformedError(f"{where} is out of time order")
        previous_t = t
        events.append(SessionEvent(t=t, path=entry["path"],
                                   start_line=start, end_line=end))

    segments = []
    previous_end = None
    for i, entry in enumerate(raw_segments):
        where = f"segments[{i}]"
        if not isinstance(entry, dict) or not isinstance(entry.get("text"), str) \
                or not entry["text"].strip():
            raise MalformedError(f"{where} must be an object with nonempty text")
        t_start = _number(entry.get("tStart"), f"{where}.tStart")
        t_end = _number(entry.get("tEnd"), f"{where}.tEnd")
        if not (0 <= t_start < t_end <= session_end):
            raise MalformedError(f"{where} has an invalid time range")
        if previous_end is not None and t_start < previous_end:
            raise MalformedError(f"{where} overlaps the previous segment")
        previous_end = t_end
        segments.append(TranscriptSegment(t_start=t_start, t_end=t_end,
                                          text=entry["text"]))

    snapshot_dir = doc.get("snapshotDir")
    if snapshot_dir is not None and not isinstance(snapshot_dir, str):
        raise MalformedError("snapshotDir must be a string")
    return SessionLog(session_end=session_end, events=tuple(events),
                      segments=tuple(segments), snapshot_dir=snapshot_dir)


def serialize_session_log(log: SessionLog) -> str:
    return canonical_dumps(log.to_doc())


def merge_adjacent(events: list[SessionEvent]) -> list[SessionEvent]:
    """Collapse consecutive events selecting the same region, keeping the first."""
    merged: list[SessionEvent] = []
    for event in events:
        if merged and merged[-1].key() == event.key():
            continue
        merged.append(event)
    return merged


def align(
    log: SessionLog,
    file_tree: dict[str, str],
    *,
    author: str = "expert",
    repo_root: str = ".",
    now=None,
) -> TourDraft:
    """Turn a session log into a draft tour, one step per merged event.

    Event times slice the session into half-open intervals (the last closes
    at ``sessionEnd``); each segment joins the interval holding its midpoint,
    and speech before the first event joins the first step.  Steps whose
    interval caught no speech come back empty with ``needsEdit`` set.
    """
    merged = merge_adjacent(list(log.events))
    if not merged:
        raise NoEventsError("session log has no selection events")

    times = [event.t for event in merged]
    buckets: list[list[TranscriptSegment]] = [[] for _ in merged]
    for segment in log.segments:
        mid = segment.midpoint()
        if mid > log.session_end:
            continue
        if mid < times[0]:
            buckets[0].append(segment)
            continue
        buckets[bisect_right(times, mid) - 1].append(segment)

    steps = []
    for i, event in enumerate(merged):
        if event.path not in file_tree:
            raise SnapshotFileMissingError(
                f"{event.path} is missing from the snapshot", path=event.path)
        lines = split_lines(file_tree[event.path])
        anchor = capture_anchor(lines, event.start_line, event.end_line,
                                path=event.path)
        body = " ".join(segment.text for segment in buckets[i])
        title = f"Step {i + 1}: {event.path}:{event.start_line}-{event.end_line}"
        step_id = content_id("s", str(i), event.path,
                             f"{event.start_line}-{event.end_line}", body)
        steps.append(TourStep(id=step_id, order=i, title=title, body=body,
                              anchor=anchor, needs_edit=not buckets[i]))

    fingerprint = ["voice", author, f"{log.session_end}"] + [
        f"{e.t}:{e.path}:{e.start_line}-{e.end_line}" for e in merged]
    timestamp = iso_now(now)
    tour = Tour(
        id=content_id("t", *fingerprint),
        title=f"Recorded walkthrough of {merged[0].path}",
        tour_type="voice", status="draft", revision=1, author=author,
        repo_ref=RepoRef(root_path=repo_root), steps=steps, quiz=None,
        dialogue=None, created_at=timestamp, updated_at=timestamp)
    return TourDraft(tour=tour, provenance="voice", raw_provider_output=None)
