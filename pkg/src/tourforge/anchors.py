"""Durable anchor capture and re-resolution after code evolution.

Anchors survive edits by remembering the verbatim target lines plus a few
context lines on each side.  Resolution classifies every anchor as exact
(unchanged), shifted (moved verbatim), fuzzy (located by similarity), or
stale (no credible match), so tours degrade gracefully instead of rotting.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .errors import AnchorRangeError
from .model import Anchor, Tour

EXACT = "exact"
SHIFTED = "shifted"
FUZZY = "fuzzy"
STALE = "stale"
KINDS = (EXACT, SHIFTED, FUZZY, STALE)


@dataclass(frozen=True)
class AnchorConfig:
    """Tuning constants, centralized so experiments can adjust them."""

    context_lines: int = 3        # captured each side of the target
    fuzzy_threshold: float = 0.8  # minimum score to accept a fuzzy match
    target_weight: float = 0.7
    context_weight: float = 0.3
    max_scan_lines: int = 50_000  # larger files resolve stale, protecting latency


DEFAULT_CONFIG = AnchorConfig()


@dataclass(frozen=True)
class AnchorResolution:
    """Outcome of re-locating one anchor against current file content."""

    kind: str
    new_start_line: int | None = None
    new_end_line: int | None = None
    score: float = 0.0
    ambiguous: bool = False
    note: str | None = None

    def to_doc(self) -> dict:
        doc = {"kind": self.kind, "score": round(self.score, 4), "ambiguous": self.ambiguous}
        if self.new_start_line is not None:
            doc["newStartLine"] = self.new_start_line
            doc["newEndLine"] = self.new_end_line
        if self.note is not None:
            doc["note"] = self.note
        return doc


@dataclass(frozen=True)
class ResolutionEntry:
    step_id: str
    path: str
    resolution: AnchorResolution

    def to_doc(self) -> dict:
        return {
            "stepId": self.step_id,
            "path": self.path,
            "resolution": self.resolution.to_doc(),
        }


@dataclass(frozen=True)
class ResolutionReport:
    entries: list[ResolutionEntry] = field(default_factory=list)

    @property
    def counts(self) -> dict[str, int]:
        result = {kind: 0 for kind in KINDS}
        for entry in self.entries:
            result[entry.resolution.kind] += 1
        return result

    def to_doc(self) -> dict:
        return {
            "entries": [entry.to_doc() for entry in self.entries],
            "counts": self.counts,
        }


def split_lines(text: str) -> list[str]:
    """Split file content on LF; a trailing newline adds no empty line."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def _norm(lines: list[str]) -> str:
    """Join with LF after stripping trailing whitespace per line."""
    return "\n".join(line.rstrip() for line in lines)


def _levenshtein(a: str, b: str) -> int:
    """Character-level edit distance (two-row DP, common affixes trimmed)."""
    if a == b:
        return 0
    limit = min(len(a), len(b))
    prefix = 0
    while prefix < limit and a[prefix] == b[prefix]:
        prefix += 1
    a, b = a[prefix:], b[prefix:]
    limit = min(len(a), len(b))
    suffix = 0
    while suffix < limit and a[len(a) - 1 - suffix] == b[len(b) - 1 - suffix]:
        suffix += 1
    if suffix:
        a, b = a[: len(a) - suffix], b[: len(b) - suffix]
    if not a:
        return len(b)
    if not b:
        return len(a)
    if len(b) > len(a):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, char_a in enumerate(a, 1):
        current = [i]
        append = current.append
        for j, char_b in enumerate(b, 1):
            if char_a == char_b:
                append(previous[j - 1])
            else:
                append(1 + min(previous[j - 1], previous[j], current[j - 1]))
        previous = current
    return previous[-1]


def _levenshtein_bounded(a: str, b: str, cap: int) -> int:
    """Exact edit distance when it is <= cap, otherwise any value > cap.

    Row minima are nondecreasing, so a row whose minimum exceeds the cap
    proves the final distance does too and the scan can stop early.
    """
    if a == b:
        return 0
    if cap < 0:
        return 1
    limit = min(len(a), len(b))
    prefix = 0
    while prefix < limit and a[prefix] == b[prefix]:
        prefix += 1
    a, b = a[prefix:], b[prefix:]
    limit = min(len(a), len(b))
    suffix = 0
    while suffix < limit and a[len(a) - 1 - suffix] == b[len(b) - 1 - suffix]:
        suffix += 1
    if suffix:
        a, b = a[: len(a) - suffix], b[: len(b) - suffix]
    if not a or not b:
        distance = max(len(a), len(b))
        return distance if distance <= cap else cap + 1
    if abs(len(a) - len(b)) > cap:
        return cap + 1
    if len(b) > len(a):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, char_a in enumerate(a, 1):
        current = [i]
        append = current.append
        row_min = i
        for j, char_b in enumerate(b, 1):
            if char_a == char_b:
                cell = previous[j - 1]
            else:
                cell = 1 + min(previous[j - 1], previous[j], current[j - 1])
            append(cell)
            if cell < row_min:
                row_min = cell
        if row_min > cap:
            return cap + 1
        previous = current
    distance = previous[-1]
    return distance if distance <= cap else cap + 1


def similarity(a: list[str], b: list[str]) -> float:
    """Normalized edit-distance similarity between two line lists, in [0, 1].

    Defined as ``1 - lev(norm(a), norm(b)) / max(|norm(a)|, |norm(b)|, 1)``;
    symmetric and reflexive.
    """
    norm_a, norm_b = _norm(a), _norm(b)
    if norm_a == norm_b:
        return 1.0
    distance = _levenshtein(norm_a, norm_b)
    return 1.0 - distance / max(len(norm_a), len(norm_b), 1)


def capture_anchor(
    file_lines: list[str],
    start_line: int,
    end_line: int,
    path: str = "",
    config: AnchorConfig = DEFAULT_CONFIG,
) -> Anchor:
    """Capture an anchor for the 1-based inclusive range of ``file_lines``."""
    if not (1 <= start_line <= end_line <= len(file_lines)):
        raise AnchorRangeError(
            f"range {start_line}..{end_line} out of bounds for {len(file_lines)}-line file")
    context = config.context_lines
    return Anchor(
        path=path,
        start_line=start_line,
        end_line=end_line,
        target=list(file_lines[start_line - 1:end_line]),
        before=list(file_lines[max(0, start_line - 1 - context):start_line - 1]),
        after=list(file_lines[end_line:end_line + context]),
    )


def resolve_anchor(
    anchor: Anchor,
    file_lines: list[str],
    config: AnchorConfig = DEFAULT_CONFIG,
) -> AnchorResolution:
    """Re-locate ``anchor`` in ``file_lines``; deterministic, never raises.

    Decision order: exact content at the stored range, then verbatim windows
    elsewhere (nearest to the stored position, earlier on ties), then the
    best-scoring fuzzy window at or above the threshold, otherwise stale.
    """
    total = len(file_lines)
    if total > config.max_scan_lines:
        return AnchorResolution(
            kind=STALE, score=0.0, ambiguous=False,
            note=f"file has {total} lines, over the {config.max_scan_lines}-line scan limit")

    size = len(anchor.target)
    normed = [line.rstrip() for line in file_lines]
    norm_target = tuple(line.rstrip() for line in anchor.target)

    if anchor.end_line <= total and tuple(
            normed[anchor.start_line - 1:anchor.end_line]) == norm_target:
        return AnchorResolution(
            kind=EXACT, new_start_line=anchor.start_line, new_end_line=anchor.end_line,
            score=1.0, ambiguous=False)

    candidates = [
        offset for offset in range(total - size + 1)
        if tuple(normed[offset:offset + size]) == norm_target
    ]
    if candidates:
        distances = [abs(offset + 1 - anchor.start_line) for offset in candidates]
        best_distance = min(distances)
        tied = [c for c, d in zip(candidates, distances) if d == best_distance]
        chosen = min(tied)
        return AnchorResolution(
            kind=SHIFTED, new_start_line=chosen + 1, new_end_line=chosen + size,
            score=1.0, ambiguous=len(tied) > 1)

    stored_context = list(anchor.before) + list(anchor.after)
    context = config.context_lines
    weight_t, weight_c = config.target_weight, config.context_weight
    norm_t = _norm(anchor.target)
    norm_ctx = _norm(stored_context)
    best_score = -1.0
    best_distance = 0
    best_offset = None
    ties = 0
    # Windows near the stored position are scored first so the running best
    # rises early; pruning below only skips windows that provably score
    # strictly under it, which keeps the result identical to a full scan.
    order = sorted(range(total - size + 1),
                   key=lambda o: (abs(o + 1 - anchor.start_line), o))
    for offset in order:
        window = file_lines[offset:offset + size]
        norm_w = _norm(window)
        max_t = max(len(norm_w), len(norm_t), 1)
        cap_t = int(max_t * (weight_t + weight_c - best_score + 1e-12) / weight_t) + 1
        dist_t = _levenshtein_bounded(norm_w, norm_t, cap_t)
        if dist_t > cap_t:
            continue
        sim_t = 1.0 - dist_t / max_t
        if weight_t * sim_t + weight_c < best_score - 1e-12:
            continue
        window_context = (file_lines[max(0, offset - context):offset]
                          + file_lines[offset + size:offset + size + context])
        norm_wc = _norm(window_context)
        max_c = max(len(norm_wc), len(norm_ctx), 1)
        cap_c = min(
            int(max_c * (1.0 - (best_score - 1e-12 - weight_t * sim_t)
                         / weight_c)) + 1,
            max_c)
        dist_c = _levenshtein_bounded(norm_wc, norm_ctx, cap_c)
        if dist_c > cap_c:
            continue
        score = weight_t * sim_t + weight_c * (1.0 - dist_c / max_c)
        if score < best_score - 1e-12:
            continue
        distance = abs(offset + 1 - anchor.start_line)
        if score > best_score:
            best_score, best_distance, best_offset, ties = score, distance, offset, 1
        elif score == best_score:
            if distance < best_distance:
                best_distance, best_offset, ties = distance, offset, 1
            elif distance == best_distance:
                ties += 1
    if best_offset is not None and best_score >= config.fuzzy_threshold:
        return AnchorResolution(
            kind=FUZZY, new_start_line=best_offset + 1, new_end_line=best_offset + size,
            score=best_score, ambiguous=ties > 1)
    return AnchorResolution(kind=STALE, score=max(best_score, 0.0), ambiguous=False)


def reanchor_tour(
    tour: Tour,
    file_tree: dict[str, str],
    config: AnchorConfig = DEFAULT_CONFIG,
) -> tuple[Tour, ResolutionReport]:
    """Resolve every step anchor against ``file_tree`` and update the tour.

    Resolved steps get fresh ranges, target, and context; stale steps keep
    their stored anchor but gain ``needsEdit``.  The revision is bumped only
    when something actually changed.  Pure: no clock, no I/O.
    """
    entries: list[ResolutionEntry] = []
    new_steps = []
    for step in tour.steps:
        path = step.anchor.path
        if path not in file_tree:
            resolution = AnchorResolution(
                kind=STALE, score=0.0, ambiguous=False, note="file missing from tree")
            new_steps.append(replace(step, needs_edit=True))
        else:
            lines = split_lines(file_tree[path])
            resolution = resolve_anchor(step.anchor, lines, config)
            if resolution.kind == STALE:
                new_steps.append(replace(step, needs_edit=True))
            else:
                fresh = capture_anchor(
                    lines, resolution.new_start_line, resolution.new_end_line,
                    path=path, config=config)
                new_steps.append(replace(step, anchor=fresh))
        entries.append(ResolutionEntry(step_id=step.id, path=path, resolution=resolution))

    report = ResolutionReport(entries=entries)
    if new_steps == tour.steps:
        return tour, report
    return replace(tour, steps=new_steps, revision=tour.revision + 1), report
