"""Tour generation pipeline.

Covers the whole path from expert input to a publishable tour: context
assembly from code selections, prompt rendering from editable templates,
provider calls (deterministic stub or a remote HTTP endpoint), parsing of
provider output, draft review edits, and publication checks.

Everything here is pure apart from the remote provider call; persistence
belongs to the store module.
"""

from __future__ import annotations

import json
import os
import re
import urllib.error
import urllib.request
from dataclasses import dataclass, field, replace
from importlib import resources

from .anchors import capture_anchor, split_lines
from .canonical import canonical_dumps, content_id, iso_now
from .errors import (
    EditTargetMissingError,
    EmptySelectionError,
    ForbiddenRoleError,
    NeedsEditPendingError,
    NotDraftError,
    ProviderConfigError,
    ProviderUnreachableError,
    SchemaMismatchError,
    SelectionOutOfBoundsError,
    UnknownPathError,
    UnparseableOutputError,
    ValidationFailedError,
)
from .model import (
    Anchor,
    DialogueLine,
    DialogueScript,
    Quiz,
    QuizQuestion,
    RepoRef,
    Tour,
    TourStep,
    validate_tour,
)

DEFAULT_BUDGET_UNITS = 32_000

# Distractor paths used when the context offers fewer than three real ones.
FILLER_PATHS = ("docs/overview.md", "scripts/setup.sh", "legacy/attic.txt",
                "tools/release.py", "config/defaults.ini")


# ---------------------------------------------------------------------------
# Context assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Selection:
    """One highlighted code region, captured verbatim at assembly time.

    ``before_lines``/``after_lines`` hold surrounding context so later stages
    can build durable anchors without re-reading files that may have changed.
    """

    path: str
    start_line: int
    end_line: int
    snippet_lines: tuple[str, ...]
    before_lines: tuple[str, ...] = ()
    after_lines: tuple[str, ...] = ()

    def payload_chars(self) -> int:
        return len(self.path) + sum(len(line) + 1 for line in self.snippet_lines)

    def anchor(self) -> Anchor:
        return Anchor(
            path=self.path, start_line=self.start_line, end_line=self.end_line,
            target=list(self.snippet_lines), before=list(self.before_lines),
            after=list(self.after_lines))

    def to_doc(self) -> dict:
        return {
            "path": self.path,
            "startLine": self.start_line,
            "endLine": self.end_line,
            "snippetLines": list(self.snippet_lines),
            "beforeLines": list(self.before_lines),
            "afterLines": list(self.after_lines),
        }


@dataclass(frozen=True)
class GenerationContext:
    intent: str
    selections: tuple[Selection, ...]
    tree_excerpt: tuple[str, ...]
    budget_units: int = DEFAULT_BUDGET_UNITS
    notes: tuple[str, ...] = ()

    def paths(self) -> tuple[str, ...]:
        seen = []
        for selection in self.selections:
            if selection.path not in seen:
                seen.append(selection.path)
        return tuple(seen)

    def to_doc(self) -> dict:
        return {
            "intent": self.intent,
            "selections": [s.to_doc() for s in self.selections],
            "treeExcerpt": list(self.tree_excerpt),
            "budgetUnits": self.budget_units,
            "notes": list(self.notes),
        }


def assemble_context(
    selections: list[dict],
    intent: str,
    file_tree: dict[str, str],
    budget_units: int = DEFAULT_BUDGET_UNITS,
) -> GenerationContext:
    """Capture the requested regions verbatim and fit them to the budget.

    Over-budget selections are dropped whole from the end (the first one is
    always kept) and the drop is recorded in ``notes``.  The tree excerpt
    lists the selected files plus their sibling filenames.
    """
    if not selections:
        raise EmptySelectionError("at least one selection is required")

    captured = []
    for wanted in selections:
        path, start, end = wanted["path"], wanted["startLine"], wanted["endLine"]
        if path not in file_tree:
            raise SelectionOutOfBoundsError(
                f"{path} is not in the file tree", path=path)
        lines = split_lines(file_tree[path])
        if not (isinstance(start, int) and isinstance(end, int)
                and 1 <= start <= end <= len(lines)):
            raise SelectionOutOfBoundsError(
                f"{path}:{start}-{end} outside 1..{len(lines)}", path=path)
        anchor = capture_anchor(lines, start, end, path=path)
        captured.append(Selection(
            path=path, start_line=start, end_line=end,
            snippet_lines=tuple(anchor.target),
            before_lines=tuple(anchor.before), after_lines=tuple(anchor.after)))

    kept, total = [], 0
    for selection in captured:
        cost = selection.payload_chars()
        if kept and total + cost > budget_units:
            break
        kept.append(selection)
        total += cost
    notes = ()
    if len(kept) < len(captured):
        notes = (f"TRUNCATED: dropped {len(captured) - len(kept)} of "
                 f"{len(captured)} selections to fit budget {budget_units}",)

    selected_dirs = {os.path.dirname(s.path) for s in kept}
    excerpt = sorted(p for p in file_tree
                     if os.path.dirname(p) in selected_dirs)
    return GenerationContext(
        intent=intent, selections=tuple(kept), tree_excerpt=tuple(excerpt),
        budget_units=budget_units, notes=notes)


# ---------------------------------------------------------------------------
# Prompt rendering
# ---------------------------------------------------------------------------

_SCHEMA_TEXT = {
    "tour": (
        'Reply with only a JSON object, optionally inside a single fenced code '
        'block, of the form:\n'
        '{"title": string, "steps": [{"path": string, "startLine": int, '
        '"endLine": int, "title": string, "body": string}], '
        '"quiz": [{"stepIndex": int, "prompt": string, '
        '"choices": [string, ...], "answerIndex": int}]}\n'
        'Order steps to follow the code\'s logical flow. "quiz" may be '
        'omitted. Every "path" must be one of the selection paths.'
    ),
    "quiz": (
        'Reply with only a JSON object, optionally inside a single fenced code '
        'block, of the form:\n'
        '{"quiz": [{"stepIndex": int, "prompt": string, '
        '"choices": [string, ...], "answerIndex": int}]}\n'
        'Write one comprehension question per step, 2 to 6 choices each, '
        'with "stepIndex" referring to the step order shown above.'
    ),
    "dialogue": (
        'Reply with only a JSON object, optionally inside a single fenced code '
        'block, of the form:\n'
        '{"lines": [{"speaker": "learner" | "expert", "text": string}]}\n'
        'Speakers must strictly alternate, starting with the learner asking '
        'about the first step.'
    ),
}

NO_INTENT_SENTENCE = "No author intent provided."


def _template_text(name: str) -> str:
    return (resources.files("tourforge") / "templates" / f"{name}.txt").read_text(
        encoding="utf-8")


def _render_selections(ctx: GenerationContext) -> str:
    blocks = []
    for selection in ctx.selections:
        header = f"### {selection.path}:{selection.start_line}-{selection.end_line}"
        blocks.append(header + "\n" + "\n".join(selection.snippet_lines))
    return "\n\n".join(blocks)


def render_prompt(ctx: GenerationContext, template: str) -> str:
    """Fill the named template; same context in, byte-identical prompt out."""
    if template not in _SCHEMA_TEXT:
        raise ValueError(f"unknown template {template!r}")
    intent = ctx.intent.strip() or NO_INTENT_SENTENCE
    text = _template_text(template)
    text = text.replace("{{intent}}", intent)
    text = text.replace("{{selections}}", _render_selections(ctx))
    text = text.replace("{{schema}}", _SCHEMA_TEXT[template])
    return text


# ---------------------------------------------------------------------------
# Providers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProviderConfig:
    name: str = "stub"
    mode: str = "stub"
    endpoint_url: str | None = None
    model_name: str | None = None
    auth_token: str | None = None

    @classmethod
    def from_env(cls, env=None) -> "ProviderConfig":
        env = os.environ if env is None else env
        mode = env.get("TOURFORGE_PROVIDER", "stub")
        if mode not in ("stub", "remote"):
            raise ProviderConfigError(
                f"TOURFORGE_PROVIDER must be 'stub' or 'remote', got {mode!r}")
        return cls(
            name=mode,
            mode=mode,
            endpoint_url=env.get("TOURFORGE_PROVIDER_URL"),
            model_name=env.get("TOURFORGE_PROVIDER_MODEL"),
            auth_token=env.get("TOURFORGE_PROVIDER_TOKEN"),
        )


class StubProvider:
    """Deterministic in-process provider; emits the same JSON the remote
    contract expects so the full render/parse path runs in tests and demos."""

    name = "stub"

    def complete(self, kind: str, prompt: str, payload) -> str:
        if kind in ("tour", "quiz"):
            content = self._tour_content(payload)
            if kind == "quiz":
                content = {"quiz": content["quiz"]}
            return canonical_dumps(content)
        if kind == "dialogue":
            return canonical_dumps(self._dialogue_content(payload))
        raise ValueError(f"unknown completion kind {kind!r}")

    def _tour_content(self, ctx: GenerationContext) -> dict:
        intent = ctx.intent.strip() or NO_INTENT_SENTENCE
        title = intent.split(". ")[0].rstrip(".")[:80] if ctx.intent.strip() \
            else f"Walkthrough of {ctx.selections[0].path}"
        steps = []
        for selection in ctx.selections:
            first = next(
                (line.strip() for line in selection.snippet_lines if line.strip()),
                "(blank region)")
            steps.append({
                "path": selection.path,
                "startLine": selection.start_line,
                "endLine": selection.end_line,
                "title": f"{selection.path}:{selection.start_line}-{selection.end_line}",
                "body": f"{intent} This step covers `{first}`.",
            })
        quiz = []
        paths = list(ctx.paths())
        for index, selection in enumerate(ctx.selections):
            correct = selection.path
            pool = [p for p in paths if p != correct]
            pool += [p for p in FILLER_PATHS if p != correct and p not in pool]
            choices = sorted([correct] + pool[:3])
            quiz.append({
                "stepIndex": index,
                "prompt": f"Which file does step {index + 1} walk through?",
                "choices": choices,
                "answerIndex": choices.index(correct),
            })
        return {"title": title, "steps": steps, "quiz": quiz}

    def _dialogue_content(self, tour: Tour) -> dict:
        lines = []
        for step in tour.steps:
            first_sentence = step.body.split(". ")[0].strip()
            if first_sentence and not first_sentence.endswith("."):
                first_sentence += "."
            lines.append({"speaker": "learner",
                          "text": f'Can you walk me through "{step.title}"?'})
            lines.append({"speaker": "expert", "text": first_sentence})
        return {"lines": lines}


class RemoteProvider:
    """Single HTTP JSON call: POST {prompt, model?} -> {"text": ...}."""

    def __init__(self, config: ProviderConfig, timeout: float = 30.0):
        if not config.endpoint_url:
            raise ProviderConfigError("remote provider requires TOURFORGE_PROVIDER_URL")
        self.config = config
        self.timeout = timeout
        self.name = config.name

    def complete(self, kind: str, prompt: str, payload) -> str:
        body: dict = {"prompt": prompt, "kind": kind}
        if self.config.model_name:
            body["model"] = self.config.model_name
        headers = {"Content-Type": "application/json"}
        if self.config.auth_token:
            headers["Authorization"] = f"Bearer {self.config.auth_token}"
        request = urllib.request.Request(
            self.config.endpoint_url, data=json.dumps(body).encode("utf-8"),
            headers=headers, method="POST")
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                raw = response.read().decode("utf-8")
        except (urllib.error.URLError, TimeoutError, ConnectionError, OSError) as exc:
            raise ProviderUnreachableError(
                f"provider call failed: {exc}", endpoint=self.config.endpoint_url)
        try:
            parsed = json.loads(raw)
        except json.JSONDecodeError:
            return raw
        if isinstance(parsed, dict) and isinstance(parsed.get("text"), str):
            return parsed["text"]
        return raw


def make_provider(config: ProviderConfig | None = None):
    config = config or ProviderConfig.from_env()
    if config.mode == "remote":
        return RemoteProvider(config)
    return StubProvider()


# ---------------------------------------------------------------------------
# Provider output parsing
# ---------------------------------------------------------------------------

_FENCE = re.compile(r"```[a-zA-Z0-9_-]*\n(.*?)```", re.DOTALL)


def _extract_json(text: str) -> dict:
    fenced = _FENCE.search(text)
    candidate = fenced.group(1) if fenced else text
    try:
        parsed = json.loads(candidate.strip())
    except json.JSONDecodeError as exc:
        raise UnparseableOutputError(
            f"provider output is not JSON: {exc}", rawProviderOutput=text)
    if not isinstance(parsed, dict):
        raise UnparseableOutputError(
            "provider output is not a JSON object", rawProviderOutput=text)
    return parsed


def _require_field(obj: dict, key: str, kind, path: str, raw: str):
    if key not in obj:
        raise SchemaMismatchError(
            f"missing field {path}/{key}", field_path=f"{path}/{key}",
            rawProviderOutput=raw)
    value = obj[key]
    if kind is int and isinstance(value, bool):
        raise SchemaMismatchError(
            f"field {path}/{key} must be an integer", field_path=f"{path}/{key}",
            rawProviderOutput=raw)
    if not isinstance(value, kind):
        raise SchemaMismatchError(
            f"field {path}/{key} has the wrong type", field_path=f"{path}/{key}",
            rawProviderOutput=raw)
    return value


def parse_provider_output(text: str, ctx: GenerationContext) -> dict:
    """Normalize provider output into {title, steps, quiz}.

    Accepts either a bare JSON object or the first fenced code block in the
    reply.  Steps must reference paths present in the context; structural
    problems name the offending field.
    """
    parsed = _extract_json(text)
    known_paths = set(ctx.paths())

    steps = parsed.get("steps", [])
    if not isinstance(steps, list):
        raise SchemaMismatchError("steps must be a list", field_path="steps",
                                  rawProviderOutput=text)
    out_steps = []
    for i, step in enumerate(steps):
        path_prefix = f"steps/{i}"
        if not isinstance(step, dict):
            raise SchemaMismatchError(
                f"{path_prefix} must be an object", field_path=path_prefix,
                rawProviderOutput=text)
        path = _require_field(step, "path", str, path_prefix, text)
        start = _require_field(step, "startLine", int, path_prefix, text)
        end = _require_field(step, "endLine", int, path_prefix, text)
        title = _require_field(step, "title", str, path_prefix, text)
        body = _require_field(step, "body", str, path_prefix, text)
        if start < 1 or end < start:
            raise SchemaMismatchError(
                f"{path_prefix} has an invalid line range",
                field_path=f"{path_prefix}/startLine", rawProviderOutput=text)
        if path not in known_paths:
            raise UnknownPathError(
                f"step {i} references {path!r}, which is not in the context",
                path=path, rawProviderOutput=text)
        out_steps.append({"path": path, "startLine": start, "endLine": end,
                          "title": title, "body": body})

    quiz_items = parsed.get("quiz", [])
    if quiz_items is None:
        quiz_items = []
    if not isinstance(quiz_items, list):
        raise SchemaMismatchError("quiz must be a list", field_path="quiz",
                                  rawProviderOutput=text)
    out_quiz = []
    for j, item in enumerate(quiz_items):
        path_prefix = f"quiz/{j}"
        if not isinstance(item, dict):
            raise SchemaMismatchError(
                f"{path_prefix} must be an object", field_path=path_prefix,
                rawProviderOutput=text)
        step_index = _require_field(item, "stepIndex", int, path_prefix, text)
        prompt = _require_field(item, "prompt", str, path_prefix, text)
        choices = _require_field(item, "choices", list, path_prefix, text)
        answer = _require_field(item, "answerIndex", int, path_prefix, text)
        if not (0 <= step_index < len(out_steps)):
            raise SchemaMismatchError(
                f"{path_prefix}/stepIndex is out of range",
                field_path=f"{path_prefix}/stepIndex", rawProviderOutput=text)
        if not (2 <= len(choices) <= 6) or not all(isinstance(c, str) for c in choices):
            raise SchemaMismatchError(
                f"{path_prefix}/choices must hold 2 to 6 strings",
                field_path=f"{path_prefix}/choices", rawProviderOutput=text)
        if not (0 <= answer < len(choices)):
            raise SchemaMismatchError(
                f"{path_prefix}/answerIndex is out of range",
                field_path=f"{path_prefix}/answerIndex", rawProviderOutput=text)
        out_quiz.append({"stepIndex": step_index, "prompt": prompt,
                         "choices": list(choices), "answerIndex": answer})

    title = parsed.get("title")
    if title is not None and not isinstance(title, str):
        raise SchemaMismatchError("title must be a string", field_path="title",
                                  rawProviderOutput=text)
    return {"title": title, "steps": out_steps, "quiz": out_quiz}


# ---------------------------------------------------------------------------
# Draft construction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TourDraft:
    tour: Tour
    provenance: str
    raw_provider_output: str | None = None


def _selection_for(ctx: GenerationContext, path: str, start: int, end: int) -> Selection:
    same_path = [s for s in ctx.selections if s.path == path]
    for selection in same_path:
        if start <= selection.end_line and end >= selection.start_line:
            return selection
    return same_path[0]


def _build_tour(ctx, content, *, tour_type, status, author, repo_root, now):
    step_docs = content["steps"]
    steps = []
    for i, doc in enumerate(step_docs):
        selection = _selection_for(ctx, doc["path"], doc["startLine"], doc["endLine"])
        step_id = content_id("s", str(i), doc["path"], doc["title"], doc["body"])
        steps.append(TourStep(
            id=step_id, order=i, title=doc["title"], body=doc["body"],
            anchor=selection.anchor(), needs_edit=False))

    quiz = None
    if content["quiz"] and tour_type != "exploratory":
        questions = []
        for j, item in enumerate(content["quiz"]):
            step_id = steps[item["stepIndex"]].id
            questions.append(QuizQuestion(
                id=content_id("q", str(j), step_id, item["prompt"]),
                step_id=step_id, prompt=item["prompt"],
                choices=list(item["choices"]), answer_index=item["answerIndex"]))
        quiz = Quiz(questions=questions)

    title = content["title"] or f"Walkthrough of {ctx.selections[0].path}"
    # author is part of identity: two people generating over the same
    # selections must get distinct tours
    fingerprint = [tour_type, author, ctx.intent] + [
        f"{s.path}:{s.start_line}-{s.end_line}" for s in ctx.selections]
    timestamp = iso_now(now)
    return Tour(
        id=content_id("t", *fingerprint),
        title=title, tour_type=tour_type, status=status, revision=1,
        author=author, repo_ref=RepoRef(root_path=repo_root),
        steps=steps, quiz=quiz, dialogue=None,
        created_at=timestamp, updated_at=timestamp)


def generate_guided(
    ctx: GenerationContext,
    provider,
    *,
    author: str = "expert",
    repo_root: str = ".",
    now=None,
) -> TourDraft:
    """Render the tour prompt, call the provider, and parse a draft out."""
    prompt = render_prompt(ctx, "tour")
    raw = provider.complete("tour", prompt, ctx)
    content = parse_provider_output(raw, ctx)
    tour = _build_tour(ctx, content, tour_type="guided-ai", status="draft",
                       author=author, repo_root=repo_root, now=now)
    return TourDraft(tour=tour, provenance="ai", raw_provider_output=raw)


def stub_generate(
    ctx: GenerationContext,
    *,
    author: str = "expert",
    repo_root: str = ".",
    now=None,
) -> TourDraft:
    return generate_guided(ctx, StubProvider(), author=author,
                           repo_root=repo_root, now=now)


def generate_exploratory(
    ctx: GenerationContext,
    provider,
    requester: str,
    *,
    repo_root: str = ".",
    now=None,
) -> Tour:
    """Self-serve tour for one requester: no quiz, no review gate."""
    prompt = render_prompt(ctx, "tour")
    raw = provider.complete("tour", prompt, ctx)
    content = parse_provider_output(raw, ctx)
    return _build_tour(ctx, content, tour_type="exploratory", status="published",
                       author=requester, repo_root=repo_root, now=now)


# ---------------------------------------------------------------------------
# Review and publication
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReviewEdit:
    op: str
    payload: dict = field(default_factory=dict)

    @classmethod
    def from_doc(cls, doc: dict) -> "ReviewEdit":
        payload = {k: v for k, v in doc.items() if k != "op"}
        return cls(op=doc.get("op", ""), payload=payload)


def _find_step(steps: list[TourStep], step_id: str) -> int:
    for i, step in enumerate(steps):
        if step.id == step_id:
            return i
    raise EditTargetMissingError(f"no step with id {step_id!r}", stepId=step_id)


def _find_question(quiz: Quiz | None, question_id: str) -> int:
    if quiz is not None:
        for i, question in enumerate(quiz.questions):
            if question.id == question_id:
                return i
    raise EditTargetMissingError(
        f"no quiz question with id {question_id!r}", questionId=question_id)


def _reindexed(steps: list[TourStep]) -> list[TourStep]:
    return [replace(step, order=i) for i, step in enumerate(steps)]


def apply_review(
    tour: Tour,
    edits: list,
    editor: str,
    *,
    co_experts: tuple[str, ...] = (),
    now=None,
) -> Tour:
    """Apply review edits in order to a draft; one revision bump per call."""
    if tour.status != "draft":
        raise NotDraftError(f"tour {tour.id} is {tour.status}, not draft")
    if editor != tour.author and editor not in co_experts:
        raise ForbiddenRoleError(
            f"{editor!r} may not edit a draft authored by {tour.author!r}")

    steps = list(tour.steps)
    quiz = tour.quiz

    for raw_edit in edits:
        edit = raw_edit if isinstance(raw_edit, ReviewEdit) else ReviewEdit.from_doc(raw_edit)
        payload = edit.payload
        if edit.op == "editStepBody":
            i = _find_step(steps, payload["stepId"])
            steps[i] = replace(steps[i], body=payload["body"], needs_edit=False)
        elif edit.op == "editStepTitle":
            i = _find_step(steps, payload["stepId"])
            steps[i] = replace(steps[i], title=payload["title"])
        elif edit.op == "reorderSteps":
            order = payload["order"]
            if sorted(order) != sorted(step.id for step in steps):
                raise EditTargetMissingError(
                    "reorder must list every step id exactly once")
            by_id = {step.id: step for step in steps}
            steps = _reindexed([by_id[step_id] for step_id in order])
        elif edit.op == "deleteStep":
            i = _find_step(steps, payload["stepId"])
            removed = steps.pop(i)
            steps = _reindexed(steps)
            if quiz is not None:
                remaining = [q for q in quiz.questions if q.step_id != removed.id]
                quiz = Quiz(questions=remaining) if remaining else None
        elif edit.op == "insertStep":
            anchor_doc = payload["anchor"]
            anchor = Anchor(
                path=anchor_doc["path"], start_line=anchor_doc["startLine"],
                end_line=anchor_doc["endLine"],
                target=list(anchor_doc["target"]),
                before=list(anchor_doc.get("before", [])),
                after=list(anchor_doc.get("after", [])))
            index = max(0, min(int(payload.get("index", len(steps))), len(steps)))
            step_id = content_id("s", payload["title"], payload["body"],
                                 anchor.path, str(anchor.start_line))
            steps.insert(index, TourStep(
                id=step_id, order=index, title=payload["title"],
                body=payload["body"], anchor=anchor, needs_edit=False))
            steps = _reindexed(steps)
        elif edit.op == "editQuizQuestion":
            i = _find_question(quiz, payload["questionId"])
            question = quiz.questions[i]
            if "stepId" in payload:
                _find_step(steps, payload["stepId"])
                question = replace(question, step_id=payload["stepId"])
            if "prompt" in payload:
                question = replace(question, prompt=payload["prompt"])
            if "choices" in payload:
                question = replace(question, choices=list(payload["choices"]))
            if "answerIndex" in payload:
                question = replace(question, answer_index=payload["answerIndex"])
            questions = list(quiz.questions)
            questions[i] = question
            quiz = Quiz(questions=questions)
        elif edit.op == "deleteQuizQuestion":
            i = _find_question(quiz, payload["questionId"])
            questions = [q for j, q in enumerate(quiz.questions) if j != i]
            quiz = Quiz(questions=questions) if questions else None
        else:
            raise EditTargetMissingError(f"unknown review op {edit.op!r}")

    return replace(tour, steps=steps, quiz=quiz, revision=tour.revision + 1,
                   updated_at=iso_now(now))


def publish(tour: Tour, assignee_group: list[str] | tuple[str, ...] = (), *,
            now=None) -> Tour:
    """Validate a draft and flip it to published.

    Assignment rows for ``assignee_group`` are persisted by the store; this
    stage only checks the tour itself is fit to ship.
    """
    if tour.status != "draft":
        raise NotDraftError(f"tour {tour.id} is {tour.status}, not draft")
    pending = [step.id for step in tour.steps if step.needs_edit]
    if pending:
        raise NeedsEditPendingError(
            f"steps still need edits: {', '.join(pending)}", stepIds=pending)
    published = replace(tour, status="published", updated_at=iso_now(now))
    report = validate_tour(published.to_doc())
    if report:
        raise ValidationFailedError(
            f"{len(report)} validation issue(s) block publication", report=report)
    return published


# ---------------------------------------------------------------------------
# Dialogue generation
# ---------------------------------------------------------------------------

def generate_dialogue(tour: Tour, provider, *, now=None) -> DialogueScript:
    """Produce an alternating learner/expert script for a tour's steps."""
    blocks = [f"### {step.title}\n{step.body}" for step in tour.steps]
    text = _template_text("dialogue")
    text = text.replace("{{intent}}", tour.title)
    text = text.replace("{{selections}}", "\n\n".join(blocks))
    prompt = text.replace("{{schema}}", _SCHEMA_TEXT["dialogue"])

    raw = provider.complete("dialogue", prompt, tour)
    parsed = _extract_json(raw)
    lines = parsed.get("lines")
    if not isinstance(lines, list) or not lines:
        raise SchemaMismatchError("lines must be a nonempty list",
                                  field_path="lines", rawProviderOutput=raw)
    script = []
    previous = None
    for i, line in enumerate(lines):
        path_prefix = f"lines/{i}"
        if not isinstance(line, dict):
            raise SchemaMismatchError(f"{path_prefix} must be an object",
                                      field_path=path_prefix, rawProviderOutput=raw)
        speaker = _require_field(line, "speaker", str, path_prefix, raw)
        line_text = _require_field(line, "text", str, path_prefix, raw)
        if speaker not in ("learner", "expert"):
            raise SchemaMismatchError(
                f"{path_prefix}/speaker must be learner or expert",
                field_path=f"{path_prefix}/speaker", rawProviderOutput=raw)
        if speaker == previous:
            raise SchemaMismatchError(
                f"{path_prefix}/speaker repeats; speakers must alternate",
                field_path=f"{path_prefix}/speaker", rawProviderOutput=raw)
        if not line_text.strip():
            raise SchemaMismatchError(
                f"{path_prefix}/text is empty",
                field_path=f"{path_prefix}/text", rawProviderOutput=raw)
        script.append(DialogueLine(speaker=speaker, text=line_text))
        previous = speaker
    return DialogueScript(lines=script)
