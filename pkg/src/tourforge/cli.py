"""Terminal entry point: validate, generate, play, re-anchor, serve.

Exit codes are a contract for CI use: 0 success, 1 validation failure,
2 I/O failure, 3 stale anchors present, 4 configuration or usage error.
The player never writes to tour files.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import click

from . import genpipe, voice
from .anchors import STALE, AnchorResolution, resolve_anchor, reanchor_tour, split_lines
from .canonical import write_text_atomic
from .errors import ProviderConfigError, ProviderUnreachableError, TourForgeError
from .model import Tour, parse_tour, serialize_tour, validate_tour
from .service import load_file_tree, quiz_score

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_STALE = 3
EXIT_CONFIG = 4


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        click.echo(f"error: cannot read {path}: {exc.strerror}", err=True)
        sys.exit(EXIT_IO)


def _write_tour(tour: Tour, out: str | None) -> str:
    target = out or f"{tour.id}.tour.json"
    try:
        write_text_atomic(target, serialize_tour(tour))
    except OSError as exc:
        click.echo(f"error: cannot write {target}: {exc.strerror}", err=True)
        sys.exit(EXIT_IO)
    return target


def _parse_file_flag(raw: str) -> dict:
    path, sep, span = raw.rpartition(":")
    start, dash, end = span.partition("-")
    if not sep or not dash or not start.isdigit() or not end.isdigit():
        click.echo(f"error: --file expects path:start-end, got {raw!r}", err=True)
        sys.exit(EXIT_CONFIG)
    return {"path": path, "startLine": int(start), "endLine": int(end)}


def _repo_identity(path_like) -> str:
    """Repo name recorded in the tour; stays portable when --repo is absolute."""
    raw = str(path_like)
    if not raw.startswith("/") and ".." not in raw.split("/") and raw != ".":
        return raw
    return Path(raw).resolve().name or "repo"


def _provider_from_flag(name: str | None):
    try:
        config = genpipe.ProviderConfig.from_env()
        if name:
            config = genpipe.ProviderConfig(
                name=name, mode=name,
                endpoint_url=config.endpoint_url,
                model_name=config.model_name,
                auth_token=config.auth_token)
        return genpipe.make_provider(config)
    except ProviderConfigError as exc:
        click.echo(f"error: {exc.message}", err=True)
        sys.exit(EXIT_CONFIG)


def _generate(repo, files, intent, provider_name, out, build):
    if not files:
        click.echo("error: at least one --file path:start-end is required",
                   err=True)
        sys.exit(EXIT_CONFIG)
    selections = [_parse_file_flag(raw) for raw in files]
    tree = load_file_tree(repo)
    provider = _provider_from_flag(provider_name)
    try:
        tour = build(selections, intent, tree, provider)
    except ProviderUnreachableError as exc:
        click.echo(f"error: {exc.code}: {exc.message}", err=True)
        sys.exit(EXIT_IO)
    except TourForgeError as exc:
        click.echo(f"error: {exc.code}: {exc.message}", err=True)
        sys.exit(EXIT_VALIDATION)
    target = _write_tour(tour, out)
    click.echo(f"wrote {target} ({len(tour.steps)} steps)")


@click.group()
def main():
    """Author, check, and play code tours."""


@main.command("validate")
@click.argument("path")
@click.option("--json", "as_json", is_flag=True,
              help="Emit the issue report as JSON.")
def cmd_validate(path, as_json):
    """Check a tour file; exit 0 only when the document is clean."""
    text = _read_text(path)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        if as_json:
            click.echo(json.dumps({"issues": [
                {"code": "MALFORMED", "path": "", "message": str(exc)}]}))
        else:
            click.echo(f"MALFORMED  {exc}")
        sys.exit(EXIT_VALIDATION)
    report = validate_tour(doc)
    if as_json:
        click.echo(json.dumps({"issues": [issue.to_doc() for issue in report]}))
    else:
        for issue in report:
            click.echo(f"{issue.code}  {issue.path}  {issue.message}")
        if not report:
            click.echo("ok")
    sys.exit(EXIT_OK if not report else EXIT_VALIDATION)


@main.command("gen")
@click.option("--repo", default=".", show_default=True,
              help="Repository root the selections live in.")
@click.option("--file", "files", multiple=True, metavar="PATH:START-END",
              help="Selection to walk through (repeatable).")
@click.option("--intent", default="", help="What the tour should teach.")
@click.option("--provider", "provider_name", default=None,
              type=click.Choice(["stub", "remote"]),
              help="Override TOURFORGE_PROVIDER.")
@click.option("--author", default="expert", show_default=True)
@click.option("--out", default=None, help="Output path (default <id>.tour.json).")
def cmd_gen(repo, files, intent, provider_name, author, out):
    """Generate a guided draft tour from code selections."""
    def build(selections, intent, tree, provider):
        ctx = genpipe.assemble_context(selections, intent, tree)
        draft = genpipe.generate_guided(ctx, provider, author=author,
                                        repo_root=_repo_identity(repo))
        return draft.tour
    _generate(repo, files, intent, provider_name, out, build)


@main.command("explore")
@click.option("--repo", default=".", show_default=True)
@click.option("--file", "files", multiple=True, metavar="PATH:START-END")
@click.option("--provider", "provider_name", default=None,
              type=click.Choice(["stub", "remote"]))
@click.option("--author", default="learner", show_default=True)
@click.option("--out", default=None)
def cmd_explore(repo, files, provider_name, author, out):
    """Generate a personal exploratory tour (no intent, no quiz)."""
    def build(selections, intent, tree, provider):
        ctx = genpipe.assemble_context(selections, intent, tree)
        return genpipe.generate_exploratory(ctx, provider, author,
                                            repo_root=_repo_identity(repo))
    _generate(repo, files, "", provider_name, out, build)


# ---------------------------------------------------------------------------
# Playback
# ---------------------------------------------------------------------------

@dataclass
class PlaybackState:
    """Cursor over a tour plus a cache of per-step anchor resolutions."""

    tour: Tour
    current_step_index: int = 0
    resolved: dict = field(default_factory=dict)

    def move(self, delta: int) -> None:
        index = self.current_step_index + delta
        self.current_step_index = max(0, min(index, len(self.tour.steps) - 1))

    def at_last_step(self) -> bool:
        return self.current_step_index == len(self.tour.steps) - 1

    def resolution(self, file_tree: dict) -> AnchorResolution:
        index = self.current_step_index
        if index not in self.resolved:
            anchor = self.tour.steps[index].anchor
            text = file_tree.get(anchor.path)
            if text is None:
                self.resolved[index] = AnchorResolution(
                    kind=STALE, score=0.0, note="file missing from repository")
            else:
                self.resolved[index] = resolve_anchor(anchor,
                                                      split_lines(text))
        return self.resolved[index]


def _render_step(state: PlaybackState, file_tree: dict) -> None:
    step = state.tour.steps[state.current_step_index]
    anchor = step.anchor
    resolution = state.resolution(file_tree)
    total = len(state.tour.steps)
    click.echo(f"\nStep {state.current_step_index + 1}/{total}: {step.title}")
    if resolution.kind == STALE:
        click.echo(f"{anchor.path}:{anchor.start_line}-{anchor.end_line}  "
                   "[STALE - showing stored code]")
        start, lines = anchor.start_line, list(anchor.target)
    else:
        start, end = resolution.new_start_line, resolution.new_end_line
        click.echo(f"{anchor.path}:{start}-{end}  [{resolution.kind}]")
        file_lines = split_lines(file_tree[anchor.path])
        lo = max(0, start - 4)
        start, lines = lo + 1, file_lines[lo:end + 3]
    for offset, line in enumerate(lines):
        click.echo(f"  {start + offset:>5} | {line}")
    click.echo(f"\n{step.body}")


def _run_quiz(tour: Tour, read_line) -> None:
    questions = tour.quiz.questions
    answers = {}
    for i, question in enumerate(questions):
        click.echo(f"\nQ{i + 1}. {question.prompt}")
        for j, choice in enumerate(question.choices):
            click.echo(f"  {j + 1}) {choice}")
        raw = read_line(f"answer 1-{len(question.choices)} > ")
        if raw is None or not raw.strip().isdigit():
            click.echo("quiz aborted")
            return
        answers[question.id] = int(raw.strip()) - 1
    result = quiz_score(tour.quiz, answers, step_order=tour.step_ids())
    click.echo(f"\nScore: {result['score']}")
    for step_id in result["wrongStepIds"]:
        step = tour.step_by_id(step_id)
        click.echo(f"Revisit: {step.title} "
                   f"({step.anchor.path}:{step.anchor.start_line}-"
                   f"{step.anchor.end_line})")


@main.command("play")
@click.argument("path")
@click.option("--repo", default=None,
              help="Repository root (default: the tour's repoRef).")
def cmd_play(path, repo):
    """Step through a tour in the terminal; keys: n(ext) p(rev) q(uit)."""
    text = _read_text(path)
    try:
        tour = parse_tour(text)
    except TourForgeError as exc:
        click.echo(f"error: {exc.code}: {exc.message}", err=True)
        sys.exit(EXIT_VALIDATION)
    file_tree = load_file_tree(repo or tour.repo_ref.root_path)
    state = PlaybackState(tour=tour)

    def read_line(prompt):
        try:
            return input(prompt)
        except EOFError:
            return None

    click.echo(f"{tour.title}  [{tour.tour_type}, revision {tour.revision}]")
    while True:
        _render_step(state, file_tree)
        command = read_line("\n[n]ext [p]rev [q]uit > ")
        if command is None:
            break
        command = command.strip().lower()
        if command == "q":
            break
        if command == "p":
            state.move(-1)
        elif command == "n":
            if state.at_last_step():
                if tour.quiz is not None:
                    take = read_line("End of tour. Take the quiz? [y/N] > ")
                    if take and take.strip().lower() == "y":
                        _run_quiz(tour, read_line)
                break
            state.move(1)
    sys.exit(EXIT_OK)


@main.command("reanchor")
@click.argument("path")
@click.option("--repo", default=None,
              help="Repository root (default: the tour's repoRef).")
@click.option("--json", "as_json", is_flag=True,
              help="Emit the resolution report as JSON.")
def cmd_reanchor(path, repo, as_json):
    """Re-locate every anchor against current files and rewrite the tour."""
    text = _read_text(path)
    try:
        tour = parse_tour(text)
    except TourForgeError as exc:
        click.echo(f"error: {exc.code}: {exc.message}", err=True)
        sys.exit(EXIT_VALIDATION)
    file_tree = load_file_tree(repo or tour.repo_ref.root_path)
    reanchored, report = reanchor_tour(tour, file_tree)
    if reanchored is not tour:
        _write_tour(reanchored, path)
    counts = report.counts
    if as_json:
        click.echo(json.dumps({"report": report.to_doc(),
                               "changed": reanchored is not tour}))
    else:
        click.echo("  ".join(f"{kind}: {counts[kind]}"
                             for kind in ("exact", "shifted", "fuzzy", "stale")))
    sys.exit(EXIT_STALE if counts["stale"] else EXIT_OK)


@main.command("v2t")
@click.argument("session_log_path")
@click.option("--repo", default=None,
              help="Snapshot root (default: the log's snapshotDir).")
@click.option("--author", default="expert", show_default=True)
@click.option("--out", default=None)
def cmd_v2t(session_log_path, repo, author, out):
    """Compile a recorded walkthrough session into a draft tour."""
    text = _read_text(session_log_path)
    try:
        log = voice.parse_session_log(text)
    except TourForgeError as exc:
        click.echo(f"error: {exc.code}: {exc.message}", err=True)
        sys.exit(EXIT_VALIDATION)
    snapshot = repo or log.snapshot_dir
    if not snapshot:
        click.echo("error: the log has no snapshotDir; pass --repo", err=True)
        sys.exit(EXIT_CONFIG)
    try:
        draft = voice.align(log, load_file_tree(snapshot), author=author,
                            repo_root=_repo_identity(snapshot))
    except TourForgeError as exc:
        click.echo(f"error: {exc.code}: {exc.message}", err=True)
        sys.exit(EXIT_VALIDATION)
    target = _write_tour(draft.tour, out)
    pending = sum(1 for step in draft.tour.steps if step.needs_edit)
    click.echo(f"wrote {target} ({len(draft.tour.steps)} steps, "
               f"{pending} need edits)")


@main.command("serve")
@click.option("--data-dir", default=None, help="Override TOURFORGE_DATA_DIR.")
@click.option("--listen", default=None, metavar="HOST:PORT",
              help="Override TOURFORGE_LISTEN.")
@click.option("--repos-root", default=None, help="Override TOURFORGE_REPOS_ROOT.")
def cmd_serve(data_dir, listen, repos_root):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app, listen_address
    from .store import open_store

    try:
        app = create_app(store=open_store(data_dir), repos_root=repos_root)
    except TourForgeError as exc:
        click.echo(f"error: {exc.code}: {exc.message}", err=True)
        sys.exit(EXIT_CONFIG)
    if listen:
        host, _, port = listen.rpartition(":")
    else:
        host, port = listen_address()
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="info")


if __name__ == "__main__":
    main()
