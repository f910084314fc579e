"""Seed a self-contained demo workspace: repo, users, tokens, tours.

Run ``python3 -m tourforge.demo --root demo`` and point the server at the
printed paths. The data is deterministic apart from the seeding timestamps,
so the browser client's fixtures and walkthroughs can rely on its shape:
one published three-step tour with quiz activity, one draft awaiting review.
"""

from __future__ import annotations

import shutil
import sys
from datetime import datetime, timedelta
from pathlib import Path

import click

from . import genpipe
from .canonical import canonical_dumps, write_text_atomic
from .service import load_file_tree, quiz_score
from .store import Store, User

REPO_ID = "demo/payments"

REPO_FILES = {
    "src/gateway.py": (
        '"""Card charge entry point."""\n'
        "\n"
        "from .ledger import post_entry\n"
        "from .retry import with_backoff\n"
        "\n"
        "\n"
        "def charge(card, amount_cents):\n"
        "    if amount_cents <= 0:\n"
        '        raise ValueError("amount must be positive")\n'
        "    receipt = with_backoff(lambda: _send(card, amount_cents))\n"
        '    post_entry("charge", amount_cents, receipt)\n'
        "    return receipt\n"
        "\n"
        "\n"
        "def _send(card, amount_cents):\n"
        '    return {"card": card[-4:], "amount": amount_cents, "ok": True}\n'
    ),
    "src/ledger.py": (
        '"""Append-only money movements."""\n'
        "\n"
        "ENTRIES = []\n"
        "\n"
        "\n"
        "def post_entry(kind, amount_cents, receipt):\n"
        '    entry = {"kind": kind, "amount": amount_cents, "ref": receipt["card"]}\n'
        "    ENTRIES.append(entry)\n"
        "    return len(ENTRIES) - 1\n"
        "\n"
        "\n"
        "def balance():\n"
        '    return sum(e["amount"] for e in ENTRIES)\n'
    ),
    "src/retry.py": (
        '"""Bounded retry with exponential backoff."""\n'
        "\n"
        "import time\n"
        "\n"
        "MAX_TRIES = 3\n"
        "\n"
        "\n"
        "def with_backoff(call):\n"
        "    for attempt in range(MAX_TRIES):\n"
        "        try:\n"
        "            return call()\n"
        "        except ConnectionError:\n"
        "            time.sleep(2 ** attempt * 0.05)\n"
        '    raise ConnectionError("gave up after retries")\n'
    ),
    "src/models.py": (
        '"""Plain dataclasses shared across the service."""\n'
        "\n"
        "from dataclasses import dataclass\n"
        "\n"
        "\n"
        "@dataclass\n"
        "class Card:\n"
        "    number: str\n"
        "    holder: str\n"
        "\n"
        "\n"
        "@dataclass\n"
        "class Receipt:\n"
        "    card: str\n"
        "    amount: int\n"
    ),
    "README.md": (
        "# payments\n"
        "\n"
        "Toy card-charging service used as demo content.\n"
    ),
}

TOKENS = {"tok-alice": "alice", "tok-bob": "bob", "tok-cara": "cara"}

TOUR_SELECTIONS = [
    {"path": "src/gateway.py", "startLine": 7, "endLine": 12},
    {"path": "src/ledger.py", "startLine": 6, "endLine": 9},
    {"path": "src/retry.py", "startLine": 8, "endLine": 14},
]

DRAFT_SELECTIONS = [
    {"path": "src/models.py", "startLine": 6, "endLine": 9},
    {"path": "src/ledger.py", "startLine": 12, "endLine": 13},
]

STEP_REWRITES = [
    ("The charge entry point",
     "Everything starts in charge(): it rejects non-positive amounts, sends "
     "the card charge with retries, and only then records the movement."),
    ("Posting to the ledger",
     "post_entry() appends one immutable row per movement. Nothing edits "
     "rows in place; corrections are new entries."),
    ("Retry with backoff",
     "with_backoff() retries connection failures up to MAX_TRIES times, "
     "sleeping exponentially longer between tries before giving up."),
]


def _rewrite_edits(tour):
    edits = []
    for step, (title, body) in zip(tour.steps, STEP_REWRITES):
        edits.append({"op": "editStepTitle", "stepId": step.id, "title": title})
        edits.append({"op": "editStepBody", "stepId": step.id, "body": body})
    return edits


def seed(root, *, now=None) -> dict:
    """Build the demo workspace under ``root``; returns paths and tour ids."""
    root = Path(root)
    clock = now or datetime(2026, 3, 2, 9, 0, 0)

    def tick(minutes):
        return clock + timedelta(minutes=minutes)

    repo_dir = root / "repos" / REPO_ID
    for rel, text in REPO_FILES.items():
        target = repo_dir / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text, encoding="utf-8")
    write_text_atomic(root / "tokens.json", canonical_dumps(TOKENS))

    store = Store(root / "data")
    store.put_user(User(id="alice", display_name="Alice Ochoa",
                        roles={REPO_ID: "expert"}))
    store.put_user(User(id="bob", display_name="Bob Lindqvist",
                        roles={REPO_ID: "learner"}))
    store.put_user(User(id="cara", display_name="Cara Mbeki",
                        roles={REPO_ID: "learner"}))

    tree = load_file_tree(repo_dir)
    ctx = genpipe.assemble_context(
        TOUR_SELECTIONS, "How a card charge flows through the service.", tree)
    draft = genpipe.stub_generate(ctx, author="alice", repo_root=REPO_ID,
                                  now=tick(0))
    store.put_draft(draft)
    reviewed = genpipe.apply_review(store.get_working_tour(draft.tour.id),
                                    _rewrite_edits(draft.tour), "alice",
                                    now=tick(10))
    store.put_tour(reviewed, expected_revision=1)
    published = store.publish_tour(draft.tour.id, ["bob", "cara"],
                                   now=tick(20))

    # Bob finishes the tour and sits the quiz, missing the final question.
    for step_id in published.step_ids():
        store.record_progress("bob", published.id, step_id)
    answers = {}
    for i, question in enumerate(published.quiz.questions):
        wrong = (question.answer_index + 1) % len(question.choices)
        answers[question.id] = question.answer_index if i < 2 else wrong
    result = quiz_score(published.quiz, answers,
                        step_order=published.step_ids())
    store.record_attempt("bob", published.id, answers, result["score"],
                         now=tick(60))
    store.add_question("bob", published.id, published.steps[1].id,
                       "Who reconciles the ledger when a charge is retried "
                       "twice but lands once?", now=tick(65))
    store.add_feedback("bob", published.id, 4,
                       "Short and concrete; the retry step helped.",
                       now=tick(70))
    store.record_progress("cara", published.id, published.step_ids()[0])

    ctx2 = genpipe.assemble_context(
        DRAFT_SELECTIONS, "The shared data types and how balances are read.",
        tree)
    pending = genpipe.stub_generate(ctx2, author="alice", repo_root=REPO_ID,
                                    now=tick(90))
    store.put_draft(pending)

    return {
        "root": root,
        "dataDir": root / "data",
        "tokensFile": root / "tokens.json",
        "reposRoot": root / "repos",
        "publishedTourId": published.id,
        "draftTourId": pending.tour.id,
    }


@click.command()
@click.option("--root", default="demo", show_default=True,
              help="Directory to create the workspace in.")
@click.option("--force", is_flag=True,
              help="Replace an existing workspace at --root.")
def main(root, force):
    """Create the demo workspace and print how to serve it."""
    target = Path(root)
    if target.exists():
        if not force:
            click.echo(f"error: {target} already exists; pass --force to "
                       "replace it", err=True)
            sys.exit(1)
        shutil.rmtree(target)
    info = seed(target)
    click.echo(f"seeded demo workspace at {target}")
    click.echo(f"  published tour: {info['publishedTourId']} "
               "(assigned to bob and cara)")
    click.echo(f"  draft tour:     {info['draftTourId']}")
    click.echo("  tokens: tok-alice (expert), tok-bob / tok-cara (learners)")
    click.echo("")
    click.echo("run the server with:")
    click.echo(f"  TOURFORGE_DATA_DIR={info['dataDir']} \\")
    click.echo(f"  TOURFORGE_TOKENS_FILE={info['tokensFile']} \\")
    click.echo(f"  TOURFORGE_REPOS_ROOT={info['reposRoot']} \\")
    click.echo("  tourforge serve")


if __name__ == "__main__":
    main()
