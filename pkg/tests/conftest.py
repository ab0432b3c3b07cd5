from __future__ import annotations

import hashlib
from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest

from qoekit.model import (CATEGORIES, ContentConfig, DIMENSIONS, QosConfig,
                          RatingRecord, load_content, load_grid)

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def grid():
    return load_grid(FIXTURES / "grid.json")


@pytest.fixture(scope="session")
def heldout_grid():
    return load_grid(FIXTURES / "grid_heldout.json")


@pytest.fixture(scope="session")
def content_items():
    return load_content(FIXTURES / "content.json")


def make_record(rater_id="r000", question_id="q00", category="knowledge_reasoning",
                scores=None, content=ContentConfig(1, 1),
                qos=QosConfig(0.05, 0.25, 3.0), session_id="s0",
                timestamp=None) -> RatingRecord:
    return RatingRecord(
        session_id=session_id,
        rater_id=rater_id,
        question_id=question_id,
        category=category,
        content=content,
        qos=qos,
        scores=scores or {"overall": 3, "content": 4, "response": 2},
        timestamp=timestamp or datetime(2025, 6, 1, 12, 0, 0, tzinfo=timezone.utc),
    )


def _score_level(question: int, session: int, dim: str) -> int:
    digest = hashlib.md5(f"{question}|{session}|{dim}".encode()).digest()
    return 1 + digest[0] % 5


def build_bookkeeping_store(grid) -> tuple[list[RatingRecord], dict]:
    """292 sessions x 54 questions = 15,768 records with 594 planted bad ones.

    Good raters all share one deterministic near-uniform score pattern,
    one rater gives a single extreme standardized score, and two raters
    invert the pattern: the cleaning chain must remove exactly the three
    planted raters' 594 records.
    """
    combos = grid.combos()
    sessions = [(f"good{r:03d}", s) for r in range(70) for s in range(4)]
    sessions += [("good070", 0)]
    sessions += [("spike", s) for s in range(4)]
    sessions += [("inv_a", s) for s in range(4)]
    sessions += [("inv_b", s) for s in range(3)]
    assert len(sessions) == 292

    base = datetime(2025, 3, 1, tzinfo=timezone.utc)
    records = []
    stamp = 0
    for rater_id, session in sessions:
        for q in range(54):
            content, qos = combos[(7 * q + 31 * session) % len(combos)]
            scores = {dim: _score_level(q, session, dim) for dim in DIMENSIONS}
            if rater_id.startswith("inv"):
                scores = {dim: 6 - v for dim, v in scores.items()}
            elif rater_id == "spike":
                scores = {dim: 3 for dim in DIMENSIONS}
                if q == 0 and session == 0:
                    scores["overall"] = 5
            records.append(RatingRecord(
                session_id=f"{rater_id}-s{session}",
                rater_id=rater_id,
                question_id=f"q{q:02d}",
                category=CATEGORIES[q % len(CATEGORIES)],
                content=content,
                qos=qos,
                scores=scores,
                timestamp=base + timedelta(milliseconds=stamp),
            ))
            stamp += 1
    planted = {"spike": 216, "inv_a": 216, "inv_b": 162}
    return records, planted


@pytest.fixture(scope="session")
def bookkeeping_store(grid):
    return build_bookkeeping_store(grid)
