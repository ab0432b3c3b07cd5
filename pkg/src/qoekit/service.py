"""Rating-collection service: sessions, balanced assignment, streaming, intake.

Core logic lives in :class:`SessionService`, framework-free and fully
testable; :func:`create_app` wraps it in the HTTP surface. Persistence
is append-only JSON Lines (raters, plans, ratings) with in-memory
indexes rebuilt by replay on startup, so a restart reconstructs the
exact assignment counters.
"""

from __future__ import annotations

import json
import random
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterator

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse, StreamingResponse

from .errors import DomainError
from .model import (ContentConfig, ContentItem, Grid, QosConfig, RaterProfile,
                    RatingRecord, MAX_SESSIONS, content_from_dict,
                    content_to_dict, format_timestamp, parse_timestamp,
                    profile_from_dict, profile_to_dict, qos_from_dict,
                    qos_to_dict, record_from_dict, record_to_dict,
                    validate_scores)
from .shaper import WallClock, schedule_emission, stream_lines, tokenize


class ServiceError(DomainError):
    """Request-level failure; ``code`` selects the HTTP status."""


_STATUS = {
    "unknown-rater": 404,
    "unknown-session": 404,
    "unknown-question": 404,
    "bad-index": 404,
    "session-limit-exceeded": 409,
    "exhausted": 409,
    "already-rated": 409,
    "duplicate-submission": 409,
    "not-streamed": 409,
}


@dataclass(frozen=True)
class PlanItem:
    question_id: str
    content: ContentConfig
    qos: QosConfig


@dataclass(frozen=True)
class SessionPlan:
    session_id: str
    rater_id: str
    items: tuple[PlanItem, ...]
    created_at: datetime
    seed: str

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "rater_id": self.rater_id,
            "seed": self.seed,
            "created_at": format_timestamp(self.created_at),
            "items": [
                {"question_id": it.question_id,
                 "content": content_to_dict(it.content),
                 "qos": qos_to_dict(it.qos)}
                for it in self.items
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SessionPlan":
        return cls(
            session_id=d["session_id"],
            rater_id=d["rater_id"],
            seed=d["seed"],
            created_at=parse_timestamp(d["created_at"]),
            items=tuple(PlanItem(it["question_id"],
                                 content_from_dict(it["content"]),
                                 qos_from_dict(it["qos"]))
                        for it in d["items"]),
        )


class SessionService:
    """Registers raters, plans balanced sessions, streams items, stores ratings.

    All mutating operations are serialized through one lock (the
    single-writer commit point); reads work on the in-memory indexes.
    """

    def __init__(self, content: dict[str, ContentItem], grid: Grid,
                 store_dir: str | Path, seed: int = 0,
                 clock_factory: Callable[[], object] | None = None):
        self.content = content
        self.grid = grid
        self.store = Path(store_dir)
        self.store.mkdir(parents=True, exist_ok=True)
        self.seed = seed
        self.clock_factory = clock_factory or WallClock
        self._combos = grid.combos()
        self._lock = threading.Lock()

        self.profiles: dict[str, RaterProfile] = {}
        self.plans: dict[str, SessionPlan] = {}
        self.sessions_of: dict[str, int] = {}
        # combos already assigned to a rater for a question
        self.history: dict[tuple[str, str], set[tuple[ContentConfig, QosConfig]]] = {}
        self.qos_counts: dict[tuple[str, QosConfig], int] = {}
        self.content_counts: dict[tuple[str, ContentConfig], int] = {}
        self._streamed: set[tuple[str, int]] = set()
        self._submitted: set[tuple[str, int]] = set()
        self._replay()

    # -- persistence ------------------------------------------------------

    @property
    def raters_path(self) -> Path:
        return self.store / "raters.jsonl"

    @property
    def plans_path(self) -> Path:
        return self.store / "plans.jsonl"

    @property
    def ratings_path(self) -> Path:
        return self.store / "ratings.jsonl"

    def _append(self, path: Path, payload: dict) -> None:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(payload, ensure_ascii=False) + "\n")
            fh.flush()

    def _replay(self) -> None:
        if self.raters_path.exists():
            with open(self.raters_path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        profile = profile_from_dict(json.loads(line))
                        self.profiles[profile.rater_id] = profile
        if self.plans_path.exists():
            with open(self.plans_path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        self._index_plan(SessionPlan.from_dict(json.loads(line)))
        if self.ratings_path.exists():
            with open(self.ratings_path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        record = record_from_dict(json.loads(line))
                        plan = self.plans.get(record.session_id)
                        if plan is None:
                            continue
                        for idx, item in enumerate(plan.items):
                            if item.question_id == record.question_id:
                                self._submitted.add((record.session_id, idx))
                                # a stored rating implies the item was streamed
                                self._streamed.add((record.session_id, idx))
                                break

    def _index_plan(self, plan: SessionPlan) -> None:
        self.plans[plan.session_id] = plan
        self.sessions_of[plan.rater_id] = self.sessions_of.get(plan.rater_id, 0) + 1
        for item in plan.items:
            key = (plan.rater_id, item.question_id)
            self.history.setdefault(key, set()).add((item.content, item.qos))
            self.qos_counts[(item.question_id, item.qos)] = \
                self.qos_counts.get((item.question_id, item.qos), 0) + 1
            self.content_counts[(item.question_id, item.content)] = \
                self.content_counts.get((item.question_id, item.content), 0) + 1

    # -- operations -------------------------------------------------------

    def register_rater(self, payload: dict) -> RaterProfile:
        """Persist a new profile; registration is never idempotent."""
        with self._lock:
            rater_id = f"rater-{len(self.profiles):04d}"
            profile = RaterProfile(
                rater_id=rater_id,
                language=payload.get("language", "en"),
                mbti=payload.get("mbti", ""),
                patience=payload.get("patience"),
            )
            self._append(self.raters_path, profile_to_dict(profile))
            self.profiles[rater_id] = profile
            return profile

    def assign_condition(self, question_id: str, rater_id: str,
                         rng: random.Random) -> tuple[ContentConfig, QosConfig]:
        """Pick the least-assigned combination this rater has not seen.

        Among combinations unused by the rater for this question, the
        candidates with minimal per-question QoS count are kept, then
        those with minimal content count; remaining ties break by the
        session's seeded generator.
        """
        used = self.history.get((rater_id, question_id), set())
        candidates = [combo for combo in self._combos if combo not in used]
        if not candidates:
            raise ServiceError(
                f"rater {rater_id!r} has seen every combination for {question_id!r}",
                code="exhausted")
        min_qos = min(self.qos_counts.get((question_id, q), 0) for _, q in candidates)
        candidates = [cq for cq in candidates
                      if self.qos_counts.get((question_id, cq[1]), 0) == min_qos]
        min_content = min(self.content_counts.get((question_id, c), 0) for c, _ in candidates)
        candidates = [cq for cq in candidates
                      if self.content_counts.get((question_id, cq[0]), 0) == min_content]
        return rng.choice(sorted(candidates))

    def create_session(self, rater_id: str) -> SessionPlan:
        """Plan one full pass over the fixture for this rater.

        The plan covers every question exactly once, in an order
        shuffled by a recorded seed; the plan line and its counter
        updates commit together.
        """
        with self._lock:
            if rater_id not in self.profiles:
                raise ServiceError(f"unknown rater {rater_id!r}", code="unknown-rater")
            if self.sessions_of.get(rater_id, 0) >= MAX_SESSIONS:
                raise ServiceError(
                    f"rater {rater_id!r} already has {MAX_SESSIONS} sessions",
                    code="session-limit-exceeded")
            session_id = f"session-{len(self.plans):04d}"
            seed = f"{self.seed}:{session_id}"
            rng = random.Random(seed)
            question_ids = sorted(self.content)
            rng.shuffle(question_ids)
            # per-question assignments are independent, so compute them
            # all first and commit only a complete plan
            items = tuple(
                PlanItem(qid, *self.assign_condition(qid, rater_id, rng))
                for qid in question_ids
            )
            plan = SessionPlan(session_id=session_id, rater_id=rater_id,
                               items=items,
                               created_at=datetime.now(timezone.utc),
                               seed=seed)
            self._append(self.plans_path, plan.to_dict())
            self._index_plan(plan)
            return plan

    def _item(self, session_id: str, index: int) -> PlanItem:
        plan = self.plans.get(session_id)
        if plan is None:
            raise ServiceError(f"unknown session {session_id!r}", code="unknown-session")
        if not (0 <= index < len(plan.items)):
            raise ServiceError(f"index {index} out of range (0..{len(plan.items) - 1})",
                               code="bad-index")
        return plan.items[index]

    def stream_item(self, session_id: str, index: int) -> Iterator[str]:
        """Stream one item through the shaper in the wire format.

        The item counts as streamed only once the terminal event has
        been delivered.
        """
        item = self._item(session_id, index)
        if (session_id, index) in self._submitted:
            raise ServiceError("item already rated", code="already-rated")
        content_item = self.content.get(item.question_id)
        if content_item is None:
            raise ServiceError(f"unknown question {item.question_id!r}",
                               code="unknown-question")
        text = content_item.answer(item.content)
        tokens = tokenize(text, content_item.language)
        schedule = schedule_emission(tokens, item.qos)
        clock = self.clock_factory()

        def gen() -> Iterator[str]:
            for line in stream_lines(schedule, clock):
                yield line + "\n"
            self._streamed.add((session_id, index))

        return gen()

    def submit_rating(self, session_id: str, index: int, scores: dict) -> RatingRecord:
        """Validate and append exactly one rating for a streamed item."""
        with self._lock:
            item = self._item(session_id, index)
            if (session_id, index) in self._submitted:
                raise ServiceError("rating already recorded for this item",
                                   code="duplicate-submission")
            if (session_id, index) not in self._streamed:
                raise ServiceError("item has not been streamed yet", code="not-streamed")
            clean = validate_scores(scores)
            plan = self.plans[session_id]
            record = RatingRecord(
                session_id=session_id,
                rater_id=plan.rater_id,
                question_id=item.question_id,
                category=self.content[item.question_id].category,
                content=item.content,
                qos=item.qos,
                scores=clean,
                timestamp=datetime.now(timezone.utc),
            )
            self._append(self.ratings_path, record_to_dict(record))
            self._submitted.add((session_id, index))
            return record

    def export_ratings(self) -> str:
        if not self.ratings_path.exists():
            return ""
        return self.ratings_path.read_text(encoding="utf-8")


def create_app(service: SessionService) -> FastAPI:
    """HTTP surface over a SessionService."""
    from fastapi.middleware.cors import CORSMiddleware

    app = FastAPI(title="qoekit session service")
    # the rating UI is typically served from a different local origin
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])

    @app.exception_handler(DomainError)
    async def domain_error(request: Request, exc: DomainError):
        status = _STATUS.get(exc.code, 400)
        return JSONResponse({"error": exc.code, "detail": exc.detail}, status_code=status)

    @app.get("/health")
    async def health():
        return {"status": "ok"}

    @app.post("/raters", status_code=201)
    async def register(request: Request):
        payload = await request.json()
        profile = service.register_rater(payload)
        return profile_to_dict(profile)

    @app.post("/sessions", status_code=201)
    async def create_session(request: Request):
        payload = await request.json()
        plan = service.create_session(payload.get("rater_id", ""))
        return plan.to_dict()

    @app.get("/sessions/{session_id}/items/{index}/stream")
    async def stream(session_id: str, index: int):
        gen = service.stream_item(session_id, index)
        return StreamingResponse(gen, media_type="application/x-ndjson")

    @app.post("/sessions/{session_id}/items/{index}/rating", status_code=201)
    async def rate(session_id: str, index: int, request: Request):
        scores = await request.json()
        record = service.submit_rating(session_id, index, scores)
        return {"stored": True, "record": record_to_dict(record)}

    @app.get("/export/ratings")
    async def export():
        return PlainTextResponse(service.export_ratings(),
                                 media_type="application/x-ndjson")

    return app
