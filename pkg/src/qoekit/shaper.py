"""Token-stream shaping: tokenization, emission scheduling, timed playback.

A response text plus a QoS configuration becomes an exact emission
schedule; playback runs against either a virtual clock (bit-exact, used
in tests) or the wall clock (live service). A proxy mode re-times an
upstream token source through the same scheduler.
"""

from __future__ import annotations

import json
import math
import re
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator

from .errors import DomainError
from .model import QosConfig

# Latin-script tokens carry their leading whitespace so concatenation
# reproduces the input exactly; a trailing whitespace run becomes its
# own final token.
_WORD_RE = re.compile(r"\s*\S+")

_CJK_RANGES = (
    (0x2E80, 0x303F),   # radicals, punctuation
    (0x3040, 0x30FF),   # kana
    (0x3400, 0x4DBF),
    (0x4E00, 0x9FFF),
    (0xF900, 0xFAFF),
    (0xFF00, 0xFFEF),   # fullwidth forms
)


def _is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


def detect_language(text: str) -> str:
    """Guess zh vs en from the presence of CJK characters."""
    return "zh" if any(_is_cjk(ch) for ch in text) else "en"


def tokenize(text: str, language: str) -> list[str]:
    """Split text into display tokens; ''.join(tokens) == text always.

    en: whitespace-attached word segments. zh: one token per character.
    """
    if not text:
        return []
    if language == "zh":
        return list(text)
    tokens = _WORD_RE.findall(text)
    consumed = sum(len(t) for t in tokens)
    if consumed < len(text):
        tokens.append(text[consumed:])
    return tokens


@dataclass(frozen=True)
class EmissionSchedule:
    """Tokens with their emission offsets (seconds from stream start)."""

    items: tuple[tuple[str, float], ...]
    total_duration_s: float

    @property
    def tokens(self) -> list[str]:
        return [tok for tok, _ in self.items]


def schedule_emission(tokens: Iterable[str], qos: QosConfig) -> EmissionSchedule:
    """Compute emission times: token i at i*v, plus the pause for i >= k.

    The pause of length pause_dur precedes token index
    k = floor(pause_pos * N); pause_pos = 0 therefore models start-up
    delay (the time-to-first-token case). For N >= 1 the total duration
    is exactly (N-1)*v + pause_dur.
    """
    toks = list(tokens)
    n = len(toks)
    if n == 0:
        return EmissionSchedule(items=(), total_duration_s=0.0)
    k = math.floor(qos.pause_pos * n)
    items = []
    for i, tok in enumerate(toks):
        at = i * qos.speed
        if i >= k:
            at += qos.pause_dur
        items.append((tok, at))
    return EmissionSchedule(items=tuple(items), total_duration_s=items[-1][1])


# ---------------------------------------------------------------------------
# clocks


class VirtualClock:
    """Logical clock: sleeping jumps time, playback is instantaneous."""

    kind = "virtual"

    def __init__(self):
        self.now = 0.0

    def start(self) -> None:
        self.now = 0.0

    def sleep_until(self, offset: float) -> float:
        self.now = max(self.now, offset)
        return offset


class WallClock:
    """Monotonic real-time clock; sleep_until returns the achieved offset."""

    kind = "wall"

    def __init__(self):
        self._t0 = time.monotonic()

    def start(self) -> None:
        self._t0 = time.monotonic()

    def sleep_until(self, offset: float) -> float:
        while True:
            elapsed = time.monotonic() - self._t0
            if elapsed >= offset:
                return elapsed
            time.sleep(offset - elapsed)


# ---------------------------------------------------------------------------
# playback


@dataclass(frozen=True)
class StreamTrace:
    """Evidence of one playback: (token, scheduled_at_s, actual_at_s) items."""

    items: tuple[tuple[str, float, float], ...]
    clock_kind: str

    def lateness(self) -> list[float]:
        return [actual - scheduled for _, scheduled, actual in self.items]


class SinkClosed(Exception):
    """Raised by a sink to signal the consumer has disconnected."""


class StreamError(DomainError):
    """Playback failure; ``trace`` retains whatever was emitted."""

    def __init__(self, code: str, detail: str, trace: StreamTrace):
        self.trace = trace
        super().__init__(detail, code=code)


def play(schedule: EmissionSchedule,
         clock: VirtualClock | WallClock | None = None,
         sink: Callable[[str], None] | None = None) -> StreamTrace:
    """Deliver scheduled tokens to ``sink`` in order, timed by ``clock``.

    Under the virtual clock actual times equal scheduled times exactly.
    A sink raising SinkClosed aborts playback with a 'sink-closed'
    StreamError whose trace holds the tokens already delivered.
    """
    clock = clock or VirtualClock()
    clock.start()
    items: list[tuple[str, float, float]] = []
    for token, at in schedule.items:
        actual = clock.sleep_until(at)
        if sink is not None:
            try:
                sink(token)
            except SinkClosed as exc:
                raise StreamError("sink-closed", str(exc) or "consumer disconnected",
                                  StreamTrace(tuple(items), clock.kind)) from exc
        items.append((token, at, actual))
    return StreamTrace(tuple(items), clock.kind)


def shape_upstream(upstream: Iterable[str],
                   qos: QosConfig,
                   clock: VirtualClock | WallClock | None = None,
                   sink: Callable[[str], None] | None = None) -> StreamTrace:
    """Proxy mode: buffer a finite upstream fully, then re-time it.

    Buffering is required because the pause position is a fraction of
    the whole response, which is unknown until the upstream ends. An
    upstream failure propagates as 'upstream-failed' before anything is
    emitted.
    """
    tokens: list[str] = []
    try:
        for token in upstream:
            tokens.append(token)
    except Exception as exc:
        raise StreamError("upstream-failed", f"upstream raised: {exc}",
                          StreamTrace((), (clock or VirtualClock()).kind)) from exc
    return play(schedule_emission(tokens, qos), clock, sink)


# ---------------------------------------------------------------------------
# wire format (shared with the session service and the browser UI)


def event_line(index: int, token: str) -> str:
    return json.dumps({"index": index, "token": token}, ensure_ascii=False)


def terminal_line(count: int) -> str:
    return json.dumps({"done": True, "count": count})


def stream_lines(schedule: EmissionSchedule,
                 clock: VirtualClock | WallClock | None = None) -> Iterator[str]:
    """Yield wire-format event lines, pacing each by the clock."""
    clock = clock or VirtualClock()
    clock.start()
    for index, (token, at) in enumerate(schedule.items):
        clock.sleep_until(at)
        yield event_line(index, token)
    yield terminal_line(len(schedule.items))


def parse_event(line: str) -> dict:
    return json.loads(line)
