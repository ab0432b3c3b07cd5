"""Shared domain types, their validation, and the on-disk record formats.

All types here are immutable values; they can be shared freely between
threads. Records persist as JSON Lines (one record per line, UTF-8,
keys in the canonical order documented on :func:`record_to_dict`).
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .errors import ValidationError

DIMENSIONS = ("overall", "content", "response")

CATEGORIES = (
    "knowledge_reasoning",
    "creative_tasks",
    "lifestyle_entertainment",
    "empathy_growth",
    "society_professional",
)

LANGUAGES = ("zh", "en")

FEATURE_NAMES = ("density", "accuracy", "speed", "pause_pos", "pause_dur")

SCORE_MIN, SCORE_MAX = 1, 5
MAX_SESSIONS = 4

_MBTI_RE = re.compile(r"^[EI][SN][TF][JP]$")


# ---------------------------------------------------------------------------
# configuration tuples


@dataclass(frozen=True, order=True)
class QosConfig:
    """Service-quality tuple: seconds per token, pause position, pause length."""

    speed: float        # seconds per emitted token, > 0
    pause_pos: float    # fraction of the response in [0, 1)
    pause_dur: float    # pause length in seconds, >= 0

    def __post_init__(self):
        if not (isinstance(self.speed, (int, float)) and self.speed > 0):
            raise ValidationError("bad-qos", "speed", f"must be > 0, got {self.speed!r}")
        if not (0 <= self.pause_pos < 1):
            raise ValidationError("bad-qos", "pause_pos", f"must be in [0, 1), got {self.pause_pos!r}")
        if self.pause_dur < 0:
            raise ValidationError("bad-qos", "pause_dur", f"must be >= 0, got {self.pause_dur!r}")
        object.__setattr__(self, "speed", float(self.speed))
        object.__setattr__(self, "pause_pos", float(self.pause_pos))
        object.__setattr__(self, "pause_dur", float(self.pause_dur))


@dataclass(frozen=True, order=True)
class ContentConfig:
    """Binary content-quality tuple: information density and accuracy flags."""

    density: int
    accuracy: int

    def __post_init__(self):
        for name in ("density", "accuracy"):
            value = getattr(self, name)
            if value not in (0, 1) or isinstance(value, bool):
                raise ValidationError("bad-content-config", name, f"must be 0 or 1, got {value!r}")


@dataclass(frozen=True, order=True)
class ConditionId:
    """One rated condition: a question presented with fixed content and QoS."""

    question_id: str
    content: ContentConfig
    qos: QosConfig

    def as_key(self) -> tuple:
        return (self.question_id, self.content.density, self.content.accuracy,
                self.qos.speed, self.qos.pause_pos, self.qos.pause_dur)


@dataclass(frozen=True)
class FeatureVector:
    """The controllable parameters as an ordered 5-tuple.

    Order is fixed: (density, accuracy, speed, pause_pos, pause_dur).
    """

    values: tuple[float, float, float, float, float]

    def __post_init__(self):
        if len(self.values) != len(FEATURE_NAMES):
            raise ValidationError("bad-feature-vector", "values",
                                  f"expected {len(FEATURE_NAMES)} values, got {len(self.values)}")
        vals = tuple(float(v) for v in self.values)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError("bad-feature-vector", "values", "values must be finite")
        object.__setattr__(self, "values", vals)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(FEATURE_NAMES, self.values))


def to_feature_vector(content: ContentConfig, qos: QosConfig) -> FeatureVector:
    """Map a (content, qos) pair onto the fixed feature order."""
    return FeatureVector((content.density, content.accuracy, qos.speed, qos.pause_pos, qos.pause_dur))


def from_feature_vector(fv: FeatureVector) -> tuple[ContentConfig, QosConfig]:
    """Inverse of :func:`to_feature_vector`; exact for 0/1 content flags."""
    density, accuracy, speed, pause_pos, pause_dur = fv.values
    if density not in (0.0, 1.0) or accuracy not in (0.0, 1.0):
        raise ValidationError("bad-feature-vector", "values",
                              "density and accuracy must be exactly 0 or 1")
    return ContentConfig(int(density), int(accuracy)), QosConfig(speed, pause_pos, pause_dur)


# ---------------------------------------------------------------------------
# raters and ratings


@dataclass(frozen=True)
class RaterProfile:
    rater_id: str
    language: str
    mbti: str
    patience: int
    sessions_completed: int = 0

    def __post_init__(self):
        if self.language not in LANGUAGES:
            raise ValidationError("bad-language", "language",
                                  f"must be one of {LANGUAGES}, got {self.language!r}")
        if not _MBTI_RE.match(self.mbti or ""):
            raise ValidationError("bad-mbti", "mbti",
                                  f"must match [EI][SN][TF][JP], got {self.mbti!r}")
        if not isinstance(self.patience, int) or isinstance(self.patience, bool) \
                or not (1 <= self.patience <= 5):
            raise ValidationError("bad-patience", "patience",
                                  f"must be an integer in [1, 5], got {self.patience!r}")
        if not (0 <= self.sessions_completed <= MAX_SESSIONS):
            raise ValidationError("bad-session-count", "sessions_completed",
                                  f"must be in [0, {MAX_SESSIONS}], got {self.sessions_completed!r}")


@dataclass(frozen=True)
class RatingRecord:
    """One rater's three-dimensional score for one condition presentation.

    Score validity is checked by :func:`validate_record`, not at
    construction, so that incoming payloads can be represented before
    they are accepted.
    """

    session_id: str
    rater_id: str
    question_id: str
    category: str
    content: ContentConfig
    qos: QosConfig
    scores: Mapping[str, int]
    timestamp: datetime

    def __post_init__(self):
        object.__setattr__(self, "scores", dict(self.scores))
        object.__setattr__(self, "timestamp", _truncate_ms(self.timestamp))

    @property
    def condition(self) -> ConditionId:
        return ConditionId(self.question_id, self.content, self.qos)

    def dedupe_key(self) -> tuple:
        return (self.rater_id, self.question_id, self.content, self.qos)


def validate_record(record: RatingRecord, known_questions: set[str] | None = None) -> None:
    """Check every RatingRecord invariant; raise on the first violation.

    ``known_questions`` enables the question-existence check when a
    content fixture is loaded.
    """
    if record.category not in CATEGORIES:
        raise ValidationError("unknown-category", "category",
                              f"{record.category!r} is not one of {CATEGORIES}")
    if known_questions is not None and record.question_id not in known_questions:
        raise ValidationError("unknown-question", "question_id",
                              f"{record.question_id!r} is not in the content fixture")
    got = set(record.scores)
    expected = set(DIMENSIONS)
    if got != expected:
        missing = sorted(expected - got) or sorted(got - expected)
        raise ValidationError("missing-dimension", "scores",
                              f"expected dimensions {sorted(expected)}, got {sorted(got)}"
                              f" (offending: {missing})")
    for dim in DIMENSIONS:
        value = record.scores[dim]
        if not isinstance(value, int) or isinstance(value, bool) \
                or not (SCORE_MIN <= value <= SCORE_MAX):
            raise ValidationError("score-out-of-range", f"scores.{dim}",
                                  f"must be an integer in [{SCORE_MIN}, {SCORE_MAX}], got {value!r}")


def validate_scores(scores: Mapping[str, object]) -> dict[str, int]:
    """Validate a raw score mapping (same rules as validate_record)."""
    got = set(scores)
    if got != set(DIMENSIONS):
        raise ValidationError("missing-dimension", "scores",
                              f"expected dimensions {sorted(DIMENSIONS)}, got {sorted(got)}")
    out = {}
    for dim in DIMENSIONS:
        value = scores[dim]
        if not isinstance(value, int) or isinstance(value, bool) \
                or not (SCORE_MIN <= value <= SCORE_MAX):
            raise ValidationError("score-out-of-range", f"scores.{dim}",
                                  f"must be an integer in [{SCORE_MIN}, {SCORE_MAX}], got {value!r}")
        out[dim] = value
    return out


# ---------------------------------------------------------------------------
# MOS table


@dataclass(frozen=True)
class MosEntry:
    mos_z: float
    mos_scaled: float
    n_valid: int


@dataclass
class MosTable:
    """Per-(condition, dimension) Mean Opinion Scores after cleaning.

    ``anchors`` stores, per dimension, the (min, max) of mos_z used for
    the [0, 5] rescale so later datasets can be mapped consistently.
    """

    entries: dict[tuple[ConditionId, str], MosEntry] = field(default_factory=dict)
    anchors: dict[str, tuple[float, float]] = field(default_factory=dict)

    def conditions(self) -> list[ConditionId]:
        seen: dict[ConditionId, None] = {}
        for cond, _dim in self.entries:
            seen.setdefault(cond)
        return list(seen)


@dataclass(frozen=True)
class PipelineParams:
    """Thresholds of the cleaning chain: z-outlier bound and consistency floor."""

    z_outlier_threshold: float = 2.0
    srcc_threshold: float = 0.5

    def __post_init__(self):
        if not self.z_outlier_threshold > 0:
            raise ValidationError("bad-params", "z_outlier_threshold",
                                  f"must be > 0, got {self.z_outlier_threshold!r}")
        if not (-1 <= self.srcc_threshold <= 1):
            raise ValidationError("bad-params", "srcc_threshold",
                                  f"must be in [-1, 1], got {self.srcc_threshold!r}")


# ---------------------------------------------------------------------------
# experiment grid and content fixture


@dataclass(frozen=True)
class Grid:
    """The experiment design grid: QoS levels and content configurations."""

    speeds: tuple[float, ...]
    pause_positions: tuple[float, ...]
    pause_durations: tuple[float, ...]
    content_configs: tuple[ContentConfig, ...]

    def qos_points(self) -> list[QosConfig]:
        return [QosConfig(s, p, d)
                for s in self.speeds
                for p in self.pause_positions
                for d in self.pause_durations]

    def combos(self) -> list[tuple[ContentConfig, QosConfig]]:
        """All (content, qos) combinations in canonical enumeration order."""
        return [(c, q) for c in self.content_configs for q in self.qos_points()]


def default_grid() -> Grid:
    """The stock 3x4x3 QoS grid with all four content configurations."""
    return Grid(
        speeds=(0.01, 0.05, 0.1),
        pause_positions=(0.0, 0.25, 0.5, 0.75),
        pause_durations=(3.0, 5.0, 7.0),
        content_configs=tuple(ContentConfig(d, a) for d, a in
                              itertools.product((0, 1), repeat=2)),
    )


@dataclass(frozen=True)
class ContentItem:
    question_id: str
    category: str
    language: str
    question_text: str
    # keyed by (density, accuracy); all four variants must be present
    variants: Mapping[tuple[int, int], str]

    def answer(self, content: ContentConfig) -> str:
        return self.variants[(content.density, content.accuracy)]


def load_content(path: str | Path) -> dict[str, ContentItem]:
    """Load and validate a content fixture; returns items keyed by question id."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    items: dict[str, ContentItem] = {}
    for entry in raw["questions"]:
        qid = entry["question_id"]
        if qid in items:
            raise ValidationError("duplicate-question", "question_id", f"{qid!r} appears twice")
        if entry["category"] not in CATEGORIES:
            raise ValidationError("unknown-category", "category",
                                  f"{entry['category']!r} for question {qid!r}")
        if entry["language"] not in LANGUAGES:
            raise ValidationError("bad-language", "language",
                                  f"{entry['language']!r} for question {qid!r}")
        variants = {}
        for var in entry["variants"]:
            key = (int(var["density"]), int(var["accuracy"]))
            variants[key] = var["answer_text"]
        expected = set(itertools.product((0, 1), repeat=2))
        if set(variants) != expected:
            raise ValidationError("missing-variant", "variants",
                                  f"question {qid!r} must provide all four (density, accuracy) variants")
        items[qid] = ContentItem(qid, entry["category"], entry["language"],
                                 entry["question_text"], variants)
    return items


def load_grid(path: str | Path) -> Grid:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return Grid(
        speeds=tuple(float(v) for v in raw["speeds"]),
        pause_positions=tuple(float(v) for v in raw["pause_positions"]),
        pause_durations=tuple(float(v) for v in raw["pause_durations"]),
        content_configs=tuple(ContentConfig(int(c["density"]), int(c["accuracy"]))
                              for c in raw["content_configs"]),
    )


# ---------------------------------------------------------------------------
# serialization

_TS_FMT = "%Y-%m-%dT%H:%M:%S.%f"


def _truncate_ms(dt: datetime) -> datetime:
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    dt = dt.astimezone(timezone.utc)
    return dt.replace(microsecond=(dt.microsecond // 1000) * 1000)


def format_timestamp(dt: datetime) -> str:
    """ISO-8601 UTC with millisecond precision, e.g. 2025-01-01T00:00:00.000Z."""
    dt = _truncate_ms(dt)
    return dt.strftime(_TS_FMT)[:-3] + "Z"


def parse_timestamp(text: str) -> datetime:
    if not text.endswith("Z"):
        raise ValidationError("bad-timestamp", "timestamp", f"expected trailing Z: {text!r}")
    return datetime.strptime(text[:-1], _TS_FMT).replace(tzinfo=timezone.utc)


def qos_to_dict(qos: QosConfig) -> dict:
    return {"speed": qos.speed, "pause_pos": qos.pause_pos, "pause_dur": qos.pause_dur}


def qos_from_dict(d: Mapping) -> QosConfig:
    return QosConfig(float(d["speed"]), float(d["pause_pos"]), float(d["pause_dur"]))


def content_to_dict(content: ContentConfig) -> dict:
    return {"density": content.density, "accuracy": content.accuracy}


def content_from_dict(d: Mapping) -> ContentConfig:
    return ContentConfig(int(d["density"]), int(d["accuracy"]))


def record_to_dict(record: RatingRecord) -> dict:
    """Canonical key order: session_id, rater_id, question_id, category,
    content, qos, scores, timestamp."""
    return {
        "session_id": record.session_id,
        "rater_id": record.rater_id,
        "question_id": record.question_id,
        "category": record.category,
        "content": content_to_dict(record.content),
        "qos": qos_to_dict(record.qos),
        "scores": {dim: record.scores[dim] for dim in DIMENSIONS if dim in record.scores},
        "timestamp": format_timestamp(record.timestamp),
    }


def record_from_dict(d: Mapping) -> RatingRecord:
    return RatingRecord(
        session_id=d["session_id"],
        rater_id=d["rater_id"],
        question_id=d["question_id"],
        category=d["category"],
        content=content_from_dict(d["content"]),
        qos=qos_from_dict(d["qos"]),
        scores={k: v for k, v in d["scores"].items()},
        timestamp=parse_timestamp(d["timestamp"]),
    )


def profile_to_dict(profile: RaterProfile) -> dict:
    return {
        "rater_id": profile.rater_id,
        "language": profile.language,
        "mbti": profile.mbti,
        "patience": profile.patience,
        "sessions_completed": profile.sessions_completed,
    }


def profile_from_dict(d: Mapping) -> RaterProfile:
    return RaterProfile(
        rater_id=d["rater_id"],
        language=d["language"],
        mbti=d["mbti"],
        patience=int(d["patience"]),
        sessions_completed=int(d.get("sessions_completed", 0)),
    )


def write_records(path: str | Path, records: Iterable[RatingRecord]) -> int:
    """Append-friendly JSONL dump; returns the number of records written."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_dict(record), ensure_ascii=False) + "\n")
            n += 1
    return n


def iter_records(path: str | Path) -> Iterator[RatingRecord]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                yield record_from_dict(json.loads(line))


def read_records(path: str | Path,
                 known_questions: set[str] | None = None,
                 check_unique: bool = True) -> list[RatingRecord]:
    """Load a ratings store, validating each record and store-level uniqueness."""
    records = []
    seen: set[tuple] = set()
    for record in iter_records(path):
        validate_record(record, known_questions)
        if check_unique:
            key = record.dedupe_key()
            if key in seen:
                raise ValidationError("duplicate-record", "record",
                                      f"(rater, question, content, qos) repeated: {key!r}")
            seen.add(key)
        records.append(record)
    return records


# ---------------------------------------------------------------------------
# MOS table CSV

_MOS_COLUMNS = ("question_id", "density", "accuracy", "speed", "pause_pos",
                "pause_dur", "dimension", "mos_z", "mos_scaled", "n_valid")


def write_mos_csv(path: str | Path, table: MosTable, meta: Mapping[str, object] | None = None) -> None:
    """Write a MosTable as CSV; a leading '#' comment line carries metadata."""
    keys = sorted(table.entries, key=lambda ck: (ck[0], DIMENSIONS.index(ck[1])))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if meta:
            fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        writer = csv.writer(fh)
        writer.writerow(_MOS_COLUMNS)
        for cond, dim in keys:
            entry = table.entries[(cond, dim)]
            writer.writerow([
                cond.question_id,
                cond.content.density, cond.content.accuracy,
                repr(cond.qos.speed), repr(cond.qos.pause_pos), repr(cond.qos.pause_dur),
                dim, repr(entry.mos_z), repr(entry.mos_scaled), entry.n_valid,
            ])


def read_mos_csv(path: str | Path) -> MosTable:
    table = MosTable()
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(rows)
    for row in reader:
        cond = ConditionId(
            row["question_id"],
            ContentConfig(int(row["density"]), int(row["accuracy"])),
            QosConfig(float(row["speed"]), float(row["pause_pos"]), float(row["pause_dur"])),
        )
        table.entries[(cond, row["dimension"])] = MosEntry(
            float(row["mos_z"]), float(row["mos_scaled"]), int(row["n_valid"]))
    return table
