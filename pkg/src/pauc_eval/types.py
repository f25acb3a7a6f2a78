"""Domain types for time-aware proactive dialogue evaluation.

Every type validates its structural invariants at construction and is
immutable afterwards, so instances can be shared freely across threads.
Each type serializes to/from plain dicts; the round trip is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Mapping, Sequence

from .errors import ValidationError

DEFAULT_OMEGAS = (0.0, 0.5, 1.0)
DEFAULT_MAX_SCORE = 2
DEFAULT_INITIAL_SCORE = 0.5


class BoundaryPolicy(str, Enum):
    """How responses at span edges are treated during selection."""

    CLOSED_START_OPEN_END = "closed-start-open-end"


class Aggregation(str, Enum):
    """Dataset-level aggregation policy."""

    MEAN_OVER_EXAMPLES = "mean-over-examples"


@dataclass(frozen=True)
class GroundTruthTurn:
    """One expected reply: gold text plus the timespan in which it is relevant."""

    gold: str
    t_start: float
    t_end: float

    def __post_init__(self) -> None:
        if not self.gold or not self.gold.strip():
            raise ValidationError("gold is empty")
        if self.t_start < 0:
            raise ValidationError(f"t_start {self.t_start} is negative")
        if self.t_end == self.t_start:
            raise ValidationError(
                f"zero-length span (t_start == t_end == {self.t_start})"
            )
        if self.t_end < self.t_start:
            raise ValidationError(f"t_end {self.t_end} < t_start {self.t_start}")

    @property
    def span_length(self) -> float:
        return self.t_end - self.t_start

    def to_dict(self) -> dict[str, Any]:
        return {"gold": self.gold, "start_s": self.t_start, "end_s": self.t_end}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GroundTruthTurn":
        return cls(
            gold=str(data["gold"]),
            t_start=float(data["start_s"]),
            t_end=float(data["end_s"]),
        )


@dataclass(frozen=True)
class EvaluationCase:
    """One benchmark example: a question over one video with ordered reply turns.

    Turns are re-sorted by ``t_start`` at construction; everything else about
    them must already hold (non-overlap, containment in the video).
    """

    example_id: str
    video_id: str
    video_duration: float
    question: str
    turns: tuple[GroundTruthTurn, ...]
    question_time: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "turns", tuple(sorted(self.turns, key=lambda t: t.t_start))
        )
        _check_case(self)

    @property
    def turn_count(self) -> int:
        return len(self.turns)

    def to_dict(self) -> dict[str, Any]:
        return {
            "example_id": self.example_id,
            "video_id": self.video_id,
            "video_duration_s": self.video_duration,
            "question": self.question,
            "question_time_s": self.question_time,
            "turns": [t.to_dict() for t in self.turns],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EvaluationCase":
        return cls(
            example_id=str(data["example_id"]),
            video_id=str(data["video_id"]),
            video_duration=float(data["video_duration_s"]),
            question=str(data["question"]),
            question_time=float(data.get("question_time_s", 0.0)),
            turns=tuple(GroundTruthTurn.from_dict(t) for t in data["turns"]),
        )


def _check_case(case: EvaluationCase) -> None:
    """Raise ValidationError naming the first violated invariant by field path."""
    if not case.example_id:
        raise ValidationError("example_id is empty")
    if case.video_duration <= 0:
        raise ValidationError(f"video_duration {case.video_duration} must be positive")
    if not case.turns:
        raise ValidationError("turns is empty (at least one reply turn required)")
    if not 0 <= case.question_time <= case.video_duration:
        raise ValidationError(
            f"question_time {case.question_time} outside [0, {case.video_duration}]"
        )
    previous_end = None
    for i, turn in enumerate(case.turns):
        if turn.t_end <= turn.t_start:  # unreachable via public constructor
            raise ValidationError(f"turns[{i}].t_end <= t_start")
        if turn.t_start < 0 or turn.t_end > case.video_duration:
            raise ValidationError(
                f"turns[{i}] span ({turn.t_start}, {turn.t_end}) outside "
                f"[0, {case.video_duration}]"
            )
        if previous_end is not None and turn.t_start < previous_end:
            raise ValidationError(
                f"turns[{i}]: overlapping turns "
                f"(t_start {turn.t_start} < previous t_end {previous_end})"
            )
        previous_end = turn.t_end


def validate_case(case: EvaluationCase) -> EvaluationCase:
    """Re-check every invariant of an already-built case and return it.

    Construction normally guarantees validity; this re-asserts it for cases
    arriving from alternative loaders.
    """
    _check_case(case)
    return case


@dataclass(frozen=True)
class PredictedResponse:
    """One model output: text plus its emission timestamp."""

    text: str
    tau: float

    def __post_init__(self) -> None:
        if not self.text or not self.text.strip():
            raise ValidationError("response text is empty")
        if self.tau < 0:
            raise ValidationError(f"response timestamp {self.tau} is negative")

    def to_dict(self) -> dict[str, Any]:
        return {"time_s": self.tau, "text": self.text}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PredictedResponse":
        return cls(text=str(data["text"]), tau=float(data["time_s"]))


@dataclass(frozen=True)
class PredictionStream:
    """All responses one model emitted for one example, sorted by timestamp.

    ``partial`` marks streams truncated by a responder transport failure.
    """

    example_id: str
    responses: tuple[PredictedResponse, ...]
    partial: bool = False

    def __post_init__(self) -> None:
        if not self.example_id:
            raise ValidationError("example_id is empty")
        object.__setattr__(
            self,
            "responses",
            tuple(sorted(self.responses, key=lambda r: r.tau)),
        )

    def to_dict(self) -> dict[str, Any]:
        record: dict[str, Any] = {
            "example_id": self.example_id,
            "responses": [r.to_dict() for r in self.responses],
        }
        if self.partial:
            record["partial"] = True
        return record

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PredictionStream":
        return cls(
            example_id=str(data["example_id"]),
            responses=tuple(PredictedResponse.from_dict(r) for r in data["responses"]),
            partial=bool(data.get("partial", False)),
        )


@dataclass(frozen=True)
class JudgeVerdict:
    """Correctness score assigned to a set of accumulated responses."""

    score: int
    rationale: str = ""
    cache_key: str = ""
    max_score: int = DEFAULT_MAX_SCORE

    def __post_init__(self) -> None:
        if self.max_score < 1:
            raise ValidationError(f"max_score {self.max_score} must be >= 1")
        if not isinstance(self.score, int) or isinstance(self.score, bool):
            raise ValidationError(f"score {self.score!r} is not an integer")
        if not 0 <= self.score <= self.max_score:
            raise ValidationError(
                f"score {self.score} outside [0, {self.max_score}]"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "score": self.score,
            "rationale": self.rationale,
            "cache_key": self.cache_key,
            "max_score": self.max_score,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "JudgeVerdict":
        return cls(
            score=int(data["score"]),
            rationale=str(data.get("rationale", "")),
            cache_key=str(data.get("cache_key", "")),
            max_score=int(data.get("max_score", DEFAULT_MAX_SCORE)),
        )


@dataclass(frozen=True)
class TurnScoreTrace:
    """Judged points, their timeliness-shifted positions, and the resulting score."""

    turn_index: int
    points: tuple[tuple[float, int], ...]
    shifted_points: tuple[tuple[float, int], ...]
    pauc: float
    omega: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.omega <= 1.0:
            raise ValidationError(f"omega {self.omega} outside [0, 1]")
        if not 0.0 <= self.pauc <= 1.0:
            raise ValidationError(f"pauc {self.pauc} outside [0, 1]")
        if len(self.points) != len(self.shifted_points):
            raise ValidationError("points and shifted_points differ in length")
        _check_increasing(self.points, "points", strict=True)
        # Shifting scales time gaps by (1 - omega); near or at omega = 1,
        # distinct times legitimately land on the same float coordinate.
        _check_increasing(self.shifted_points, "shifted_points", strict=False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "turn_index": self.turn_index,
            "points": [[t, s] for t, s in self.points],
            "shifted_points": [[t, s] for t, s in self.shifted_points],
            "pauc": self.pauc,
            "omega": self.omega,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TurnScoreTrace":
        return cls(
            turn_index=int(data["turn_index"]),
            points=tuple((float(t), int(s)) for t, s in data["points"]),
            shifted_points=tuple((float(t), int(s)) for t, s in data["shifted_points"]),
            pauc=float(data["pauc"]),
            omega=float(data["omega"]),
        )


def _check_increasing(
    points: Sequence[tuple[float, int]], name: str, strict: bool
) -> None:
    for i in range(1, len(points)):
        if strict and points[i][0] <= points[i - 1][0]:
            raise ValidationError(f"{name}[{i}] not strictly increasing in time")
        if not strict and points[i][0] < points[i - 1][0]:
            raise ValidationError(f"{name}[{i}] decreasing in time")


@dataclass(frozen=True)
class EvaluationConfig:
    """Everything the metric pipeline needs to know besides the data itself."""

    omegas: tuple[float, ...] = DEFAULT_OMEGAS
    max_score: int = DEFAULT_MAX_SCORE
    initial_score: float = DEFAULT_INITIAL_SCORE
    boundary_policy: BoundaryPolicy = BoundaryPolicy.CLOSED_START_OPEN_END
    judge_id: str = "overlap"
    aggregation: Aggregation = Aggregation.MEAN_OVER_EXAMPLES
    judge_concurrency_cap: int = 4

    def __post_init__(self) -> None:
        object.__setattr__(self, "omegas", tuple(float(w) for w in self.omegas))
        if not self.omegas:
            raise ValidationError("omegas is empty")
        for w in self.omegas:
            if not 0.0 <= w <= 1.0:
                raise ValidationError(f"omega {w} outside [0, 1]")
        if self.max_score < 1:
            raise ValidationError(f"max_score {self.max_score} must be >= 1")
        if not 0.0 <= self.initial_score <= self.max_score:
            raise ValidationError(
                f"initial_score {self.initial_score} outside [0, {self.max_score}]"
            )
        if self.judge_concurrency_cap < 1:
            raise ValidationError("judge_concurrency_cap must be >= 1")
        object.__setattr__(self, "boundary_policy", BoundaryPolicy(self.boundary_policy))
        object.__setattr__(self, "aggregation", Aggregation(self.aggregation))

    def to_dict(self) -> dict[str, Any]:
        return {
            "omegas": list(self.omegas),
            "max_score": self.max_score,
            "initial_score": self.initial_score,
            "boundary_policy": self.boundary_policy.value,
            "judge_id": self.judge_id,
            "aggregation": self.aggregation.value,
            "judge_concurrency_cap": self.judge_concurrency_cap,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EvaluationConfig":
        return cls(
            omegas=tuple(float(w) for w in data.get("omegas", DEFAULT_OMEGAS)),
            max_score=int(data.get("max_score", DEFAULT_MAX_SCORE)),
            initial_score=float(data.get("initial_score", DEFAULT_INITIAL_SCORE)),
            boundary_policy=BoundaryPolicy(
                data.get("boundary_policy", BoundaryPolicy.CLOSED_START_OPEN_END)
            ),
            judge_id=str(data.get("judge_id", "overlap")),
            aggregation=Aggregation(
                data.get("aggregation", Aggregation.MEAN_OVER_EXAMPLES)
            ),
            judge_concurrency_cap=int(data.get("judge_concurrency_cap", 4)),
        )
