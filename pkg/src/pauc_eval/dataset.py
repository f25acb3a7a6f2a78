"""Benchmark and prediction file handling.

Both formats are newline-delimited JSON records in UTF-8. Files written
here use a canonical rendering (sorted keys, no trailing spaces), so a
load/save round trip of a canonical file is byte-identical.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from statistics import fmean
from typing import Any, Iterable, Mapping, Sequence

from .errors import DatasetFormatError, ValidationError
from .text import content_tokens, overlap_coefficient
from .types import EvaluationCase, GroundTruthTurn, PredictionStream, validate_case

logger = logging.getLogger(__name__)

TASK_TAGS = ("WEB", "EGO", "TV", "VAD", "other")

# Fixed question used by every anomaly-detection example.
ANOMALY_QUESTION = (
    "What suspicious or harmful activities, including unlawful, criminal "
    "behaviors or destructive accidents, are happening in the video?"
)

MERGE_GAP_SECONDS = 3.0
MERGE_SIMILARITY = 0.5


@dataclass(frozen=True)
class BenchmarkFile:
    """A validated benchmark: one task tag and its evaluation cases."""

    task_tag: str
    cases: tuple[EvaluationCase, ...]

    def __post_init__(self) -> None:
        if self.task_tag not in TASK_TAGS:
            raise ValidationError(f"unknown task tag {self.task_tag!r}")
        seen: set[str] = set()
        for case in self.cases:
            if case.example_id in seen:
                raise ValidationError(f"duplicate example_id {case.example_id!r}")
            seen.add(case.example_id)

    def case_by_id(self, example_id: str) -> EvaluationCase:
        for case in self.cases:
            if case.example_id == example_id:
                return case
        raise KeyError(example_id)


@dataclass(frozen=True)
class StatsTable:
    """Dataset statistics mirroring the per-task summary layout."""

    n_videos: int
    n_examples: int
    n_reply_turns: int
    replies_per_example: float
    mean_video_len: float
    mean_reply_span_len: float

    def __post_init__(self) -> None:
        expected = self.n_reply_turns / self.n_examples if self.n_examples else 0.0
        if abs(self.replies_per_example - expected) > 1e-9:
            raise ValidationError(
                f"replies_per_example {self.replies_per_example} != "
                f"n_reply_turns/n_examples {expected}"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_videos": self.n_videos,
            "n_examples": self.n_examples,
            "n_reply_turns": self.n_reply_turns,
            "replies_per_example": self.replies_per_example,
            "mean_video_len": self.mean_video_len,
            "mean_reply_span_len": self.mean_reply_span_len,
        }

    def to_text(self) -> str:
        rows = [
            ("videos", f"{self.n_videos}"),
            ("examples", f"{self.n_examples}"),
            ("reply turns", f"{self.n_reply_turns}"),
            ("replies per example", f"{self.replies_per_example:.2f}"),
            ("mean video length (s)", f"{self.mean_video_len:.2f}"),
            ("mean reply span length (s)", f"{self.mean_reply_span_len:.2f}"),
        ]
        width = max(len(label) for label, _ in rows)
        return "\n".join(f"{label:<{width}}  {value}" for label, value in rows)


def _canonical_line(record: Mapping[str, Any]) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n"


def _iter_records(path: str | Path) -> Iterable[tuple[int, dict[str, Any]]]:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})")
            if not isinstance(record, dict):
                raise DatasetFormatError(f"{path}:{lineno}: record is not an object")
            yield lineno, record


def load_benchmark(
    path: str | Path,
    task_tag: str | None = None,
    merge: bool = False,
    gap_threshold: float = MERGE_GAP_SECONDS,
    similarity_threshold: float = MERGE_SIMILARITY,
) -> BenchmarkFile:
    """Load, validate, and optionally turn-merge a benchmark file.

    Records may carry a ``task`` field; all records must agree on it.
    ``task_tag`` overrides whatever the file says.
    """
    path = Path(path)
    cases: list[EvaluationCase] = []
    seen_ids: set[str] = set()
    file_tag: str | None = None
    for lineno, record in _iter_records(path):
        record_tag = record.get("task")
        if record_tag is not None:
            if record_tag not in TASK_TAGS:
                raise DatasetFormatError(
                    f"{path}:{lineno}: unknown task tag {record_tag!r}"
                )
            if file_tag is not None and record_tag != file_tag:
                raise DatasetFormatError(
                    f"{path}:{lineno}: conflicting task tags "
                    f"{file_tag!r} and {record_tag!r}"
                )
            file_tag = record_tag
        try:
            case = EvaluationCase.from_dict(record)
            if merge:
                merged = merge_turns(
                    list(case.turns),
                    gap_threshold=gap_threshold,
                    similarity_threshold=similarity_threshold,
                )
                case = EvaluationCase(
                    example_id=case.example_id,
                    video_id=case.video_id,
                    video_duration=case.video_duration,
                    question=case.question,
                    question_time=case.question_time,
                    turns=tuple(merged),
                )
            validate_case(case)
        except (KeyError, TypeError) as exc:
            raise DatasetFormatError(
                f"{path}:{lineno}: missing or malformed field ({exc})"
            ) from exc
        except ValidationError as exc:
            example_id = record.get("example_id", "<missing id>")
            raise DatasetFormatError(
                f"{path}:{lineno}: example {example_id!r}: {exc}"
            ) from exc
        if case.example_id in seen_ids:
            raise DatasetFormatError(
                f"{path}:{lineno}: duplicate example_id {case.example_id!r}"
            )
        seen_ids.add(case.example_id)
        cases.append(case)
    if not cases:
        raise DatasetFormatError(f"{path}: no examples found")
    return BenchmarkFile(task_tag=task_tag or file_tag or "other", cases=tuple(cases))


def save_benchmark(benchmark: BenchmarkFile, path: str | Path) -> None:
    """Write a benchmark in canonical form (one sorted-key record per line)."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for case in benchmark.cases:
            record = case.to_dict()
            if benchmark.task_tag != "other":
                record["task"] = benchmark.task_tag
            fh.write(_canonical_line(record))


def merge_turns(
    turns: Sequence[GroundTruthTurn],
    gap_threshold: float = MERGE_GAP_SECONDS,
    similarity_threshold: float = MERGE_SIMILARITY,
) -> list[GroundTruthTurn]:
    """Merge consecutive turns that describe the same moment.

    Two consecutive turns merge when the gap between their spans is below
    ``gap_threshold`` (strictly) and their texts overlap at least
    ``similarity_threshold``. Merging is applied transitively left to
    right and repeated until stable: combining later turns can push their
    joint text over the similarity threshold with an earlier neighbour, so
    one pass is not a fixed point. The merged gold keeps the longer text
    when one subsumes the other, otherwise concatenates both.
    """
    merged = list(turns)
    while True:
        again: list[GroundTruthTurn] = []
        for turn in merged:
            if again:
                previous = again[-1]
                gap = turn.t_start - previous.t_end
                if gap < gap_threshold and (
                    overlap_coefficient(previous.gold, turn.gold)
                    >= similarity_threshold
                ):
                    again[-1] = GroundTruthTurn(
                        gold=_merge_gold(previous.gold, turn.gold),
                        t_start=previous.t_start,
                        t_end=max(previous.t_end, turn.t_end),
                    )
                    continue
            again.append(turn)
        if len(again) == len(merged):
            return again
        merged = again


def _merge_gold(a: str, b: str) -> str:
    tokens_a = set(content_tokens(a))
    tokens_b = set(content_tokens(b))
    if tokens_a <= tokens_b or tokens_b <= tokens_a:
        return a if len(a) >= len(b) else b
    return f"{a} {b}"


def compute_stats(benchmark: BenchmarkFile) -> StatsTable:
    """Counts and arithmetic means over the whole file."""
    cases = benchmark.cases
    n_examples = len(cases)
    n_reply_turns = sum(case.turn_count for case in cases)
    span_lengths = [t.span_length for case in cases for t in case.turns]
    return StatsTable(
        n_videos=len({case.video_id for case in cases}),
        n_examples=n_examples,
        n_reply_turns=n_reply_turns,
        replies_per_example=n_reply_turns / n_examples,
        mean_video_len=fmean(case.video_duration for case in cases),
        mean_reply_span_len=fmean(span_lengths),
    )


def load_predictions(path: str | Path) -> list[PredictionStream]:
    """Load prediction streams, sorting each by timestamp.

    Matching against benchmark examples happens at evaluation time;
    this only guarantees well-formed, non-negative-time streams.
    """
    path = Path(path)
    streams: list[PredictionStream] = []
    seen_ids: set[str] = set()
    for lineno, record in _iter_records(path):
        try:
            stream = PredictionStream.from_dict(record)
        except (KeyError, TypeError) as exc:
            raise DatasetFormatError(
                f"{path}:{lineno}: missing or malformed field ({exc})"
            ) from exc
        except ValidationError as exc:
            example_id = record.get("example_id", "<missing id>")
            raise DatasetFormatError(
                f"{path}:{lineno}: example {example_id!r}: {exc}"
            ) from exc
        if stream.example_id in seen_ids:
            raise DatasetFormatError(
                f"{path}:{lineno}: duplicate example_id {stream.example_id!r}"
            )
        seen_ids.add(stream.example_id)
        streams.append(stream)
    return streams


def save_predictions(streams: Iterable[PredictionStream], path: str | Path) -> None:
    """Write prediction streams in canonical form."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for stream in streams:
            fh.write(_canonical_line(stream.to_dict()))
