"""Chunk-at-a-time drivers that elicit timestamped responses from systems
that cannot natively decide when to reply.

A video is cut into fixed-length chunks and a responder is queried once
per chunk (or per growing prefix of chunks). Whenever the responder
produces a new answer, it is timestamped at the end of the chunk that
triggered it, the earliest moment the full chunk is observable. The
toolkit never touches pixels: chunk payloads are (video id, span)
references that real responders resolve themselves.
"""

from __future__ import annotations

import json
import logging
import math
import subprocess
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

import httpx

from .errors import FixtureError, ResponderTransportError, ValidationError
from .text import normalized, overlap_coefficient
from .types import EvaluationCase, PredictedResponse, PredictionStream

logger = logging.getLogger(__name__)

# Chunk lengths in seconds by task tag; short web clips get finer chunks.
DEFAULT_CHUNK_LEN = {"WEB": 2.0, "EGO": 5.0, "TV": 5.0, "VAD": 5.0, "other": 2.0}

DUPLICATE_OVERLAP = 0.9

DECISIONS = ("no_answer", "same_answer", "new_answer", "yes", "no")


@dataclass(frozen=True)
class Chunk:
    start: float
    end: float
    index: int


@dataclass(frozen=True)
class ChunkSchedule:
    """Contiguous fixed-length chunks covering [0, duration]; the last may be short."""

    chunk_len: float
    chunks: tuple[Chunk, ...]

    def __post_init__(self) -> None:
        if not self.chunks:
            raise ValidationError("empty chunk schedule")
        if self.chunks[0].start != 0.0:
            raise ValidationError("first chunk must start at 0")
        for i in range(1, len(self.chunks)):
            if self.chunks[i].start != self.chunks[i - 1].end:
                raise ValidationError(f"chunks[{i}] not contiguous")

    @property
    def duration(self) -> float:
        return self.chunks[-1].end


def chunk_video(duration: float, chunk_len: float) -> ChunkSchedule:
    """Cut [0, duration] into ceil(duration / chunk_len) chunks."""
    if duration <= 0:
        raise ValidationError(f"duration {duration} must be positive")
    if chunk_len <= 0:
        raise ValidationError(f"chunk_len {chunk_len} must be positive")
    n = max(1, math.ceil(duration / chunk_len))
    # Guard against float noise creating a zero-length trailing chunk.
    if n > 1 and (n - 1) * chunk_len >= duration:
        n -= 1
    chunks = []
    for i in range(n):
        start = i * chunk_len
        end = duration if i == n - 1 else (i + 1) * chunk_len
        chunks.append(Chunk(start=start, end=end, index=i))
    return ChunkSchedule(chunk_len=chunk_len, chunks=tuple(chunks))


def default_chunk_len(task_tag: str) -> float:
    return DEFAULT_CHUNK_LEN.get(task_tag, DEFAULT_CHUNK_LEN["other"])


@dataclass(frozen=True)
class ResponderTurn:
    """One scripted responder action."""

    decision: str
    answer: str | None = None

    def __post_init__(self) -> None:
        if self.decision not in DECISIONS:
            raise ValidationError(f"unknown decision {self.decision!r}")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ResponderTurn":
        return cls(decision=str(data["decision"]), answer=data.get("answer"))


@dataclass(frozen=True)
class ResponderRequest:
    """One driver query; serialized as-is for remote responders."""

    mode: str
    question: str
    video_id: str
    chunk_spans: tuple[tuple[float, float], ...]
    previous_response: str | None = None
    history: tuple[str, ...] | None = None
    phase: str | None = None

    def to_dict(self) -> dict[str, Any]:
        record: dict[str, Any] = {
            "mode": self.mode,
            "question": self.question,
            "video_id": self.video_id,
            "chunk_spans": [[s, e] for s, e in self.chunk_spans],
        }
        if self.previous_response is not None:
            record["previous_response"] = self.previous_response
        if self.history is not None:
            record["history"] = list(self.history)
        if self.phase is not None:
            record["phase"] = self.phase
        return record


@dataclass(frozen=True)
class ResponderReply:
    decision: str
    answer: str | None = None

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ResponderReply":
        return cls(decision=str(data.get("decision", "")), answer=data.get("answer"))


class Responder:
    """Anything a driver can query, one request at a time."""

    def start_case(self, example_id: str) -> None:
        """Hook called before a case's first chunk; stateless responders ignore it."""

    def respond(self, request: ResponderRequest) -> ResponderReply:
        raise NotImplementedError

    def close(self) -> None:
        pass


class ScriptedResponder(Responder):
    """Replays a fixed list of turns per example; one turn per chunk.

    A two-step answer query re-reads the current turn instead of consuming
    the next one. Running out of scripted turns degrades to no_answer.
    """

    def __init__(self, turns_by_example: Mapping[str, Sequence[ResponderTurn]]) -> None:
        self.turns_by_example = {
            example_id: tuple(turns) for example_id, turns in turns_by_example.items()
        }
        self._example_id: str | None = None
        self._position = 0
        self._consumed = False

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedResponder":
        with Path(path).open("r", encoding="utf-8") as fh:
            data = json.load(fh)
        examples = data.get("examples", data)
        return cls(
            {
                example_id: [ResponderTurn.from_dict(t) for t in turns]
                for example_id, turns in examples.items()
            }
        )

    def start_case(self, example_id: str) -> None:
        if example_id not in self.turns_by_example:
            raise FixtureError(f"scripted responder has no turns for {example_id!r}")
        self._example_id = example_id
        self._position = 0
        self._consumed = False

    def _current_turns(self) -> tuple[ResponderTurn, ...]:
        if self._example_id is None:
            raise FixtureError("scripted responder used before start_case")
        return self.turns_by_example[self._example_id]

    def respond(self, request: ResponderRequest) -> ResponderReply:
        turns = self._current_turns()
        if request.phase == "answer":
            # Second round of a two-step chunk: reuse the turn just consumed.
            turn = turns[self._position - 1] if self._position else None
            if turn is None or turn.answer is None:
                return ResponderReply(decision="no_answer")
            return ResponderReply(decision="answer", answer=turn.answer)
        if self._position >= len(turns):
            return ResponderReply(decision="no_answer")
        turn = turns[self._position]
        self._position += 1
        return ResponderReply(decision=turn.decision, answer=turn.answer)


class ProcessResponder(Responder):
    """Talks newline-delimited JSON to a child process over its pipes."""

    def __init__(self, command: Sequence[str] | str) -> None:
        if isinstance(command, str):
            command = command.split()
        try:
            self._process = subprocess.Popen(
                list(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise ResponderTransportError(f"cannot start responder process: {exc}")
        self._lock = threading.Lock()

    def respond(self, request: ResponderRequest) -> ResponderReply:
        line = json.dumps(request.to_dict(), ensure_ascii=False)
        with self._lock:
            if self._process.poll() is not None:
                raise ResponderTransportError("responder process has exited")
            try:
                assert self._process.stdin and self._process.stdout
                self._process.stdin.write(line + "\n")
                self._process.stdin.flush()
                reply_line = self._process.stdout.readline()
            except (OSError, ValueError) as exc:
                raise ResponderTransportError(f"responder pipe failed: {exc}")
        if not reply_line:
            raise ResponderTransportError("responder process closed its pipe")
        try:
            return ResponderReply.from_dict(json.loads(reply_line))
        except (json.JSONDecodeError, TypeError) as exc:
            raise ResponderTransportError(f"malformed responder reply: {exc}")

    def close(self) -> None:
        if self._process.poll() is None:
            self._process.terminate()
            try:
                self._process.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._process.kill()


class HttpResponder(Responder):
    """POSTs each request as JSON to a fixed URL."""

    def __init__(
        self,
        url: str,
        timeout: float = 120.0,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        self.url = url
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def respond(self, request: ResponderRequest) -> ResponderReply:
        try:
            response = self._client.post(self.url, json=request.to_dict())
        except httpx.HTTPError as exc:
            raise ResponderTransportError(f"responder endpoint failed: {exc}")
        if response.status_code >= 400:
            raise ResponderTransportError(
                f"responder endpoint returned {response.status_code}"
            )
        try:
            return ResponderReply.from_dict(response.json())
        except (json.JSONDecodeError, TypeError) as exc:
            raise ResponderTransportError(f"malformed responder reply: {exc}")

    def close(self) -> None:
        self._client.close()


def open_responder(spec: str) -> Responder:
    """Build a responder from a CLI-style spec.

    Accepted forms: ``scripted:PATH``, ``process:COMMAND``, or a direct
    ``http(s)://`` URL.
    """
    if spec.startswith("scripted:"):
        return ScriptedResponder.from_file(spec.split(":", 1)[1])
    if spec.startswith("process:"):
        return ProcessResponder(spec.split(":", 1)[1])
    if spec.startswith(("http://", "https://")):
        return HttpResponder(spec)
    raise ValidationError(f"unknown responder spec {spec!r}")


def _abort(
    case: EvaluationCase, responses: list[PredictedResponse], exc: ResponderTransportError
) -> ResponderTransportError:
    return ResponderTransportError(
        f"case {case.example_id!r}: {exc}", partial=tuple(responses)
    )


def drive_three_way(
    responder: Responder, case: EvaluationCase, schedule: ChunkSchedule
) -> PredictionStream:
    """Per chunk, the responder declares no answer, the same answer, or a new
    answer; only new answers enter the stream. The previous-response context
    updates only on a new answer."""
    responder.start_case(case.example_id)
    responses: list[PredictedResponse] = []
    previous: str | None = None
    for chunk in schedule.chunks:
        request = ResponderRequest(
            mode="three_way",
            question=case.question,
            video_id=case.video_id,
            chunk_spans=((chunk.start, chunk.end),),
            previous_response=previous,
        )
        try:
            reply = responder.respond(request)
        except ResponderTransportError as exc:
            raise _abort(case, responses, exc)
        if reply.decision == "new_answer" and reply.answer:
            responses.append(PredictedResponse(text=reply.answer, tau=chunk.end))
            previous = reply.answer
        elif reply.decision == "new_answer":
            logger.warning(
                "case %s chunk %d: new_answer without text treated as no_answer",
                case.example_id,
                chunk.index,
            )
        elif reply.decision not in ("no_answer", "same_answer"):
            logger.warning(
                "case %s chunk %d: malformed decision %r treated as no_answer",
                case.example_id,
                chunk.index,
                reply.decision,
            )
    return PredictionStream(example_id=case.example_id, responses=tuple(responses))


def drive_two_step(
    responder: Responder, case: EvaluationCase, schedule: ChunkSchedule
) -> PredictionStream:
    """Per chunk, first ask whether the chunk can answer the question; on yes,
    a second round fetches the answer from the current chunk alone."""
    responder.start_case(case.example_id)
    responses: list[PredictedResponse] = []
    for chunk in schedule.chunks:
        span = ((chunk.start, chunk.end),)
        decide = ResponderRequest(
            mode="two_step",
            question=case.question,
            video_id=case.video_id,
            chunk_spans=span,
            phase="decide",
        )
        try:
            reply = responder.respond(decide)
        except ResponderTransportError as exc:
            raise _abort(case, responses, exc)
        if reply.decision != "yes":
            if reply.decision != "no":
                logger.warning(
                    "case %s chunk %d: malformed decision %r treated as no",
                    case.example_id,
                    chunk.index,
                    reply.decision,
                )
            continue
        fetch = ResponderRequest(
            mode="two_step",
            question=case.question,
            video_id=case.video_id,
            chunk_spans=span,
            phase="answer",
        )
        try:
            answer = responder.respond(fetch)
        except ResponderTransportError as exc:
            raise _abort(case, responses, exc)
        if answer.answer:
            responses.append(PredictedResponse(text=answer.answer, tau=chunk.end))
        else:
            logger.warning(
                "case %s chunk %d: affirmative chunk produced no answer",
                case.example_id,
                chunk.index,
            )
    return PredictionStream(example_id=case.example_id, responses=tuple(responses))


def drive_incremental(
    responder: Responder, case: EvaluationCase, schedule: ChunkSchedule
) -> PredictionStream:
    """Round n feeds chunks 1..n plus all prior responses; the responder may
    add a new response or abstain."""
    responder.start_case(case.example_id)
    responses: list[PredictedResponse] = []
    history: list[str] = []
    spans = [(chunk.start, chunk.end) for chunk in schedule.chunks]
    for n, chunk in enumerate(schedule.chunks, start=1):
        request = ResponderRequest(
            mode="incremental",
            question=case.question,
            video_id=case.video_id,
            chunk_spans=tuple(spans[:n]),
            history=tuple(history),
        )
        try:
            reply = responder.respond(request)
        except ResponderTransportError as exc:
            raise _abort(case, responses, exc)
        if reply.decision == "new_answer" and reply.answer:
            responses.append(PredictedResponse(text=reply.answer, tau=chunk.end))
            history.append(reply.answer)
        elif reply.decision not in ("no_answer",) and not (
            reply.decision == "new_answer" and not reply.answer
        ):
            logger.warning(
                "case %s round %d: malformed decision %r treated as no_answer",
                case.example_id,
                n,
                reply.decision,
            )
    return PredictionStream(example_id=case.example_id, responses=tuple(responses))


DRIVERS = {
    "three-way": drive_three_way,
    "two-step": drive_two_step,
    "incremental": drive_incremental,
}


def duplicate_counts(
    stream: PredictionStream,
    case: EvaluationCase,
    overlap_threshold: float = DUPLICATE_OVERLAP,
) -> tuple[int, int]:
    """(duplicates, eligible) over raw in-span responses.

    Within each span, every response after the first is eligible; it counts
    as a duplicate when it repeats earlier in-span content by normalized
    equality or content overlap at or above ``overlap_threshold``.
    """
    eligible = 0
    duplicates = 0
    for turn in case.turns:
        in_span = [
            r.text
            for r in stream.responses
            if turn.t_start <= r.tau < turn.t_end
        ]
        for i, text in enumerate(in_span[1:], start=1):
            eligible += 1
            if _is_near_duplicate(text, in_span[:i], overlap_threshold):
                duplicates += 1
    return duplicates, eligible


def duplicate_rate(
    stream: PredictionStream,
    case: EvaluationCase,
    overlap_threshold: float = DUPLICATE_OVERLAP,
) -> float | None:
    """Fraction of eligible in-span responses that repeat earlier content.

    Returns None when no span holds two or more responses, where the rate
    would be meaningless.
    """
    duplicates, eligible = duplicate_counts(stream, case, overlap_threshold)
    if eligible == 0:
        return None
    return duplicates / eligible


def _is_near_duplicate(
    text: str, earlier: Sequence[str], overlap_threshold: float
) -> bool:
    norm = normalized(text)
    for prior in earlier:
        if norm == normalized(prior):
            return True
        if overlap_coefficient(text, prior) >= overlap_threshold:
            return True
    return False
