"""Judge backends producing accumulated-correctness scores.

Three interchangeable backends share one contract: a remote
chat-completions judge, a deterministic token-overlap judge for
offline/desk-scale runs, and a scripted replay judge for bit-reproducible
fixtures. Verdicts are cached in an append-only line file keyed by a
digest of everything that influences the score.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import httpx

from .errors import (
    FixtureError,
    JudgeError,
    JudgeParseError,
    JudgeTransportError,
    ValidationError,
)
from .metric import SpanSelection
from .text import token_recall
from .types import JudgeVerdict

logger = logging.getLogger(__name__)

ENV_BASE_URL = "PAUC_JUDGE_BASE"
ENV_API_KEY = "PAUC_JUDGE_KEY"

DEFAULT_PROMPT_VERSION = "judge-prompt-v1"
DEFAULT_MODEL = "gpt-4.1"
SUPPORTED_SCALES = (2, 4)

SCALE_DESCRIPTIONS = {
    2: "Scale: 0 = completely incorrect, 1 = partially correct, 2 = mostly correct.",
    4: (
        "Scale: 0 = completely incorrect, 1 = mostly incorrect, "
        "2 = partially correct, 3 = largely correct, 4 = mostly correct."
    ),
}

# Recall thresholds mapping token recall to a score: score = number of
# thresholds reached. The two-point scale uses 0.3/0.7; the four-point
# scale uses quartile boundaries with full recall required for the maximum.
OVERLAP_THRESHOLDS = {
    2: (0.3, 0.7),
    4: (0.25, 0.5, 0.75, 1.0),
}


def scale_description(max_score: int) -> str:
    try:
        return SCALE_DESCRIPTIONS[max_score]
    except KeyError:
        raise ValidationError(f"unsupported score scale {max_score}") from None


@dataclass(frozen=True)
class JudgeRequest:
    """One scoring request: the question, the gold answer, and the
    accumulated responses emitted so far."""

    question: str
    gold: str
    accumulated_responses: tuple[str, ...]
    max_score: int = 2

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "accumulated_responses", tuple(self.accumulated_responses)
        )
        if not self.accumulated_responses:
            raise ValidationError("accumulated_responses is empty")
        if self.max_score not in SUPPORTED_SCALES:
            raise ValidationError(
                f"max_score {self.max_score} not in {SUPPORTED_SCALES}"
            )


@dataclass(frozen=True)
class JudgePromptTemplate:
    """Prompt pair sent to the remote judge.

    The user template must contain each placeholder exactly once; the
    version participates in cache keys so template edits invalidate them.
    """

    system_text: str
    user_template: str
    version: str = DEFAULT_PROMPT_VERSION

    PLACEHOLDERS = ("{question}", "{gold}", "{responses}", "{scale_description}")

    def __post_init__(self) -> None:
        for placeholder in self.PLACEHOLDERS:
            n = self.user_template.count(placeholder)
            if n != 1:
                raise ValidationError(
                    f"placeholder {placeholder} appears {n} times (need exactly 1)"
                )

    def render(self, request: JudgeRequest) -> tuple[str, str]:
        responses = "\n".join(
            f"{i}. {text}" for i, text in enumerate(request.accumulated_responses, 1)
        )
        user_text = self.user_template.format(
            question=request.question,
            gold=request.gold,
            responses=responses,
            scale_description=scale_description(request.max_score),
        )
        return self.system_text, user_text


DEFAULT_TEMPLATE = JudgePromptTemplate(
    system_text=(
        "You grade answers for a streaming video question answering task. "
        "A model emitted responses while the video played; judge how well "
        "those responses, taken together, convey the reference answer. "
        "End your reply with the integer score alone on the last line."
    ),
    user_template=(
        "Question: {question}\n"
        "Reference answer: {gold}\n"
        "Model responses so far, in order:\n"
        "{responses}\n\n"
        "{scale_description}\n"
        "Output the integer score on the last line."
    ),
)


def cache_key(
    backend_id: str, prompt_version: str, request: JudgeRequest
) -> str:
    """Digest of every input that determines a verdict."""
    payload = json.dumps(
        {
            "backend": backend_id,
            "prompt_version": prompt_version,
            "question": request.question,
            "gold": request.gold,
            "responses": list(request.accumulated_responses),
            "max_score": request.max_score,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _record_digest(record: Mapping[str, Any]) -> str:
    body = {k: v for k, v in record.items() if k != "digest"}
    payload = json.dumps(body, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class JudgeCache:
    """Append-only verdict store, one JSON record per line.

    Each record carries a digest over its own fields; reads verify it, so a
    hit returns exactly what was stored. Writes are serialized and visible
    to subsequent reads within the run.
    """

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self._lock = threading.Lock()
        self._records: dict[str, dict[str, Any]] = {}
        self.hits = 0
        self.misses = 0
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        with self.path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise JudgeError(
                        f"{self.path}:{lineno}: corrupt cache line ({exc})"
                    ) from exc
                if record.get("digest") != _record_digest(record):
                    raise JudgeError(
                        f"{self.path}:{lineno}: cache record digest mismatch"
                    )
                self._records[record["cache_key"]] = record

    def get(self, key: str) -> dict[str, Any] | None:
        with self._lock:
            record = self._records.get(key)
            if record is None:
                self.misses += 1
            else:
                self.hits += 1
            return record

    def put(self, key: str, score: int, rationale: str, prompt_version: str) -> None:
        record = {
            "cache_key": key,
            "score": score,
            "rationale": rationale,
            "prompt_version": prompt_version,
            "timestamp": time.time(),
        }
        record["digest"] = _record_digest(record)
        with self._lock:
            self._records[key] = record
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")

    @property
    def hit_rate(self) -> float | None:
        total = self.hits + self.misses
        return None if total == 0 else self.hits / total

    def __len__(self) -> int:
        return len(self._records)


class JudgeBackend:
    """Common surface for all judge backends."""

    judge_id: str = "base"
    prompt_version: str = "base-v0"

    def __init__(self) -> None:
        self.calls = 0
        self._calls_lock = threading.Lock()

    def evaluate(self, request: JudgeRequest) -> tuple[int, str]:
        """Return (score, rationale); implementations must stay in [0, max_score]."""
        raise NotImplementedError

    def _count_call(self) -> None:
        with self._calls_lock:
            self.calls += 1

    def close(self) -> None:
        pass


class OverlapJudge(JudgeBackend):
    """Deterministic substitute judge based on content-token recall of the gold."""

    judge_id = "overlap"
    prompt_version = "overlap-v1"

    def __init__(self, thresholds: Sequence[float] | None = None) -> None:
        super().__init__()
        self.thresholds = tuple(thresholds) if thresholds is not None else None
        if self.thresholds is not None and sorted(self.thresholds) != list(
            self.thresholds
        ):
            raise ValidationError("overlap thresholds must be sorted ascending")

    def evaluate(self, request: JudgeRequest) -> tuple[int, str]:
        thresholds = self.thresholds
        if thresholds is None:
            thresholds = OVERLAP_THRESHOLDS[request.max_score]
        if len(thresholds) != request.max_score:
            raise ValidationError(
                f"{len(thresholds)} thresholds cannot map to scale {request.max_score}"
            )
        combined = " ".join(request.accumulated_responses)
        recall = token_recall(request.gold, combined)
        score = sum(recall >= t for t in thresholds)
        return score, f"content-token recall {recall:.3f}"


class ScriptedJudge(JudgeBackend):
    """Replays scores from a fixture mapping cache keys to verdicts."""

    judge_id = "scripted"
    prompt_version = "scripted-v1"

    def __init__(self, script: Mapping[str, Any]) -> None:
        super().__init__()
        self.script = dict(script)
        self._pending: JudgeRequest | None = None

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedJudge":
        with Path(path).open("r", encoding="utf-8") as fh:
            return cls(json.load(fh))

    def key_for(self, request: JudgeRequest) -> str:
        return cache_key(self.judge_id, self.prompt_version, request)

    def evaluate(self, request: JudgeRequest) -> tuple[int, str]:
        key = self.key_for(request)
        if key not in self.script:
            raise FixtureError(f"scripted judge has no entry for cache key {key}")
        entry = self.script[key]
        if isinstance(entry, Mapping):
            return int(entry["score"]), str(entry.get("rationale", ""))
        return int(entry), ""


def overlap_judge(
    request: JudgeRequest, thresholds: Sequence[float] | None = None
) -> JudgeVerdict:
    """One-shot deterministic verdict; see :class:`OverlapJudge`."""
    return judge(request, OverlapJudge(thresholds=thresholds))


def scripted_judge(request: JudgeRequest, script: Mapping[str, Any]) -> JudgeVerdict:
    """One-shot scripted verdict; errors name the missing cache key."""
    return judge(request, ScriptedJudge(script))


class RemoteJudge(JudgeBackend):
    """Chat-completions client with bounded retries and one reprompt on
    unparseable output.

    The endpoint comes from ``PAUC_JUDGE_BASE`` and the key from
    ``PAUC_JUDGE_KEY``; the model name is configuration. Out-of-range
    scores are treated as parse errors, never clamped.
    """

    judge_id = "llm"
    RETRYABLE_STATUS = (429, 500, 502, 503, 504)

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        model: str = DEFAULT_MODEL,
        template: JudgePromptTemplate = DEFAULT_TEMPLATE,
        max_attempts: int = 5,
        backoff_base: float = 0.5,
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        super().__init__()
        if not base_url:
            raise ValidationError("remote judge needs a base URL")
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.model = model
        self.template = template
        self.prompt_version = template.version
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self._sleep = sleep
        self._client = httpx.Client(timeout=timeout, transport=transport)

    @classmethod
    def from_env(cls, **kwargs: Any) -> "RemoteJudge":
        base_url = os.environ.get(ENV_BASE_URL)
        if not base_url:
            raise ValidationError(
                f"environment variable {ENV_BASE_URL} is not set; "
                "the llm judge needs a chat-completions endpoint"
            )
        return cls(base_url=base_url, api_key=os.environ.get(ENV_API_KEY), **kwargs)

    def close(self) -> None:
        self._client.close()

    def evaluate(self, request: JudgeRequest) -> tuple[int, str]:
        system_text, user_text = self.template.render(request)
        messages = [
            {"role": "system", "content": system_text},
            {"role": "user", "content": user_text},
        ]
        content = self._complete(messages)
        score = _parse_score(content, request.max_score)
        if score is not None:
            return score, content
        logger.warning("unparseable judge output, reprompting once")
        retry_messages = messages + [
            {"role": "assistant", "content": content},
            {
                "role": "user",
                "content": (
                    f"Reply with only one integer between 0 and {request.max_score}."
                ),
            },
        ]
        content = self._complete(retry_messages)
        score = _parse_score(content, request.max_score)
        if score is None:
            raise JudgeParseError(
                f"no integer in [0, {request.max_score}] in judge output "
                f"after one reprompt: {content!r}"
            )
        return score, content

    def _complete(self, messages: list[dict[str, str]]) -> str:
        url = f"{self.base_url}/chat/completions"
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {"model": self.model, "messages": messages, "temperature": 0}

        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                delay = self.backoff_base * (2 ** (attempt - 1))
                self._sleep(delay + random.uniform(0, self.backoff_base / 4))
            try:
                response = self._client.post(url, headers=headers, json=payload)
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code in self.RETRYABLE_STATUS:
                last_error = JudgeTransportError(
                    f"judge endpoint returned {response.status_code}"
                )
                continue
            if response.status_code >= 400:
                raise JudgeTransportError(
                    f"judge endpoint returned {response.status_code}: "
                    f"{response.text[:200]}"
                )
            try:
                return response.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError, json.JSONDecodeError) as exc:
                raise JudgeTransportError(
                    f"malformed chat-completions response: {exc}"
                ) from exc
        raise JudgeTransportError(
            f"judge endpoint failed after {self.max_attempts} attempts: {last_error}"
        )


def _parse_score(content: str, max_score: int) -> int | None:
    """Extract the integer score from the final non-empty line, if valid."""
    lines = [line.strip() for line in content.strip().splitlines() if line.strip()]
    if not lines:
        return None
    matches = [token for token in lines[-1].replace(":", " ").split() if _is_int(token)]
    if not matches:
        return None
    score = int(matches[-1])
    if not 0 <= score <= max_score:
        return None
    return score


def _is_int(token: str) -> bool:
    try:
        int(token)
    except ValueError:
        return False
    return True


def judge(
    request: JudgeRequest,
    backend: JudgeBackend,
    cache: JudgeCache | None = None,
) -> JudgeVerdict:
    """Score one request through a backend, consulting the cache first."""
    key = cache_key(backend.judge_id, backend.prompt_version, request)
    if cache is not None:
        record = cache.get(key)
        if record is not None:
            return JudgeVerdict(
                score=int(record["score"]),
                rationale=str(record["rationale"]),
                cache_key=key,
                max_score=request.max_score,
            )
    backend._count_call()
    score, rationale = backend.evaluate(request)
    verdict = JudgeVerdict(
        score=score, rationale=rationale, cache_key=key, max_score=request.max_score
    )
    if cache is not None:
        cache.put(key, verdict.score, verdict.rationale, backend.prompt_version)
    return verdict


def judge_turn_prefixes(
    question: str,
    gold: str,
    selection: SpanSelection,
    backend: JudgeBackend,
    cache: JudgeCache | None = None,
    max_score: int = 2,
) -> list[tuple[float, int]]:
    """Judge each prefix of the in-span responses, pairing scores with times.

    Prefix p covers responses 1..p, so an early wrong answer keeps weighing
    on later scores. Errors carry the failing prefix index.
    """
    scored: list[tuple[float, int]] = []
    texts: list[str] = []
    for p, response in enumerate(selection.responses, start=1):
        texts.append(response.text)
        request = JudgeRequest(
            question=question,
            gold=gold,
            accumulated_responses=tuple(texts),
            max_score=max_score,
        )
        try:
            verdict = judge(request, backend, cache)
        except JudgeError as exc:
            exc.prefix_index = p  # type: ignore[attr-defined]
            raise
        scored.append((response.tau, verdict.score))
    return scored


def resolve_judge(
    spec: str,
    model: str = DEFAULT_MODEL,
    template: JudgePromptTemplate = DEFAULT_TEMPLATE,
) -> JudgeBackend:
    """Build a backend from a CLI-style judge spec.

    Accepted forms: ``overlap``, ``scripted:PATH``, ``llm``.
    """
    if spec == "overlap":
        return OverlapJudge()
    if spec.startswith("scripted:"):
        path = spec.split(":", 1)[1]
        if not path:
            raise ValidationError("scripted judge spec is missing its file path")
        return ScriptedJudge.from_file(path)
    if spec == "llm":
        return RemoteJudge.from_env(model=model, template=template)
    raise ValidationError(f"unknown judge spec {spec!r}")
