"""Shared fixtures and builders for the test suite."""

from __future__ import annotations

from pathlib import Path

import pytest

from pauc_eval.types import (
    EvaluationCase,
    EvaluationConfig,
    GroundTruthTurn,
    PredictedResponse,
    PredictionStream,
)

DATA_DIR = Path(__file__).parent / "data"
FIXTURES_DIR = DATA_DIR / "fixtures"
GOLDEN_DIR = DATA_DIR / "golden"


def make_turn(
    gold: str = "a cat jumps onto the kitchen table",
    t_start: float = 10.0,
    t_end: float = 20.0,
) -> GroundTruthTurn:
    return GroundTruthTurn(gold=gold, t_start=t_start, t_end=t_end)


def make_case(
    example_id: str = "ex-1",
    turns: tuple[GroundTruthTurn, ...] | None = None,
    video_duration: float = 30.0,
    question: str = "what does the cat do?",
) -> EvaluationCase:
    if turns is None:
        turns = (make_turn(),)
    return EvaluationCase(
        example_id=example_id,
        video_id=f"vid-{example_id}",
        video_duration=video_duration,
        question=question,
        turns=turns,
    )


def make_stream(
    example_id: str = "ex-1", timed_texts: list[tuple[float, str]] | None = None
) -> PredictionStream:
    responses = tuple(
        PredictedResponse(text=text, tau=tau) for tau, text in (timed_texts or [])
    )
    return PredictionStream(example_id=example_id, responses=responses)


@pytest.fixture
def config() -> EvaluationConfig:
    return EvaluationConfig()
