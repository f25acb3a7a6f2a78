"""Per-turn time-aware score computation and aggregation.

The turn score is the area under the step curve of accumulated-response
correctness over the reply timespan, normalized by the maximum possible
area. An initial value of 0.5 applies before the first response, so
staying silent beats answering wrongly. A timeliness weight ``omega``
in [0, 1] shifts response times toward the span start before
integration: 0 leaves timing fully weighted, 1 ignores it entirely.

Functions here are pure; judging happens upstream, so the math stays
deterministic and separately testable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import fmean
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError
from .types import (
    BoundaryPolicy,
    EvaluationConfig,
    GroundTruthTurn,
    PredictedResponse,
    PredictionStream,
    TurnScoreTrace,
)

ScoredPoint = tuple[float, int]


@dataclass(frozen=True)
class SpanSelection:
    """Responses of one stream that fall inside one turn's reply timespan.

    Responses sharing a timestamp are coalesced into a single point whose
    text is their concatenation in stream order (a step curve cannot hold
    two values at one time). ``excluded_count`` counts the stream responses
    that fell outside this turn's span, for diagnostics only.
    """

    turn_index: int
    responses: tuple[PredictedResponse, ...]
    excluded_count: int = 0

    def __post_init__(self) -> None:
        for i in range(1, len(self.responses)):
            if self.responses[i].tau <= self.responses[i - 1].tau:
                raise ValidationError(
                    f"responses[{i}] not strictly increasing in time "
                    "(equal timestamps must be coalesced)"
                )

    @property
    def count(self) -> int:
        return len(self.responses)


def select_in_span(
    stream: PredictionStream,
    turn: GroundTruthTurn,
    policy: BoundaryPolicy = BoundaryPolicy.CLOSED_START_OPEN_END,
    turn_index: int = 0,
) -> SpanSelection:
    """Pick the responses inside ``[t_start, t_end)`` and coalesce timestamp ties.

    The span start is closed so a response with perfect timing is kept; the
    end is open, which also keeps adjacent merged turns disjoint.
    """
    if policy is not BoundaryPolicy.CLOSED_START_OPEN_END:
        raise ValidationError(f"unsupported boundary policy {policy!r}")
    inside = [
        r for r in stream.responses if turn.t_start <= r.tau < turn.t_end
    ]
    coalesced: list[PredictedResponse] = []
    for response in inside:
        if coalesced and response.tau == coalesced[-1].tau:
            merged_text = coalesced[-1].text + " " + response.text
            coalesced[-1] = PredictedResponse(text=merged_text, tau=response.tau)
        else:
            coalesced.append(response)
    return SpanSelection(
        turn_index=turn_index,
        responses=tuple(coalesced),
        excluded_count=len(stream.responses) - len(inside),
    )


def out_of_span_count(stream: PredictionStream, turns: Sequence[GroundTruthTurn]) -> int:
    """Number of responses that fall inside no reply timespan at all.

    Such responses are never judged and therefore never scored; this
    diagnostic surfaces how much of the stream the metric ignores.
    """
    count = 0
    for response in stream.responses:
        if not any(t.t_start <= response.tau < t.t_end for t in turns):
            count += 1
    return count


def shift_times(taus: Sequence[float], t_start: float, omega: float) -> list[float]:
    """Shift each timestamp toward the span start by factor ``omega``.

    tau' = t_start + (1 - omega) * (tau - t_start). omega = 0 is the exact
    identity; omega = 1 collapses every timestamp onto ``t_start``.
    """
    if not 0.0 <= omega <= 1.0:
        raise ValidationError(f"omega {omega} outside [0, 1]")
    for tau in taus:
        if tau < t_start:
            raise ValidationError(f"timestamp {tau} precedes span start {t_start}")
    if omega == 0.0:
        return [float(t) for t in taus]
    scale = 1.0 - omega
    return [t_start + scale * (tau - t_start) for tau in taus]


def turn_pauc(
    turn: GroundTruthTurn,
    scored: Sequence[ScoredPoint],
    omega: float,
    config: EvaluationConfig,
    turn_index: int = 0,
) -> TurnScoreTrace:
    """Closed-form area under the step curve for one turn, normalized to [0, 1].

    With shifted points tau'_1 < ... < tau'_P and scores s_p:

        area = (tau'_1 - t_start) * initial
             + sum_p (tau'_{p+1} - tau'_p) * s_p
             + (t_end - tau'_P) * s_P

    normalized by (t_end - t_start) * max_score. With no in-span responses
    the curve is the constant initial value, so the score is
    initial / max_score for every omega.
    """
    if not 0.0 <= omega <= 1.0:
        raise ValidationError(f"omega {omega} outside [0, 1]")
    _check_scored_points(turn, scored, config.max_score)

    span = turn.t_end - turn.t_start
    initial = config.initial_score
    if not scored:
        return TurnScoreTrace(
            turn_index=turn_index,
            points=(),
            shifted_points=(),
            pauc=initial / config.max_score,
            omega=omega,
        )

    taus = [tau for tau, _ in scored]
    scores = [s for _, s in scored]
    shifted = shift_times(taus, turn.t_start, omega)

    area = (shifted[0] - turn.t_start) * initial
    for p in range(len(shifted) - 1):
        area += (shifted[p + 1] - shifted[p]) * scores[p]
    area += (turn.t_end - shifted[-1]) * scores[-1]

    pauc = area / (span * config.max_score)
    # Summing segment widths can overshoot the exact bound by an ulp or two;
    # anything further out is a real bug and still fails trace validation.
    if 1.0 < pauc < 1.0 + 1e-9:
        pauc = 1.0
    elif -1e-9 < pauc < 0.0:
        pauc = 0.0

    return TurnScoreTrace(
        turn_index=turn_index,
        points=tuple((float(t), int(s)) for t, s in scored),
        shifted_points=tuple(zip(shifted, scores)),
        pauc=pauc,
        omega=omega,
    )


def riemann_oracle(
    turn: GroundTruthTurn,
    scored: Sequence[ScoredPoint],
    omega: float,
    config: EvaluationConfig,
    dt: float,
) -> float:
    """Numerically integrate the step curve by sampling every ``dt`` seconds.

    Independent check on the closed form: the curve value is the initial
    score before the first shifted point, s_p on [tau'_p, tau'_{p+1}), and
    s_P afterwards. Left-endpoint samples of width ``dt`` cover the span,
    with one shorter sample for the remainder.
    """
    if dt <= 0:
        raise ValidationError(f"dt {dt} must be positive")
    _check_scored_points(turn, scored, config.max_score)

    span = turn.t_end - turn.t_start
    shifted = np.asarray(
        shift_times([tau for tau, _ in scored], turn.t_start, omega), dtype=np.float64
    )
    # values[k] is the curve value when k shifted points lie at or before t.
    values = np.concatenate(
        ([config.initial_score], np.asarray([s for _, s in scored], dtype=np.float64))
    )

    def sample(ts: np.ndarray) -> np.ndarray:
        return values[np.searchsorted(shifted, ts, side="right")]

    n_full = int(math.floor(span / dt))
    ts = turn.t_start + dt * np.arange(n_full, dtype=np.float64)
    integral = float(sample(ts).sum()) * dt
    remainder = span - n_full * dt
    if remainder > 0:
        t_last = turn.t_start + n_full * dt
        integral += float(sample(np.asarray([t_last]))[0]) * remainder
    return integral / (span * config.max_score)


def _check_scored_points(
    turn: GroundTruthTurn, scored: Sequence[ScoredPoint], max_score: int
) -> None:
    previous = None
    for i, (tau, score) in enumerate(scored):
        if not turn.t_start <= tau < turn.t_end:
            raise ValidationError(
                f"scored[{i}] time {tau} outside span [{turn.t_start}, {turn.t_end})"
            )
        if not 0 <= score <= max_score:
            raise ValidationError(f"scored[{i}] score {score} outside [0, {max_score}]")
        if previous is not None and tau <= previous:
            raise ValidationError(f"scored[{i}] not strictly increasing in time")
        previous = tau


def aggregate_example(traces: Iterable[TurnScoreTrace]) -> float:
    """Unweighted mean of per-turn scores; every trace must share one omega."""
    traces = list(traces)
    if not traces:
        raise ValidationError("cannot aggregate an empty list of turn traces")
    omegas = {t.omega for t in traces}
    if len(omegas) > 1:
        raise ValidationError(f"mixed omegas in example aggregation: {sorted(omegas)}")
    return fmean(t.pauc for t in traces)


def aggregate_dataset(example_scores: Sequence[float]) -> float:
    """Unweighted mean over examples, so long videos cannot dominate."""
    if not example_scores:
        raise ValidationError("cannot aggregate an empty list of example scores")
    return fmean(example_scores)


def format_percent(score: float) -> str:
    """Scores are reported on a 0-100 scale with one decimal."""
    return f"{score * 100.0:.1f}"
