"""Pairwise model preferences from per-turn scores, and Cohen's kappa
between those preferences and human labels.

Preferences are three-way (A wins, draw, B wins) over shared reply turns.
The kappa implementation supports no weighting and linear weighting over
the ordered categories A < draw < B.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .dataset import _iter_records
from .errors import DatasetFormatError, ValidationError
from .types import EvaluationCase, GroundTruthTurn, PredictionStream, TurnScoreTrace

# Ordered categories; linear weights are 1 - |i - j| / (k - 1) over them.
CATEGORIES = ("A", "draw", "B")

WEIGHTINGS = ("none", "linear")

DEFAULT_DRAW_EPSILON = 0.05


@dataclass(frozen=True)
class PreferenceLabel:
    """One preference judgment on one reply turn from one source."""

    example_id: str
    turn_index: int
    label: str
    source: str

    def __post_init__(self) -> None:
        if self.label not in CATEGORIES:
            raise ValidationError(
                f"label {self.label!r} not in {'/'.join(CATEGORIES)}"
            )
        if self.turn_index < 0:
            raise ValidationError(f"turn_index {self.turn_index} must be >= 0")

    @property
    def turn_ref(self) -> tuple[str, int]:
        return (self.example_id, self.turn_index)


def compare_scores(
    pauc_a: float, pauc_b: float, draw_epsilon: float = DEFAULT_DRAW_EPSILON
) -> str:
    """A/draw/B by score difference; differences within epsilon are draws."""
    if draw_epsilon < 0:
        raise ValidationError(f"draw_epsilon {draw_epsilon} must be >= 0")
    delta = pauc_a - pauc_b
    if delta > draw_epsilon:
        return "A"
    if -delta > draw_epsilon:
        return "B"
    return "draw"


def preference_from_pauc(
    example_id: str,
    trace_a: TurnScoreTrace,
    trace_b: TurnScoreTrace,
    draw_epsilon: float = DEFAULT_DRAW_EPSILON,
) -> PreferenceLabel:
    """Label a turn by comparing two models' PAUC values at the same omega."""
    if trace_a.turn_index != trace_b.turn_index:
        raise ValidationError(
            f"turn mismatch: {trace_a.turn_index} vs {trace_b.turn_index}"
        )
    if trace_a.omega != trace_b.omega:
        raise ValidationError(f"omega mismatch: {trace_a.omega} vs {trace_b.omega}")
    return PreferenceLabel(
        example_id=example_id,
        turn_index=trace_a.turn_index,
        label=compare_scores(trace_a.pauc, trace_b.pauc, draw_epsilon),
        source=f"metric:{trace_a.omega}",
    )


def _in_span_count(stream: PredictionStream | None, turn: GroundTruthTurn) -> int:
    if stream is None:
        return 0
    return sum(1 for r in stream.responses if turn.t_start <= r.tau < turn.t_end)


def filter_turns_for_study(
    cases: Sequence[EvaluationCase],
    streams_a: Mapping[str, PredictionStream],
    streams_b: Mapping[str, PredictionStream],
    traces_a: Mapping[tuple[str, int], TurnScoreTrace],
    traces_b: Mapping[tuple[str, int], TurnScoreTrace],
) -> list[tuple[str, int]]:
    """Turns where a preference comparison is informative.

    Keeps a turn when both models responded in-span at least once, at least
    one responded twice or more, and both turn PAUC values are positive.
    Response counts are raw (before equal-time coalescing).
    """
    kept: list[tuple[str, int]] = []
    for case in cases:
        stream_a = streams_a.get(case.example_id)
        stream_b = streams_b.get(case.example_id)
        for index, turn in enumerate(case.turns):
            count_a = _in_span_count(stream_a, turn)
            count_b = _in_span_count(stream_b, turn)
            if min(count_a, count_b) < 1 or max(count_a, count_b) < 2:
                continue
            trace_a = traces_a.get((case.example_id, index))
            trace_b = traces_b.get((case.example_id, index))
            if trace_a is None or trace_b is None:
                continue
            if trace_a.pauc <= 0.0 or trace_b.pauc <= 0.0:
                continue
            kept.append((case.example_id, index))
    return kept


def contingency_table(
    labels1: Sequence[str],
    labels2: Sequence[str],
    categories: Sequence[str] = CATEGORIES,
) -> list[list[int]]:
    """k x k counts; rows index rater 1, columns rater 2."""
    index = {category: i for i, category in enumerate(categories)}
    table = [[0] * len(categories) for _ in categories]
    for a, b in zip(labels1, labels2):
        table[index[a]][index[b]] += 1
    return table


def _weight(i: int, j: int, k: int, weighting: str) -> float:
    if weighting == "linear":
        return 1.0 - abs(i - j) / (k - 1)
    return 1.0 if i == j else 0.0


def kappa_from_table(
    table: Sequence[Sequence[int]], weighting: str = "none"
) -> float:
    """Cohen's kappa from a square contingency table.

    kappa = (p_o - p_e) / (1 - p_e) with agreement weights 1 on the
    diagonal (no weighting) or 1 - |i - j|/(k - 1) (linear weighting).
    """
    if weighting not in WEIGHTINGS:
        raise ValidationError(f"weighting {weighting!r} not in {WEIGHTINGS}")
    k = len(table)
    if k < 2 or any(len(row) != k for row in table):
        raise ValidationError("contingency table must be square with k >= 2")
    if any(cell < 0 for row in table for cell in row):
        raise ValidationError("contingency table counts must be >= 0")
    n = sum(sum(row) for row in table)
    if n < 2:
        raise ValidationError("need at least 2 paired labels")
    row_sums = [sum(row) for row in table]
    col_sums = [sum(table[i][j] for i in range(k)) for j in range(k)]
    p_o = 0.0
    p_e = 0.0
    for i in range(k):
        for j in range(k):
            w = _weight(i, j, k, weighting)
            p_o += w * table[i][j] / n
            p_e += w * row_sums[i] * col_sums[j] / (n * n)
    if p_e >= 1.0:
        # Both raters stuck to one category; agreement is total or undefined.
        if p_o >= 1.0:
            return 1.0
        raise ValidationError("degenerate table: expected agreement is 1")
    return (p_o - p_e) / (1.0 - p_e)


def cohen_kappa(
    labels1: Sequence[str],
    labels2: Sequence[str],
    weighting: str = "none",
    categories: Sequence[str] = CATEGORIES,
) -> float:
    """Chance-corrected agreement between two aligned label vectors."""
    seq1 = list(labels1)
    seq2 = list(labels2)
    if len(seq1) != len(seq2):
        raise ValidationError(
            f"label vectors differ in length: {len(seq1)} vs {len(seq2)}"
        )
    if len(seq1) < 2:
        raise ValidationError("need at least 2 paired labels")
    for label in seq1 + seq2:
        if label not in categories:
            raise ValidationError(f"label {label!r} not in {tuple(categories)}")
    if seq1 == seq2:
        return 1.0
    return kappa_from_table(contingency_table(seq1, seq2, categories), weighting)


def load_human_labels(path: str | Path) -> list[PreferenceLabel]:
    """Read human preference records, one JSON object per line.

    Each record carries example_id, turn_index, label (A/draw/B), and
    annotator_id. Multiple annotators may label the same turn; the same
    annotator may not label a turn twice.
    """
    labels: list[PreferenceLabel] = []
    seen: set[tuple[str, int, str]] = set()
    for lineno, record in _iter_records(path):
        try:
            label = PreferenceLabel(
                example_id=str(record["example_id"]),
                turn_index=int(record["turn_index"]),
                label=str(record["label"]),
                source=f"human:{record['annotator_id']}",
            )
        except KeyError as exc:
            raise DatasetFormatError(f"{path}:{lineno}: missing field {exc}")
        except (TypeError, ValueError, ValidationError) as exc:
            raise DatasetFormatError(f"{path}:{lineno}: {exc}")
        key = (label.example_id, label.turn_index, label.source)
        if key in seen:
            raise DatasetFormatError(
                f"{path}:{lineno}: duplicate label for turn "
                f"({label.example_id!r}, {label.turn_index}) by {label.source}"
            )
        seen.add(key)
        labels.append(label)
    if not labels:
        raise DatasetFormatError(f"{path}: no label records")
    return labels


def save_human_labels(labels: Iterable[PreferenceLabel], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for label in sorted(labels, key=lambda l: (l.turn_ref, l.source)):
            record = {
                "example_id": label.example_id,
                "turn_index": label.turn_index,
                "label": label.label,
                "annotator_id": label.source.removeprefix("human:"),
            }
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")


def single_label_by_turn(
    labels: Iterable[PreferenceLabel],
) -> dict[tuple[str, int], str]:
    """Collapse labels to one per turn; ambiguity is an error."""
    by_turn: dict[tuple[str, int], str] = {}
    for label in labels:
        if label.turn_ref in by_turn and by_turn[label.turn_ref] != label.label:
            raise ValidationError(
                f"conflicting labels for turn {label.turn_ref}; "
                "split the file per annotator"
            )
        by_turn[label.turn_ref] = label.label
    return by_turn


def pair_with_metric(
    human: Sequence[PreferenceLabel],
    metric_by_turn: Mapping[tuple[str, int], str],
) -> tuple[list[str], list[str]]:
    """Align each human record with the metric label on the same turn.

    Every annotator's judgment counts as one item; turns the metric did not
    label are skipped.
    """
    human_vector: list[str] = []
    metric_vector: list[str] = []
    for label in sorted(human, key=lambda l: (l.turn_ref, l.source)):
        metric_label = metric_by_turn.get(label.turn_ref)
        if metric_label is None:
            continue
        human_vector.append(label.label)
        metric_vector.append(metric_label)
    return human_vector, metric_vector


def inter_annotator_vectors(
    labels: Sequence[PreferenceLabel],
) -> tuple[list[str], list[str]] | None:
    """Aligned label vectors for a file holding exactly two annotators.

    Returns None when the file has only one annotator; more than two is an
    error since a single pairwise kappa would be ambiguous.
    """
    by_annotator: dict[str, dict[tuple[str, int], str]] = {}
    for label in labels:
        by_annotator.setdefault(label.source, {})[label.turn_ref] = label.label
    if len(by_annotator) == 1:
        return None
    if len(by_annotator) > 2:
        raise ValidationError(
            f"{len(by_annotator)} annotators present; "
            "pairwise kappa needs exactly two"
        )
    first, second = (by_annotator[key] for key in sorted(by_annotator))
    shared = sorted(set(first) & set(second))
    return [first[ref] for ref in shared], [second[ref] for ref in shared]
