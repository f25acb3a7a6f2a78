"""Tests for preference labeling and chance-corrected agreement."""

from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pauc_eval.agreement import (
    CATEGORIES,
    DEFAULT_DRAW_EPSILON,
    PreferenceLabel,
    cohen_kappa,
    compare_scores,
    contingency_table,
    filter_turns_for_study,
    inter_annotator_vectors,
    kappa_from_table,
    load_human_labels,
    pair_with_metric,
    preference_from_pauc,
    save_human_labels,
    single_label_by_turn,
)
from pauc_eval.errors import DatasetFormatError, ValidationError
from pauc_eval.types import TurnScoreTrace

from _generators import random_contingency_table
from conftest import make_case, make_stream, make_turn

ANCHOR_TABLE = [[4, 1, 0], [1, 3, 1], [0, 1, 4]]


def make_trace(turn_index: int = 0, pauc: float = 0.5, omega: float = 0.5):
    return TurnScoreTrace(
        turn_index=turn_index,
        points=((1.0, 1),),
        shifted_points=((1.0, 1),),
        pauc=pauc,
        omega=omega,
    )


def human(example_id: str, turn_index: int, label: str, annotator: str = "ann-1"):
    return PreferenceLabel(
        example_id=example_id,
        turn_index=turn_index,
        label=label,
        source=f"human:{annotator}",
    )


class TestCompareScores:
    def test_clear_winner_a(self):
        assert compare_scores(0.80, 0.40) == "A"

    def test_clear_winner_b(self):
        assert compare_scores(0.50, 0.56) == "B"

    def test_small_difference_is_a_draw(self):
        assert compare_scores(0.50, 0.52) == "draw"

    def test_difference_exactly_epsilon_is_a_draw(self):
        # 0.75 - 0.5 and 0.25 are exact in binary floats.
        assert compare_scores(0.75, 0.50, draw_epsilon=0.25) == "draw"
        assert compare_scores(0.50, 0.75, draw_epsilon=0.25) == "draw"

    def test_zero_epsilon_breaks_every_tie(self):
        assert compare_scores(0.5, 0.5, draw_epsilon=0.0) == "draw"
        assert compare_scores(0.5 + 1e-9, 0.5, draw_epsilon=0.0) == "A"

    def test_negative_epsilon_rejected(self):
        with pytest.raises(ValidationError, match="draw_epsilon"):
            compare_scores(0.5, 0.5, draw_epsilon=-0.1)

    def test_default_epsilon(self):
        assert DEFAULT_DRAW_EPSILON == 0.05

    @given(
        st.floats(min_value=0.0, max_value=1.0),
        st.floats(min_value=0.0, max_value=1.0),
        st.floats(min_value=0.0, max_value=0.5),
    )
    @settings(max_examples=200)
    def test_swapping_models_mirrors_the_label(self, a, b, eps):
        label = compare_scores(a, b, eps)
        mirrored = compare_scores(b, a, eps)
        assert mirrored == {"A": "B", "B": "A", "draw": "draw"}[label]


class TestPreferenceFromPauc:
    def test_labels_and_names_the_source(self):
        label = preference_from_pauc(
            "ex-1", make_trace(pauc=0.8), make_trace(pauc=0.4)
        )
        assert label == PreferenceLabel(
            example_id="ex-1", turn_index=0, label="A", source="metric:0.5"
        )
        assert label.turn_ref == ("ex-1", 0)

    def test_turn_mismatch_rejected(self):
        with pytest.raises(ValidationError, match="turn mismatch"):
            preference_from_pauc("ex-1", make_trace(0), make_trace(1))

    def test_omega_mismatch_rejected(self):
        with pytest.raises(ValidationError, match="omega mismatch"):
            preference_from_pauc(
                "ex-1", make_trace(omega=0.0), make_trace(omega=0.5)
            )

    def test_label_vocabulary_is_fixed(self):
        with pytest.raises(ValidationError, match="not in A/draw/B"):
            PreferenceLabel(
                example_id="ex-1", turn_index=0, label="tie", source="s"
            )


class TestFilterTurnsForStudy:
    def test_selection_rules(self):
        case = make_case(
            "ex-1",
            video_duration=40.0,
            turns=(
                make_turn("g0", 0.0, 10.0),
                make_turn("g1", 10.0, 20.0),
                make_turn("g2", 20.0, 30.0),
                make_turn("g3", 30.0, 40.0),
            ),
        )
        streams_a = {
            "ex-1": make_stream(
                "ex-1",
                # Turn 0: two responses; turn 1: one; turn 2: none; turn 3: two.
                [(1.0, "a"), (2.0, "b"), (11.0, "c"), (31.0, "d"), (32.0, "e")],
            )
        }
        streams_b = {
            "ex-1": make_stream(
                "ex-1", [(3.0, "x"), (12.0, "y"), (21.0, "z"), (33.0, "w")]
            )
        }
        traces_a = {
            ("ex-1", 0): make_trace(0, pauc=0.7),
            ("ex-1", 1): make_trace(1, pauc=0.6),
            ("ex-1", 2): make_trace(2, pauc=0.5),
            ("ex-1", 3): make_trace(3, pauc=0.4),
        }
        traces_b = {
            ("ex-1", 0): make_trace(0, pauc=0.5),
            ("ex-1", 1): make_trace(1, pauc=0.5),
            ("ex-1", 2): make_trace(2, pauc=0.5),
            # Turn 3 scored zero for model B.
            ("ex-1", 3): make_trace(3, pauc=0.0),
        }
        kept = filter_turns_for_study(
            [case], streams_a, streams_b, traces_a, traces_b
        )
        # Turn 1 has one response each (no second round anywhere); turn 2
        # lacks model A entirely; turn 3 fails the positive-score rule.
        assert kept == [("ex-1", 0)]

    def test_missing_stream_or_trace_drops_the_turn(self):
        case = make_case(
            "ex-1", video_duration=10.0, turns=(make_turn("g", 0.0, 10.0),)
        )
        stream = make_stream("ex-1", [(1.0, "a"), (2.0, "b")])
        traces = {("ex-1", 0): make_trace(0, pauc=0.5)}
        assert filter_turns_for_study([case], {}, {"ex-1": stream}, traces, traces) == []
        assert (
            filter_turns_for_study(
                [case], {"ex-1": stream}, {"ex-1": stream}, {}, traces
            )
            == []
        )

    def test_counts_are_raw_before_coalescing(self):
        case = make_case(
            "ex-1", video_duration=10.0, turns=(make_turn("g", 0.0, 10.0),)
        )
        # Two responses at the same instant still count as two rounds.
        stream_a = make_stream("ex-1", [(1.0, "a"), (1.0, "b")])
        stream_b = make_stream("ex-1", [(2.0, "x")])
        traces = {("ex-1", 0): make_trace(0, pauc=0.5)}
        kept = filter_turns_for_study(
            [case], {"ex-1": stream_a}, {"ex-1": stream_b}, traces, traces
        )
        assert kept == [("ex-1", 0)]


class TestContingencyTable:
    def test_counts_pairs(self):
        table = contingency_table(
            ["A", "A", "draw", "B"],
            ["A", "draw", "draw", "B"],
        )
        assert table == [[1, 1, 0], [0, 1, 0], [0, 0, 1]]


class TestKappa:
    def test_three_category_anchor(self):
        assert kappa_from_table(ANCHOR_TABLE) == pytest.approx(0.6, abs=1e-12)

    def test_three_category_anchor_linear(self):
        # Hand computation: p_o = 13/15, p_e = 5/9, kappa = 14/20.
        assert kappa_from_table(ANCHOR_TABLE, weighting="linear") == pytest.approx(
            0.7, abs=1e-12
        )

    def test_balanced_reversal_is_minus_one(self):
        assert kappa_from_table([[0, 5], [5, 0]]) == pytest.approx(-1.0, abs=1e-12)

    def test_single_cell_table_is_perfect_agreement(self):
        assert kappa_from_table([[4, 0], [0, 0]]) == 1.0

    def test_no_agreement_beyond_chance_is_zero(self):
        # Observed diagonal matches the product of the margins exactly.
        assert kappa_from_table([[1, 1], [1, 1]]) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize(
        "table, message",
        [
            ([[1, 2]], "square"),
            ([[1]], "square"),
            ([[1, 2], [3]], "square"),
            ([[1, -1], [0, 2]], ">= 0"),
            ([[1, 0], [0, 0]], "at least 2"),
        ],
    )
    def test_invalid_tables_rejected(self, table, message):
        with pytest.raises(ValidationError, match=message):
            kappa_from_table(table)

    def test_unknown_weighting_rejected(self):
        with pytest.raises(ValidationError, match="weighting"):
            kappa_from_table(ANCHOR_TABLE, weighting="quadratic")

    def test_identical_vectors_are_exactly_one(self):
        labels = ["A", "draw", "B", "draw"]
        assert cohen_kappa(labels, list(labels)) == 1.0
        # Even a constant vector, where the table alone is degenerate.
        assert cohen_kappa(["A", "A"], ["A", "A"]) == 1.0

    def test_vector_validation(self):
        with pytest.raises(ValidationError, match="differ in length"):
            cohen_kappa(["A"], ["A", "B"])
        with pytest.raises(ValidationError, match="at least 2"):
            cohen_kappa(["A"], ["B"])
        with pytest.raises(ValidationError, match="not in"):
            cohen_kappa(["A", "tie"], ["A", "B"])

    def test_vectors_match_the_table_path(self):
        labels1 = ["A"] * 4 + ["draw"] + ["A", "draw" ] * 2 + ["B", "draw", "B"]
        labels2 = ["A"] * 4 + ["A"] + ["draw", "draw"] * 2 + ["B", "B", "draw"]
        expected = kappa_from_table(contingency_table(labels1, labels2))
        assert cohen_kappa(labels1, labels2) == expected

    @given(st.randoms(use_true_random=False), st.sampled_from(["none", "linear"]))
    @settings(max_examples=200)
    def test_matches_disagreement_ratio_oracle(self, rng, weighting):
        # kappa = 1 - sum(v * observed) / sum(v * expected) with
        # disagreement weights v = 1 - w; an independent rearrangement.
        table = random_contingency_table(rng)
        k = len(table)
        n = sum(sum(row) for row in table)
        rows = [sum(row) for row in table]
        cols = [sum(table[i][j] for i in range(k)) for j in range(k)]
        observed = 0.0
        expected = 0.0
        for i in range(k):
            for j in range(k):
                v = abs(i - j) / (k - 1) if weighting == "linear" else float(i != j)
                observed += v * table[i][j] / n
                expected += v * rows[i] * cols[j] / (n * n)
        assert expected > 0.0
        oracle = 1.0 - observed / expected
        assert kappa_from_table(table, weighting) == pytest.approx(oracle, abs=1e-9)

    @given(st.randoms(use_true_random=False), st.sampled_from(["none", "linear"]))
    @settings(max_examples=100)
    def test_symmetric_under_rater_swap(self, rng, weighting):
        table = random_contingency_table(rng)
        transposed = [list(col) for col in zip(*table)]
        assert kappa_from_table(table, weighting) == pytest.approx(
            kappa_from_table(transposed, weighting), abs=1e-12
        )

    @given(st.randoms(use_true_random=False))
    @settings(max_examples=100)
    def test_never_exceeds_one(self, rng):
        table = random_contingency_table(rng)
        assert kappa_from_table(table) <= 1.0 + 1e-12


class TestHumanLabelIO:
    def write_labels(self, path, records):
        with path.open("w", encoding="utf-8") as fh:
            for record in records:
                fh.write(json.dumps(record) + "\n")

    def record(self, example_id="ex-1", turn_index=0, label="A", annotator="ann-1"):
        return {
            "example_id": example_id,
            "turn_index": turn_index,
            "label": label,
            "annotator_id": annotator,
        }

    def test_round_trip(self, tmp_path):
        labels = [
            human("ex-2", 1, "B", "ann-2"),
            human("ex-1", 0, "A", "ann-1"),
            human("ex-1", 0, "draw", "ann-2"),
        ]
        path = tmp_path / "labels.jsonl"
        save_human_labels(labels, path)
        assert load_human_labels(path) == sorted(
            labels, key=lambda l: (l.turn_ref, l.source)
        )

    def test_same_annotator_twice_on_a_turn_rejected(self, tmp_path):
        path = tmp_path / "labels.jsonl"
        self.write_labels(path, [self.record(), self.record(label="B")])
        with pytest.raises(DatasetFormatError, match=":2: duplicate label"):
            load_human_labels(path)

    def test_two_annotators_on_a_turn_allowed(self, tmp_path):
        path = tmp_path / "labels.jsonl"
        self.write_labels(
            path,
            [self.record(), self.record(label="B", annotator="ann-2")],
        )
        assert len(load_human_labels(path)) == 2

    def test_missing_field_names_the_line(self, tmp_path):
        path = tmp_path / "labels.jsonl"
        self.write_labels(path, [{"example_id": "ex-1", "label": "A"}])
        with pytest.raises(DatasetFormatError, match=":1: missing field"):
            load_human_labels(path)

    def test_bad_label_names_the_line(self, tmp_path):
        path = tmp_path / "labels.jsonl"
        self.write_labels(path, [self.record(label="tie")])
        with pytest.raises(DatasetFormatError, match=":1: label 'tie'"):
            load_human_labels(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "labels.jsonl"
        path.write_text("", encoding="utf-8")
        with pytest.raises(DatasetFormatError, match="no label records"):
            load_human_labels(path)


class TestSingleLabelByTurn:
    def test_collapses_agreeing_duplicates(self):
        labels = [human("ex-1", 0, "A", "ann-1"), human("ex-1", 0, "A", "ann-2")]
        assert single_label_by_turn(labels) == {("ex-1", 0): "A"}

    def test_conflicts_are_an_error(self):
        labels = [human("ex-1", 0, "A", "ann-1"), human("ex-1", 0, "B", "ann-2")]
        with pytest.raises(ValidationError, match="split the file"):
            single_label_by_turn(labels)


class TestPairWithMetric:
    def test_aligns_and_skips_unlabeled_turns(self):
        labels = [
            human("ex-1", 0, "A", "ann-2"),
            human("ex-1", 0, "draw", "ann-1"),
            human("ex-2", 0, "B", "ann-1"),
            human("ex-9", 0, "A", "ann-1"),
        ]
        metric = {("ex-1", 0): "A", ("ex-2", 0): "B"}
        human_vector, metric_vector = pair_with_metric(labels, metric)
        # Sorted by turn then source; ex-9 has no metric label.
        assert human_vector == ["draw", "A", "B"]
        assert metric_vector == ["A", "A", "B"]


class TestInterAnnotatorVectors:
    def test_single_annotator_returns_none(self):
        assert inter_annotator_vectors([human("ex-1", 0, "A")]) is None

    def test_two_annotators_align_on_shared_turns(self):
        labels = [
            human("ex-1", 0, "A", "ann-1"),
            human("ex-1", 1, "draw", "ann-1"),
            human("ex-2", 0, "B", "ann-1"),
            human("ex-1", 0, "A", "ann-2"),
            human("ex-1", 1, "B", "ann-2"),
            human("ex-3", 0, "A", "ann-2"),
        ]
        first, second = inter_annotator_vectors(labels)
        assert first == ["A", "draw"]
        assert second == ["A", "B"]

    def test_three_annotators_rejected(self):
        labels = [
            human("ex-1", 0, "A", "ann-1"),
            human("ex-1", 0, "A", "ann-2"),
            human("ex-1", 0, "A", "ann-3"),
        ]
        with pytest.raises(ValidationError, match="exactly two"):
            inter_annotator_vectors(labels)


class TestCategories:
    def test_order_is_fixed(self):
        assert CATEGORIES == ("A", "draw", "B")
