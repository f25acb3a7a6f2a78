"""End-to-end scoring pipeline and the report document it emits.

A report is a single JSON object holding the scoring configuration, one
record per ground-truth turn (judged points plus per-omega PAUC values and
shifted step points), per-example and dataset means, and run diagnostics.
Serialization is canonical (sorted keys, fixed indentation) so identical
inputs yield identical bytes.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from statistics import fmean
from typing import Any, Mapping, Sequence

from .errors import JudgeError, ReportError
from .judges import JudgeBackend, JudgeCache, judge_turn_prefixes
from .metric import (
    format_percent,
    out_of_span_count,
    select_in_span,
    turn_pauc,
)
from .simulate import duplicate_counts
from .types import (
    EvaluationCase,
    EvaluationConfig,
    PredictionStream,
    TurnScoreTrace,
)

SCORE_TOLERANCE = 1e-12


def omega_key(omega: float) -> str:
    return str(float(omega))


def evaluate_cases(
    cases: Sequence[EvaluationCase],
    streams: Mapping[str, PredictionStream],
    backend: JudgeBackend,
    config: EvaluationConfig,
    cache: JudgeCache | None = None,
    fail_fast: bool = True,
) -> dict[str, Any]:
    """Judge every turn prefix, integrate per omega, and assemble a report.

    Cases run concurrently up to ``config.judge_concurrency_cap``; results
    are gathered back into benchmark order, so concurrency never changes
    the output. With ``fail_fast`` off, judge failures mark the turn
    unscored instead of aborting.
    """

    def score_case(case: EvaluationCase) -> list[dict[str, Any]]:
        stream = streams.get(case.example_id)
        if stream is None:
            stream = PredictionStream(example_id=case.example_id, responses=())
        results = []
        for index, turn in enumerate(case.turns):
            selection = select_in_span(stream, turn, config.boundary_policy, index)
            try:
                scored = judge_turn_prefixes(
                    case.question,
                    turn.gold,
                    selection,
                    backend,
                    cache=cache,
                    max_score=config.max_score,
                )
            except JudgeError as exc:
                if fail_fast:
                    raise
                results.append({"selection": selection, "error": str(exc)})
                continue
            traces = {
                omega: turn_pauc(turn, scored, omega, config, index)
                for omega in config.omegas
            }
            results.append({"selection": selection, "traces": traces})
        return results

    workers = max(1, config.judge_concurrency_cap)
    if workers == 1 or len(cases) <= 1:
        case_results = [score_case(case) for case in cases]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            case_results = list(pool.map(score_case, cases))
    return build_report(cases, streams, case_results, backend, config, cache, fail_fast)


def build_report(
    cases: Sequence[EvaluationCase],
    streams: Mapping[str, PredictionStream],
    case_results: Sequence[Sequence[Mapping[str, Any]]],
    backend: JudgeBackend,
    config: EvaluationConfig,
    cache: JudgeCache | None,
    fail_fast: bool,
) -> dict[str, Any]:
    keys = [omega_key(omega) for omega in config.omegas]
    turn_records: list[dict[str, Any]] = []
    example_scores: dict[str, dict[str, float]] = {}
    examples_without_scores: list[str] = []
    unscored_turns = 0

    for case, results in zip(cases, case_results):
        per_omega_values: dict[str, list[float]] = {key: [] for key in keys}
        for index, result in enumerate(results):
            selection = result["selection"]
            turn = case.turns[index]
            record: dict[str, Any] = {
                "example_id": case.example_id,
                "turn_index": index,
                "t_start": turn.t_start,
                "t_end": turn.t_end,
                "gold": turn.gold,
                "responses": [
                    {"tau": response.tau, "text": response.text}
                    for response in selection.responses
                ],
                "excluded_count": selection.excluded_count,
            }
            if "error" in result:
                unscored_turns += 1
                record["unscored"] = True
                record["error"] = result["error"]
            else:
                traces: Mapping[float, TurnScoreTrace] = result["traces"]
                any_trace = next(iter(traces.values()))
                record["points"] = [[tau, score] for tau, score in any_trace.points]
                record["per_omega"] = {}
                for omega in config.omegas:
                    trace = traces[omega]
                    record["per_omega"][omega_key(omega)] = {
                        "pauc": trace.pauc,
                        "shifted_points": [
                            [tau, score] for tau, score in trace.shifted_points
                        ],
                    }
                    per_omega_values[omega_key(omega)].append(trace.pauc)
            turn_records.append(record)
        if all(per_omega_values[key] for key in keys):
            example_scores[case.example_id] = {
                key: fmean(per_omega_values[key]) for key in keys
            }
        else:
            examples_without_scores.append(case.example_id)

    dataset_scores: dict[str, float] = {}
    if example_scores:
        ordered_ids = [c.example_id for c in cases if c.example_id in example_scores]
        dataset_scores = {
            key: fmean(example_scores[example_id][key] for example_id in ordered_ids)
            for key in keys
        }

    config_echo = config.to_dict()
    config_echo.pop("judge_concurrency_cap", None)
    config_echo["judge_id"] = backend.judge_id
    config_echo["prompt_version"] = backend.prompt_version
    config_echo["fail_fast"] = fail_fast

    return {
        "config": config_echo,
        "turns": turn_records,
        "example_scores": example_scores,
        "dataset_scores": dataset_scores,
        "dataset_scores_percent": {
            key: format_percent(value) for key, value in dataset_scores.items()
        },
        "diagnostics": _diagnostics(
            cases, streams, backend, cache, unscored_turns, examples_without_scores
        ),
    }


def _diagnostics(
    cases: Sequence[EvaluationCase],
    streams: Mapping[str, PredictionStream],
    backend: JudgeBackend,
    cache: JudgeCache | None,
    unscored_turns: int,
    examples_without_scores: list[str],
) -> dict[str, Any]:
    case_ids = {case.example_id for case in cases}
    out_by_example: dict[str, int] = {}
    dup_by_example: dict[str, float | None] = {}
    dup_total = 0
    dup_eligible = 0
    for case in cases:
        stream = streams.get(case.example_id)
        if stream is None:
            stream = PredictionStream(example_id=case.example_id, responses=())
        out_by_example[case.example_id] = out_of_span_count(stream, case.turns)
        duplicates, eligible = duplicate_counts(stream, case)
        dup_total += duplicates
        dup_eligible += eligible
        dup_by_example[case.example_id] = (
            duplicates / eligible if eligible else None
        )
    cache_stats = None
    if cache is not None:
        cache_stats = {
            "hits": cache.hits,
            "misses": cache.misses,
            "hit_rate": cache.hit_rate,
        }
    return {
        "judge_calls": backend.calls,
        "cache": cache_stats,
        "out_of_span_responses": {
            "total": sum(out_by_example.values()),
            "by_example": out_by_example,
        },
        "duplicate_rate": {
            "overall": dup_total / dup_eligible if dup_eligible else None,
            "by_example": dup_by_example,
        },
        "unscored_turns": unscored_turns,
        "examples_without_scores": sorted(examples_without_scores),
        "missing_prediction_ids": sorted(
            case_id for case_id in case_ids if case_id not in streams
        ),
        "unknown_prediction_ids": sorted(set(streams) - case_ids),
    }


def serialize_report(report: Mapping[str, Any]) -> str:
    return json.dumps(report, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def save_report(report: Mapping[str, Any], path: str | Path) -> None:
    Path(path).write_text(serialize_report(report), encoding="utf-8")


def load_report(path: str | Path, verify: bool = True) -> dict[str, Any]:
    try:
        report = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ReportError(f"{path}: invalid JSON: {exc}")
    if not isinstance(report, dict):
        raise ReportError(f"{path}: report must be a JSON object")
    if verify:
        verify_report(report)
    return report


def verify_report(report: Mapping[str, Any]) -> None:
    """Check that stored means re-derive from the per-turn records."""
    for field in ("config", "turns", "example_scores", "dataset_scores"):
        if field not in report:
            raise ReportError(f"report missing field {field!r}")
    by_example: dict[str, dict[str, list[float]]] = {}
    for record in report["turns"]:
        if record.get("unscored"):
            continue
        for key, entry in record["per_omega"].items():
            by_example.setdefault(record["example_id"], {}).setdefault(
                key, []
            ).append(entry["pauc"])
    for example_id, stored in report["example_scores"].items():
        derived = by_example.get(example_id)
        if derived is None:
            raise ReportError(f"example {example_id!r} has scores but no turns")
        for key, value in stored.items():
            recomputed = fmean(derived[key])
            if abs(recomputed - value) > SCORE_TOLERANCE:
                raise ReportError(
                    f"example {example_id!r} omega {key}: stored {value!r} "
                    f"!= recomputed {recomputed!r}"
                )
    for key, value in report["dataset_scores"].items():
        values = [scores[key] for scores in report["example_scores"].values()]
        if not values:
            raise ReportError(f"dataset score for omega {key} with no examples")
        recomputed = fmean(values)
        if abs(recomputed - value) > SCORE_TOLERANCE:
            raise ReportError(
                f"dataset omega {key}: stored {value!r} != recomputed {recomputed!r}"
            )
        stored_percent = report.get("dataset_scores_percent", {}).get(key)
        if stored_percent is not None and stored_percent != format_percent(value):
            raise ReportError(
                f"dataset omega {key}: percent {stored_percent!r} "
                f"!= {format_percent(value)!r}"
            )


def find_turn_record(
    report: Mapping[str, Any], example_id: str, turn_index: int
) -> dict[str, Any]:
    for record in report["turns"]:
        if record["example_id"] == example_id and record["turn_index"] == turn_index:
            return record
    raise ReportError(f"no turn record for {example_id!r} index {turn_index}")


def polyline_vertices(
    t_start: float,
    t_end: float,
    points: Sequence[Sequence[float]],
    initial_score: float = 0.5,
) -> list[tuple[float, float]]:
    """Ordered vertices of the step curve over [t_start, t_end].

    ``points`` are (time, score) pairs with non-decreasing times (equal
    times occur when omega = 1 collapses everything to the span start).
    Runs of vertices sharing one time collapse to their first and last.
    """
    raw: list[tuple[float, float]] = [(t_start, initial_score)]
    previous = initial_score
    for time, score in points:
        raw.append((float(time), previous))
        raw.append((float(time), float(score)))
        previous = float(score)
    raw.append((t_end, previous))

    vertices: list[tuple[float, float]] = []
    i = 0
    while i < len(raw):
        j = i
        while j + 1 < len(raw) and raw[j + 1][0] == raw[i][0]:
            j += 1
        vertices.append(raw[i])
        if j > i and raw[j] != raw[i]:
            vertices.append(raw[j])
        i = j + 1
    return vertices


def turn_polylines(
    report: Mapping[str, Any], example_id: str, turn_index: int
) -> dict[str, Any]:
    """Per-omega step polylines for one turn, ready to serialize or draw."""
    record = find_turn_record(report, example_id, turn_index)
    if record.get("unscored"):
        raise ReportError(f"turn {example_id!r}:{turn_index} was not scored")
    initial = report["config"]["initial_score"]
    per_omega = {
        key: polyline_vertices(
            record["t_start"], record["t_end"], entry["shifted_points"], initial
        )
        for key, entry in record["per_omega"].items()
    }
    return {
        "example_id": example_id,
        "turn_index": turn_index,
        "t_start": record["t_start"],
        "t_end": record["t_end"],
        "gold": record["gold"],
        "max_score": report["config"]["max_score"],
        "points": record["points"],
        "vertices_per_omega": {
            key: [[t, s] for t, s in vertices] for key, vertices in per_omega.items()
        },
    }


def render_turn_plot(polylines: Mapping[str, Any], path: str | Path) -> None:
    """Draw the step curves and judged points as a static image."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 3.5))
    for key in sorted(polylines["vertices_per_omega"], key=float):
        vertices = polylines["vertices_per_omega"][key]
        xs = [v[0] for v in vertices]
        ys = [v[1] for v in vertices]
        ax.plot(xs, ys, label=f"omega={key}")
    points = polylines["points"]
    if points:
        ax.scatter(
            [p[0] for p in points],
            [p[1] for p in points],
            zorder=3,
            color="black",
            label="judged responses",
        )
    ax.set_xlim(polylines["t_start"], polylines["t_end"])
    ax.set_ylim(0, polylines["max_score"] * 1.05)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("accumulated score")
    ax.set_title(f"{polylines['example_id']} turn {polylines['turn_index']}")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(str(path))
    plt.close(fig)
