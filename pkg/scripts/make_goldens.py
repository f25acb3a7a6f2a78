#!/usr/bin/env python3
"""Regenerate the test fixtures and golden outputs under tests/data/.

Everything here is deterministic: the benchmark, the responder scripts, and
the judge script are literals, and the prediction/report goldens are produced
by the same CLI entry points the tests call. Rerunning the script must be a
no-op unless the package behavior changed; review any diff it produces.

Usage: python3 scripts/make_goldens.py
"""

from __future__ import annotations

import json
from pathlib import Path

from pauc_eval.cli import main as cli_main
from pauc_eval.dataset import BenchmarkFile, load_benchmark, load_predictions, save_benchmark
from pauc_eval.judges import JudgeRequest, OverlapJudge, ScriptedJudge
from pauc_eval.metric import select_in_span
from pauc_eval.types import EvaluationCase, GroundTruthTurn

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "tests" / "data" / "fixtures"
GOLDEN = ROOT / "tests" / "data" / "golden"

# CLI driver name -> file stem.
DRIVERS = {"three-way": "three_way", "two-step": "two_step", "incremental": "incremental"}


def build_benchmark() -> BenchmarkFile:
    def case(example_id, duration, question, turns):
        return EvaluationCase(
            example_id=example_id,
            video_id=f"vid-{example_id.split('-')[1]}",
            video_duration=duration,
            question=question,
            question_time=0.0,
            turns=tuple(GroundTruthTurn(gold, s, e) for gold, s, e in turns),
        )

    return BenchmarkFile(
        task_tag="other",
        cases=(
            case(
                "case-01-basic",
                20.0,
                "what does the cat do?",
                [("a cat jumps onto the kitchen table", 10.0, 20.0)],
            ),
            case(
                "case-02-multi",
                16.0,
                "what happens in the room?",
                [
                    ("a man opens a red box", 2.0, 6.0),
                    ("he takes out a silver watch", 9.0, 15.0),
                ],
            ),
            case(
                "case-03-empty",
                12.0,
                "when does the dog bark?",
                [("the dog barks at the mailman", 4.0, 9.0)],
            ),
            case(
                "case-04-late",
                10.0,
                "what is cooking?",
                [("a woman stirs tomato soup on the stove", 0.0, 10.0)],
            ),
            case(
                "case-05-unicode",
                8.0,
                "qu'est-ce qu'on sert ?",
                [("le serveur apporte un café au client", 1.5, 7.5)],
            ),
            case(
                "case-06-dup",
                8.0,
                "who waves?",
                [("a girl waves at the camera", 0.0, 8.0)],
            ),
        ),
    )


def no(count: int) -> list[dict]:
    return [{"decision": "no_answer"}] * count


def new(answer: str) -> dict:
    return {"decision": "new_answer", "answer": answer}


def yes(answer: str) -> dict:
    return {"decision": "yes", "answer": answer}


# One scripted turn per 2-second chunk, consumed in order; a missing tail
# degrades to no_answer. Timestamps land on chunk ends (2, 4, 6, ...).
THREE_WAY = {
    "case-01-basic": [
        *no(5),
        new("a cat jumps"),
        {"decision": "same_answer"},
        new("the cat jumps onto the kitchen table"),
    ],
    "case-02-multi": [
        new("a man opens a box"),
        new("a man opens a red box"),
        {"decision": "same_answer"},
        new("there is a watch"),  # lands at 8.0, between the two reply spans
        *no(1),
        new("he takes out a silver watch"),
    ],
    "case-03-empty": [],
    "case-04-late": [*no(4), new("a woman stirs soup")],  # lands exactly at t_end
    "case-05-unicode": [new("un café"), *no(1), new("le serveur apporte un café")],
    "case-06-dup": [
        new("a girl waves at the camera"),
        new("the girl waves at a camera"),
    ],
}

# The two-step driver consumes one scripted turn per decide round, so these
# are padded with explicit "no" turns to the exact chunk count.
TWO_STEP = {
    "case-01-basic": [
        *[{"decision": "no"}] * 5,
        yes("a cat jumps"),
        {"decision": "no"},
        {"decision": "no"},
        yes("the cat jumps onto the kitchen table"),
        {"decision": "no"},
    ],
    "case-02-multi": [
        yes("a man opens a box"),
        {"decision": "no"},
        yes("a man opens a red box"),  # lands at 6.0, the open end of span one
        {"decision": "no"},
        {"decision": "no"},
        yes("he takes out a silver watch"),
        {"decision": "no"},
        {"decision": "no"},
    ],
    "case-03-empty": [{"decision": "no"}] * 6,
    "case-04-late": [*[{"decision": "no"}] * 4, yes("a woman stirs soup")],
    "case-05-unicode": [
        yes("un café"),
        {"decision": "no"},
        yes("le serveur apporte un café au client"),
        {"decision": "no"},
    ],
    "case-06-dup": [
        yes("a girl waves at the camera"),
        yes("the girl waves at a camera"),
        {"decision": "no"},
        {"decision": "no"},
    ],
}

INCREMENTAL = {
    "case-01-basic": [
        *no(4),
        new("a cat"),  # lands at 10.0, the closed start of the reply span
        new("a cat jumps onto the table"),
        *no(1),
        new("the cat jumps onto the kitchen table"),
    ],
    "case-02-multi": [
        new("a box appears"),
        *no(1),
        new("a man opens a red box"),  # lands at 6.0, outside both spans
        *no(1),
        new("he takes a watch"),
        new("he takes out a silver watch"),
    ],
    "case-03-empty": [],
    "case-04-late": [*no(4), new("a woman stirs soup")],
    "case-05-unicode": [
        new("un café"),
        *no(1),
        new("le serveur apporte un café au client"),
    ],
    "case-06-dup": [
        new("a girl waves at the camera"),
        new("the girl waves at a camera"),
    ],
}


def write_json(path: Path, payload: dict) -> None:
    path.write_text(
        json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    print(f"wrote {path.relative_to(ROOT)}")


def build_judge_script(benchmark_path: Path, prediction_paths: list[Path]) -> dict:
    """Score every judged prefix with the overlap judge and freeze the result
    under the scripted judge's cache key."""
    benchmark = load_benchmark(benchmark_path)
    scripted = ScriptedJudge({})
    overlap = OverlapJudge()
    script: dict[str, dict] = {}
    for path in prediction_paths:
        streams = {s.example_id: s for s in load_predictions(path)}
        for case in benchmark.cases:
            stream = streams[case.example_id]
            for turn_index, turn in enumerate(case.turns):
                selection = select_in_span(stream, turn, turn_index=turn_index)
                texts: list[str] = []
                for response in selection.responses:
                    texts.append(response.text)
                    request = JudgeRequest(
                        question=case.question,
                        gold=turn.gold,
                        accumulated_responses=tuple(texts),
                        max_score=2,
                    )
                    score, rationale = overlap.evaluate(request)
                    script[scripted.key_for(request)] = {
                        "score": score,
                        "rationale": rationale,
                    }
    return script


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    GOLDEN.mkdir(parents=True, exist_ok=True)

    benchmark_path = FIXTURES / "benchmark.jsonl"
    save_benchmark(build_benchmark(), benchmark_path)
    print(f"wrote {benchmark_path.relative_to(ROOT)}")

    scripts = {"three_way": THREE_WAY, "two_step": TWO_STEP, "incremental": INCREMENTAL}
    for stem, script in scripts.items():
        write_json(FIXTURES / f"responder_{stem}.json", {"examples": script})

    prediction_paths = []
    for driver, stem in DRIVERS.items():
        out = GOLDEN / f"predictions_{stem}.jsonl"
        rc = cli_main(
            [
                "simulate",
                "--benchmark",
                str(benchmark_path),
                "--responder",
                f"scripted:{FIXTURES / f'responder_{stem}.json'}",
                "--driver",
                driver,
                "--out",
                str(out),
            ]
        )
        if rc != 0:
            raise SystemExit(f"simulate failed for driver {driver}")
        prediction_paths.append(out)

    judge_path = FIXTURES / "judge_script.json"
    write_json(judge_path, build_judge_script(benchmark_path, prediction_paths))

    for stem, predictions in zip(DRIVERS.values(), prediction_paths):
        rc = cli_main(
            [
                "evaluate",
                "--benchmark",
                str(benchmark_path),
                "--predictions",
                str(predictions),
                "--judge",
                f"scripted:{judge_path}",
                "--out",
                str(GOLDEN / f"report_{stem}.json"),
            ]
        )
        if rc != 0:
            raise SystemExit(f"evaluate failed for {predictions.name}")


if __name__ == "__main__":
    main()
