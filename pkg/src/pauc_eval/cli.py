"""Command-line entry point.

Subcommands:
  evaluate   score a prediction file against a benchmark and write a report
  simulate   drive an offline responder over video chunks into predictions
  stats      print benchmark summary statistics
  agreement  Cohen's kappa between metric preferences and human labels
  plot       emit step-curve polylines (and optional images) for turns

Exit codes: 0 success, 1 hard error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from pathlib import Path
from typing import Any, Sequence

from .agreement import (
    cohen_kappa,
    compare_scores,
    inter_annotator_vectors,
    load_human_labels,
    pair_with_metric,
    single_label_by_turn,
)
from .dataset import compute_stats, load_benchmark, load_predictions, save_predictions
from .errors import PaucError, ResponderTransportError, ValidationError
from .judges import DEFAULT_MODEL, JudgeCache, resolve_judge
from .report import (
    evaluate_cases,
    load_report,
    omega_key,
    render_turn_plot,
    save_report,
    serialize_report,
    turn_polylines,
)
from .simulate import DRIVERS, chunk_video, default_chunk_len, open_responder
from .types import (
    DEFAULT_INITIAL_SCORE,
    DEFAULT_MAX_SCORE,
    EvaluationConfig,
    PredictionStream,
)

OMEGA_DEFAULT = "0.0,0.5,1.0"


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _parse_omegas(text: str) -> tuple[float, ...]:
    parts = [part.strip() for part in text.split(",") if part.strip()]
    if not parts:
        raise ValidationError("empty omega list")
    try:
        omegas = tuple(float(part) for part in parts)
    except ValueError as exc:
        raise ValidationError(f"bad omega list {text!r}: {exc}")
    if len(set(omegas)) != len(omegas):
        raise ValidationError(f"duplicate omega in {text!r}")
    return omegas


def _effective(args: argparse.Namespace, hard: dict[str, Any]) -> dict[str, Any]:
    """Layer hard defaults, then the optional config file, then given flags."""
    given = dict(vars(args))
    given.pop("func", None)
    config_path = given.pop("config", None)
    file_config: dict[str, Any] = {}
    if config_path:
        try:
            loaded = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config file {config_path}: {exc}")
        if not isinstance(loaded, dict):
            raise ValidationError(f"config file {config_path} must hold an object")
        unknown = sorted(set(loaded) - set(hard))
        if unknown:
            raise ValidationError(
                f"config file {config_path}: unknown keys {unknown}; "
                f"allowed: {sorted(hard)}"
            )
        file_config = loaded
    return {**hard, **file_config, **given}


def _print_score_table(report: dict[str, Any]) -> None:
    percents = report["dataset_scores_percent"]
    if not percents:
        print("no scored examples")
        return
    print("dataset PAUC (x100):")
    for omega in report["config"]["omegas"]:
        key = omega_key(omega)
        print(f"  omega={key:<5} {percents[key]}")


def cmd_evaluate(args: argparse.Namespace) -> int:
    hard = {
        "judge": "overlap",
        "omega": OMEGA_DEFAULT,
        "max_score": DEFAULT_MAX_SCORE,
        "cache": None,
        "out": None,
        "fail_fast": True,
        "concurrency": 4,
        "judge_model": DEFAULT_MODEL,
        "initial_score": DEFAULT_INITIAL_SCORE,
        "merge_turns": False,
        "benchmark": None,
        "predictions": None,
    }
    eff = _effective(args, hard)
    omegas = _parse_omegas(eff["omega"])
    if eff["max_score"] not in (2, 4):
        raise ValidationError(f"max_score {eff['max_score']} not in (2, 4)")
    benchmark = load_benchmark(eff["benchmark"], merge=eff["merge_turns"])
    streams = {s.example_id: s for s in load_predictions(eff["predictions"])}
    backend = resolve_judge(eff["judge"], model=eff["judge_model"])
    cache = JudgeCache(eff["cache"]) if eff["cache"] else None
    config = EvaluationConfig(
        omegas=omegas,
        max_score=int(eff["max_score"]),
        initial_score=float(eff["initial_score"]),
        judge_id=backend.judge_id,
        judge_concurrency_cap=int(eff["concurrency"]),
    )
    try:
        report = evaluate_cases(
            benchmark.cases,
            streams,
            backend,
            config,
            cache=cache,
            fail_fast=eff["fail_fast"],
        )
    finally:
        backend.close()
    if eff["out"]:
        save_report(report, eff["out"])
        print(f"wrote {eff['out']}")
        _print_score_table(report)
    else:
        sys.stdout.write(serialize_report(report))
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    hard = {
        "benchmark": None,
        "driver": "three-way",
        "chunk_len": None,
        "responder": None,
        "out": None,
    }
    eff = _effective(args, hard)
    benchmark = load_benchmark(eff["benchmark"])
    drive = DRIVERS[eff["driver"]]
    responder = open_responder(eff["responder"])
    chunk_len = eff["chunk_len"]
    if chunk_len is None:
        chunk_len = default_chunk_len(benchmark.task_tag)
    chunk_len = float(chunk_len)
    streams = []
    failures = []
    try:
        for case in benchmark.cases:
            schedule = chunk_video(case.video_duration, chunk_len)
            try:
                streams.append(drive(responder, case, schedule))
            except ResponderTransportError as exc:
                failures.append(str(exc))
                streams.append(
                    PredictionStream(
                        example_id=case.example_id,
                        responses=exc.partial,
                        partial=True,
                    )
                )
    finally:
        responder.close()
    save_predictions(streams, eff["out"])
    total = sum(len(s.responses) for s in streams)
    print(
        f"wrote {eff['out']}: {len(streams)} streams, {total} responses "
        f"(driver={eff['driver']}, chunk_len={chunk_len:g})"
    )
    for failure in failures:
        print(f"error: {failure}", file=sys.stderr)
    return 1 if failures else 0


def cmd_stats(args: argparse.Namespace) -> int:
    hard = {"benchmark": None, "merge_turns": False}
    eff = _effective(args, hard)
    benchmark = load_benchmark(eff["benchmark"], merge=eff["merge_turns"])
    print(compute_stats(benchmark).to_text())
    return 0


def _scored_turns(report: dict[str, Any]) -> dict[tuple[str, int], dict[str, Any]]:
    return {
        (record["example_id"], record["turn_index"]): record
        for record in report["turns"]
        if not record.get("unscored")
    }


def _kappa_row(name: str, vector1: list[str], vector2: list[str]) -> str:
    n = len(vector1)
    if n < 2:
        return f"{name}: n/a (only {n} paired labels)"
    unweighted = cohen_kappa(vector1, vector2, "none")
    linear = cohen_kappa(vector1, vector2, "linear")
    return f"{name}: kappa unweighted/linear = {unweighted:.2f}/{linear:.2f} (n={n})"


def cmd_agreement(args: argparse.Namespace) -> int:
    hard = {
        "report_a": None,
        "report_b": None,
        "human": None,
        "human2": None,
        "draw_eps": 0.05,
    }
    eff = _effective(args, hard)
    report_a = load_report(eff["report_a"])
    report_b = load_report(eff["report_b"])
    human = load_human_labels(eff["human"])
    epsilon = float(eff["draw_eps"])

    turns_a = _scored_turns(report_a)
    turns_b = _scored_turns(report_b)
    shared = sorted(set(turns_a) & set(turns_b))
    keys_a = [omega_key(omega) for omega in report_a["config"]["omegas"]]
    keys_b = {omega_key(omega) for omega in report_b["config"]["omegas"]}
    keys = [key for key in keys_a if key in keys_b]
    if not keys:
        raise ValidationError("the two reports share no omega values")

    for key in keys:
        metric_by_turn: dict[tuple[str, int], str] = {}
        for ref in shared:
            record_a = turns_a[ref]
            record_b = turns_b[ref]
            count_a = len(record_a["responses"])
            count_b = len(record_b["responses"])
            # Study filter: both responded, one responded twice, both scored > 0.
            if min(count_a, count_b) < 1 or max(count_a, count_b) < 2:
                continue
            pauc_a = record_a["per_omega"][key]["pauc"]
            pauc_b = record_b["per_omega"][key]["pauc"]
            if pauc_a <= 0.0 or pauc_b <= 0.0:
                continue
            metric_by_turn[ref] = compare_scores(pauc_a, pauc_b, epsilon)
        human_vector, metric_vector = pair_with_metric(human, metric_by_turn)
        print(_kappa_row(f"omega={key} metric-vs-human", metric_vector, human_vector))

    if eff["human2"]:
        second = load_human_labels(eff["human2"])
        first_by_turn = single_label_by_turn(human)
        second_by_turn = single_label_by_turn(second)
        refs = sorted(set(first_by_turn) & set(second_by_turn))
        print(
            _kappa_row(
                "human-vs-human",
                [first_by_turn[ref] for ref in refs],
                [second_by_turn[ref] for ref in refs],
            )
        )
    else:
        vectors = inter_annotator_vectors(human)
        if vectors is not None:
            print(_kappa_row("human-vs-human", vectors[0], vectors[1]))
    return 0


def _safe_name(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", text)


def cmd_plot(args: argparse.Namespace) -> int:
    hard = {"report": None, "turn": None, "out": None, "render": False}
    eff = _effective(args, hard)
    report = load_report(eff["report"])
    out_dir = Path(eff["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    for turn_spec in eff["turn"]:
        example_id, sep, index_text = turn_spec.rpartition(":")
        if not sep or not example_id or not index_text.isdigit():
            raise ValidationError(
                f"bad --turn {turn_spec!r}; expected example_id:index"
            )
        index = int(index_text)
        polylines = turn_polylines(report, example_id, index)
        stem = f"{_safe_name(example_id)}_turn{index}"
        json_path = out_dir / f"{stem}.json"
        json_path.write_text(
            json.dumps(polylines, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
        print(f"wrote {json_path}")
        if eff["render"]:
            image_path = out_dir / f"{stem}.svg"
            render_turn_plot(polylines, image_path)
            print(f"wrote {image_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pauc",
        description="Time-aware scoring of proactive video-dialogue predictions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    suppress = argparse.SUPPRESS

    p = sub.add_parser("evaluate", help="score predictions against a benchmark")
    p.add_argument("--benchmark", required=True, help="benchmark JSONL file")
    p.add_argument("--predictions", required=True, help="prediction JSONL file")
    p.add_argument("--judge", default=suppress, help="overlap, scripted:PATH, or llm")
    p.add_argument("--omega", default=suppress, help=f"CSV list (default {OMEGA_DEFAULT})")
    p.add_argument("--max-score", type=int, choices=(2, 4), default=suppress)
    p.add_argument("--cache", default=suppress, help="judge cache JSONL path")
    p.add_argument("--out", default=suppress, help="report path (default: stdout)")
    p.add_argument("--fail-fast", type=_bool, default=suppress, metavar="BOOL")
    p.add_argument("--concurrency", type=int, default=suppress)
    p.add_argument("--judge-model", default=suppress, help="remote judge model name")
    p.add_argument("--initial-score", type=float, default=suppress)
    p.add_argument("--merge-turns", action="store_true", default=suppress)
    p.add_argument("--config", default=None, help="JSON file with flag defaults")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", help="drive a responder over video chunks")
    p.add_argument("--benchmark", required=True)
    p.add_argument("--driver", choices=sorted(DRIVERS), default=suppress)
    p.add_argument("--chunk-len", type=float, default=suppress, metavar="SECONDS")
    p.add_argument(
        "--responder", required=True, help="scripted:PATH, process:CMD, or URL"
    )
    p.add_argument("--out", required=True, help="prediction JSONL path")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("stats", help="print benchmark statistics")
    p.add_argument("--benchmark", required=True)
    p.add_argument("--merge-turns", action="store_true", default=suppress)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("agreement", help="kappa against human preference labels")
    p.add_argument("--report-a", required=True, help="evaluation report for model A")
    p.add_argument("--report-b", required=True, help="evaluation report for model B")
    p.add_argument("--human", required=True, help="human label JSONL file")
    p.add_argument("--human2", default=suppress, help="second annotator label file")
    p.add_argument("--draw-eps", type=float, default=suppress)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("plot", help="emit step-curve polylines for turns")
    p.add_argument("--report", required=True)
    p.add_argument(
        "--turn",
        action="append",
        required=True,
        metavar="EXAMPLE_ID:INDEX",
        help="may be given multiple times",
    )
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--render", action="store_true", default=suppress)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PaucError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
