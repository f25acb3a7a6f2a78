"""Time-aware evaluation of proactive video-dialogue systems.

Scores timestamped model responses against ground-truth reply turns with
the PAUC metric, drives offline models through chunked simulation
protocols, and measures agreement between metric and human preferences.
"""

from .agreement import (
    CATEGORIES,
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
)
from .dataset import (
    BenchmarkFile,
    StatsTable,
    compute_stats,
    load_benchmark,
    load_predictions,
    merge_turns,
    save_benchmark,
    save_predictions,
)
from .errors import (
    DatasetFormatError,
    FixtureError,
    JudgeError,
    JudgeParseError,
    JudgeTransportError,
    PaucError,
    ReportError,
    ResponderTransportError,
    ValidationError,
)
from .judges import (
    JudgeBackend,
    JudgeCache,
    JudgePromptTemplate,
    JudgeRequest,
    OverlapJudge,
    RemoteJudge,
    ScriptedJudge,
    cache_key,
    judge,
    judge_turn_prefixes,
    overlap_judge,
    resolve_judge,
    scripted_judge,
)
from .metric import (
    SpanSelection,
    aggregate_dataset,
    aggregate_example,
    format_percent,
    out_of_span_count,
    riemann_oracle,
    select_in_span,
    shift_times,
    turn_pauc,
)
from .report import (
    evaluate_cases,
    load_report,
    polyline_vertices,
    save_report,
    serialize_report,
    turn_polylines,
    verify_report,
)
from .simulate import (
    ChunkSchedule,
    HttpResponder,
    ProcessResponder,
    Responder,
    ResponderReply,
    ResponderRequest,
    ResponderTurn,
    ScriptedResponder,
    chunk_video,
    default_chunk_len,
    drive_incremental,
    drive_three_way,
    drive_two_step,
    duplicate_rate,
    open_responder,
)
from .types import (
    BoundaryPolicy,
    EvaluationCase,
    EvaluationConfig,
    GroundTruthTurn,
    JudgeVerdict,
    PredictedResponse,
    PredictionStream,
    TurnScoreTrace,
    validate_case,
)

__version__ = "0.1.0"
