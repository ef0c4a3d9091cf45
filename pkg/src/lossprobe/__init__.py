"""lossprobe: perturbation-response profiling for autoregressive sequence models.

The toolkit perturbs token sequences (noise injection, segment
shuffling), scores them under a model backend, and analyzes the
per-token loss differences: region segmentation of the response profile
and length-vs-loss-difference statistics over sample sweeps. A builtin
n-gram scorer demonstrates the full pipeline at desk scale; external
models plug in over a line-delimited JSON subprocess protocol.
"""

__version__ = "0.1.0"

from ._kernels import backend_name
from .core import (
    NoiseTokenModel,
    PerturbationSpec,
    PerturbWindow,
    TokenSequence,
    ValidationError,
    derive_seed,
    inject_tokens,
    make_noise_tokens,
    read_sequences_jsonl,
    shuffle_segments,
    write_sequences_jsonl,
)
from .audio import (
    AudioSignal,
    LoudnessSpec,
    match_loudness,
    read_wav,
    rms_db,
    splice,
    tokens_to_seconds,
    white_noise,
    write_wav,
)
from .scoring import (
    BackendError,
    LossTrace,
    ProtocolViolation,
    ScorerHandle,
    check_conformance,
    open_builtin,
    open_external,
    open_scorer,
    score_sequence,
)
from .toymodel import (
    CorpusConfig,
    NGramModel,
    context_distribution,
    demo_corpus_config,
    gen_corpus,
    load_model,
    save_model,
    score_ngram,
    train_ngram,
)
from .analysis import (
    DiffTrace,
    PeakStats,
    RegionSegmentation,
    Span,
    detect_regions,
    global_diff,
    moving_average,
    peak_stats,
    token_diff,
)
from .stats import StatResult, linregress, pearson, spearman, student_t_sf
from .harness import (
    ExperimentConfig,
    SweepReport,
    SweepRow,
    correlation_block,
    emit_report,
    load_config,
    load_report,
    merge_reports,
    run_sweep,
)

__all__ = [
    "__version__",
    "AudioSignal",
    "BackendError",
    "CorpusConfig",
    "DiffTrace",
    "ExperimentConfig",
    "LossTrace",
    "LoudnessSpec",
    "NGramModel",
    "NoiseTokenModel",
    "PeakStats",
    "PerturbWindow",
    "PerturbationSpec",
    "ProtocolViolation",
    "RegionSegmentation",
    "ScorerHandle",
    "Span",
    "StatResult",
    "SweepReport",
    "SweepRow",
    "TokenSequence",
    "ValidationError",
    "backend_name",
    "check_conformance",
    "context_distribution",
    "correlation_block",
    "demo_corpus_config",
    "derive_seed",
    "detect_regions",
    "emit_report",
    "gen_corpus",
    "global_diff",
    "inject_tokens",
    "linregress",
    "load_config",
    "load_model",
    "load_report",
    "make_noise_tokens",
    "match_loudness",
    "merge_reports",
    "moving_average",
    "open_builtin",
    "open_external",
    "open_scorer",
    "peak_stats",
    "pearson",
    "read_sequences_jsonl",
    "read_wav",
    "rms_db",
    "run_sweep",
    "save_model",
    "score_ngram",
    "score_sequence",
    "shuffle_segments",
    "spearman",
    "splice",
    "student_t_sf",
    "token_diff",
    "tokens_to_seconds",
    "train_ngram",
    "white_noise",
    "write_sequences_jsonl",
    "write_wav",
]
