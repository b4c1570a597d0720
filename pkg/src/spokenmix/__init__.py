"""Speech-instruction/audio-event mixture corpora and scoring.

Two halves: a corpus builder (gated loudness normalization, seeded overlap
planning, easy/hard/train mixing, manifest + statistics) and an evaluation
suite (exact-match + judge accuracy, embedding-mapped macro-F1, caption
consensus scoring, WER, assisted-output parsing).
"""

from .audio_io import (
    AudioClip,
    AudioIOError,
    Role,
    load_clip,
    peak_clip,
    resample_and_mixdown,
    save_clip,
    to_mono,
)
from .cider import CiderScore, cider
from .clients import (
    ClientConfig,
    HttpEmbedder,
    HttpJudge,
    JudgeRequest,
    JudgeVerdict,
    ScriptedJudge,
    StaticJudge,
    TrigramEmbedder,
    cosine_similarity,
)
from .corpus import (
    BuildItem,
    CorpusStats,
    ManifestEntry,
    ManifestError,
    MixMeta,
    build_manifest,
    corpus_stats,
    flag_for_regeneration,
    read_inventory,
    read_manifest,
    write_manifest,
)
from .loudness import (
    BelowGateError,
    ClipTooShortError,
    LoudnessReport,
    measure_lufs,
    set_loudness,
)
from .metrics import (
    EvalRecord,
    EvalReport,
    corpus_wer,
    evaluate,
    instruction_following_accuracy,
    macro_f1_multilabel,
    map_label,
    score_qa,
    split_label_list,
)
from .mixer import (
    MixMode,
    MixPlan,
    MixPolicy,
    MixResult,
    ZeroEnergyError,
    compute_snr,
    plan_mix,
    render_mix,
)
from .text import (
    ParsedOutput,
    format_assisted_output,
    normalize_text,
    parse_assisted_output,
    wer,
)

__version__ = "0.1.0"
