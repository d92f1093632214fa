"""Masked-reconstruction text quality scoring.

Scores candidate texts by how well a bidirectional denoiser reconstructs
them under random masking, averaged over a grid of masking rates. Ships
count-based toy backends, a remote wire-protocol client, scoring
configurations for different quality dimensions, PMI decomposition,
positional and directional diagnostics, and meta-evaluation statistics.
"""

from .dataio import (
    EvalRecord,
    PairRecord,
    config_to_dict,
    json_line,
    load_dataset,
    read_jsonl,
    record_to_dict,
    score_row,
    write_dataset,
    write_jsonl,
    write_scores,
    write_text,
)
from .denoiser import (
    Denoiser,
    DenoiserQuery,
    DenoiserResponse,
    RemoteDenoiser,
    ToyARLM,
    ToyMaskedLM,
    UniformDenoiser,
    ar_sequence_logprobs,
    load_toy_model,
    query_masked,
    query_remote,
    query_uniform,
    save_toy_model,
    train_toy_ar_lm,
    train_toy_masked_lm,
)
from .diagnostics import (
    AdversarialReport,
    DirectionalReport,
    PerturbationConfig,
    PositionalBiasReport,
    directional_consistency,
    generate_reversal_pairs,
    make_disfluent_relevant,
    make_fluent_irrelevant,
    pmi_adversarial_report,
    positional_bias,
)
from .errors import (
    AllTied,
    BadLambda,
    BadModelFile,
    ConnectionFailed,
    DegenerateInput,
    DegenerateVocabulary,
    DuplicateId,
    EmptyCandidate,
    EmptyCorpus,
    EmptyTemplates,
    GridMismatch,
    InsufficientData,
    IoError,
    LengthMismatch,
    MaskScoreError,
    MismatchedSources,
    MissingClassMap,
    NoEligiblePositions,
    OutOfVocabulary,
    ParseError,
    ProtocolViolation,
    SequenceTooLong,
    Timeout,
    TooFewRecords,
    TooFewSamples,
    UnknownId,
    VocabMismatch,
    ZeroTimesteps,
)
from .estimator import (
    EstimatorConfig,
    PositionStat,
    ScoreReport,
    estimate,
    exact_estimate,
    per_position_scores,
)
from .masking import (
    MaskPattern,
    TimestepGrid,
    TokenClassMap,
    apply_mask,
    classify_tokens,
    eligible_positions,
    enumerate_patterns,
    load_stopwords,
    mix_seed,
    sample_mask,
    timestep_grid,
)
from .metaeval import (
    CorrelationReport,
    average_ranks,
    bootstrap_ci,
    kendall_tau,
    mann_whitney_u,
    pairwise_accuracy,
    pearson_r,
    spearman_rho,
    system_level_aggregate,
    williams_test,
)
from .scoring import (
    PMIReport,
    QualityProfile,
    WeightLearningResult,
    aggregate_profile,
    learn_weights,
    quality_profile,
    score_bidirectional,
    score_conditional,
    score_marginal,
    score_pmi,
    score_reverse,
    uniform_weights,
)
from .textcore import (
    MASK_TOKEN,
    TokenSequence,
    Vocabulary,
    build_vocabulary,
    detokenize,
    tokenize,
)

__version__ = "0.1.0"

__all__ = [
    "AdversarialReport",
    "AllTied",
    "BadLambda",
    "BadModelFile",
    "ConnectionFailed",
    "CorrelationReport",
    "DegenerateInput",
    "DegenerateVocabulary",
    "Denoiser",
    "DenoiserQuery",
    "DenoiserResponse",
    "DirectionalReport",
    "DuplicateId",
    "EmptyCandidate",
    "EmptyCorpus",
    "EmptyTemplates",
    "EstimatorConfig",
    "EvalRecord",
    "GridMismatch",
    "InsufficientData",
    "IoError",
    "LengthMismatch",
    "MASK_TOKEN",
    "MaskPattern",
    "MaskScoreError",
    "MismatchedSources",
    "MissingClassMap",
    "NoEligiblePositions",
    "OutOfVocabulary",
    "PMIReport",
    "PairRecord",
    "ParseError",
    "PerturbationConfig",
    "PositionStat",
    "PositionalBiasReport",
    "ProtocolViolation",
    "QualityProfile",
    "RemoteDenoiser",
    "ScoreReport",
    "SequenceTooLong",
    "Timeout",
    "TimestepGrid",
    "TokenClassMap",
    "TokenSequence",
    "TooFewRecords",
    "TooFewSamples",
    "ToyARLM",
    "ToyMaskedLM",
    "UniformDenoiser",
    "UnknownId",
    "VocabMismatch",
    "Vocabulary",
    "WeightLearningResult",
    "ZeroTimesteps",
    "aggregate_profile",
    "apply_mask",
    "ar_sequence_logprobs",
    "average_ranks",
    "bootstrap_ci",
    "build_vocabulary",
    "classify_tokens",
    "config_to_dict",
    "detokenize",
    "directional_consistency",
    "eligible_positions",
    "enumerate_patterns",
    "estimate",
    "exact_estimate",
    "generate_reversal_pairs",
    "json_line",
    "kendall_tau",
    "learn_weights",
    "load_dataset",
    "load_stopwords",
    "load_toy_model",
    "make_disfluent_relevant",
    "make_fluent_irrelevant",
    "mann_whitney_u",
    "mix_seed",
    "pairwise_accuracy",
    "pearson_r",
    "per_position_scores",
    "pmi_adversarial_report",
    "positional_bias",
    "quality_profile",
    "query_masked",
    "query_remote",
    "query_uniform",
    "read_jsonl",
    "record_to_dict",
    "sample_mask",
    "save_toy_model",
    "score_bidirectional",
    "score_conditional",
    "score_marginal",
    "score_pmi",
    "score_reverse",
    "score_row",
    "spearman_rho",
    "system_level_aggregate",
    "timestep_grid",
    "tokenize",
    "train_toy_ar_lm",
    "train_toy_masked_lm",
    "uniform_weights",
    "williams_test",
    "write_dataset",
    "write_jsonl",
    "write_scores",
    "write_text",
]
