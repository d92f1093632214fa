"""Command-line entry point tying the library together for batch work.

Subcommands
-----------
score               batch-score a segment dataset (config mar/cond/rev/bi,
                    plus pmi and profile row shapes)
profile             per-timestep quality profiles (same as score --config profile)
pmi                 conditional/marginal decomposition (same as score --config pmi)
diagnose-position   positional-bias report over candidate positions
diagnose-direction  forward/reverse consistency report on reversal pairs
adversarial         build fluent-irrelevant / disfluent-relevant variants of a
                    dataset, or score all three variants into a comparison report
meta-eval           correlate a score dump with human judgments
learn-weights       fit profile weights to human judgments with k-fold diagnostics
train-toy           train and save a toy masked or autoregressive model

Exit codes
----------
0   success
2   finished, but one or more records failed (error objects emitted in place)
64  usage error (bad flags, conflicting configuration)
65  data error (unreadable/empty/malformed inputs; no partial output is written)
69  remote backend unavailable or misbehaving
70  internal error

Output rows
-----------
All machine-readable output is JSON-lines with sorted keys; floats use the
shortest round-trip representation, so identical runs are byte-identical.
Every report row carries a ``config`` object with ``schema_version: 1`` and
the fully resolved run configuration. Failed records yield
``{"id": ..., "error": {"type": ..., "message": ...}}`` rows in input order.

score row      {id, score, per_timestep, sample_std, config}
pmi row        {id, conditional, marginal, pmi, config}
profile row    {id, timesteps, scores, weights, config}
position row   {records_used, positions, per_position_mean, per_position_std,
                positions_covered, mean_positional_std, cov, errors, config}
direction row  {pair_count, mean_consistency, std_consistency,
                rank_correlation, rank_correlation_defined, config}
adversarial report row
               {n, stats: {variant: {column: {mean, std}}},
                p_values: {"a|b|column": p}, config}
meta-eval row  {level, dimension, statistic, n, value, defined, ci_low,
                ci_high, [compare_value, cross_correlation, williams_t,
                williams_p,] config}
learn-weights  the weight document {grid, weights, fold_rho} verbatim

``--format tsv`` on the diagnostic reports emits one row per position, pair,
or variant, with summary fields as leading ``#``-comment lines.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import resources

from .dataio import (
    json_line,
    load_dataset,
    read_jsonl,
    score_row,
    write_jsonl,
    write_text,
)
from .denoiser import (
    RemoteDenoiser,
    ToyARLM,
    UniformDenoiser,
    ar_sequence_logprobs,
    load_toy_model,
    save_toy_model,
    train_toy_ar_lm,
    train_toy_masked_lm,
)
from .diagnostics import (
    PMI_COLUMNS,
    VARIANTS,
    PerturbationConfig,
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
    ConnectionFailed,
    DegenerateInput,
    DuplicateId,
    EmptyCandidate,
    EmptyCorpus,
    InsufficientData,
    IoError,
    MaskScoreError,
    ParseError,
    ProtocolViolation,
    Timeout,
)
from .estimator import EstimatorConfig, per_position_scores
from .masking import TimestepGrid, classify_tokens, load_stopwords, mix_seed
from .metaeval import (
    bootstrap_ci,
    kendall_tau,
    pearson_r,
    spearman_rho,
    system_level_aggregate,
    williams_test,
)
from .scoring import (
    QualityProfile,
    learn_weights,
    quality_profile,
    score_bidirectional,
    score_conditional,
    score_marginal,
    score_pmi,
    score_reverse,
)
from .textcore import build_vocabulary, tokenize

EXIT_OK = 0
EXIT_RECORDS = 2
EXIT_USAGE = 64
EXIT_DATA = 65
EXIT_REMOTE = 69
EXIT_INTERNAL = 70

CONFIGS = ("mar", "cond", "rev", "bi", "pmi", "profile")

# dimension presets: quality dimension -> scoring configuration
PRESETS = {
    "mt-adequacy": "cond",
    "sum-faithfulness": "cond",
    "sum-coverage": "rev",
    "sum-fluency": "mar",
    "sum-holistic": "bi",
    "d2t": "bi",
}

STAT_FNS = {
    "pearson": pearson_r,
    "spearman": spearman_rho,
    "kendall": kendall_tau,
}


class UsageError(Exception):
    """Bad flags or conflicting configuration; maps to exit 64."""


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting, so main() owns codes."""

    def error(self, message):
        raise UsageError(message)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _add_backend_flags(parser, required: bool = True) -> None:
    parser.add_argument(
        "--backend",
        choices=("toy-masked", "toy-ar", "uniform", "remote"),
        required=required,
        help="probability backend (toy-ar is valid only for the diagnose-* commands)",
    )
    parser.add_argument("--model", help="toy model file (required for toy backends)")
    parser.add_argument("--endpoint", help="remote endpoint URL (required for remote)")


def _add_estimator_flags(parser) -> None:
    parser.add_argument("--k", type=_positive_int, default=20, help="samples per score (default 20)")
    parser.add_argument(
        "--timesteps", type=_positive_int, default=10, help="masking-rate grid size (default 10)"
    )
    parser.add_argument(
        "--weighting", choices=("mlp", "elbo"), default="mlp", help="estimator weighting (default mlp)"
    )
    parser.add_argument(
        "--masking",
        choices=("random", "content", "entity"),
        default="random",
        help="masking strategy (default random)",
    )
    parser.add_argument(
        "--alpha", type=float, default=0.5, help="bidirectional mix weight (default 0.5)"
    )
    parser.add_argument(
        "--stopwords", help="stopword list, one token per line (default: packaged English list)"
    )


def _add_common_flags(parser, jobs: bool = False) -> None:
    parser.add_argument("--seed", type=int, default=0, help="base RNG seed (default 0)")
    if jobs:
        parser.add_argument(
            "--jobs", type=_positive_int, default=1, help="record-level worker threads (default 1)"
        )
    parser.add_argument("--out", help="output path (default: stdout); files are written atomically")


def _add_format_flag(parser) -> None:
    parser.add_argument(
        "--format", choices=("json", "tsv"), default="json", help="report format (default json)"
    )


def build_parser() -> _Parser:
    parser = _Parser(
        prog="maskscore",
        description="Masked-reconstruction text quality scoring and diagnostics.",
        epilog="Exit codes: 0 ok, 2 record-level errors, 64 usage, 65 data, "
        "69 remote unavailable, 70 internal.",
    )
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")

    def score_like(name: str, help_text: str, override: str | None) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("data", help="segment dataset (JSON-lines)")
        _add_backend_flags(p)
        if override is None:
            p.add_argument(
                "--config",
                choices=CONFIGS,
                default=None,
                help="scoring configuration (default mar unless --preset is given)",
            )
            p.add_argument(
                "--preset",
                choices=sorted(PRESETS),
                default=None,
                help="quality-dimension preset; forces the matching --config",
            )
        _add_estimator_flags(p)
        _add_common_flags(p, jobs=True)
        p.set_defaults(func=cmd_score, config_override=override)
        return p

    score_like("score", "Batch-score a segment dataset.", None)
    score_like("profile", "Per-timestep quality profiles for a segment dataset.", "profile")
    score_like("pmi", "Conditional/marginal decomposition for a segment dataset.", "pmi")

    p = sub.add_parser(
        "diagnose-position",
        help="Positional-bias report over candidate positions.",
        description="Score candidate positions (no source context) and report "
        "per-position score spread.",
    )
    p.add_argument("data", help="segment dataset (JSON-lines); candidates are scored")
    _add_backend_flags(p)
    _add_estimator_flags(p)
    p.add_argument(
        "--max-position", type=_positive_int, default=64, help="report positions up to this index"
    )
    _add_format_flag(p)
    _add_common_flags(p, jobs=True)
    p.set_defaults(func=cmd_diagnose_position)

    p = sub.add_parser(
        "diagnose-direction",
        help="Forward/reverse scoring consistency on reversal pairs.",
        description="Score each pair text in both directions and report the "
        "consistency distribution. Pairs come from --pairs-file (source=forward, "
        "candidate=reverse) or are generated from built-in template banks.",
    )
    p.add_argument("--pairs-file", help="segment dataset of pairs (source=forward, candidate=reverse)")
    p.add_argument(
        "--generate",
        type=_positive_int,
        default=200,
        help="number of pairs to generate when --pairs-file is absent (default 200)",
    )
    p.add_argument("--dump-pairs", help="also write the scored pairs as a dataset to this path")
    _add_backend_flags(p)
    _add_estimator_flags(p)
    _add_format_flag(p)
    _add_common_flags(p)
    p.set_defaults(func=cmd_diagnose_direction)

    p = sub.add_parser(
        "adversarial",
        help="Build adversarial dataset variants or score them into a report.",
        description="Modes fluent-irrelevant and disfluent-relevant write a "
        "perturbed copy of the dataset (human judgments are dropped; they "
        "describe the original candidates). Mode report scores the original "
        "plus both variants and compares their decompositions.",
    )
    p.add_argument("data", help="original segment dataset (JSON-lines)")
    p.add_argument(
        "--mode",
        choices=("fluent-irrelevant", "disfluent-relevant", "report"),
        required=True,
        help="what to build",
    )
    p.add_argument("--swap-rate", type=float, default=0.1, help="adjacent swap rate (default 0.1)")
    p.add_argument(
        "--substitution-rate", type=float, default=0.1, help="function-word substitution rate (default 0.1)"
    )
    p.add_argument(
        "--repetition-rate", type=float, default=0.1, help="token repetition rate (default 0.1)"
    )
    p.add_argument("--deletion-rate", type=float, default=0.05, help="token deletion rate (default 0.05)")
    p.add_argument("--fluent", help="fluent-irrelevant variant dataset (report mode)")
    p.add_argument("--disfluent", help="disfluent-relevant variant dataset (report mode)")
    _add_backend_flags(p, required=False)
    _add_estimator_flags(p)
    _add_format_flag(p)
    _add_common_flags(p)
    p.set_defaults(func=cmd_adversarial)

    p = sub.add_parser(
        "meta-eval",
        help="Correlate a score dump with human judgments.",
        description="Join a score dump with a dataset's human judgments and "
        "report correlation statistics with bootstrap confidence intervals. "
        "--compare adds a Williams significance test against a second dump.",
    )
    p.add_argument("scores", help="score dump (JSON-lines, from the score subcommand)")
    p.add_argument("--data", required=True, help="segment dataset with human judgments")
    p.add_argument(
        "--dimension",
        action="append",
        help="human dimension to evaluate (repeatable; default: every dimension present)",
    )
    p.add_argument(
        "--statistic",
        action="append",
        choices=sorted(STAT_FNS),
        help="correlation statistic (repeatable; default: kendall, pearson, spearman)",
    )
    p.add_argument(
        "--level", choices=("segment", "system"), default="segment", help="correlation level (default segment)"
    )
    p.add_argument("--score-field", default="score", help="row field holding the metric (default score)")
    p.add_argument("--compare", help="second score dump for a Williams test")
    p.add_argument(
        "--alternative",
        choices=("two-sided", "greater", "less"),
        default="two-sided",
        help="Williams alternative (default two-sided)",
    )
    p.add_argument(
        "--resamples", type=_positive_int, default=1000, help="bootstrap resamples (default 1000)"
    )
    p.add_argument("--ci-level", type=float, default=0.95, help="bootstrap CI level (default 0.95)")
    _add_common_flags(p)
    p.set_defaults(func=cmd_meta_eval)

    p = sub.add_parser(
        "learn-weights",
        help="Fit profile weights to human judgments.",
        description="Read a profile dump (score --config profile), join it with "
        "a dataset's human dimension, and fit timestep weights with k-fold "
        "held-out diagnostics.",
    )
    p.add_argument("profiles", help="profile dump (JSON-lines)")
    p.add_argument("--data", required=True, help="segment dataset with human judgments")
    p.add_argument("--dimension", required=True, help="human dimension to fit against")
    p.add_argument("--folds", type=_positive_int, default=5, help="cross-validation folds (default 5)")
    _add_common_flags(p)
    p.set_defaults(func=cmd_learn_weights)

    p = sub.add_parser(
        "train-toy",
        help="Train and save a toy masked or autoregressive model.",
        description="Build a vocabulary from a text corpus (one sequence per "
        "line), train a toy model, and save it (magic DSTOY1).",
    )
    p.add_argument("corpus", help="training corpus: one whitespace-tokenized sequence per line")
    p.add_argument("--kind", choices=("masked", "ar"), default="masked", help="model kind (default masked)")
    p.add_argument(
        "--lambdas",
        default="0.5,0.2,0.2,0.1",
        help="masked-model mixture weights: trigram,bigram-left,bigram-right,unigram",
    )
    p.add_argument(
        "--alpha-add", type=float, default=1.0, help="masked-model additive smoothing (default 1.0)"
    )
    p.add_argument("--k-add", type=float, default=1.0, help="AR-model additive smoothing (default 1.0)")
    p.add_argument(
        "--sentinel-policy",
        choices=("barrier", "bridge"),
        default="barrier",
        help="how masked-model contexts treat sequence boundaries (default barrier)",
    )
    p.add_argument(
        "--lower", action="store_true", help="lowercase the corpus (tokenizer rule whitespace_lower)"
    )
    p.add_argument("--out", required=True, help="model output path")
    p.add_argument("--seed", type=int, default=0, help="accepted for uniformity; training is exact")
    p.set_defaults(func=cmd_train_toy)

    return parser


def _resolve_config(args) -> str:
    override = getattr(args, "config_override", None)
    if override is not None:
        return override
    preset = getattr(args, "preset", None)
    explicit = getattr(args, "config", None)
    if preset is not None:
        forced = PRESETS[preset]
        if explicit is not None and explicit != forced:
            raise UsageError(
                f"--preset {preset} implies --config {forced}, which conflicts "
                f"with --config {explicit}"
            )
        return forced
    return explicit if explicit is not None else "mar"


def _build_estimator_config(args) -> EstimatorConfig:
    try:
        return EstimatorConfig(
            k=args.k,
            timesteps=args.timesteps,
            weighting=args.weighting,
            strategy=args.masking,
            alpha_bi=args.alpha,
            seed=args.seed,
        )
    except (ValueError, MaskScoreError) as exc:
        raise UsageError(str(exc)) from None


def _resolve_stopwords(args) -> frozenset[str]:
    path = getattr(args, "stopwords", None)
    if path:
        return load_stopwords(path)
    ref = resources.files("maskscore.data").joinpath("stopwords_en.txt")
    with resources.as_file(ref) as real_path:
        return load_stopwords(str(real_path))


def _dataset_texts(records) -> list[str]:
    texts = []
    for record in records:
        texts.append(record.source)
        texts.append(record.candidate)
    return texts


def _build_backend(args, texts, allow_ar: bool = False):
    backend = args.backend
    if backend is None:
        raise UsageError("this command requires --backend")
    if backend in ("toy-masked", "toy-ar"):
        if not args.model:
            raise UsageError(f"--backend {backend} requires --model")
        if args.endpoint:
            raise UsageError("--endpoint only applies to --backend remote")
        model = load_toy_model(args.model)
        if backend == "toy-ar" and not isinstance(model, ToyARLM):
            raise UsageError(f"{args.model} holds a masked model; use --backend toy-masked")
        if backend == "toy-masked" and isinstance(model, ToyARLM):
            raise UsageError(f"{args.model} holds an AR model; use --backend toy-ar")
        if isinstance(model, ToyARLM) and not allow_ar:
            raise UsageError(
                "--backend toy-ar is one-directional; it only supports "
                "diagnose-position and diagnose-direction"
            )
        return model
    if args.model:
        raise UsageError("--model only applies to toy backends")
    if backend == "uniform":
        if args.endpoint:
            raise UsageError("--endpoint only applies to --backend remote")
        return UniformDenoiser(build_vocabulary(texts))
    if not args.endpoint:
        raise UsageError("--backend remote requires --endpoint")
    remote = RemoteDenoiser(args.endpoint, build_vocabulary(texts))
    remote.health()  # fail fast before any scoring work
    return remote


def _run_config(args, est: EstimatorConfig, config_name: str | None = None) -> dict:
    out = {
        "schema_version": 1,
        "weighting": est.weighting,
        "k": est.k,
        "timesteps": est.timesteps,
        "strategy": est.strategy,
        "alpha_bi": est.alpha_bi,
        "seed": est.seed,
        "backend": args.backend,
    }
    if config_name is not None:
        out["config"] = config_name
    if getattr(args, "preset", None):
        out["preset"] = args.preset
    if args.model:
        out["model"] = args.model
    if args.endpoint:
        out["endpoint"] = args.endpoint
    if getattr(args, "stopwords", None):
        out["stopwords"] = args.stopwords
    return out


def _run_records(records, work, jobs: int):
    """Run work(record) per record, in input order, with error capture.

    Record-level failures become error rows; remote transport failures
    abort the whole run. Output order never depends on jobs.
    """

    def guarded(item):
        index, record = item
        try:
            return index, work(record), None
        except (ConnectionFailed, Timeout, ProtocolViolation):
            raise
        except MaskScoreError as exc:
            return index, None, exc

    if jobs <= 1:
        results = [guarded(item) for item in enumerate(records)]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(guarded, enumerate(records)))

    rows = []
    had_error = False
    for index, row, exc in results:
        if exc is not None:
            had_error = True
            rows.append(
                {
                    "id": records[index].id,
                    "error": {"type": type(exc).__name__, "message": str(exc)},
                }
            )
        else:
            rows.append(row)
    return rows, had_error


def _emit_rows(rows, out_path) -> None:
    if out_path is None:
        for row in rows:
            sys.stdout.write(json_line(row) + "\n")
    else:
        write_jsonl(rows, out_path)


def _emit_text(text: str, out_path) -> None:
    if out_path is None:
        sys.stdout.write(text)
    else:
        write_text(text, out_path)


def _tsv_cell(value) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def _load_nonempty(path: str):
    records = load_dataset(path, kind="segment")
    if not records:
        raise EmptyCorpus(f"{path}: dataset is empty")
    return records


def cmd_score(args) -> int:
    records = _load_nonempty(args.data)
    config_name = _resolve_config(args)
    est = _build_estimator_config(args)
    backend = _build_backend(args, _dataset_texts(records))
    vocab = backend.vocab
    stop = _resolve_stopwords(args) if args.masking != "random" else frozenset()
    run_cfg = _run_config(args, est, config_name)
    classify = args.masking != "random"

    def work(record):
        cand = tokenize(record.candidate, vocab)
        src = tokenize(record.source, vocab)
        cand_map = None
        src_map = None
        if classify and config_name != "rev":
            cand_map = classify_tokens(cand, vocab, stop)
        if classify and config_name in ("rev", "bi"):
            src_map = classify_tokens(src, vocab, stop)
        if config_name == "mar":
            report = score_marginal(backend, cand, est, cand_map)
        elif config_name == "cond":
            report = score_conditional(backend, cand, src, est, cand_map)
        elif config_name == "rev":
            report = score_reverse(backend, src, cand, est, src_map)
        elif config_name == "bi":
            report = score_bidirectional(backend, cand, src, est, cand_map, src_map)
        elif config_name == "pmi":
            rep = score_pmi(backend, cand, src, est, cand_map)
            return {
                "id": record.id,
                "conditional": rep.conditional,
                "marginal": rep.marginal,
                "pmi": rep.pmi,
                "config": run_cfg,
            }
        else:
            prof = quality_profile(backend, cand, src, est, cand_map)
            return {
                "id": record.id,
                "timesteps": list(prof.timesteps.values),
                "scores": list(prof.scores),
                "weights": list(prof.weights),
                "config": run_cfg,
            }
        row = score_row(record.id, report)
        row["config"] = run_cfg
        return row

    rows, had_error = _run_records(records, work, args.jobs)
    _emit_rows(rows, args.out)
    return EXIT_RECORDS if had_error else EXIT_OK


def cmd_diagnose_position(args) -> int:
    records = _load_nonempty(args.data)
    est = _build_estimator_config(args)
    backend = _build_backend(args, _dataset_texts(records), allow_ar=True)
    vocab = backend.vocab
    stop = _resolve_stopwords(args) if args.masking != "random" else frozenset()
    run_cfg = _run_config(args, est)

    if isinstance(backend, ToyARLM):

        def work(record):
            seq = tokenize(record.candidate, vocab)
            if not seq.ids:
                raise EmptyCandidate(f"record {record.id}: empty candidate")
            return dict(enumerate(ar_sequence_logprobs(backend, seq)))

    else:

        def work(record):
            seq = tokenize(record.candidate, vocab)
            cmap = classify_tokens(seq, vocab, stop) if args.masking != "random" else None
            return per_position_scores(backend, seq, None, est, cmap)

    rows, had_error = _run_records(records, work, args.jobs)
    maps = [row for row in rows if "error" not in row]
    errors = [row for row in rows if "error" in row]
    if not maps:
        raise InsufficientData("no record could be scored")
    report = positional_bias(maps, args.max_position)

    if args.format == "tsv":
        lines = [
            f"# records_used\t{len(maps)}",
            f"# record_errors\t{len(errors)}",
            f"# positions_covered\t{report.positions_covered}",
            f"# mean_positional_std\t{_tsv_cell(report.mean_positional_std)}",
            f"# cov\t{_tsv_cell(report.cov)}",
            "position\tmean\tstd",
        ]
        for pos, mean, std in zip(
            report.positions, report.per_position_mean, report.per_position_std
        ):
            lines.append(f"{pos}\t{_tsv_cell(mean)}\t{_tsv_cell(std)}")
        _emit_text("\n".join(lines) + "\n", args.out)
    else:
        _emit_rows(
            [
                {
                    "records_used": len(maps),
                    "errors": errors,
                    "positions": list(report.positions),
                    "per_position_mean": list(report.per_position_mean),
                    "per_position_std": list(report.per_position_std),
                    "positions_covered": report.positions_covered,
                    "mean_positional_std": report.mean_positional_std,
                    "cov": report.cov,
                    "config": run_cfg,
                }
            ],
            args.out,
        )
    return EXIT_RECORDS if had_error else EXIT_OK


def cmd_diagnose_direction(args) -> int:
    if args.pairs_file:
        pair_records = _load_nonempty(args.pairs_file)
        pairs = [(r.source, r.candidate) for r in pair_records]
    else:
        pairs = generate_reversal_pairs(n=args.generate, seed=args.seed)
    est = _build_estimator_config(args)
    texts = [text for pair in pairs for text in pair]
    backend = _build_backend(args, texts, allow_ar=True)
    vocab = backend.vocab
    run_cfg = _run_config(args, est)

    if isinstance(backend, ToyARLM):

        def scorer(text: str) -> float:
            seq = tokenize(text, vocab)
            if not seq.ids:
                raise EmptyCandidate(f"empty pair text: {text!r}")
            values = ar_sequence_logprobs(backend, seq)
            return math.fsum(values) / len(values)

    else:

        def scorer(text: str) -> float:
            return score_marginal(backend, tokenize(text, vocab), est).score

    report = directional_consistency(scorer, pairs)
    if args.dump_pairs:
        write_jsonl(
            [
                {"id": f"pair-{index:04d}", "source": forward, "candidate": reverse}
                for index, (forward, reverse) in enumerate(pairs)
            ],
            args.dump_pairs,
        )

    rank = report.rank_correlation if report.rank_correlation_defined else None
    if args.format == "tsv":
        lines = [
            f"# pair_count\t{report.pair_count}",
            f"# mean_consistency\t{_tsv_cell(report.mean_consistency)}",
            f"# std_consistency\t{_tsv_cell(report.std_consistency)}",
            f"# rank_correlation\t{'' if rank is None else _tsv_cell(rank)}",
            "pair\tconsistency",
        ]
        for index, value in enumerate(report.consistencies):
            lines.append(f"{index}\t{_tsv_cell(value)}")
        _emit_text("\n".join(lines) + "\n", args.out)
    else:
        _emit_rows(
            [
                {
                    "pair_count": report.pair_count,
                    "mean_consistency": report.mean_consistency,
                    "std_consistency": report.std_consistency,
                    "rank_correlation": rank,
                    "rank_correlation_defined": report.rank_correlation_defined,
                    "config": run_cfg,
                }
            ],
            args.out,
        )
    return EXIT_OK


def _perturbed_rows(records, pairs) -> list[dict]:
    # human judgments describe the original candidates, so they are dropped
    rows = []
    for record, (source, candidate) in zip(records, pairs):
        row = {"id": record.id, "source": source, "candidate": candidate}
        if record.system_id is not None:
            row["system"] = record.system_id
        if record.split is not None:
            row["split"] = record.split
        row.update(record.extras)
        rows.append(row)
    return rows


def cmd_adversarial(args) -> int:
    records = _load_nonempty(args.data)
    pairs = [(r.source, r.candidate) for r in records]

    if args.mode != "report" and args.format == "tsv":
        raise UsageError("--format tsv only applies to --mode report")

    if args.mode == "fluent-irrelevant":
        out_pairs = make_fluent_irrelevant(pairs, seed=args.seed)
        _emit_rows(_perturbed_rows(records, out_pairs), args.out)
        return EXIT_OK

    if args.mode == "disfluent-relevant":
        try:
            pcfg = PerturbationConfig(
                swap_rate=args.swap_rate,
                substitution_rate=args.substitution_rate,
                repetition_rate=args.repetition_rate,
                deletion_rate=args.deletion_rate,
                seed=args.seed,
            )
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        out_pairs = make_disfluent_relevant(pairs, pcfg)
        _emit_rows(_perturbed_rows(records, out_pairs), args.out)
        return EXIT_OK

    if not args.fluent or not args.disfluent:
        raise UsageError("--mode report requires --fluent and --disfluent")
    fluent_records = _load_nonempty(args.fluent)
    disfluent_records = _load_nonempty(args.disfluent)
    fluent_pairs = [(r.source, r.candidate) for r in fluent_records]
    disfluent_pairs = [(r.source, r.candidate) for r in disfluent_records]
    est = _build_estimator_config(args)
    texts = (
        _dataset_texts(records)
        + _dataset_texts(fluent_records)
        + _dataset_texts(disfluent_records)
    )
    backend = _build_backend(args, texts)
    run_cfg = _run_config(args, est)
    report = pmi_adversarial_report(backend, pairs, fluent_pairs, disfluent_pairs, est)

    stats = {
        variant: {
            column: {
                "mean": report.stats[variant][column][0],
                "std": report.stats[variant][column][1],
            }
            for column in PMI_COLUMNS
        }
        for variant in VARIANTS
    }
    p_values = {
        f"{a}|{b}|{column}": p for (a, b, column), p in report.p_values.items()
    }
    if args.format == "tsv":
        lines = [f"# {key}\t{_tsv_cell(p_values[key])}" for key in sorted(p_values)]
        header = ["variant"]
        for column in PMI_COLUMNS:
            header.extend([f"{column}_mean", f"{column}_std"])
        header.append("n")
        lines.append("\t".join(header))
        for variant in VARIANTS:
            cells = [variant]
            for column in PMI_COLUMNS:
                cells.append(_tsv_cell(stats[variant][column]["mean"]))
                cells.append(_tsv_cell(stats[variant][column]["std"]))
            cells.append(str(len(report.values[variant]["pmi"])))
            lines.append("\t".join(cells))
        _emit_text("\n".join(lines) + "\n", args.out)
    else:
        _emit_rows(
            [
                {
                    "n": len(report.values["original"]["pmi"]),
                    "stats": stats,
                    "p_values": p_values,
                    "config": run_cfg,
                }
            ],
            args.out,
        )
    return EXIT_OK


def _score_map(path: str, field: str) -> dict[str, float]:
    rows = read_jsonl(path)
    out: dict[str, float] = {}
    for line_no, row in enumerate(rows, start=1):
        if "error" in row:
            raise ParseError(line_no, f"{path}: row is an error object; rescore first")
        record_id = row.get("id")
        if not isinstance(record_id, str):
            raise ParseError(line_no, f"{path}: row has no string id")
        value = row.get(field)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ParseError(line_no, f"{path}: field {field!r} is not a number")
        if not math.isfinite(value):
            raise ParseError(line_no, f"{path}: field {field!r} is not finite")
        if record_id in out:
            raise DuplicateId(record_id, 0, line_no)
        out[record_id] = float(value)
    if not out:
        raise EmptyCorpus(f"{path}: no score rows")
    return out


def cmd_meta_eval(args) -> int:
    records = _load_nonempty(args.data)
    scores = _score_map(args.scores, args.score_field)
    compare = _score_map(args.compare, args.score_field) if args.compare else None
    if not 0.0 < args.ci_level < 1.0:
        raise UsageError(f"--ci-level must lie in (0, 1), got {args.ci_level}")

    missing = [r.id for r in records if r.id not in scores]
    if missing:
        raise InsufficientData(
            f"{len(missing)} dataset ids missing from {args.scores} "
            f"(first: {missing[0]!r})"
        )
    if compare is not None:
        missing = [r.id for r in records if r.id not in compare]
        if missing:
            raise InsufficientData(
                f"{len(missing)} dataset ids missing from {args.compare} "
                f"(first: {missing[0]!r})"
            )

    dimensions = args.dimension or sorted({d for r in records for d in r.human})
    if not dimensions:
        raise InsufficientData("dataset carries no human judgments")
    statistics = args.statistic or sorted(STAT_FNS)

    run_cfg = {
        "schema_version": 1,
        "level": args.level,
        "score_field": args.score_field,
        "resamples": args.resamples,
        "ci_level": args.ci_level,
        "seed": args.seed,
        "alternative": args.alternative,
        "compare": compare is not None,
    }

    rows = []
    emission = 0
    for dimension in dimensions:
        selected = [r for r in records if dimension in r.human]
        if len(selected) < 2:
            raise InsufficientData(
                f"dimension {dimension!r}: need >= 2 records with judgments, "
                f"got {len(selected)}"
            )
        if args.level == "segment":
            xs = [scores[r.id] for r in selected]
            ys = [r.human[dimension] for r in selected]
            zs = [compare[r.id] for r in selected] if compare is not None else None
        else:
            unsystemed = [r.id for r in selected if r.system_id is None]
            if unsystemed:
                raise InsufficientData(
                    f"system-level evaluation needs a system id on every record "
                    f"(missing on {unsystemed[0]!r})"
                )
            aggregate = system_level_aggregate(
                (r.system_id, scores[r.id], r.human[dimension]) for r in selected
            )
            xs = [m for _, m, _ in aggregate]
            ys = [h for _, _, h in aggregate]
            zs = None
            if compare is not None:
                aggregate = system_level_aggregate(
                    (r.system_id, compare[r.id], r.human[dimension]) for r in selected
                )
                zs = [m for _, m, _ in aggregate]
            if len(xs) < 2:
                raise InsufficientData(
                    f"dimension {dimension!r}: need >= 2 systems, got {len(xs)}"
                )

        for name in statistics:
            fn = STAT_FNS[name]
            row = {
                "level": args.level,
                "dimension": dimension,
                "statistic": name,
                "n": len(xs),
                "config": run_cfg,
            }
            try:
                row["value"] = fn(xs, ys)
                row["defined"] = True
            except AllTied:
                row.update(value=None, defined=False, ci_low=None, ci_high=None)
                if compare is not None:
                    row.update(
                        compare_value=None,
                        cross_correlation=None,
                        williams_t=None,
                        williams_p=None,
                    )
                rows.append(row)
                emission += 1
                continue
            try:
                low, high = bootstrap_ci(
                    list(zip(xs, ys)),
                    fn,
                    resamples=args.resamples,
                    level=args.ci_level,
                    seed=mix_seed(args.seed, emission),
                )
                row["ci_low"], row["ci_high"] = low, high
            except (AllTied, DegenerateInput):
                row["ci_low"] = row["ci_high"] = None
            if compare is not None:
                try:
                    compare_value = fn(zs, ys)
                    cross = fn(xs, zs)
                    t_stat, p_value = williams_test(
                        row["value"], compare_value, cross, len(xs), args.alternative
                    )
                    row.update(
                        compare_value=compare_value,
                        cross_correlation=cross,
                        williams_t=t_stat,
                        williams_p=p_value,
                    )
                except (MaskScoreError, ValueError):
                    row.update(
                        compare_value=None,
                        cross_correlation=None,
                        williams_t=None,
                        williams_p=None,
                    )
            rows.append(row)
            emission += 1

    _emit_rows(rows, args.out)
    return EXIT_OK


def cmd_learn_weights(args) -> int:
    profile_rows = read_jsonl(args.profiles)
    if not profile_rows:
        raise EmptyCorpus(f"{args.profiles}: no profile rows")
    records = _load_nonempty(args.data)
    by_id = {r.id: r for r in records}

    profiles = []
    targets = []
    for line_no, row in enumerate(profile_rows, start=1):
        if "error" in row:
            raise ParseError(line_no, f"{args.profiles}: row is an error object; rescore first")
        for key in ("id", "timesteps", "scores", "weights"):
            if key not in row:
                raise ParseError(line_no, f"{args.profiles}: row lacks {key!r}")
        record = by_id.get(row["id"])
        if record is None:
            raise InsufficientData(f"profile id {row['id']!r} not in {args.data}")
        if args.dimension not in record.human:
            raise InsufficientData(
                f"record {record.id!r} lacks human dimension {args.dimension!r}"
            )
        try:
            values = tuple(float(t) for t in row["timesteps"])
            profile = QualityProfile(
                timesteps=TimestepGrid(values=values, count=len(values)),
                scores=tuple(float(s) for s in row["scores"]),
                weights=tuple(float(w) for w in row["weights"]),
            )
        except (TypeError, ValueError) as exc:
            raise ParseError(line_no, f"{args.profiles}: bad profile row: {exc}") from None
        profiles.append(profile)
        targets.append(record.human[args.dimension])

    try:
        result = learn_weights(profiles, targets, folds=args.folds, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _emit_rows([json.loads(result.to_json())], args.out)
    return EXIT_OK


def cmd_train_toy(args) -> int:
    try:
        with open(args.corpus, encoding="utf-8") as handle:
            lines = [line.strip() for line in handle if line.strip()]
    except OSError as exc:
        raise IoError(f"cannot read {args.corpus}: {exc}") from exc
    if not lines:
        raise EmptyCorpus(f"{args.corpus}: corpus is empty")

    rule = "whitespace_lower" if args.lower else "whitespace"
    vocab = build_vocabulary(lines, tokenizer_rule=rule)
    sequences = [tokenize(line, vocab) for line in lines]

    summary = {
        "kind": args.kind,
        "model": args.out,
        "vocab_size": vocab.size,
        "sequences": len(sequences),
        "tokenizer_rule": rule,
        "schema_version": 1,
    }
    if args.kind == "masked":
        parts = args.lambdas.split(",")
        if len(parts) != 4:
            raise UsageError(f"--lambdas needs 4 comma-separated values, got {len(parts)}")
        try:
            lambdas = tuple(float(part) for part in parts)
        except ValueError:
            raise UsageError(f"--lambdas must be numeric, got {args.lambdas!r}") from None
        if args.alpha_add <= 0.0:
            raise UsageError(f"--alpha-add must be positive, got {args.alpha_add}")
        try:
            model = train_toy_masked_lm(
                sequences,
                vocab,
                lambdas=lambdas,
                alpha_add=args.alpha_add,
                sentinel_policy=args.sentinel_policy,
            )
        except BadLambda as exc:
            raise UsageError(str(exc)) from None
        summary.update(lambdas=list(lambdas), alpha_add=args.alpha_add, sentinel_policy=args.sentinel_policy)
    else:
        if args.k_add <= 0.0:
            raise UsageError(f"--k-add must be positive, got {args.k_add}")
        model = train_toy_ar_lm(sequences, vocab, k_add=args.k_add)
        summary.update(k_add=args.k_add)

    save_toy_model(model, args.out)
    sys.stdout.write(json_line(summary) + "\n")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not hasattr(args, "func"):
            parser.print_usage(sys.stderr)
            print("error: a subcommand is required", file=sys.stderr)
            return EXIT_USAGE
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConnectionFailed, Timeout, ProtocolViolation) as exc:
        print(f"error: remote backend: {exc}", file=sys.stderr)
        return EXIT_REMOTE
    except MaskScoreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BrokenPipeError:
        return EXIT_INTERNAL
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
