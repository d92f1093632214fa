"""Positional bias, directional consistency, and adversarial constructions.

Positional bias aggregates per-position score samples across a dataset
into a coefficient of variation of the per-position means; a fair scorer
treats positions alike and lands near zero. Directional consistency
compares forward and reversed statements of one fact on the geometric
mean token probability exp(score), where 1.0 means perfectly symmetric.

The two adversarial constructors mirror a classic failure probe: fluent
but irrelevant candidates (sources keep their text, candidates are
deranged across records) and disfluent but relevant candidates (small
seeded token perturbations). ``pmi_adversarial_report`` scores all three
variants and attaches pairwise Mann-Whitney U p-values per column.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AllTied,
    EmptyCandidate,
    EmptyTemplates,
    InsufficientData,
    MismatchedSources,
    TooFewRecords,
)
from .estimator import EstimatorConfig
from .masking import mix_seed
from .metaeval import mann_whitney_u, spearman_rho
from .scoring import score_pmi
from .textcore import tokenize

DEFAULT_ARTICLES = ("a", "an", "the")
DEFAULT_PREPOSITIONS = ("of", "in", "on", "at", "to", "by", "for", "with", "from", "over")
DEFAULT_PUNCTUATION = (",", ".", ";", ":", "!", "?")

VARIANTS = ("original", "fluent_irrelevant", "disfluent_relevant")
PMI_COLUMNS = ("conditional", "marginal", "pmi")


@dataclass(frozen=True)
class PositionalBiasReport:
    """Per-position score statistics over a dataset.

    The parallel lists cover exactly the positions with at least two
    samples, in ascending order (``positions`` names them). ``cov`` is
    the population std of the per-position means over the magnitude of
    their mean; ``mean_positional_std`` averages the per-position
    sample stds.
    """

    positions: tuple[int, ...]
    per_position_mean: tuple[float, ...]
    per_position_std: tuple[float, ...]
    mean_positional_std: float
    cov: float
    positions_covered: int

    def __post_init__(self) -> None:
        if not (
            len(self.positions)
            == len(self.per_position_mean)
            == len(self.per_position_std)
            == self.positions_covered
        ):
            raise ValueError("positional report fields disagree on coverage")
        if any(s < 0.0 for s in self.per_position_std):
            raise ValueError("standard deviations must be nonnegative")
        if self.cov < 0.0 or self.mean_positional_std < 0.0:
            raise ValueError("cov and mean_positional_std must be nonnegative")


@dataclass(frozen=True)
class DirectionalReport:
    """Forward/reverse agreement statistics over fact pairs.

    ``rank_correlation`` is Spearman rho between the forward and reverse
    score lists; when the ranks are degenerate (for example a constant
    scorer) it is NaN and ``rank_correlation_defined`` is False.
    """

    mean_consistency: float
    std_consistency: float
    rank_correlation: float
    pair_count: int
    rank_correlation_defined: bool = True
    consistencies: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if not 0.0 < self.mean_consistency <= 1.0:
            raise ValueError(f"mean consistency {self.mean_consistency} outside (0, 1]")
        if self.std_consistency < 0.0:
            raise ValueError("std_consistency must be nonnegative")
        if self.pair_count < 2:
            raise ValueError("pair_count must be >= 2")
        if self.rank_correlation_defined:
            if not -1.0 <= self.rank_correlation <= 1.0:
                raise ValueError(f"rank correlation {self.rank_correlation} out of range")
        elif not math.isnan(self.rank_correlation):
            raise ValueError("undefined rank correlation must be NaN")
        for c in self.consistencies:
            if not 0.0 < c <= 1.0:
                raise ValueError(f"consistency {c} outside (0, 1]")


@dataclass(frozen=True)
class PerturbationConfig:
    """Rates and token sets for the disfluency perturbations.

    All rates live in [0, 1]; an all-zero configuration is permitted and
    acts as the identity. Swaps never cross tokens in punctuation_set.
    """

    swap_rate: float = 0.0
    substitution_rate: float = 0.0
    repetition_rate: float = 0.0
    deletion_rate: float = 0.0
    article_set: tuple[str, ...] = DEFAULT_ARTICLES
    preposition_set: tuple[str, ...] = DEFAULT_PREPOSITIONS
    punctuation_set: tuple[str, ...] = DEFAULT_PUNCTUATION
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("swap_rate", "substitution_rate", "repetition_rate", "deletion_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name}={rate} outside [0, 1]")


def positional_bias(per_position_maps, max_position: int) -> PositionalBiasReport:
    """Aggregate per-position score maps into positional-bias statistics.

    ``per_position_maps`` holds one position->score mapping per sequence
    (the estimator's per_position_scores, or per-step log-probabilities
    for an autoregressive scorer). Positions at or beyond max_position
    are truncated; positions with fewer than two samples are excluded.
    """
    maps = list(per_position_maps)
    if len(maps) < 2:
        raise InsufficientData(f"need >= 2 sequences, got {len(maps)}")
    if max_position < 1:
        raise ValueError(f"max_position must be >= 1, got {max_position}")
    samples: dict[int, list[float]] = {}
    for m in maps:
        for pos, value in m.items():
            if 0 <= pos < max_position:
                samples.setdefault(pos, []).append(float(value))
    covered = sorted(pos for pos, vals in samples.items() if len(vals) >= 2)
    if not covered:
        raise InsufficientData("no position has two or more samples")
    means = []
    stds = []
    for pos in covered:
        arr = np.asarray(samples[pos])
        means.append(float(arr.mean()))
        stds.append(float(arr.std(ddof=1)))
    mean_arr = np.asarray(means)
    center = float(mean_arr.mean())
    spread = float(mean_arr.std(ddof=0))
    cov = 0.0 if spread == 0.0 else spread / abs(center)
    return PositionalBiasReport(
        positions=tuple(covered),
        per_position_mean=tuple(means),
        per_position_std=tuple(stds),
        mean_positional_std=float(np.mean(stds)),
        cov=cov,
        positions_covered=len(covered),
    )


def directional_consistency(scorer, pairs, cfg=None) -> DirectionalReport:
    """Score forward/reverse fact pairs and measure their agreement.

    ``scorer`` maps a text to a score (mean log-probability); when cfg
    is given the scorer is called as scorer(text, cfg). Consistency per
    pair is min/max of the geometric-mean token probabilities
    exp(score), which lies in (0, 1] by construction.
    """
    pair_list = list(pairs)
    if len(pair_list) < 2:
        raise InsufficientData(f"need >= 2 pairs, got {len(pair_list)}")
    score_of = (lambda text: scorer(text, cfg)) if cfg is not None else scorer
    fwd_scores = []
    rev_scores = []
    consistencies = []
    for forward, reverse in pair_list:
        f = float(score_of(forward))
        r = float(score_of(reverse))
        gf = math.exp(f)
        gr = math.exp(r)
        consistencies.append(min(gf, gr) / max(gf, gr))
        fwd_scores.append(f)
        rev_scores.append(r)
    cons = np.asarray(consistencies)
    try:
        rho = spearman_rho(fwd_scores, rev_scores)
        defined = True
    except AllTied:
        rho = float("nan")
        defined = False
    return DirectionalReport(
        mean_consistency=float(cons.mean()),
        std_consistency=float(cons.std(ddof=0)),
        rank_correlation=rho,
        pair_count=len(pair_list),
        rank_correlation_defined=defined,
        consistencies=tuple(consistencies),
    )


def make_fluent_irrelevant(records, seed: int = 0) -> list[tuple[str, str]]:
    """Derange candidates across records; sources stay in place.

    Sampling rejects permutations with fixed points until a derangement
    appears, which is uniform over derangements and deterministic given
    the seed. Every candidate therefore moves to a different source.
    """
    rec_list = [(source, candidate) for source, candidate in records]
    n = len(rec_list)
    if n < 2:
        raise TooFewRecords(f"derangement needs >= 2 records, got {n}")
    rng = random.Random(seed)
    perm = list(range(n))
    while any(perm[i] == i for i in range(n)):
        rng.shuffle(perm)
    return [(rec_list[i][0], rec_list[perm[i]][1]) for i in range(n)]


def _perturb_tokens(tokens: list[str], pcfg: PerturbationConfig, rng: random.Random) -> list[str]:
    out = list(tokens)
    # (i) adjacent swaps, non-overlapping left-to-right, not across punctuation
    i = 0
    while i + 1 < len(out):
        if out[i] in pcfg.punctuation_set or out[i + 1] in pcfg.punctuation_set:
            i += 1
            continue
        if rng.random() < pcfg.swap_rate:
            out[i], out[i + 1] = out[i + 1], out[i]
            i += 2
        else:
            i += 1
    # (ii) article/preposition substitution with a different member
    for j, token in enumerate(out):
        pool = None
        if token in pcfg.article_set:
            pool = pcfg.article_set
        elif token in pcfg.preposition_set:
            pool = pcfg.preposition_set
        if pool is None or len(pool) < 2:
            continue
        if rng.random() < pcfg.substitution_rate:
            others = [w for w in pool if w != token]
            out[j] = others[rng.randrange(len(others))]
    # (iii) in-place repetition
    repeated = []
    for token in out:
        repeated.append(token)
        if rng.random() < pcfg.repetition_rate:
            repeated.append(token)
    out = repeated
    # (iv) deletion, keeping at least one token
    kept = []
    remaining = len(out)
    for token in out:
        if remaining > 1 and rng.random() < pcfg.deletion_rate:
            remaining -= 1
            continue
        kept.append(token)
    return kept


def make_disfluent_relevant(records, pcfg: PerturbationConfig) -> list[tuple[str, str]]:
    """Apply seeded token-level perturbations to every candidate.

    Each record gets an independent stream derived from pcfg.seed and
    its index, so output is reproducible and insertion-order stable.
    """
    out = []
    for index, (source, candidate) in enumerate(records):
        tokens = candidate.split()
        if not tokens:
            raise EmptyCandidate(f"record {index} has an empty candidate")
        rng = random.Random(mix_seed(pcfg.seed, index))
        out.append((source, " ".join(_perturb_tokens(tokens, pcfg, rng))))
    return out


@dataclass(frozen=True)
class AdversarialReport:
    """Per-variant PMI-decomposition statistics with pairwise U-tests.

    ``values`` maps variant -> column -> per-record scores, ``stats``
    maps variant -> column -> (mean, std), and ``p_values`` maps
    (variant_a, variant_b, column) -> two-sided Mann-Whitney p.
    """

    values: dict = field(repr=False)
    stats: dict = field(default_factory=dict)
    p_values: dict = field(default_factory=dict)


def pmi_adversarial_report(
    denoiser,
    original,
    fluent_irrelevant,
    disfluent_relevant,
    cfg: EstimatorConfig,
) -> AdversarialReport:
    """Score all three dataset variants and compare their distributions.

    Every variant is a list of (source, candidate) texts over matched
    sources (same sources in the same order). Each record is scored
    with the paired PMI decomposition under the shared cfg.
    """
    datasets = {
        "original": list(original),
        "fluent_irrelevant": list(fluent_irrelevant),
        "disfluent_relevant": list(disfluent_relevant),
    }
    lengths = {name: len(ds) for name, ds in datasets.items()}
    if min(lengths.values()) == 0:
        raise MismatchedSources(f"all variants must be non-empty, got {lengths}")
    base_sources = [s for s, _ in datasets["original"]]
    for name, ds in datasets.items():
        if [s for s, _ in ds] != base_sources:
            raise MismatchedSources(f"variant {name} does not share the original sources")

    vocab = denoiser.vocab
    values: dict = {name: {col: [] for col in PMI_COLUMNS} for name in datasets}
    for name, ds in datasets.items():
        for source, candidate in ds:
            report = score_pmi(
                denoiser,
                tokenize(candidate, vocab),
                tokenize(source, vocab),
                cfg,
            )
            values[name]["conditional"].append(report.conditional)
            values[name]["marginal"].append(report.marginal)
            values[name]["pmi"].append(report.pmi)

    stats = {
        name: {
            col: (float(np.mean(vals)), float(np.std(vals, ddof=0)))
            for col, vals in cols.items()
        }
        for name, cols in values.items()
    }
    p_values = {}
    names = list(datasets)
    for a_idx in range(len(names)):
        for b_idx in range(a_idx + 1, len(names)):
            a, b = names[a_idx], names[b_idx]
            for col in PMI_COLUMNS:
                _, p = mann_whitney_u(values[a][col], values[b][col])
                p_values[(a, b, col)] = p
    return AdversarialReport(values=values, stats=stats, p_values=p_values)


DEFAULT_REVERSAL_TEMPLATES = (
    "authored",
    "painted",
    "composed",
    "directed",
    "founded",
    "designed",
    "discovered",
    "sculpted",
    "produced",
    "invented",
)

DEFAULT_AGENTS = (
    "daphne barrington",
    "orin maxwell",
    "lena hartfield",
    "casper aldine",
    "mira voss",
    "tobias renn",
    "greta solano",
    "felix marrow",
    "iris delacour",
    "hugo branwell",
    "selma northgate",
    "arlo fenwick",
    "nadia ostrov",
    "quentin ashby",
    "vera lindqvist",
    "otto meranti",
)

DEFAULT_PATIENTS = (
    "the crystal atlas",
    "the silent harbor",
    "the amber meridian",
    "the hollow orchard",
    "the winter manifesto",
    "the copper labyrinth",
    "the velvet equation",
    "the drifting archive",
    "the marble aviary",
    "the painted isotherm",
    "the broken almanac",
    "the lantern consortium",
    "the quiet ultimatum",
    "the gilded estuary",
    "the paper observatory",
    "the violet compendium",
)


def generate_reversal_pairs(
    templates=DEFAULT_REVERSAL_TEMPLATES,
    agents=DEFAULT_AGENTS,
    patients=DEFAULT_PATIENTS,
    n: int = 200,
    seed: int = 0,
) -> list[tuple[str, str]]:
    """Sample n distinct active/passive sentence pairs.

    Each pair instantiates "X <verb> Y" and "Y was <verb> by X" with a
    sampled verb and entity pair, so the two sides differ only by the
    passive function tokens. Deterministic given the seed.
    """
    templates = tuple(templates)
    agents = tuple(agents)
    patients = tuple(patients)
    if not templates:
        raise EmptyTemplates("need at least one verb template")
    if not agents or not patients:
        raise EmptyTemplates("need at least one agent and one patient")
    capacity = len(templates) * len(agents) * len(patients)
    if n > capacity:
        raise InsufficientData(f"cannot draw {n} distinct pairs from {capacity} combinations")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = random.Random(seed)
    seen = set()
    pairs = []
    while len(pairs) < n:
        combo = (
            rng.randrange(len(templates)),
            rng.randrange(len(agents)),
            rng.randrange(len(patients)),
        )
        if combo in seen:
            continue
        seen.add(combo)
        verb = templates[combo[0]]
        x = agents[combo[1]]
        y = patients[combo[2]]
        pairs.append((f"{x} {verb} {y}", f"{y} was {verb} by {x}"))
    return pairs
