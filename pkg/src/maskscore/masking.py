"""Forward corruption: mask sampling, timestep grids, pattern enumeration.

The corruption process masks each position of a clean sequence
independently with probability t. Because the estimator's per-pattern
weights are undefined for an empty pattern, all samplers and the
exhaustive enumerator work on the distribution conditioned on at least
one masked position; ``sample_mask`` draws from that conditional law
exactly (size from the nonempty-conditioned binomial, then a uniform
subset of that size), so Monte-Carlo runs and the enumeration oracle
target the same expectation.
"""

from __future__ import annotations

import functools
import math
import random
from dataclasses import dataclass

from .errors import (
    LengthMismatch,
    MissingClassMap,
    NoEligiblePositions,
    SequenceTooLong,
    ZeroTimesteps,
)
from .textcore import TokenSequence, Vocabulary

STRATEGIES = ("random", "content", "entity")
TOKEN_CLASSES = ("function", "content", "entity")

_ENUMERATION_LIMIT = 20

_MASK64 = (1 << 64) - 1


def mix_seed(base_seed: int, index: int) -> int:
    """Mix a base seed with a sample index (splitmix-style finalizer).

    Parallel and serial executions derive identical per-sample seeds from
    this, which is what makes reductions order-independent.
    """
    z = (base_seed + (index + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class MaskPattern:
    """Sorted masked positions for one corruption sample."""

    positions: tuple[int, ...]
    source_len: int

    def __post_init__(self) -> None:
        prev = -1
        for pos in self.positions:
            if not 0 <= pos < self.source_len:
                raise ValueError(f"position {pos} outside 0..{self.source_len - 1}")
            if pos <= prev:
                raise ValueError("positions must be sorted and distinct")
            prev = pos

    def __len__(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class TimestepGrid:
    """Uniformly spaced masking rates k/T for k = 1..T; always ends at 1."""

    values: tuple[float, ...]
    count: int


@dataclass(frozen=True)
class TokenClassMap:
    """Per-position token class label: function, content, or entity."""

    classes: tuple[str, ...]

    def __post_init__(self) -> None:
        for label in self.classes:
            if label not in TOKEN_CLASSES:
                raise ValueError(f"unknown token class: {label!r}")


def timestep_grid(T: int) -> TimestepGrid:
    if T < 1:
        raise ZeroTimesteps(f"need at least 1 timestep, got {T}")
    return TimestepGrid(values=tuple(k / T for k in range(1, T + 1)), count=T)


def eligible_positions(
    seq_len: int,
    strategy: str,
    class_map: TokenClassMap | None,
) -> list[int]:
    """Positions a strategy may mask; entities count as content."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown masking strategy: {strategy!r}")
    if strategy == "random":
        return list(range(seq_len))
    if class_map is None:
        raise MissingClassMap(f"strategy {strategy!r} requires a token class map")
    if len(class_map.classes) != seq_len:
        raise LengthMismatch(
            f"class map covers {len(class_map.classes)} positions, sequence has {seq_len}"
        )
    if strategy == "content":
        wanted = ("content", "entity")
    else:
        wanted = ("entity",)
    found = [i for i, label in enumerate(class_map.classes) if label in wanted]
    if not found:
        raise NoEligiblePositions(f"no {strategy!r}-eligible position in sequence")
    return found


@functools.lru_cache(maxsize=4096)
def _conditional_size_cdf(n: int, t: float) -> tuple[float, ...]:
    # P(|M| = m) for m = 1..n under independent masking conditioned on a
    # nonempty pattern, as a cumulative distribution. Log-space to stay
    # stable for long sequences and extreme rates.
    if t >= 1.0:
        return tuple([0.0] * (n - 1) + [1.0])
    log_t = math.log(t)
    log_q = math.log1p(-t)
    logs = [
        math.lgamma(n + 1) - math.lgamma(m + 1) - math.lgamma(n - m + 1)
        + m * log_t + (n - m) * log_q
        for m in range(1, n + 1)
    ]
    top = max(logs)
    weights = [math.exp(lw - top) for lw in logs]
    total = sum(weights)
    cdf = []
    acc = 0.0
    for w in weights:
        acc += w / total
        cdf.append(acc)
    cdf[-1] = 1.0
    return tuple(cdf)


def sample_mask(
    seq_len: int,
    t: float,
    strategy: str = "random",
    class_map: TokenClassMap | None = None,
    rng_seed: int = 0,
) -> MaskPattern:
    """Draw a nonempty mask pattern at rate ``t``; deterministic given seed.

    Eligible positions depend on the strategy; each is masked with
    probability t, conditioned on at least one mask (see module docstring).
    """
    if seq_len < 1:
        raise ValueError(f"sequence length must be >= 1, got {seq_len}")
    if not 0.0 < t <= 1.0:
        raise ValueError(f"masking rate must be in (0, 1], got {t}")
    eligible = eligible_positions(seq_len, strategy, class_map)
    rng = random.Random(rng_seed)
    cdf = _conditional_size_cdf(len(eligible), t)
    u = rng.random()
    size = 1 + next(i for i, c in enumerate(cdf) if u <= c)
    chosen = rng.sample(eligible, size)
    return MaskPattern(positions=tuple(sorted(chosen)), source_len=seq_len)


def apply_mask(seq: TokenSequence, pattern: MaskPattern) -> TokenSequence:
    """Copy of ``seq`` with mask ids at the pattern's positions."""
    if pattern.source_len != seq.length:
        raise LengthMismatch(
            f"pattern is for length {pattern.source_len}, sequence has {seq.length}"
        )
    if not seq.is_clean:
        raise ValueError("can only mask a clean sequence")
    ids = list(seq.ids)
    mask_id = seq.vocab.mask_id
    for pos in pattern.positions:
        ids[pos] = mask_id
    return TokenSequence(ids=tuple(ids), vocab=seq.vocab)


def enumerate_patterns(seq_len: int, t: float) -> list[tuple[MaskPattern, float]]:
    """All nonempty patterns with their conditioned probabilities.

    Probability of a pattern with m masks is t^m (1-t)^(L-m), renormalized
    over the 2^L - 1 nonempty patterns; the returned probabilities sum to 1
    within 1e-12. Guarded to L <= 20.
    """
    if seq_len < 1:
        raise ValueError(f"sequence length must be >= 1, got {seq_len}")
    if seq_len > _ENUMERATION_LIMIT:
        raise SequenceTooLong(
            f"enumeration is limited to length {_ENUMERATION_LIMIT}, got {seq_len}"
        )
    if not 0.0 < t <= 1.0:
        raise ValueError(f"masking rate must be in (0, 1], got {t}")
    masks = []
    weights = []
    for bits in range(1, 1 << seq_len):
        positions = tuple(i for i in range(seq_len) if bits >> i & 1)
        m = len(positions)
        weights.append(t**m * (1.0 - t) ** (seq_len - m))
        masks.append(positions)
    total = sum(weights)
    return [
        (MaskPattern(positions=positions, source_len=seq_len), w / total)
        for positions, w in zip(masks, weights)
    ]


def classify_tokens(
    seq: TokenSequence,
    vocab: Vocabulary | None = None,
    stopwords: frozenset[str] | set[str] = frozenset(),
) -> TokenClassMap:
    """Label each position: stopwords are function tokens, capitalized
    non-stopwords are entities, everything else is content."""
    vocab = vocab if vocab is not None else seq.vocab
    if not seq.is_clean:
        raise ValueError("can only classify a clean sequence")
    labels = []
    for token_id in seq.ids:
        token = vocab.token_of(token_id)
        if token in stopwords:
            labels.append("function")
        elif token[:1].isupper():
            labels.append("entity")
        else:
            labels.append("content")
    return TokenClassMap(classes=tuple(labels))


def load_stopwords(path: str) -> frozenset[str]:
    """One token per line, UTF-8, LF; blank lines ignored."""
    with open(path, encoding="utf-8") as handle:
        return frozenset(line.strip() for line in handle if line.strip())
