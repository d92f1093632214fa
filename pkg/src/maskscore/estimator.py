"""Monte-Carlo score estimation and its exhaustive exact counterpart.

One estimate draws K mask patterns, allocated round-robin over a uniform
timestep grid, queries the denoiser for the true-token log-probabilities
at the masked positions, and averages the weighted per-sample sums:

* ``mlp`` weighting: each sample contributes the mean log-probability over
  its masked positions (1/|M|), giving an interpretable per-token score.
* ``elbo`` weighting: each sample contributes (1/t) times the sum, scaled
  once by 1/length, the likelihood-bound form.

Under both weightings the reported score equals the mean of the
per-timestep entries whenever the grid is sampled evenly, because the
length normalization is folded into the per-timestep values.

Per-sample seeds are derived by mixing the base seed with the sample
index, and results are reduced in sample-index order, so serial and
concurrent execution produce bit-identical reports.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .denoiser import Denoiser, DenoiserQuery
from .errors import (
    EmptyCandidate,
    MaskScoreError,
    SequenceTooLong,
    VocabMismatch,
)
from .masking import (
    STRATEGIES,
    TimestepGrid,
    TokenClassMap,
    eligible_positions,
    enumerate_patterns,
    mix_seed,
    sample_mask,
    timestep_grid,
)
from .textcore import TokenSequence

WEIGHTINGS = ("mlp", "elbo")


@dataclass(frozen=True)
class EstimatorConfig:
    """Sampling configuration: K samples over a T-point grid."""

    k: int = 20
    timesteps: int = 10
    weighting: str = "mlp"
    strategy: str = "random"
    alpha_bi: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.timesteps < 1:
            raise ValueError(f"timesteps must be >= 1, got {self.timesteps}")
        if self.weighting not in WEIGHTINGS:
            raise ValueError(f"unknown weighting: {self.weighting!r}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown masking strategy: {self.strategy!r}")
        if not 0.0 <= self.alpha_bi <= 1.0:
            raise ValueError(f"alpha_bi must be in [0, 1], got {self.alpha_bi}")


@dataclass(frozen=True)
class PositionStat:
    """Mean raw log-probability of a position when masked, and how often.

    ``times_masked`` is an integer sample count for Monte-Carlo runs and
    the expected masked count (total pattern probability mass across the
    grid) for exact evaluation.
    """

    mean_logprob: float
    times_masked: float


@dataclass(frozen=True)
class ScoreReport:
    """Score with its per-timestep breakdown and sampling metadata.

    ``sample_std`` is the ddof=1 standard deviation of the per-sample
    contributions (0 for exact evaluation), which makes standard-error
    bounds computable without re-running. ``config`` is None for exact
    reports; the grid lives in ``per_timestep`` keys either way.
    """

    score: float
    per_timestep: dict[float, float]
    samples_used: int
    weighting: str
    config: EstimatorConfig | None
    sample_std: float = 0.0
    per_position: dict[int, PositionStat] | None = None


def _wrap_sample_error(exc: MaskScoreError, sample_index: int) -> MaskScoreError:
    wrapped = type(exc)(f"sample {sample_index}: {exc}")
    wrapped.__cause__ = exc
    return wrapped


def _check_pair(candidate: TokenSequence, source: TokenSequence | None) -> None:
    if candidate.length < 1:
        raise EmptyCandidate("candidate must contain at least one token")
    if not candidate.is_clean:
        raise ValueError("candidate must be clean")
    if source is not None:
        if not source.is_clean:
            raise ValueError("source must be clean")
        if source.vocab.mask_id != candidate.vocab.mask_id:
            raise VocabMismatch("candidate and source use different vocabularies")


def estimate(
    denoiser: Denoiser,
    candidate: TokenSequence,
    source: TokenSequence | None,
    cfg: EstimatorConfig,
    class_map: TokenClassMap | None = None,
) -> ScoreReport:
    """Monte-Carlo score of ``candidate`` given optional ``source``.

    ``class_map`` is required for strategy-restricted masking (it comes
    from classify_tokens on the candidate). Deterministic given cfg.seed;
    backend errors propagate with the failing sample index attached.
    """
    _check_pair(candidate, source)
    grid = timestep_grid(cfg.timesteps)
    length = candidate.length
    # fail fast when a restricted strategy has nothing to mask
    eligible_positions(length, cfg.strategy, class_map)
    context_ids = source.ids if source is not None else ()
    mask_id = candidate.vocab.mask_id
    ids = candidate.ids

    patterns = []
    for k in range(cfg.k):
        t = grid.values[k % grid.count]
        patterns.append(
            sample_mask(length, t, cfg.strategy, class_map, mix_seed(cfg.seed, k))
        )

    def build_query(pattern) -> DenoiserQuery:
        corrupted = list(ids)
        targets = {}
        for pos in pattern.positions:
            corrupted[pos] = mask_id
            targets[pos] = ids[pos]
        return DenoiserQuery(
            context_ids=context_ids,
            corrupted_ids=tuple(corrupted),
            targets=targets,
            mask_id=mask_id,
        )

    workers = min(getattr(denoiser, "max_in_flight", 1), cfg.k)
    if workers > 1:
        queries = [build_query(p) for p in patterns]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = pool.map(denoiser.query, queries)
            responses = []
            for k in range(cfg.k):
                try:
                    responses.append(next(results))
                except MaskScoreError as exc:
                    raise _wrap_sample_error(exc, k) from exc
    else:
        responses = []
        for k, pattern in enumerate(patterns):
            try:
                responses.append(denoiser.query(build_query(pattern)))
            except MaskScoreError as exc:
                raise _wrap_sample_error(exc, k) from exc

    # Means are accumulated as running means: exact when every term is
    # identical, which is what makes the uniform-backend fixed point hold
    # with zero tolerance.
    contributions = []
    score = 0.0
    t_means = [0.0] * grid.count
    t_counts = [0] * grid.count
    pos_means: dict[int, float] = {}
    pos_counts: dict[int, int] = {}
    elbo_scale = 1.0 / length
    for k, (pattern, response) in enumerate(zip(patterns, responses)):
        grid_index = k % grid.count
        logprobs = response.logprobs
        if cfg.weighting == "mlp":
            value = 0.0
            for j, pos in enumerate(pattern.positions, start=1):
                lp = logprobs[pos]
                value += (lp - value) / j
                seen = pos_counts.get(pos, 0) + 1
                pos_means[pos] = pos_means.get(pos, 0.0) + (lp - pos_means.get(pos, 0.0)) / seen
                pos_counts[pos] = seen
        else:
            total = 0.0
            for pos in pattern.positions:
                lp = logprobs[pos]
                total += lp
                seen = pos_counts.get(pos, 0) + 1
                pos_means[pos] = pos_means.get(pos, 0.0) + (lp - pos_means.get(pos, 0.0)) / seen
                pos_counts[pos] = seen
            value = total / grid.values[grid_index] * elbo_scale
        contributions.append(value)
        score += (value - score) / (k + 1)
        count = t_counts[grid_index] + 1
        t_means[grid_index] += (value - t_means[grid_index]) / count
        t_counts[grid_index] = count

    if cfg.k >= 2:
        var = sum((c - score) ** 2 for c in contributions) / (cfg.k - 1)
        sample_std = math.sqrt(var)
    else:
        sample_std = 0.0
    if cfg.k % grid.count == 0:
        # equal per-timestep counts: reduce through the per-timestep means
        # so the score bit-matches a uniform-weight profile aggregation
        score = 0.0
        for i, mean in enumerate(t_means, start=1):
            score += (mean - score) / i
    per_timestep = {
        grid.values[i]: t_means[i] for i in range(grid.count) if t_counts[i] > 0
    }
    per_position = {
        pos: PositionStat(pos_means[pos], pos_counts[pos]) for pos in sorted(pos_means)
    }
    return ScoreReport(
        score=score,
        per_timestep=per_timestep,
        samples_used=cfg.k,
        weighting=cfg.weighting,
        config=cfg,
        sample_std=sample_std,
        per_position=per_position,
    )


def exact_estimate(
    denoiser: Denoiser,
    candidate: TokenSequence,
    source: TokenSequence | None,
    grid: TimestepGrid,
    weighting: str = "mlp",
) -> ScoreReport:
    """Exact expectation of the estimator by pattern enumeration.

    Evaluates every nonempty mask pattern once (responses are reused
    across grid points) and weights by the conditioned pattern
    probabilities, so it is the exact target of the Monte-Carlo estimate
    under strategy=random. Deterministic; no seed involved.
    """
    _check_pair(candidate, source)
    if weighting not in WEIGHTINGS:
        raise ValueError(f"unknown weighting: {weighting!r}")
    length = candidate.length
    if length > 20:
        raise SequenceTooLong(f"exact evaluation is limited to length 20, got {length}")
    context_ids = source.ids if source is not None else ()
    mask_id = candidate.vocab.mask_id
    ids = candidate.ids

    response_cache: dict[tuple[int, ...], dict[int, float]] = {}

    def logprobs_for(positions: tuple[int, ...]) -> dict[int, float]:
        cached = response_cache.get(positions)
        if cached is not None:
            return cached
        corrupted = list(ids)
        targets = {}
        for pos in positions:
            corrupted[pos] = mask_id
            targets[pos] = ids[pos]
        query = DenoiserQuery(
            context_ids=context_ids,
            corrupted_ids=tuple(corrupted),
            targets=targets,
            mask_id=mask_id,
        )
        logprobs = denoiser.query(query).logprobs
        response_cache[positions] = logprobs
        return logprobs

    # Probability-weighted running means keep constant inputs exact (see
    # the note in estimate) and fold the renormalization of enumeration
    # probabilities into the expectation.
    per_timestep: dict[float, float] = {}
    pos_means: dict[int, float] = {}
    pos_mass: dict[int, float] = {}
    elbo_scale = 1.0 / length
    for t in grid.values:
        mean_t = 0.0
        mass_t = 0.0
        for pattern, prob in enumerate_patterns(length, t):
            if prob == 0.0:
                # at t=1 every partial pattern has zero mass
                continue
            logprobs = logprobs_for(pattern.positions)
            total = 0.0
            pattern_mean = 0.0
            for j, pos in enumerate(pattern.positions, start=1):
                lp = logprobs[pos]
                total += lp
                pattern_mean += (lp - pattern_mean) / j
                mass = pos_mass.get(pos, 0.0) + prob
                pos_means[pos] = pos_means.get(pos, 0.0) + (
                    lp - pos_means.get(pos, 0.0)
                ) * (prob / mass)
                pos_mass[pos] = mass
            if weighting == "mlp":
                value = pattern_mean
            else:
                value = total / t * elbo_scale
            mass_t += prob
            mean_t += (value - mean_t) * (prob / mass_t)
        per_timestep[t] = mean_t

    score = 0.0
    for i, t in enumerate(grid.values, start=1):
        score += (per_timestep[t] - score) / i
    per_position = {
        pos: PositionStat(pos_means[pos], pos_mass[pos]) for pos in sorted(pos_means)
    }
    return ScoreReport(
        score=score,
        per_timestep=per_timestep,
        samples_used=len(response_cache) * grid.count,
        weighting=weighting,
        config=None,
        sample_std=0.0,
        per_position=per_position,
    )


def per_position_scores(
    denoiser: Denoiser,
    seq: TokenSequence,
    source: TokenSequence | None,
    cfg: EstimatorConfig,
    class_map: TokenClassMap | None = None,
) -> dict[int, float]:
    """Mean log-probability of each position over the samples masking it.

    Positions never masked across all K samples are absent from the map.
    """
    report = estimate(denoiser, seq, source, cfg, class_map)
    assert report.per_position is not None
    return {pos: stat.mean_logprob for pos, stat in report.per_position.items()}
