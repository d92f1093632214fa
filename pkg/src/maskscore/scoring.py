"""Scoring configurations, PMI decomposition, profiles, weight learning.

The four configurations differ only in which text is masked and which is
fully visible: marginal masks the candidate alone, conditional masks the
candidate with the source visible, reverse masks the source with the
candidate visible, and bidirectional mixes conditional and reverse with
a convex weight alpha. PMI is the paired difference conditional minus
marginal computed under one seed so both terms see identical masks.

A quality profile splits a score into its per-timestep components; a
weighted profile aggregate recovers a scalar. ``learn_weights`` fits the
weights to human judgments by maximizing Spearman correlation on the
probability simplex, with k-fold held-out diagnostics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch, LengthMismatch, TooFewSamples
from .estimator import EstimatorConfig, ScoreReport, estimate
from .masking import TimestepGrid, TokenClassMap, mix_seed, timestep_grid
from .metaeval import average_ranks
from .textcore import TokenSequence

SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class QualityProfile:
    """Per-timestep scores with aggregation weights on the simplex."""

    timesteps: TimestepGrid
    scores: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        if not len(self.timesteps.values) == len(self.scores) == len(self.weights):
            raise LengthMismatch(
                f"grid/scores/weights lengths differ: "
                f"{len(self.timesteps.values)}/{len(self.scores)}/{len(self.weights)}"
            )
        if any(w < 0.0 for w in self.weights):
            raise ValueError("weights must be nonnegative")
        total = sum(self.weights)
        if abs(total - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"weights must sum to 1, got {total}")


@dataclass(frozen=True)
class PMIReport:
    """Conditional and marginal scores with their paired difference."""

    conditional: float
    marginal: float
    pmi: float

    def __post_init__(self) -> None:
        if self.pmi != self.conditional - self.marginal:
            raise ValueError("pmi must equal conditional - marginal exactly")


def score_marginal(
    denoiser,
    candidate: TokenSequence,
    cfg: EstimatorConfig,
    class_map: TokenClassMap | None = None,
) -> ScoreReport:
    """Intrinsic candidate quality: mask the candidate, no context."""
    return estimate(denoiser, candidate, None, cfg, class_map)


def score_conditional(
    denoiser,
    candidate: TokenSequence,
    source: TokenSequence | None,
    cfg: EstimatorConfig,
    class_map: TokenClassMap | None = None,
) -> ScoreReport:
    """Candidate quality with the source fully visible as context."""
    return estimate(denoiser, candidate, source, cfg, class_map)


def score_reverse(
    denoiser,
    source: TokenSequence,
    candidate: TokenSequence | None,
    cfg: EstimatorConfig,
    class_map: TokenClassMap | None = None,
) -> ScoreReport:
    """Source recoverability: mask the source, candidate visible."""
    return estimate(denoiser, source, candidate, cfg, class_map)


def score_bidirectional(
    denoiser,
    candidate: TokenSequence,
    source: TokenSequence,
    cfg: EstimatorConfig,
    candidate_class_map: TokenClassMap | None = None,
    source_class_map: TokenClassMap | None = None,
) -> ScoreReport:
    """Convex mix alpha*conditional + (1-alpha)*reverse.

    The endpoints return the underlying report unchanged, so alpha=1
    equals conditional and alpha=0 equals reverse bit-for-bit. Both
    directions run under the same cfg (and therefore the same seed).
    """
    if source is None:
        raise ValueError("bidirectional scoring requires a source")
    alpha = cfg.alpha_bi
    if alpha == 1.0:
        return score_conditional(denoiser, candidate, source, cfg, candidate_class_map)
    if alpha == 0.0:
        return score_reverse(denoiser, source, candidate, cfg, source_class_map)
    cond = score_conditional(denoiser, candidate, source, cfg, candidate_class_map)
    rev = score_reverse(denoiser, source, candidate, cfg, source_class_map)
    beta = 1.0 - alpha
    per_timestep = {
        t: alpha * cond.per_timestep[t] + beta * rev.per_timestep[t]
        for t in cond.per_timestep
    }
    # directions are sampled independently, so variances add quadratically
    std = math.sqrt((alpha * cond.sample_std) ** 2 + (beta * rev.sample_std) ** 2)
    return ScoreReport(
        score=alpha * cond.score + beta * rev.score,
        per_timestep=per_timestep,
        samples_used=cond.samples_used + rev.samples_used,
        weighting=cfg.weighting,
        config=cfg,
        sample_std=std,
        per_position=None,
    )


def score_pmi(
    denoiser,
    candidate: TokenSequence,
    source: TokenSequence,
    cfg: EstimatorConfig,
    class_map: TokenClassMap | None = None,
) -> PMIReport:
    """Information the source contributes: conditional minus marginal.

    Both terms run under the same cfg, so they draw identical mask
    patterns and the difference is a pure paired subtraction.
    """
    cond = score_conditional(denoiser, candidate, source, cfg, class_map)
    mar = score_marginal(denoiser, candidate, cfg, class_map)
    return PMIReport(
        conditional=cond.score,
        marginal=mar.score,
        pmi=cond.score - mar.score,
    )


def uniform_weights(count: int) -> tuple[float, ...]:
    """The uniform point of the (count-1)-simplex."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    return (1.0 / count,) * count


def quality_profile(
    denoiser,
    candidate: TokenSequence,
    source: TokenSequence | None,
    cfg: EstimatorConfig,
    class_map: TokenClassMap | None = None,
) -> QualityProfile:
    """Per-timestep score vector with uniform initial weights."""
    grid = timestep_grid(cfg.timesteps)
    report = estimate(denoiser, candidate, source, cfg, class_map)
    scores = tuple(report.per_timestep[t] for t in grid.values)
    return QualityProfile(
        timesteps=grid,
        scores=scores,
        weights=uniform_weights(grid.count),
    )


def aggregate_profile(profile: QualityProfile) -> float:
    """Weighted profile score sum_k w_k * S(t_k).

    Computed as a running weighted mean. With exactly uniform weights
    this reduces to the plain running mean of the scores, bit-matching
    the estimator's score whenever per-timestep sample counts are equal.
    """
    weights = profile.weights
    if len(set(weights)) == 1:
        mean = 0.0
        for i, s in enumerate(profile.scores, start=1):
            mean += (s - mean) / i
        return mean
    mean = 0.0
    cum = 0.0
    for s, w in zip(profile.scores, weights):
        if w == 0.0:
            continue
        cum += w
        mean += (s - mean) * (w / cum)
    return mean


@dataclass(frozen=True)
class WeightLearningResult:
    """Learned profile weights with cross-validation diagnostics.

    ``weights`` is the final vector refit on all data. ``fold_rho`` and
    ``fold_weights`` hold, per fold, the held-out Spearman correlation
    of the weights fit on that fold's training split; recomputing the
    aggregation from fold_weights reproduces fold_rho to 1e-12. A fold
    whose objective is degenerate (all-tied ranks) records rho 0.0.
    """

    grid: TimestepGrid
    weights: tuple[float, ...]
    fold_rho: tuple[float, ...]
    fold_weights: tuple[tuple[float, ...], ...]

    def to_json(self) -> str:
        doc = {
            "grid": list(self.grid.values),
            "weights": list(self.weights),
            "fold_rho": list(self.fold_rho),
        }
        return json.dumps(doc, sort_keys=True)


def _rho_objective(scores: np.ndarray, dy: np.ndarray, ssy: float) -> float:
    """Spearman rho against pre-ranked targets; 0.0 when degenerate."""
    rx = average_ranks(scores)
    dx = rx - rx.mean()
    ssx = float(dx @ dx)
    if ssx == 0.0 or ssy == 0.0:
        return 0.0
    r = float(dx @ dy) / math.sqrt(ssx * ssy)
    return max(-1.0, min(1.0, r))


def _rank_parts(y: np.ndarray) -> tuple[np.ndarray, float]:
    ry = average_ranks(y)
    dy = ry - ry.mean()
    return dy, float(dy @ dy)


# line-search resolution for coordinate moves along vertex directions
_GAMMA_POINTS = 17
_MOVE_TOL = 1e-6
_SELECT_TOL = 1e-12
_RESTARTS = 50


def _coordinate_ascent(w0: np.ndarray, objective) -> tuple[np.ndarray, float]:
    """Greedy simplex ascent along vertex directions from w0."""
    dim = w0.size
    basis = np.eye(dim)
    w = w0.copy()
    best = objective(w)
    for _ in range(100):
        improved = False
        for k in range(dim):
            if w[k] >= 1.0:
                continue
            lo = -w[k] / (1.0 - w[k])
            candidate = None
            candidate_obj = best
            for gamma in np.linspace(lo, 1.0, _GAMMA_POINTS):
                if gamma == 0.0:
                    continue
                trial = w + gamma * (basis[k] - w)
                np.clip(trial, 0.0, None, out=trial)
                trial /= trial.sum()
                obj = objective(trial)
                if obj > candidate_obj + _MOVE_TOL:
                    candidate = trial
                    candidate_obj = obj
            if candidate is not None:
                w = candidate
                best = candidate_obj
                improved = True
        if not improved:
            break
    return w, best


def _fit_weights(x: np.ndarray, y: np.ndarray, seed: int) -> np.ndarray:
    """Maximize Spearman rho of x @ w against y over the simplex.

    Candidates are evaluated in a fixed order (uniform, each vertex,
    ascent from each of those, then seeded Dirichlet restarts) and a
    later candidate replaces the incumbent only on strict improvement,
    so exact ties resolve toward the uniform prior.
    """
    dim = x.shape[1]
    dy, ssy = _rank_parts(y)

    def objective(w: np.ndarray) -> float:
        return _rho_objective(x @ w, dy, ssy)

    starts = [np.full(dim, 1.0 / dim)]
    starts.extend(np.eye(dim)[k] for k in range(dim))

    candidates = list(starts)
    candidates.extend(_coordinate_ascent(w, objective)[0] for w in starts)
    for restart in range(_RESTARTS):
        rng = np.random.default_rng(mix_seed(seed, 1000 + restart))
        w0 = rng.dirichlet(np.ones(dim))
        candidates.append(_coordinate_ascent(w0, objective)[0])

    best = candidates[0]
    best_obj = objective(best)
    for w in candidates[1:]:
        obj = objective(w)
        if obj > best_obj + _SELECT_TOL:
            best = w
            best_obj = obj
    return best / best.sum()


def learn_weights(
    profiles: list[QualityProfile],
    human_scores: list[float],
    folds: int = 5,
    seed: int = 0,
) -> WeightLearningResult:
    """Fit profile weights to human judgments with k-fold diagnostics.

    Each fold fits weights on its training split and records the
    held-out Spearman rho; the returned weights are refit on all data.
    Fold membership is a seeded permutation split into contiguous
    blocks, so results are reproducible.
    """
    if folds < 2:
        raise ValueError(f"folds must be >= 2, got {folds}")
    if len(profiles) != len(human_scores):
        raise LengthMismatch(
            f"{len(profiles)} profiles vs {len(human_scores)} human scores"
        )
    if len(profiles) < 2 * folds:
        raise TooFewSamples(
            f"need at least {2 * folds} samples for {folds} folds, "
            f"got {len(profiles)}"
        )
    grid = profiles[0].timesteps
    for p in profiles[1:]:
        if p.timesteps.values != grid.values:
            raise GridMismatch("profiles use different timestep grids")

    x = np.array([p.scores for p in profiles], dtype=float)
    y = np.asarray(human_scores, dtype=float)
    if not np.isfinite(y).all():
        raise ValueError("human scores must be finite")

    rng = np.random.default_rng(mix_seed(seed, 0))
    order = rng.permutation(len(profiles))
    blocks = np.array_split(order, folds)

    fold_rho = []
    fold_weights = []
    for held in blocks:
        train = np.setdiff1d(order, held, assume_unique=True)
        w = _fit_weights(x[train], y[train], seed)
        dy, ssy = _rank_parts(y[held])
        fold_rho.append(_rho_objective(x[held] @ w, dy, ssy))
        fold_weights.append(tuple(float(v) for v in w))

    final = _fit_weights(x, y, seed)
    return WeightLearningResult(
        grid=grid,
        weights=tuple(float(v) for v in final),
        fold_rho=tuple(fold_rho),
        fold_weights=tuple(fold_weights),
    )
