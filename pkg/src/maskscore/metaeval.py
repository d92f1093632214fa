"""Correlation statistics, significance tests, and bootstrap intervals.

Everything here is implemented directly on numpy arrays so the package
carries no statistics dependency. The pieces fit together tightly:
``spearman_rho`` is literally Pearson correlation applied to the output
of ``average_ranks``, the Williams test converts its t statistic to a
p-value through a continued-fraction incomplete-beta evaluation, and
``bootstrap_ci`` resamples score pairs with per-resample derived seeds
so the interval is reproducible and independent of execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AllTied, DegenerateInput, LengthMismatch
from .masking import mix_seed

STATISTICS = ("kendall_tau_b", "spearman_rho", "pearson_r", "pairwise_accuracy")


@dataclass(frozen=True)
class CorrelationReport:
    """One correlation statistic with optional interval and p-value."""

    statistic: str
    value: float
    n: int
    ci_low: float | None = None
    ci_high: float | None = None
    p_value: float | None = None

    def __post_init__(self) -> None:
        if self.statistic not in STATISTICS:
            raise ValueError(f"unknown statistic {self.statistic!r}")
        lo = 0.0 if self.statistic == "pairwise_accuracy" else -1.0
        if not lo <= self.value <= 1.0:
            raise ValueError(f"{self.statistic} value {self.value} out of range")
        if (self.ci_low is None) != (self.ci_high is None):
            raise ValueError("ci_low and ci_high must be given together")
        if self.ci_low is not None and not self.ci_low <= self.value <= self.ci_high:
            raise ValueError("confidence interval must bracket the value")
        if self.p_value is not None and not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p_value {self.p_value} out of range")


def _paired_arrays(x, y) -> tuple[np.ndarray, np.ndarray]:
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float)
    if xs.ndim != 1 or ys.ndim != 1:
        raise ValueError("inputs must be one-dimensional")
    if xs.shape != ys.shape:
        raise LengthMismatch(f"length mismatch: {xs.size} vs {ys.size}")
    if xs.size < 2:
        raise LengthMismatch("need at least 2 paired observations")
    if not (np.isfinite(xs).all() and np.isfinite(ys).all()):
        raise ValueError("inputs must be finite")
    return xs, ys


def average_ranks(values) -> np.ndarray:
    """1-based ranks; tied values share the mean of their positions."""
    vals = np.asarray(values, dtype=float)
    order = np.argsort(vals, kind="stable")
    sorted_vals = vals[order]
    # group ties in sorted order; a group at 0-based positions s..s+c-1
    # shares the rank mean s + (c + 1) / 2
    new_group = np.empty(vals.size, dtype=bool)
    new_group[0] = True
    new_group[1:] = sorted_vals[1:] != sorted_vals[:-1]
    group = np.cumsum(new_group) - 1
    counts = np.bincount(group)
    starts = np.cumsum(counts) - counts
    ranks = np.empty(vals.size, dtype=float)
    ranks[order] = (starts + (counts + 1) / 2.0)[group]
    return ranks


def pearson_r(x, y) -> float:
    """Pearson product-moment correlation, clamped to [-1, 1]."""
    xs, ys = _paired_arrays(x, y)
    # exact all-equal check: a rounded mean can leave an ulp of fake variance
    if bool(np.all(xs == xs[0])) or bool(np.all(ys == ys[0])):
        raise AllTied("correlation undefined: a side is constant")
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    ssx = float(dx @ dx)
    ssy = float(dy @ dy)
    if ssx == 0.0 or ssy == 0.0:
        raise AllTied("correlation undefined: a side has zero variance")
    r = float(dx @ dy) / math.sqrt(ssx * ssy)
    return max(-1.0, min(1.0, r))


def spearman_rho(x, y) -> float:
    """Pearson correlation of average ranks (ties get mean rank)."""
    xs, ys = _paired_arrays(x, y)
    return pearson_r(average_ranks(xs), average_ranks(ys))


def kendall_tau(x, y) -> float:
    """Kendall's tau-b, the tie-corrected variant."""
    xs, ys = _paired_arrays(x, y)
    # sign matrices over all ordered pairs; an O(n^2) pass is plenty here
    sx = np.sign(xs[:, None] - xs[None, :])
    sy = np.sign(ys[:, None] - ys[None, :])
    upper = np.triu_indices(xs.size, k=1)
    prod = sx[upper] * sy[upper]
    concordant = int(np.count_nonzero(prod > 0))
    discordant = int(np.count_nonzero(prod < 0))
    pairs = xs.size * (xs.size - 1) // 2
    ties_x = pairs - int(np.count_nonzero(sx[upper]))
    ties_y = pairs - int(np.count_nonzero(sy[upper]))
    denom = math.sqrt(float(pairs - ties_x) * float(pairs - ties_y))
    if denom == 0.0:
        raise AllTied("tau-b undefined: all values tied on one side")
    tau = (concordant - discordant) / denom
    return max(-1.0, min(1.0, tau))


def pairwise_accuracy(scores, labels) -> float:
    """Fraction of (better, worse) index pairs ranked correctly; ties 0.5."""
    vals = np.asarray(scores, dtype=float)
    if not labels:
        raise LengthMismatch("need at least one labeled pair")
    hits = 0.0
    for better, worse in labels:
        a = vals[better]
        b = vals[worse]
        if a > b:
            hits += 1.0
        elif a == b:
            hits += 0.5
    return hits / len(labels)


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta, modified Lentz scheme."""
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 400):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-10:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def incomplete_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) to 1e-10 relative tolerance."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    # the continued fraction converges fast only on one side of the mean
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf(t: float, df: float) -> float:
    """One-sided survival P(T > t) for Student's t with df > 0."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if t == 0.0:
        return 0.5
    x = df / (df + t * t)
    tail = 0.5 * incomplete_beta(df / 2.0, 0.5, x)
    return tail if t > 0 else 1.0 - tail


def williams_test(
    r12: float,
    r13: float,
    r23: float,
    n: int,
    alternative: str = "two-sided",
) -> tuple[float, float]:
    """Test whether two correlations sharing variable 1 differ.

    ``r12`` and ``r13`` are the competing correlations against the shared
    variable, ``r23`` is the correlation between the two competitors, and
    ``n`` is the sample size. Returns the Williams t statistic with n-3
    degrees of freedom and its p-value.
    """
    if alternative not in ("two-sided", "greater", "less"):
        raise ValueError(f"unknown alternative {alternative!r}")
    if n < 4:
        raise DegenerateInput(f"need n >= 4 observations, got {n}")
    for name, r in (("r12", r12), ("r13", r13), ("r23", r23)):
        if not -1.0 < r < 1.0:
            raise DegenerateInput(f"{name}={r} must lie strictly inside (-1, 1)")
    det = 1.0 - r12 * r12 - r13 * r13 - r23 * r23 + 2.0 * r12 * r13 * r23
    if det <= 0.0:
        raise DegenerateInput(f"correlation matrix determinant {det} is not positive")
    r_bar = (r12 + r13) / 2.0
    denom = 2.0 * ((n - 1) / (n - 3)) * det + r_bar * r_bar * (1.0 - r23) ** 3
    t = (r12 - r13) * math.sqrt((n - 1) * (1.0 + r23) / denom)
    if alternative == "two-sided":
        p = 2.0 * student_t_sf(abs(t), n - 3)
    elif alternative == "greater":
        p = student_t_sf(t, n - 3)
    else:
        p = 1.0 - student_t_sf(t, n - 3)
    return t, min(1.0, p)


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def mann_whitney_u(a, b) -> tuple[float, float]:
    """Mann-Whitney U for sample ``a`` with a two-sided p-value.

    Exact p by total enumeration when the pooled size is at most 12,
    tie-corrected normal approximation with continuity correction
    otherwise.
    """
    xs = np.asarray(a, dtype=float)
    ys = np.asarray(b, dtype=float)
    if xs.size == 0 or ys.size == 0:
        raise LengthMismatch("both samples must be non-empty")
    u_obs = _u_statistic(xs, ys)
    n_total = xs.size + ys.size
    if n_total <= 12:
        p = _exact_u_pvalue(np.concatenate([xs, ys]), xs.size, u_obs)
    else:
        p = _normal_u_pvalue(xs, ys, u_obs)
    return u_obs, p


def _u_statistic(xs: np.ndarray, ys: np.ndarray) -> float:
    diff = xs[:, None] - ys[None, :]
    return float(np.count_nonzero(diff > 0) + 0.5 * np.count_nonzero(diff == 0))


def _exact_u_pvalue(pooled: np.ndarray, n_a: int, u_obs: float) -> float:
    from itertools import combinations

    mean_u = n_a * (pooled.size - n_a) / 2.0
    gap = abs(u_obs - mean_u)
    hits = 0
    total = 0
    for picked in combinations(range(pooled.size), n_a):
        mask = np.zeros(pooled.size, dtype=bool)
        mask[list(picked)] = True
        u = _u_statistic(pooled[mask], pooled[~mask])
        # two-sided: arrangements at least as extreme around the mean
        if abs(u - mean_u) >= gap - 1e-12:
            hits += 1
        total += 1
    return hits / total


def _normal_u_pvalue(xs: np.ndarray, ys: np.ndarray, u_obs: float) -> float:
    n_a, n_b = xs.size, ys.size
    n = n_a + n_b
    mean_u = n_a * n_b / 2.0
    pooled = np.concatenate([xs, ys])
    _, counts = np.unique(pooled, return_counts=True)
    tie_term = float(((counts**3) - counts).sum()) / (n * (n - 1))
    var_u = n_a * n_b / 12.0 * ((n + 1) - tie_term)
    if var_u <= 0.0:
        return 1.0  # every pooled value identical
    # continuity correction pulls the statistic half a step toward the mean
    z = (abs(u_obs - mean_u) - 0.5) / math.sqrt(var_u)
    if z < 0.0:
        z = 0.0
    return min(1.0, 2.0 * _normal_sf(z))


def bootstrap_ci(
    paired_samples,
    statistic,
    resamples: int = 1000,
    level: float = 0.95,
    seed: int = 0,
) -> tuple[float, float]:
    """Percentile bootstrap interval for a paired correlation statistic.

    Resampling happens at the pair level with replacement. A resample on
    which the statistic is undefined (fewer than 2 distinct values on a
    side) is skipped and redrawn; after 10x the requested resamples the
    data is declared degenerate.
    """
    pairs = list(paired_samples)
    if len(pairs) < 2:
        raise LengthMismatch("need at least 2 paired samples")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    metric = np.asarray([p[0] for p in pairs], dtype=float)
    human = np.asarray([p[1] for p in pairs], dtype=float)
    n = metric.size
    values = []
    attempt = 0
    cap = 10 * resamples
    while len(values) < resamples:
        if attempt >= cap:
            raise DegenerateInput(
                f"{cap} resample attempts produced only {len(values)} "
                "defined statistics"
            )
        rng = np.random.default_rng(mix_seed(seed, attempt))
        attempt += 1
        idx = rng.integers(0, n, size=n)
        try:
            values.append(statistic(metric[idx], human[idx]))
        except AllTied:
            continue
    lo, hi = np.quantile(np.asarray(values), [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi)


def system_level_aggregate(records) -> list[tuple[str, float, float]]:
    """Per-system mean metric and human scores, ordered by system id."""
    sums: dict[str, list[float]] = {}
    for system_id, metric_score, human_score in records:
        entry = sums.setdefault(str(system_id), [0.0, 0.0, 0])
        entry[0] += float(metric_score)
        entry[1] += float(human_score)
        entry[2] += 1
    return [
        (sid, entry[0] / entry[2], entry[1] / entry[2])
        for sid, entry in sorted(sums.items())
    ]
