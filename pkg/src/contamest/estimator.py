"""Statistical layer: the contamination test, the certified lower bound on
the contaminated fraction, the two-sample variant, and the deterministic
sweep experiment.

The decision threshold comes from large-deviations bounds on empirical
distributions: a dataset of ``p`` samples over ``n`` categories whose
empirical distribution sits at KL distance at least

    gamma(p) = (1/p) log(1/eps) + (2n/p) log(p+1)

from every model distribution is contaminated at significance ``eps``.
Replacing ``p`` by the effective sample size ``p(1-alpha)`` and scanning
``alpha`` yields the largest discard fraction that still fails the test,
which lower-bounds the true contaminated fraction.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .distributions import (
    EmpiricalCounts,
    KlBall,
    Mixture,
    ModelSet,
    Singleton,
    empirical,
    klball_radius,
    separation_distance,
    uniform,
)
from .solver import DEFAULT_TOLERANCE, solve, solve_mixture

DEFAULT_BISECT_TOL = 2.0**-28


@dataclass(frozen=True)
class GofThreshold:
    """Goodness-of-fit decision threshold at a given effective sample size."""

    epsilon: float
    effective_p: float
    n: int
    value: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError("epsilon must be in (0, 1)")
        if not (self.effective_p > 0):
            raise ValueError("effective_p must be positive")
        value = (
            math.log(1.0 / self.epsilon)
            + 2.0 * self.n * math.log(self.effective_p + 1.0)
        ) / self.effective_p
        object.__setattr__(self, "value", value)


def gof_threshold(p_eff: float, n: int, epsilon: float) -> float:
    """(1/p_eff) log(1/epsilon) + (2n/p_eff) log(p_eff + 1)."""
    return GofThreshold(epsilon=epsilon, effective_p=float(p_eff), n=int(n)).value


@dataclass(frozen=True)
class EstimateResult:
    """Certified contamination bound for one dataset/model pair.

    ``alpha_lower`` is the largest discard fraction at which the data still
    fails the goodness-of-fit test; ``c_lower = floor(p * alpha_lower)`` is
    the implied bound on the number of contaminated samples.
    """

    alpha_lower: float
    kappa: float
    c_lower: int
    threshold_at_alpha: float
    objective_at_alpha: float
    contaminated: bool
    bisection_width: float


def is_contaminated(
    counts: EmpiricalCounts, model: ModelSet, epsilon: float
) -> tuple[bool, float]:
    """Contamination verdict at significance ``epsilon`` for the full dataset.

    Flags the data when the model-set KL distance of the empirical
    distribution reaches the decision threshold.  Returns
    ``(verdict, margin)`` with margin = objective - threshold; a verdict of
    True is conservative (no false flags beyond the significance level).
    """
    p = counts.total
    if p < 1:
        raise ValueError("empty dataset")
    threshold = gof_threshold(p, counts.n, epsilon)
    result = solve(counts, model, 0.0)
    return result.objective >= threshold, result.objective - threshold


def estimate_alpha_lower(
    counts: EmpiricalCounts,
    model: ModelSet,
    epsilon: float,
    bisect_tol: float = DEFAULT_BISECT_TOL,
    solve_tolerance: float = DEFAULT_TOLERANCE,
) -> EstimateResult:
    """Certified lower bound on the contaminated fraction by bisection.

    The predicate "distance-to-model at discard fraction alpha still exceeds
    the threshold" is monotone in alpha (the distance is non-increasing, the
    threshold strictly increasing), so a bisecting search over [0, 1)
    isolates the largest alpha satisfying it to within ``bisect_tol``.  When
    the predicate already fails at alpha = 0 the dataset shows no detectable
    contamination and the bound is 0.
    """
    p = counts.total
    if p < 1:
        raise ValueError("empty dataset")
    if bisect_tol <= 0:
        raise ValueError("bisect_tol must be positive")
    n = counts.n

    # Warm-start mixture weights across probes: consecutive alphas are close,
    # so the previous optimum is a near-optimal start.  A warm start changes
    # the iterates, never the limit (joint convexity).
    warm_weights = {}

    def run_solve(alpha: float, threshold: float | None = None):
        if isinstance(model, Mixture):
            result = solve_mixture(
                counts,
                model.components,
                alpha,
                solve_tolerance,
                stop_below=threshold,
                stop_above=threshold,
                init_weights=warm_weights.get("w"),
            )
            warm_weights["w"] = result.mixture_weights
            return result
        return solve(counts, model, alpha, solve_tolerance, stop_below=threshold)

    def exceeds(alpha: float) -> bool:
        # The iterate objective upper-bounds the optimum and the solver
        # certifies a lower bound as it goes, so it may stop as soon as the
        # threshold comparison is settled either way.
        threshold = gof_threshold(p * (1.0 - alpha), n, epsilon)
        return run_solve(alpha, threshold).objective >= threshold

    at_zero = run_solve(0.0)
    contaminated = at_zero.objective >= gof_threshold(p, n, epsilon)

    if not contaminated:
        alpha_lower = 0.0
        width = 0.0
        final = at_zero
    else:
        lo, hi = 0.0, 1.0
        while hi - lo > bisect_tol:
            mid = 0.5 * (lo + hi)
            if exceeds(mid):
                lo = mid
            else:
                hi = mid
        alpha_lower = lo
        width = hi - lo
        final = run_solve(alpha_lower) if lo > 0 else at_zero

    kappa = separation_distance(empirical(counts), final.q_star)
    return EstimateResult(
        alpha_lower=alpha_lower,
        kappa=kappa,
        c_lower=contaminated_count_lower_from_alpha(alpha_lower, p),
        threshold_at_alpha=gof_threshold(p * (1.0 - alpha_lower), n, epsilon),
        objective_at_alpha=final.objective,
        contaminated=contaminated,
        bisection_width=width,
    )


def contaminated_count_lower_from_alpha(alpha_lower: float, p: int) -> int:
    return int(math.floor(p * alpha_lower))


def contaminated_count_lower(result: EstimateResult, p: int) -> int:
    """Integer lower bound on the contaminated sample count: floor(p * alpha).

    Discarding m = floor(p * alpha_lower) whole samples stays inside the
    feasible box at fraction m/p <= alpha_lower, so every m-sample remainder
    is still flagged; rounding down keeps the guarantee unconditional.
    """
    return contaminated_count_lower_from_alpha(result.alpha_lower, p)


def two_sample_test(
    counts_p: EmpiricalCounts,
    counts_q: EmpiricalCounts,
    epsilon: float,
    bisect_tol: float = DEFAULT_BISECT_TOL,
) -> EstimateResult:
    """Contamination bound of one dataset against another dataset as model.

    The model side is the KL ball of all distributions that could plausibly
    have generated ``counts_q``; a contaminated verdict certifies that no
    single distribution explains both datasets at the significance level.
    Joint support is not required: the ball always contains distributions
    whose support covers both samples.
    """
    if counts_p.n != counts_q.n:
        raise ValueError("dimension mismatch")
    if counts_p.total < 1 or counts_q.total < 1:
        raise ValueError("empty dataset")
    model = KlBall(empirical(counts_q), klball_radius(counts_q, epsilon))
    return estimate_alpha_lower(counts_p, model, epsilon, bisect_tol)


def convergence_bound(p: int, n: int, epsilon: float) -> float:
    """Worst-case gap between the bound and its large-sample limit.

    The certified fraction approaches the separation distance as the sample
    size grows; the gap is at most sqrt((1/p) log(1/eps) + (n/p) log(p+1)),
    which is O(sqrt(log p / p)).
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if not (0.0 < epsilon < 1.0):
        raise ValueError("epsilon must be in (0, 1)")
    return math.sqrt((math.log(1.0 / epsilon) + n * math.log(p + 1.0)) / p)


@dataclass(frozen=True)
class SweepConfig:
    """Deterministic grid experiment over sample sizes and mixing proportions.

    ``family`` selects the contaminating component blended into a uniform
    base model: ``spike`` is a point mass on the first category, ``dip`` is
    uniform over all but the last category.
    """

    p_grid: tuple[int, ...]
    pi_grid: tuple[float, ...]
    family: str
    n: int
    epsilon: float = 0.05
    bisect_tol: float = DEFAULT_BISECT_TOL

    def __post_init__(self):
        object.__setattr__(self, "p_grid", tuple(int(p) for p in self.p_grid))
        object.__setattr__(self, "pi_grid", tuple(float(x) for x in self.pi_grid))
        if not self.p_grid or not self.pi_grid:
            raise ValueError("grids must be non-empty")
        if self.family not in ("dip", "spike"):
            raise ValueError("family must be 'dip' or 'spike'")
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if any(p < 1 for p in self.p_grid):
            raise ValueError("sample sizes must be >= 1")
        if any(not (0.0 <= x <= 1.0) for x in self.pi_grid):
            raise ValueError("mixing proportions must be in [0, 1]")


@dataclass(frozen=True)
class SweepRow:
    p: int
    pi: float
    family: str
    alpha_lower: float
    kappa: float
    ratio: float
    threshold: float
    objective: float
    wall_time_ms: float


def round_to_counts(probs: np.ndarray, total: int) -> np.ndarray:
    """Nearest integer count vector summing to ``total`` (largest remainder).

    Floors each scaled mass, then hands the leftover units to the largest
    fractional remainders, earliest index first on ties.  Deterministic.
    """
    scaled = np.asarray(probs, dtype=float) * total
    base = np.floor(scaled).astype(np.int64)
    leftover = total - int(base.sum())
    if leftover > 0:
        remainders = scaled - base
        order = np.lexsort((np.arange(len(base)), -remainders))
        base[order[:leftover]] += 1
    return base


def _sweep_target(family: str, n: int, pi: float) -> np.ndarray:
    base = np.full(n, 1.0 / n)
    if family == "spike":
        contaminant = np.zeros(n)
        contaminant[0] = 1.0
    else:
        contaminant = np.full(n, 1.0 / (n - 1))
        contaminant[n - 1] = 0.0
    return (1.0 - pi) * base + pi * contaminant


def sweep(config: SweepConfig) -> list[SweepRow]:
    """Run the grid experiment; rows ordered by (pi, p) grid index.

    For each grid point the exact mixture is rounded to integer counts at
    sample size p, the contamination bound is estimated against the uniform
    model, and the ratio bound/limit is reported.  Deterministic given the
    config (wall time aside).
    """
    model = Singleton(uniform(config.n))
    rows: list[SweepRow] = []
    for pi in config.pi_grid:
        target = _sweep_target(config.family, config.n, pi)
        for p in config.p_grid:
            start = time.perf_counter()
            counts = EmpiricalCounts(round_to_counts(target, p))
            result = estimate_alpha_lower(
                counts, model, config.epsilon, config.bisect_tol
            )
            elapsed_ms = (time.perf_counter() - start) * 1e3
            ratio = result.alpha_lower / result.kappa if result.kappa > 0 else 0.0
            rows.append(
                SweepRow(
                    p=p,
                    pi=pi,
                    family=config.family,
                    alpha_lower=result.alpha_lower,
                    kappa=result.kappa,
                    ratio=ratio,
                    threshold=result.threshold_at_alpha,
                    objective=result.objective_at_alpha,
                    wall_time_ms=elapsed_ms,
                )
            )
    return rows
