"""Monte-Carlo and exact checks of sketch moment and tail behaviour.

Trials are independent: trial ``t`` draws a fresh sketch from substream
``t`` of the master seed, so every statistic is a deterministic function of
``(config, seed, trials)``. Per-trial values are written into a shared array
by position and reduced once, which keeps results byte-identical for any
thread count.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Callable, Sequence

import numpy as np

from .core import as_vector
from .errors import ConfigError, InputError, SizeError
from .reports import ExperimentReport
from .sketches import LinearSketch, SketchConfig, build

DEFAULT_P_GRID = (2.0, 4.0, 8.0)
DEFAULT_EPS_GRID = (0.1, 0.25, 0.5)
Z95 = NormalDist().inv_cdf(0.975)

SketchSource = Callable[[int], LinearSketch]


def sketch_source(spec, seed: int | None = None) -> SketchSource:
    """Normalize a config, a fixed sketch, or a ``trial -> sketch`` callable."""
    if isinstance(spec, SketchConfig):
        cfg = spec if seed is None else spec.with_seed(seed)
        return lambda t: build(cfg, trial=t)
    if isinstance(spec, LinearSketch):
        return lambda t: spec
    if callable(spec):
        return spec
    raise ConfigError(f"cannot make sketches from {spec!r}")


def parallel_map_trials(fn: Callable[[int], object], trials: int, threads: int = 1, out=None) -> np.ndarray:
    """``out[t] = fn(t)`` for every trial, optionally over a thread pool.

    Each slot is written by exactly one worker, so the result does not
    depend on ``threads``.
    """
    if out is None:
        out = np.empty(trials)
    if threads <= 1 or trials < 2:
        for t in range(trials):
            out[t] = fn(t)
        return out
    bounds = np.linspace(0, trials, threads + 1).astype(int)

    def work(lo, hi):
        for t in range(lo, hi):
            out[t] = fn(t)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(work, bounds[:-1], bounds[1:]))
    return out


def normalized_factors(factors: Sequence) -> list[np.ndarray]:
    vecs = [as_vector(f, f"factor {i}") for i, f in enumerate(factors)]
    norms = [float(np.linalg.norm(v)) for v in vecs]
    if any(n == 0.0 for n in norms):
        raise InputError("input tensor is zero; cannot normalize")
    return [v / n for v, n in zip(vecs, norms)]


def sq_norms(source: SketchSource, factors: Sequence, trials: int, threads: int = 1) -> np.ndarray:
    """``||M_t x||^2`` for each trial sketch ``M_t`` on ``x = ⊗ factors``."""

    def one(t):
        y = source(t).apply_tensor(factors)
        return float(y @ y)

    return parallel_map_trials(one, trials, threads)


@dataclass
class TrialStatistics:
    trials: int
    moment_sums: dict[float, float]
    tail_counts: dict[float, int]
    sq_norm_sum: float
    sq_norm_sq_sum: float

    @classmethod
    def from_sq_norms(cls, values, p_grid=DEFAULT_P_GRID, eps_grid=DEFAULT_EPS_GRID) -> "TrialStatistics":
        values = np.asarray(values, dtype=np.float64)
        dev = np.abs(values - 1.0)
        return cls(
            trials=int(values.size),
            moment_sums={float(p): float(np.sum(dev**p)) for p in p_grid},
            tail_counts={float(e): int(np.count_nonzero(dev > e)) for e in eps_grid},
            sq_norm_sum=float(np.sum(values)),
            sq_norm_sq_sum=float(np.sum(values * values)),
        )

    def merge(self, other: "TrialStatistics") -> "TrialStatistics":
        if set(self.moment_sums) != set(other.moment_sums) or set(self.tail_counts) != set(other.tail_counts):
            raise ConfigError("cannot merge statistics over different grids")
        return TrialStatistics(
            trials=self.trials + other.trials,
            moment_sums={p: self.moment_sums[p] + other.moment_sums[p] for p in self.moment_sums},
            tail_counts={e: self.tail_counts[e] + other.tail_counts[e] for e in self.tail_counts},
            sq_norm_sum=self.sq_norm_sum + other.sq_norm_sum,
            sq_norm_sq_sum=self.sq_norm_sq_sum + other.sq_norm_sq_sum,
        )

    @property
    def p_grid(self) -> tuple[float, ...]:
        return tuple(sorted(self.moment_sums))

    @property
    def moment_estimates(self) -> dict[float, float]:
        """Empirical ``(E|‖Mx‖² − 1|^p)^{1/p}`` per ``p``."""
        return {p: (s / self.trials) ** (1.0 / p) for p, s in sorted(self.moment_sums.items())}

    @property
    def mean_sq_norm(self) -> float:
        return self.sq_norm_sum / self.trials

    @property
    def sq_norm_std_error(self) -> float:
        n = self.trials
        if n < 2:
            return math.inf
        var = max(self.sq_norm_sq_sum - self.sq_norm_sum**2 / n, 0.0) / (n - 1)
        return math.sqrt(var / n)

    def tail_rate(self, eps: float) -> "RateEstimate":
        return RateEstimate(self.tail_counts[float(eps)], self.trials)

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "mean_sq_norm": self.mean_sq_norm,
            "mean_sq_norm_std_error": self.sq_norm_std_error,
            "moments": {str(p): v for p, v in self.moment_estimates.items()},
            "tails": {
                str(e): {"count": c, "rate": c / self.trials, "interval": list(wilson_interval(c, self.trials))}
                for e, c in sorted(self.tail_counts.items())
            },
        }


def estimate_moments(
    family_config,
    factors: Sequence,
    p_grid: Sequence[float] = DEFAULT_P_GRID,
    trials: int = 10_000,
    seed: int | None = None,
    eps_grid: Sequence[float] = DEFAULT_EPS_GRID,
    threads: int = 1,
) -> TrialStatistics:
    """Monte-Carlo moments and tail counts of ``‖Mx‖² − 1`` for unit ``x = ⊗ factors``.

    ``family_config`` is a :class:`SketchConfig` (fresh sketch per trial), a
    fixed :class:`LinearSketch`, or a ``trial -> sketch`` callable. Factors
    are normalized internally.
    """
    if trials < 1000:
        raise InputError(f"need at least 1000 trials, got {trials}")
    unit = normalized_factors(factors)
    values = sq_norms(sketch_source(family_config, seed), unit, trials, threads)
    return TrialStatistics.from_sq_norms(values, p_grid, eps_grid)


@dataclass(frozen=True)
class MomentBudget:
    epsilon: float
    delta: float
    p_grid: tuple[float, ...] | None = None
    slack: float = 2.0

    def __post_init__(self):
        if not (0 < self.epsilon <= 1 and 0 < self.delta <= 1):
            raise ConfigError("epsilon and delta must lie in (0, 1]")
        if self.slack < 1:
            raise ConfigError("slack must be at least 1")
        top = self.log_inv_delta
        if self.p_grid is None:
            grid = tuple(p for p in DEFAULT_P_GRID if p <= top)
            if not grid:
                raise ConfigError(f"no p in {DEFAULT_P_GRID} satisfies 2 <= p <= log(1/delta) = {top:.3g}")
            object.__setattr__(self, "p_grid", grid)
        else:
            grid = tuple(float(p) for p in self.p_grid)
            if not grid or any(p < 2 or p > top for p in grid):
                raise ConfigError(f"p_grid must lie within [2, log(1/delta)] = [2, {top:.3g}]")
            object.__setattr__(self, "p_grid", grid)

    @property
    def log_inv_delta(self) -> float:
        return math.log(1.0 / self.delta)

    def bound(self, p: float) -> float:
        """``(ε/e) sqrt(p / log(1/δ))``."""
        return self.epsilon / math.e * math.sqrt(p / self.log_inv_delta)


@dataclass
class StrongJLReport:
    passed: bool
    rows: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "per_p": self.rows}


def strong_jl_check(stats: TrialStatistics, budget: MomentBudget) -> StrongJLReport:
    moments = stats.moment_estimates
    missing = [p for p in budget.p_grid if p not in moments]
    if missing:
        raise InputError(f"statistics lack moments for p = {missing}")
    rows = []
    for p in budget.p_grid:
        limit = budget.slack * budget.bound(p)
        rows.append({"p": p, "moment": moments[p], "bound": budget.bound(p), "limit": limit,
                     "margin": limit - moments[p], "passed": moments[p] <= limit})
    return StrongJLReport(all(r["passed"] for r in rows), rows)


def dense_rows_row_count(epsilon: float, delta: float, order: int, k: float = 1.0) -> int:
    """Rademacher dense-rows row count ``K (3^c ε⁻² log(1/δ) + ε⁻¹ (2.36 log(1/δ))^c)``."""
    log_inv = math.log(1.0 / delta)
    return math.ceil(k * (3**order * log_inv / epsilon**2 + (2.36 * log_inv) ** order / epsilon))


def wilson_interval(successes: int, trials: int, z: float = Z95) -> tuple[float, float]:
    if trials <= 0:
        return (0.0, 1.0)
    p = successes / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return (max(0.0, centre - half), min(1.0, centre + half))


@dataclass(frozen=True)
class RateEstimate:
    count: int
    trials: int

    @property
    def rate(self) -> float:
        return self.count / self.trials

    @property
    def interval(self) -> tuple[float, float]:
        return wilson_interval(self.count, self.trials)

    def strictly_below(self, other: "RateEstimate") -> bool:
        """True when the 95% intervals are disjoint with this one lower."""
        return self.interval[1] < other.interval[0]

    def to_dict(self) -> dict:
        return {"count": self.count, "trials": self.trials, "rate": self.rate, "interval": list(self.interval)}


def failure_rate(source, factors: Sequence, epsilon: float, trials: int, seed: int | None = None,
                 threads: int = 1) -> RateEstimate:
    """Fraction of trials with ``|‖Mx‖² − 1| > ε`` on unit ``x = ⊗ factors``."""
    values = sq_norms(sketch_source(source, seed), normalized_factors(factors), trials, threads)
    return RateEstimate(int(np.count_nonzero(np.abs(values - 1.0) > epsilon)), trials)


def adversarial_vector(d: int, c: int) -> list[np.ndarray]:
    """``c`` copies of the all-ones vector over ``sqrt(d)``; their tensor product is a unit vector."""
    if d < 1 or c < 1:
        raise InputError("d and c must be positive")
    return [np.full(d, 1.0 / math.sqrt(d)) for _ in range(c)]


def lower_bound_experiment(
    m_grid: Sequence[int],
    d: int,
    c: int,
    epsilon: float,
    trials: int,
    seed: int,
    families: Sequence[str] = ("dense_rows", "count_sketch_tensor"),
    threads: int = 1,
) -> ExperimentReport:
    """Failure rates on the all-ones tensor across row counts.

    Every family runs at order ``c``; ``dense_rows`` additionally runs at
    order ``c + 1`` to expose the growth of the failure rate with the order.
    Trial ``t`` uses substream ``t`` for every ``m``, coupling the curves.
    """
    if d < c:
        raise InputError(f"need d >= c, got d={d}, c={c}")
    m_grid = sorted(int(m) for m in m_grid)
    report = ExperimentReport(
        name="lower_bound",
        config={"m_grid": m_grid, "d": d, "c": c, "epsilon": epsilon, "trials": trials,
                "seed": seed, "families": list(families)},
        metrics={},
    )
    runs = [(f, c) for f in families] + [("dense_rows", c + 1)]
    rates: dict[tuple[str, int], list[RateEstimate]] = {}
    for family, order in runs:
        factors = adversarial_vector(d, order)
        series = []
        for m in m_grid:
            cfg = SketchConfig(family, (d,) * order, m, seed)
            est = failure_rate(cfg, factors, epsilon, trials, threads=threads)
            series.append(est)
            label = f"{family}_c{order}"
            report.add_row(label, m, "failure_rate", est.rate, *est.interval)
        rates[(family, order)] = series
        report.metrics[f"{family}_c{order}"] = {str(m): r.to_dict() for m, r in zip(m_grid, series)}

    monotone = {}
    for (family, order), series in rates.items():
        monotone[f"{family}_c{order}"] = all(
            later.interval[0] <= earlier.interval[1] for earlier, later in zip(series, series[1:])
        )
    low, high = rates[("dense_rows", c)], rates[("dense_rows", c + 1)]
    strictly_higher = [lo.strictly_below(hi) for lo, hi in zip(low, high)]
    reversed_ = [hi.strictly_below(lo) for lo, hi in zip(low, high)]
    order_effect = any(strictly_higher) and not any(reversed_)

    report.metrics["checks"] = {
        "nonincreasing_in_m": monotone,
        "higher_order_fails_more": dict(zip(map(str, m_grid), strictly_higher)),
    }
    report.passed = all(monotone.values()) and order_effect
    return report


def _sign_patterns(d: int) -> np.ndarray:
    bits = (np.arange(2**d)[:, None] >> np.arange(d)[None, :]) & 1
    return 1.0 - 2.0 * bits


def khintchine_tensor_exact(a, dims: Sequence[int]) -> float:
    """Exact ``E⟨σ1 ⊗ ... ⊗ σc, a⟩⁴`` over independent Rademacher vectors.

    Enumerates all ``2**sum(dims)`` sign assignments.
    """
    dims = [int(d) for d in dims]
    a = as_vector(a, "a")
    if a.size != math.prod(dims):
        raise InputError(f"tensor of size {a.size} does not match dims {dims}")
    if math.prod(dims) > 2**16 or sum(dims) > 20:
        raise SizeError(f"exhaustive enumeration over dims {dims} is too large")
    t = a.reshape(dims)
    # contract one axis at a time; the sign-pattern axes accumulate at the end
    for d in dims:
        t = np.tensordot(t, _sign_patterns(d), axes=([0], [1]))
    return float(np.mean(t.ravel() ** 4))


def khintchine_bound(a, order: int) -> float:
    """``3^c ‖a‖⁴``, the fourth-moment bound for Rademacher tensors."""
    return 3.0**order * float(np.dot(a, a)) ** 2
