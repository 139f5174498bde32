"""Wall-clock benchmarks of ``apply_tensor``."""
from __future__ import annotations

import gc
import math
import statistics
import time
from typing import Sequence

import numpy as np

from .rng import RngStream
from .sketches import SketchConfig, build

BENCH_FIELDS = ("family", "d", "c", "m", "median_ns", "ratio_to_dense")
# dense factor matrices above this many bytes are skipped
DENSE_BYTES_LIMIT = 2**31


def median_time_ns(fn, repeats: int = 11, min_sample_ns: int = 2_000_000) -> float:
    """Median over ``repeats`` samples of the per-call time of ``fn``.

    One warm-up call is excluded. Fast calls are looped inside each sample
    until it lasts at least ``min_sample_ns`` so timer resolution does not
    dominate. The garbage collector is paused while timing, as in ``timeit``.
    """
    t0 = time.perf_counter_ns()
    fn()
    once = max(time.perf_counter_ns() - t0, 1)
    inner = max(1, min(10_000, math.ceil(min_sample_ns / once)))
    samples = []
    enabled = gc.isenabled()
    gc.disable()
    try:
        for _ in range(repeats):
            t0 = time.perf_counter_ns()
            for _ in range(inner):
                fn()
            samples.append((time.perf_counter_ns() - t0) / inner)
    finally:
        if enabled:
            gc.enable()
    return statistics.median(samples)


def time_family(family: str, d: int, c: int, m: int, seed: int = 42, repeats: int = 11) -> float:
    sketch = build(SketchConfig(family, (d,) * c, m, seed))
    gen = RngStream(seed).substream(1).generator()
    factors = [gen.standard_normal(d) for _ in range(c)]
    return median_time_ns(lambda: sketch.apply_tensor(factors), repeats)


def run_bench(families: Sequence[str], d_grid: Sequence[int], c: int, m_grid: Sequence[int],
              seed: int = 42, repeats: int = 11, baseline: bool = True) -> list[dict]:
    """One row per ``(family, d, m)``.

    The dense baseline is timed when ``baseline`` is set or ``dense_rows`` is
    requested, and its factor matrices fit under ``DENSE_BYTES_LIMIT``;
    otherwise ``ratio_to_dense`` is ``None``.
    """
    rows = []
    for d in d_grid:
        for m in m_grid:
            dense_ns = None
            if (baseline or "dense_rows" in families) and 8 * m * d * c <= DENSE_BYTES_LIMIT:
                dense_ns = time_family("dense_rows", d, c, m, seed, repeats)
            for family in families:
                if family == "dense_rows":
                    ns = dense_ns
                    if ns is None:
                        continue
                else:
                    ns = time_family(family, d, c, m, seed, repeats)
                rows.append({"family": family, "d": d, "c": c, "m": m, "median_ns": ns,
                             "ratio_to_dense": None if dense_ns is None else ns / dense_ns})
    return rows


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])
