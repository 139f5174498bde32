"""Downstream uses of tensor sketches.

Approximate matrix multiplication error, oblivious subspace embedding
checks, polynomial-kernel feature maps and a sketched kernel ridge
regression that is compared against the exact Gram-matrix solution.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import as_matrix, as_vector
from .errors import ConfigError, InputError, NumericError, ParseError, ShapeError
from .rng import RngStream
from .sketches import LinearSketch, SketchConfig, build
from .validation import RateEstimate, parallel_map_trials, sketch_source

MAX_AMBIENT = 2**14
MAX_SUBSPACE = 64


@dataclass
class AmmStatistics:
    """Per-trial normalized errors ``‖AᵀMᵀMB − AᵀB‖_F / (‖A‖_F ‖B‖_F)``."""

    errors: np.ndarray

    @property
    def trials(self) -> int:
        return int(self.errors.size)

    @property
    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.errors**2)))

    @property
    def mean(self) -> float:
        return float(np.mean(self.errors))

    def p_norm(self, p: float) -> float:
        return float(np.mean(self.errors**p) ** (1.0 / p))

    def to_dict(self) -> dict:
        return {"trials": self.trials, "rms": self.rms, "mean": self.mean, "max": float(self.errors.max())}


def _check_ambient(sketch_or_source, d: int) -> None:
    if d > MAX_AMBIENT:
        raise ShapeError(f"ambient dimension {d} exceeds {MAX_AMBIENT}")


def amm_error(sketch, a, b, trials: int, seed: int | None = None, threads: int = 1) -> AmmStatistics:
    a = as_matrix(a, "A")
    b = as_matrix(b, "B")
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"A and B need the same number of rows, got {a.shape[0]} and {b.shape[0]}")
    _check_ambient(sketch, a.shape[0])
    source = sketch_source(sketch, seed)
    exact = a.T @ b
    scale = np.linalg.norm(a) * np.linalg.norm(b)
    if scale == 0:
        raise InputError("A and B must be nonzero")

    def one(t):
        s = source(t)
        if s.input_dim != a.shape[0]:
            raise ShapeError(f"sketch input dim {s.input_dim} does not match {a.shape[0]} rows")
        sa = s.apply_many(a.T)
        sb = s.apply_many(b.T)
        return np.linalg.norm(sa @ sb.T - exact) / scale

    return AmmStatistics(parallel_map_trials(one, trials, threads))


def fit_inverse_sqrt(m_grid: Sequence[int], values: Sequence[float]) -> dict:
    """Fit ``values ≈ K / sqrt(m)``; returns ``K``, the per-``m`` constants and their worst relative spread."""
    per_m = [v * math.sqrt(m) for m, v in zip(m_grid, values)]
    k = math.exp(sum(math.log(c) for c in per_m) / len(per_m))
    return {"K": k, "per_m": dict(zip(m_grid, per_m)), "max_rel_dev": max(abs(c / k - 1) for c in per_m)}


@dataclass
class SubspaceSpec:
    basis: np.ndarray

    def __post_init__(self):
        u = as_matrix(self.basis, "basis")
        if u.shape[1] > u.shape[0]:
            raise InputError("subspace dimension exceeds ambient dimension")
        if not np.allclose(u.T @ u, np.eye(u.shape[1]), rtol=0, atol=1e-10):
            raise InputError("basis columns are not orthonormal")
        self.basis = u

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @classmethod
    def random(cls, ambient_dim: int, dim: int, seed: int = 0) -> "SubspaceSpec":
        """Haar-random subspace from the QR factorization of a Gaussian matrix."""
        gen = RngStream(seed).generator()
        q, r = np.linalg.qr(gen.standard_normal((ambient_dim, dim)))
        return cls(q * np.sign(np.diag(r)))


def sketched_singular_values(sketch: LinearSketch, basis: np.ndarray) -> np.ndarray:
    """All ``λ`` singular values of ``M U`` (zeros fill in when ``m < λ``)."""
    mu = sketch.apply_many(basis.T).T
    s = np.linalg.svd(mu, compute_uv=False)
    return np.concatenate([s, np.zeros(basis.shape[1] - s.size)])


@dataclass
class OseResult:
    epsilon: float
    passes: int
    trials: int
    worst_deviation: np.ndarray

    @property
    def rate(self) -> float:
        return self.passes / self.trials

    @property
    def interval(self) -> tuple[float, float]:
        return RateEstimate(self.passes, self.trials).interval

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "passes": self.passes, "trials": self.trials,
                "pass_rate": self.rate, "interval": list(self.interval),
                "median_worst_deviation": float(np.median(self.worst_deviation))}


def ose_check(sketch, subspace: SubspaceSpec, epsilon: float, trials: int = 200,
              seed: int | None = None, threads: int = 1) -> OseResult:
    """Fraction of trials where every singular value of ``M U`` lies in ``[1 − ε, 1 + ε]``."""
    if not isinstance(subspace, SubspaceSpec):
        subspace = SubspaceSpec(np.asarray(subspace))
    _check_ambient(sketch, subspace.ambient_dim)
    if subspace.dim > MAX_SUBSPACE:
        raise ShapeError(f"subspace dimension {subspace.dim} exceeds {MAX_SUBSPACE}")
    source = sketch_source(sketch, seed)

    def one(t):
        s = sketched_singular_values(source(t), subspace.basis)
        return np.max(np.abs(s - 1.0))

    worst = parallel_map_trials(one, trials, threads)
    return OseResult(epsilon, int(np.count_nonzero(worst <= epsilon)), trials, worst)


@dataclass(frozen=True)
class PolyKernelSpec:
    """``P(t) = Σ a_k t^k`` with nonnegative coefficients and ``rows[k-1]`` sketch rows for degree ``k``."""

    coefficients: tuple[float, ...]
    rows: tuple[int, ...]

    def __post_init__(self):
        coeffs = tuple(float(a) for a in self.coefficients)
        rows = tuple(int(m) for m in self.rows)
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(self, "rows", rows)
        if not coeffs:
            raise ConfigError("need at least one coefficient")
        if any(a < 0 or not math.isfinite(a) for a in coeffs):
            raise ConfigError("polynomial coefficients must be finite and nonnegative")
        if not any(a > 0 for a in coeffs):
            raise ConfigError("at least one coefficient must be positive")
        if len(rows) != len(coeffs) - 1 or any(m < 1 for m in rows):
            raise ConfigError(f"need {len(coeffs) - 1} positive row counts, got {rows}")

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def evaluate(self, t):
        return sum(a * np.asarray(t, dtype=np.float64) ** k for k, a in enumerate(self.coefficients))


class PolyKernelFeatures:
    """Feature map ``z(x) = √a0 ⊕ √a1 M1 x ⊕ √a2 M2 (x ⊗ x) ⊕ ...``.

    ``E⟨z(x), z(y)⟩ = P(⟨x, y⟩)``. Degree-``k`` sketches come from substream
    ``k`` of ``seed`` unless given explicitly through ``sketches``.
    """

    def __init__(self, spec: PolyKernelSpec, family: str, dim: int, seed: int = 42,
                 sketches: Sequence[LinearSketch] | None = None):
        self.spec = spec
        self.dim = int(dim)
        if sketches is None:
            stream = RngStream(seed)
            sketches = [
                build(SketchConfig(family, (self.dim,) * k, m, seed), stream=stream.substream(k))
                for k, m in enumerate(spec.rows, start=1)
            ]
        sketches = list(sketches)
        if len(sketches) != spec.degree:
            raise ConfigError(f"need {spec.degree} sketches, got {len(sketches)}")
        for k, s in enumerate(sketches, start=1):
            if s.factor_dims != (self.dim,) * k:
                raise ConfigError(f"degree-{k} sketch has dims {s.factor_dims}, expected {(self.dim,) * k}")
        self.sketches = sketches
        self.weights = [math.sqrt(a) for a in spec.coefficients]

    @property
    def output_dim(self) -> int:
        return 1 + sum(s.rows for s in self.sketches)

    def transform(self, x) -> np.ndarray:
        x = as_vector(x, "x")
        if x.size != self.dim:
            raise ShapeError(f"x has dim {x.size}, expected {self.dim}")
        blocks = [np.array([self.weights[0]])]
        for k, s in enumerate(self.sketches, start=1):
            blocks.append(self.weights[k] * s.apply_tensor([x] * k))
        return np.concatenate(blocks)

    def transform_many(self, xs) -> np.ndarray:
        xs = as_matrix(xs, "X")
        return np.stack([self.transform(x) for x in xs])


def poly_kernel_features(spec: PolyKernelSpec, base_family: str, x, seed: int = 42) -> np.ndarray:
    x = as_vector(x, "x")
    return PolyKernelFeatures(spec, base_family, x.size, seed).transform(x)


def exact_poly_kernel(spec: PolyKernelSpec, xs, ys=None) -> np.ndarray:
    xs = as_matrix(xs, "X")
    ys = xs if ys is None else as_matrix(ys, "Y")
    return spec.evaluate(xs @ ys.T)


@dataclass
class RidgeResult:
    weights: np.ndarray
    sketched_rmse: float
    exact_rmse: float
    n_features: int
    ridge: float

    @property
    def relative_gap(self) -> float:
        return abs(self.sketched_rmse - self.exact_rmse) / self.exact_rmse

    def to_dict(self) -> dict:
        return {"sketched_rmse": self.sketched_rmse, "exact_rmse": self.exact_rmse,
                "relative_gap": self.relative_gap, "n_features": self.n_features, "ridge": self.ridge}


def _solve_spd(a: np.ndarray, b: np.ndarray, what: str) -> np.ndarray:
    try:
        sol = np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        raise NumericError(f"{what} is singular; use a positive ridge parameter")
    if not np.all(np.isfinite(sol)) or np.linalg.cond(a) > 1e14:
        raise NumericError(f"{what} is numerically singular; use a positive ridge parameter")
    return sol


def _rmse(pred, y) -> float:
    return float(np.sqrt(np.mean((pred - y) ** 2)))


def ridge_fit(z: np.ndarray, y: np.ndarray, ridge: float) -> np.ndarray:
    """Weights minimizing ``‖Zw − y‖² + ridge ‖w‖²`` from the normal equations.

    With more features than samples the equivalent ``n × n`` system
    ``w = Zᵀ (ZZᵀ + ridge I)⁻¹ y`` is solved instead.
    """
    n, f = z.shape
    if f <= n:
        return _solve_spd(z.T @ z + ridge * np.eye(f), z.T @ y, "ZᵀZ + ridge·I")
    return z.T @ _solve_spd(z @ z.T + ridge * np.eye(n), y, "ZZᵀ + ridge·I")


def sketched_ridge_demo(xs, y, spec: PolyKernelSpec, ridge: float, seed: int = 42,
                        family: str = "fast_tensor_jl", features: PolyKernelFeatures | None = None) -> RidgeResult:
    """Ridge regression on sketched polynomial features vs the exact kernel ridge solution."""
    xs = as_matrix(xs, "X")
    y = as_vector(y, "y")
    if xs.shape[0] != y.size:
        raise ShapeError(f"{xs.shape[0]} samples but {y.size} targets")
    if ridge < 0:
        raise ConfigError("ridge must be nonnegative")
    if features is None:
        features = PolyKernelFeatures(spec, family, xs.shape[1], seed)
    z = features.transform_many(xs)
    w = ridge_fit(z, y, ridge)
    gram = exact_poly_kernel(spec, xs)
    alpha = _solve_spd(gram + ridge * np.eye(y.size), y, "K + ridge·I")
    return RidgeResult(w, _rmse(z @ w, y), _rmse(gram @ alpha, y), z.shape[1], ridge)


def make_synthetic_dataset(n: int, d: int, seed: int = 0, noise: float = 0.1):
    """Unit-norm inputs with a quadratic target plus Gaussian noise."""
    gen = RngStream(seed).generator()
    xs = gen.standard_normal((n, d))
    xs /= np.linalg.norm(xs, axis=1, keepdims=True)
    beta = gen.standard_normal(d)
    beta /= np.linalg.norm(beta)
    t = xs @ beta
    y = 1.0 + 2.0 * t + 3.0 * t**2 + noise * gen.standard_normal(n)
    return xs, y


def load_dataset(path) -> tuple[np.ndarray, np.ndarray]:
    """CSV with a header row; the last column is the target."""
    rows = []
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or len(header) < 2:
            raise ParseError(f"{path}: line 1: need a header with at least two columns")
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != len(header):
                raise ParseError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(rec)}")
            try:
                rows.append([float(f) for f in rec])
            except ValueError as e:
                raise ParseError(f"{path}: line {lineno}: {e}")
    if not rows:
        raise ParseError(f"{path}: no data rows")
    data = np.array(rows)
    return data[:, :-1], data[:, -1]


def save_dataset(path, xs, y) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{i}" for i in range(xs.shape[1])] + ["y"])
        for row, target in zip(xs, y):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(target))])
