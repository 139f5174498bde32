"""Randomized linear sketches for Kronecker-structured vectors.

Four families share the :class:`LinearSketch` interface:

``dense_rows``
    Face-split product of independent dense matrices with iid Rademacher or
    Gaussian entries, ``M = (T1 • T2 • ... • Tc) / sqrt(m)``.
``fast_tensor_jl``
    Subsampled randomized Hadamard transform whose sign diagonal is the
    Kronecker product of per-factor Rademacher vectors,
    ``M = S H (D1 ⊗ ... ⊗ Dc) / sqrt(m)``; applied factor by factor.
``count_sketch_tensor``
    Count sketches of each factor combined by FFT circular convolution.
``recursive``
    Sketch-and-reduce: an order-1 fast JL stage on the last factor, then one
    order-2 fast tensor JL stage per remaining factor, each mapping
    ``x_i ⊗ v`` back down to ``m`` rows.

Every sketch is frozen at construction: all randomness is drawn from a
:class:`~tensorsketch.rng.RngStream` up front, and application is pure.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .core import (
    as_vector,
    fft,
    fwht_inplace,
    ifft,
    is_power_of_two,
    kron_all,
    next_power_of_two,
    sample_rotated,
)
from .errors import ConfigError, ShapeError, SizeError
from .rng import RngStream

FAMILIES = ("count_sketch_tensor", "dense_rows", "fast_tensor_jl", "recursive")
ENTRY_KINDS = ("rademacher", "gaussian")
DEFAULT_SEED = 42
MATERIALIZE_LIMIT = 2**24


@dataclass(frozen=True)
class SketchConfig:
    family: str
    factor_dims: tuple[int, ...]
    rows: int
    seed: int = DEFAULT_SEED
    entry_kind: str = "rademacher"
    epsilon_split_scale: float = 1.0

    def __post_init__(self):
        try:
            dims = tuple(int(d) for d in self.factor_dims)
        except TypeError:
            raise ConfigError(f"factor_dims must be a sequence of integers, got {self.factor_dims!r}")
        object.__setattr__(self, "factor_dims", dims)
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if len(dims) < 1 or any(d < 1 for d in dims):
            raise ConfigError(f"factor_dims must be one or more positive integers, got {dims}")
        if int(self.rows) != self.rows or self.rows < 1:
            raise ConfigError(f"rows must be a positive integer, got {self.rows}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.entry_kind not in ENTRY_KINDS:
            raise ConfigError(f"unknown entry_kind {self.entry_kind!r}; expected one of {ENTRY_KINDS}")
        if not (self.epsilon_split_scale > 0 and math.isfinite(self.epsilon_split_scale)):
            raise ConfigError("epsilon_split_scale must be a positive real")
        object.__setattr__(self, "rows", int(self.rows))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def order(self) -> int:
        return len(self.factor_dims)

    @property
    def input_dim(self) -> int:
        return math.prod(self.factor_dims)

    def with_seed(self, seed: int) -> "SketchConfig":
        return replace(self, seed=seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dims"] = list(d.pop("factor_dims"))
        return {k: d[k] for k in ("family", "dims", "rows", "seed", "entry_kind", "epsilon_split_scale")}

    @classmethod
    def from_dict(cls, d: dict) -> "SketchConfig":
        unknown = set(d) - {"family", "dims", "rows", "seed", "entry_kind", "epsilon_split_scale"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(
                family=d["family"],
                factor_dims=tuple(d["dims"]),
                rows=d["rows"],
                seed=d.get("seed", DEFAULT_SEED),
                entry_kind=d.get("entry_kind", "rademacher"),
                epsilon_split_scale=d.get("epsilon_split_scale", 1.0),
            )
        except KeyError as e:
            raise ConfigError(f"missing config key {e}")

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "SketchConfig":
        return cls.from_dict(json.loads(s))


def sample_index_decompose(flat, dims: Sequence[int]):
    """Split a flat index into per-factor indices, leftmost factor most significant.

    Works on scalars and on integer arrays (returns a list of arrays).
    """
    dims = [int(d) for d in dims]
    total = math.prod(dims)
    arr = np.asarray(flat)
    if np.any(arr < 0) or np.any(arr >= total):
        raise IndexError(f"flat index out of range [0, {total})")
    out = []
    rest = arr.astype(np.int64)
    for d in reversed(dims):
        out.append(rest % d)
        rest = rest // d
    out.reverse()
    if arr.ndim == 0:
        return tuple(int(i) for i in out)
    return out


def sample_index_recompose(indices, dims: Sequence[int]):
    flat = 0
    for idx, d in zip(indices, dims):
        idx_arr = np.asarray(idx)
        if np.any(idx_arr < 0) or np.any(idx_arr >= d):
            raise IndexError(f"index out of range [0, {d})")
        flat = flat * int(d) + idx_arr.astype(np.int64)
    if np.ndim(flat) == 0:
        return int(flat)
    return flat


def _rademacher(gen: np.random.Generator, size) -> np.ndarray:
    return 1.0 - 2.0 * gen.integers(0, 2, size=size).astype(np.float64)


class LinearSketch:
    """A frozen random linear map ``R^{d1*...*dc} -> R^rows``.

    Subclasses implement ``_apply_tensor`` (the fast structured path) and
    ``_apply_many`` (an arbitrary batch of flat input vectors, one per row).
    """

    family = "matrix"

    def __init__(self, factor_dims: Sequence[int], rows: int, config: SketchConfig | None = None):
        self.factor_dims = tuple(int(d) for d in factor_dims)
        self.rows = int(rows)
        self.config = config

    @property
    def order(self) -> int:
        return len(self.factor_dims)

    @property
    def input_dim(self) -> int:
        return math.prod(self.factor_dims)

    def __repr__(self):
        return f"{type(self).__name__}(dims={self.factor_dims}, rows={self.rows})"

    def apply_tensor(self, factors: Sequence) -> np.ndarray:
        """Sketch ``factors[0] ⊗ ... ⊗ factors[c-1]`` without forming the product."""
        if len(factors) != self.order:
            raise ShapeError(f"expected {self.order} factors, got {len(factors)}")
        vecs = []
        for i, (f, d) in enumerate(zip(factors, self.factor_dims)):
            v = as_vector(f, f"factor {i}")
            if v.size != d:
                raise ShapeError(f"factor {i} has dim {v.size}, expected {d}")
            vecs.append(v)
        return self._apply_tensor(vecs)

    def apply(self, x) -> np.ndarray:
        x = as_vector(x, "x")
        if x.size != self.input_dim:
            raise ShapeError(f"input has dim {x.size}, expected {self.input_dim}")
        if x.size > MATERIALIZE_LIMIT:
            raise SizeError(f"input dim {x.size} exceeds {MATERIALIZE_LIMIT}")
        return self._apply_many(x[None, :])[0]

    def apply_many(self, xs) -> np.ndarray:
        """Apply to every row of ``xs``; returns shape ``(len(xs), rows)``."""
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim != 2 or xs.shape[1] != self.input_dim:
            raise ShapeError(f"expected shape (k, {self.input_dim}), got {xs.shape}")
        if xs.size > MATERIALIZE_LIMIT:
            raise SizeError(f"batch of {xs.size} entries exceeds {MATERIALIZE_LIMIT}")
        return self._apply_many(xs)

    def explicit_matrix(self) -> np.ndarray:
        n = self.input_dim
        if self.rows * n > MATERIALIZE_LIMIT:
            raise SizeError(f"explicit matrix {self.rows}x{n} exceeds {MATERIALIZE_LIMIT} entries")
        return np.ascontiguousarray(self._apply_many(np.eye(n)).T)

    def _apply_tensor(self, factors: list[np.ndarray]) -> np.ndarray:
        raise NotImplementedError

    def _apply_many(self, xs: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class MatrixSketch(LinearSketch):
    """Wraps an explicit matrix; mostly a test fixture for known maps."""

    def __init__(self, matrix, factor_dims: Sequence[int] | None = None):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2:
            raise ShapeError("matrix must be 2-d")
        dims = tuple(factor_dims) if factor_dims is not None else (matrix.shape[1],)
        if math.prod(dims) != matrix.shape[1]:
            raise ShapeError(f"factor dims {dims} do not match {matrix.shape[1]} columns")
        super().__init__(dims, matrix.shape[0])
        self.matrix = matrix

    def _apply_tensor(self, factors):
        return self.matrix @ kron_all(factors)

    def _apply_many(self, xs):
        return xs @ self.matrix.T


class DenseRowsSketch(LinearSketch):
    family = "dense_rows"

    def __init__(self, matrices: Sequence[np.ndarray], config: SketchConfig | None = None):
        mats = [np.asarray(t, dtype=np.float64) for t in matrices]
        rows = {t.shape[0] for t in mats}
        if len(rows) != 1:
            raise ShapeError("all factor matrices must have the same number of rows")
        super().__init__([t.shape[1] for t in mats], rows.pop(), config)
        self.matrices = mats
        self.scale = 1.0 / math.sqrt(self.rows)

    @classmethod
    def from_stream(cls, config: SketchConfig, stream: RngStream) -> "DenseRowsSketch":
        mats = []
        for k, d in enumerate(config.factor_dims):
            gen = stream.substream(k).generator()
            if config.entry_kind == "rademacher":
                mats.append(_rademacher(gen, (config.rows, d)))
            else:
                mats.append(gen.standard_normal((config.rows, d)))
        return cls(mats, config)

    def _apply_tensor(self, factors):
        out = self.matrices[0] @ factors[0]
        for t, x in zip(self.matrices[1:], factors[1:]):
            out *= t @ x
        return out * self.scale

    def _apply_many(self, xs):
        w = xs.reshape(xs.shape[0], *self.factor_dims)
        w = np.einsum("ra,ka...->kr...", self.matrices[0], w)
        for t in self.matrices[1:]:
            w = np.einsum("rb,krb...->kr...", t, w)
        return w * self.scale


class FastTensorJL(LinearSketch):
    """``S H (D1 ⊗ ... ⊗ Dc) / sqrt(m)`` with per-factor zero padding to powers of two.

    ``signs[i]`` has the padded length of factor ``i``; ``indices[i]`` holds the
    factor-``i`` coordinate of each of the ``m`` sampled rows.
    """

    family = "fast_tensor_jl"

    def __init__(
        self,
        factor_dims: Sequence[int],
        signs: Sequence[np.ndarray],
        indices: Sequence[np.ndarray],
        config: SketchConfig | None = None,
    ):
        dims = tuple(int(d) for d in factor_dims)
        padded = tuple(next_power_of_two(d) for d in dims)
        signs = [np.asarray(s, dtype=np.float64) for s in signs]
        indices = [np.asarray(i, dtype=np.int64) for i in indices]
        if len(signs) != len(dims) or len(indices) != len(dims):
            raise ShapeError("need one sign vector and one index array per factor")
        for s, p in zip(signs, padded):
            if s.shape != (p,):
                raise ShapeError(f"sign vector has shape {s.shape}, expected ({p},)")
        rows = {i.size for i in indices}
        if len(rows) != 1:
            raise ShapeError("index arrays must all have length m")
        super().__init__(dims, rows.pop(), config)
        self.padded_dims = padded
        self.signs = signs
        self.indices = indices
        self.scale = 1.0 / math.sqrt(self.rows)
        self.flat_indices = sample_index_recompose(indices, padded)

    @classmethod
    def from_stream(cls, config: SketchConfig, stream: RngStream) -> "FastTensorJL":
        padded = [next_power_of_two(d) for d in config.factor_dims]
        total = math.prod(padded)
        if total >= 2**62:
            raise SizeError(f"padded tensor dimension {total} too large to sample from")
        signs = [_rademacher(stream.substream(k).generator(), p) for k, p in enumerate(padded)]
        flat = stream.substream(len(padded)).generator().integers(0, total, size=config.rows)
        indices = []
        for p in reversed(padded):
            indices.append(flat % p)
            flat = flat // p
        return cls(config.factor_dims, signs, indices[::-1], config)

    def full_diagonal(self) -> np.ndarray:
        return kron_all(self.signs)

    def _apply_tensor(self, factors):
        out = np.empty(self.rows)
        for k in range(self.order):
            sample_rotated(factors[k], self.signs[k], self.indices[k], out, self.scale, k == 0)
        return out

    def _apply_many(self, xs):
        k = xs.shape[0]
        w = xs.reshape(k, *self.factor_dims)
        if self.padded_dims != self.factor_dims:
            pad = [(0, 0)] + [(0, p - d) for p, d in zip(self.padded_dims, self.factor_dims)]
            w = np.pad(w, pad)
        w = np.ascontiguousarray(w.reshape(k, -1) * self.full_diagonal())
        fwht_inplace(w)
        return w[:, self.flat_indices] * self.scale


class CountSketchTensor(LinearSketch):
    """Tensor count sketch: per-factor hashes ``[d_i] -> [m']`` and signs, combined by FFT.

    The output length ``m'`` is the requested row count rounded up to a power
    of two. Each column of the count sketch has a single ``±1``, so no
    ``1/sqrt(m)`` scale is needed for ``E||Mx||^2 = ||x||^2``.
    """

    family = "count_sketch_tensor"

    def __init__(
        self,
        hashes: Sequence[np.ndarray],
        signs: Sequence[np.ndarray],
        rows: int,
        config: SketchConfig | None = None,
    ):
        if not is_power_of_two(rows):
            raise ConfigError(f"count sketch length must be a power of two, got {rows}")
        hashes = [np.asarray(h, dtype=np.int64) for h in hashes]
        signs = [np.asarray(s, dtype=np.float64) for s in signs]
        if len(hashes) != len(signs) or any(h.shape != s.shape for h, s in zip(hashes, signs)):
            raise ShapeError("hash and sign tables must pair up with equal lengths")
        if any(h.size and (h.min() < 0 or h.max() >= rows) for h in hashes):
            raise ConfigError(f"hash values must lie in [0, {rows})")
        super().__init__([h.size for h in hashes], rows, config)
        self.hashes = hashes
        self.signs = signs

    @classmethod
    def from_stream(cls, config: SketchConfig, stream: RngStream) -> "CountSketchTensor":
        m = next_power_of_two(config.rows)
        hashes, signs = [], []
        for k, d in enumerate(config.factor_dims):
            gen = stream.substream(k).generator()
            hashes.append(gen.integers(0, m, size=d))
            signs.append(_rademacher(gen, d))
        return cls(hashes, signs, m, config)

    @classmethod
    def identity(cls, factor_dims: Sequence[int]) -> "CountSketchTensor":
        """Exact identity on ``R^{d1*...*dc}``; needs the product to be a power of two."""
        dims = [int(d) for d in factor_dims]
        total = math.prod(dims)
        if not is_power_of_two(total):
            raise ConfigError(f"identity count sketch needs a power-of-two total dim, got {total}")
        strides = [math.prod(dims[k + 1:]) for k in range(len(dims))]
        hashes = [np.arange(d) * s for d, s in zip(dims, strides)]
        return cls(hashes, [np.ones(d) for d in dims], total)

    def count_sketch(self, k: int, x: np.ndarray) -> np.ndarray:
        """``C^(k) x`` for a single factor."""
        return np.bincount(self.hashes[k], weights=self.signs[k] * x, minlength=self.rows)

    def _apply_tensor(self, factors):
        if self.order == 1:
            return self.count_sketch(0, factors[0])
        spectrum = fft(self.count_sketch(0, factors[0]))
        for k in range(1, self.order):
            spectrum = spectrum * fft(self.count_sketch(k, factors[k]))
        return ifft(spectrum).real

    def flat_tables(self) -> tuple[np.ndarray, np.ndarray]:
        """Hash bucket and sign of every flat input coordinate."""
        h = self.hashes[0]
        s = self.signs[0]
        for hk, sk in zip(self.hashes[1:], self.signs[1:]):
            h = np.add.outer(h, hk).ravel() % self.rows
            s = np.multiply.outer(s, sk).ravel()
        return h, s

    def _apply_many(self, xs):
        h, s = self.flat_tables()
        mat = sp.csr_matrix((s, (h, np.arange(h.size))), shape=(self.rows, h.size))
        return np.asarray((mat @ xs.T).T)


class RecursiveSketch(LinearSketch):
    """Sketch-and-reduce composition of fast tensor JL stages.

    ``base`` maps the last factor to the intermediate width; ``combines[j]``
    maps ``x_j ⊗ v`` (``v`` the running sketch) for ``j = c-2, ..., 0``. The
    last combine applied, ``combines[0]``, produces the final ``m`` rows.
    """

    family = "recursive"

    def __init__(
        self,
        factor_dims: Sequence[int],
        base: FastTensorJL,
        combines: Sequence[FastTensorJL],
        config: SketchConfig | None = None,
    ):
        dims = tuple(int(d) for d in factor_dims)
        if len(combines) != len(dims) - 1:
            raise ShapeError(f"need {len(dims) - 1} combine stages, got {len(combines)}")
        if base.factor_dims != (dims[-1],):
            raise ShapeError("base stage must act on the last factor")
        width = base.rows
        for j in range(len(dims) - 2, -1, -1):
            if combines[j].factor_dims != (dims[j], width):
                raise ShapeError(f"combine stage {j} has dims {combines[j].factor_dims}, expected {(dims[j], width)}")
            width = combines[j].rows
        super().__init__(dims, width, config)
        self.base = base
        self.combines = list(combines)

    @classmethod
    def from_stream(cls, config: SketchConfig, stream: RngStream) -> "RecursiveSketch":
        dims = config.factor_dims
        c = len(dims)
        m = config.rows
        inner = max(1, math.ceil(config.epsilon_split_scale * m))

        def stage(stage_dims, rows, k):
            cfg = SketchConfig("fast_tensor_jl", stage_dims, rows, config.seed)
            return FastTensorJL.from_stream(cfg, stream.substream(k))

        base = stage((dims[-1],), m if c == 1 else inner, 0)
        combines: list[FastTensorJL] = [None] * (c - 1)  # type: ignore[list-item]
        width = base.rows
        for k, j in enumerate(range(c - 2, -1, -1), start=1):
            combines[j] = stage((dims[j], width), m if j == 0 else inner, k)
            width = combines[j].rows
        return cls(dims, base, combines, config)

    def stages(self) -> list[FastTensorJL]:
        """Stages in application order."""
        return [self.base] + self.combines[::-1]

    def _apply_tensor(self, factors):
        v = self.base._apply_tensor([factors[-1]])
        for j in range(self.order - 2, -1, -1):
            v = self.combines[j]._apply_tensor([factors[j], v])
        return v

    def _apply_many(self, xs):
        k = xs.shape[0]
        dims = self.factor_dims
        w = self.base._apply_many(xs.reshape(-1, dims[-1]))
        w = w.reshape(k, *dims[:-1], self.base.rows)
        for j in range(self.order - 2, -1, -1):
            stage = self.combines[j]
            lead = w.shape[:-2]
            w = stage._apply_many(w.reshape(-1, dims[j] * w.shape[-1])).reshape(*lead, stage.rows)
        return w


_CONSTRUCTORS = {
    "dense_rows": DenseRowsSketch,
    "fast_tensor_jl": FastTensorJL,
    "count_sketch_tensor": CountSketchTensor,
    "recursive": RecursiveSketch,
}


def build(config: SketchConfig, trial: int | None = None, stream: RngStream | None = None) -> LinearSketch:
    """Construct the frozen sketch described by ``config``.

    The randomness comes from ``stream`` when given, else from the config
    seed; ``trial`` selects the Monte-Carlo substream for trial ``t``.
    """
    if stream is None:
        stream = RngStream(config.seed)
    if trial is not None:
        stream = stream.trial(trial)
    return _CONSTRUCTORS[config.family].from_stream(config, stream)


def identity_sketch(factor_dims: Sequence[int]) -> CountSketchTensor:
    return CountSketchTensor.identity(factor_dims)
