"""Dense tensor algebra and structured transforms.

Vectors and matrices are plain ``float64`` numpy arrays. The flat Kronecker
index convention is lexicographic with the leftmost factor most significant:
entry ``(i1, i2)`` of ``x ⊗ y`` lives at ``i1 * len(y) + i2``.
"""
from __future__ import annotations

import functools
from typing import Sequence

import numba
import numpy as np

from .errors import InputError, ShapeError, SizeError

MAX_ELEMENTS = 2**31


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def next_power_of_two(n: int) -> int:
    if n <= 1:
        return 1
    return 1 << (int(n) - 1).bit_length()


def as_vector(x, name: str = "x", allow_empty: bool = False) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"{name} must be one-dimensional, got shape {v.shape}")
    if v.size == 0 and not allow_empty:
        raise ShapeError(f"{name} must be non-empty")
    if not np.isfinite(v).all():
        raise InputError(f"{name} has non-finite entries")
    return v


def as_matrix(a, name: str = "A") -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise ShapeError(f"{name} must be a non-empty 2-d array, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise InputError(f"{name} has non-finite entries")
    return m


def _check_size(n: int, what: str) -> None:
    if n > MAX_ELEMENTS:
        raise SizeError(f"{what} would have {n} entries (limit {MAX_ELEMENTS})")


def kron_vec(x, y) -> np.ndarray:
    """Tensor product of two vectors, ``[x0*y0, x0*y1, ..., x_{n-1}*y_{m-1}]``."""
    x = as_vector(x, "x")
    y = as_vector(y, "y")
    _check_size(x.size * y.size, "kron_vec")
    return np.multiply.outer(x, y).ravel()


def kron_all(vectors: Sequence) -> np.ndarray:
    """``v1 ⊗ v2 ⊗ ... ⊗ vc``; a single vector is returned as-is."""
    if len(vectors) == 0:
        raise ShapeError("need at least one factor")
    return functools.reduce(kron_vec, [as_vector(v, f"factor {i}") for i, v in enumerate(vectors)])


def kron_mat(a, b) -> np.ndarray:
    """Kronecker product of matrices: block ``(i, j)`` equals ``a[i, j] * b``."""
    a = as_matrix(a, "A")
    b = as_matrix(b, "B")
    (m, n), (k, l) = a.shape, b.shape
    _check_size(m * n * k * l, "kron_mat")
    return (a[:, None, :, None] * b[None, :, None, :]).reshape(m * k, n * l)


def hadamard_prod(x, y) -> np.ndarray:
    x = as_vector(x, "x")
    y = as_vector(y, "y")
    if x.shape != y.shape:
        raise ShapeError(f"hadamard_prod needs equal lengths, got {x.size} and {y.size}")
    return x * y


def direct_sum(x, y) -> np.ndarray:
    return np.concatenate([as_vector(x, "x", allow_empty=True), as_vector(y, "y", allow_empty=True)])


def face_split(a, b) -> np.ndarray:
    """Row-wise Kronecker product: row ``i`` is ``kron_vec(a[i], b[i])``.

    Satisfies ``face_split(A, B) @ kron_vec(x, y) == (A @ x) * (B @ y)``.
    """
    a = as_matrix(a, "A")
    b = as_matrix(b, "B")
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"face_split needs equal row counts, got {a.shape[0]} and {b.shape[0]}")
    _check_size(a.shape[0] * a.shape[1] * b.shape[1], "face_split")
    return (a[:, :, None] * b[:, None, :]).reshape(a.shape[0], -1)


def hadamard_matrix(d: int) -> np.ndarray:
    """Unnormalized ``[[1, 1], [1, -1]]^{⊗k}`` of size ``d = 2**k``."""
    if not is_power_of_two(d):
        raise ShapeError(f"Hadamard size must be a power of two, got {d}")
    h = np.ones((1, 1))
    h2 = np.array([[1.0, 1.0], [1.0, -1.0]])
    while h.shape[0] < d:
        h = kron_mat(h, h2)
    return h


@numba.njit(cache=True, nogil=True)
def _fwht_1d(buf):
    n = buf.shape[0]
    h = 1
    while h < n:
        for start in range(0, n, 2 * h):
            for j in range(start, start + h):
                a = buf[j]
                b = buf[j + h]
                buf[j] = a + b
                buf[j + h] = a - b
        h *= 2


@numba.njit(cache=True, nogil=True)
def _fwht_rows(buf):
    for r in range(buf.shape[0]):
        _fwht_1d(buf[r])


@numba.njit(cache=True, nogil=True)
def sample_rotated(x, signs, idx, out, scale, first):
    """Fused ``out[r] (*)= scale * (H diag(signs) pad(x))[idx[r]]``.

    Writes when ``first`` is true, multiplies into ``out`` otherwise.
    """
    buf = np.zeros(signs.shape[0])
    for i in range(x.shape[0]):
        buf[i] = x[i] * signs[i]
    _fwht_1d(buf)
    if first:
        for r in range(idx.shape[0]):
            out[r] = scale * buf[idx[r]]
    else:
        for r in range(idx.shape[0]):
            out[r] *= buf[idx[r]]


def fwht_inplace(x: np.ndarray) -> np.ndarray:
    """Unnormalized fast Walsh-Hadamard transform along the last axis.

    A C-contiguous, writeable ``float64`` array is transformed in place and
    returned; anything else is copied first. 1-d and 2-d (batch of rows)
    inputs are accepted. The transform is its own inverse up to a factor of
    the length.
    """
    if not (
        isinstance(x, np.ndarray)
        and x.dtype == np.float64
        and x.flags.c_contiguous
        and x.flags.writeable
    ):
        x = np.array(x, dtype=np.float64)
    if x.ndim not in (1, 2):
        raise ShapeError(f"fwht expects a 1-d or 2-d array, got shape {x.shape}")
    n = x.shape[-1]
    if not is_power_of_two(n):
        raise ShapeError(f"fwht length must be a power of two, got {n}")
    _fwht_rows(x.reshape(-1, n))
    return x


def fwht(x) -> np.ndarray:
    return fwht_inplace(np.array(x, dtype=np.float64))


@functools.lru_cache(maxsize=None)
def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@functools.lru_cache(maxsize=None)
def _twiddles(n: int, inverse: bool) -> np.ndarray:
    sign = 1.0 if inverse else -1.0
    return np.exp(sign * 2j * np.pi * np.arange(n // 2) / n)


@numba.njit(cache=True, nogil=True)
def _fft_rows(buf, rev, tw):
    n = buf.shape[1]
    for r in range(buf.shape[0]):
        for i in range(n):
            j = rev[i]
            if j > i:
                t = buf[r, i]
                buf[r, i] = buf[r, j]
                buf[r, j] = t
        h = 1
        while h < n:
            step = n // (2 * h)
            for start in range(0, n, 2 * h):
                for k in range(h):
                    u = buf[r, start + k]
                    v = buf[r, start + k + h] * tw[k * step]
                    buf[r, start + k] = u + v
                    buf[r, start + k + h] = u - v
            h *= 2


def fft(a, inverse: bool = False) -> np.ndarray:
    """Iterative radix-2 decimation-in-time FFT along the last axis.

    The forward transform is unnormalized; the inverse carries the ``1/n``.
    Always returns a new ``complex128`` array.
    """
    out = np.array(a, dtype=np.complex128)
    n = out.shape[-1]
    if not is_power_of_two(n):
        raise ShapeError(f"fft length must be a power of two, got {n}")
    _fft_rows(out.reshape(-1, n), _bit_reverse(n), _twiddles(n, inverse))
    if inverse:
        out /= n
    return out


def ifft(a) -> np.ndarray:
    return fft(a, inverse=True)


def circular_convolve(x, y) -> np.ndarray:
    """``result[k] = sum_{i + j = k mod m} x[i] * y[j]`` via FFT.

    Both inputs must have the same power-of-two length; callers pad.
    """
    x = as_vector(x, "x")
    y = as_vector(y, "y")
    if x.size != y.size:
        raise ShapeError(f"circular_convolve needs equal lengths, got {x.size} and {y.size}")
    if not is_power_of_two(x.size):
        raise ShapeError(f"circular_convolve length must be a power of two, got {x.size}")
    return ifft(fft(x) * fft(y)).real
