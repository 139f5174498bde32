"""Brute-force matrices built directly from a sketch's frozen randomness.

These never call the library's application code, so they serve as an
independent check of both the fast and the explicit paths.
"""
import itertools
import math

import numpy as np
import scipy.linalg

from tensorsketch.sketches import CountSketchTensor, DenseRowsSketch, FastTensorJL, RecursiveSketch


def dense_rows_matrix(s: DenseRowsSketch) -> np.ndarray:
    rows = []
    for r in range(s.rows):
        row = np.ones(1)
        for t in s.matrices:
            row = np.kron(row, t[r])
        rows.append(row)
    return np.array(rows) / math.sqrt(s.rows)


def fast_tensor_jl_matrix(s: FastTensorJL) -> np.ndarray:
    total = math.prod(s.padded_dims)
    diag = np.ones(1)
    for sg in s.signs:
        diag = np.kron(diag, sg)
    sample = np.zeros((s.rows, total))
    for r in range(s.rows):
        flat = 0
        for idx, p in zip(s.indices, s.padded_dims):
            flat = flat * p + int(idx[r])
        sample[r, flat] = 1.0
    full = sample @ scipy.linalg.hadamard(total) @ np.diag(diag) / math.sqrt(s.rows)
    # keep the columns of unpadded coordinates, in lexicographic order
    keep = [
        sum(i * math.prod(s.padded_dims[k + 1:]) for k, i in enumerate(multi))
        for multi in itertools.product(*(range(d) for d in s.factor_dims))
    ]
    return full[:, keep]


def count_sketch_matrix(s: CountSketchTensor) -> np.ndarray:
    cols = []
    for multi in itertools.product(*(range(d) for d in s.factor_dims)):
        col = np.zeros(s.rows)
        bucket = sum(int(h[i]) for h, i in zip(s.hashes, multi)) % s.rows
        col[bucket] = math.prod(float(sg[i]) for sg, i in zip(s.signs, multi))
        cols.append(col)
    return np.array(cols).T


def recursive_matrix(s: RecursiveSketch) -> np.ndarray:
    # last factor first: x_{c-1} -> base; then x_j ⊗ v -> combine j
    dims = s.factor_dims
    m = fast_tensor_jl_matrix(s.base)
    for j in range(len(dims) - 2, -1, -1):
        stage = fast_tensor_jl_matrix(s.combines[j])
        m = stage @ np.kron(np.eye(dims[j]), m)
    return m


def oracle_matrix(s) -> np.ndarray:
    if isinstance(s, DenseRowsSketch):
        return dense_rows_matrix(s)
    if isinstance(s, FastTensorJL):
        return fast_tensor_jl_matrix(s)
    if isinstance(s, CountSketchTensor):
        return count_sketch_matrix(s)
    if isinstance(s, RecursiveSketch):
        return recursive_matrix(s)
    raise TypeError(type(s))


def kron_all(factors) -> np.ndarray:
    out = np.ones(1)
    for f in factors:
        out = np.kron(out, f)
    return out


def relative_error(out, matrix, x) -> float:
    """``‖out − Mx‖`` over the cancellation-free scale ``‖|M||x|‖``.

    The scale equals ``‖Mx‖`` when no cancellation occurs and stays positive
    when the exact product is zero.
    """
    ref = matrix @ x
    scale = np.linalg.norm(np.abs(matrix) @ np.abs(x))
    return float(np.linalg.norm(out - ref) / scale) if scale > 0 else float(np.linalg.norm(out))
