import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tensorsketch import core
from tensorsketch.errors import InputError, ShapeError


def test_kron_vec_hand_case():
    assert core.kron_vec([1, 2], [3, 4]).tolist() == [3, 4, 6, 8]


def test_kron_vec_empty_rejected():
    with pytest.raises(ShapeError):
        core.kron_vec([], [1.0])


def test_kron_vec_nan_rejected():
    with pytest.raises(InputError):
        core.kron_vec([np.nan], [1.0])


def test_kron_matches_numpy(gen):
    for _ in range(20):
        a, b = gen.standard_normal(gen.integers(1, 6)), gen.standard_normal(gen.integers(1, 6))
        np.testing.assert_array_equal(core.kron_vec(a, b), np.kron(a, b))
        a, b = gen.standard_normal((3, 2)), gen.standard_normal((2, 4))
        np.testing.assert_allclose(core.kron_mat(a, b), np.kron(a, b), rtol=0, atol=1e-15)


def test_kron_all_order():
    np.testing.assert_array_equal(core.kron_all([[1, 2], [1, 0], [0, 1]]), np.kron(np.kron([1, 2], [1, 0]), [0, 1]))


def test_mixed_product(gen):
    for _ in range(50):
        a, b = gen.standard_normal((3, 4)), gen.standard_normal((2, 5))
        x, y = gen.standard_normal(4), gen.standard_normal(5)
        lhs = core.kron_mat(a, b) @ core.kron_vec(x, y)
        rhs = core.kron_vec(a @ x, b @ y)
        assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(rhs)


def test_inner_product_factorizes(gen):
    for _ in range(50):
        x, z = gen.standard_normal(6), gen.standard_normal(6)
        y, t = gen.standard_normal(3), gen.standard_normal(3)
        lhs = core.kron_vec(x, y) @ core.kron_vec(z, t)
        assert lhs == pytest.approx((x @ z) * (y @ t), rel=1e-12, abs=1e-12)


def test_face_split_identity(gen):
    for _ in range(50):
        a, b = gen.standard_normal((4, 3)), gen.standard_normal((4, 5))
        x, y = gen.standard_normal(3), gen.standard_normal(5)
        lhs = core.face_split(a, b) @ core.kron_vec(x, y)
        np.testing.assert_allclose(lhs, (a @ x) * (b @ y), rtol=1e-12, atol=1e-12)


def test_face_split_rows_are_kron(gen):
    a, b = gen.standard_normal((2, 3)), gen.standard_normal((2, 2))
    f = core.face_split(a, b)
    for r in range(2):
        np.testing.assert_array_equal(f[r], np.kron(a[r], b[r]))


def test_face_split_row_mismatch():
    with pytest.raises(ShapeError):
        core.face_split(np.ones((2, 2)), np.ones((3, 2)))


def test_hadamard_prod_and_direct_sum():
    assert core.hadamard_prod([1, 2], [3, 4]).tolist() == [3, 8]
    with pytest.raises(ShapeError):
        core.hadamard_prod([1, 2], [3])
    assert core.direct_sum([1], [2, 3]).tolist() == [1, 2, 3]
    assert core.direct_sum([], []).size == 0


def test_hadamard_matrix_matches_scipy():
    for k in range(6):
        np.testing.assert_array_equal(core.hadamard_matrix(2**k), scipy.linalg.hadamard(2**k))


def test_fwht_hand_cases():
    assert core.fwht([1, 0, 0, 0]).tolist() == [1, 1, 1, 1]
    assert core.fwht([1, 1]).tolist() == [2, 0]
    assert core.fwht([5.0]).tolist() == [5.0]


def test_fwht_non_power_of_two():
    with pytest.raises(ShapeError):
        core.fwht([1, 2, 3])


def test_fwht_vs_naive(gen):
    for _ in range(50):
        d = 2 ** int(gen.integers(0, 11))
        x = gen.standard_normal(d)
        np.testing.assert_allclose(core.fwht(x), scipy.linalg.hadamard(d) @ x, rtol=1e-12, atol=1e-12 * d)


def test_fwht_involution_and_rows(gen):
    x = gen.standard_normal((3, 16))
    np.testing.assert_allclose(core.fwht(core.fwht(x)) / 16, x, atol=1e-14)
    buf = x.copy()
    assert core.fwht_inplace(buf) is buf


def test_fft_matches_numpy(gen):
    for k in range(9):
        a = gen.standard_normal(2**k) + 1j * gen.standard_normal(2**k)
        np.testing.assert_allclose(core.fft(a), np.fft.fft(a), atol=1e-11)
        np.testing.assert_allclose(core.ifft(core.fft(a)), a, atol=1e-13)


def test_fft_non_power_of_two():
    with pytest.raises(ShapeError):
        core.fft(np.ones(6))


def test_circular_convolve_hand_case():
    np.testing.assert_allclose(core.circular_convolve([1, 2, 0, 0], [0, 1, 0, 0]), [0, 1, 2, 0], atol=1e-15)


def naive_circular(x, y):
    n = len(x)
    return np.array([sum(x[j] * y[(i - j) % n] for j in range(n)) for i in range(n)])


def test_circular_convolve_vs_naive(gen):
    for _ in range(50):
        n = 2 ** int(gen.integers(0, 9))
        x, y = gen.standard_normal(n), gen.standard_normal(n)
        ref = naive_circular(x, y)
        np.testing.assert_allclose(core.circular_convolve(x, y), ref, rtol=1e-10, atol=1e-10)


def test_power_of_two_helpers():
    assert [core.next_power_of_two(n) for n in (1, 2, 3, 5, 64, 65)] == [1, 2, 4, 8, 64, 128]
    assert core.is_power_of_two(1) and not core.is_power_of_two(0) and not core.is_power_of_two(12)


# keep squared magnitudes clear of underflow
finite = st.floats(-1e3, 1e3, allow_nan=False).filter(lambda v: v == 0 or abs(v) > 1e-50)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(1, 5), elements=finite), arrays(np.float64, st.integers(1, 5), elements=finite))
def test_kron_norm_multiplicative(x, y):
    k = core.kron_vec(x, y)
    assert k.size == x.size * y.size
    assert np.linalg.norm(k) == pytest.approx(np.linalg.norm(x) * np.linalg.norm(y), rel=1e-12, abs=1e-300)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 8).flatmap(lambda k: arrays(np.float64, 2**k, elements=finite)))
def test_fwht_parseval(x):
    y = core.fwht(x)
    assert y @ y == pytest.approx(x.size * (x @ x), rel=1e-10, abs=1e-9)
