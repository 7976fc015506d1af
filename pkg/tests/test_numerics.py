import numpy as np
import pytest

from branchnet.errors import NumericalError, ShapeError, ValidationError
from branchnet.numerics import as_matrix, hadamard, make_rng, matmul, normal_sample


def naive_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            total = 0.0
            for k in range(a.shape[1]):
                total += a[i, k] * b[k, j]
            out[i, j] = total
    return out


class TestMatmul:
    def test_identity(self):
        m = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(matmul(np.eye(2), m), m)

    def test_row_times_column(self):
        np.testing.assert_array_equal(matmul([[1.0, 2.0]], [[3.0], [4.0]]), [[11.0]])

    def test_random_against_triple_loop(self, rng):
        a = rng.normal(size=(5, 7))
        b = rng.normal(size=(7, 3))
        np.testing.assert_allclose(matmul(a, b), naive_matmul(a, b), rtol=1e-12, atol=1e-14)

    @pytest.mark.parametrize("dims", [(1, 1, 1), (2, 8, 3), (8, 8, 8), (3, 1, 6), (7, 5, 2)])
    def test_small_dims_against_triple_loop(self, rng, dims):
        n, k, m = dims
        a = rng.normal(size=(n, k))
        b = rng.normal(size=(k, m))
        np.testing.assert_allclose(matmul(a, b), naive_matmul(a, b), rtol=1e-12, atol=1e-14)

    def test_associativity(self, rng):
        for _ in range(10):
            a = rng.normal(size=(4, 6))
            b = rng.normal(size=(6, 5))
            c = rng.normal(size=(5, 3))
            np.testing.assert_allclose(matmul(matmul(a, b), c), matmul(a, matmul(b, c)), rtol=1e-9, atol=1e-12)

    def test_mismatch_carries_both_shapes(self):
        with pytest.raises(ShapeError) as info:
            matmul(np.ones((2, 3)), np.ones((2, 3)))
        assert info.value.shapes == ((2, 3), (2, 3))
        assert "(2, 3)" in str(info.value)

    def test_non_finite_result_rejected(self):
        with pytest.raises(NumericalError):
            matmul([[1e308, 1e308]], [[1e308], [1e308]])


class TestHadamard:
    def test_zero(self):
        np.testing.assert_array_equal(hadamard([1, 2, 3], [0, 0, 0]), [0, 0, 0])

    def test_product(self):
        np.testing.assert_array_equal(hadamard([1, 2], [3, 4]), [3, 8])

    def test_ones_is_identity(self, rng):
        v = rng.normal(size=9)
        np.testing.assert_array_equal(hadamard(v, np.ones(9)), v)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            hadamard([1, 2], [1, 2, 3])


class TestNormalSample:
    def test_zero_stddev(self):
        np.testing.assert_array_equal(normal_sample(make_rng(7), 0.0, 0.0, 4), np.zeros(4))

    def test_zero_stddev_returns_mean(self):
        np.testing.assert_array_equal(normal_sample(make_rng(7), 2.5, 0.0, 3), [2.5, 2.5, 2.5])

    def test_moments(self):
        draws = normal_sample(make_rng(2024), 0.0, 1.0, 100_000)
        assert abs(draws.mean()) < 0.02
        assert abs(draws.std() - 1.0) < 0.02

    def test_same_seed_same_draws(self):
        a = normal_sample(make_rng(99), 1.0, 3.0, 50)
        b = normal_sample(make_rng(99), 1.0, 3.0, 50)
        assert a.tobytes() == b.tobytes()

    def test_different_seeds_differ(self):
        assert not np.array_equal(normal_sample(make_rng(1), 0, 1, 10), normal_sample(make_rng(2), 0, 1, 10))

    def test_negative_stddev(self):
        with pytest.raises(ValidationError):
            normal_sample(make_rng(0), 0.0, -1.0, 3)


class TestRng:
    @pytest.mark.parametrize("seed", [-1, 2 ** 64])
    def test_seed_range(self, seed):
        with pytest.raises(ValidationError):
            make_rng(seed)

    def test_largest_seed(self):
        make_rng(2 ** 64 - 1).random()


def test_as_matrix_rejects_nan():
    with pytest.raises(NumericalError):
        as_matrix([[1.0, np.nan]])


def test_as_matrix_rejects_vector():
    with pytest.raises(ShapeError):
        as_matrix([1.0, 2.0])
