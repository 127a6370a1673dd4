import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate as sp_integrate

from sqfam.features import (
    CosineFeatures,
    PolynomialFeatures,
    TabulatedFeatures,
    eval_features,
    random_cosine_features,
)
from sqfam.kernel import (
    SquaredKernel,
    closed_form_cosine_gaussian,
    compute_kernel,
    kernel_from_dict,
    m_kernel,
    moment_tensor,
    psd_check,
)
from sqfam.measure import BoxLebesgue, GaussianMeasure, MonteCarlo, Quadrature

UNIT = BoxLebesgue([0.0], [1.0])
LINEAR_K = np.array([[1 / 3, 1 / 2], [1 / 2, 1.0]])


class TestComputeKernel:
    def test_linear_features(self):
        K = compute_kernel(PolynomialFeatures(1), UNIT, Quadrature(64))
        np.testing.assert_allclose(K.matrix, LINEAR_K, rtol=1e-14)

    def test_bias_only(self):
        fmap = TabulatedFeatures([0.0, 1.0], np.empty((2, 0)))
        K = compute_kernel(fmap, UNIT)
        np.testing.assert_allclose(K.matrix, [[1.0]])

    def test_monte_carlo_within_error(self):
        K = compute_kernel(PolynomialFeatures(1), UNIT, MonteCarlo(100_000, 3))
        assert np.all(np.abs(K.matrix - LINEAR_K) <= 4 * K.error_estimate)
        assert K.error_estimate > 0

    def test_against_scipy_quad(self):
        fmap = random_cosine_features(4, 1, 2.0, 1)
        mu = BoxLebesgue([-0.5], [1.5])
        K = compute_kernel(fmap, mu)

        def entry(i, j):
            return sp_integrate.quad(lambda x: np.prod(eval_features(fmap, [x])[[i, j]]), -0.5, 1.5)[0]

        oracle = np.array([[entry(i, j) for j in range(4)] for i in range(4)])
        np.testing.assert_allclose(K.matrix, oracle, atol=1e-12)

    def test_symmetric_and_scheme_recorded(self):
        K = compute_kernel(random_cosine_features(5, 2, 1.0, 0), GaussianMeasure([0.0, 0.0], np.eye(2)))
        np.testing.assert_array_equal(K.matrix, K.matrix.T)
        assert K.scheme_used == Quadrature(64)

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError):
            SquaredKernel(np.array([[1.0, 0.0], [0.0, -1.0]]))

    def test_dict_round_trip(self):
        K = compute_kernel(PolynomialFeatures(2), UNIT)
        back = kernel_from_dict(K.to_dict())
        np.testing.assert_array_equal(back.matrix, K.matrix)
        assert back.scheme == K.scheme


class TestClosedFormCosine:
    def test_zero_frequencies(self):
        fmap = CosineFeatures([[0.0]], [0.0])
        K = closed_form_cosine_gaussian(fmap, GaussianMeasure([0.0], [[1.0]]))
        np.testing.assert_allclose(K.matrix, np.ones((2, 2)), rtol=1e-15)

    def test_bias_entry(self):
        fmap = CosineFeatures([[1.0]], [0.0], scale=0.7)
        K = closed_form_cosine_gaussian(fmap, GaussianMeasure([0.0], [[1.0]]))
        np.testing.assert_allclose(K.matrix[0, 1], 0.7 * np.exp(-0.5), rtol=1e-14)

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 10_000), bw=st.floats(0.2, 2.0))
    def test_agrees_with_quadrature(self, seed, bw):
        fmap = random_cosine_features(4, 2, bw, seed)
        mu = GaussianMeasure([0.3, -0.2], [[0.8, 0.1], [0.1, 0.5]])
        diff = closed_form_cosine_gaussian(fmap, mu).matrix - compute_kernel(fmap, mu, Quadrature(64)).matrix
        assert np.max(np.abs(diff)) < 1e-8


class TestMomentTensor:
    def test_order_two_is_kernel(self):
        fmap = PolynomialFeatures(2)
        T = moment_tensor(fmap, UNIT, 2)
        K = compute_kernel(fmap, UNIT).matrix
        for i in range(3):
            for j in range(3):
                alpha = [0, 0, 0]
                alpha[i] += 1
                alpha[j] += 1
                np.testing.assert_allclose(T[tuple(alpha)], K[i, j], rtol=1e-14)

    def test_fourth_moments(self):
        T = moment_tensor(PolynomialFeatures(1), UNIT, 4)
        np.testing.assert_allclose(T[(4, 0)], 1 / 5, rtol=1e-14)
        np.testing.assert_allclose(T[(1, 3)], 1 / 2, rtol=1e-14)

    def test_odd_order_rejected(self):
        with pytest.raises(ValueError):
            moment_tensor(PolynomialFeatures(1), UNIT, 3)


class TestMKernel:
    def test_m_one(self):
        np.testing.assert_array_equal(m_kernel(LINEAR_K, 1), LINEAR_K)

    def test_scalar(self):
        np.testing.assert_array_equal(m_kernel(np.array([[2.0]]), 3), 2 * np.eye(3))


class TestPsdCheck:
    def test_linear_kernel(self):
        ok, lam = psd_check(LINEAR_K)
        assert ok
        np.testing.assert_allclose(lam, np.linalg.eigvalsh(LINEAR_K)[0], rtol=1e-12)
        np.testing.assert_allclose(np.linalg.det(LINEAR_K), 1 / 12, rtol=1e-12)

    def test_rank_deficient(self):
        grid = np.linspace(0, 1, 5)
        K = compute_kernel(TabulatedFeatures(grid, np.column_stack([grid, 2 * grid])), UNIT)
        ok, lam = psd_check(K)
        assert not ok
        assert abs(lam) < 1e-12

    def test_identity(self):
        assert psd_check(np.eye(3)) == (True, 1.0)
