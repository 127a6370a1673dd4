import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sqfam.features import (
    ConditionedFeatures,
    CosineFeatures,
    PolynomialFeatures,
    ReluFeatures,
    TabulatedFeatures,
    eval_batch,
    eval_features,
    feature_map_from_dict,
    random_cosine_features,
    random_relu_features,
    span_rank,
)

coords = st.floats(-3.0, 3.0, allow_nan=False)


class TestEvaluation:
    def test_degree_one(self):
        np.testing.assert_array_equal(eval_features(PolynomialFeatures(1), [0.5]), [0.5, 1.0])

    def test_zero_frequency_cosine(self):
        fmap = CosineFeatures([[0.0]], [0.0])
        np.testing.assert_array_equal(eval_features(fmap, [0.3]), [1.0, 1.0])

    def test_degree_two(self):
        np.testing.assert_array_equal(eval_features(PolynomialFeatures(2), [0.5]), [0.25, 0.5, 1.0])

    def test_two_dimensional_ordering(self):
        fmap = PolynomialFeatures(2, 2)
        x = np.array([2.0, 3.0])
        np.testing.assert_array_equal(eval_features(fmap, x), [4.0, 6.0, 9.0, 2.0, 3.0, 1.0])

    def test_batch_rows_match_pointwise(self):
        fmap = random_cosine_features(5, 2, 1.5, seed=3)
        X = np.array([[0.1, -0.4], [2.0, 0.7]])
        B = eval_batch(fmap, X)
        for row, x in zip(B, X):
            np.testing.assert_array_equal(row, eval_features(fmap, x))

    def test_empty_batch(self):
        assert eval_batch(PolynomialFeatures(2), np.empty((0, 1))).shape == (0, 3)

    def test_identical_rows(self):
        B = eval_batch(random_relu_features(4, 1, seed=1), np.full((6, 1), 0.37))
        assert np.all(B == B[0])

    def test_wrong_dimension_rejected(self):
        with pytest.raises(ValueError):
            eval_batch(PolynomialFeatures(1, 2), np.zeros((3, 3)))

    def test_tabulated_outside_grid_rejected(self):
        fmap = TabulatedFeatures([0.0, 1.0], [[0.0], [1.0]])
        with pytest.raises(ValueError):
            eval_features(fmap, [1.5])

    @settings(max_examples=50, deadline=None)
    @given(x=coords, y=coords)
    def test_bias_is_last_and_constant(self, x, y):
        for fmap in (PolynomialFeatures(3, 2), random_cosine_features(4, 2, 2.0, 0), random_relu_features(3, 2, 0)):
            assert eval_features(fmap, [x, y])[-1] == 1.0


class TestSpanRank:
    def test_linear_on_three_probes(self):
        # rank of the 3x2 Vandermonde matrix, by SVD
        V = np.array([[0.0, 1.0], [0.5, 1.0], [1.0, 1.0]])
        expected = int(np.sum(np.linalg.svd(V, compute_uv=False) > 1e-12))
        assert expected == 2
        assert span_rank(PolynomialFeatures(1), [[0.0], [0.5], [1.0]]) == expected

    def test_single_probe(self):
        assert span_rank(random_cosine_features(6, 1, 1.0, 0), [[0.2]]) == 1

    def test_proportional_tabulated(self):
        # psi = (2, 1) * 1 everywhere
        grid = np.linspace(0, 1, 11)
        assert span_rank(TabulatedFeatures(grid, np.full((11, 1), 2.0)), grid[:, None]) == 1

    def test_degenerate_tabulated(self):
        grid = np.linspace(0, 1, 11)
        fmap = TabulatedFeatures(grid, np.column_stack([grid, 2 * grid]))
        probes = grid[:, None]
        # (x, 2x, 1) spans two directions; dropping the bias leaves one
        assert span_rank(fmap, probes) == 2
        assert np.linalg.matrix_rank(eval_batch(fmap, probes)[:, :2]) == 1


class TestRandomFeatures:
    def test_nested_in_n(self):
        small = random_cosine_features(8, 1, 10.0, seed=4)
        large = random_cosine_features(32, 1, 10.0, seed=4)
        np.testing.assert_array_equal(small.frequencies, large.frequencies[:7])
        np.testing.assert_array_equal(small.phases, large.phases[:7])

    def test_seed_determinism(self):
        a, b = random_relu_features(5, 2, 9), random_relu_features(5, 2, 9)
        np.testing.assert_array_equal(a.weights, b.weights)


class TestConditioned:
    def test_substitution(self):
        fmap = ConditionedFeatures(PolynomialFeatures(1, 2), (1,), [0.5])
        np.testing.assert_array_equal(eval_features(fmap, [0.3]), [0.3, 0.5, 1.0])


@pytest.mark.parametrize(
    "fmap",
    [
        PolynomialFeatures(2, 2),
        CosineFeatures([[1.0], [2.0]], [0.1, 0.2], 0.5),
        ReluFeatures([[1.0], [-1.0]], [0.0, 0.5]),
        TabulatedFeatures([0.0, 0.5, 1.0], [[0.0], [1.0], [0.0]]),
        ConditionedFeatures(PolynomialFeatures(1, 2), (0,), [0.25]),
    ],
)
def test_dict_round_trip(fmap):
    back = feature_map_from_dict(fmap.to_dict())
    X = np.linspace(0, 1, 7)[:, None] * np.ones((1, fmap.input_dim))
    np.testing.assert_array_equal(eval_batch(back, X), eval_batch(fmap, X))
