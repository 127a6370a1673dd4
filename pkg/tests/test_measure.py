import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sqfam.measure import (
    BoxLebesgue,
    DiscreteMeasure,
    GaussianMeasure,
    MonteCarlo,
    Quadrature,
    draw,
    integrate,
    integration_nodes,
    make_rng,
    measure_from_dict,
    parse_scheme,
    total_mass,
)


class TestIntegrate:
    def test_linear_on_unit_box(self):
        value, err = integrate(lambda X: X[:, 0], BoxLebesgue([0.0], [1.0]), Quadrature())
        assert abs(value - 0.5) < 1e-12
        assert err < 1e-12

    def test_gaussian_second_moment(self):
        value, _ = integrate(lambda X: X[:, 0] ** 2, GaussianMeasure([0.0], [[2.0]]), Quadrature())
        np.testing.assert_allclose(value, 2.0, rtol=1e-12)

    def test_shifted_square(self):
        # (1+x)^3/3 from 0 to 1
        value, _ = integrate(lambda X: (1 + X[:, 0]) ** 2, BoxLebesgue([0.0], [1.0]))
        np.testing.assert_allclose(value, 7 / 3, rtol=1e-14)

    def test_monte_carlo_band(self):
        value, err = integrate(lambda X: X[:, 0] ** 2, BoxLebesgue([0.0], [1.0]), MonteCarlo(20000, 5))
        assert abs(value - 1 / 3) < 4 * err

    def test_product_box(self):
        value, _ = integrate(lambda X: X[:, 0] * X[:, 1], BoxLebesgue([0.0, 1.0], [2.0, 3.0]))
        np.testing.assert_allclose(value, 2.0 * 4.0, rtol=1e-13)

    def test_discrete_is_exact(self):
        mu = DiscreteMeasure([[0.0], [1.0], [3.0]], [0.5, 1.0, 0.25])
        value, err = integrate(lambda X: X[:, 0] ** 2, mu)
        assert value == 0.0 * 0.5 + 1.0 + 9.0 * 0.25
        assert err == 0.0

    def test_correlated_gaussian_cross_moment(self):
        S = np.array([[1.0, 0.3], [0.3, 2.0]])
        value, _ = integrate(lambda X: X[:, 0] * X[:, 1], GaussianMeasure([1.0, -1.0], S))
        np.testing.assert_allclose(value, 0.3 - 1.0, rtol=1e-12)

    def test_array_integrand(self):
        value, _ = integrate(lambda X: np.stack([X[:, 0], X[:, 0] ** 2], axis=1), BoxLebesgue([0.0], [1.0]))
        np.testing.assert_allclose(value, [0.5, 1 / 3], rtol=1e-14)


class TestMass:
    def test_unit_square(self):
        assert total_mass(BoxLebesgue([0.0, 0.0], [1.0, 1.0])) == 1.0

    def test_gaussian(self):
        assert total_mass(GaussianMeasure([0.0], [[3.0]])) == 1.0

    def test_discrete(self):
        assert total_mass(DiscreteMeasure([[0.0], [1.0]], [0.5, 2.0])) == 2.5

    @pytest.mark.parametrize("mu", [BoxLebesgue([-1.0, 0.0], [2.0, 0.5]), GaussianMeasure([0.5], [[0.7]])])
    def test_weights_sum_to_mass(self, mu):
        _, w = integration_nodes(mu, Quadrature(16))
        np.testing.assert_allclose(w.sum(), total_mass(mu), rtol=1e-13)


class TestDraw:
    def test_gaussian_mean_band(self):
        n = 100_000
        X = draw(GaussianMeasure([0.0], [[1.0]]), n, 11)
        assert abs(X.mean()) < 4 / np.sqrt(n)

    def test_box_mean_band(self):
        n = 100_000
        X = draw(BoxLebesgue([0.0], [1.0]), n, 12)
        assert abs(X.mean() - 0.5) < 4 * (1 / np.sqrt(12)) / np.sqrt(n)

    def test_same_seed(self):
        mu = GaussianMeasure([0.0, 1.0], [[1.0, 0.2], [0.2, 0.5]])
        np.testing.assert_array_equal(draw(mu, 50, 3), draw(mu, 50, 3))

    def test_discrete_atoms_only(self):
        X = draw(DiscreteMeasure([[0.0], [2.0]], [1.0, 3.0]), 1000, 1)
        assert set(np.unique(X)) <= {0.0, 2.0}

    def test_streams_differ(self):
        assert make_rng(0, 500, 1).random() != make_rng(0, 500, 2).random()


@settings(max_examples=25, deadline=None)
@given(
    lo=st.floats(-2.0, 2.0),
    width=st.floats(0.1, 3.0),
    c=st.floats(-2.0, 2.0),
)
def test_quadrature_exact_on_cubics(lo, width, c):
    mu = BoxLebesgue([lo], [lo + width])
    value, _ = integrate(lambda X: (X[:, 0] - c) ** 3, mu, Quadrature(8))
    exact = ((lo + width - c) ** 4 - (lo - c) ** 4) / 4
    np.testing.assert_allclose(value, exact, rtol=1e-10, atol=1e-10)


class TestParsing:
    def test_schemes(self):
        assert parse_scheme("quad:32") == Quadrature(32)
        mc = parse_scheme("mc:1000:7")
        assert (mc.samples, mc.seed) == (1000, 7)
        with pytest.raises(ValueError):
            parse_scheme("simpson:4")

    @pytest.mark.parametrize(
        "mu",
        [BoxLebesgue([0.0], [2.0]), GaussianMeasure([0.0, 1.0], np.eye(2)), DiscreteMeasure([[1.0]], [2.0])],
    )
    def test_round_trip(self, mu):
        assert measure_from_dict(mu.to_dict()).to_dict() == mu.to_dict()

    def test_invalid_box(self):
        with pytest.raises(ValueError):
            BoxLebesgue([1.0], [0.0])

    def test_invalid_covariance(self):
        with pytest.raises(ValueError):
            GaussianMeasure([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])
