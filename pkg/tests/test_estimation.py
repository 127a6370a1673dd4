import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sqfam.estimation import (
    FitConfig,
    FitError,
    augment_data,
    data_gradient,
    experiment_approximation,
    experiment_misspecified_rate,
    fit_mle,
    grad_nll,
    kl_projection,
    kl_to_family,
    nll_augmented,
    project_feasible,
    sandwich_covariance,
    sandwich_from_kr,
)
from sqfam.features import PolynomialFeatures, eval_batch, random_cosine_features
from sqfam.measure import BoxLebesgue, Quadrature, draw, integration_nodes
from sqfam.model import SquaredFamily, canonicalize, density
from sqfam.sampling import rejection_sample
from sqfam.targets import FamilyTarget, TruncatedGaussianMixture

UNIT = BoxLebesgue([0.0], [1.0])
thetas = st.lists(st.floats(-3.0, 3.0, allow_nan=False), min_size=2, max_size=2).filter(
    lambda t: abs(t[0]) > 1e-2 and abs(t[1]) > 1e-2
)


def knorm(v, K):
    return float(np.sqrt(v @ K.matrix @ v))


class TestObjective:
    def test_augment_empty(self):
        X, a = augment_data(np.empty((0, 1)), 0)
        assert X.shape == (0, 1) and a.shape == (0,)

    def test_augment_deterministic(self):
        np.testing.assert_array_equal(augment_data(np.zeros((5, 1)), 3)[1], augment_data(np.zeros((5, 1)), 3)[1])

    def test_uniform_truth_is_zero(self, linear_family):
        X = np.linspace(0, 1, 25)[:, None]
        Phi = eval_batch(linear_family.features, X)
        assert nll_augmented([0.0, 1.0], Phi, np.zeros(25), linear_family.kernel) == pytest.approx(0.0, abs=1e-13)

    def test_scaling_moves_only_gaussian_term(self, linear_family, rng):
        X = rng.uniform(size=(30, 1))
        Phi = eval_batch(linear_family.features, X)
        a = rng.standard_normal(30)
        th = np.array([0.7, 0.4])
        z = th @ linear_family.kernel.matrix @ th
        delta = np.sum(0.5 * (a - np.log(4 * z)) ** 2 - 0.5 * (a - np.log(z)) ** 2)
        K = linear_family.kernel
        assert nll_augmented(2 * th, Phi, a, K) - nll_augmented(th, Phi, a, K) == pytest.approx(delta, rel=1e-10)

    def test_zero_numerator_is_infinite(self, linear_family):
        Phi = eval_batch(linear_family.features, [[0.5]])
        assert nll_augmented([2.0, -1.0], Phi, [0.0], linear_family.kernel) == np.inf

    @settings(max_examples=30, deadline=None)
    @given(theta=thetas, seed=st.integers(0, 1000))
    def test_gradient_matches_finite_difference(self, linear_family, theta, seed):
        rng = np.random.default_rng(seed)
        Phi = eval_batch(linear_family.features, rng.uniform(size=(20, 1)))
        th = np.asarray(theta)
        if np.min(np.abs(Phi @ th)) < 1e-2:
            return
        a = rng.standard_normal(20)
        K = linear_family.kernel
        h = 1e-6
        f = lambda t: nll_augmented(t, Phi, a, K)  # noqa: E731
        fd = [(f(th + h * e) - f(th - h * e)) / (2 * h) for e in np.eye(2)]
        np.testing.assert_allclose(grad_nll(th, Phi, a, K), fd, rtol=1e-5, atol=1e-5)

    @settings(max_examples=30, deadline=None)
    @given(theta=thetas, s=st.floats(0.1, 10.0))
    def test_data_term_scale_invariance(self, linear_family, theta, s):
        Phi = eval_batch(linear_family.features, np.linspace(0.05, 0.95, 10)[:, None])
        th = np.asarray(theta)
        if np.min(np.abs(Phi @ th)) < 1e-6:
            return
        g = data_gradient(th, Phi)
        assert th @ g == pytest.approx(-2 * Phi.shape[0], rel=1e-12)
        np.testing.assert_allclose(data_gradient(s * th, Phi), g / s, rtol=1e-12)


class TestProjection:
    @settings(max_examples=50, deadline=None)
    @given(theta=st.lists(st.floats(-20.0, 20.0), min_size=2, max_size=2))
    def test_feasible_and_idempotent(self, linear_family, theta):
        K = linear_family.kernel.matrix
        p = project_feasible(theta, K, 1e-3, 10.0)
        assert p[0] >= 1e-3 - 1e-12
        assert p @ K @ p <= 10.0 * (1 + 1e-10)
        np.testing.assert_allclose(project_feasible(p, K, 1e-3, 10.0), p, atol=1e-12)

    def test_interior_point_unchanged(self, linear_family):
        th = np.array([0.5, 0.5])
        np.testing.assert_array_equal(project_feasible(th, linear_family.kernel.matrix, 1e-3, 10.0), th)


class TestFit:
    def test_uniform_consistency(self, linear_family):
        X = draw(UNIT, 10_000, 7)
        res = fit_mle(X, linear_family, FitConfig(), seed=1)
        K = linear_family.kernel
        diff = canonicalize(res.theta_hat, K) - canonicalize([0.0, 1.0], K)
        assert knorm(diff, K) < 0.05
        assert res.converged

    def test_single_point_descends(self, linear_family):
        cfg = FitConfig(max_iters=200)
        res = fit_mle(np.array([[0.9]]), linear_family, cfg, seed=0)
        assert res.objective < res.objective_trace[0]

    def test_deterministic(self, linear_family):
        X = rejection_sample(linear_family.with_theta([1.0, 1.0]), 500, 3).samples
        a, b = fit_mle(X, linear_family, seed=5), fit_mle(X, linear_family, seed=5)
        assert a.theta_hat.tobytes() == b.theta_hat.tobytes()
        assert a.to_dict() == b.to_dict()

    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 10_000), n=st.integers(5, 300), init=st.sampled_from(["canonical_e1", "multistart"]))
    def test_constraints_and_monotone_trace(self, linear_family, seed, n, init):
        X = draw(UNIT, n, seed)
        cfg = FitConfig(init=init, starts=3, init_seed=seed, max_iters=200)
        res = fit_mle(X, linear_family, cfg, seed=seed)
        th = res.theta_hat
        assert th[0] >= cfg.epsilon - 1e-12
        assert th @ linear_family.kernel.matrix @ th <= cfg.R * (1 + 1e-10)
        trace = np.asarray(res.objective_trace)
        assert np.all(np.diff(trace) <= 1e-12 * np.maximum(1.0, np.abs(trace[:-1])))

    def test_supplied_init(self, linear_family):
        cfg = FitConfig(init="supplied", theta0=(0.5, 0.5), max_iters=1)
        res = fit_mle(draw(UNIT, 10, 0), linear_family, cfg)
        assert res.objective_trace[0] == pytest.approx(
            nll_augmented([0.5, 0.5], eval_batch(linear_family.features, draw(UNIT, 10, 0)),
                          augment_data(np.zeros((10, 1)), 0)[1], linear_family.kernel)
        )

    def test_rejects_bad_config(self):
        with pytest.raises(ValueError):
            FitConfig(R=0.5)
        with pytest.raises(ValueError):
            FitConfig(init="supplied")

    def test_rejects_wrong_width(self, linear_family):
        with pytest.raises((ValueError, FitError)):
            fit_mle(np.zeros((3, 2)), linear_family)


class TestKLProjection:
    def test_member_is_recovered(self):
        fam = SquaredFamily.build(random_cosine_features(5, 1, 4.0, 1), UNIT)
        th = canonicalize(np.array([0.6, -0.3, 0.2, 0.5, 1.0]), fam.kernel)
        nodes, w = integration_nodes(UNIT, Quadrature(256))
        q = density(fam.with_theta(th), nodes)
        res = kl_projection(q, nodes, w, fam, FitConfig(init="multistart", starts=5, max_iters=3000), full_output=True)
        assert knorm(res.theta - th, fam.kernel) < 1e-3
        assert res.kl < 1e-8

    def test_kl_at_projection_is_minimal(self, linear_family, rng):
        target = TruncatedGaussianMixture([1.0], [0.3], [0.15])
        nodes, w = integration_nodes(UNIT, Quadrature(256))
        q = target.pdf(nodes)
        th = kl_projection(q, nodes, w, linear_family)
        best = kl_to_family(q, nodes, w, linear_family, th)
        for _ in range(30):
            other = canonicalize(th + 0.05 * rng.standard_normal(2), linear_family.kernel)
            assert kl_to_family(q, nodes, w, linear_family, other) >= best - 1e-10
        assert th[0] >= 1e-3 - 1e-12
        assert th @ linear_family.kernel.matrix @ th == pytest.approx(1.0, rel=1e-10)


class TestSandwich:
    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), degree=st.integers(1, 3))
    def test_unit_ratio_reduction(self, seed, degree):
        fam = SquaredFamily.build(PolynomialFeatures(degree), UNIT)
        K = fam.kernel.matrix
        th = canonicalize(np.random.default_rng(seed).standard_normal(fam.n), K)
        _, _, Khat = sandwich_from_kr(K, K, th)
        np.testing.assert_allclose(Khat, 0.25 * np.linalg.inv(K), atol=1e-8 * max(1.0, np.abs(np.linalg.inv(K)).max()))

    def test_well_specified_grid(self, linear_family):
        th = canonicalize([1.0, 0.5], linear_family.kernel)
        nodes, w = integration_nodes(UNIT, Quadrature(64))
        q = density(linear_family.with_theta(th), nodes)
        _, _, Khat = sandwich_covariance(q, nodes, w, th, linear_family)
        np.testing.assert_allclose(Khat, 0.25 * np.linalg.inv(linear_family.kernel.matrix), atol=1e-10)


class TestExperiments:
    def test_approximation_in_span(self):
        fam = SquaredFamily.build(random_cosine_features(4, 1, 3.0, 0), UNIT)
        th = canonicalize(np.array([0.5, -0.4, 0.3, 1.0]), fam.kernel)
        report, rows = experiment_approximation(FamilyTarget(fam.with_theta(th)), (4, 8), (0,), 3.0, grid_nodes=256)
        assert report["median_kl"][0] < 1e-4
        assert len(rows) == 2

    def test_well_specified_rate(self, linear_family):
        target = FamilyTarget(linear_family.with_theta(canonicalize([1.0, 0.6], linear_family.kernel)))
        report, _ = experiment_misspecified_rate(target, linear_family, (200, 3200), 20, 0, FitConfig())
        med = [r["median_sqrtN_kl"] for r in report["per_N"]]
        assert med[1] < med[0]
        assert report["kl_star"] < 1e-8

    def test_reports_are_deterministic(self, linear_family):
        target = TruncatedGaussianMixture([1.0], [0.4], [0.2])
        a = experiment_misspecified_rate(target, linear_family, (100,), 3, 9, FitConfig())
        b = experiment_misspecified_rate(target, linear_family, (100,), 3, 9, FitConfig())
        assert a == b
