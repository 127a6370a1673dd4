"""Canned acceptance suites.

Each suite draws its random instances from ``make_rng(seed, criterion, i)``,
checks one property at the tolerances pinned in ``tolerances.json`` and
returns a report ``{"suite", "criterion", "passed", "metrics", "runtime_s",
"budget_s"}``.  ``passed`` covers the numerical check only; callers compare
``runtime_s`` with ``budget_s`` separately.
"""

from __future__ import annotations

import json
import time
from importlib import resources

import numpy as np
from scipy.optimize import brentq
from scipy.stats import chi2

from .estimation import (
    FitConfig,
    experiment_approximation,
    experiment_asymptotic_normality,
    experiment_misspecified_rate,
    kr_from_grid,
    sandwich_from_kr,
)
from .features import PolynomialFeatures, random_cosine_features, random_relu_features
from .geometry import (
    bregman_divergence,
    conformal_hessian_check,
    divergence_chain,
    fisher_augmented,
    fisher_squared,
    orthogonal_singularity_residuals,
    reverse_pinsker_bound,
    score_batch,
    sq_l2,
)
from .gfamily import GSpec, z_monomial_tensor, z_quadrature
from .kernel import moment_tensor, psd_check
from .measure import (
    BoxLebesgue,
    GaussianMeasure,
    Quadrature,
    draw,
    integrate,
    integration_nodes,
    make_rng,
)
from .model import SquaredFamily, canonicalize, conditional, density, marginal_density
from .sampling import cdf_1d, rejection_sample
from .targets import TruncatedGaussianMixture

__all__ = ["SUITES", "load_tolerances", "run_suite", "random_family"]


def load_tolerances() -> dict:
    with resources.files("sqfam").joinpath("tolerances.json").open() as fh:
        return json.load(fh)


def _random_measure(rng, d: int, allow_gaussian: bool = True):
    if allow_gaussian and rng.random() < 0.3:
        A = rng.normal(size=(d, d)) * 0.3
        return GaussianMeasure(rng.normal(size=d) * 0.5, A @ A.T + np.eye(d) * rng.uniform(0.3, 1.5))
    lo = rng.uniform(-1.0, 0.5, size=d)
    return BoxLebesgue(lo, lo + rng.uniform(0.5, 2.0, size=d))


def random_family(
    rng, d: int = 1, kinds=("polynomial", "cosine", "relu"), allow_gaussian: bool = True, bounded_ratio: bool = False
) -> SquaredFamily:
    """A random feature map and base measure with its quadrature kernel.

    ``bounded_ratio`` keeps polynomial features off Gaussian measures so the
    density is bounded relative to the base measure.
    """
    kind = kinds[int(rng.integers(len(kinds)))]
    seed = int(rng.integers(2**31))
    if kind == "polynomial":
        fmap = PolynomialFeatures(int(rng.integers(1, 4)) if d == 1 else int(rng.integers(1, 3)), d)
        allow_gaussian = allow_gaussian and not bounded_ratio
    elif kind == "cosine":
        fmap = random_cosine_features(int(rng.integers(3, 7)), d, float(rng.uniform(0.5, 3.0)), seed)
    else:
        fmap = random_relu_features(int(rng.integers(3, 6)), d, seed)
        allow_gaussian = False
    return SquaredFamily.build(fmap, _random_measure(rng, d, allow_gaussian))


def _random_theta(rng, family: SquaredFamily) -> np.ndarray:
    return canonicalize(rng.standard_normal(family.n), family.kernel)


def _suite_factorisation(tol, seed):
    worst_excess, max_diff = -np.inf, 0.0
    for i in range(tol["instances"]):
        rng = make_rng(seed, 1, i)
        fam = random_family(rng, d=int(rng.integers(1, 3)))
        th = _random_theta(rng, fam)
        oracle, _ = integrate(
            lambda X: (fam.features(X) @ th) ** 2, fam.measure, Quadrature(tol["oracle_nodes"])
        )
        diff = abs(float(th @ fam.kernel.matrix @ th) - float(oracle))
        allowed = max(tol["abs_floor"], tol["error_multiplier"] * fam.kernel.error_estimate)
        max_diff = max(max_diff, diff)
        worst_excess = max(worst_excess, diff - allowed)
    return worst_excess <= 0, {"max_abs_diff": max_diff, "worst_excess_over_tolerance": float(worst_excess)}


def _suite_singularity(tol, seed):
    worst_ratio, min_aug_eig, pd_models = 0.0, np.inf, 0
    for i in range(tol["models"]):
        rng = make_rng(seed, 2, i)
        fam = random_family(rng)
        model = fam.with_theta(rng.standard_normal(fam.n))
        G = fisher_squared(model).matrix
        ratio = float(np.linalg.norm(G @ model.theta)) / max(float(np.linalg.norm(G, 2)), 1e-300)
        worst_ratio = max(worst_ratio, ratio)
        strictly_pd, _ = psd_check(fam.kernel)
        if strictly_pd:
            pd_models += 1
            min_aug_eig = min(min_aug_eig, fisher_augmented(model, 1.0).min_eigenvalue)
    ok = worst_ratio <= tol["rel_tol"] and (pd_models == 0 or min_aug_eig > 0)
    return ok, {
        "max_relative_G_theta": worst_ratio,
        "strictly_pd_models": pd_models,
        "min_augmented_eigenvalue": float(min_aug_eig),
    }


def _bounded_away_model(rng):
    # theta^T psi stays within a factor of 3 of its maximum, so the score has light tails
    fam = random_family(rng, kinds=("polynomial", "cosine"), allow_gaussian=False)
    th = rng.standard_normal(fam.n)
    th[-1] = 0.0
    grid = draw(fam.measure, 2048, rng)
    spread = float(np.max(np.abs(fam.features(grid) @ th)))
    th[-1] = 2.0 * spread + 0.5
    return fam.with_theta(canonicalize(th, fam.kernel))


def _suite_fisher_oracle(tol, seed):
    exceed, max_z = 0, 0.0
    N = tol["samples"]
    for i in range(tol["models"]):
        rng = make_rng(seed, 3, i)
        model = _bounded_away_model(rng)
        S = score_batch(model, rejection_sample(model, N, rng).samples)
        G = fisher_squared(model).matrix
        iu = np.triu_indices(model.n)
        prods = S[:, iu[0]] * S[:, iu[1]]
        est = prods.mean(axis=0)
        se = prods.std(axis=0, ddof=1) / np.sqrt(N)
        z = np.abs(est - G[iu]) / np.maximum(se, 1e-300)
        exceed += int(np.sum(z > tol["sigma_band"]))
        max_z = max(max_z, float(z.max()))
    return exceed <= tol["max_exceedances"], {"exceedances": exceed, "max_standardised_error": max_z}


def _suite_bregman_l2(tol, seed):
    max_diff = 0.0
    for i in range(tol["pairs"]):
        rng = make_rng(seed, 4, i)
        fam = random_family(rng, d=int(rng.integers(1, 3)))
        if i % 4 == 3:
            m = int(rng.integers(2, 4))
            A, B = rng.standard_normal((m, fam.n)), rng.standard_normal((m, fam.n))
            scale = np.sqrt(np.einsum("ij,jk,ik->", A, fam.kernel.matrix, A))
            A = A / scale
            B = B / np.sqrt(np.einsum("ij,jk,ik->", B, fam.kernel.matrix, B))

            def f(X, T=A):
                return fam.features(X) @ T.T

            def g(X, T=B):
                return fam.features(X) @ T.T

        else:
            A, B = _random_theta(rng, fam), _random_theta(rng, fam)

            def f(X, t=A):
                return fam.features(X) @ t

            def g(X, t=B):
                return fam.features(X) @ t

        lhs = bregman_divergence(fam.kernel, A, B)
        rhs = 2.0 * sq_l2(f, g, fam.measure, fam.kernel.scheme)
        max_diff = max(max_diff, abs(lhs - rhs))
    return max_diff <= tol["abs_tol"], {"max_abs_diff": max_diff}


def _suite_marginals(tol, seed):
    max_diff = 0.0
    k = tol["grid"]
    for i in range(tol["models"]):
        rng = make_rng(seed, 5, i)
        fam = random_family(rng, d=2, kinds=("polynomial", "cosine"))
        m = int(rng.integers(2, 4))
        model = fam.with_theta(rng.standard_normal((m, fam.n)))
        mu = fam.measure
        if isinstance(mu, BoxLebesgue):
            axes = [np.linspace(lo, hi, k + 2)[1:-1] for lo, hi in zip(mu.lower, mu.upper)]
        else:
            sd = np.sqrt(np.diag(mu.covariance))
            axes = [np.linspace(c - 2 * s, c + 2 * s, k) for c, s in zip(mu.mean, sd)]
        for x2 in axes[1]:
            cond = conditional(model, [1], [x2])
            marg = marginal_density(model, [1], [x2])
            pts = np.column_stack([axes[0], np.full(k, x2)])
            joint = density(model, pts)
            prod = density(cond, axes[0][:, None]) * marg
            max_diff = max(max_diff, float(np.max(np.abs(prod - joint))))
    return max_diff <= tol["abs_tol"], {"max_abs_diff": max_diff}


def _suite_tensor_normaliser(tol, seed):
    worst_excess, max_diff = -np.inf, 0.0
    for k in tol["orders"]:
        rng = make_rng(seed, 6, k)
        fam = random_family(rng, kinds=("polynomial", "cosine"))
        T = moment_tensor(fam.features, fam.measure, k)
        spec = GSpec.monomial(k)
        for _ in range(tol["instances"]):
            th = rng.standard_normal(fam.n)
            zt = z_monomial_tensor(th, T, k)
            zq, err = z_quadrature(spec, fam.features, fam.measure, th, return_error=True)
            diff = abs(zt - zq)
            max_diff = max(max_diff, diff)
            worst_excess = max(worst_excess, diff - max(tol["abs_floor"], err))
    return worst_excess <= 0, {"max_abs_diff": max_diff, "worst_excess_over_tolerance": float(worst_excess)}


def _suite_conformal(tol, seed):
    worst = 0.0
    for k in tol["orders"]:
        for i in range(tol["instances"]):
            rng = make_rng(seed, 7, k, i)
            fam = random_family(rng, kinds=("polynomial",), allow_gaussian=False)
            th = rng.standard_normal(fam.n)
            lhs, _, diff = conformal_hessian_check(GSpec.monomial(k), fam.features, fam.measure, th)
            worst = max(worst, diff / np.linalg.norm(lhs, 2))
    return worst <= tol["rel_tol"], {"max_relative_diff": float(worst)}


def _suite_orthogonal_singularity(tol, seed):
    rng = make_rng(seed, 8, 0)
    fam = random_family(rng, kinds=("polynomial", "cosine"), allow_gaussian=False)
    th = rng.standard_normal(fam.n)
    probes = draw(fam.measure, tol["probes"], rng)
    homogeneous = [GSpec.monomial(2), GSpec.monomial(4), GSpec.pos_homogeneous(2, 2.0), GSpec.pos_homogeneous(3, 0.5)]
    worst_h = max(
        float(np.max(np.abs(orthogonal_singularity_residuals(s, fam.features, th, probes, fam.measure))))
        for s in homogeneous
    )
    res_exp = orthogonal_singularity_residuals(GSpec.exponential(), fam.features, th, probes, fam.measure)
    max_exp = float(np.max(np.abs(res_exp)))
    ok = worst_h <= tol["homogeneous_tol"] and max_exp > tol["exponential_min_residual"]
    return ok, {"max_homogeneous_residual": worst_h, "max_exponential_residual": max_exp}


def normality_design() -> tuple[SquaredFamily, np.ndarray]:
    """``psi = (x, 1)`` on ``[0, 1]`` with ``theta* proportional to (1, 1)``."""
    fam = SquaredFamily.build(PolynomialFeatures(1), BoxLebesgue([0.0], [1.0]))
    return fam, canonicalize([1.0, 1.0], fam.kernel)


def _suite_normality(tol, seed):
    fam, ts = normality_design()
    report, _ = experiment_asymptotic_normality(fam, ts, tuple(tol["N_list"]), tol["reps"], seed)
    errs = [r["rel_frobenius_error"] for r in report["per_N"]]
    ok = report["error_non_increasing"] and errs[-1] < tol["max_final_rel_error"]
    return ok, {
        "rel_frobenius_errors": errs,
        "rel_frobenius_errors_canonical": [r["rel_frobenius_error_canonical"] for r in report["per_N"]],
        "error_non_increasing": report["error_non_increasing"],
        "failures": [r["failures"] for r in report["per_N"]],
    }


def misspec_design(bandwidth: float = 5.0):
    """Truncated ``N(0.35, 0.2^2)`` on ``[0, 1]`` against three random cosines plus bias."""
    q = TruncatedGaussianMixture([1.0], [0.35], [0.2])
    fam = SquaredFamily.build(random_cosine_features(4, 1, bandwidth, 0), q.measure)
    return q, fam


def _suite_misspec_rate(tol, seed):
    q, fam = misspec_design(tol["bandwidth"])
    cfg = FitConfig(init="multistart", starts=tol["starts"])
    report, _ = experiment_misspecified_rate(q, fam, tuple(tol["N_list"]), tol["reps"], seed, cfg)
    ok = report["median_non_increasing"] and report["final_over_initial"] <= tol["max_final_over_initial"]
    return ok, {
        "median_delta": [r["median_delta"] for r in report["per_N"]],
        "final_over_initial": report["final_over_initial"],
        "kl_star": report["kl_star"],
        "kl_below_projection": sum(r["kl_below_projection"] for r in report["per_N"]),
    }


def approx_target() -> TruncatedGaussianMixture:
    return TruncatedGaussianMixture([0.6, 0.4], [0.3, 0.7], [0.1, 0.08])


def _suite_approx_trend(tol, seed):
    seeds = tuple(int(s) + 1000 * seed for s in tol["feature_seeds"])
    report, _ = experiment_approximation(
        approx_target(), tuple(tol["n_list"]), seeds, tol["bandwidth"], grid_nodes=tol["grid_nodes"]
    )
    ok = report["median_non_increasing"] and report["loglog_slope"] <= tol["max_slope"]
    return ok, {
        "median_kl": report["median_kl"],
        "loglog_slope": report["loglog_slope"],
        "reference_slope": report["reference_slope"],
    }


def _random_pair(rng, nodes, mu):
    fam = SquaredFamily.build(random_cosine_features(6, 1, float(rng.uniform(1, 5)), int(rng.integers(2**31))), mu)
    th = canonicalize(rng.standard_normal(fam.n), fam.kernel)
    q_t = TruncatedGaussianMixture(rng.uniform(0.2, 1, 2), rng.uniform(0, 1, 2), rng.uniform(0.05, 0.3, 2))
    return fam, th, density(fam.with_theta(th), nodes), q_t


def _suite_divergence_chain(tol, seed):
    mu = BoxLebesgue([0.0], [1.0])
    nodes, w = integration_nodes(mu, Quadrature(tol["grid_nodes"]))
    min_slack, hel_violations = np.inf, 0
    for i in range(tol["pairs"]):
        rng = make_rng(seed, 12, 0, i)
        fam, th, p, q_t = _random_pair(rng, nodes, mu)
        q = q_t.pdf(nodes)
        chain = divergence_chain(p, q, w)
        min_slack = min(min_slack, chain["min_slack"])
        bound = sq_l2(
            lambda X: fam.features(X) @ th, lambda X: np.sqrt(q_t.pdf(X)), mu, Quadrature(tol["grid_nodes"])
        )
        hel_violations += int(chain["SH"] > bound + 1e-12)
    eps = tol["smoothing"]
    ratios = {"halved": [], "full": []}
    r0_floor_ok = True
    for i in range(tol["pairs"]):
        rng = make_rng(seed, 12, 1, i)
        _, _, p, q_t = _random_pair(rng, nodes, mu)
        q = q_t.pdf(nodes)
        pe, qe = (1 - eps) * p + eps, (1 - eps) * q + eps
        for variant in ratios:
            r = reverse_pinsker_bound(pe, qe, w, variant)
            ratios[variant].append(r["KL"] / r["bound"] ** 2)
        r0_floor_ok &= r["r0"] >= eps / ((1 - eps) * float(q.max()) + eps) - 1e-12
    stated = tol["pinsker_constant"]
    chain_ok = min_slack >= tol["chain_slack"] and hel_violations == 0
    reverse_ok = bool(np.all(np.array(ratios[stated]) <= 1.0))
    return chain_ok and reverse_ok, {
        "min_chain_slack": float(min_slack),
        "hellinger_bound_violations": hel_violations,
        "chain_ok": chain_ok,
        "reverse_constant": stated,
        "reverse_violations": {v: int(np.sum(np.array(r) > 1.0)) for v, r in ratios.items()},
        "max_kl_over_bound_sq": {v: float(np.max(r)) for v, r in ratios.items()},
        "r0_floor_ok": bool(r0_floor_ok),
    }


def _suite_sandwich(tol, seed):
    max_diff, bilinear, neg_def = 0.0, 0.0, True
    for i in range(tol["instances"]):
        rng = make_rng(seed, 13, i)
        fam = random_family(rng, kinds=("polynomial",), allow_gaussian=False)
        K = fam.kernel.matrix
        th = _random_theta(rng, fam)
        _, _, Khat = sandwich_from_kr(K, K, th)
        max_diff = max(max_diff, float(np.max(np.abs(Khat - 0.25 * np.linalg.inv(K)))))
        nodes, w = integration_nodes(fam.measure, Quadrature(64))
        lin = fam.features(nodes) @ th
        q = (lin**2 + 0.5 * K[-1, -1] ** 0) * np.exp(nodes[:, 0])
        q = q / float(w @ q)
        A, B, _ = sandwich_from_kr(K, kr_from_grid(q, nodes, w, fam, th), th)
        Kr = kr_from_grid(q, nodes, w, fam, th)
        bilinear = max(bilinear, abs(float(th @ B @ th) - 4.0 * float(th @ Kr @ th)))
        neg_def &= bool(np.linalg.eigvalsh(A)[-1] < 0)
    return max_diff <= tol["abs_tol"], {
        "max_abs_diff": max_diff,
        "max_bilinear_identity_error": bilinear,
        "A_negative_definite": neg_def,
    }


def _equal_mass_edges(model, bins: int) -> np.ndarray:
    mu = model.measure
    if isinstance(mu, BoxLebesgue):
        lo, hi = float(mu.lower[0]), float(mu.upper[0])
    else:
        sd = float(np.sqrt(mu.covariance[0, 0]))
        lo, hi = float(mu.mean[0]) - 12 * sd, float(mu.mean[0]) + 12 * sd
    total = float(cdf_1d(model, [hi], 128)[0])
    edges = [
        brentq(lambda x, t=j / bins: float(cdf_1d(model, [x], 128)[0]) / total - t, lo, hi, xtol=1e-12)
        for j in range(1, bins)
    ]
    return np.array(edges)


def _suite_sampler(tol, seed):
    min_p, violations = 1.0, 0
    bins, N = tol["bins"], tol["samples"]
    for i in range(tol["models"]):
        rng = make_rng(seed, 14, i)
        fam = random_family(rng, kinds=("polynomial", "cosine"), bounded_ratio=True)
        model = fam.with_theta(rng.standard_normal(fam.n))
        res = rejection_sample(model, N, rng)
        violations += int(res.envelope_violation)
        counts = np.bincount(np.searchsorted(_equal_mass_edges(model, bins), res.samples[:, 0]), minlength=bins)
        expected = N / bins
        stat = float(np.sum((counts - expected) ** 2) / expected)
        min_p = min(min_p, float(chi2.sf(stat, bins - 1)))
    return min_p >= tol["significance"] and violations == 0, {"min_p_value": min_p, "envelope_violations": violations}


SUITES = {
    "factorisation": _suite_factorisation,
    "singularity": _suite_singularity,
    "fisher_oracle": _suite_fisher_oracle,
    "bregman_l2": _suite_bregman_l2,
    "marginals": _suite_marginals,
    "tensor_normaliser": _suite_tensor_normaliser,
    "conformal": _suite_conformal,
    "orthogonal_singularity": _suite_orthogonal_singularity,
    "normality": _suite_normality,
    "misspec_rate": _suite_misspec_rate,
    "approx_trend": _suite_approx_trend,
    "divergence_chain": _suite_divergence_chain,
    "sandwich": _suite_sandwich,
    "sampler": _suite_sampler,
}


def run_suite(name: str, seed: int = 0, tolerances: dict | None = None) -> dict:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; expected one of {sorted(SUITES)}")
    tol = (tolerances or load_tolerances())[name]
    start = time.perf_counter()
    passed, metrics = SUITES[name](tol, seed)
    elapsed = time.perf_counter() - start
    return {
        "suite": name,
        "criterion": tol["criterion"],
        "seed": seed,
        "passed": bool(passed),
        "metrics": metrics,
        "runtime_s": elapsed,
        "budget_s": tol["budget_s"],
    }
