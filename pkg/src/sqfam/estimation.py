"""Dimension-augmented maximum likelihood, KL projection and sandwich covariance.

Each observation ``x_i`` is paired with an artificial ``a_i ~ N(0, 1)`` that
is modelled as ``N(log z(theta), 1)``.  The augmented negative log-likelihood

    sum_i [ -log (theta^T psi_i)^2 + log z ] + (1/2) sum_i (a_i - log z)^2

pins the otherwise unidentified scale of ``theta``.  It is minimised by
projected gradient descent over ``{theta_1 >= epsilon, theta^T K theta <= R}``.

The three simulation experiments at the bottom return JSON-ready reports
whose content depends only on their arguments and the master seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import eval_batch, random_cosine_features
from .geometry import divergence_grid
from .kernel import SquaredKernel
from .measure import Quadrature, integration_nodes, make_rng
from .model import SquaredFamily, canonicalize
from .sampling import rejection_sample

__all__ = [
    "FitConfig",
    "FitResult",
    "FitError",
    "KLProjection",
    "augment_data",
    "nll_augmented",
    "grad_nll",
    "data_gradient",
    "project_feasible",
    "projected_descent",
    "fit_mle",
    "kl_to_family",
    "kl_projection",
    "kr_from_grid",
    "kr_from_samples",
    "sandwich_from_kr",
    "sandwich_covariance",
    "experiment_asymptotic_normality",
    "experiment_misspecified_rate",
    "experiment_approximation",
]

ARMIJO_C = 1e-4
SHRINK = 0.5
MAX_BACKTRACKS = 60
MAX_ALTERNATIONS = 50
PROJECTION_TOL = 1e-12
EIGEN_FLOOR = 1e-12
INIT_KINDS = ("canonical_e1", "supplied", "multistart")


class FitError(ArithmeticError):
    """Raised when no start yields a finite objective."""


@dataclass(frozen=True)
class FitConfig:
    """Optimiser settings.

    ``init`` is ``"canonical_e1"`` (start at ``e_1`` scaled to ``z = 1``),
    ``"supplied"`` (start at ``theta0``) or ``"multistart"`` (``e_1`` plus
    ``starts - 1`` random directions drawn with ``init_seed``).
    """

    epsilon: float = 1e-3
    R: float = 10.0
    sigma: float = 1.0
    max_iters: int = 500
    grad_tol: float = 1e-8
    init: str = "canonical_e1"
    theta0: tuple | None = None
    starts: int = 5
    init_seed: int = 0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not self.R > 1:
            raise ValueError("R must be > 1")
        if self.sigma != 1.0:
            raise ValueError("the augmentation scale is fixed at sigma = 1 for fitting")
        if self.max_iters < 1 or not self.grad_tol > 0:
            raise ValueError("max_iters must be >= 1 and grad_tol > 0")
        if self.init not in INIT_KINDS:
            raise ValueError(f"init must be one of {INIT_KINDS}")
        if self.init == "supplied" and self.theta0 is None:
            raise ValueError("init 'supplied' needs theta0")
        if self.starts < 1:
            raise ValueError("starts must be >= 1")
        if self.theta0 is not None:
            object.__setattr__(self, "theta0", tuple(float(t) for t in self.theta0))

    def to_dict(self):
        out = {
            "epsilon": self.epsilon,
            "R": self.R,
            "sigma": self.sigma,
            "max_iters": self.max_iters,
            "grad_tol": self.grad_tol,
            "init": self.init,
            "starts": self.starts,
            "init_seed": self.init_seed,
        }
        if self.theta0 is not None:
            out["theta0"] = list(self.theta0)
        return out

    @classmethod
    def from_dict(cls, spec: dict) -> "FitConfig":
        return cls(**spec)


@dataclass(frozen=True, eq=False)
class FitResult:
    theta_hat: np.ndarray
    objective: float
    grad_norm: float
    iterations: int
    active_constraints: dict
    converged: bool
    objective_trace: list = field(default_factory=list)
    start_index: int = 0

    def to_dict(self):
        return {
            "theta_hat": self.theta_hat.tolist(),
            "objective": self.objective,
            "grad_norm": self.grad_norm,
            "iterations": self.iterations,
            "active_constraints": dict(self.active_constraints),
            "converged": self.converged,
            "start_index": self.start_index,
            "objective_trace": list(self.objective_trace),
        }


def augment_data(X, seed):
    """Pair each row of ``X`` with an independent standard normal ``a_i``."""
    X = np.asarray(X, dtype=float)
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    return X, rng.standard_normal(X.shape[0])


def _kmat(K) -> np.ndarray:
    return K.matrix if isinstance(K, SquaredKernel) else np.asarray(K, dtype=float)


def nll_augmented(theta, Phi, a, K) -> float:
    """Augmented negative log-likelihood from the feature matrix ``Phi`` (rows ``psi(x_i)``).

    Returns ``+inf`` if ``theta^T psi(x_i) = 0`` for some ``i``.
    """
    theta = np.asarray(theta, dtype=float)
    M = _kmat(K)
    z = float(theta @ M @ theta)
    if not z > 0:
        raise ValueError("theta lies in the kernel null space")
    lin = np.asarray(Phi, dtype=float) @ theta
    if np.any(lin == 0):
        return float("inf")
    logz = np.log(z)
    a = np.asarray(a, dtype=float)
    return float(-np.sum(np.log(lin * lin)) + lin.size * logz + 0.5 * np.sum((a - logz) ** 2))


def data_gradient(theta, Phi) -> np.ndarray:
    """``sum_i -2 psi_i / (theta^T psi_i)``, the gradient of the data numerators."""
    Phi = np.asarray(Phi, dtype=float)
    lin = Phi @ np.asarray(theta, dtype=float)
    if np.any(lin == 0):
        raise ZeroDivisionError("gradient is undefined where theta^T psi(x_i) = 0")
    return -2.0 * (Phi / lin[:, None]).sum(axis=0)


def grad_nll(theta, Phi, a, K) -> np.ndarray:
    """Analytic gradient of :func:`nll_augmented`."""
    theta = np.asarray(theta, dtype=float)
    M = _kmat(K)
    Kth = M @ theta
    z = float(theta @ Kth)
    logz = np.log(z)
    a = np.asarray(a, dtype=float)
    N = a.size
    return data_gradient(theta, Phi) + (2.0 * N - 2.0 * np.sum(a - logz)) * Kth / z


def project_feasible(theta, K, epsilon: float, R: float) -> np.ndarray:
    """Map ``theta`` into ``{theta_1 >= epsilon, theta^T K theta <= R}``.

    Clamps ``theta_1`` and then rescales radially in the ``K``-norm,
    alternating up to 50 times; if both constraints still conflict the limit
    point (``theta_1 = epsilon`` with the remaining coordinates scaled so
    that ``theta^T K theta = R``) is computed exactly.
    """
    M = _kmat(K)
    if epsilon**2 * M[0, 0] >= R:
        raise ValueError("constraint set is empty: epsilon^2 K_11 >= R")
    th = np.array(theta, dtype=float)
    for _ in range(MAX_ALTERNATIONS):
        if th[0] < epsilon:
            th[0] = epsilon
        z = th @ M @ th
        if z > R:
            th *= np.sqrt(R / z)
        if th[0] >= epsilon * (1 - PROJECTION_TOL) and th @ M @ th <= R * (1 + PROJECTION_TOL):
            th[0] = max(th[0], epsilon)
            return th
    rest = th[1:]
    qa = rest @ M[1:, 1:] @ rest
    qb = 2.0 * epsilon * (M[0, 1:] @ rest)
    qc = epsilon**2 * M[0, 0] - R
    s = 0.0 if qa <= 0 else (-qb + np.sqrt(qb * qb - 4 * qa * qc)) / (2 * qa)
    out = np.concatenate([[epsilon], s * rest])
    return out


def projected_descent(f, grad, x0, project, max_iters: int, tol: float):
    """Projected gradient descent with Barzilai-Borwein steps and Armijo backtracking.

    Accepts ``x+ = project(x - t g)`` when
    ``f(x+) <= f(x) - (c / t) ||x+ - x||^2`` with ``c = 1e-4``; the step is
    halved on failure.  Stops when ``||x - project(x - g)|| < tol``.
    Returns ``(x, f(x), grad_mapping_norm, iterations, converged, trace)``.
    """
    x = project(np.asarray(x0, dtype=float))
    fx = f(x)
    if not np.isfinite(fx):
        return x, fx, float("inf"), 0, False, [fx]
    g = grad(x)
    trace = [float(fx)]
    t = 1.0 / max(float(np.linalg.norm(g)), 1e-12)
    gm = float(np.linalg.norm(x - project(x - g)))
    it = 0
    while it < max_iters and gm >= tol:
        it += 1
        for _ in range(MAX_BACKTRACKS):
            xn = project(x - t * g)
            step2 = float(np.sum((xn - x) ** 2))
            fn = f(xn)
            if np.isfinite(fn) and fn <= fx - ARMIJO_C / t * step2:
                break
            t *= SHRINK
        else:
            break
        if step2 == 0.0:
            break
        gn = grad(xn)
        s, y = xn - x, gn - g
        sy = float(s @ y)
        t = float(s @ s) / sy if sy > 0 else 2.0 * t
        t = min(max(t, 1e-12), 1e12)
        x, fx, g = xn, fn, gn
        trace.append(float(fx))
        gm = float(np.linalg.norm(x - project(x - g)))
    return x, float(fx), gm, it, bool(gm < tol), trace


def _starts(family: SquaredFamily, config: FitConfig) -> list[np.ndarray]:
    K = family.kernel.matrix
    n = family.n
    e1 = np.zeros(n)
    e1[0] = 1.0
    e1 = e1 / np.sqrt(K[0, 0])
    if config.init == "canonical_e1":
        return [e1]
    if config.init == "supplied":
        th0 = np.asarray(config.theta0, dtype=float)
        if th0.size != n:
            raise ValueError("theta0 length does not match the family")
        return [th0]
    rng = make_rng(config.init_seed)
    out = [e1]
    for _ in range(config.starts - 1):
        v = rng.standard_normal(n)
        out.append(canonicalize(v, K))
    return out


def fit_mle(X, family: SquaredFamily, config: FitConfig | None = None, a=None, seed=0) -> FitResult:
    """(Quasi) maximum likelihood with dimension augmentation.

    ``a`` defaults to standard normals drawn from ``seed``.  The objective,
    gradient and convergence test are scaled per observation, so
    ``grad_tol`` does not depend on ``N``.
    """
    config = config or FitConfig()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 1:
        raise ValueError("need at least one observation")
    if a is None:
        _, a = augment_data(X, seed)
    a = np.asarray(a, dtype=float)
    if a.shape != (X.shape[0],):
        raise ValueError("need one augmentation value per observation")
    Phi = eval_batch(family.features, X)
    K = family.kernel.matrix
    N = X.shape[0]

    def f(th):
        return nll_augmented(th, Phi, a, K) / N

    def g(th):
        return grad_nll(th, Phi, a, K) / N

    def proj(th):
        return project_feasible(th, K, config.epsilon, config.R)

    best = None
    for i, th0 in enumerate(_starts(family, config)):
        x, fx, gm, it, conv, trace = projected_descent(f, g, th0, proj, config.max_iters, config.grad_tol)
        if not np.isfinite(fx):
            continue
        if best is None or fx < best[1]:
            best = (x, fx, gm, it, conv, trace, i)
    if best is None:
        raise FitError("objective is +inf at every start (a data point lies on a zero of theta^T psi)")
    x, fx, gm, it, conv, trace, i = best
    z = float(x @ K @ x)
    active = {
        "theta1_lower": bool(x[0] <= config.epsilon * (1 + 1e-9)),
        "normaliser_upper": bool(z >= config.R * (1 - 1e-9)),
    }
    return FitResult(x, fx * N, gm, it, active, conv, [v * N for v in trace], i)


def kl_to_family(q_values, nodes, weights, family: SquaredFamily, theta) -> float:
    """``KL(q : p(. | theta))`` by quadrature on ``(nodes, weights)``.

    The model normaliser comes from the stored kernel.
    """
    theta = np.asarray(theta, dtype=float)
    lin = eval_batch(family.features, nodes) @ theta
    p = lin * lin / float(theta @ family.kernel.matrix @ theta)
    return divergence_grid(q_values, p, weights, "KL")


@dataclass(frozen=True, eq=False)
class KLProjection:
    theta: np.ndarray
    kl: float
    grad_norm: float
    iterations: int
    converged: bool


def _whitener(K: np.ndarray) -> np.ndarray:
    lam, V = np.linalg.eigh(K)
    keep = lam > EIGEN_FLOOR * lam[-1]
    return V[:, keep] / np.sqrt(lam[keep])


def kl_projection(
    q_values,
    nodes,
    weights,
    family: SquaredFamily,
    config: FitConfig | None = None,
    full_output: bool = False,
):
    """Minimise ``KL(q : p(. | theta))`` over ``{theta_1 >= epsilon, theta^T K theta = 1}``.

    Works in whitened coordinates ``theta = B u`` with ``B^T K B = I`` (kernel
    eigenvalues below ``1e-12 lambda_max`` are dropped), where the constraint
    becomes the unit sphere and the objective is invariant under ``u -> -u``.
    Starts from the least-squares fit of ``sqrt(q)`` plus any multistart
    directions, and descends with the projected optimiser of :func:`fit_mle`.
    """
    config = config or FitConfig()
    q = np.asarray(q_values, dtype=float)
    w = np.asarray(weights, dtype=float)
    mass = float(w @ q)
    if abs(mass - 1.0) > 1e-3:
        raise ValueError(f"q integrates to {mass:.6f} on the grid, not 1")
    B = _whitener(family.kernel.matrix)
    PB = eval_batch(family.features, nodes) @ B
    wq = w * q
    b1 = B[0]
    nb1 = float(np.linalg.norm(b1))
    if nb1 == 0:
        raise ValueError("the first coordinate is not identifiable from the kernel")
    c = b1 / nb1
    tau = config.epsilon / nb1
    if tau >= 1:
        raise ValueError("epsilon excludes the whole unit ellipsoid")

    def proj(u):
        u = np.asarray(u, dtype=float)
        if c @ u < 0:
            u = -u
        nu = np.linalg.norm(u)
        if nu == 0:
            u, nu = c.copy(), 1.0
        u = u / nu
        cu = float(c @ u)
        if cu >= tau:
            return u
        v = u - cu * c
        nv = np.linalg.norm(v)
        if nv == 0:
            v = np.zeros_like(u)
            v[np.argmin(np.abs(c))] = 1.0
            v -= (c @ v) * c
            nv = np.linalg.norm(v)
        return tau * c + np.sqrt(1 - tau * tau) * v / nv

    def f(u):
        lin = PB @ u
        if np.any((lin == 0) & (wq > 0)):
            return float("inf")
        pos = wq > 0
        return float(-wq[pos] @ np.log(lin[pos] ** 2) + mass * np.log(u @ u))

    def g(u):
        lin = PB @ u
        pos = wq > 0
        return -2.0 * (PB[pos] * (wq[pos] / lin[pos])[:, None]).sum(axis=0) + 2.0 * mass * u / (u @ u)

    starts = [PB.T @ (w * np.sqrt(q))]
    if config.init == "multistart":
        rng = make_rng(config.init_seed)
        starts += [rng.standard_normal(B.shape[1]) for _ in range(config.starts - 1)]
    elif config.init == "supplied":
        th0 = np.asarray(config.theta0, dtype=float)
        starts = [np.linalg.lstsq(B, th0, rcond=None)[0]]
    best = None
    for u0 in starts:
        u, fu, gm, it, conv, _ = projected_descent(f, g, u0, proj, config.max_iters, config.grad_tol)
        if np.isfinite(fu) and (best is None or fu < best[1]):
            best = (u, fu, gm, it, conv)
    if best is None:
        raise FitError("KL objective is infinite at every start")
    u, fu, gm, it, conv = best
    theta = B @ u
    theta = theta / np.sqrt(float(theta @ family.kernel.matrix @ theta))
    if theta[0] < 0:
        theta = -theta
    if not full_output:
        return theta
    return KLProjection(theta, kl_to_family(q, nodes, w, family, theta), gm, it, conv)


def sandwich_from_kr(K, K_r, theta):
    """``A = -2 K_r - 2K``, ``B = 4(K_r - K_r t t^T K - K t t^T K_r + 2 K t t^T K)``, ``A^-1 B A^-1``."""
    M = _kmat(K)
    Kr = np.asarray(K_r, dtype=float)
    t = np.asarray(theta, dtype=float)
    Kt, Krt = M @ t, Kr @ t
    A = -2.0 * Kr - 2.0 * M
    B = 4.0 * (Kr - np.outer(Krt, Kt) - np.outer(Kt, Krt) + 2.0 * np.outer(Kt, Kt))
    Ainv = np.linalg.inv(A)
    Khat = Ainv @ B @ Ainv
    return 0.5 * (A + A.T), 0.5 * (B + B.T), 0.5 * (Khat + Khat.T)


def kr_from_grid(q_values, nodes, weights, family: SquaredFamily, theta) -> np.ndarray:
    """``K_r = int psi psi^T q / p(. | theta) dmu`` by quadrature."""
    theta = np.asarray(theta, dtype=float)
    Phi = eval_batch(family.features, nodes)
    lin = Phi @ theta
    p = lin * lin / float(theta @ family.kernel.matrix @ theta)
    q = np.asarray(q_values, dtype=float)
    if np.any((p == 0) & (q > 0)):
        raise ArithmeticError("q / p is unbounded: p vanishes where q is positive")
    r = np.divide(q, p, out=np.zeros_like(q), where=q > 0)
    if not np.all(np.isfinite(r)):
        raise ArithmeticError("q / p is not finite on the grid")
    return (Phi * (np.asarray(weights, dtype=float) * r)[:, None]).T @ Phi


def kr_from_samples(Xq, family: SquaredFamily, theta) -> np.ndarray:
    """Monte Carlo ``K_r = E_q[psi psi^T / p(x | theta)]`` from samples of ``q``."""
    theta = np.asarray(theta, dtype=float)
    Phi = eval_batch(family.features, Xq)
    lin = Phi @ theta
    if np.any(lin == 0):
        raise ArithmeticError("p vanishes at a sample of q")
    inv_p = float(theta @ family.kernel.matrix @ theta) / (lin * lin)
    return (Phi * inv_p[:, None]).T @ Phi / Phi.shape[0]


def sandwich_covariance(q_values, nodes, weights, theta_star, family: SquaredFamily):
    """``(A, B, Khat)`` at ``theta_star`` with ``K_r`` by quadrature."""
    K_r = kr_from_grid(q_values, nodes, weights, family, theta_star)
    return sandwich_from_kr(family.kernel.matrix, K_r, theta_star)


def _sign_canonical(theta: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(theta)
    return -theta if nz.size and theta[nz[0]] < 0 else theta


def _rel_frobenius(A: np.ndarray, B: np.ndarray) -> float:
    return float(np.linalg.norm(A - B) / np.linalg.norm(B))


def experiment_asymptotic_normality(
    family: SquaredFamily,
    theta_star,
    N_list=(500, 2000, 8000),
    reps: int = 200,
    master_seed: int = 0,
    config: FitConfig | None = None,
):
    """Empirical covariance of ``sqrt(N) (theta_hat - theta*)`` against ``K^-1 / 4``.

    Only the sign is canonicalised before differencing (the constraint
    ``theta_1 >= epsilon`` already fixes it), because the augmentation
    identifies the scale.  The report also compares the covariance of fully
    canonicalised estimates with ``P K^-1 P^T / 4``,
    ``P = I - theta* theta*^T K``, the limit of the projected estimator.
    """
    config = config or FitConfig()
    K = family.kernel.matrix
    ts = canonicalize(theta_star, K)
    model = family.with_theta(ts)
    limit = 0.25 * np.linalg.inv(K)
    P = np.eye(family.n) - np.outer(ts, K @ ts)
    limit_proj = P @ limit @ P.T
    rows, per_N = [], []
    for N in N_list:
        D, Dfull, failures = [], [], 0
        for rep in range(reps):
            rng = make_rng(master_seed, N, rep)
            X = rejection_sample(model, N, rng).samples
            a = rng.standard_normal(N)
            try:
                res = fit_mle(X, family, config, a=a)
            except FitError:
                failures += 1
                rows.append({"N": N, "rep": rep, "failed": True})
                continue
            th = _sign_canonical(res.theta_hat)
            d = np.sqrt(N) * (th - ts)
            dfull = np.sqrt(N) * (canonicalize(th, K) - ts)
            D.append(d)
            Dfull.append(dfull)
            rows.append(
                {
                    "N": N,
                    "rep": rep,
                    "failed": False,
                    "converged": res.converged,
                    "objective": res.objective,
                    **{f"theta_{j}": float(v) for j, v in enumerate(th)},
                    **{f"scaled_diff_{j}": float(v) for j, v in enumerate(d)},
                }
            )
        D, Dfull = np.array(D), np.array(Dfull)
        cov = np.cov(D, rowvar=False)
        cov_full = np.cov(Dfull, rowvar=False)
        mean = D.mean(axis=0)
        band = 4.0 * D.std(axis=0, ddof=1) / np.sqrt(D.shape[0])
        per_N.append(
            {
                "N": N,
                "fits": int(D.shape[0]),
                "failures": failures,
                "covariance": cov.tolist(),
                "rel_frobenius_error": _rel_frobenius(cov, limit),
                "covariance_canonical": cov_full.tolist(),
                "rel_frobenius_error_canonical": _rel_frobenius(cov_full, limit_proj),
                "mean": mean.tolist(),
                "mean_within_4sigma": bool(np.all(np.abs(mean) <= band)),
            }
        )
    errs = [r["rel_frobenius_error"] for r in per_N]
    report = {
        "experiment": "normality",
        "master_seed": master_seed,
        "theta_star": ts.tolist(),
        "limit_covariance": limit.tolist(),
        "limit_covariance_canonical": limit_proj.tolist(),
        "per_N": per_N,
        "error_non_increasing": bool(all(b <= a for a, b in zip(errs, errs[1:]))),
        "final_error": errs[-1],
    }
    return report, rows


def experiment_misspecified_rate(
    target,
    family: SquaredFamily,
    N_list=(500, 2000, 8000),
    reps: int = 100,
    master_seed: int = 0,
    config: FitConfig | None = None,
    grid_nodes: int = 256,
):
    """``Delta_N = sqrt(N) |KL(q : p_hat_N) - KL(q : p*)|`` across ``N``.

    ``p*`` is the KL projection of ``q`` computed once on a Gauss-Legendre
    grid.  Also reports ``sqrt(N) KL(q : p_hat_N)``, the relevant quantity
    when ``q`` belongs to the family.
    """
    config = config or FitConfig(init="multistart", starts=5)
    nodes, weights = integration_nodes(target.measure, Quadrature(grid_nodes))
    q = target.pdf(nodes)
    proj = kl_projection(q, nodes, weights, family, config, full_output=True)
    kl_star = proj.kl
    rows, per_N = [], []
    for N in N_list:
        deltas, root_kl, below = [], [], 0
        for rep in range(reps):
            rng = make_rng(master_seed, N, rep)
            X = target.sample(N, rng)
            a = rng.standard_normal(N)
            try:
                res = fit_mle(X, family, config, a=a)
            except FitError:
                rows.append({"N": N, "rep": rep, "failed": True})
                continue
            kl_hat = kl_to_family(q, nodes, weights, family, res.theta_hat)
            delta = np.sqrt(N) * abs(kl_hat - kl_star)
            below += int(kl_hat < kl_star - 1e-6)
            deltas.append(delta)
            root_kl.append(np.sqrt(N) * kl_hat)
            rows.append(
                {
                    "N": N,
                    "rep": rep,
                    "failed": False,
                    "converged": res.converged,
                    "kl_hat": kl_hat,
                    "delta": float(delta),
                }
            )
        per_N.append(
            {
                "N": N,
                "fits": len(deltas),
                "median_delta": float(np.median(deltas)),
                "p90_delta": float(np.percentile(deltas, 90)),
                "median_sqrtN_kl": float(np.median(root_kl)),
                "kl_below_projection": below,
            }
        )
    med = [r["median_delta"] for r in per_N]
    report = {
        "experiment": "misspec",
        "master_seed": master_seed,
        "theta_star": proj.theta.tolist(),
        "kl_star": kl_star,
        "per_N": per_N,
        "median_non_increasing": bool(all(b <= a for a, b in zip(med, med[1:]))),
        "final_over_initial": med[-1] / med[0] if med[0] > 0 else 0.0,
    }
    return report, rows


def experiment_approximation(
    target,
    n_list=(8, 16, 32, 64, 128),
    feature_seeds=(0, 1, 2, 3, 4),
    bandwidth: float = 10.0,
    config: FitConfig | None = None,
    grid_nodes: int = 512,
):
    """``KL(q : p*(n))`` for random cosine families of growing size.

    For each seed the feature sets are nested in ``n``.  Kernel and KL share
    one Gauss-Legendre grid.  Reports the median over seeds per ``n`` and the
    least-squares slope of ``log median KL`` against ``log n``.
    """
    config = config or FitConfig(max_iters=5000, grad_tol=1e-9)
    scheme = Quadrature(grid_nodes)
    nodes, weights = integration_nodes(target.measure, scheme)
    q = target.pdf(nodes)
    rows = []
    for seed in feature_seeds:
        for n in n_list:
            fmap = random_cosine_features(n, target.measure.dim, bandwidth, seed)
            fam = SquaredFamily.build(fmap, target.measure, scheme)
            res = kl_projection(q, nodes, weights, fam, config, full_output=True)
            rows.append(
                {
                    "seed": seed,
                    "n": n,
                    "kl": res.kl,
                    "converged": res.converged,
                    "iterations": res.iterations,
                    "min_kernel_eigenvalue": fam.kernel.min_eigenvalue,
                }
            )
    medians = [float(np.median([r["kl"] for r in rows if r["n"] == n])) for n in n_list]
    slope = float(np.polyfit(np.log(n_list), np.log(np.maximum(medians, 1e-300)), 1)[0])
    report = {
        "experiment": "approx",
        "n_list": list(n_list),
        "feature_seeds": list(feature_seeds),
        "bandwidth": bandwidth,
        "median_kl": medians,
        "median_non_increasing": bool(all(b <= a for a, b in zip(medians, medians[1:]))),
        "loglog_slope": slope,
        "reference_slope": -0.25,
    }
    return report, rows
