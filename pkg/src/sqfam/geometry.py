"""Fisher information, scores and divergences for squared and g-families.

For a squared family with normaliser ``z = theta^T K theta`` the score is
``2 psi / (theta^T psi) - 2 K theta / z``; it is orthogonal to ``theta`` so
the Fisher matrix ``4K/z - 4 K theta theta^T K / z^2`` is singular along
``theta``.  Adjoining an independent coordinate ``a ~ N(log z, sigma^2)``
adds ``grad z grad z^T / (sigma^2 z^2)`` and, at ``sigma = 1``, gives
exactly ``4K / z``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import FeatureMap, eval_batch
from .gfamily import GSpec, g_eval, g_prime, score_weight
from .kernel import SquaredKernel, m_kernel
from .measure import BaseMeasure, IntegrationScheme, integrate
from .model import SquaredFamilyModel, vec

__all__ = [
    "FisherMatrix",
    "score",
    "score_batch",
    "fisher_squared",
    "gaussian_augmentation_term",
    "fisher_augmented",
    "fisher_g_family",
    "orthogonal_singularity_residuals",
    "orthogonal_singularity_check",
    "bregman_divergence",
    "sq_l2",
    "divergence_grid",
    "divergence_chain",
    "reverse_pinsker_constant",
    "reverse_pinsker_bound",
    "conformal_hessian_check",
    "fd_hessian",
]

NORMALISATION_TOL = 1e-3
LOG_FLOOR = 1e-300


@dataclass(frozen=True, eq=False)
class FisherMatrix:
    """Fisher information together with how it was formed.

    ``variant`` is ``"squared_singular"``, ``"squared_augmented"`` or
    ``"g_family"``; ``sigma`` is the augmentation scale (``None`` when the
    matrix is not augmented).
    """

    matrix: np.ndarray
    variant: str
    sigma: float | None = None
    gspec: GSpec | None = None

    def __post_init__(self):
        G = np.array(self.matrix, dtype=float)
        G = 0.5 * (G + G.T)
        G.flags.writeable = False
        object.__setattr__(self, "matrix", G)

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])

    def to_dict(self):
        out = {"variant": self.variant, "matrix": self.matrix.tolist(), "min_eigenvalue": self.min_eigenvalue}
        if self.sigma is not None:
            out["sigma"] = self.sigma
        if self.gspec is not None:
            out["g"] = self.gspec.to_dict()
        return out


def _require_vector(model: SquaredFamilyModel) -> np.ndarray:
    if model.theta.ndim != 1:
        raise ValueError("this operation is defined for vector parameters (m = 1)")
    return model.theta


def score_batch(model: SquaredFamilyModel, X) -> np.ndarray:
    """Rows are ``grad_theta log p(x_i | theta)``; raises at zeros of ``theta^T psi``."""
    th = _require_vector(model)
    Phi = eval_batch(model.features, X)
    lin = Phi @ th
    if np.any(lin == 0):
        raise ZeroDivisionError("score is undefined where theta^T psi(x) = 0")
    Kth = model.kernel.matrix @ th
    return 2.0 * Phi / lin[:, None] - 2.0 * Kth / model.z


def score(model: SquaredFamilyModel, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return score_batch(model, x[None, :])[0]


def fisher_squared(model: SquaredFamilyModel) -> FisherMatrix:
    th = _require_vector(model)
    K = model.kernel.matrix
    z = model.z
    Kth = K @ th
    return FisherMatrix(4.0 * K / z - 4.0 * np.outer(Kth, Kth) / z**2, "squared_singular")


def gaussian_augmentation_term(grad_z: np.ndarray, z: float, sigma: float) -> np.ndarray:
    """Fisher information of ``a ~ N(log z(theta), sigma^2)`` with respect to ``theta``."""
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    return np.outer(grad_z, grad_z) / (sigma**2 * z**2)


def fisher_augmented(model: SquaredFamilyModel, sigma: float = 1.0) -> FisherMatrix:
    """Fisher information of ``(x, a)``: the squared-family term plus the Gaussian term."""
    th = _require_vector(model)
    grad_z = 2.0 * model.kernel.matrix @ th
    G = fisher_squared(model).matrix + gaussian_augmentation_term(grad_z, model.z, sigma)
    return FisherMatrix(G, "squared_augmented", float(sigma))


def _g_integrals(spec, fmap, measure, theta, scheme):
    """``z``, ``grad z`` and ``int psi psi^T g'^2/g dmu`` in one pass."""
    n = theta.size

    def integrand(X):
        Phi = eval_batch(fmap, X)
        a = Phi @ theta
        with np.errstate(over="ignore"):
            g = g_eval(spec, a)
            gp = g_prime(spec, a)
            w = score_weight(spec, a)
        if np.any(g < 0):
            raise ArithmeticError("g is negative at an integration node")
        outer = (Phi[:, :, None] * Phi[:, None, :]) * w[:, None, None]
        return np.concatenate([g[:, None], Phi * gp[:, None], outer.reshape(-1, n * n)], axis=1)

    vals, errs = integrate(integrand, measure, scheme)
    z = float(vals[0])
    if not (np.isfinite(z) and z > 0):
        raise ArithmeticError(f"normaliser is not a positive finite number (z={z})")
    return z, vals[1 : 1 + n], vals[1 + n :].reshape(n, n), float(np.max(errs))


def fisher_g_family(
    spec: GSpec,
    fmap: FeatureMap,
    measure: BaseMeasure,
    theta,
    scheme: IntegrationScheme | None = None,
    sigma: float | None = None,
) -> FisherMatrix:
    """``E_p[psi psi^T (g'/g)^2] - grad z grad z^T / z^2``, optionally augmented.

    The expectation is evaluated as ``int psi psi^T (g'^2 / g) dmu / z`` so it
    stays finite at zeros of homogeneous ``g``.
    """
    theta = np.asarray(theta, dtype=float)
    z, grad_z, M, _ = _g_integrals(spec, fmap, measure, theta, scheme)
    G = M / z - np.outer(grad_z, grad_z) / z**2
    if sigma is not None:
        G = G + gaussian_augmentation_term(grad_z, z, sigma)
    return FisherMatrix(G, "g_family", None if sigma is None else float(sigma), spec)


def orthogonal_singularity_residuals(
    spec: GSpec,
    fmap: FeatureMap,
    theta,
    probe_points,
    measure: BaseMeasure,
    scheme: IntegrationScheme | None = None,
) -> np.ndarray:
    """``theta^T grad log p(x | theta) = a g'(a) / g(a) - theta^T grad z / z`` with ``a = theta^T psi(x)``."""
    theta = np.asarray(theta, dtype=float)
    z, grad_z, _, _ = _g_integrals(spec, fmap, measure, theta, scheme)
    a = eval_batch(fmap, probe_points) @ theta
    g = g_eval(spec, a)
    if np.any(g <= 0):
        raise ValueError("probe points must avoid zeros of g")
    return a * g_prime(spec, a) / g - theta @ grad_z / z


def orthogonal_singularity_check(
    spec: GSpec,
    fmap: FeatureMap,
    theta,
    probe_points,
    tol: float = 1e-8,
    measure: BaseMeasure | None = None,
    scheme: IntegrationScheme | None = None,
) -> bool:
    if measure is None:
        raise ValueError("a base measure is required to evaluate grad z / z")
    res = orthogonal_singularity_residuals(spec, fmap, theta, probe_points, measure, scheme)
    return bool(np.all(np.abs(res) < tol))


def bregman_divergence(K, theta, theta_prime) -> float:
    """Bregman divergence generated by ``z``; equals ``(theta - theta')^T K (theta - theta')``.

    Matrix parameters use ``vec`` and ``K (x) I_m``.
    """
    M = K.matrix if isinstance(K, SquaredKernel) else np.asarray(K, dtype=float)
    a = np.asarray(theta, dtype=float)
    b = np.asarray(theta_prime, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"parameter shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 1:
        if a.size != M.shape[0]:
            raise ValueError("parameter length does not match the kernel")
        d = a - b
        return float(d @ M @ d)
    if a.ndim != 2 or a.shape[1] != M.shape[0]:
        raise ValueError("matrix parameter must be m x n with n matching the kernel")
    d = vec(a - b)
    return float(d @ m_kernel(M, a.shape[0]) @ d)


def sq_l2(f, g_fn, measure: BaseMeasure, scheme: IntegrationScheme | None = None) -> float:
    """``(1/2) int ||f - g||^2 dmu`` for functions of an ``(N, d)`` block of points."""

    def integrand(X):
        diff = np.asarray(f(X), dtype=float) - np.asarray(g_fn(X), dtype=float)
        return 0.5 * (diff.reshape(diff.shape[0], -1) ** 2).sum(axis=1)

    val, _ = integrate(integrand, measure, scheme)
    return max(float(val), 0.0)


def _check_grid(p, q, weights):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    w = np.asarray(weights, dtype=float)
    if not (p.shape == q.shape == w.shape):
        raise ValueError("densities and weights must share one grid")
    if np.any(p < 0) or np.any(q < 0):
        raise ValueError("densities must be nonnegative")
    for name, d in (("p", p), ("q", q)):
        mass = float(w @ d)
        if abs(mass - 1.0) > NORMALISATION_TOL:
            raise ValueError(f"{name} integrates to {mass:.6f}, not 1 within {NORMALISATION_TOL}")
    return p, q, w


def divergence_grid(p, q, weights, which: str) -> float:
    """``KL(p:q)``, ``TV(p, q)`` or ``SH(p, q)`` from densities on integration nodes.

    ``weights`` are the node weights of the base measure, so that
    ``sum(weights * f)`` approximates ``int f dmu``.  ``TV = (1/2) int |p - q|``
    and ``SH = (1/2) int (sqrt p - sqrt q)^2``.
    """
    p, q, w = _check_grid(p, q, weights)
    which = which.upper()
    if which == "TV":
        return float(0.5 * w @ np.abs(p - q))
    if which == "SH":
        return float(0.5 * w @ (np.sqrt(p) - np.sqrt(q)) ** 2)
    if which == "KL":
        support = p > 0
        if np.any(support & (q == 0)):
            return float("inf")
        ps = np.maximum(p[support], LOG_FLOOR)
        qs = np.maximum(q[support], LOG_FLOOR)
        # 0 log 0 = 0: nodes with p = 0 contribute nothing
        return max(float(w[support] @ (ps * (np.log(ps) - np.log(qs)))), 0.0)
    raise ValueError(f"unknown divergence {which!r}; expected KL, TV or SH")


def divergence_chain(p, q, weights) -> dict:
    """All three divergences and the slacks of ``SH <= TV <= sqrt(2 SH) <= sqrt(KL)``."""
    sh = divergence_grid(p, q, weights, "SH")
    tv = divergence_grid(p, q, weights, "TV")
    kl = divergence_grid(p, q, weights, "KL")
    slacks = [tv - sh, np.sqrt(2 * sh) - tv, np.sqrt(kl) - np.sqrt(2 * sh)]
    return {"SH": sh, "TV": tv, "KL": kl, "slacks": [float(s) for s in slacks], "min_slack": float(min(slacks))}


def reverse_pinsker_constant(r0: float, variant: str = "halved") -> float:
    """Multiplier ``c(r0)`` in ``KL <= c(r0) TV``.

    ``"halved"`` is ``log(1/r0) / (2 (1 - r0))``; ``"full"`` is
    ``log(1/r0) / (1 - r0)``, which is the form that holds with
    ``TV = (1/2) int |p - q|``.
    """
    if not 0 < r0 < 1:
        raise ValueError(f"r0 = {r0} must lie in (0, 1)")
    c = np.log(1.0 / r0) / (1.0 - r0)
    if variant == "halved":
        return float(c / 2)
    if variant == "full":
        return float(c)
    raise ValueError(f"unknown variant {variant!r}")


def reverse_pinsker_bound(p, q, weights, variant: str = "halved") -> dict:
    """Upper bound on ``sqrt(KL(q:p))`` from ``TV`` and ``r0 = inf p/q``.

    Returns ``bound``, ``r0``, ``TV``, ``KL`` (which is ``KL(q:p)``) and
    ``holds`` (``KL <= bound^2``).
    """
    p, q, w = _check_grid(p, q, weights)
    pos = q > 0
    if not np.any(pos):
        raise ValueError("q has no support on the grid")
    r0 = float(np.min(p[pos] / q[pos]))
    tv = divergence_grid(p, q, w, "TV")
    bound = float(np.sqrt(reverse_pinsker_constant(r0, variant) * tv))
    kl = divergence_grid(q, p, w, "KL")
    return {"bound": bound, "r0": r0, "TV": tv, "KL": kl, "holds": bool(kl <= bound**2)}


def fd_hessian(f, theta, step: float | None = None) -> np.ndarray:
    """Central finite-difference Hessian with ``h = 1e-4 * max(1, ||theta||)``."""
    theta = np.asarray(theta, dtype=float)
    n = theta.size
    h = step if step is not None else 1e-4 * max(1.0, float(np.linalg.norm(theta)))
    E = np.eye(n) * h
    H = np.empty((n, n))
    f0 = f(theta)
    for i in range(n):
        H[i, i] = (f(theta + E[i]) - 2 * f0 + f(theta - E[i])) / h**2
        for j in range(i + 1, n):
            H[i, j] = H[j, i] = (
                f(theta + E[i] + E[j]) - f(theta + E[i] - E[j]) - f(theta - E[i] + E[j]) + f(theta - E[i] - E[j])
            ) / (4 * h * h)
    return H


def conformal_hessian_check(
    spec: GSpec,
    fmap: FeatureMap,
    measure: BaseMeasure,
    theta,
    fd_step: float | None = None,
    scheme: IntegrationScheme | None = None,
):
    """Compare the finite-difference Hessian of ``z`` with ``((k-1)/k) z G`` at ``sigma = 1``.

    Returns ``(lhs, rhs, max_abs_diff)``.
    """
    if spec.kind not in ("monomial", "pos_homogeneous"):
        raise ValueError("the conformal relation applies to homogeneous g")
    theta = np.asarray(theta, dtype=float)
    k = spec.k

    def z_of(t):
        return _g_integrals(spec, fmap, measure, t, scheme)[0]

    lhs = fd_hessian(z_of, theta, fd_step)
    z = z_of(theta)
    G = fisher_g_family(spec, fmap, measure, theta, scheme, sigma=1.0).matrix
    rhs = (k - 1) / k * z * G
    return lhs, rhs, float(np.max(np.abs(lhs - rhs)))
