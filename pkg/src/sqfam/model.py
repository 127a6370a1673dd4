"""Squared and m-squared family densities.

A model is the triple (features, base measure, kernel) plus a parameter:
an ``n``-vector ``theta`` (``m = 1``) or an ``m x n`` matrix ``Theta``.  The
density w.r.t. the base measure is ``||Theta psi(x)||^2 / Tr(Theta K Theta^T)``.

Matrices are flattened column-major (``vec`` stacks the columns of
``Theta``), which is the ordering under which ``K (x) I_m`` is the kernel of
``vec(Theta)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import ConditionedFeatures, FeatureMap, eval_batch
from .kernel import SquaredKernel, compute_kernel, m_kernel
from .measure import (
    BaseMeasure,
    BoxLebesgue,
    DiscreteMeasure,
    GaussianMeasure,
    IntegrationScheme,
)

__all__ = [
    "ParameterSpaceSpec",
    "SquaredFamily",
    "SquaredFamilyModel",
    "make_model",
    "normalizer",
    "log_density",
    "log_density_batch",
    "density",
    "canonicalize",
    "conditional",
    "marginal_density",
    "vec",
    "unvec",
    "cholesky_flatten",
    "cholesky_unflatten",
    "m_normalizer",
]


@dataclass(frozen=True)
class ParameterSpaceSpec:
    """Constraint set ``theta_1 >= epsilon`` and ``theta^T K theta <= R``."""

    epsilon: float = 1e-3
    R: float = 10.0
    normalized: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not self.R > 1:
            raise ValueError("R must be > 1")


def vec(Theta: np.ndarray) -> np.ndarray:
    """Column-major flattening."""
    return np.asarray(Theta, dtype=float).flatten(order="F")


def unvec(v: np.ndarray, m: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.size % m:
        raise ValueError("length is not a multiple of m")
    return v.reshape((m, v.size // m), order="F")


@dataclass(frozen=True, eq=False)
class SquaredFamily:
    """Features, base measure and kernel shared by every member of a family."""

    features: FeatureMap
    measure: BaseMeasure
    kernel: SquaredKernel

    def __post_init__(self):
        if self.features.output_dim != self.kernel.n:
            raise ValueError("feature dimension does not match kernel size")
        if self.features.input_dim != self.measure.dim:
            raise ValueError("feature input dimension does not match the measure")

    @classmethod
    def build(cls, features, measure, scheme=None) -> "SquaredFamily":
        return cls(features, measure, compute_kernel(features, measure, scheme))

    @property
    def n(self) -> int:
        return self.kernel.n

    def with_theta(self, theta) -> "SquaredFamilyModel":
        return SquaredFamilyModel(self.features, self.measure, self.kernel, theta)

    def to_dict(self):
        return {
            "features": self.features.to_dict(),
            "measure": self.measure.to_dict(),
            "kernel": self.kernel.to_dict(),
        }


@dataclass(frozen=True, eq=False)
class SquaredFamilyModel:
    """Immutable squared family member.

    ``theta`` has shape ``(n,)`` for an ordinary squared family or ``(m, n)``
    for an ``m``-squared family.
    """

    features: FeatureMap
    measure: BaseMeasure
    kernel: SquaredKernel
    theta: np.ndarray

    def __post_init__(self):
        th = np.array(self.theta, dtype=float)
        if th.ndim not in (1, 2) or th.shape[-1] != self.kernel.n:
            raise ValueError(f"parameter shape {th.shape} does not match kernel size {self.kernel.n}")
        if self.features.output_dim != self.kernel.n:
            raise ValueError("feature dimension does not match kernel size")
        if not np.all(np.isfinite(th)):
            raise ValueError("parameter must be finite")
        th.flags.writeable = False
        object.__setattr__(self, "theta", th)
        z = _trace_form(th, self.kernel.matrix)
        if not z > 0:
            raise ValueError("parameter lies in the kernel null space (normaliser <= 0)")
        object.__setattr__(self, "z", float(z))

    @property
    def m(self) -> int:
        return 1 if self.theta.ndim == 1 else self.theta.shape[0]

    @property
    def n(self) -> int:
        return self.kernel.n

    @property
    def family(self) -> SquaredFamily:
        return SquaredFamily(self.features, self.measure, self.kernel)

    def with_theta(self, theta) -> "SquaredFamilyModel":
        return SquaredFamilyModel(self.features, self.measure, self.kernel, theta)

    def to_dict(self):
        return {
            "features": self.features.to_dict(),
            "measure": self.measure.to_dict(),
            "kernel": self.kernel.to_dict(),
            "theta": self.theta.tolist(),
        }


def make_model(
    features: FeatureMap,
    measure: BaseMeasure,
    theta,
    scheme: IntegrationScheme | None = None,
) -> SquaredFamilyModel:
    """Build a model, computing the kernel with ``scheme``."""
    return SquaredFamilyModel(features, measure, compute_kernel(features, measure, scheme), theta)


def _trace_form(theta: np.ndarray, K: np.ndarray) -> float:
    if theta.ndim == 1:
        return float(theta @ K @ theta)
    # Tr(Theta K Theta^T), identical to vec(Theta)^T (K (x) I) vec(Theta)
    return float(np.einsum("ij,jk,ik->", theta, K, theta))


def normalizer(model: SquaredFamilyModel) -> float:
    return model.z


def _numerator(model: SquaredFamilyModel, Phi: np.ndarray) -> np.ndarray:
    if model.theta.ndim == 1:
        return (Phi @ model.theta) ** 2
    return np.sum((Phi @ model.theta.T) ** 2, axis=1)


def log_density_batch(model: SquaredFamilyModel, X) -> np.ndarray:
    """Log density at each row of ``X``; ``-inf`` where the numerator is exactly zero."""
    num = _numerator(model, eval_batch(model.features, X))
    out = np.full(num.shape, -np.inf)
    pos = num > 0
    out[pos] = np.log(num[pos]) - np.log(model.z)
    return out


def log_density(model: SquaredFamilyModel, x) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(log_density_batch(model, x[None, :])[0])


def density(model: SquaredFamilyModel, X) -> np.ndarray:
    """Density values w.r.t. the base measure at each row of ``X``."""
    return _numerator(model, eval_batch(model.features, X)) / model.z


def canonicalize(theta, K) -> np.ndarray:
    """Representative of ``theta`` on ``theta^T K theta = 1`` with positive leading sign.

    The sign is taken from ``theta_1``, or from the first nonzero coordinate
    when ``theta_1 = 0``.
    """
    th = np.asarray(theta, dtype=float)
    M = K.matrix if isinstance(K, SquaredKernel) else np.asarray(K, dtype=float)
    nz = np.flatnonzero(th)
    if nz.size == 0:
        raise ValueError("cannot canonicalise the zero vector")
    z = float(th @ M @ th)
    if not z > 0:
        raise ValueError("parameter lies in the kernel null space")
    sign = 1.0 if th[nz[0]] > 0 else -1.0
    return sign * th / np.sqrt(z) + 0.0


def _split_measure(measure: BaseMeasure, coords2: tuple[int, ...], x2: np.ndarray):
    """``(mu1(. | x2), mu2)`` for a factorising base measure."""
    d = measure.dim
    free = [i for i in range(d) if i not in coords2]
    if isinstance(measure, BoxLebesgue):
        lo, hi = measure.lower, measure.upper
        if np.any(x2 < lo[list(coords2)]) or np.any(x2 > hi[list(coords2)]):
            raise ValueError("conditioning values lie outside the box")
        mu1 = BoxLebesgue(lo[free], hi[free])
        mu2 = BoxLebesgue(lo[list(coords2)], hi[list(coords2)])
        return mu1, mu2
    if isinstance(measure, GaussianMeasure):
        m, S = measure.mean, measure.covariance
        c = list(coords2)
        S11 = S[np.ix_(free, free)]
        S12 = S[np.ix_(free, c)]
        S22 = S[np.ix_(c, c)]
        gain = np.linalg.solve(S22, S12.T).T
        mean1 = m[free] + gain @ (x2 - m[c])
        cov1 = S11 - gain @ S12.T
        return GaussianMeasure(mean1, 0.5 * (cov1 + cov1.T)), GaussianMeasure(m[c], S22)
    raise TypeError(f"measure kind {measure.kind!r} does not factorise; use a box or Gaussian measure")


def _normalise_coords(model, coords2, x2):
    coords2 = tuple(int(i) for i in coords2)
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if len(coords2) != x2.size:
        raise ValueError("one value per conditioned coordinate is required")
    if len(set(coords2)) != len(coords2) or any(i < 0 or i >= model.measure.dim for i in coords2):
        raise ValueError("invalid conditioning coordinates")
    return coords2, x2


def conditional(
    model: SquaredFamilyModel, coords2, x2, scheme: IntegrationScheme | None = None
) -> SquaredFamilyModel:
    """The squared family obtained by fixing the coordinates ``coords2`` at ``x2``.

    Same parameter, features ``x1 -> psi((x1, x2))`` and base measure
    ``mu1(. | x2)``; the kernel is recomputed for that measure.
    """
    coords2, x2 = _normalise_coords(model, coords2, x2)
    if not coords2:
        return model
    if isinstance(model.measure, DiscreteMeasure):
        raise TypeError("measure kind 'discrete' does not factorise; use a box or Gaussian measure")
    mu1, _ = _split_measure(model.measure, coords2, x2)
    feats = ConditionedFeatures(model.features, coords2, x2)
    scheme = scheme if scheme is not None else model.kernel.scheme
    K1 = compute_kernel(feats, mu1, scheme)
    return SquaredFamilyModel(feats, mu1, K1, model.theta)


def marginal_density(
    model: SquaredFamilyModel, coords2, x2, scheme: IntegrationScheme | None = None
) -> float:
    """Marginal density of ``x2`` w.r.t. ``mu2``: ``Tr(M K_{1|2}) / Tr(M K)`` with ``M = Theta^T Theta``."""
    coords2, x2 = _normalise_coords(model, coords2, x2)
    if not coords2:
        return 1.0
    if isinstance(model.measure, DiscreteMeasure):
        raise TypeError("measure kind 'discrete' does not factorise; use a box or Gaussian measure")
    mu1, _ = _split_measure(model.measure, coords2, x2)
    feats = ConditionedFeatures(model.features, coords2, x2)
    scheme = scheme if scheme is not None else model.kernel.scheme
    K1 = compute_kernel(feats, mu1, scheme).matrix
    th = model.theta if model.theta.ndim == 2 else model.theta[None, :]
    M = th.T @ th
    return float(np.sum(M * K1) / model.z)


def cholesky_flatten(L) -> np.ndarray:
    """Column-major flattening of a lower-triangular factor with positive diagonal."""
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ValueError("L must be square")
    if np.any(np.triu(L, 1) != 0):
        raise ValueError("L must be lower triangular")
    if not np.all(np.diag(L) > 0):
        raise ValueError("L must have a strictly positive diagonal")
    return vec(L)


def cholesky_unflatten(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = int(round(np.sqrt(v.size)))
    if n * n != v.size:
        raise ValueError("length is not a perfect square")
    L = unvec(v, n)
    if np.any(np.triu(L, 1) != 0) or not np.all(np.diag(L) > 0):
        raise ValueError("not a valid Cholesky factor")
    return L


def m_normalizer(Theta, K) -> float:
    """``vec(Theta)^T (K (x) I_m) vec(Theta)``, the Kronecker route to the normaliser."""
    Theta = np.atleast_2d(np.asarray(Theta, dtype=float))
    v = vec(Theta)
    return float(v @ m_kernel(K, Theta.shape[0]) @ v)
