"""The squared family kernel ``K = int psi psi^T dmu`` and its relatives.

``K`` is the only parameter-independent integral a squared family needs:
every normaliser ``theta^T K theta``, every Fisher matrix and every Bregman
divergence in the family reuses it.  Higher even-order moment tensors play
the same role for monomial families ``g(a) = a^k``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement
from math import comb

import numpy as np

from .features import CosineFeatures, FeatureMap, eval_batch
from .measure import (
    BaseMeasure,
    DiscreteMeasure,
    GaussianMeasure,
    IntegrationScheme,
    MonteCarlo,
    Quadrature,
    integration_nodes,
    scheme_from_dict,
    total_mass,
)

__all__ = [
    "SquaredKernel",
    "MomentTensor",
    "compute_kernel",
    "closed_form_cosine_gaussian",
    "moment_tensor",
    "m_kernel",
    "psd_check",
    "kernel_from_dict",
    "entrywise_mc_errors",
    "multi_indices",
    "MAX_TENSOR_ENTRIES",
]

MAX_TENSOR_ENTRIES = 10**6


@dataclass(frozen=True, eq=False)
class SquaredKernel:
    """Symmetrised kernel matrix plus how it was obtained.

    ``scheme`` is ``None`` for closed-form kernels.  ``error_estimate`` is the
    largest entrywise error estimate of the integration rule.
    """

    matrix: np.ndarray
    scheme: IntegrationScheme | None = None
    error_estimate: float = 0.0

    def __post_init__(self):
        K = np.array(self.matrix, dtype=float)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise ValueError("kernel must be a square matrix")
        K = 0.5 * (K + K.T)
        K.flags.writeable = False
        object.__setattr__(self, "matrix", K)
        lam = np.linalg.eigvalsh(K)
        object.__setattr__(self, "min_eigenvalue", float(lam[0]))
        if lam[0] < -1e-8 * max(abs(lam[-1]), 1e-300) - 4 * self.error_estimate:
            raise ValueError(f"kernel is not positive semidefinite (min eigenvalue {lam[0]:.3e})")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def scheme_used(self) -> IntegrationScheme | None:
        return self.scheme

    def to_dict(self):
        return {
            "matrix": self.matrix.tolist(),
            "scheme": None if self.scheme is None else self.scheme.to_dict(),
            "error_estimate": float(self.error_estimate),
            "min_eigenvalue": self.min_eigenvalue,
        }


def kernel_from_dict(spec: dict) -> SquaredKernel:
    return SquaredKernel(
        np.array(spec["matrix"], dtype=float),
        scheme_from_dict(spec.get("scheme")),
        float(spec.get("error_estimate", 0.0)),
    )


def _gram(Phi: np.ndarray, w: np.ndarray) -> np.ndarray:
    return (Phi * w[:, None]).T @ Phi


def compute_kernel(
    fmap: FeatureMap, measure: BaseMeasure, scheme: IntegrationScheme | None = None
) -> SquaredKernel:
    """Kernel by quadrature (default, 64 nodes per dimension) or Monte Carlo.

    For quadrature the error estimate compares against the half-node rule;
    for Monte Carlo it is the largest entrywise standard error.
    """
    if isinstance(measure, DiscreteMeasure):
        pts, w = integration_nodes(measure)
        return SquaredKernel(_gram(eval_batch(fmap, pts), w), scheme, 0.0)
    scheme = scheme or Quadrature()
    if isinstance(scheme, Quadrature):
        pts, w = integration_nodes(measure, scheme)
        K = _gram(eval_batch(fmap, pts), w)
        pts2, w2 = integration_nodes(measure, Quadrature(max(2, scheme.nodes_per_dim // 2)))
        K2 = _gram(eval_batch(fmap, pts2), w2)
        err = float(np.max(np.abs(K - K2)))
        if not np.all(np.isfinite(K)):
            raise ArithmeticError("non-finite kernel entries")
        return SquaredKernel(K, scheme, err)
    pts, _ = integration_nodes(measure, scheme)
    Phi = eval_batch(fmap, pts)
    N = scheme.samples
    mass = total_mass(measure)
    mean = Phi.T @ Phi / N
    if N > 1:
        sq = Phi * Phi
        second = sq.T @ sq / N
        var = np.maximum(second - mean**2, 0.0) * N / (N - 1)
        err = float(mass * np.sqrt(var.max() / N))
    else:
        err = float("inf")
    return SquaredKernel(mass * mean, scheme, err)


def entrywise_mc_errors(fmap: FeatureMap, measure: BaseMeasure, scheme: MonteCarlo) -> np.ndarray:
    """Entrywise Monte Carlo standard errors of the kernel estimate."""
    pts, _ = integration_nodes(measure, scheme)
    Phi = eval_batch(fmap, pts)
    N = scheme.samples
    mean = Phi.T @ Phi / N
    sq = Phi * Phi
    var = np.maximum(sq.T @ sq / N - mean**2, 0.0) * N / (N - 1)
    return total_mass(measure) * np.sqrt(var / N)


def _expected_cos(u: np.ndarray, c: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    # E[cos(u^T x + c)] for x ~ N(mean, cov), row-wise over u
    quad = np.einsum("ij,jk,ik->i", u, cov, u)
    return np.exp(-0.5 * quad) * np.cos(u @ mean + c)


def closed_form_cosine_gaussian(fmap: CosineFeatures, measure: GaussianMeasure) -> SquaredKernel:
    """Exact kernel for cosine features under a Gaussian measure.

    Uses ``cos a cos b = (cos(a - b) + cos(a + b)) / 2`` together with
    ``E cos(u^T x + c) = exp(-u^T S u / 2) cos(u^T m + c)``.
    """
    if not isinstance(fmap, CosineFeatures) or not isinstance(measure, GaussianMeasure):
        raise TypeError("closed form requires cosine features and a Gaussian measure")
    W, b, s = fmap.frequencies, fmap.phases, fmap.scale
    if W.shape[1] != measure.dim:
        raise ValueError("feature input dimension does not match the measure")
    r = W.shape[0]
    m, S = measure.mean, measure.covariance
    K = np.empty((r + 1, r + 1))
    i, j = np.meshgrid(np.arange(r), np.arange(r), indexing="ij")
    i, j = i.ravel(), j.ravel()
    diff = _expected_cos(W[i] - W[j], b[i] - b[j], m, S)
    summ = _expected_cos(W[i] + W[j], b[i] + b[j], m, S)
    K[:r, :r] = (0.5 * s * s * (diff + summ)).reshape(r, r)
    K[:r, r] = K[r, :r] = s * _expected_cos(W, b, m, S)
    K[r, r] = 1.0
    return SquaredKernel(K, None, 0.0)


@dataclass(frozen=True, eq=False)
class MomentTensor:
    """Sparse symmetric tensor ``int psi^{(x)k} dmu``.

    ``entries`` maps exponent tuples ``alpha`` (length ``n``, summing to
    ``k``) to ``int prod_i psi_i^alpha_i dmu``; each unordered index multiset
    is stored once.
    """

    order: int
    entries: dict
    error_estimate: float = 0.0

    @property
    def n(self) -> int:
        return len(next(iter(self.entries)))

    def __getitem__(self, alpha) -> float:
        return self.entries[tuple(int(a) for a in alpha)]


def multi_indices(n: int, k: int) -> np.ndarray:
    """All exponent vectors of length ``n`` summing to ``k``, one per multiset."""
    out = []
    for combo in combinations_with_replacement(range(n), k):
        alpha = [0] * n
        for j in combo:
            alpha[j] += 1
        out.append(alpha)
    return np.array(out, dtype=int)


def _monomials(Phi: np.ndarray, alphas: np.ndarray) -> np.ndarray:
    out = np.ones((Phi.shape[0], alphas.shape[0]))
    for j in range(Phi.shape[1]):
        col = alphas[:, j]
        if np.any(col):
            out *= Phi[:, j : j + 1] ** col[None, :]
    return out


def moment_tensor(
    fmap: FeatureMap, measure: BaseMeasure, k: int, scheme: IntegrationScheme | None = None
) -> MomentTensor:
    if k < 2 or k % 2:
        raise ValueError("moment tensor order must be an even integer >= 2")
    n = fmap.output_dim
    if comb(n + k - 1, k) > MAX_TENSOR_ENTRIES:
        raise ValueError(
            f"moment tensor would need {comb(n + k - 1, k)} entries (budget {MAX_TENSOR_ENTRIES})"
        )
    alphas = multi_indices(n, k)
    pts, w = integration_nodes(measure, scheme)
    Phi = eval_batch(fmap, pts)
    vals = np.empty(alphas.shape[0])
    block = max(1, 2_000_000 // max(1, Phi.shape[0]))
    for s in range(0, alphas.shape[0], block):
        vals[s : s + block] = w @ _monomials(Phi, alphas[s : s + block])
    err = 0.0
    if isinstance(scheme or Quadrature(), Quadrature) and not isinstance(measure, DiscreteMeasure):
        nodes = (scheme or Quadrature()).nodes_per_dim
        pts2, w2 = integration_nodes(measure, Quadrature(max(2, nodes // 2)))
        Phi2 = eval_batch(fmap, pts2)
        coarse = np.empty_like(vals)
        for s in range(0, alphas.shape[0], block):
            coarse[s : s + block] = w2 @ _monomials(Phi2, alphas[s : s + block])
        err = float(np.max(np.abs(vals - coarse)))
    entries = {tuple(int(a) for a in alpha): float(v) for alpha, v in zip(alphas, vals)}
    return MomentTensor(k, entries, err)


def m_kernel(K, m: int) -> np.ndarray:
    """``K (x) I_m``, the kernel of the ``m``-squared family in column-major ``vec`` order."""
    if m < 1:
        raise ValueError("m must be >= 1")
    K = K.matrix if isinstance(K, SquaredKernel) else np.asarray(K, dtype=float)
    return np.kron(K, np.eye(m))


def psd_check(K, tol: float | None = None) -> tuple[bool, float]:
    """``(min_eigenvalue > tol, min_eigenvalue)``; ``tol`` defaults to ``1e-10 * ||K||_2``."""
    M = K.matrix if isinstance(K, SquaredKernel) else np.asarray(K, dtype=float)
    lam = np.linalg.eigvalsh(0.5 * (M + M.T))
    if tol is None:
        tol = 1e-10 * max(abs(lam[0]), abs(lam[-1]))
    return bool(lam[0] > tol), float(lam[0])
