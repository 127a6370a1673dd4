"""Exact sampling from squared family densities.

Rejection sampling proposes from the normalised base measure (the Gaussian
itself for Gaussian base measures) and bounds the density ratio by its
maximum over a grid times a safety factor.  Any proposal whose ratio exceeds
the envelope is flagged.  Discrete base measures are sampled exactly from
their atom probabilities.  One-dimensional box models can also be sampled
by inverting a tabulated CDF.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .measure import BoxLebesgue, DiscreteMeasure, GaussianMeasure, draw, make_rng, total_mass
from .model import SquaredFamilyModel, density

__all__ = [
    "SampleResult",
    "envelope_grid",
    "rejection_sample",
    "inverse_cdf_transform",
    "inverse_cdf_sample_1d",
    "cdf_1d",
    "MIN_ACCEPTANCE",
]

MIN_ACCEPTANCE = 1e-4
MAX_BATCH = 1 << 18
GRID_NODES = {1: 4096, 2: 128, 3: 32}
GAUSS_SPAN = 6.0


@dataclass(frozen=True, eq=False)
class SampleResult:
    samples: np.ndarray
    acceptance_rate: float
    envelope: float
    envelope_violation: bool
    max_observed_ratio: float


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else make_rng(seed)


def envelope_grid(measure) -> np.ndarray:
    """Grid used to bound the density ratio: 4096 nodes in 1D, 128^2 in 2D, 32^3 in 3D."""
    d = measure.dim
    if d not in GRID_NODES:
        raise ValueError(f"envelope grids are defined for d <= 3, got d={d}")
    m = GRID_NODES[d]
    if isinstance(measure, BoxLebesgue):
        axes = [np.linspace(lo, hi, m) for lo, hi in zip(measure.lower, measure.upper)]
    else:
        axes = [np.linspace(-GAUSS_SPAN, GAUSS_SPAN, m)] * d
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    if isinstance(measure, GaussianMeasure):
        pts = measure.mean + pts @ measure.chol.T
    return pts


def _ratio(model: SquaredFamilyModel, X: np.ndarray) -> np.ndarray:
    # density of the target w.r.t. the normalised proposal mu / mu(X)
    return density(model, X) * total_mass(model.measure)


def rejection_sample(model: SquaredFamilyModel, count: int, seed=0, safety: float = 1.1) -> SampleResult:
    """``count`` samples from ``model`` by rejection against the base measure."""
    if count < 0:
        raise ValueError("count must be >= 0")
    if safety < 1:
        raise ValueError("safety must be >= 1")
    rng = _rng(seed)
    mu = model.measure
    if isinstance(mu, DiscreteMeasure):
        p = density(model, mu.points) * mu.weights
        idx = rng.choice(p.size, size=count, p=p / p.sum())
        return SampleResult(mu.points[idx], 1.0, 1.0, False, 1.0)
    M = safety * float(np.max(_ratio(model, envelope_grid(mu))))
    if not np.isfinite(M) or M <= 0:
        raise ArithmeticError("envelope is not finite")
    if 1.0 / M < MIN_ACCEPTANCE:
        raise ArithmeticError(f"expected acceptance rate {1.0 / M:.2e} is below {MIN_ACCEPTANCE}")
    chunks, got, proposed, worst = [], 0, 0, 0.0
    while got < count:
        batch = min(int(np.ceil((count - got) * M * 1.1)) + 64, MAX_BATCH)
        X = draw(mu, batch, rng)
        r = _ratio(model, X)
        u = rng.random(batch)
        worst = max(worst, float(r.max()))
        keep = X[u * M < r]
        proposed += batch
        chunks.append(keep)
        got += keep.shape[0]
        if proposed > 100 * count / MIN_ACCEPTANCE + 1e6:
            raise ArithmeticError("rejection sampler failed to make progress")
    samples = np.concatenate(chunks, axis=0)[:count] if chunks else np.empty((0, mu.dim))
    rate = got / proposed if proposed else 1.0 / M
    if proposed and rate < MIN_ACCEPTANCE:
        raise ArithmeticError(f"acceptance rate {rate:.2e} is below {MIN_ACCEPTANCE}")
    return SampleResult(samples, float(rate), M, bool(worst > M), worst)


def _box_1d(model: SquaredFamilyModel) -> BoxLebesgue:
    mu = model.measure
    if not isinstance(mu, BoxLebesgue) or mu.dim != 1:
        raise ValueError("inverse-CDF sampling needs a one-dimensional box measure")
    return mu


def _cdf_table(model: SquaredFamilyModel, grid_nodes: int):
    mu = _box_1d(model)
    x = np.linspace(mu.lower[0], mu.upper[0], grid_nodes)
    mid = 0.5 * (x[1:] + x[:-1])
    f = density(model, x[:, None])
    fm = density(model, mid[:, None])
    # Simpson on each cell; exact for the quadratic densities of affine features
    cells = np.diff(x) / 6.0 * (f[:-1] + 4.0 * fm + f[1:])
    F = np.concatenate([[0.0], np.cumsum(cells)])
    return x, F / F[-1]


def inverse_cdf_transform(model: SquaredFamilyModel, u, grid_nodes: int = 4096) -> np.ndarray:
    """Map uniforms through the piecewise-linear inverse of the tabulated CDF."""
    x, F = _cdf_table(model, grid_nodes)
    return np.interp(np.asarray(u, dtype=float), F, x)


def inverse_cdf_sample_1d(model: SquaredFamilyModel, count: int, seed=0, grid_nodes: int = 4096) -> np.ndarray:
    u = _rng(seed).random(count)
    return inverse_cdf_transform(model, u, grid_nodes)[:, None]


def cdf_1d(model: SquaredFamilyModel, xs, nodes: int = 64) -> np.ndarray:
    """CDF of a one-dimensional model by Gauss-Legendre quadrature on ``[lower, x]``.

    Box measures integrate the density from the left edge; Gaussian measures
    integrate ``p(x) phi(x)`` from 12 standard deviations below the mean.
    """
    mu = model.measure
    if mu.dim != 1 or isinstance(mu, DiscreteMeasure):
        raise ValueError("cdf_1d needs a one-dimensional box or Gaussian measure")
    if isinstance(mu, BoxLebesgue):
        lo, hi = mu.lower[0], mu.upper[0]

        def base(x):
            return np.ones_like(x)

    else:
        m, sd = mu.mean[0], float(np.sqrt(mu.covariance[0, 0]))
        lo, hi = m - 12 * sd, m + 12 * sd

        def base(x):
            return np.exp(-0.5 * ((x - m) / sd) ** 2) / (sd * np.sqrt(2 * np.pi))

    xs = np.clip(np.atleast_1d(np.asarray(xs, dtype=float)), lo, hi)
    t, w = leggauss(nodes)
    half = 0.5 * (xs - lo)
    pts = lo + half[:, None] * (t[None, :] + 1.0)
    flat = pts.reshape(-1)
    vals = (density(model, flat[:, None]) * base(flat)).reshape(pts.shape)
    return (vals @ w) * half
