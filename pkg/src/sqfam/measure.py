"""Base measures and integration against them.

Three measure kinds are supported: Lebesgue measure on a box, a Gaussian
probability measure and a finite weighted point set.  Integrals use either a
tensorised Gauss rule (Gauss-Legendre on boxes, probabilists' Gauss-Hermite
for Gaussians; ``d <= 3``) or seeded Monte Carlo.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss

__all__ = [
    "BoxLebesgue",
    "GaussianMeasure",
    "DiscreteMeasure",
    "BaseMeasure",
    "Quadrature",
    "MonteCarlo",
    "IntegrationScheme",
    "IntegrationError",
    "make_rng",
    "integrate",
    "integration_nodes",
    "total_mass",
    "draw",
    "measure_from_dict",
    "scheme_from_dict",
    "parse_scheme",
]

MAX_QUADRATURE_DIM = 3
DEFAULT_NODES = 64
DEFAULT_SAMPLES = 100_000


class IntegrationError(ArithmeticError):
    """Raised when an integrand is non-finite or a rule cannot be applied."""


def _readonly(a, ndim) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim == 0 and ndim == 1:
        arr = arr[None]
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class BoxLebesgue:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo, hi = _readonly(self.lower, 1), _readonly(self.upper, 1)
        if lo.shape != hi.shape:
            raise ValueError("lower and upper must have the same length")
        if not np.all(lo < hi):
            raise ValueError("box requires lower < upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    kind = "box_lebesgue"

    @property
    def dim(self) -> int:
        return self.lower.size

    def to_dict(self):
        return {"kind": self.kind, "lower": self.lower.tolist(), "upper": self.upper.tolist()}


@dataclass(frozen=True, eq=False)
class GaussianMeasure:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        m = _readonly(self.mean, 1)
        S = np.array(self.covariance, dtype=float)
        if S.ndim == 0:
            S = S.reshape(1, 1)
        if S.shape != (m.size, m.size):
            raise ValueError("covariance shape does not match mean")
        if not np.allclose(S, S.T, rtol=0, atol=1e-12 * max(1.0, np.abs(S).max())):
            raise ValueError("covariance must be symmetric")
        try:
            L = np.linalg.cholesky(S)
        except np.linalg.LinAlgError as exc:
            raise ValueError("covariance is not positive definite") from exc
        S.flags.writeable = False
        L.flags.writeable = False
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "covariance", S)
        object.__setattr__(self, "chol", L)

    kind = "gaussian"

    @property
    def dim(self) -> int:
        return self.mean.size

    def to_dict(self):
        return {"kind": self.kind, "mean": self.mean.tolist(), "covariance": self.covariance.tolist()}


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        P = np.array(self.points, dtype=float)
        if P.ndim == 1:
            P = P[:, None]
        w = _readonly(self.weights, 1)
        if P.shape[0] != w.size or w.size == 0:
            raise ValueError("need one positive weight per point")
        if not np.all(w > 0):
            raise ValueError("weights must be strictly positive")
        P.flags.writeable = False
        object.__setattr__(self, "points", P)
        object.__setattr__(self, "weights", w)

    kind = "discrete"

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def to_dict(self):
        return {"kind": self.kind, "points": self.points.tolist(), "weights": self.weights.tolist()}


BaseMeasure = Union[BoxLebesgue, GaussianMeasure, DiscreteMeasure]


@dataclass(frozen=True)
class Quadrature:
    nodes_per_dim: int = DEFAULT_NODES

    def __post_init__(self):
        if self.nodes_per_dim < 2:
            raise ValueError("nodes_per_dim must be >= 2")

    def to_dict(self):
        return {"kind": "quadrature", "nodes_per_dim": self.nodes_per_dim}

    def __str__(self):
        return f"quad:{self.nodes_per_dim}"


@dataclass(frozen=True)
class MonteCarlo:
    samples: int = DEFAULT_SAMPLES
    seed: int = 0

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be >= 1")

    def to_dict(self):
        return {"kind": "monte_carlo", "samples": self.samples, "seed": self.seed}

    def __str__(self):
        return f"mc:{self.samples}:{self.seed}"


IntegrationScheme = Union[Quadrature, MonteCarlo]


def make_rng(*keys: int) -> np.random.Generator:
    """Independent generator for the stream identified by ``keys``.

    ``make_rng(master, N, rep)`` gives each replication its own stream, so
    results do not depend on the order in which replications run.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(k) for k in keys])))


def total_mass(measure: BaseMeasure) -> float:
    if isinstance(measure, BoxLebesgue):
        return float(np.prod(measure.upper - measure.lower))
    if isinstance(measure, GaussianMeasure):
        return 1.0
    return float(np.sum(measure.weights))


def _gauss_rule(measure, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    d = measure.dim
    if d > MAX_QUADRATURE_DIM:
        raise IntegrationError(
            f"tensor quadrature supports d <= {MAX_QUADRATURE_DIM}; use Monte Carlo for d={d}"
        )
    if isinstance(measure, BoxLebesgue):
        t, w = leggauss(nodes)
        axes, wts = [], []
        for lo, hi in zip(measure.lower, measure.upper):
            half = 0.5 * (hi - lo)
            axes.append(lo + half * (t + 1.0))
            wts.append(half * w)
    else:
        t, w = hermegauss(nodes)
        w = w / np.sqrt(2 * np.pi)
        axes, wts = [t] * d, [w] * d
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wgrid = np.meshgrid(*wts, indexing="ij")
    weights = np.prod(np.stack([g.ravel() for g in wgrid], axis=1), axis=1)
    if isinstance(measure, GaussianMeasure):
        pts = measure.mean + pts @ measure.chol.T
    return pts, weights


def draw(measure: BaseMeasure, count: int, seed) -> np.ndarray:
    """``count`` i.i.d. points from the normalised measure ``mu / mu(X)``.

    ``seed`` is an int or a ``numpy.random.Generator``; returns ``(count, d)``.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    if isinstance(measure, BoxLebesgue):
        u = rng.random((count, measure.dim))
        return measure.lower + u * (measure.upper - measure.lower)
    if isinstance(measure, GaussianMeasure):
        z = rng.standard_normal((count, measure.dim))
        return measure.mean + z @ measure.chol.T
    p = measure.weights / measure.weights.sum()
    idx = rng.choice(p.size, size=count, p=p)
    return measure.points[idx]


def integration_nodes(measure: BaseMeasure, scheme: IntegrationScheme | None = None):
    """Points and weights such that ``sum(w * f(points))`` approximates ``int f dmu``.

    Discrete measures always use their own atoms (the integral is exact).
    """
    if isinstance(measure, DiscreteMeasure):
        return measure.points, measure.weights
    scheme = scheme or Quadrature()
    if isinstance(scheme, Quadrature):
        return _gauss_rule(measure, scheme.nodes_per_dim)
    pts = draw(measure, scheme.samples, scheme.seed)
    return pts, np.full(scheme.samples, total_mass(measure) / scheme.samples)


def _apply(f, pts, weights):
    vals = np.asarray(f(pts), dtype=float)
    if vals.shape[0] != pts.shape[0]:
        raise ValueError("integrand must return one value (or array) per point")
    if not np.all(np.isfinite(vals)):
        raise IntegrationError("non-finite integrand value encountered")
    return vals


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    measure: BaseMeasure,
    scheme: IntegrationScheme | None = None,
):
    """Approximate ``int f dmu``.

    ``f`` maps an ``(N, d)`` block of points to ``(N,)`` values, or to
    ``(N, ...)`` for array-valued integrands.  Returns ``(value, error)``
    where the error is ``|Q(nodes) - Q(nodes // 2)|`` for quadrature and the
    standard error for Monte Carlo (elementwise for array integrands).
    """
    if isinstance(measure, DiscreteMeasure):
        pts, w = measure.points, measure.weights
        vals = _apply(f, pts, w)
        return np.tensordot(w, vals, axes=1), np.zeros(vals.shape[1:])
    scheme = scheme or Quadrature()
    if isinstance(scheme, Quadrature):
        pts, w = _gauss_rule(measure, scheme.nodes_per_dim)
        value = np.tensordot(w, _apply(f, pts, w), axes=1)
        pts2, w2 = _gauss_rule(measure, max(1, scheme.nodes_per_dim // 2))
        coarse = np.tensordot(w2, _apply(f, pts2, w2), axes=1)
        return value, np.abs(value - coarse)
    pts, w = integration_nodes(measure, scheme)
    vals = _apply(f, pts, w)
    mass = total_mass(measure)
    value = mass * vals.mean(axis=0)
    if scheme.samples > 1:
        err = mass * vals.std(axis=0, ddof=1) / np.sqrt(scheme.samples)
    else:
        err = np.full(vals.shape[1:], np.inf)
    return value, err


def measure_from_dict(spec: dict) -> BaseMeasure:
    kind = spec["kind"]
    if kind == "box_lebesgue":
        return BoxLebesgue(spec["lower"], spec["upper"])
    if kind == "gaussian":
        return GaussianMeasure(spec["mean"], spec["covariance"])
    if kind == "discrete":
        return DiscreteMeasure(spec["points"], spec["weights"])
    raise ValueError(f"unknown measure kind {kind!r}")


def scheme_from_dict(spec: dict | None) -> IntegrationScheme | None:
    if spec is None:
        return None
    if spec["kind"] == "quadrature":
        return Quadrature(int(spec.get("nodes_per_dim", DEFAULT_NODES)))
    if spec["kind"] == "monte_carlo":
        return MonteCarlo(int(spec.get("samples", DEFAULT_SAMPLES)), int(spec.get("seed", 0)))
    raise ValueError(f"unknown scheme kind {spec['kind']!r}")


def parse_scheme(text: str) -> IntegrationScheme:
    """Parse ``quad:64`` or ``mc:100000[:seed]``."""
    parts = text.split(":")
    if parts[0] in ("quad", "quadrature"):
        return Quadrature(int(parts[1]) if len(parts) > 1 else DEFAULT_NODES)
    if parts[0] in ("mc", "monte_carlo"):
        samples = int(parts[1]) if len(parts) > 1 else DEFAULT_SAMPLES
        seed = int(parts[2]) if len(parts) > 2 else 0
        return MonteCarlo(samples, seed)
    raise ValueError(f"cannot parse integration scheme {text!r}")
