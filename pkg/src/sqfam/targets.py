"""Target densities ``q`` used by the estimation experiments.

A target exposes ``pdf`` (density w.r.t. the Lebesgue measure of its box)
and ``sample``.  Targets need not belong to any squared family.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, truncnorm

from .measure import BoxLebesgue, make_rng
from .model import SquaredFamilyModel, density
from .sampling import rejection_sample

__all__ = ["TruncatedGaussianMixture", "FamilyTarget", "target_from_dict"]


@dataclass(frozen=True, eq=False)
class TruncatedGaussianMixture:
    """Gaussian mixture restricted to ``[lower, upper]`` and renormalised."""

    weights: np.ndarray
    means: np.ndarray
    sds: np.ndarray
    lower: float = 0.0
    upper: float = 1.0

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        m = np.atleast_1d(np.asarray(self.means, dtype=float))
        s = np.atleast_1d(np.asarray(self.sds, dtype=float))
        if not (w.shape == m.shape == s.shape) or w.ndim != 1:
            raise ValueError("weights, means and sds must have one entry per component")
        if np.any(w <= 0) or np.any(s <= 0) or not self.lower < self.upper:
            raise ValueError("weights and sds must be positive and lower < upper")
        a, b = (self.lower - m) / s, (self.upper - m) / s
        inside = norm.cdf(b) - norm.cdf(a)
        mix = w * inside
        object.__setattr__(self, "weights", w / w.sum())
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "sds", s)
        object.__setattr__(self, "_a", a)
        object.__setattr__(self, "_b", b)
        # probability of each truncated component, and the overall normaliser
        object.__setattr__(self, "_component_p", mix / mix.sum())
        object.__setattr__(self, "_mass", float((w / w.sum()) @ inside))

    @property
    def measure(self) -> BoxLebesgue:
        return BoxLebesgue([self.lower], [self.upper])

    def pdf(self, X) -> np.ndarray:
        x = np.asarray(X, dtype=float).reshape(-1)
        dens = (self.weights[None, :] * norm.pdf(x[:, None], self.means, self.sds)).sum(axis=1)
        out = dens / self._mass
        return np.where((x >= self.lower) & (x <= self.upper), out, 0.0)

    def sample(self, count: int, seed) -> np.ndarray:
        rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
        comp = rng.choice(self.weights.size, size=count, p=self._component_p)
        out = np.empty(count)
        for j in range(self.weights.size):
            idx = np.flatnonzero(comp == j)
            if idx.size:
                out[idx] = truncnorm.rvs(
                    self._a[j], self._b[j], loc=self.means[j], scale=self.sds[j], size=idx.size, random_state=rng
                )
        return out[:, None]

    def to_dict(self):
        return {
            "kind": "truncated_gaussian_mixture",
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "sds": self.sds.tolist(),
            "lower": self.lower,
            "upper": self.upper,
        }


@dataclass(frozen=True, eq=False)
class FamilyTarget:
    """A squared family member used as the data-generating density."""

    model: SquaredFamilyModel

    @property
    def measure(self):
        return self.model.measure

    def pdf(self, X) -> np.ndarray:
        return density(self.model, np.asarray(X, dtype=float).reshape(-1, self.model.measure.dim))

    def sample(self, count: int, seed) -> np.ndarray:
        return rejection_sample(self.model, count, seed).samples


def target_from_dict(spec: dict):
    if spec["kind"] == "truncated_gaussian_mixture":
        return TruncatedGaussianMixture(
            spec["weights"], spec["means"], spec["sds"], spec.get("lower", 0.0), spec.get("upper", 1.0)
        )
    raise ValueError(f"unknown target kind {spec['kind']!r}")
