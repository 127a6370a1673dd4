"""Feature maps (statistics) ``psi: X -> R^n``.

Every map puts its non-constant coordinates first and a constant bias
coordinate (identically 1) last.  The first coordinate is the one the
half-space constraint ``theta_1 > 0`` refers to.

Random constructions (cosine / ReLU features) draw their hidden parameters
once, at construction, and store the realised arrays so that a serialised
map reproduces exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Any

import numpy as np

__all__ = [
    "FeatureMap",
    "PolynomialFeatures",
    "CosineFeatures",
    "ReluFeatures",
    "TabulatedFeatures",
    "ConditionedFeatures",
    "eval_features",
    "eval_batch",
    "span_rank",
    "random_cosine_features",
    "random_relu_features",
    "feature_map_from_dict",
]

_CHUNK = 8192


def _frozen(a, ndim=None) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


class FeatureMap:
    """Base class. Subclasses implement ``_evaluate`` on an ``(N, d)`` block."""

    kind: str = ""
    input_dim: int
    output_dim: int

    def _evaluate(self, X: np.ndarray) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError

    def __call__(self, X) -> np.ndarray:
        return eval_batch(self, X)

    def to_dict(self) -> dict[str, Any]:  # pragma: no cover
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class PolynomialFeatures(FeatureMap):
    """All monomials of total degree ``degree`` down to 1, then the bias.

    Within one total degree, monomials follow lexicographic order of the
    sorted coordinate multiset, so for ``d=1, degree=2`` the map is
    ``(x^2, x, 1)`` and for ``d=2, degree=1`` it is ``(x1, x2, 1)``.
    """

    degree: int
    input_dim: int = 1
    kind: str = field(default="polynomial", init=False)

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        terms = []
        for deg in range(self.degree, 0, -1):
            for combo in combinations_with_replacement(range(self.input_dim), deg):
                powers = np.zeros(self.input_dim, dtype=int)
                for j in combo:
                    powers[j] += 1
                terms.append(powers)
        object.__setattr__(self, "_powers", np.array(terms))

    @property
    def output_dim(self) -> int:
        return len(self._powers) + 1

    def _evaluate(self, X):
        out = np.ones((X.shape[0], self.output_dim))
        for t, powers in enumerate(self._powers):
            col = np.ones(X.shape[0])
            for j, p in enumerate(powers):
                if p:
                    col = col * X[:, j] ** p
            out[:, t] = col
        return out

    def to_dict(self):
        return {"kind": "polynomial", "input_dim": self.input_dim, "degree": self.degree}


def _affine(X: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Elementwise product + reduction keeps each row's arithmetic independent
    # of the batch size (a BLAS matmul does not guarantee that).
    return (X[:, None, :] * W[None, :, :]).sum(axis=-1) + b


@dataclass(frozen=True, eq=False)
class CosineFeatures(FeatureMap):
    """``scale * cos(W x + b)`` followed by the bias; ``scale`` defaults to 1/sqrt(n-1)."""

    frequencies: np.ndarray
    phases: np.ndarray
    scale: float | None = None
    kind: str = field(default="cosine", init=False)

    def __post_init__(self):
        W = _frozen(self.frequencies, 2)
        b = _frozen(self.phases, 1)
        if W.shape[0] != b.shape[0]:
            raise ValueError("frequencies and phases disagree on the feature count")
        object.__setattr__(self, "frequencies", W)
        object.__setattr__(self, "phases", b)
        if self.scale is None:
            object.__setattr__(self, "scale", 1.0 / np.sqrt(W.shape[0]))
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @property
    def input_dim(self) -> int:
        return self.frequencies.shape[1]

    @property
    def output_dim(self) -> int:
        return self.frequencies.shape[0] + 1

    def _evaluate(self, X):
        out = np.ones((X.shape[0], self.output_dim))
        out[:, :-1] = self.scale * np.cos(_affine(X, self.frequencies, self.phases))
        return out

    def to_dict(self):
        return {
            "kind": "cosine",
            "frequencies": self.frequencies.tolist(),
            "phases": self.phases.tolist(),
            "scale": float(self.scale),
        }


@dataclass(frozen=True, eq=False)
class ReluFeatures(FeatureMap):
    """``scale * max(0, W x + b)`` followed by the bias."""

    weights: np.ndarray
    biases: np.ndarray
    scale: float | None = None
    kind: str = field(default="relu", init=False)

    def __post_init__(self):
        W = _frozen(self.weights, 2)
        b = _frozen(self.biases, 1)
        if W.shape[0] != b.shape[0]:
            raise ValueError("weights and biases disagree on the feature count")
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "biases", b)
        if self.scale is None:
            object.__setattr__(self, "scale", 1.0 / np.sqrt(W.shape[0]))
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @property
    def input_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights.shape[0] + 1

    def _evaluate(self, X):
        out = np.ones((X.shape[0], self.output_dim))
        out[:, :-1] = self.scale * np.maximum(0.0, _affine(X, self.weights, self.biases))
        return out

    def to_dict(self):
        return {
            "kind": "relu",
            "weights": self.weights.tolist(),
            "biases": self.biases.tolist(),
            "scale": float(self.scale),
        }


@dataclass(frozen=True, eq=False)
class TabulatedFeatures(FeatureMap):
    """One-dimensional features given on a grid, linearly interpolated.

    ``values`` has shape ``(len(grid), n - 1)``; the bias column is appended.
    Points outside ``[grid[0], grid[-1]]`` are rejected.
    """

    grid: np.ndarray
    values: np.ndarray
    kind: str = field(default="tabulated", init=False)

    def __post_init__(self):
        g = _frozen(self.grid, 1)
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        v = _frozen(v, 2)
        if g.size < 2 or np.any(np.diff(g) <= 0):
            raise ValueError("grid must be strictly increasing with at least 2 nodes")
        if v.shape[0] != g.size:
            raise ValueError("values must have one row per grid node")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    input_dim = 1

    @property
    def output_dim(self) -> int:
        return self.values.shape[1] + 1

    def _evaluate(self, X):
        x = X[:, 0]
        if np.any(x < self.grid[0]) or np.any(x > self.grid[-1]):
            raise ValueError("tabulated feature map evaluated outside its grid")
        out = np.ones((X.shape[0], self.output_dim))
        for j in range(self.values.shape[1]):
            out[:, j] = np.interp(x, self.grid, self.values[:, j])
        return out

    def to_dict(self):
        return {"kind": "tabulated", "grid": self.grid.tolist(), "values": self.values.tolist()}


@dataclass(frozen=True, eq=False)
class ConditionedFeatures(FeatureMap):
    """``x1 -> psi((x1, x2))`` with the coordinates ``fixed_index`` pinned to ``fixed_values``."""

    base: FeatureMap
    fixed_index: tuple[int, ...]
    fixed_values: np.ndarray
    kind: str = field(default="conditioned", init=False)

    def __post_init__(self):
        idx = tuple(int(i) for i in self.fixed_index)
        vals = _frozen(np.atleast_1d(self.fixed_values), 1)
        if len(idx) != vals.size or len(set(idx)) != len(idx):
            raise ValueError("fixed_index and fixed_values must match and be unique")
        if any(i < 0 or i >= self.base.input_dim for i in idx):
            raise ValueError("fixed_index out of range")
        if len(idx) >= self.base.input_dim:
            raise ValueError("at least one free coordinate is required")
        object.__setattr__(self, "fixed_index", idx)
        object.__setattr__(self, "fixed_values", vals)
        free = tuple(i for i in range(self.base.input_dim) if i not in idx)
        object.__setattr__(self, "_free", free)

    @property
    def free_index(self) -> tuple[int, ...]:
        return self._free

    @property
    def input_dim(self) -> int:
        return len(self._free)

    @property
    def output_dim(self) -> int:
        return self.base.output_dim

    def _evaluate(self, X):
        full = np.empty((X.shape[0], self.base.input_dim))
        full[:, list(self._free)] = X
        full[:, list(self.fixed_index)] = self.fixed_values
        return self.base._evaluate(full)

    def to_dict(self):
        return {
            "kind": "conditioned",
            "base": self.base.to_dict(),
            "fixed_index": list(self.fixed_index),
            "fixed_values": self.fixed_values.tolist(),
        }


def eval_batch(fmap: FeatureMap, X) -> np.ndarray:
    """Evaluate ``fmap`` on the rows of ``X`` (shape ``(N, d)``); returns ``(N, n)``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1 and fmap.input_dim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[1] != fmap.input_dim:
        raise ValueError(
            f"input has shape {X.shape}, expected (N, {fmap.input_dim})"
        )
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite input to feature map")
    if X.shape[0] <= _CHUNK:
        return fmap._evaluate(X)
    return np.concatenate(
        [fmap._evaluate(X[i : i + _CHUNK]) for i in range(0, X.shape[0], _CHUNK)]
    )


def eval_features(fmap: FeatureMap, x) -> np.ndarray:
    """Evaluate ``fmap`` at a single point; returns an ``n``-vector whose last entry is 1."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1 or x.shape[0] != fmap.input_dim:
        raise ValueError(f"point has shape {x.shape}, expected ({fmap.input_dim},)")
    return eval_batch(fmap, x[None, :])[0]


def span_rank(fmap: FeatureMap, probe_points, tol: float = 1e-10) -> int:
    """Numerical rank of the feature matrix at ``probe_points``.

    Singular values above ``tol * s_max`` count.  A return value of
    ``fmap.output_dim`` certifies that the features span R^n on the probes;
    with fewer probes than ``n`` the rank is simply bounded by the probe count.
    """
    P = eval_batch(fmap, np.asarray(probe_points, dtype=float).reshape(-1, fmap.input_dim))
    s = np.linalg.svd(P, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def random_cosine_features(
    n: int, input_dim: int = 1, bandwidth: float = 1.0, seed: int = 0
) -> CosineFeatures:
    """Random Fourier features: ``W ~ N(0, bandwidth^2)``, ``b ~ U[0, 2pi)``, ``n - 1`` of them.

    Frequencies and phases come from separate streams, so for a fixed seed
    the features of a smaller ``n`` are a prefix of those of a larger one.
    """
    if n < 2:
        raise ValueError("need n >= 2 (one random feature plus the bias)")
    w_seq, b_seq = np.random.SeedSequence(seed).spawn(2)
    W = np.random.default_rng(w_seq).normal(0.0, bandwidth, size=(n - 1, input_dim))
    b = np.random.default_rng(b_seq).uniform(0.0, 2 * np.pi, size=n - 1)
    return CosineFeatures(W, b)


def random_relu_features(n: int, input_dim: int = 1, seed: int = 0) -> ReluFeatures:
    if n < 2:
        raise ValueError("need n >= 2 (one random feature plus the bias)")
    rng = np.random.default_rng(seed)
    W = rng.normal(size=(n - 1, input_dim))
    b = rng.normal(size=n - 1)
    return ReluFeatures(W, b)


def feature_map_from_dict(spec: dict) -> FeatureMap:
    kind = spec["kind"]
    if kind == "polynomial":
        return PolynomialFeatures(int(spec["degree"]), int(spec.get("input_dim", 1)))
    if kind == "cosine":
        return CosineFeatures(spec["frequencies"], spec["phases"], spec.get("scale"))
    if kind == "relu":
        return ReluFeatures(spec["weights"], spec["biases"], spec.get("scale"))
    if kind == "tabulated":
        return TabulatedFeatures(spec["grid"], spec["values"])
    if kind == "conditioned":
        return ConditionedFeatures(
            feature_map_from_dict(spec["base"]), tuple(spec["fixed_index"]), spec["fixed_values"]
        )
    raise ValueError(f"unknown feature map kind {kind!r}")

