"""g-families ``p(x | theta) = g(theta^T psi(x)) / z(theta)``.

Three transformations are provided: ``exp`` (the exponential family, kept
for comparison), positively homogeneous ``g(a) = a^k`` for ``a > 0`` and
``c |a|^k`` otherwise, and even-order monomials ``g(a) = a^k``.  Monomial
families admit a tensor-factorised normaliser built from a precomputed
:class:`~sqfam.kernel.MomentTensor`.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .features import FeatureMap, eval_batch
from .kernel import MomentTensor
from .measure import BaseMeasure, IntegrationScheme, integrate

__all__ = [
    "GSpec",
    "MAX_MONOMIAL_ORDER",
    "g_eval",
    "g_prime",
    "g_second",
    "score_weight",
    "z_monomial_tensor",
    "z_quadrature",
    "density_g",
    "density_g_batch",
    "gspec_from_dict",
]

MAX_MONOMIAL_ORDER = 8
KINDS = ("exponential", "pos_homogeneous", "monomial")


@dataclass(frozen=True)
class GSpec:
    """Transformation ``g`` of a g-family.

    ``k`` and ``c`` are ignored for ``exponential``.  A ``monomial`` spec
    behaves exactly as ``pos_homogeneous`` with ``c = 1`` and even ``k``.
    """

    kind: str
    k: float = 2.0
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown g kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "monomial":
            if self.k != int(self.k) or int(self.k) % 2 or self.k < 2:
                raise ValueError("monomial order must be an even integer >= 2")
            if self.k > MAX_MONOMIAL_ORDER:
                raise ValueError(f"monomial order is capped at {MAX_MONOMIAL_ORDER}")
            if self.c != 1.0:
                raise ValueError("monomial specs have c = 1")
            object.__setattr__(self, "k", int(self.k))
        elif self.kind == "pos_homogeneous":
            if not self.k >= 2:
                raise ValueError("positively homogeneous order must be >= 2")
            if not self.c > 0:
                raise ValueError("c must be > 0")

    @classmethod
    def exponential(cls) -> "GSpec":
        return cls("exponential")

    @classmethod
    def monomial(cls, k: int) -> "GSpec":
        return cls("monomial", k, 1.0)

    @classmethod
    def pos_homogeneous(cls, k: float, c: float = 1.0) -> "GSpec":
        return cls("pos_homogeneous", k, c)

    @property
    def homogeneous(self) -> bool:
        return self.kind != "exponential"

    def to_dict(self):
        if self.kind == "exponential":
            return {"kind": "exponential"}
        return {"kind": self.kind, "k": self.k, "c": self.c}


def gspec_from_dict(spec: dict) -> GSpec:
    return GSpec(spec["kind"], spec.get("k", 2.0), spec.get("c", 1.0))


def _neg_scale(spec: GSpec, a: np.ndarray) -> np.ndarray:
    return np.where(a > 0, 1.0, spec.c)


def g_eval(spec: GSpec, a):
    a = np.asarray(a, dtype=float)
    if spec.kind == "exponential":
        return np.exp(a)
    if spec.kind == "monomial":
        return a ** spec.k
    return _neg_scale(spec, a) * np.abs(a) ** spec.k


def g_prime(spec: GSpec, a):
    a = np.asarray(a, dtype=float)
    if spec.kind == "exponential":
        return np.exp(a)
    k = spec.k
    if spec.kind == "monomial":
        return k * a ** (k - 1)
    # derivative of c|a|^k for a < 0 is -c k |a|^(k-1); both one-sided limits at 0 vanish
    return _neg_scale(spec, a) * np.sign(a) * k * np.abs(a) ** (k - 1)


def g_second(spec: GSpec, a):
    a = np.asarray(a, dtype=float)
    if spec.kind == "exponential":
        return np.exp(a)
    k = spec.k
    if spec.kind == "monomial":
        return k * (k - 1) * a ** (k - 2)
    if k == 2 and spec.c != 1 and np.any(a == 0):
        raise ValueError("second derivative is undefined at 0 for k = 2 and c != 1")
    out = _neg_scale(spec, a) * k * (k - 1) * np.abs(a) ** (k - 2)
    if k > 2:
        out = np.where(a == 0, 0.0, out)
    return out


def score_weight(spec: GSpec, a):
    """``g'(a)^2 / g(a)``, written in a form that stays finite at zeros of ``g``."""
    a = np.asarray(a, dtype=float)
    if spec.kind == "exponential":
        return np.exp(a)
    k = spec.k
    if spec.kind == "monomial":
        return k * k * a ** (k - 2)
    return _neg_scale(spec, a) * k * k * np.abs(a) ** (k - 2)


def _multinomial(k: int, alpha) -> int:
    out = factorial(k)
    for a in alpha:
        out //= factorial(int(a))
    return out


def z_monomial_tensor(theta, T: MomentTensor, k: int | None = None) -> float:
    """``sum_{|alpha| = k} C(k; alpha) theta^alpha T[alpha]``."""
    theta = np.asarray(theta, dtype=float)
    if k is not None and k != T.order:
        raise ValueError(f"tensor has order {T.order}, expected {k}")
    if theta.size != T.n:
        raise ValueError("parameter length does not match the tensor")
    total = 0.0
    for alpha, val in T.entries.items():
        total += _multinomial(T.order, alpha) * float(np.prod(theta ** np.array(alpha))) * val
    return total


def _linear(fmap: FeatureMap, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
    return eval_batch(fmap, X) @ theta


def z_quadrature(
    spec: GSpec,
    fmap: FeatureMap,
    measure: BaseMeasure,
    theta,
    scheme: IntegrationScheme | None = None,
    return_error: bool = False,
):
    """``int g(theta^T psi) dmu`` by direct integration."""
    theta = np.asarray(theta, dtype=float)
    with np.errstate(over="ignore"):
        z, err = integrate(lambda X: g_eval(spec, _linear(fmap, theta, X)), measure, scheme)
    z = float(z)
    if not np.isfinite(z) or not z > 0:
        raise ArithmeticError(f"normaliser is not a positive finite number (z={z})")
    return (z, float(err)) if return_error else z


def density_g_batch(
    spec: GSpec,
    fmap: FeatureMap,
    measure: BaseMeasure,
    theta,
    X,
    scheme: IntegrationScheme | None = None,
    z: float | None = None,
) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if z is None:
        z = z_quadrature(spec, fmap, measure, theta, scheme)
    elif not (np.isfinite(z) and z > 0):
        raise ValueError("normaliser must be positive and finite")
    return g_eval(spec, _linear(fmap, theta, np.atleast_2d(np.asarray(X, dtype=float)))) / z


def density_g(spec, fmap, measure, theta, x, scheme=None, z=None) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(density_g_batch(spec, fmap, measure, theta, x[None, :], scheme, z)[0])
