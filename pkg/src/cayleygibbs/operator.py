"""Discretized integral operators W and A acting on grid functions.

(Wf)(t) = int int K(t,u,v) f(u) f(v) du dv,   (Af)(t) = (Wf)(t) / (Wf)(0).

Both are evaluated by Nystrom quadrature at the rule's nodes.  The anchor
t = 0 is never interpolated: K(0, ., .) is integrated directly.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .kernel import Kernel
from .quadrature import QuadratureRule

__all__ = [
    "GridFunction",
    "OperatorError",
    "DegenerateNormalizer",
    "NonpositiveImage",
    "apply_W",
    "apply_A",
    "extend_A",
    "apply_pair_A",
]

DEGENERATE_THRESHOLD = 1e-300
_TENSOR_CACHE_MAX_N = 128


class OperatorError(ArithmeticError):
    """Base class for failures of the normalized operator."""


class DegenerateNormalizer(OperatorError):
    def __init__(self, value):
        super().__init__(f"(Wf)(0) = {value!r} is too close to zero")
        self.value = value


class NonpositiveImage(OperatorError):
    """Raised when A f has a nonpositive value; ``values`` holds the image."""

    def __init__(self, values, source=None):
        values = np.asarray(values)
        super().__init__(f"A f has nonpositive values (min {values.min():.6g})")
        self.values = values
        self.source = source


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Node values of a function on a quadrature rule.

    ``at_zero`` optionally records the value at t = 0, which is not a node
    of the Gauss rules.
    """

    rule: QuadratureRule
    values: np.ndarray
    at_zero: float | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.rule.n,):
            raise ValueError(f"expected {self.rule.n} values, got shape {vals.shape}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, rule: QuadratureRule, fn, at_zero: bool = True) -> "GridFunction":
        vals = np.broadcast_to(np.asarray(fn(rule.nodes), dtype=float), (rule.n,))
        zero = float(np.asarray(fn(np.array([0.0])), dtype=float).reshape(-1)[0]) if at_zero else None
        return cls(rule, vals, zero)

    @classmethod
    def constant(cls, rule: QuadratureRule, c: float = 1.0) -> "GridFunction":
        return cls(rule, np.full(rule.n, float(c)), float(c))

    @property
    def positive(self) -> bool:
        return bool(np.all(self.values > 0))

    def scaled(self, c: float) -> "GridFunction":
        return GridFunction(self.rule, c * self.values, None if self.at_zero is None else c * self.at_zero)

    def sup_distance(self, other: "GridFunction") -> float:
        return float(np.max(np.abs(self.values - other.values)))


@lru_cache(maxsize=16)
def _node_tensor(K: Kernel, rule: QuadratureRule):
    x = rule.nodes
    T = K(x[:, None, None], x[None, :, None], x[None, None, :])
    A0 = K(0.0, x[:, None], x[None, :])
    T.setflags(write=False)
    A0.setflags(write=False)
    return T, A0


def _weighted(f: GridFunction):
    return f.rule.weights * f.values


def _quadratic_form(slab, g):
    # sum_ij g_i slab[..., i, j] g_j with a fixed summation order
    return (slab @ g) @ g


def _W_at_nodes(K: Kernel, f: GridFunction):
    rule, g = f.rule, _weighted(f)
    if rule.n <= _TENSOR_CACHE_MAX_N:
        T, A0 = _node_tensor(K, rule)
        return _quadratic_form(T, g), float(_quadratic_form(A0, g))
    x = rule.nodes
    U, V = x[:, None], x[None, :]
    out = np.array([_quadratic_form(K(t, U, V), g) for t in x])
    return out, float(_quadratic_form(K(0.0, U, V), g))


def apply_W(K: Kernel, f: GridFunction) -> GridFunction:
    """(Wf)(t_k) at every node; ``at_zero`` carries (Wf)(0)."""
    w_nodes, w0 = _W_at_nodes(K, f)
    return GridFunction(f.rule, w_nodes, w0)


def _normalize(w_nodes, w0, check_positive):
    if not np.isfinite(w0) or abs(w0) < DEGENERATE_THRESHOLD:
        raise DegenerateNormalizer(w0)
    out = w_nodes / w0
    if check_positive and not (np.all(out > 0) and w0 > 0):
        raise NonpositiveImage(out)
    return out


def apply_A(K: Kernel, f: GridFunction, check_positive: bool = True) -> GridFunction:
    """(Af)(t) = (Wf)(t)/(Wf)(0) at the nodes, with ``at_zero`` = 1.

    Raises DegenerateNormalizer when |(Wf)(0)| < 1e-300 and NonpositiveImage
    when any value is <= 0 (unless ``check_positive`` is False).
    """
    w_nodes, w0 = _W_at_nodes(K, f)
    return GridFunction(f.rule, _normalize(w_nodes, w0, check_positive), 1.0)


def extend_A(K: Kernel, f: GridFunction, t) -> np.ndarray:
    """Nystrom extension: (Af)(t) at arbitrary points t in [0, 1]."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    x, g = f.rule.nodes, _weighted(f)
    U, V = x[:, None], x[None, :]
    w0 = float(_quadratic_form(K(0.0, U, V), g))
    w_t = np.array([_quadratic_form(K(s, U, V), g) for s in t])
    return _normalize(w_t, w0, check_positive=False)


def apply_pair_A(theta1, theta2, f: GridFunction) -> GridFunction:
    """Normalized operator of a factorized kernel theta1(t,u) theta2(t,v).

    Evaluated as the product of the two one-dimensional ratio operators
    int theta_i(t,u) f(u) du / int theta_i(0,u) f(u) du.
    """
    x, g = f.rule.nodes, _weighted(f)
    out = np.ones(x.size)
    for theta in (theta1, theta2):
        num = np.asarray(theta(x[:, None], x[None, :]), dtype=float) @ g
        den = float(np.asarray(theta(0.0, x), dtype=float) @ g)
        out = out * (num / den)
    return GridFunction(f.rule, out, 1.0)
