"""Integral-equation kernels K(t, u, v) on the unit cube.

A kernel couples the spin ``t`` of a vertex with the spins ``u`` and ``v``
of its two direct successors.  All kernels are evaluated with numpy
broadcasting, so ``K(t, u, v)`` accepts scalars or arrays.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Mapping

import numpy as np

__all__ = [
    "OddRational",
    "CouplingParams",
    "Kernel",
    "TauVariant",
    "ScanReport",
    "SeparabilityReport",
    "odd_pow",
    "build_interaction_kernel",
    "make_ising_kernel",
    "make_potts_kernel",
    "make_tau_kernel",
    "make_sum_kernel",
    "positivity_scan",
    "separability_test",
    "reduce_to_pair_kernel",
    "ising_interactions",
]


@dataclass(frozen=True)
class OddRational:
    """A positive rational p/q with both p and q odd."""

    p: int
    q: int = 1

    def __post_init__(self):
        p, q = int(self.p), int(self.q)
        if p < 1 or q < 1:
            raise ValueError(f"tau must be positive, got {self.p}/{self.q}")
        if p % 2 == 0 or q % 2 == 0:
            raise ValueError(f"tau needs odd numerator and denominator, got {p}/{q}")
        g = math.gcd(p, q)
        object.__setattr__(self, "p", p // g)
        object.__setattr__(self, "q", q // g)

    @classmethod
    def parse(cls, text: str) -> "OddRational":
        text = str(text).strip()
        if "/" in text:
            p, q = text.split("/", 1)
        else:
            p, q = text, "1"
        try:
            p, q = int(p), int(q)
        except ValueError:
            raise ValueError(f"cannot parse tau {text!r} as p/q") from None
        return cls(p, q)

    @property
    def value(self) -> float:
        return self.p / self.q

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.p, self.q)

    def __str__(self) -> str:
        return f"{self.p}/{self.q}"


def odd_pow(x, tau: OddRational):
    """Real odd power sign(x)|x|^(p/q).

    For q odd this is the real branch of x**(p/q), an odd bijection of
    [-1, 1].  Evaluating on |x| keeps the result exactly odd.
    """
    x = np.asarray(x, dtype=float)
    mag = np.abs(x)
    out = np.sign(x) * (mag**tau.p if tau.q == 1 else mag ** (tau.p / tau.q))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class CouplingParams:
    """Couplings of the four-term Hamiltonian and the inverse temperature."""

    J3: float = 0.0
    J: float = 0.0
    J1: float = 0.0
    alpha: float = 0.0
    beta: float = 1.0

    def __post_init__(self):
        for name in ("J3", "J", "J1", "alpha", "beta"):
            val = float(getattr(self, name))
            if not math.isfinite(val):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, val)
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")

    def as_dict(self) -> dict[str, float]:
        return {"J3": self.J3, "J": self.J, "J1": self.J1, "alpha": self.alpha, "beta": self.beta}


class TauVariant(enum.Enum):
    """Which constant multiplies the triple product in the tau kernel."""

    PRINTED = "printed"  # 4^tau (tau+1)^2
    CORRECTED = "corrected"  # 16^tau (2 tau+1)^2

    def constant(self, tau: OddRational) -> float:
        t = tau.value
        if self is TauVariant.PRINTED:
            return 4.0**t * (t + 1.0) ** 2
        return 16.0**t * (2.0 * t + 1.0) ** 2


@dataclass(frozen=True, eq=False)
class Kernel:
    """An evaluable kernel with the metadata needed to rebuild or report it.

    Instances hash by identity, which lets operators cache node tensors.
    """

    family: str
    params: Mapping[str, Any]
    fn: Callable = field(repr=False)

    def __call__(self, t, u, v):
        t, u, v = (np.asarray(a, dtype=float) for a in (t, u, v))
        shape = np.broadcast_shapes(t.shape, u.shape, v.shape)
        out = np.asarray(self.fn(t, u, v), dtype=float)
        if out.shape != shape:
            out = np.broadcast_to(out, shape).copy()
        return out if out.ndim else float(out)

    def describe(self) -> dict[str, Any]:
        def plain(v):
            if isinstance(v, (CouplingParams,)):
                return v.as_dict()
            if isinstance(v, (OddRational, TauVariant)):
                return str(v) if isinstance(v, OddRational) else v.value
            if isinstance(v, (int, float, str, bool)) or v is None:
                return v
            return repr(v)

        return {"family": self.family, "params": {k: plain(v) for k, v in self.params.items()}}


def _check_beta(params: CouplingParams):
    if not params.beta > 0:
        raise ValueError(f"beta must be positive, got {params.beta}")


def build_interaction_kernel(params: CouplingParams, xi1, xi2, xi3, *, family="general",
                             extra: Mapping[str, Any] | None = None) -> Kernel:
    """Exponential kernel generated by the interaction functions.

    ``xi1(t, u, v)`` is the triple term with ``t`` the parent spin,
    ``xi2(u, v)`` the sibling term, ``xi3(t, u)`` the parent-child term.
    """
    _check_beta(params)
    J3b, Jb, J1b, ab = (params.J3 * params.beta, params.J * params.beta,
                        params.J1 * params.beta, params.alpha * params.beta)

    def fn(t, u, v):
        expo = ab * (u + v)
        if J3b:
            expo = expo + J3b * xi1(t, u, v)
        if Jb:
            expo = expo + Jb * xi2(u, v)
        if J1b:
            expo = expo + J1b * (xi3(t, u) + xi3(t, v))
        return np.exp(expo)

    meta: dict[str, Any] = {"couplings": params}
    meta.update(extra or {})
    return Kernel(family, meta, fn)


def _prod3(t, u, v):
    return t * u * v


def _prod2(x, y):
    return x * y


def ising_interactions():
    """Interaction functions (xi1, xi2, xi3) of the continuous-spin Ising model."""
    return _prod3, _prod2, _prod2


def make_ising_kernel(params: CouplingParams) -> Kernel:
    return build_interaction_kernel(params, *ising_interactions(), family="ising")


def make_potts_kernel(params: CouplingParams, mode: str = "reduced") -> Kernel:
    """Potts kernel with Kronecker-delta interactions.

    ``reduced`` drops the delta terms, which only live on null sets of the
    square; ``naive_diagonal`` evaluates the deltas pointwise.
    """
    _check_beta(params)
    if params.J3 != 0:
        raise ValueError("the Potts model has no triple interaction; J3 must be 0")
    ab = params.alpha * params.beta
    if mode == "reduced":
        def fn(t, u, v):
            return np.exp(ab * (u + v))
    elif mode == "naive_diagonal":
        Jb, J1b = params.J * params.beta, params.J1 * params.beta

        def fn(t, u, v):
            delta = lambda a, b: (a == b).astype(float)  # noqa: E731
            return np.exp(Jb * delta(u, v) + J1b * (delta(t, u) + delta(t, v)) + ab * (u + v))
    else:
        raise ValueError(f"unknown Potts mode {mode!r}")
    return Kernel("potts", {"couplings": params, "mode": mode}, fn)


def make_tau_kernel(tau: OddRational, variant: TauVariant = TauVariant.CORRECTED) -> Kernel:
    """The one-parameter family with two positive fixed points.

    K(t,u,v) = 1 + a(t) a(u) a(v) (C - 1/(a(v) + 1)),  a(x) = odd_pow(x - 1/2, tau).
    """
    C = variant.constant(tau)

    def fn(t, u, v):
        at, au, av = (odd_pow(x - 0.5, tau) for x in (t, u, v))
        return 1.0 + at * au * av * (C - 1.0 / (av + 1.0))

    return Kernel("tau", {"tau": tau, "variant": variant, "constant": C}, fn)


def make_sum_kernel(zeta, validation_resolution: int = 33, name: str = "custom") -> Kernel:
    """K(t,u,v) = zeta(t,u) + zeta(t,v) for a positive continuous zeta."""
    g = np.linspace(0.0, 1.0, validation_resolution)
    sample = np.asarray(zeta(g[:, None], g[None, :]), dtype=float)
    sample = np.broadcast_to(sample, (g.size, g.size))
    if not np.all(np.isfinite(sample)) or sample.min() <= 0:
        raise ValueError("zeta must be strictly positive on [0,1]^2")

    def fn(t, u, v):
        return zeta(t, u) + zeta(t, v)

    return Kernel("sum", {"zeta": name}, fn)


@dataclass(frozen=True)
class ScanReport:
    min_value: float
    argmin: tuple[float, float, float]
    grid_resolution: int
    positive: bool

    def as_dict(self):
        return {"min_value": self.min_value, "argmin": list(self.argmin),
                "grid_resolution": self.grid_resolution, "positive": self.positive}


def positivity_scan(K: Kernel, resolution: int = 201) -> ScanReport:
    """Minimum of K over the uniform grid with endpoints.

    Ties resolve to the lexicographically smallest (t, u, v).
    """
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    g = np.linspace(0.0, 1.0, resolution)
    best, where = math.inf, (0, 0, 0)
    U, V = g[:, None], g[None, :]
    for i, t in enumerate(g):
        slab = K(t, U, V)
        j = int(np.argmin(slab))
        val = float(slab.flat[j])
        if val < best:
            best, where = val, (i,) + divmod(j, resolution)
    arg = tuple(float(g[k]) for k in where)
    return ScanReport(best, arg, resolution, best > 0)


@dataclass(frozen=True)
class SeparabilityReport:
    separable: bool
    max_mixed_defect: float
    grid: np.ndarray = field(repr=False)
    factors: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)
    failure_reason: str | None = None
    tol: float = 1e-10
    anchor: tuple[float, float] = (0.0, 0.0)

    def as_dict(self):
        return {"separable": self.separable, "max_mixed_defect": self.max_mixed_defect,
                "grid_resolution": int(self.grid.size), "tol": self.tol,
                "failure_reason": self.failure_reason, "anchor": list(self.anchor)}


def _max_mixed_defect(logK: np.ndarray) -> float:
    # logK[t, u, v]; max over t and all rectangles (u1,u2) x (v1,v2)
    worst = 0.0
    for L in logK:
        M = (L[:, None, :, None] + L[None, :, None, :]
             - L[:, None, None, :] - L[None, :, :, None])
        worst = max(worst, float(np.abs(M).max()))
    return worst


def separability_test(K: Kernel, grid: int = 17, tol: float = 1e-10) -> SeparabilityReport:
    """Check whether log K(t, ., .) is additively separable in (u, v)."""
    if grid < 3:
        raise ValueError("grid must be at least 3")
    g = np.linspace(0.0, 1.0, grid)
    vals = K(g[:, None, None], g[None, :, None], g[None, None, :])
    if not np.all(vals > 0):
        return SeparabilityReport(False, math.inf, g, None, "nonpositive_kernel", tol)
    defect = _max_mixed_defect(np.log(vals))
    if defect > tol:
        return SeparabilityReport(False, defect, g, None, "defect_exceeds_tol", tol)
    theta1 = vals[:, :, 0]
    theta2 = vals[:, 0, :] / vals[:, 0:1, 0]
    return SeparabilityReport(True, defect, g, (theta1, theta2), None, tol, (float(g[0]), float(g[0])))


def reduce_to_pair_kernel(K: Kernel, report: SeparabilityReport):
    """Factor a separable kernel as theta1(t,u) * theta2(t,v).

    Uses the report's anchor node: theta1(t,u) = K(t,u,v0) and
    theta2(t,v) = K(t,u0,v)/K(t,u0,v0).
    """
    if not report.separable:
        raise ValueError(f"kernel is not separable ({report.failure_reason})")
    u0, v0 = report.anchor

    def theta1(t, u):
        return K(t, u, v0)

    def theta2(t, v):
        return K(t, u0, v) / K(t, u0, v0)

    return theta1, theta2
