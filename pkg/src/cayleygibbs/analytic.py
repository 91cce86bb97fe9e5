"""Closed-form fixed points and moment identities of the tau family.

Moments use the exact antiderivative of |x|^s; they are the oracle for the
quadrature-based operator, never the other way round.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .kernel import Kernel, OddRational, TauVariant, odd_pow
from .operator import GridFunction, apply_A
from .quadrature import QuadratureRule

__all__ = [
    "MomentPair",
    "VerificationReport",
    "analytic_f1",
    "analytic_f2",
    "moment_integrals",
    "quadrature_moments",
    "printed_image_of_f2",
    "verify_fixed_point",
    "check_degenerate_operator",
]


@dataclass(frozen=True)
class MomentPair:
    """I1 = int a(u) du and I2 = int a(u)^2 du with a(u) = odd_pow(u - 1/2, tau)."""

    I1: float
    I2: float


@dataclass(frozen=True)
class VerificationReport:
    residual_sup: float
    residual_profile: np.ndarray
    kernel_id: dict
    candidate_id: str
    anchor_residual: float | None = None

    def as_dict(self):
        return {"residual_sup": self.residual_sup,
                "residual_profile": self.residual_profile.tolist(),
                "anchor_residual": self.anchor_residual,
                "kernel": self.kernel_id, "candidate": self.candidate_id}


def analytic_f1(rule: QuadratureRule) -> GridFunction:
    return GridFunction.constant(rule, 1.0)


def f2_formula(t, tau: OddRational):
    """2^tau/(2^tau - 1) * (1 + odd_pow(t - 1/2, tau))."""
    c = 2.0**tau.value
    return c / (c - 1.0) * (1.0 + odd_pow(np.asarray(t, dtype=float) - 0.5, tau))


def analytic_f2(tau: OddRational, rule: QuadratureRule) -> GridFunction:
    # the value at 0 is 1 by construction; store it exactly
    return GridFunction(rule, f2_formula(rule.nodes, tau), 1.0)


def _abs_power_integral(s: Fraction) -> float:
    """int_0^1 |u - 1/2|^s du = 2 * (1/2)^(s+1) / (s+1) = 2^(-s) / (s+1)."""
    e = s + 1
    return float(2.0 ** (-float(s)) / e)


def moment_integrals(tau: OddRational) -> MomentPair:
    # I1 vanishes by odd symmetry about 1/2; I2 = 4^-tau / (2 tau + 1)
    return MomentPair(0.0, _abs_power_integral(2 * tau.fraction))


def quadrature_moments(tau: OddRational, rule: QuadratureRule) -> MomentPair:
    a = odd_pow(rule.nodes - 0.5, tau)
    return MomentPair(rule.integrate(a), rule.integrate(a * a))


def printed_image_of_f2(t, tau: OddRational):
    """Exact A f2 for the printed-constant kernel.

    With C = 4^tau (tau+1)^2 the image is (1 + C I2^2 a(t)) / (1 + C I2^2 a(0)).
    At tau = 1 this is (18 + 2 (t - 1/2)) / 17.
    """
    I2 = moment_integrals(tau).I2
    c = TauVariant.PRINTED.constant(tau) * I2 * I2
    a = odd_pow(np.asarray(t, dtype=float) - 0.5, tau)
    a0 = -(0.5**tau.value)
    return (1.0 + c * a) / (1.0 + c * a0)


def verify_fixed_point(K: Kernel, candidate: GridFunction, candidate_id: str = "candidate"
                       ) -> VerificationReport:
    """Residual A(candidate) - candidate at the nodes and, if known, at t = 0."""
    if not candidate.positive:
        raise ValueError("candidate must be strictly positive")
    image = apply_A(K, candidate, check_positive=False)
    profile = image.values - candidate.values
    anchor = None
    if candidate.at_zero is not None:
        anchor = 1.0 - candidate.at_zero
    sup = float(np.max(np.abs(profile)))
    if anchor is not None:
        sup = max(sup, abs(anchor))
    return VerificationReport(sup, profile, K.describe(), candidate_id, anchor)


def check_degenerate_operator(K: Kernel, rule: QuadratureRule, n_samples: int = 100,
                              seed: int = 0, tol: float = 1e-10) -> bool:
    """True iff A sends every sampled positive function to the constant 1.

    Samples are exp(N(0,1)) at each node, drawn from a seeded generator.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    rng = np.random.default_rng(seed)
    for _ in range(n_samples):
        f = GridFunction(rule, np.exp(rng.normal(size=rule.n)))
        image = apply_A(K, f, check_positive=False)
        if np.max(np.abs(image.values - 1.0)) > tol:
            return False
    return True
