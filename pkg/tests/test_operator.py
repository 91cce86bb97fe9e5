import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cayleygibbs.kernel import (CouplingParams, Kernel, OddRational, TauVariant,
                                build_interaction_kernel, make_ising_kernel, make_tau_kernel,
                                reduce_to_pair_kernel, separability_test)
from cayleygibbs.operator import (DegenerateNormalizer, GridFunction, NonpositiveImage, apply_A,
                                  apply_pair_A, apply_W, extend_A)
from cayleygibbs.quadrature import default_rule, gauss_legendre

RULE = gauss_legendre(64)


def positive_functions(n):
    return st.lists(st.floats(-2, 2), min_size=n, max_size=n).map(lambda xs: np.exp(xs))


def test_grid_function_shape_checked():
    with pytest.raises(ValueError):
        GridFunction(RULE, np.ones(3))


def test_W_constant_kernel():
    K = Kernel("custom", {}, lambda t, u, v: 1.0)
    Wf = apply_W(K, GridFunction.constant(RULE))
    assert np.allclose(Wf.values, 1.0, atol=1e-14)


def test_W_closed_form():
    K = build_interaction_kernel(CouplingParams(J1=1.0), None, None, lambda t, u: t * u)
    Wf = apply_W(K, GridFunction.constant(RULE))
    t = RULE.nodes
    assert np.max(np.abs(Wf.values - ((np.exp(t) - 1) / t) ** 2)) < 1e-12
    assert extend_A(K, GridFunction.constant(RULE), [1.0])[0] == pytest.approx((math.e - 1) ** 2,
                                                                               abs=1e-12)


@pytest.mark.parametrize("variant", list(TauVariant))
@pytest.mark.parametrize("tau", ["1/3", "1", "5/3", "3"])
def test_W_tau_kernel_on_ones(tau, variant):
    K = make_tau_kernel(OddRational.parse(tau), variant)
    Wf = apply_W(K, GridFunction.constant(default_rule(K, 64)))
    assert np.max(np.abs(Wf.values - 1)) < 1e-12
    assert abs(Wf.at_zero - 1) < 1e-12


@settings(max_examples=30, deadline=None)
@given(positive_functions(64), st.floats(-2, 2), st.floats(-2, 2), st.floats(0.2, 3))
def test_ising_operator_is_degenerate(vals, J, alpha, beta):
    K = make_ising_kernel(CouplingParams(J=J, alpha=alpha, beta=beta))
    Af = apply_A(K, GridFunction(RULE, vals))
    assert np.max(np.abs(Af.values - 1)) < 1e-12
    assert Af.at_zero == 1.0


@settings(max_examples=30, deadline=None)
@given(positive_functions(64), st.sampled_from([0.1, 7.3, 1e-3, 50.0]))
def test_scale_invariance(vals, c):
    K = make_ising_kernel(CouplingParams(J3=0.7, J=-0.3, J1=1.1, alpha=0.4))
    f = GridFunction(RULE, vals)
    assert np.max(np.abs(apply_A(K, f.scaled(c)).values - apply_A(K, f).values)) < 1e-12


def test_exponential_kernels_give_positive_images():
    K = make_ising_kernel(CouplingParams(J3=-3, J=2, J1=-2, alpha=1))
    rng = np.random.default_rng(1)
    for _ in range(10):
        f = GridFunction(RULE, np.exp(rng.normal(size=64)))
        assert apply_A(K, f).positive


def test_nonpositive_image_signalled():
    K = make_tau_kernel(OddRational(1))
    f = GridFunction(RULE, 1 + 4 * (RULE.nodes - 0.5) ** 3 + 1e-3)
    with pytest.raises(NonpositiveImage) as info:
        apply_A(K, GridFunction(RULE, 1 + 1.5 * (RULE.nodes - 0.5) + 0.0))
    assert info.value.values.min() <= 0
    # the check can be switched off for diagnostics
    apply_A(K, GridFunction(RULE, 1 + 1.5 * (RULE.nodes - 0.5)), check_positive=False)
    assert f.positive


def test_degenerate_normalizer():
    K = Kernel("custom", {}, lambda t, u, v: np.where(t == 0, 0.0, 1.0))
    with pytest.raises(DegenerateNormalizer):
        apply_A(K, GridFunction.constant(RULE))


def test_extension_agrees_with_nodes():
    K = make_ising_kernel(CouplingParams(J3=0.5, J1=0.8))
    f = GridFunction(RULE, np.exp(np.sin(3 * RULE.nodes)))
    assert np.max(np.abs(extend_A(K, f, RULE.nodes) - apply_A(K, f).values)) < 1e-14
    assert extend_A(K, f, 0.0)[0] == 1.0


@pytest.mark.parametrize("tau", [1, 3])
def test_quadrature_convergence_tau_family(tau):
    K = make_tau_kernel(OddRational(tau))
    t = np.linspace(0, 1, 11)
    out = []
    for n in (32, 64):
        rule = default_rule(K, n)
        f = GridFunction(rule, np.exp(0.3 * rule.nodes) + 0.5 * rule.nodes**2)
        out.append(extend_A(K, f, t))
    assert np.max(np.abs(out[0] - out[1])) <= 1e-9


def test_pair_operator_matches_A():
    K = make_ising_kernel(CouplingParams(J1=-1.3, alpha=0.6, beta=0.9))
    th1, th2 = reduce_to_pair_kernel(K, separability_test(K, 9))
    rng = np.random.default_rng(7)
    for _ in range(5):
        f = GridFunction(RULE, np.exp(rng.uniform(-1, 1, 64)))
        assert np.max(np.abs(apply_pair_A(th1, th2, f).values - apply_A(K, f).values)) < 1e-12
