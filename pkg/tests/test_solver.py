import numpy as np
import pytest

from cayleygibbs.analytic import analytic_f1, analytic_f2
from cayleygibbs.kernel import (CouplingParams, Kernel, OddRational, make_ising_kernel,
                                make_potts_kernel, make_sum_kernel, make_tau_kernel)
from cayleygibbs.operator import GridFunction, NonpositiveImage, apply_A
from cayleygibbs.quadrature import gauss_legendre
from cayleygibbs.solver import (PERIOD_TWO, TRANSLATION_INVARIANT, NotConverged, PairSolution,
                                SingularJacobian, SolverConfig, classify_solution,
                                multistart_search, refine_newton, solve_period_two,
                                solve_translation_invariant)

RULE = gauss_legendre(64)
TAU1 = make_tau_kernel(OddRational(1))
ISING = make_ising_kernel(CouplingParams(J=0.8, alpha=-0.4))


@pytest.mark.parametrize("kw", [dict(tol=0), dict(damping=0), dict(damping=1.5),
                                dict(max_iter=0), dict(dedup_tol=-1)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


def test_ising_converges_immediately():
    fp = solve_translation_invariant(ISING, SolverConfig(), GridFunction.constant(RULE, 3.0))
    assert fp.iterations <= 2
    assert np.max(np.abs(fp.f.values - 1)) < 1e-10
    assert fp.f.at_zero == 1.0


def test_constant_kernel_one_step():
    K = Kernel("custom", {}, lambda t, u, v: 1.0)
    init = GridFunction(RULE, np.exp(np.cos(5 * RULE.nodes)))
    fp = solve_translation_invariant(K, SolverConfig(), init)
    assert fp.iterations == 1
    assert np.allclose(fp.f.values, 1.0, atol=1e-14)


def test_converged_point_passes_independent_check():
    K = make_sum_kernel(lambda t, u: np.exp(t * u))
    cfg = SolverConfig(tol=1e-11)
    fp = solve_translation_invariant(K, cfg, GridFunction.constant(RULE))
    assert np.max(np.abs(apply_A(K, fp.f).values - fp.f.values)) <= cfg.tol
    assert fp.residual <= cfg.tol


def test_not_converged_keeps_history():
    K = make_sum_kernel(lambda t, u: np.exp(t * u))
    with pytest.raises(NotConverged) as info:
        solve_translation_invariant(K, SolverConfig(max_iter=2, tol=1e-15),
                                    GridFunction(RULE, np.full(64, 5.0)))
    assert len(info.value.history) == 3
    assert info.value.last.positive


def test_rejects_nonpositive_init():
    with pytest.raises(ValueError):
        solve_translation_invariant(ISING, SolverConfig(), GridFunction(RULE, np.zeros(64)))


def test_second_tau_fixed_point_repels_picard():
    # f2 is an unstable fixed point of the iteration: Picard leaves it, Newton finds it
    f2 = analytic_f2(OddRational(1), RULE)
    start = GridFunction(RULE, f2.values + 0.01 * RULE.nodes)
    with pytest.raises((NonpositiveImage, NotConverged)) as info:
        solve_translation_invariant(TAU1, SolverConfig(), start)
    if isinstance(info.value, NonpositiveImage):
        assert info.value.source is not None
    fp = refine_newton(TAU1, start)
    assert fp.residual < 1e-12
    assert fp.f.sup_distance(f2) < 1e-8


def test_newton_from_root_takes_no_step():
    fp = refine_newton(TAU1, analytic_f1(RULE))
    assert fp.iterations == 0
    assert np.all(fp.f.values == 1.0)


def test_newton_rejects_zero_value():
    vals = np.ones(64)
    vals[3] = 0.0
    with pytest.raises(ValueError):
        refine_newton(TAU1, GridFunction(RULE, vals))


def test_newton_singular_jacobian():
    # constant A gives the Jacobian -I, so one step lands on the root
    K = Kernel("custom", {}, lambda t, u, v: 1.0 + 0 * t)
    f = GridFunction(RULE, np.full(64, 2.0))
    fp = refine_newton(K, f)
    assert fp.residual < 1e-12
    # a step below machine resolution makes every difference quotient vanish
    with pytest.raises(SingularJacobian):
        refine_newton(ISING, GridFunction.constant(RULE, 2.0), rel_step=1e-30)


def test_period_two_ising():
    rng = np.random.default_rng(3)
    pair = solve_period_two(ISING, SolverConfig(), GridFunction(RULE, np.exp(rng.normal(size=64))),
                            GridFunction(RULE, np.exp(rng.normal(size=64))))
    assert pair.classification == TRANSLATION_INVARIANT
    assert np.allclose(pair.f.values, 1) and np.allclose(pair.g.values, 1)


def test_period_two_equal_inits_stay_equal():
    K = make_sum_kernel(lambda t, u: np.exp(t * u))
    init = GridFunction(RULE, np.exp(np.sin(4 * RULE.nodes)))
    pair = solve_period_two(K, SolverConfig(), init, init)
    assert np.array_equal(pair.f.values, pair.g.values)
    assert pair.classification == TRANSLATION_INVARIANT


def test_period_two_order_is_symmetric():
    K = make_sum_kernel(lambda t, u: np.exp(t * u))
    a = GridFunction(RULE, np.full(64, 0.5))
    b = GridFunction(RULE, np.exp(RULE.nodes))
    p1 = solve_period_two(K, SolverConfig(), a, b)
    p2 = solve_period_two(K, SolverConfig(), b, a)
    assert np.array_equal(p1.f.values, p2.f.values)
    assert np.array_equal(p1.g.values, p2.g.values)
    assert tuple(p1.f.values) <= tuple(p1.g.values)


def test_classify():
    f1, f2 = analytic_f1(RULE), analytic_f2(OddRational(1), RULE)
    assert classify_solution((f1, f1)) == TRANSLATION_INVARIANT
    assert classify_solution((f1, f2), 1e-6) == PERIOD_TWO
    g = GridFunction(RULE, f1.values + 0.25)
    assert classify_solution((f1, g), 0.25) == TRANSLATION_INVARIANT
    pair = PairSolution(f1, f2, (0.0, 0.0), PERIOD_TWO)
    assert classify_solution(pair) == PERIOD_TWO


def test_multistart_tau_finds_two():
    found = multistart_search(TAU1, SolverConfig(), 20)
    assert len(found) == 2
    d = found[0].f.sup_distance(found[1].f)
    assert 1.9 <= d <= 2.1


@pytest.mark.parametrize("K", [ISING, make_potts_kernel(CouplingParams(J=1.0, J1=-0.5, alpha=0.3))],
                         ids=["ising", "potts"])
def test_multistart_unique(K):
    found = multistart_search(K, SolverConfig(), 20)
    assert len(found) == 1
    assert np.max(np.abs(found[0].f.values - 1)) < 1e-10


def test_multistart_empty_when_nothing_converges():
    K = make_sum_kernel(lambda t, u: np.exp(t * u))
    assert multistart_search(K, SolverConfig(max_iter=1, tol=1e-15), 3) == []
    with pytest.raises(ValueError):
        multistart_search(K, SolverConfig(), 0)


def test_multistart_is_deterministic():
    a = multistart_search(TAU1, SolverConfig(seed=5), 8)
    b = multistart_search(TAU1, SolverConfig(seed=5), 8)
    assert [p.as_dict() for p in a] == [p.as_dict() for p in b]
