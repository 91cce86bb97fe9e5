"""Fixed points of the normalized operator A.

Translation-invariant solutions solve f = Af; period-two solutions solve
f = Ag, g = Af.  For kernels that factorize across (u, v) these are the only
periodic cases, so every pair is labelled one or the other.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .kernel import Kernel
from .operator import GridFunction, NonpositiveImage, OperatorError, apply_A
from .quadrature import QuadratureRule, default_rule

__all__ = [
    "SolverConfig",
    "FixedPoint",
    "PairSolution",
    "NotConverged",
    "SingularJacobian",
    "TRANSLATION_INVARIANT",
    "PERIOD_TWO",
    "solve_translation_invariant",
    "solve_period_two",
    "multistart_search",
    "refine_newton",
    "classify_solution",
]

log = logging.getLogger(__name__)

TRANSLATION_INVARIANT = "translation_invariant"
PERIOD_TWO = "period_two"


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-10
    max_iter: int = 10000
    damping: float = 1.0
    dedup_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.dedup_tol > 0:
            raise ValueError("dedup_tol must be positive")


class NotConverged(RuntimeError):
    def __init__(self, message, history, last):
        super().__init__(message)
        self.history = list(history)
        self.last = last


class SingularJacobian(RuntimeError):
    def __init__(self, cond):
        super().__init__(f"Newton Jacobian is numerically singular (cond ~ {cond:.3g})")
        self.cond = cond


@dataclass(frozen=True)
class FixedPoint:
    f: GridFunction
    residual: float
    iterations: int
    method: str
    start: int | None = None

    def as_dict(self):
        return {"nodes": self.f.rule.nodes.tolist(), "values": self.f.values.tolist(),
                "residual": self.residual, "iterations": self.iterations,
                "method": self.method, "start": self.start,
                "classification": TRANSLATION_INVARIANT}


@dataclass(frozen=True)
class PairSolution:
    f: GridFunction
    g: GridFunction
    residuals: tuple[float, float]
    classification: str
    iterations: int = 0
    start: int | None = None

    def as_dict(self):
        return {"nodes": self.f.rule.nodes.tolist(), "values_f": self.f.values.tolist(),
                "values_g": self.g.values.tolist(), "residuals": list(self.residuals),
                "classification": self.classification, "iterations": self.iterations,
                "start": self.start}


def _sup(a, b) -> float:
    return float(np.max(np.abs(a - b)))


def _fixed(rule, values) -> GridFunction:
    return GridFunction(rule, values, 1.0)


def _require_positive(f: GridFunction, name="init"):
    if not f.positive:
        raise ValueError(f"{name} must be strictly positive at every node")


def solve_translation_invariant(K: Kernel, cfg: SolverConfig, init: GridFunction) -> FixedPoint:
    """Damped Picard iteration f <- (1-d) f + d Af.

    Damping drops to 0.5 once the residual has grown three steps in a row.
    Raises NotConverged after ``max_iter`` steps; a nonpositive image aborts
    with NonpositiveImage whose ``source`` is the offending iterate.
    """
    _require_positive(init)
    rule = init.rule
    f = init.values.copy()
    d = cfg.damping
    history: list[float] = []
    for it in range(cfg.max_iter + 1):
        try:
            Af = apply_A(K, GridFunction(rule, f)).values
        except NonpositiveImage as exc:
            exc.source = f.copy()
            raise
        res = _sup(Af, f)
        history.append(res)
        if res <= cfg.tol:
            return FixedPoint(_fixed(rule, f), res, it, "picard")
        if it == cfg.max_iter:
            break
        if d > 0.5 and len(history) >= 4 and all(
                history[-k] > history[-k - 1] for k in (1, 2, 3)):
            log.debug("residual grew 3 steps in a row at iteration %d; damping 0.5", it)
            d = 0.5
        f = (1.0 - d) * f + d * Af
    raise NotConverged(f"Picard iteration stalled at residual {history[-1]:.3e}", history,
                       _fixed(rule, f))


def _ordered(f, g):
    if tuple(f) <= tuple(g):
        return f, g
    return g, f


def classify_solution(pair, dedup_tol: float = 1e-6) -> str:
    """translation_invariant iff ||f - g||_inf <= dedup_tol, else period_two."""
    if isinstance(pair, PairSolution):
        f, g = pair.f, pair.g
    else:
        f, g = pair
    fv = f.values if isinstance(f, GridFunction) else np.asarray(f)
    gv = g.values if isinstance(g, GridFunction) else np.asarray(g)
    return TRANSLATION_INVARIANT if _sup(fv, gv) <= dedup_tol else PERIOD_TWO


def solve_period_two(K: Kernel, cfg: SolverConfig, init_f: GridFunction,
                     init_g: GridFunction) -> PairSolution:
    """Alternating iteration (f, g) <- (Ag, Af) for the period-two system."""
    _require_positive(init_f, "init_f")
    _require_positive(init_g, "init_g")
    rule = init_f.rule
    f, g = init_f.values.copy(), init_g.values.copy()
    d = cfg.damping
    history: list[float] = []
    for it in range(cfg.max_iter + 1):
        try:
            Af = apply_A(K, GridFunction(rule, f)).values
            Ag = apply_A(K, GridFunction(rule, g)).values
        except NonpositiveImage as exc:
            exc.source = (f.copy(), g.copy())
            raise
        res_f, res_g = _sup(Ag, f), _sup(Af, g)
        history.append(max(res_f, res_g))
        if history[-1] <= cfg.tol:
            a, b = _ordered(f, g)
            ra, rb = (res_f, res_g) if a is f else (res_g, res_f)
            fa, gb = _fixed(rule, a), _fixed(rule, b)
            label = classify_solution((fa, gb), cfg.dedup_tol)
            return PairSolution(fa, gb, (ra, rb), label, it)
        if it == cfg.max_iter:
            break
        if d > 0.5 and len(history) >= 4 and all(
                history[-k] > history[-k - 1] for k in (1, 2, 3)):
            d = 0.5
        # simultaneous update keeps f == g whenever it starts that way
        f, g = (1.0 - d) * f + d * Ag, (1.0 - d) * g + d * Af
    raise NotConverged(f"period-two iteration stalled at residual {history[-1]:.3e}", history,
                       (_fixed(rule, f), _fixed(rule, g)))


def _random_start(rng, n):
    return np.exp(rng.uniform(-0.5, 0.5, n))


def _starts(K: Kernel, rule: QuadratureRule, n_starts: int, seed: int):
    from .analytic import analytic_f2

    rng = np.random.default_rng(seed)
    starts = [np.ones(rule.n)]
    if K.family == "tau":
        starts.append(analytic_f2(K.params["tau"], rule).values.copy())
    while len(starts) < n_starts:
        starts.append(_random_start(rng, rule.n))
    return starts[:n_starts]


def multistart_search(K: Kernel, cfg: SolverConfig, n_starts: int = 20,
                      rule: QuadratureRule | None = None) -> list[FixedPoint]:
    """Picard solves from seeded starts, deduplicated in sup norm.

    Starts are, in order: f = 1, the analytic second fixed point for tau
    kernels, then exp(U(-1/2, 1/2)) nodewise.  Runs that fail are dropped;
    an empty list means nothing converged.  Sorted by residual.
    """
    if n_starts < 1:
        raise ValueError("n_starts must be at least 1")
    rule = rule or default_rule(K)
    found: list[FixedPoint] = []
    for i, vals in enumerate(_starts(K, rule, n_starts, cfg.seed)):
        try:
            fp = solve_translation_invariant(K, cfg, GridFunction(rule, vals))
        except (NotConverged, OperatorError) as exc:
            log.debug("start %d failed: %s", i, exc)
            continue
        fp = FixedPoint(fp.f, fp.residual, fp.iterations, fp.method, start=i)
        for j, prev in enumerate(found):
            if fp.f.sup_distance(prev.f) <= cfg.dedup_tol:
                if fp.residual < prev.residual:
                    found[j] = fp
                break
        else:
            found.append(fp)
    return sorted(found, key=lambda p: (p.residual, p.start))


def refine_newton(K: Kernel, f0: GridFunction, cfg: SolverConfig | None = None, *,
                  target: float = 1e-12, max_steps: int = 50, rel_step: float = 1e-7) -> FixedPoint:
    """Newton's method on F(f) = Af - f with a forward-difference Jacobian."""
    cfg = cfg or SolverConfig()
    _require_positive(f0, "f0")
    rule = f0.rule
    n = rule.n

    def F(vals):
        return apply_A(K, GridFunction(rule, vals)).values - vals

    f = f0.values.copy()
    r = F(f)
    res = float(np.max(np.abs(r)))
    for step in range(max_steps + 1):
        if res <= target:
            return FixedPoint(_fixed(rule, f), res, step, "newton")
        if step == max_steps:
            break
        J = np.empty((n, n))
        for j in range(n):
            h = rel_step * f[j]
            fj = f.copy()
            fj[j] += h
            J[:, j] = (F(fj) - r) / h
        cond = np.linalg.cond(J)
        if not np.isfinite(cond) or cond > 1e14:
            raise SingularJacobian(cond)
        delta = np.linalg.solve(J, -r)
        lam = 1.0
        while True:
            trial = f + lam * delta
            if np.all(trial > 0):
                try:
                    r_new = F(trial)
                    break
                except OperatorError:
                    pass
            lam *= 0.5
            if lam < 1e-8:
                raise NotConverged("Newton step cannot keep the iterate positive", [res],
                                   _fixed(rule, f))
        f, r = trial, r_new
        res = float(np.max(np.abs(r)))
    raise NotConverged(f"Newton stalled at residual {res:.3e}", [res], _fixed(rule, f))
