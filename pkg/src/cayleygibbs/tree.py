"""Brute-force finite-tree oracle for the compatibility of the measures mu^(n).

Spins live on the uniform grid of m points in [0, 1] with trapezoid weights,
so every "integral" here is a finite weighted sum over grid configurations.
Densities are taken with respect to that product measure.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .kernel import CouplingParams
from .quadrature import QuadratureRule, trapezoid_rule

__all__ = [
    "CayleyTree",
    "BoundaryField",
    "TableTooLarge",
    "CompatibilityReport",
    "build_tree",
    "hamiltonian",
    "FiniteVolumeMeasure",
    "mu_n",
    "compatibility_residual",
]

K_ORDER = 2
DEFAULT_TABLE_CAP = 5_000_000


@dataclass(frozen=True)
class CayleyTree:
    """Ball of radius ``depth`` around the root of the order-2 Cayley tree.

    Vertices are numbered breadth-first from the root (vertex 0).
    ``triples`` are (child, parent, child) and ``second_pairs`` the
    sibling pairs; edges are oriented (parent, child).
    """

    depth: int
    level: tuple[int, ...]
    parent: tuple[int, ...]
    children: tuple[tuple[int, ...], ...]
    edges: tuple[tuple[int, int], ...]
    second_pairs: tuple[tuple[int, int], ...]
    triples: tuple[tuple[int, int, int], ...]
    k: int = K_ORDER

    @property
    def n_vertices(self) -> int:
        return len(self.level)

    def levels(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.depth + 1)]
        for v, lv in enumerate(self.level):
            out[lv].append(v)
        return out

    def ball(self, radius: int) -> list[int]:
        return [v for v, lv in enumerate(self.level) if lv <= radius]

    def distance(self, x: int, y: int) -> int:
        def path(v):
            out = [v]
            while self.parent[v] >= 0:
                v = self.parent[v]
                out.append(v)
            return out

        px, py = path(x), path(y)
        common = set(px) & set(py)
        return min(px.index(c) + py.index(c) for c in common)


def build_tree(depth: int) -> CayleyTree:
    if not 1 <= depth <= 3:
        raise ValueError(f"depth must be in 1..3, got {depth}")
    level, parent = [0], [-1]
    children: list[list[int]] = [[]]
    frontier = [0]
    for d in range(1, depth + 1):
        nxt = []
        for x in frontier:
            n_kids = K_ORDER + 1 if x == 0 else K_ORDER
            for _ in range(n_kids):
                v = len(level)
                level.append(d)
                parent.append(x)
                children.append([])
                children[x].append(v)
                nxt.append(v)
        frontier = nxt
    edges = tuple((parent[v], v) for v in range(1, len(level)))
    pairs, triples = [], []
    for x, kids in enumerate(children):
        for y, z in itertools.combinations(kids, 2):
            pairs.append((y, z))
            triples.append((y, x, z))
    return CayleyTree(depth, tuple(level), tuple(parent), tuple(tuple(c) for c in children),
                      edges, tuple(pairs), tuple(triples))


def hamiltonian(tree: CayleyTree, sigma, params: CouplingParams, xi1, xi2, xi3,
                vertices=None):
    """Energy of spin configurations restricted to ``vertices`` (default: all).

    ``sigma`` has shape (..., n_vertices).  Each triple (y, x, z) contributes
    xi1(sigma_x, sigma_y, sigma_z) with the parent spin first.
    """
    s = np.asarray(sigma, dtype=float)
    keep = set(range(tree.n_vertices) if vertices is None else vertices)
    H = np.zeros(s.shape[:-1])
    if params.J3:
        for y, x, z in tree.triples:
            if {x, y, z} <= keep:
                H = H - params.J3 * xi1(s[..., x], s[..., y], s[..., z])
    if params.J:
        for y, z in tree.second_pairs:
            if {y, z} <= keep:
                H = H - params.J * xi2(s[..., y], s[..., z])
    if params.J1:
        for x, y in tree.edges:
            if {x, y} <= keep:
                H = H - params.J1 * xi3(s[..., x], s[..., y])
    if params.alpha:
        idx = sorted(keep)
        H = H - params.alpha * s[..., idx].sum(axis=-1)
    return H


@dataclass(frozen=True)
class BoundaryField:
    """h(t, x) tabulated on the oracle grid: ``values[x, i]`` = h(grid[i], x).

    Row 0 (the root) is unused.
    """

    values: np.ndarray

    @classmethod
    def zero(cls, tree: CayleyTree, m: int) -> "BoundaryField":
        return cls(np.zeros((tree.n_vertices, m)))

    @classmethod
    def translation_invariant(cls, tree: CayleyTree, profile) -> "BoundaryField":
        profile = np.asarray(profile, dtype=float)
        vals = np.tile(profile, (tree.n_vertices, 1))
        vals[0] = 0.0
        return cls(vals)

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("boundary field must be finite")


class TableTooLarge(MemoryError):
    pass


def _tables(params: CouplingParams, xis, grid):
    xi1, xi2, xi3 = xis
    g = grid
    b = params.beta
    # log-weight contributions exp(-beta H) per term type
    T1 = b * params.J3 * np.asarray(xi1(g[:, None, None], g[None, :, None], g[None, None, :]), float) \
        if params.J3 else None
    T2 = b * params.J * np.asarray(xi2(g[:, None], g[None, :]), float) if params.J else None
    T3 = b * params.J1 * np.asarray(xi3(g[:, None], g[None, :]), float) if params.J1 else None
    T0 = b * params.alpha * g if params.alpha else None
    return T1, T2, T3, T0


def _terms(tree: CayleyTree, vertices, tables, h: BoundaryField, boundary_level: int):
    """Log-weight terms on ``vertices`` as (vertex tuple, table) pairs."""
    T1, T2, T3, T0 = tables
    keep = set(vertices)
    out = []
    if T1 is not None:
        # T1 axes are (parent, child, child)
        out += [((x, y, z), T1) for y, x, z in tree.triples if {x, y, z} <= keep]
    if T2 is not None:
        out += [((y, z), T2) for y, z in tree.second_pairs if {y, z} <= keep]
    if T3 is not None:
        out += [((x, y), T3) for x, y in tree.edges if {x, y} <= keep]
    if T0 is not None:
        out += [((v,), T0) for v in sorted(keep)]
    out += [((v,), h.values[v]) for v in sorted(keep) if tree.level[v] == boundary_level]
    return out


def _accumulate(terms, fixed: list[int], free: list[int], fixed_idx: np.ndarray, m: int):
    """Sum of term tables over configurations (fixed batch) x (free grid).

    Returns an array of shape (B,) + (m,) * len(free).
    """
    B = fixed_idx.shape[0]
    fpos = {v: i for i, v in enumerate(fixed)}
    apos = {v: i for i, v in enumerate(free)}
    acc = np.zeros((B,) + (m,) * len(free))
    for verts, table in terms:
        fx = [i for i, v in enumerate(verts) if v in fpos]
        fr = sorted((i for i, v in enumerate(verts) if v in apos), key=lambda i: apos[verts[i]])
        t = np.transpose(table, fx + fr)
        if fx:
            sub = t[tuple(fixed_idx[:, fpos[verts[i]]] for i in fx)]
        else:
            sub = np.broadcast_to(t, (B,) + t.shape)
        shape = [B] + [1] * len(free)
        for i in fr:
            shape[1 + apos[verts[i]]] = m
        acc = acc + sub.reshape(shape)
    return acc


def _all_configs(n_sites: int, m: int) -> np.ndarray:
    if n_sites == 0:
        return np.zeros((1, 0), dtype=np.intp)
    return np.array(list(itertools.product(range(m), repeat=n_sites)), dtype=np.intp)


class FiniteVolumeMeasure:
    """The measure mu^(n) on V_n, evaluated on demand.

    Log-weights are -beta H(sigma) + sum_{x in W_n} h(sigma_x, x); the
    partition function sums them against trapezoid product weights.
    """

    def __init__(self, tree: CayleyTree, params: CouplingParams, xis, h: BoundaryField,
                 m: int, n: int | None = None):
        if m < 2:
            raise ValueError("grid needs at least 2 points")
        self.tree, self.params, self.m = tree, params, m
        self.n = tree.depth if n is None else n
        if not 1 <= self.n <= tree.depth:
            raise ValueError("level out of range")
        self.rule: QuadratureRule = trapezoid_rule(m)
        self.grid = self.rule.nodes
        self.logw_grid = np.log(self.rule.weights)
        self.vertices = tree.ball(self.n)
        if h.values.shape != (tree.n_vertices, m):
            raise ValueError("boundary field does not match tree and grid")
        self.terms = _terms(tree, self.vertices, _tables(params, xis, self.grid), h, self.n)
        self._logZ: float | None = None

    def log_weight(self, idx) -> np.ndarray:
        """Unnormalized log density at grid-index configurations of shape (B, |V_n|)."""
        idx = np.atleast_2d(np.asarray(idx, dtype=np.intp))
        return _accumulate(self.terms, self.vertices, [], idx, self.m)

    @property
    def log_Z(self) -> float:
        if self._logZ is None:
            self._logZ = self._compute_log_Z()
        return self._logZ

    def _compute_log_Z(self, chunk: int = 200_000) -> float:
        nv = len(self.vertices)
        total = []
        # enumerate the first vertices in the batch, the rest on a dense grid
        n_free = min(nv, max(1, int(np.log(chunk) / np.log(self.m))))
        fixed, free = self.vertices[:nv - n_free], self.vertices[nv - n_free:]
        prod_logw = sum(np.ix_(*[self.logw_grid] * n_free)) if n_free else 0.0
        for block in _batches(len(fixed), self.m, max(1, chunk // self.m**n_free)):
            acc = _accumulate(self.terms, fixed, free, block, self.m) + prod_logw
            lw_fixed = self.logw_grid[block].sum(axis=1) if fixed else np.zeros(len(block))
            acc = acc.reshape(len(block), -1)
            total.append(logsumexp(acc, axis=1) + lw_fixed)
        return float(logsumexp(np.concatenate(total)))

    def density(self, idx) -> np.ndarray:
        return np.exp(self.log_weight(idx) - self.log_Z)

    def table(self, cap: int = DEFAULT_TABLE_CAP) -> np.ndarray:
        size = self.m ** len(self.vertices)
        if size > cap:
            raise TableTooLarge(
                f"density table has {size} entries (cap {cap}); "
                "use FiniteVolumeMeasure.density for on-demand evaluation")
        idx = _all_configs(len(self.vertices), self.m)
        return self.density(idx).reshape((self.m,) * len(self.vertices))


def _batches(n_sites: int, m: int, size: int):
    if n_sites == 0:
        yield np.zeros((1, 0), dtype=np.intp)
        return
    it = itertools.product(range(m), repeat=n_sites)
    while True:
        block = list(itertools.islice(it, size))
        if not block:
            return
        yield np.array(block, dtype=np.intp)


def mu_n(tree: CayleyTree, params: CouplingParams, xis, h: BoundaryField, m: int,
         cap: int = DEFAULT_TABLE_CAP) -> np.ndarray:
    """Normalized density table of mu^(n) on the grid, axes ordered by vertex index.

    Raises TableTooLarge above ``cap`` entries; FiniteVolumeMeasure then gives
    the same densities on demand.
    """
    return FiniteVolumeMeasure(tree, params, xis, h, m).table(cap)


@dataclass(frozen=True)
class CompatibilityReport:
    depth: int
    grid: int
    residual: float
    samples: int
    method: str
    notes: list = field(default_factory=list)

    def as_dict(self):
        return {"depth": self.depth, "grid": self.grid, "residual": self.residual,
                "samples": self.samples, "method": self.method, "notes": list(self.notes)}


ROOT_NOTE = ("compatibility probed between levels n-1 >= 1 and n; every marginalized "
             "vertex has a non-root parent with exactly two children")


def _components(terms, free: list[int]) -> list[list[int]]:
    """Connected groups of free vertices linked by a common term."""
    parent = {v: v for v in free}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for verts, _ in terms:
        fv = [v for v in verts if v in parent]
        for a in fv[1:]:
            parent[find(a)] = find(fv[0])
    groups: dict[int, list[int]] = {}
    for v in free:
        groups.setdefault(find(v), []).append(v)
    return list(groups.values())


def compatibility_residual(tree: CayleyTree, params: CouplingParams, xis, h: BoundaryField,
                           m: int, method: str = "enumerate", batch: int = 49,
                           max_configs: int = 100_000) -> CompatibilityReport:
    """max over sigma_{n-1} of |sum_omega mu^(n)(sigma v omega) w(omega) - mu^(n-1)(sigma)|.

    ``enumerate`` sums over every outer-shell configuration omega jointly;
    ``factorized`` sums each group of outer vertices that share Hamiltonian
    terms separately, which is exact and much cheaper.
    """
    n = tree.depth
    if n < 2:
        raise ValueError("compatibility needs depth >= 2")
    if method not in ("enumerate", "factorized"):
        raise ValueError(f"unknown method {method!r}")
    coarse = FiniteVolumeMeasure(tree, params, xis, h, m, n=n - 1)
    fine = FiniteVolumeMeasure(tree, params, xis, h, m, n=n)
    inner = coarse.vertices
    outer = [v for v in fine.vertices if tree.level[v] == n]
    n_inner = m ** len(inner)
    if n_inner > max_configs:
        raise TableTooLarge(f"{n_inner} inner configurations exceed the cap {max_configs}")
    logw = fine.logw_grid
    groups = [outer] if method == "enumerate" else _components(fine.terms, outer)

    marg, lw_inner = [], []
    for block in _batches(len(inner), m, batch):
        acc_total = np.zeros(len(block))
        # terms that touch no outer vertex are shared by all groups
        base = [t for t in fine.terms if not set(t[0]) & set(outer)]
        acc_total += _accumulate(base, inner, [], block, m)
        for grp in groups:
            gset = set(grp)
            gterms = [t for t in fine.terms if set(t[0]) & gset]
            acc = _accumulate(gterms, inner, grp, block, m)
            acc = acc + sum(np.ix_(*[logw] * len(grp)))
            acc_total += logsumexp(acc.reshape(len(block), -1), axis=1)
        marg.append(acc_total)
        lw_inner.append(logw[block].sum(axis=1))
    marg = np.concatenate(marg)
    lw_inner = np.concatenate(lw_inner)
    log_Z_fine = float(logsumexp(marg + lw_inner))
    coarse_log = np.concatenate([coarse.log_weight(b) for b in _batches(len(inner), m, 4096)])
    log_Z_coarse = float(logsumexp(coarse_log + lw_inner))
    diff = np.exp(marg - log_Z_fine) - np.exp(coarse_log - log_Z_coarse)
    return CompatibilityReport(n, m, float(np.max(np.abs(diff))), int(n_inner), method,
                               [ROOT_NOTE])
