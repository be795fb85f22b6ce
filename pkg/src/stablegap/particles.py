"""Exclusion and zero-range processes on the box ``Lambda_n = {-n..n}``.

States are enumerated in lexicographic order of their occupation vectors
(site ``-n`` first) and ranked with precomputed combinatorial tables, so the
matrix layout is reproducible across runs and kernel backends.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import (
    CapacityError,
    ClassificationError,
    ConstructionError,
    DegenerateError,
    ParameterError,
    StableGapError,
)
from .rates import TransitionRate
from .spectrum import DENSE_MAX, Generator, IrreducibilityError, rayleigh_quotient, spectral_gap

# refuse to enumerate ensembles beyond this many states
DEFAULT_STATE_BUDGET = 250_000
BALANCE_TOL = 1e-10


def _site_count(n: int) -> int:
    n = int(n)
    if n < 0:
        raise ParameterError(f"box radius must be >= 0, got {n}")
    return 2 * n + 1


# --------------------------------------------------------------------------
# ensembles
# --------------------------------------------------------------------------


def _binomial_table(sites: int) -> np.ndarray:
    """``C(a, b)`` for ``0 <= a < sites``, ``0 <= b <= sites``."""
    t = np.zeros((max(sites, 1), sites + 1), dtype=np.int64)
    for a in range(t.shape[0]):
        for b in range(a + 1):
            t[a, b] = math.comb(a, b)
    return t


@dataclass(frozen=True, eq=False)
class ExclusionEnsemble:
    n: int
    ell: int
    states: np.ndarray = field(repr=False)
    binom: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.states.shape[0]

    @property
    def sites(self) -> int:
        return self.states.shape[1]

    def rank(self, occ) -> np.ndarray:
        return _kernels._np_exclusion_rank(np.asarray(occ), self.binom)

    def unrank(self, r) -> np.ndarray:
        return self.states[r]


def enumerate_exclusion(n: int, ell: int, budget: int = DEFAULT_STATE_BUDGET) -> ExclusionEnsemble:
    """All ``eta in {0,1}^{Lambda_n}`` with ``ell`` particles."""
    sites = _site_count(n)
    ell = int(ell)
    if not 0 <= ell <= sites:
        raise ParameterError(f"particle number must lie in 0..{sites}, got {ell}")
    count = math.comb(sites, ell)
    if count > budget:
        raise CapacityError("exclusion ensemble exceeds the state budget", count)
    states = np.zeros((count, sites), dtype=np.int64)
    # combinations come out in decreasing lexicographic order of the occupation vector
    for i, occupied in enumerate(itertools.combinations(range(sites), ell)):
        states[count - 1 - i, list(occupied)] = 1
    states.setflags(write=False)
    return ExclusionEnsemble(int(n), ell, states, _binomial_table(sites))


def _composition_offsets(sites: int, ell: int) -> np.ndarray:
    """``off[i, rem, v]`` = number of compositions preceding value ``v`` at position ``i``."""
    def count(parts: int, total: int) -> int:
        if parts == 0:
            return int(total == 0)
        return math.comb(total + parts - 1, parts - 1)

    off = np.zeros((sites, ell + 1, ell + 1), dtype=np.int64)
    for i in range(sites):
        rest = sites - 1 - i
        for rem in range(ell + 1):
            acc = 0
            for v in range(rem + 1):
                off[i, rem, v] = acc
                acc += count(rest, rem - v)
    return off


@dataclass(frozen=True, eq=False)
class ZeroRangeEnsemble:
    n: int
    ell: int
    states: np.ndarray = field(repr=False)
    offsets: np.ndarray = field(repr=False)
    measure: np.ndarray | None = field(default=None, repr=False)
    Z: float | None = None
    log_Z: float | None = None
    g: InteractionRate | None = None

    @property
    def size(self) -> int:
        return self.states.shape[0]

    @property
    def sites(self) -> int:
        return self.states.shape[1]

    @property
    def density(self) -> float:
        return self.ell / self.sites

    def rank(self, occ) -> np.ndarray:
        return _kernels._np_composition_rank(np.asarray(occ), self.offsets)


def enumerate_zero_range(n: int, ell: int, budget: int = DEFAULT_STATE_BUDGET) -> ZeroRangeEnsemble:
    """All compositions of ``ell`` into ``2n+1`` nonnegative parts."""
    sites = _site_count(n)
    ell = int(ell)
    if ell < 0:
        raise ParameterError(f"particle number must be >= 0, got {ell}")
    count = math.comb(ell + sites - 1, sites - 1)
    if count > budget:
        raise CapacityError("zero-range ensemble exceeds the state budget", count)
    states = np.zeros((count, sites), dtype=np.int64)
    # stars and bars: increasing bar positions give increasing compositions
    slots = ell + sites - 1
    for i, bars in enumerate(itertools.combinations(range(slots), sites - 1)):
        edges = (-1, *bars, slots)
        states[i] = np.diff(edges) - 1
    states.setflags(write=False)
    return ZeroRangeEnsemble(int(n), ell, states, _composition_offsets(sites, ell))


# --------------------------------------------------------------------------
# interaction rates
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class InteractionRate:
    """Jump rate ``g(k)`` out of a site holding ``k`` particles."""

    kind: str
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size < 1 or v[0] != 0.0:
            raise ParameterError("an interaction rate needs g(0) = 0")
        if np.any(v[1:] <= 0) or not np.all(np.isfinite(v)):
            raise ParameterError("g(k) must be finite and positive for k >= 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def k_max(self) -> int:
        return self.values.shape[0] - 1

    def upto(self, k: int) -> np.ndarray:
        """``g(0..k)``; the closed-form kinds extend beyond the stored range."""
        if k <= self.k_max:
            return self.values[: k + 1]
        if self.kind == "linear":
            return np.arange(k + 1, dtype=float)
        if self.kind == "indicator":
            return np.concatenate(([0.0], np.ones(k)))
        raise ParameterError(f"g is tabulated on 0..{self.k_max}, need 0..{k}")

    def __call__(self, k):
        k = np.asarray(k)
        return self.upto(int(np.max(k)))[k]

    def log_factorial(self, k: int) -> np.ndarray:
        """``log g(j)!`` for ``j = 0..k`` with ``g(0)! = 1``."""
        g = self.upto(k)
        out = np.zeros(k + 1)
        out[1:] = np.cumsum(np.log(g[1:]))
        return out

    def andjel_constant(self) -> float:
        """``max_k |g(k+1) - g(k)|`` on the stored range."""
        return float(np.max(np.abs(np.diff(self.values)))) if self.k_max else 0.0

    def describe(self) -> str:
        return self.kind


def linear_interaction(k_max: int = 64) -> InteractionRate:
    return InteractionRate("linear", np.arange(k_max + 1, dtype=float))


def indicator_interaction(k_max: int = 64) -> InteractionRate:
    return InteractionRate("indicator", np.concatenate(([0.0], np.ones(k_max))))


def table_interaction(values) -> InteractionRate:
    return InteractionRate("table", values)


@dataclass(frozen=True)
class Classification:
    case: str
    eps0: float | None = None
    ell0: int | None = None


def classify_interaction(g: InteractionRate) -> Classification:
    """Case ``i``: ``g(l + l0) > g(l) + eps0`` for all ``l``; case ``ii``: the indicator.

    For tables the witness ``(eps0, l0)`` is searched with ``l0 <= k_max / 2`` so
    at least half of the stored range is actually tested.
    """
    v = g.values
    if g.kind == "indicator" or (g.k_max >= 1 and np.all(v[1:] == 1.0)):
        return Classification("ii")
    if g.kind == "linear":
        return Classification("i", 0.5, 1)
    for ell0 in range(1, g.k_max // 2 + 1):
        gain = float(np.min(v[ell0:] - v[:-ell0]))
        if gain > 0:
            return Classification("i", 0.5 * gain, ell0)
    raise ClassificationError(f"{g.describe()} interaction fits neither the growing nor the indicator case")


# --------------------------------------------------------------------------
# measures and generators
# --------------------------------------------------------------------------


def zero_range_measure(g: InteractionRate, E: ZeroRangeEnsemble) -> ZeroRangeEnsemble:
    """Attach ``mu(xi) = prod_x 1/g(xi_x)! / Z`` (computed in log space)."""
    lf = g.log_factorial(E.ell)
    logw = -lf[E.states].sum(axis=1)
    top = float(logw.max())
    w = np.exp(logw - top)
    s = float(w.sum())
    log_Z = top + math.log(s)
    mu = w / s
    mu.setflags(write=False)
    return replace(E, measure=mu, Z=math.exp(log_Z) if log_Z < 700 else math.inf, log_Z=log_Z, g=g)


def _pvals(p: TransitionRate, sites: int) -> np.ndarray:
    return np.concatenate(([0.0], p.values(max(sites - 1, 0))))


def _assemble(rows, cols, vals, size: int, dense_max: int):
    m = sp.csr_matrix((vals, (rows, cols)), shape=(size, size))
    m.sum_duplicates()
    if size <= dense_max:
        return m.toarray()
    return m


def build_exclusion_generator(p: TransitionRate, E: ExclusionEnsemble, dense_max: int = DENSE_MAX) -> Generator:
    """Rate ``p(y - x)`` for ``eta -> eta^{x,y}`` when ``x`` is occupied and ``y`` empty."""
    if E.size < 2:
        raise DegenerateError(f"exclusion ensemble with ell = {E.ell} on {E.sites} sites has a single state")
    if not p(1) > 0:
        raise IrreducibilityError("p(1) = 0: exclusion dynamics may be reducible")
    rows, cols, vals = _kernels.exclusion_transitions(E.states, _pvals(p, E.sites), E.binom)
    r = _assemble(rows, cols, vals, E.size, dense_max)
    meta = {"n": E.n, "ell": E.ell, "alpha": p.alpha, "rate": p.describe()}
    return Generator(r, np.full(E.size, 1.0 / E.size), E.states, "exclusion", meta)


def build_zero_range_generator(p: TransitionRate, g: InteractionRate, E: ZeroRangeEnsemble,
                               dense_max: int = DENSE_MAX) -> Generator:
    """Rate ``g(xi_x) p(y - x)`` for ``xi -> xi^{x,y}``; reversible for ``mu`` by construction."""
    if E.measure is None or E.g is not g:
        E = zero_range_measure(g, E)
    if E.size < 2:
        raise DegenerateError("zero-range ensemble has a single state")
    if not p(1) > 0:
        raise IrreducibilityError("p(1) = 0: zero-range dynamics may be reducible")
    rows, cols, vals = _kernels.zero_range_transitions(E.states, g.upto(E.ell), _pvals(p, E.sites), E.offsets)
    # entrywise detailed balance mu(xi) g(xi_x) p = mu(xi^{x,y}) g(xi_y + 1) p
    mu = E.measure
    forward = mu[rows] * vals
    back = _assemble(rows, cols, vals, E.size, 0)
    reverse = mu[cols] * np.asarray(back[cols, rows]).ravel()
    scale = float(forward.max()) if forward.size else 1.0
    defect = float(np.max(np.abs(forward - reverse))) / scale if forward.size else 0.0
    if defect > BALANCE_TOL:
        raise ConstructionError(f"zero-range detailed balance fails (relative defect {defect:.2e})")
    r = _assemble(rows, cols, vals, E.size, dense_max)
    meta = {"n": E.n, "ell": E.ell, "alpha": p.alpha, "rate": p.describe(), "g": g.describe()}
    return Generator(r, np.array(mu), E.states, "zero_range", meta)


# --------------------------------------------------------------------------
# gap tables
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ParticleRow:
    n: int
    ell: int
    states: int
    gap: float
    normalized_gap: float
    method: str
    residual: float
    test_bound: float | None = None

    def row(self) -> dict:
        return {
            "n": self.n,
            "ell": self.ell,
            "states": self.states,
            "gap": self.gap,
            "normalized_gap": self.normalized_gap,
            "method": self.method,
            "residual": self.residual,
        }


def _scale(n: int, alpha: float | None) -> float:
    return (2 * n + 1) ** (alpha if alpha is not None else 0.0)


def exclusion_gap(p: TransitionRate, n: int, ell: int, tolerance: float | None = None) -> ParticleRow:
    G = build_exclusion_generator(p, enumerate_exclusion(n, ell))
    rep = spectral_gap(G, tolerance)
    return ParticleRow(n, ell, G.dimension, rep.gap, rep.gap * _scale(n, p.alpha), rep.method, rep.residual)


def _mass_right(E: ZeroRangeEnsemble) -> np.ndarray:
    # number of particles on the positive half of the box
    return E.states[:, E.n + 1 :].sum(axis=1).astype(float)


def zero_range_gap(p: TransitionRate, g: InteractionRate, n: int, ell: int, case: str | None = None,
                   tolerance: float | None = None) -> ParticleRow:
    """Gap with the normalisation of the given case (``"ii"`` adds ``(1 + rho)^2``)."""
    E = zero_range_measure(g, enumerate_zero_range(n, ell))
    G = build_zero_range_generator(p, g, E)
    rep = spectral_gap(G, tolerance)
    norm = rep.gap * _scale(n, p.alpha)
    if case == "ii":
        norm *= (1.0 + E.density) ** 2
    try:
        bound = rayleigh_quotient(G, _mass_right(E))
    except DegenerateError:
        bound = None
    return ParticleRow(n, ell, G.dimension, rep.gap, norm, rep.method, rep.residual, bound)


def _run(tasks, fn, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(lambda a: fn(*a), tasks))
    return [fn(*a) for a in tasks]


def exclusion_sweep(p: TransitionRate, n_values, ell_values=None, workers: int | None = None) -> list[ParticleRow]:
    """Gap table over ``(n, ell)``; ``ell`` defaults to ``1..2n``."""
    tasks = []
    for n in n_values:
        ells = range(1, 2 * n + 1) if ell_values is None else [e for e in ell_values if 1 <= e <= 2 * n]
        tasks += [(p, n, e) for e in ells]
    return _run(tasks, exclusion_gap, workers)


@dataclass(frozen=True)
class AldousReport:
    n: int
    walk_gap: float
    gaps: dict
    worst_deviation: float
    worst_ell: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.worst_deviation <= self.tol


def verify_aldous(p: TransitionRate, n: int, tol: float = 1e-8, workers: int | None = None) -> AldousReport:
    """Compare the exclusion gap for each ``ell in 1..2n`` with the one-particle gap."""
    from .spectrum import build_walk_generator

    walk = spectral_gap(build_walk_generator(p, n)).gap
    gaps = {}

    def one(ell):
        try:
            return ell, exclusion_gap(p, n, ell).gap
        except StableGapError as exc:
            exc.args = (f"(n={n}, ell={ell}) {exc}",)
            raise

    for ell, gap in _run([(e,) for e in range(1, 2 * n + 1)], one, workers):
        gaps[ell] = gap
    dev = {ell: abs(gap - walk) for ell, gap in gaps.items()}
    worst = max(dev, key=dev.get)
    return AldousReport(n, walk, gaps, dev[worst], worst, tol)


@dataclass(frozen=True)
class ZeroRangeTable:
    classification: Classification
    rows: list

    @property
    def floor(self) -> float:
        return min(r.normalized_gap for r in self.rows)


def theorem3_check(p: TransitionRate, g: InteractionRate, n_values, ell_values,
                   workers: int | None = None) -> ZeroRangeTable:
    """Normalised zero-range gaps over ``(n, ell)`` for a classified ``g``."""
    cls = classify_interaction(g)
    tasks = [(p, g, n, ell, cls.case) for n in n_values for ell in ell_values if n >= 1 and ell >= 1]
    return ZeroRangeTable(cls, _run(tasks, zero_range_gap, workers))


# --------------------------------------------------------------------------
# moving lemma
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MovingVerdict:
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1.0 + 1e-12) + 1e-300

    def __bool__(self):
        return self.holds


def move_energy(g: InteractionRate, E: ZeroRangeEnsemble, f, x: int, y: int) -> float:
    """``sum_xi mu(xi) g(xi_x) (f(xi^{x,y}) - f(xi))^2`` for sites ``x, y`` in ``-n..n``."""
    if E.measure is None or E.g is not g:
        E = zero_range_measure(g, E)
    if x == y:
        return 0.0
    i, j = x + E.n, y + E.n
    if not (0 <= i < E.sites and 0 <= j < E.sites):
        raise ParameterError(f"sites must lie in -{E.n}..{E.n}")
    f = np.asarray(f, dtype=float)
    idx = np.nonzero(E.states[:, i] > 0)[0]
    moved = E.states[idx].copy()
    moved[:, i] -= 1
    moved[:, j] += 1
    target = E.rank(moved)
    gx = g.upto(E.ell)[E.states[idx, i]]
    return float(np.sum(E.measure[idx] * gx * (f[target] - f[idx]) ** 2))


def moving_lemma_check(p: TransitionRate, g: InteractionRate, E: ZeroRangeEnsemble, f,
                       x: int, y: int, z: int) -> MovingVerdict:
    """``phi^{x,z}(f) <= 2 (phi^{x,y}(f) + phi^{y,z}(f))`` for one site triple.

    ``p`` does not enter the energies; it is accepted so callers can pass the
    same arguments as for the generator builders.
    """
    if E.measure is None or E.g is not g:
        E = zero_range_measure(g, E)
    lhs = move_energy(g, E, f, x, z)
    rhs = 2.0 * (move_energy(g, E, f, x, y) + move_energy(g, E, f, y, z))
    return MovingVerdict(lhs, rhs)
