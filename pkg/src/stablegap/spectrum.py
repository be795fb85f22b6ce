"""Reversible generators, spectral gaps and the box-size scaling sweep.

Conventions: ``L f(x) = sum_y r(x, y) (f(y) - f(x))``; ``-L`` is positive
semidefinite in ``L^2(mu)``. The Dirichlet form is
``D(f) = 1/2 sum_{x,y} mu(x) r(x,y) (f(y) - f(x))^2 = <f, -L f>_mu`` and the gap
is the smallest eigenvalue of ``-L`` on mean-zero functions.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh_tridiagonal
from scipy.sparse.csgraph import connected_components

from .errors import ContractError, ConvergenceError, DegenerateError, StableGapError, StructuralError
from .rates import TransitionRate

DENSE_MAX = 4096
DENSE_TOL = 1e-10
ITERATIVE_TOL = 1e-8
# relative detailed-balance defect above which a chain is treated as non-reversible
REVERSIBILITY_TOL = 1e-10


class IrreducibilityError(StructuralError):
    pass


@dataclass(frozen=True, eq=False)
class Generator:
    """Off-diagonal jump rates ``r(x, y)`` plus the equilibrium weights ``mu``.

    ``rates`` is a dense array for small chains and a CSR matrix otherwise; the
    diagonal is always zero.
    """

    rates: np.ndarray | sp.csr_matrix
    equilibrium: np.ndarray
    labels: object = None
    kind: str = "chain"
    meta: dict = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return self.equilibrium.shape[0]

    @property
    def is_dense(self) -> bool:
        return isinstance(self.rates, np.ndarray)

    def escape_rates(self) -> np.ndarray:
        """``gamma(x) = sum_y r(x, y)``."""
        return np.asarray(self.rates.sum(axis=1)).ravel()

    def negative_laplacian(self):
        gam = self.escape_rates()
        if self.is_dense:
            return np.diag(gam) - self.rates
        return (sp.diags(gam) - self.rates).tocsr()

    def symmetrized(self):
        """``S = D^{1/2} (-L) D^{-1/2}`` with ``D = diag(mu)``."""
        s = np.sqrt(self.equilibrium)
        if self.is_dense:
            return self.negative_laplacian() * s[:, None] / s[None, :]
        d, dinv = sp.diags(s), sp.diags(1.0 / s)
        return (d @ self.negative_laplacian() @ dinv).tocsr()

    def apply(self, f) -> np.ndarray:
        """``L f``."""
        f = np.asarray(f, dtype=float)
        return self.rates @ f - self.escape_rates() * f

    def dirichlet_form(self, f) -> float:
        f = np.asarray(f, dtype=float)
        mu = self.equilibrium
        if self.is_dense:
            diff = f[None, :] - f[:, None]
            return 0.5 * float(np.sum(mu[:, None] * self.rates * diff**2))
        coo = self.rates.tocoo()
        return 0.5 * float(np.sum(mu[coo.row] * coo.data * (f[coo.col] - f[coo.row]) ** 2))

    def row_sum_defect(self) -> float:
        """``max_x |sum_y L(x, y)|``."""
        return float(np.max(np.abs(np.asarray(self.negative_laplacian().sum(axis=1)).ravel())))

    def detailed_balance_defect(self) -> float:
        """``max |mu(x) r(x,y) - mu(y) r(y,x)|`` relative to the largest flow."""
        mu = self.equilibrium
        if self.is_dense:
            flow = mu[:, None] * self.rates
            scale = float(flow.max()) or 1.0
            return float(np.max(np.abs(flow - flow.T))) / scale
        flow = sp.diags(mu) @ self.rates
        scale = float(abs(flow).max()) or 1.0
        diff = (flow - flow.T).tocoo()
        return (float(np.max(np.abs(diff.data))) if diff.nnz else 0.0) / scale

    def is_irreducible(self) -> bool:
        graph = sp.csr_matrix(self.rates > 0) if self.is_dense else (self.rates > 0)
        ncomp, _ = connected_components(graph, directed=True, connection="strong")
        return ncomp == 1


# --------------------------------------------------------------------------
# builders
# --------------------------------------------------------------------------


def _finish(r: np.ndarray, dense_max: int) -> np.ndarray | sp.csr_matrix:
    if r.shape[0] <= dense_max:
        return r
    m = sp.csr_matrix(r)
    m.eliminate_zeros()
    return m


def build_walk_generator(p: TransitionRate, n: int, dense_max: int = DENSE_MAX) -> Generator:
    """Walk on ``Lambda_n = {-n..n}`` with ``r(x, y) = p(y - x)``; uniform equilibrium."""
    n = int(n)
    if n < 1:
        raise ContractError(f"box radius must be >= 1, got {n}")
    if p(1) <= 0:
        raise IrreducibilityError("p(1) = 0: the walk on the box may be reducible")
    size = 2 * n + 1
    x = np.arange(-n, n + 1)
    pv = np.concatenate(([0.0], p.values(2 * n)))
    r = pv[np.abs(x[:, None] - x[None, :])]
    meta = {"n": n, "rate": p.describe(), "alpha": p.alpha}
    return Generator(_finish(r, dense_max), np.full(size, 1.0 / size), x, "walk", meta)


def build_complete_generator(size: int, c: float = 1.0, dense_max: int = DENSE_MAX) -> Generator:
    """Constant rate ``c`` between every pair of ``size`` states."""
    r = np.full((size, size), float(c))
    np.fill_diagonal(r, 0.0)
    return Generator(_finish(r, dense_max), np.full(size, 1.0 / size), np.arange(size), "complete",
                     {"states": size, "c": c})


def build_generator(rates, equilibrium, kind: str = "chain", labels=None, meta=None) -> Generator:
    """Wrap an explicit rate matrix; the diagonal is discarded."""
    if sp.issparse(rates):
        r = sp.csr_matrix(rates, dtype=float)
        r.setdiag(0.0)
        r.eliminate_zeros()
    else:
        r = np.array(rates, dtype=float)
        np.fill_diagonal(r, 0.0)
    mu = np.asarray(equilibrium, dtype=float)
    return Generator(r, mu / mu.sum(), labels, kind, dict(meta or {}))


# --------------------------------------------------------------------------
# eigensolvers
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpectralReport:
    gap: float
    n: int | None
    rate: str
    method: str
    residual: float
    states: int
    alpha: float | None = None
    vector: np.ndarray | None = field(default=None, repr=False)

    @property
    def gap_times_scale(self) -> float:
        if self.n is None or self.alpha is None:
            return math.nan
        return self.gap * (2 * self.n + 1) ** self.alpha

    def row(self) -> dict:
        return {
            "n": self.n,
            "states": self.states,
            "gap": self.gap,
            "gap_times_scale": self.gap_times_scale,
            "method": self.method,
            "residual": self.residual,
        }


def _complement_basis(u: np.ndarray) -> np.ndarray:
    """Orthonormal basis (columns) of ``u^perp`` from a Householder reflector."""
    n = u.shape[0]
    w = u.copy()
    w[0] += math.copysign(1.0, u[0]) if u[0] != 0 else 1.0
    h = np.eye(n) - 2.0 * np.outer(w, w) / (w @ w)
    return h[:, 1:]


def _check_ready(G: Generator) -> None:
    if G.dimension < 2:
        raise DegenerateError("a single-state chain has no spectral gap")
    if not G.is_irreducible():
        raise IrreducibilityError("generator is reducible: zero is not a simple eigenvalue")
    if G.detailed_balance_defect() > REVERSIBILITY_TOL:
        raise StructuralError("generator violates detailed balance with its equilibrium")


def _dense_gap(G: Generator, tol: float):
    s = G.symmetrized()
    s = 0.5 * (s + s.T)
    u = np.sqrt(G.equilibrium)
    q = _complement_basis(u)
    evals, evecs = np.linalg.eigh(q.T @ s @ q)
    lam = float(evals[0])
    v = q @ evecs[:, 0]
    res = float(np.linalg.norm(s @ v - lam * v))
    if res > tol:
        raise ConvergenceError("dense eigensolve missed the residual target", res)
    return lam, v, res


def lanczos_smallest(matvec, u: np.ndarray, tol: float = ITERATIVE_TOL, krylov: int = 160,
                     max_restarts: int = 60, seed: int = 0):
    """Smallest eigenpair of a symmetric operator restricted to ``u^perp``.

    Lanczos with full reorthogonalisation; ``u`` (unit norm) is projected out
    of every Krylov vector, which deflates the known null direction. Restarts
    from the current Ritz vector until ``||A v - lam v|| <= tol``.
    """
    n = u.shape[0]
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v -= u * (u @ v)
    v /= np.linalg.norm(v)
    m = max(1, min(krylov, n - 1))
    best = math.inf
    for _ in range(max_restarts):
        basis = np.zeros((m + 1, n))
        a = np.zeros(m)
        b = np.zeros(m)
        basis[0] = v
        k = m
        for j in range(m):
            w = matvec(basis[j])
            a[j] = basis[j] @ w
            for _ in range(2):
                w -= basis[: j + 1].T @ (basis[: j + 1] @ w)
                w -= u * (u @ w)
            b[j] = np.linalg.norm(w)
            if b[j] <= 1e-13 * max(1.0, abs(a[j])):
                k = j + 1
                break
            basis[j + 1] = w / b[j]
        theta, y = eigh_tridiagonal(a[:k], b[: k - 1]) if k > 1 else (a[:1], np.ones((1, 1)))
        x = basis[:k].T @ y[:, 0]
        x -= u * (u @ x)
        x /= np.linalg.norm(x)
        ax = matvec(x)
        lam = float(x @ ax)
        res = float(np.linalg.norm(ax - lam * x))
        if res <= tol:
            return lam, x, res
        best = min(best, res)
        v = x
    raise ConvergenceError("Lanczos iteration budget exhausted", best)


def _iterative_gap(G: Generator, tol: float, seed: int):
    s = G.symmetrized()
    if not sp.issparse(s):
        s = sp.csr_matrix(s)
    s = (0.5 * (s + s.T)).tocsr()
    u = np.sqrt(G.equilibrium)
    u = u / np.linalg.norm(u)
    return lanczos_smallest(lambda v: s @ v, u, tol=tol, seed=seed)


def spectral_gap(G: Generator, tolerance: float | None = None, method: str = "auto",
                 seed: int = 0) -> SpectralReport:
    """Smallest eigenvalue of ``-L`` on ``mu``-mean-zero functions.

    ``method`` is ``"dense"``, ``"iterative"`` or ``"auto"`` (dense up to
    ``DENSE_MAX`` states). The reported residual is ``||S v - lam v||_2`` for
    the symmetrised matrix, i.e. the ``L^2(mu)`` residual of ``-L``.
    """
    _check_ready(G)
    if method == "auto":
        method = "dense" if G.dimension <= DENSE_MAX else "iterative"
    if method == "dense":
        lam, v, res = _dense_gap(G, DENSE_TOL if tolerance is None else tolerance)
    elif method == "iterative":
        lam, v, res = _iterative_gap(G, ITERATIVE_TOL if tolerance is None else tolerance, seed)
    else:
        raise ValueError(f"unknown method {method!r}")
    return SpectralReport(lam, G.meta.get("n"), G.meta.get("rate", G.kind), method, res,
                          G.dimension, G.meta.get("alpha"), v / np.sqrt(G.equilibrium))


def dense_spectrum(G: Generator) -> np.ndarray:
    """All eigenvalues of ``-L`` (ascending), via the symmetrised matrix."""
    s = G.symmetrized()
    if sp.issparse(s):
        s = s.toarray()
    return np.linalg.eigvalsh(0.5 * (s + s.T))


# --------------------------------------------------------------------------
# variational quantities
# --------------------------------------------------------------------------


def rayleigh_quotient(G: Generator, f) -> float:
    """``D(f - <f>) / Var_mu(f)``; never below the gap."""
    f = np.asarray(f, dtype=float)
    mu = G.equilibrium
    fc = f - mu @ f
    var = float(mu @ fc**2)
    if var <= 1e-300 or var <= 1e-28 * float(mu @ f**2):
        raise DegenerateError("test function is constant under the equilibrium")
    return G.dirichlet_form(fc) / var


def upper_bound_test_function(G: Generator) -> float:
    """Rayleigh quotient of ``sqrt((2n+1)/n) 1{x > 0}`` on a walk generator."""
    if G.kind != "walk" or "n" not in G.meta:
        raise ContractError("the indicator test function is defined for walk generators only")
    n = G.meta["n"]
    x = np.asarray(G.labels)
    f = math.sqrt((2 * n + 1) / n) * (x > 0).astype(float)
    return rayleigh_quotient(G, f)


# --------------------------------------------------------------------------
# sweep
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    n: int
    states: int
    gap: float
    gap_times_scale: float
    method: str
    residual: float
    error: str | None = None

    def row(self) -> dict:
        return {
            "n": self.n,
            "states": self.states,
            "gap": self.gap,
            "gap_times_scale": self.gap_times_scale,
            "method": self.method,
            "residual": self.residual,
        }


@dataclass(frozen=True)
class GapSweep:
    rate: str
    alpha: float | None
    rows: list
    slope: float
    intercept: float
    scaled_min: float
    scaled_max: float

    @property
    def failures(self) -> list:
        return [r for r in self.rows if r.error is not None]


def fit_loglog(x, y) -> tuple[float, float]:
    """Least-squares ``log y = slope log x + intercept``."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    slope, intercept = np.polyfit(lx, ly, 1)
    return float(slope), float(intercept)


def gap_scaling_sweep(p: TransitionRate, n_values, method: str = "auto", tolerance: float | None = None,
                      exponent: float | None = None, workers: int | None = None) -> GapSweep:
    """Gap of the walk on ``Lambda_n`` for each ``n``, fitted against ``2n + 1``.

    ``exponent`` sets the normalisation ``lambda_n (2n+1)^exponent`` (defaults to
    the rate's alpha). A failing ``n`` is kept in the table with its error and
    excluded from the fit.
    """
    ns = [int(n) for n in n_values]
    if not ns:
        raise ContractError("n_values is empty")
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ContractError("n_values must be strictly increasing")
    expo = p.alpha if exponent is None else exponent
    expo = 0.0 if expo is None else float(expo)

    def one(n: int) -> SweepRow:
        try:
            rep = spectral_gap(build_walk_generator(p, n), tolerance, method)
        except StableGapError as exc:
            return SweepRow(n, 2 * n + 1, math.nan, math.nan, method, math.nan, f"{type(exc).__name__}: {exc}")
        return SweepRow(n, rep.states, rep.gap, rep.gap * (2 * n + 1) ** expo, rep.method, rep.residual)

    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            rows = list(ex.map(one, ns))
    else:
        rows = [one(n) for n in ns]
    ok = [r for r in rows if r.error is None]
    if len(ok) >= 2:
        slope, intercept = fit_loglog([2 * r.n + 1 for r in ok], [r.gap for r in ok])
    else:
        slope = intercept = math.nan
    scaled = [r.gap_times_scale for r in ok]
    return GapSweep(p.describe(), p.alpha, rows, slope, intercept,
                    min(scaled) if scaled else math.nan, max(scaled) if scaled else math.nan)
