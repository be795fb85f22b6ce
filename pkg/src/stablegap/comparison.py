"""Comparison of Dirichlet sums against the canonical power law.

For a rate ``p`` in DAN(alpha) and a K-subpolynomial weight ``phi`` the sums
``D_p(A) = sum_{x in A} p(x) phi(x)`` satisfy
``D_q({1..n}) <= kappa * D_p({1..n})`` with ``q(z) = |z|^{-(1+alpha)}``.
This module evaluates the multiscale constants behind such a ``kappa``,
locates the burn-in index on a finite horizon, assembles the certificate and
measures the empirical ratio directly.

Scales are indexed from ``n = 0``: ``b_n = floor(b^{n + k0})``,
``a_n = b_n + b_{n+1} - b_{n+2}``, and

* ``A_n = {a_n + 1, ..., b_n}``
* ``B_n = {b_{n+1} + 1, ..., b_{n+2}}``
* ``D_n = {b_{n+1} - b_n + 1, ..., b_{n+2} - a_n - 1}``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import _kernels
from .errors import (
    ComparisonViolatedError,
    ContractError,
    InfeasibleCertificateError,
    ParameterError,
)
from .rates import (
    SubpolynomialFunction,
    TransitionRate,
    _check_alpha,
    check_subpolynomial,
    make_power_law,
    tail_constant,
)

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0
# b_n is tabulated until it first exceeds this value
DEFAULT_SCALE_TARGET = 10**8
# reference point for the normalisation p -> p / c
DEFAULT_X_REF = 10**4
# cap on the number of terms in the finite-window sum behind C1
C1_MAX_TERMS = 10**8
SEARCH_MAX_J = 60


def _check_K(K: float) -> float:
    K = float(K)
    if not K >= 0.5 or not math.isfinite(K):
        raise ParameterError(f"subpolynomial constant must be >= 1/2, got {K}")
    return K


# fractional bits carried by the fixed-point powers of b
_FIXED_BITS = 128


def _powers(b: float):
    """Yield ``(k, V, err)`` with ``V <= b^k 2^P <= V + err`` for ``k = 0, 1, ...``.

    ``b`` is a float, hence a dyadic rational ``num / den``; each step is one
    exact integer product followed by a floor, so the error grows by at most
    one unit per step (times ``b``).
    """
    fb = Fraction(b)
    num, den = fb.numerator, fb.denominator
    v, err, k = 1 << _FIXED_BITS, 0, 0
    while True:
        yield k, v, err
        v = v * num // den
        err = -(-err * num // den) + 1
        k += 1


def _floor_power(b: float, k: int, v: int, err: int) -> int:
    lo, hi = v >> _FIXED_BITS, (v + err) >> _FIXED_BITS
    if lo == hi:
        return lo
    exact = Fraction(b) ** k  # floor sits within the error window: settle it exactly
    return exact.numerator // exact.denominator


@lru_cache(maxsize=64)
def _scale_values(b: float, k0: int, count: int) -> tuple[int, ...]:
    """Exact ``floor(b^{n+k0})`` for ``n = 0..count-1``."""
    out = []
    for k, v, err in _powers(b):
        if k >= k0:
            out.append(_floor_power(b, k, v, err))
            if len(out) == count:
                return tuple(out)
    raise AssertionError("unreachable")  # pragma: no cover


@lru_cache(maxsize=64)
def _smallest_k0(b: float) -> int:
    """Smallest ``k`` with ``b^k > 2 / (b - 1)``."""
    target = Fraction(2) / (Fraction(b) - 1)
    scaled = target * (1 << _FIXED_BITS)
    for k, v, err in _powers(b):
        if v > scaled:
            return k
        if v + err > scaled and Fraction(b) ** k > target:
            return k
    raise AssertionError("unreachable")  # pragma: no cover


@dataclass(frozen=True)
class MultiscaleParameters:
    b: float
    delta: float
    k0: int
    K: float
    alpha: float
    a: float
    gamma1: float
    gamma2: float
    ell1: int
    ell2: int
    theta: float
    m: int | None = None
    horizon: int = 0
    scale_sequence: tuple = field(default=(), repr=False)

    @property
    def a_sequence(self) -> tuple:
        s = self.scale_sequence
        return tuple(s[n] + s[n + 1] - s[n + 2] for n in range(len(s) - 2))

    @property
    def feasible(self) -> bool:
        return self.theta < 1.0

    def b_n(self, n: int) -> int:
        return self.scale_sequence[n]

    def a_n(self, n: int) -> int:
        s = self.scale_sequence
        return s[n] + s[n + 1] - s[n + 2]

    def A(self, n: int) -> range:
        return range(self.a_n(n) + 1, self.b_n(n) + 1)

    def B(self, n: int) -> range:
        return range(self.b_n(n + 1) + 1, self.b_n(n + 2) + 1)

    def D(self, n: int) -> range:
        return range(self.b_n(n + 1) - self.b_n(n) + 1, self.b_n(n + 2) - self.a_n(n))

    def extended(self, horizon: int) -> MultiscaleParameters:
        """Same constants with the sequence tabulated far enough for ``horizon``."""
        need = horizon + max(self.ell1, self.ell2) + 4
        if need <= len(self.scale_sequence) and horizon <= self.horizon:
            return self
        seq = _scale_values(self.b, self.k0, max(need, len(self.scale_sequence)))
        return replace(self, horizon=max(horizon, self.horizon), scale_sequence=seq)

    def to_dict(self) -> dict:
        return {
            "b": self.b,
            "delta": self.delta,
            "k0": self.k0,
            "K": self.K,
            "alpha": self.alpha,
            "a": self.a,
            "gamma1": self.gamma1,
            "gamma2": self.gamma2,
            "ell1": self.ell1,
            "ell2": self.ell2,
            "theta": self.theta,
            "m": self.m,
            "horizon": self.horizon,
            "b_first": [int(v) for v in self.scale_sequence[:8]],
        }


def _default_horizon(b: float, k0: int, target: int) -> int:
    return max(8, int(math.ceil((math.log(target) / math.log(b)) - k0)))


def compute_constants(b: float, alpha: float, K: float, horizon: int | None = None) -> MultiscaleParameters:
    """All scale constants for a given ``b``; ``m`` is left unset."""
    alpha = _check_alpha(alpha)
    K = _check_K(K)
    b = float(b)
    if not 1.0 < b:
        raise ParameterError(f"b must exceed 1, got {b}")
    if b >= GOLDEN:
        raise ParameterError(f"b = {b} >= golden ratio makes a = 1 + b - b^2 <= 0")
    delta = b - 1.0
    log_b = math.log1p(delta)
    log_a = math.log1p(-delta * b)  # a = 1 - delta * b
    a = 1.0 + b - b * b
    gamma1 = math.exp(-alpha * log_b) * -math.expm1(-alpha * log_b) / (alpha * math.expm1(-alpha * log_a))
    gamma2 = (delta * (2.0 * b + 1.0) / b) ** (1.0 + alpha)
    ell1 = math.ceil(-log_a / log_b) + 1
    ell2 = math.ceil(math.log(2.0 * b + 1.0) / log_b)
    theta = 2.0 * K * ell2 * gamma2
    k0 = _smallest_k0(b)
    h = _default_horizon(b, k0, DEFAULT_SCALE_TARGET) if horizon is None else int(horizon)
    params = MultiscaleParameters(b, delta, k0, K, alpha, a, gamma1, gamma2, ell1, ell2, theta, None, h)
    return params.extended(h)


def theta_on_grid(K: float, alpha: float, j_values) -> list[tuple[int, float, float]]:
    """``(j, b, theta)`` along the dyadic grid ``b = 1 + 2^-j``."""
    out = []
    for j in j_values:
        b = 1.0 + 2.0 ** (-int(j))
        out.append((int(j), b, compute_constants(b, alpha, K, horizon=0).theta))
    return out


def select_b(K: float, alpha: float, max_j: int = SEARCH_MAX_J, horizon: int | None = None) -> MultiscaleParameters:
    """First ``b = 1 + 2^-j`` (``j = 1, 2, ...``) with ``theta < 1``."""
    alpha = _check_alpha(alpha)
    K = _check_K(K)
    for j in range(1, max_j + 1):
        params = compute_constants(1.0 + 2.0 ** (-j), alpha, K, horizon=0)
        if params.theta < 1.0:
            return compute_constants(params.b, alpha, K, horizon)
    raise InfeasibleCertificateError(f"no grid point up to j = {max_j} gives theta < 1", "search-budget")


# --------------------------------------------------------------------------
# burn-in
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class _Normalised:
    """``p / c`` viewed through masses and point values only."""

    p: TransitionRate
    c: float

    def mass(self, lo: int, hi: int) -> float:
        return self.p.mass(lo, hi) / self.c


def _violations(params: MultiscaleParameters, p: _Normalised, q: TransitionRate, n: int) -> str | None:
    s = params.scale_sequence
    an = params.a_n
    a_now, a_next = an(n), an(n + 1)
    if a_now <= 0 or a_next <= a_now:
        return "a_n positive and increasing"
    pa = p.mass(a_now + 1, s[n])
    if not pa > 0:
        return "p(A_n) > 0"
    if s[n] > an(n + params.ell1):
        return "A_n and A_{n+ell1} disjoint"
    d_lo = lambda k: s[k + 1] - s[k] + 1  # noqa: E731
    d_hi = lambda k: s[k + 2] - an(k) - 1  # noqa: E731
    if d_lo(n + 1) < d_lo(n) or d_hi(n + 1) < d_hi(n):
        return "D_n endpoints nondecreasing"
    if d_hi(n) >= d_lo(n + params.ell2):
        return "D_n and D_{n+ell2} disjoint"
    if q.mass(s[n + 1] + 1, s[n + 2]) / pa > 2.0 * params.gamma1:
        return "q(B_n)/p(A_n) <= 2 gamma1"
    ratio2 = q(s[n + 1]) / q(s[n + 2] - a_now)
    if ratio2 > 2.0 * params.gamma2:
        return "q(b_{n+1})/q(b_{n+2}-a_n) <= 2 gamma2"
    return None


def burn_in_index(params: MultiscaleParameters, p: TransitionRate, horizon: int | None = None,
                  x_ref: int = DEFAULT_X_REF) -> int:
    """Smallest ``m`` such that every scale condition holds for ``m <= n <= horizon``.

    Conditions are evaluated for ``p / c`` with ``c = tail_constant(p, x_ref)``.
    """
    h = params.horizon if horizon is None else int(horizon)
    if h < 0:
        raise ParameterError("horizon must be >= 0")
    params = params.extended(h)
    c = tail_constant(p, x_ref, params.alpha)
    if not c > 0:
        raise InfeasibleCertificateError(f"tail constant at x = {x_ref} is zero", "c > 0")
    pn = _Normalised(p, c)
    q = make_power_law(params.alpha)
    for n in range(h, -1, -1):
        bad = _violations(params, pn, q, n)
        if bad is not None:
            if n == h:
                raise InfeasibleCertificateError(f"scale condition fails at the horizon n = {h}", bad)
            return n + 1
    return 0


# --------------------------------------------------------------------------
# sums and certificates
# --------------------------------------------------------------------------


def dirichlet_sum(p: TransitionRate, phi: SubpolynomialFunction, A) -> float:
    """``sum_{x in A} p(x) phi(x)``; ``A`` is any iterable of positive integers."""
    x = np.fromiter(A, dtype=np.int64) if not isinstance(A, np.ndarray) else A.astype(np.int64)
    if x.size == 0:
        return 0.0
    if x.min() < 1 or x.max() > phi.N:
        raise ParameterError(f"phi is defined on 1..{phi.N} only")
    return float(np.sum(p(x) * phi(x)))


def dirichlet_profile(f) -> SubpolynomialFunction:
    """``phi(k) = sum_x (f(x+k) - f(x))^2`` over the box, ``k = 1..2n``."""
    f = np.ascontiguousarray(f, dtype=float)
    if f.ndim != 1 or f.size < 1 or f.size % 2 == 0:
        raise ParameterError("f must list values on -n..n (odd length)")
    return SubpolynomialFunction(_kernels.dirichlet_profile(f), 2.0, "dirichlet_profile")


@dataclass(frozen=True)
class ComparisonCertificate:
    params: MultiscaleParameters
    kappa: float
    C1: float
    horizon: int
    rescale: float
    x_ref: int
    kappa_normalised: float

    label = "verified up to horizon"

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "kappa": self.kappa,
            "kappa_normalised": self.kappa_normalised,
            "C1": self.C1,
            "horizon": self.horizon,
            "rescale_factor": self.rescale,
            "x_ref": self.x_ref,
            "params": self.params.to_dict(),
        }


def _power_sum(upto: int, exponent: float) -> float:
    """``sum_{x=1}^{upto} x^exponent`` in chunks."""
    if upto > C1_MAX_TERMS:
        raise InfeasibleCertificateError(f"finite window reaches {upto} > {C1_MAX_TERMS}", "C1 window size")
    total = 0.0
    chunk = 1 << 20
    for lo in range(1, upto + 1, chunk):
        x = np.arange(lo, min(upto, lo + chunk - 1) + 1, dtype=float)
        total += float(np.sum(x**exponent))
    return total


def certificate_kappa(params: MultiscaleParameters, p: TransitionRate, horizon: int | None = None,
                      x_ref: int = DEFAULT_X_REF) -> ComparisonCertificate:
    """``kappa = (2 K ell1 gamma1 + C1) / (1 - theta)``, for ``p`` in its original scale.

    The constants are built for ``p / c``; dividing by ``c`` converts the bound
    back. ``C1`` covers the finite window ``1..b_{m+2}`` through the power bound
    ``phi(x) <= 2 K phi(1) x^nu``.
    """
    if not params.theta < 1.0:
        raise InfeasibleCertificateError(f"theta = {params.theta:.4g} >= 1", "theta < 1")
    h = params.horizon if horizon is None else int(horizon)
    m = burn_in_index(params, p, h, x_ref)
    params = replace(params.extended(h), m=m, horizon=h)
    c = tail_constant(p, x_ref, params.alpha)
    p1 = p(1) / c
    if not p1 > 0:
        raise InfeasibleCertificateError("p(1) = 0 leaves phi(1) uncontrolled", "p(1) > 0")
    nu = 1.0 + math.log(params.K) / math.log(2.0)
    window = params.b_n(m + 2)
    C1 = 2.0 * params.K * _power_sum(window, nu - 1.0 - params.alpha) / p1
    kappa_n = (2.0 * params.K * params.ell1 * params.gamma1 + C1) / (1.0 - params.theta)
    return ComparisonCertificate(params, kappa_n / c, C1, h, c, int(x_ref), kappa_n)


# --------------------------------------------------------------------------
# empirical ratios
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RatioRow:
    name: str
    K: float
    kappa_hat: float
    argmax_n: int


@dataclass(frozen=True)
class ComparisonReport:
    rows: list
    supremum: float
    n_max: int
    kappa: float | None = None

    @property
    def holds(self) -> bool | None:
        if self.kappa is None:
            return None
        return self.supremum <= self.kappa


def _ratio_sup(p_vals: np.ndarray, q_vals: np.ndarray, phi: SubpolynomialFunction, n_max: int) -> tuple[float, int]:
    w = phi.values[:n_max]
    dq = np.cumsum(q_vals * w)
    dp = np.cumsum(p_vals * w)
    bad = (dp <= 0) & (dq > 0)
    if bad.any():
        n = int(np.argmax(bad)) + 1
        raise ComparisonViolatedError(f"D_p(1..{n}) = 0 while D_q(1..{n}) > 0 for {phi.name or 'phi'}")
    ok = dp > 0
    if not ok.any():
        return 0.0, 0
    r = np.where(ok, dq / np.where(ok, dp, 1.0), 0.0)
    k = int(np.argmax(r))
    return float(r[k]), k + 1


def verify_comparison(p: TransitionRate, alpha: float, phi_family, n_max: int,
                      certificate: ComparisonCertificate | None = None, workers: int | None = None,
                      check: bool = True) -> ComparisonReport:
    """``sup_{n <= n_max} D_q(1..n) / D_p(1..n)`` for every weight in the family."""
    alpha = _check_alpha(alpha)
    n_max = int(n_max)
    if n_max < 1:
        raise ParameterError("n_max must be >= 1")
    family = list(phi_family)
    for phi in family:
        if phi.N < n_max:
            raise ParameterError(f"{phi.name or 'phi'} is defined on 1..{phi.N}, need 1..{n_max}")
        if check:
            if phi.K is None:
                raise ContractError(f"{phi.name or 'phi'} carries no subpolynomial constant")
            verdict = check_subpolynomial(phi, phi.K, n_max)
            if not verdict:
                raise ContractError(f"{phi.name or 'phi'} fails the K = {phi.K} test at {verdict.witness}")
    p_vals = p.values(n_max)
    q_vals = make_power_law(alpha).values(n_max)

    def one(phi):
        sup, arg = _ratio_sup(p_vals, q_vals, phi, n_max)
        return RatioRow(phi.name, phi.K if phi.K is not None else math.nan, sup, arg)

    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            rows = list(ex.map(one, family))
    else:
        rows = [one(phi) for phi in family]
    sup = max((r.kappa_hat for r in rows), default=0.0)
    return ComparisonReport(rows, sup, n_max, certificate.kappa if certificate else None)


def standard_family(n: int, K: float = 2.0) -> list[SubpolynomialFunction]:
    """A few weights that pass the K test on ``1..n`` (``x^s`` with ``2^s <= 2K``, plus constants)."""
    x = np.arange(1, n + 1, dtype=float)
    nu = 1.0 + math.log(K) / math.log(2.0)
    out = [SubpolynomialFunction(np.ones(n), K, "const")]
    for s in (0.5, 1.0, 1.5, 2.0):
        if s <= nu + 1e-12:
            out.append(SubpolynomialFunction(x**s, K, f"x^{s:g}"))
    out.append(SubpolynomialFunction(np.minimum(x, math.sqrt(n)), K, "min(x,sqrt n)"))
    return out
