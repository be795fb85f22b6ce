"""Symmetric jump rates on the integers and subpolynomial weight functions.

A rate ``p`` is stored through its values on the positive integers; the value
at ``-z`` is the value at ``z`` and ``p(0) = 0``. Every rate knows its tail
sums ``T(x) = sum_{y >= x} p(y)``, which is all that the normalisation
diagnostics and the multiscale machinery need, and how to draw exact samples
of ``|Z|`` conditioned on ``|Z| >= z`` for the Monte Carlo walker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import zeta

from . import _kernels
from .errors import AccuracyError, ContractError, ParameterError, SamplingDomainError

# jumps larger than this are clipped when simulating; a walker that far out
# cannot come back to the origin with any measurable probability
MAX_JUMP = 2**40


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 < alpha < 2.0) or not math.isfinite(alpha):
        raise ParameterError(f"stability index alpha must lie in (0, 2), got {alpha}")
    return alpha


def _as_positive_ints(z) -> np.ndarray:
    z = np.asarray(z)
    if z.dtype.kind not in "iu":
        zi = np.rint(z).astype(np.int64)
        if not np.all(zi == z):
            raise ParameterError("rates are evaluated on integers only")
        z = zi
    return np.abs(z.astype(np.int64))


def sample_power_tail(rng: np.random.Generator, size: int, zmin: int, alpha: float) -> np.ndarray:
    """Exact draws from ``P(Z = z) ∝ z^{-(1+alpha)}`` on ``z >= zmin``.

    Proposal: ``floor(X)`` with ``X`` Pareto on ``[zmin, inf)``, whose mass at
    ``z`` is ``zmin^a (z^-a - (z+1)^-a)``. The target/proposal ratio is at most
    ``(1 + 1/zmin)^(1+a) / a`` so the acceptance test below is exact.
    """
    out = np.empty(size, dtype=np.int64)
    filled = 0
    bound = (1.0 + 1.0 / zmin) ** (1.0 + alpha)
    while filled < size:
        m = size - filled
        u = rng.random(m)
        x = zmin * (1.0 - u) ** (-1.0 / alpha)
        z = np.floor(np.minimum(x, float(MAX_JUMP)))
        cell = z ** (-alpha) * -np.expm1(-alpha * np.log1p(1.0 / z))
        ratio = alpha * z ** (-(1.0 + alpha)) / cell
        accept = rng.random(m) * bound < ratio
        k = int(accept.sum())
        out[filled : filled + k] = z[accept].astype(np.int64)
        filled += k
    return out


@dataclass(frozen=True)
class TransitionRate:
    """Base class; concrete kinds override the positive-axis hooks."""

    kind: str = field(init=False)
    alpha: float | None

    # --- hooks -----------------------------------------------------------
    def _positive(self, z: np.ndarray) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def tail_sum(self, x: int) -> float:  # pragma: no cover - abstract
        raise NotImplementedError

    def sample_tail(self, rng: np.random.Generator, size: int, zmin: int) -> np.ndarray:
        raise SamplingDomainError(f"{self.kind} rate has no sampler beyond its table")

    @property
    def tail_constant_limit(self) -> float | None:
        return None

    @property
    def in_dan(self) -> bool:
        return True

    @property
    def support_max(self) -> float:
        """Largest ``z`` with ``p(z) > 0`` (``inf`` for heavy tails)."""
        return math.inf

    @property
    def has_sampler_tail(self) -> bool:
        return math.isinf(self.support_max)

    # --- public ------------------------------------------------------------
    def __call__(self, z):
        za = _as_positive_ints(z)
        scalar = za.ndim == 0
        za = np.atleast_1d(za)
        out = np.zeros(za.shape)
        pos = za > 0
        if pos.any():
            out[pos] = self._positive(za[pos])
        return float(out[0]) if scalar else out

    def values(self, zmax: int) -> np.ndarray:
        """``p(1), ..., p(zmax)`` as an array (index ``k`` holds ``p(k+1)``)."""
        if zmax < 1:
            return np.zeros(0)
        return self._positive(np.arange(1, zmax + 1, dtype=np.int64))

    def mass(self, lo: int, hi: int) -> float:
        """``p({lo, ..., hi})`` for ``1 <= lo``; zero for an empty range."""
        if hi < lo:
            return 0.0
        return self.tail_sum(lo) - self.tail_sum(hi + 1)

    def total_rate(self) -> float:
        """``gamma = sum_z p(z)`` over all nonzero integers."""
        return 2.0 * self.tail_sum(1)

    def describe(self) -> str:
        return f"{self.kind}(alpha={self.alpha})"


@dataclass(frozen=True)
class PowerLawRate(TransitionRate):
    """``q(z) = |z|^{-(1+alpha)}``."""

    def __post_init__(self):
        object.__setattr__(self, "kind", "power_law")
        object.__setattr__(self, "alpha", _check_alpha(self.alpha))

    def _positive(self, z):
        return z.astype(float) ** (-(1.0 + self.alpha))

    def tail_sum(self, x: int) -> float:
        # Hurwitz zeta is exact here; tail_bounds gives the certified bracket
        return float(zeta(1.0 + self.alpha, max(int(x), 1)))

    def tail_bounds(self, x: int) -> tuple[float, float]:
        """Integral sandwich ``[∫_x^∞, x^{-(1+a)} + ∫_x^∞]`` for the tail sum."""
        x = float(max(int(x), 1))
        integral = x ** (-self.alpha) / self.alpha
        return integral, integral + x ** (-(1.0 + self.alpha))

    def sample_tail(self, rng, size, zmin):
        return sample_power_tail(rng, size, zmin, self.alpha)

    @property
    def tail_constant_limit(self):
        return 1.0 / self.alpha


@dataclass(frozen=True)
class QZeroRate(TransitionRate):
    """``q0(z) = |z|^{-alpha} - (|z|+1)^{-alpha}``; the tail sums telescope."""

    def __post_init__(self):
        object.__setattr__(self, "kind", "q_zero")
        object.__setattr__(self, "alpha", _check_alpha(self.alpha))

    def _positive(self, z):
        zf = z.astype(float)
        return zf ** (-self.alpha) * -np.expm1(-self.alpha * np.log1p(1.0 / zf))

    def tail_sum(self, x: int) -> float:
        return float(max(int(x), 1)) ** (-self.alpha)

    def sample_tail(self, rng, size, zmin):
        # floor of a Pareto(zmin, alpha) variable has exactly this law
        x = zmin * (1.0 - rng.random(size)) ** (-1.0 / self.alpha)
        return np.floor(np.minimum(x, float(MAX_JUMP))).astype(np.int64)

    @property
    def tail_constant_limit(self):
        return 1.0


@dataclass(frozen=True)
class LacunaryRate(TransitionRate):
    """Rate supported on anchors ``z_1 = 1 < z_2 < ...``.

    ``p(±z_l) = z_l^{-alpha} - z_{l+1}^{-alpha}``. ``anchors`` is either an
    integer exponent ``k`` (anchors ``l^k``, the default ``k = 2``) or an
    explicit increasing array; with an explicit array the last anchor only
    closes the telescoping sum, so the support stops one anchor earlier.
    """

    anchors: int | tuple = 2

    def __post_init__(self):
        object.__setattr__(self, "kind", "lacunary")
        object.__setattr__(self, "alpha", _check_alpha(self.alpha))
        a = self.anchors
        if isinstance(a, (int, np.integer)):
            if a < 1:
                raise ParameterError("anchor exponent must be a positive integer")
            object.__setattr__(self, "anchors", int(a))
            return
        arr = np.asarray(a, dtype=np.int64).ravel()
        if arr.size < 2:
            raise ParameterError("an explicit anchor list needs at least two entries")
        if arr[0] != 1:
            raise ParameterError("the first anchor must be 1 so that p(1) > 0")
        if np.any(np.diff(arr) <= 0):
            raise ParameterError("anchors must be strictly increasing")
        object.__setattr__(self, "anchors", tuple(int(v) for v in arr))

    @property
    def _power(self) -> int | None:
        return self.anchors if isinstance(self.anchors, int) else None

    def anchor(self, idx) -> np.ndarray:
        """``z_l`` for 1-based ``l`` (vectorised)."""
        idx = np.asarray(idx, dtype=np.int64)
        if self._power is not None:
            return idx**self._power
        arr = np.asarray(self.anchors, dtype=np.int64)
        return arr[idx - 1]

    def _first_anchor_index_at_least(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.int64)
        k = self._power
        if k is not None:
            l = np.ceil(x.astype(float) ** (1.0 / k)).astype(np.int64)
            l = np.maximum(l, 1)
            # repair float rounding on perfect powers
            l = np.where((l - 1) ** k >= x, l - 1, l)
            l = np.where(l**k < x, l + 1, l)
            return np.maximum(l, 1)
        arr = np.asarray(self.anchors, dtype=np.int64)
        return np.searchsorted(arr, x, side="left") + 1

    def _positive(self, z):
        l = self._first_anchor_index_at_least(z)
        if self._power is None:
            m = len(self.anchors)
            valid = l <= m - 1
            lc = np.minimum(l, m - 1)
            on = valid & (self.anchor(lc) == z)
            nxt = self.anchor(np.minimum(lc + 1, m))
        else:
            on = self.anchor(l) == z
            nxt = self.anchor(l + 1)
        za = z.astype(float)
        val = za ** (-self.alpha) - nxt.astype(float) ** (-self.alpha)
        return np.where(on, val, 0.0)

    def tail_sum(self, x: int) -> float:
        x = max(int(x), 1)
        l = int(self._first_anchor_index_at_least(np.array([x]))[0])
        if self._power is not None:
            return float(self.anchor(l)) ** (-self.alpha)
        m = len(self.anchors)
        if l > m - 1:
            return 0.0
        return float(self.anchors[l - 1]) ** (-self.alpha) - float(self.anchors[-1]) ** (-self.alpha)

    def sample_tail(self, rng, size, zmin):
        if self._power is None:
            raise SamplingDomainError("explicit anchor lists have no tail beyond the last anchor")
        l0 = int(self._first_anchor_index_at_least(np.array([zmin]))[0])
        z0 = float(self.anchor(l0))
        # X Pareto on [z_{l0}, inf): P(z_l <= X < z_{l+1}) = z0^a (z_l^-a - z_{l+1}^-a)
        x = z0 * (1.0 - rng.random(size)) ** (-1.0 / self.alpha)
        x = np.minimum(x, float(MAX_JUMP))
        l = np.floor(x ** (1.0 / self._power)).astype(np.int64)
        zl = l**self._power
        l = np.where(zl > x, l - 1, l)
        l = np.where((l + 1) ** self._power <= x, l + 1, l)
        return np.maximum(l, l0) ** self._power

    @property
    def tail_constant_limit(self):
        return 1.0 if self._power is not None else None

    @property
    def in_dan(self):
        return self._power is not None

    @property
    def support_max(self):
        if self._power is not None:
            return math.inf
        return float(self.anchors[-2])

    def describe(self):
        a = f"l^{self._power}" if self._power is not None else f"{len(self.anchors)} anchors"
        return f"lacunary(alpha={self.alpha}, anchors={a})"


@dataclass(frozen=True)
class TableRate(TransitionRate):
    """Rate given by its values ``p(1..H)`` plus a declared tail rule.

    ``tail="zero"``: ``p(z) = 0`` beyond ``H`` (flagged as outside DAN).
    ``tail="power"``: ``p(z) = p(H) (H/z)^{1+alpha}`` beyond ``H``.
    ``tail=None``: undeclared; dynamics treat it as zero, but tail sums and
    sampling beyond ``H`` are refused.
    """

    table: tuple = ()
    tail: str | None = "zero"
    rtol: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "kind", "table")
        vals = np.asarray(self.table, dtype=float).ravel()
        if vals.size == 0:
            raise ParameterError("empty rate table")
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ParameterError("rate table entries must be finite and nonnegative")
        object.__setattr__(self, "table", tuple(vals.tolist()))
        if self.tail not in ("zero", "power", None):
            raise ParameterError(f"unknown tail rule {self.tail!r}")
        if self.tail == "power":
            _check_alpha(self.alpha)
            if vals[-1] <= 0:
                raise ParameterError("power-law tail extension needs p(H) > 0")
        if self.alpha is not None:
            object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def horizon(self) -> int:
        return len(self.table)

    @property
    def _arr(self) -> np.ndarray:
        return np.asarray(self.table)

    def _positive(self, z):
        h = self.horizon
        out = np.zeros(z.shape)
        inside = z <= h
        out[inside] = self._arr[z[inside] - 1]
        if self.tail == "power" and (~inside).any():
            out[~inside] = self._arr[-1] * (h / z[~inside].astype(float)) ** (1.0 + self.alpha)
        return out

    def _remainder_bracket(self, x: int) -> tuple[float, float]:
        """Bracket for ``sum_{y >= max(x, H+1)}`` of the power extension."""
        h = self.horizon
        x0 = max(x, h + 1)
        scale = self._arr[-1] * h ** (1.0 + self.alpha)
        integral = x0 ** (-self.alpha) / self.alpha
        return scale * integral, scale * (integral + x0 ** (-(1.0 + self.alpha)))

    def tail_sum(self, x: int) -> float:
        x = max(int(x), 1)
        h = self.horizon
        partial = float(self._arr[x - 1 :].sum()) if x <= h else 0.0
        if self.tail == "zero":
            return partial
        if self.tail is None:
            raise AccuracyError(f"table tail beyond horizon {h} is undeclared", math.inf)
        lo, hi = self._remainder_bracket(x)
        value = partial + 0.5 * (lo + hi)
        half_width = 0.5 * (hi - lo)
        if value > 0 and half_width / value > self.rtol:
            raise AccuracyError(
                f"table horizon {h} too short for relative accuracy {self.rtol:g} at x={x}", half_width
            )
        return value

    def tail_sum_exact(self, x: int) -> float:
        """Tail sum with the power extension summed by Hurwitz zeta (no accuracy check)."""
        if self.tail != "power":
            return self.tail_sum(x)
        x = max(int(x), 1)
        h = self.horizon
        partial = float(self._arr[x - 1 :].sum()) if x <= h else 0.0
        scale = self._arr[-1] * h ** (1.0 + self.alpha)
        return partial + scale * float(zeta(1.0 + self.alpha, max(x, h + 1)))

    def total_rate(self) -> float:
        if self.tail is None:
            return 2.0 * float(self._arr.sum())
        return 2.0 * self.tail_sum_exact(1)

    def sample_tail(self, rng, size, zmin):
        if self.tail == "power":
            return sample_power_tail(rng, size, max(zmin, self.horizon + 1), self.alpha)
        raise SamplingDomainError(
            f"table rate with tail={self.tail!r} cannot be sampled beyond its horizon {self.horizon}"
        )

    @property
    def in_dan(self):
        return self.tail == "power"

    @property
    def support_max(self):
        if self.tail == "power":
            return math.inf
        nz = np.nonzero(self._arr > 0)[0]
        return float(nz[-1] + 1) if nz.size else 0.0

    @property
    def tail_constant_limit(self):
        if self.tail == "power":
            return self._arr[-1] * self.horizon ** (1.0 + self.alpha) / self.alpha
        return None

    def describe(self):
        return f"table(H={self.horizon}, tail={self.tail}, alpha={self.alpha})"


# --------------------------------------------------------------------------
# constructors
# --------------------------------------------------------------------------


def make_power_law(alpha: float) -> PowerLawRate:
    return PowerLawRate(alpha)


def make_q_zero(alpha: float) -> QZeroRate:
    return QZeroRate(alpha)


def make_lacunary(alpha: float, anchors=2) -> LacunaryRate:
    return LacunaryRate(alpha, anchors)


def make_table(values, tail: str | None = "zero", alpha: float | None = None) -> TableRate:
    return TableRate(alpha, tuple(np.asarray(values, dtype=float).ravel()), tail)


def nearest_neighbor(rate: float = 1.0) -> TableRate:
    """``p(±1) = rate``, zero elsewhere."""
    return make_table([rate], tail="zero")


def constant_rate(value: float, zmax: int) -> TableRate:
    """``p(z) = value`` for ``1 <= |z| <= zmax``: the complete graph on a box of radius ``zmax/2``."""
    return make_table(np.full(zmax, float(value)), tail="zero")


class RateTableError(ParameterError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


def load_rate_table(path, tail: str | None = "zero", alpha: float | None = None) -> TableRate:
    """Read a two-column ``z p(z)`` text file (whitespace or comma separated).

    Only positive ``z`` may appear; the negative side follows by symmetry.
    Missing ``z`` up to the largest listed one are zero. ``#`` starts a comment.
    """
    entries: dict[int, float] = {}
    with open(Path(path)) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 2:
                raise RateTableError(path, lineno, f"expected 2 columns, found {len(parts)}")
            try:
                zf = float(parts[0])
                val = float(parts[1])
            except ValueError:
                raise RateTableError(path, lineno, f"not a number: {line!r}") from None
            if zf != int(zf) or int(zf) <= 0:
                raise RateTableError(path, lineno, f"z must be a positive integer, got {parts[0]}")
            if not math.isfinite(val) or val < 0:
                raise RateTableError(path, lineno, f"p(z) must be finite and nonnegative, got {parts[1]}")
            z = int(zf)
            if z in entries:
                raise RateTableError(path, lineno, f"duplicate entry for z={z}")
            entries[z] = val
    if not entries:
        raise RateTableError(path, 0, "no data rows")
    vals = np.zeros(max(entries))
    for z, v in entries.items():
        vals[z - 1] = v
    return make_table(vals, tail=tail, alpha=alpha)


def tail_constant(p: TransitionRate, x: int, alpha: float | None = None) -> float:
    """``x^alpha * sum_{y >= x} p(y)``; tends to the DAN constant ``c``."""
    x = int(x)
    if x < 1:
        raise ParameterError("tail_constant needs x >= 1")
    a = p.alpha if alpha is None else alpha
    if a is None:
        raise ParameterError(f"{p.describe()} carries no stability index; pass alpha")
    return float(x) ** a * p.tail_sum(x)


def check_rate(p: TransitionRate, zmax: int = 4096) -> dict:
    """Structural diagnostics: symmetry, ``p(0)``, ``p(1)`` and the total rate."""
    z = np.arange(1, zmax + 1)
    sym = float(np.max(np.abs(p(z) - p(-z)))) if zmax else 0.0
    return {
        "symmetric": sym == 0.0,
        "p0": p(0),
        "p1": p(1),
        "total_rate": p.total_rate(),
        "in_dan": p.in_dan,
    }


# --------------------------------------------------------------------------
# subpolynomial functions
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SubpolynomialFunction:
    """Values ``phi(1..N)`` of a nonnegative weight, with an optional claimed ``K``."""

    values: np.ndarray
    K: float | None = None
    name: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ParameterError("phi must be finite and nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def nu(self) -> float:
        if self.K is None:
            raise ParameterError("nu needs a claimed constant K")
        return 1.0 + math.log(self.K) / math.log(2.0)

    def __call__(self, x):
        return self.values[np.asarray(x) - 1]

    def padded(self, n: int) -> SubpolynomialFunction:
        """Extend by zeros (or truncate) to ``{1..n}``."""
        v = np.zeros(n)
        m = min(n, self.N)
        v[:m] = self.values[:m]
        return SubpolynomialFunction(v, self.K, self.name)

    @classmethod
    def from_callable(cls, fn, n: int, K: float | None = None, name: str = ""):
        return cls(np.asarray(fn(np.arange(1, n + 1)), dtype=float), K, name)


@dataclass(frozen=True)
class SubpolyVerdict:
    passed: bool
    K: float
    N: int
    witness: tuple[int, int] | None = None

    def __bool__(self):
        return self.passed


@dataclass(frozen=True)
class PowerBoundVerdict:
    passed: bool
    K: float
    nu: float
    worst_ratio: float
    worst_x: int

    def __bool__(self):
        return self.passed


# floating-point slack for the pair test; exact integer cases never hit it
SUBPOLY_RTOL = 1e-12


def _window(phi: SubpolynomialFunction, N: int | None) -> np.ndarray:
    N = phi.N if N is None else int(N)
    if N > phi.N:
        raise ParameterError(f"phi is defined on 1..{phi.N}, asked for 1..{N}")
    return np.ascontiguousarray(phi.values[:N])


def check_subpolynomial(phi: SubpolynomialFunction, K: float, N: int | None = None) -> SubpolyVerdict:
    """Exhaustive test of ``phi(x+y) <= K (phi(x) + phi(y))`` for ``x + y <= N``.

    Pairs are scanned with ``x <= y``, ``x`` ascending then ``y`` ascending; the
    first failing pair is returned as the witness.
    """
    v = _window(phi, N)
    x, y = _kernels.subpoly_first_violation(v, float(K), SUBPOLY_RTOL)
    if x < 0:
        return SubpolyVerdict(True, float(K), v.shape[0])
    return SubpolyVerdict(False, float(K), v.shape[0], (int(x), int(y)))


def sharp_subpolynomial_constant(phi: SubpolynomialFunction, N: int | None = None) -> float:
    """Smallest ``K`` that passes :func:`check_subpolynomial` on ``{1..N}``."""
    return float(_kernels.subpoly_sharp_constant(_window(phi, N)))


def lemma1_bound_check(phi: SubpolynomialFunction, K: float, N: int | None = None) -> PowerBoundVerdict:
    """Check ``phi(x) <= 2 K phi(1) x^nu`` with ``nu = 1 + log K / log 2``."""
    if K < 0.5:
        raise ParameterError("the power bound needs K >= 1/2")
    pre = check_subpolynomial(phi, K, N)
    if not pre:
        raise ContractError(f"phi is not {K}-subpolynomial on 1..{pre.N}; first violation at {pre.witness}")
    v = _window(phi, N)
    nu = 1.0 + math.log(K) / math.log(2.0)
    x = np.arange(1, v.shape[0] + 1, dtype=float)
    bound = 2.0 * K * v[0] * x**nu
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, v / np.where(bound > 0, bound, 1.0), np.where(v > 0, np.inf, 0.0))
    worst = int(np.argmax(ratio))
    return PowerBoundVerdict(bool(np.all(v <= bound * (1.0 + SUBPOLY_RTOL))), float(K), nu, float(ratio[worst]), worst + 1)
