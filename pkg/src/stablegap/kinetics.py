"""Return probabilities of the continuous-time walk started at the origin.

Exact values come from uniformization on the box ``{-L..L}`` with killing at
the boundary: ``f_t = sum_k Poisson(gamma t; k) v_k`` where ``v_{k+1}`` is
``v_k`` pushed through the jump kernel ``p(y - x) / gamma`` restricted to the
box. Mass that jumps out is tracked separately as ``leaked_mass``. The killed
semigroup is still symmetric, so ``sum_x f_t(x)^2 = f_{2t}(0)`` holds exactly
for it.

Monte Carlo values come from simulating jump counts and displacements.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft
from scipy.stats import poisson

from . import _kernels
from .errors import (
    AccuracyError,
    AlignmentError,
    ParameterError,
    SamplingDomainError,
    StepSizeError,
    TruncationError,
)
from .rates import MAX_JUMP, TableRate, TransitionRate
from .spectrum import build_walk_generator, fit_loglog, spectral_gap

DEFAULT_SEED = 20240229
SERIES_TOL = 1e-13
# Monte Carlo walkers per RNG task; fixed so results do not depend on worker count
MC_CHUNK = 2000
DEFAULT_ZMAX = 1 << 16


def default_box_radius(alpha: float | None) -> int:
    """2048 for ``alpha >= 1``; heavier tails need a much wider box (see notes)."""
    if alpha is None or alpha >= 1.0:
        return 2048
    return 1 << 17


# --------------------------------------------------------------------------
# exact evolution
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SemigroupState:
    box_radius: int
    values: np.ndarray = field(repr=False)
    time: float
    leaked_mass: float
    series_error: float = 0.0
    clamped: float = 0.0
    rate: TransitionRate | None = field(default=None, repr=False)

    @property
    def sites(self) -> np.ndarray:
        return np.arange(-self.box_radius, self.box_radius + 1)

    def at(self, x: int) -> float:
        return float(self.values[x + self.box_radius])

    @property
    def mass(self) -> float:
        return float(self.values.sum())

    @property
    def origin(self) -> float:
        return self.at(0)


def _exact_tail(p: TransitionRate, x: int) -> float:
    """``sum_{z >= x} p(z)``; undeclared table tails count as zero beyond the horizon."""
    if isinstance(p, TableRate):
        if p.tail is None:
            if x > p.horizon:
                return 0.0
            return float(np.sum(p.values(p.horizon)[x - 1 :]))
        return p.tail_sum_exact(x)
    return p.tail_sum(x)


def _box_tails(p: TransitionRate, dmax: int) -> tuple[np.ndarray, np.ndarray]:
    """``p(0..dmax)`` and ``T(d) = sum_{z >= d} p(z)`` for ``d = 0..dmax+1``."""
    vals = np.concatenate(([0.0], p.values(dmax)))
    beyond = _exact_tail(p, dmax + 1)
    tails = np.empty(dmax + 2)
    tails[-1] = beyond
    tails[:-1] = beyond + np.cumsum(vals[::-1])[::-1]
    return vals, tails


@dataclass(frozen=True, eq=False)
class _BoxKernel:
    L: int
    gamma: float
    nfft: int
    kernel_hat: np.ndarray
    exit_prob: np.ndarray  # probability a jump from x leaves the box
    pvals: np.ndarray


def _box_kernel(p: TransitionRate, L: int) -> _BoxKernel:
    if L < 1:
        raise ParameterError("box radius must be >= 1")
    size = 2 * L + 1
    pv, tails = _box_tails(p, 2 * L)
    gamma = p.total_rate()
    if not gamma > 0 or not math.isfinite(gamma):
        raise ParameterError("total jump rate must be finite and positive")
    kern = np.concatenate((pv[::-1], pv[1:])) / gamma  # displacement -2L..2L
    nfft = sfft.next_fast_len(size + kern.size - 1, real=True)
    x = np.arange(-L, L + 1)
    exit_prob = (tails[L - x + 1] + tails[L + x + 1]) / gamma
    return _BoxKernel(L, gamma, nfft, sfft.rfft(kern, nfft), exit_prob, pv)


def _step(k: _BoxKernel, v: np.ndarray) -> np.ndarray:
    full = sfft.irfft(sfft.rfft(v, k.nfft) * k.kernel_hat, k.nfft)
    return full[2 * k.L : 4 * k.L + 1]


def evolve_grid(p: TransitionRate, times, L_box: int | None = None, tol: float = SERIES_TOL,
                leak_budget: float | None = None) -> list[SemigroupState]:
    """States at every time in ``times`` from one uniformization pass."""
    ts = np.asarray(times, dtype=float).ravel()
    if ts.size == 0:
        return []
    if np.any(ts < 0) or not np.all(np.isfinite(ts)):
        raise ParameterError("times must be finite and >= 0")
    L = default_box_radius(p.alpha) if L_box is None else int(L_box)
    k = _box_kernel(p, L)
    size = 2 * L + 1
    lam = k.gamma * ts
    kmax = int(poisson.isf(tol, lam.max())) + 1 if lam.max() > 0 else 0
    steps = np.arange(kmax + 1)
    weights = poisson.pmf(steps[None, :], lam[:, None])  # (times, steps)
    series_err = np.clip(1.0 - weights.sum(axis=1), 0.0, None)

    acc = np.zeros((ts.size, size))
    leaked = np.zeros(ts.size)
    v = np.zeros(size)
    v[L] = 1.0
    escaped = 0.0  # mass of the jump chain that has left the box
    clamped = 0.0
    for j in steps:
        acc += weights[:, j : j + 1] * v[None, :]
        leaked += weights[:, j] * escaped
        if j == kmax:
            break
        escaped += float(k.exit_prob @ v)
        v = _step(k, v)
        neg = v < 0
        if neg.any():
            low = float(v[neg].min())
            if low < -1e-14:
                raise AccuracyError("FFT convolution produced a negative probability", -low)
            clamped += float(-v[neg].sum())
            v[neg] = 0.0
    states = []
    for i, t in enumerate(ts):
        if leak_budget is not None and leaked[i] > leak_budget:
            raise TruncationError(f"box radius {L} too small at t = {t:g}; enlarge L_box", float(leaked[i]))
        vals = acc[i]
        vals.setflags(write=False)
        states.append(SemigroupState(L, vals, float(t), float(leaked[i]), float(series_err[i]), clamped, p))
    return states


def evolve_semigroup(p: TransitionRate, t: float, L_box: int | None = None, tol: float = SERIES_TOL,
                     leak_budget: float | None = None) -> SemigroupState:
    """``f_t = P_t(0, .)`` on the box by uniformization."""
    return evolve_grid(p, [t], L_box, tol, leak_budget)[0]


def psi_functional(state: SemigroupState) -> float:
    """``psi(t) = sum_x f_t(x)^2``."""
    return float(state.values @ state.values)


# --------------------------------------------------------------------------
# dissipation
# --------------------------------------------------------------------------


def dirichlet_double_sum(p: TransitionRate, values, L_box: int | None = None, kernel: _BoxKernel | None = None) -> float:
    """``sum_{x,y in box} p(y - x) (f(y) - f(x))^2`` via one FFT convolution."""
    f = np.asarray(values, dtype=float)
    L = (f.size - 1) // 2 if L_box is None else int(L_box)
    k = kernel or _box_kernel(p, L)
    inbox = 1.0 - k.exit_prob  # in-box jump probability from each site
    conv = _step(k, f)  # sum_y p(y - x) f(y) / gamma
    return 2.0 * k.gamma * float(f @ (f * inbox) - f @ conv)


def killing_term(p: TransitionRate, values, kernel: _BoxKernel | None = None) -> float:
    """``2 sum_x f(x)^2 kappa(x)`` with ``kappa`` the rate of leaving the box."""
    f = np.asarray(values, dtype=float)
    k = kernel or _box_kernel(p, (f.size - 1) // 2)
    return 2.0 * k.gamma * float(f @ (f * k.exit_prob))


def dissipation_rate(p: TransitionRate, values, prefactor: float = -1.0) -> float:
    """``d psi / dt`` on the killed box: ``prefactor * double sum - killing term``."""
    f = np.asarray(values, dtype=float)
    k = _box_kernel(p, (f.size - 1) // 2)
    return prefactor * dirichlet_double_sum(p, f, kernel=k) - killing_term(p, f, kernel=k)


@dataclass(frozen=True)
class DissipationVerdict:
    time: float
    dt: float
    finite_difference: float
    predicted: float
    double_sum: float
    killing: float
    fitted_prefactor: float
    relative_error: float
    tolerance: float
    scheme: str

    @property
    def passed(self) -> bool:
        return self.relative_error <= self.tolerance

    def __bool__(self):
        return self.passed


def psi_dissipation_check(p: TransitionRate, state: SemigroupState, dt: float, rtol: float = 1e-5,
                          tol: float = SERIES_TOL) -> DissipationVerdict:
    """Finite-difference ``d psi/dt`` against the box dissipation with prefactor ``-1``.

    Centered differences are used when ``t >= dt``; otherwise a fourth-order
    one-sided stencil. ``fitted_prefactor`` is the value of ``c`` that makes
    ``c * double_sum - killing`` match the finite difference exactly.
    """
    dt = float(dt)
    gamma = p.total_rate()
    if not dt > 0:
        raise StepSizeError("dt must be positive")
    if dt * gamma > 0.1:
        raise StepSizeError(f"dt * gamma = {dt * gamma:.3g} exceeds 0.1; shrink dt")
    t, L = state.time, state.box_radius
    if t >= dt:
        a, b = evolve_grid(p, [t - dt, t + dt], L, tol)
        fd = (psi_functional(b) - psi_functional(a)) / (2.0 * dt)
        scheme = "centered"
    else:
        psi = [psi_functional(s) for s in evolve_grid(p, [t + i * dt for i in range(5)], L, tol)]
        fd = (-25.0 * psi[0] + 48.0 * psi[1] - 36.0 * psi[2] + 16.0 * psi[3] - 3.0 * psi[4]) / (12.0 * dt)
        scheme = "one-sided"
    k = _box_kernel(p, L)
    dsum = dirichlet_double_sum(p, state.values, kernel=k)
    kill = killing_term(p, state.values, kernel=k)
    predicted = -dsum - kill
    fitted = (fd + kill) / dsum if dsum > 0 else math.nan
    rel = abs(fd - predicted) / max(abs(predicted), 1e-300)
    return DissipationVerdict(t, dt, fd, predicted, dsum, kill, fitted, rel, rtol, scheme)


# --------------------------------------------------------------------------
# block decomposition
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockVerdict:
    n: int
    gap: float
    lhs: np.ndarray = field(repr=False)
    rhs: np.ndarray = field(repr=False)
    dirichlet_total: float = 0.0

    @property
    def holds(self) -> bool:
        return bool(np.all(self.lhs <= self.rhs * (1.0 + 1e-10) + 1e-300))

    def __bool__(self):
        return self.holds


def _block_gap(p: TransitionRate, n: int, kappa1: float | None) -> float:
    if kappa1 is not None:
        return kappa1 * (2 * n + 1) ** (-(p.alpha if p.alpha is not None else 0.0))
    return spectral_gap(build_walk_generator(p, n)).gap


def block_projection_bound(state: SemigroupState, n: int, kappa1: float | None = None,
                           gap: float | None = None) -> BlockVerdict:
    """Poincare inequality on every width-``(2n+1)`` block tiling the box.

    Per block: ``sum f^2 <= gap^{-1} * (1/2) D_block(f) + mass^2 / (2n+1)``
    with ``D_block`` the in-block double sum. The gap is the computed one on
    ``Lambda_n`` unless ``gap`` or a lower-bound constant ``kappa1`` is given.
    """
    p = state.rate
    if p is None:
        raise ParameterError("state does not carry its rate")
    w = 2 * int(n) + 1
    size = state.values.size
    if n < 1 or size % w:
        raise AlignmentError(f"blocks of width {w} do not tile a box of {size} sites")
    lam = gap if gap is not None else _block_gap(p, n, kappa1)
    blocks = state.values.reshape(-1, w)
    pv = np.concatenate(([0.0], p.values(w - 1)))
    kern = pv[np.abs(np.arange(w)[:, None] - np.arange(w)[None, :])]
    diff2 = (blocks[:, None, :] - blocks[:, :, None]) ** 2
    dblock = np.einsum("ij,bij->b", kern, diff2)
    lhs = np.sum(blocks**2, axis=1)
    rhs = 0.5 * dblock / lam + blocks.sum(axis=1) ** 2 / w
    return BlockVerdict(int(n), float(lam), lhs, rhs, float(dblock.sum()))


@dataclass(frozen=True)
class EnvelopeRow:
    time: float
    psi: float
    best_n: int
    bound: float
    dissipation: float
    ratio: float


def dissipation_envelope(p: TransitionRate, states, n_values=None, kappa1: float | None = None,
                         gaps: dict | None = None) -> list[EnvelopeRow]:
    """Lower bound on ``-d psi/dt`` optimised over the block size, per state.

    From the block inequality, ``-d psi/dt >= 2 gap_n (psi - 1/(2n+1))``. With
    ``kappa1`` the gap is replaced by ``kappa1 (2n+1)^{-alpha}`` and every
    ``n`` up to the box radius is tried; otherwise gaps are computed for
    ``n_values``. ``ratio = bound / psi^{1+alpha}``.
    """
    alpha = p.alpha if p.alpha is not None else 0.0
    if kappa1 is not None:
        radius = max(s.box_radius for s in states)
        ns = np.arange(1, radius + 1) if n_values is None else np.asarray(list(n_values))
        lam = kappa1 * (2.0 * ns + 1.0) ** (-alpha)
    else:
        if n_values is None:
            raise ParameterError("n_values is required when kappa1 is not given")
        gaps = dict(gaps or {})
        ns = np.asarray(list(n_values))
        for n in ns:
            if int(n) not in gaps:
                gaps[int(n)] = spectral_gap(build_walk_generator(p, int(n))).gap
        lam = np.array([gaps[int(n)] for n in ns])
    rows = []
    for s in states:
        psi = psi_functional(s)
        cand = 2.0 * lam * (psi - 1.0 / (2.0 * ns + 1.0))
        k = int(np.argmax(cand))
        bound = max(float(cand[k]), 0.0)  # no block size beats psi: only the trivial bound
        actual = -dissipation_rate(p, s.values)
        rows.append(EnvelopeRow(s.time, psi, int(ns[k]), bound, actual, bound / psi ** (1.0 + alpha)))
    return rows


# --------------------------------------------------------------------------
# Monte Carlo
# --------------------------------------------------------------------------


def _alias_table(weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vose alias table for a probability vector."""
    m = weights.size
    scaled = weights * (m / weights.sum())
    prob = np.zeros(m)
    alias = np.zeros(m, dtype=np.int64)
    small = [i for i in range(m) if scaled[i] < 1.0]
    large = [i for i in range(m) if scaled[i] >= 1.0]
    while small and large:
        s, l = small.pop(), large.pop()
        prob[s] = scaled[s]
        alias[s] = l
        scaled[l] -= 1.0 - scaled[s]
        (small if scaled[l] < 1.0 else large).append(l)
    for i in large + small:
        prob[i] = 1.0
        alias[i] = i
    return prob, alias


@dataclass(frozen=True, eq=False)
class JumpSampler:
    """Draws ``|Z|`` from ``p / (gamma/2)``: alias over ``1..zmax`` plus an exact tail."""

    rate: TransitionRate
    zmax: int
    prob: np.ndarray = field(repr=False)
    alias: np.ndarray = field(repr=False)
    tail_mass: float = 0.0

    @classmethod
    def build(cls, p: TransitionRate, zmax: int | None = None) -> JumpSampler:
        if isinstance(p, TableRate) and not math.isfinite(p.support_max):
            zmax = max(zmax or 0, p.horizon)
        elif isinstance(p, TableRate):
            if zmax is not None and zmax > p.horizon and p.tail is None:
                raise SamplingDomainError(f"Z_max = {zmax} lies beyond the table horizon {p.horizon} with undeclared tail")
            zmax = p.horizon if zmax is None else min(zmax, p.horizon)
        else:
            zmax = DEFAULT_ZMAX if zmax is None else int(zmax)
        vals = p.values(zmax)
        half = 0.5 * p.total_rate()
        tail = _exact_tail(p, zmax + 1) if p.has_sampler_tail else 0.0
        w = np.concatenate((vals, [tail]))
        prob, alias = _alias_table(w / w.sum())
        return cls(p, int(zmax), prob, alias, tail / half)

    def sample(self, rng: np.random.Generator, size: int, kernels=None) -> np.ndarray:
        ker = kernels or _kernels
        m = self.prob.size
        u_col = rng.random(size)
        coin = rng.random(size)
        idx = ker.alias_lookup(u_col, coin, self.prob, self.alias)
        z = idx + 1
        in_tail = idx == m - 1
        if self.tail_mass > 0:
            k = int(in_tail.sum())
            if k:
                z[in_tail] = self.rate.sample_tail(rng, k, self.zmax + 1)
        z = np.minimum(z, MAX_JUMP)
        sign = rng.integers(0, 2, size) * 2 - 1
        return z * sign


@dataclass(frozen=True)
class MCResult:
    times: tuple
    values: tuple
    stderr: tuple
    samples: int
    seed: int


def _mc_task(sampler: JumpSampler, gamma: float, dts: np.ndarray, walkers: int, seed_seq, kernels):
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    counts = rng.poisson(gamma * dts[None, :], size=(walkers, dts.size)).astype(np.int64)
    disp = sampler.sample(rng, int(counts.sum()), kernels)
    sums = kernels.segment_sums(counts.ravel(), disp).reshape(walkers, dts.size)
    pos = np.cumsum(sums, axis=1)
    return np.sum(pos == 0, axis=0)


def mc_return_probability(p: TransitionRate, times, samples: int, seed: int = DEFAULT_SEED,
                          zmax: int | None = None, workers: int | None = None,
                          backend: str | None = None) -> MCResult:
    """Fraction of simulated walkers at the origin at each time, with binomial errors.

    Walkers are split into fixed chunks; chunk ``i`` uses the ``i``-th child of
    ``SeedSequence(seed)``, so the estimate depends only on ``(seed, samples)``.
    """
    samples = int(samples)
    if samples < 1:
        raise ParameterError("samples must be >= 1")
    ts = np.asarray(times, dtype=float).ravel()
    if np.any(ts < 0) or np.any(np.diff(ts) < 0):
        raise ParameterError("times must be nonnegative and nondecreasing")
    kernels = _kernels.get_kernels(backend)
    sampler = JumpSampler.build(p, zmax)
    gamma = p.total_rate()
    dts = np.diff(np.concatenate(([0.0], ts)))
    sizes = [MC_CHUNK] * (samples // MC_CHUNK) + ([samples % MC_CHUNK] if samples % MC_CHUNK else [])
    children = np.random.SeedSequence(int(seed)).spawn(len(sizes))
    args = list(zip(sizes, children))
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            hits = list(ex.map(lambda a: _mc_task(sampler, gamma, dts, a[0], a[1], kernels), args))
    else:
        hits = [_mc_task(sampler, gamma, dts, n, c, kernels) for n, c in args]
    est = np.sum(hits, axis=0) / samples
    se = np.sqrt(est * (1.0 - est) / samples)
    return MCResult(tuple(ts.tolist()), tuple(est.tolist()), tuple(se.tolist()), samples, int(seed))


# --------------------------------------------------------------------------
# fits
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayFit:
    times: tuple
    values: tuple
    slope: float
    intercept: float
    window: tuple


def decay_exponent_fit(times, values, window=(10.0, math.inf)) -> DecayFit:
    """Least-squares slope of ``log value`` against ``log t`` for ``t`` in ``window``."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    lo, hi = window
    idx = np.nonzero((t >= lo) & (t <= hi))[0]
    if idx.size < 3:
        raise ParameterError(f"need at least 3 points in the window [{lo}, {hi}], got {idx.size}")
    if np.any(v[idx] <= 0) or np.any(t[idx] <= 0):
        raise ParameterError("log-log fit needs positive times and values in the window")
    slope, intercept = fit_loglog(t[idx], v[idx])
    return DecayFit(tuple(t.tolist()), tuple(v.tolist()), slope, intercept, (int(idx[0]), int(idx[-1]) + 1))


@dataclass(frozen=True)
class ReturnRow:
    t: float
    exact_value: float
    mc_value: float
    mc_stderr: float
    leaked_mass: float

    def row(self) -> dict:
        return {
            "t": self.t,
            "exact_value": self.exact_value,
            "mc_value": self.mc_value,
            "mc_stderr": self.mc_stderr,
            "leaked_mass": self.leaked_mass,
        }


def return_probability_table(p: TransitionRate, times, samples: int, seed: int = DEFAULT_SEED,
                             L_box: int | None = None, workers: int | None = None) -> list[ReturnRow]:
    states = evolve_grid(p, times, L_box)
    if samples > 0:
        mc = mc_return_probability(p, times, samples, seed, workers=workers)
        mv, ms = mc.values, mc.stderr
    else:
        mv = ms = [math.nan] * len(states)
    return [ReturnRow(s.time, s.origin, m, e, s.leaked_mass) for s, m, e in zip(states, mv, ms)]
