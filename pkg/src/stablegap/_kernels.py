"""Hot inner loops, each in a numba and a pure-numpy flavour.

The loop versions are plain Python that numba compiles with ``@njit``; the
numpy versions vectorize the same computation. Which flavour the public names
point to is decided once at import time:

* ``STABLEGAP_DISABLE_NUMBA=1`` in the environment forces the numpy path;
* otherwise numba is used when it can be imported.

Both flavours are always reachable through :func:`get_kernels`, which is what
the benchmark and the cross-backend tests use. The two flavours consume
identical inputs (all randomness is drawn by the caller), so results agree
bit for bit up to floating-point summation order.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

_FLAG = os.environ.get("STABLEGAP_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _FLAG in {"1", "true", "yes", "on"}

try:  # pragma: no cover - depends on the environment
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLED
BACKEND = "numba" if USE_NUMBA else "numpy"


# --------------------------------------------------------------------------
# loop flavour (compiled by numba when available)
# --------------------------------------------------------------------------


def _loop_alias_lookup(u_col, u_coin, prob, alias):
    k_tot = prob.shape[0]
    out = np.empty(u_col.shape[0], dtype=np.int64)
    for i in range(u_col.shape[0]):
        k = int(u_col[i] * k_tot)
        if k >= k_tot:
            k = k_tot - 1
        if u_coin[i] < prob[k]:
            out[i] = k
        else:
            out[i] = alias[k]
    return out


def _loop_segment_sums(counts, disp):
    out = np.zeros(counts.shape[0], dtype=np.int64)
    pos = 0
    for i in range(counts.shape[0]):
        acc = 0
        for _ in range(counts[i]):
            acc += disp[pos]
            pos += 1
        out[i] = acc
    return out


def _loop_subpoly_first_violation(phi, k_const, rtol):
    n = phi.shape[0]
    for x in range(1, n // 2 + 1):
        for y in range(x, n - x + 1):
            if phi[x + y - 1] > k_const * (phi[x - 1] + phi[y - 1]) * (1.0 + rtol):
                return x, y
    return -1, -1


def _loop_subpoly_sharp_constant(phi):
    n = phi.shape[0]
    best = 0.0
    for x in range(1, n // 2 + 1):
        for y in range(x, n - x + 1):
            num = phi[x + y - 1]
            den = phi[x - 1] + phi[y - 1]
            if den > 0.0:
                r = num / den
            elif num > 0.0:
                return np.inf
            else:
                r = 0.0
            if r > best:
                best = r
    return best


def _loop_dirichlet_profile(f):
    n = f.shape[0]
    out = np.zeros(max(n - 1, 0))
    for k in range(1, n):
        acc = 0.0
        for i in range(n - k):
            d = f[i + k] - f[i]
            acc += d * d
        out[k - 1] = acc
    return out


def _loop_exclusion_rank(row, binom):
    n = row.shape[0]
    ones = 0
    for i in range(n):
        ones += row[i]
    r = 0
    for i in range(n):
        if row[i] == 1:
            r += binom[n - 1 - i, ones]
            ones -= 1
    return r


def _loop_exclusion_transitions(occ, pvals, binom):
    s_tot, n = occ.shape
    ell = 0
    for i in range(n):
        ell += occ[0, i]
    m = s_tot * ell * (n - ell)
    rows = np.empty(m, dtype=np.int64)
    cols = np.empty(m, dtype=np.int64)
    vals = np.empty(m)
    work = np.empty(n, dtype=occ.dtype)
    c = 0
    for s in range(s_tot):
        for x in range(n):
            if occ[s, x] != 1:
                continue
            for y in range(n):
                if occ[s, y] != 0:
                    continue
                rate = pvals[abs(y - x)]
                if rate <= 0.0:
                    continue
                for i in range(n):
                    work[i] = occ[s, i]
                work[x] = 0
                work[y] = 1
                rows[c] = s
                cols[c] = _loop_exclusion_rank(work, binom)
                vals[c] = rate
                c += 1
    return rows[:c], cols[:c], vals[:c]


def _loop_composition_rank(row, offsets):
    n = row.shape[0]
    rem = 0
    for i in range(n):
        rem += row[i]
    r = 0
    for i in range(n):
        r += offsets[i, rem, row[i]]
        rem -= row[i]
    return r


def _loop_zero_range_transitions(occ, gvals, pvals, offsets):
    s_tot, n = occ.shape
    m = s_tot * n * (n - 1)
    rows = np.empty(m, dtype=np.int64)
    cols = np.empty(m, dtype=np.int64)
    vals = np.empty(m)
    work = np.empty(n, dtype=occ.dtype)
    c = 0
    for s in range(s_tot):
        for x in range(n):
            k = occ[s, x]
            if k == 0:
                continue
            for y in range(n):
                if y == x:
                    continue
                rate = gvals[k] * pvals[abs(y - x)]
                if rate <= 0.0:
                    continue
                for i in range(n):
                    work[i] = occ[s, i]
                work[x] -= 1
                work[y] += 1
                rows[c] = s
                cols[c] = _loop_composition_rank(work, offsets)
                vals[c] = rate
                c += 1
    return rows[:c], cols[:c], vals[:c]


# --------------------------------------------------------------------------
# numpy flavour
# --------------------------------------------------------------------------


def _np_alias_lookup(u_col, u_coin, prob, alias):
    k_tot = prob.shape[0]
    k = np.minimum((u_col * k_tot).astype(np.int64), k_tot - 1)
    return np.where(u_coin < prob[k], k, alias[k]).astype(np.int64)


def _np_segment_sums(counts, disp):
    counts = np.asarray(counts, dtype=np.int64)
    out = np.zeros(counts.shape[0], dtype=np.int64)
    if disp.shape[0] == 0:
        return out
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    nz = counts > 0
    out[nz] = np.add.reduceat(disp, starts[nz])
    return out


def _np_subpoly_first_violation(phi, k_const, rtol):
    n = phi.shape[0]
    for x in range(1, n // 2 + 1):
        ys = np.arange(x, n - x + 1)
        bad = phi[x + ys - 1] > k_const * (phi[x - 1] + phi[ys - 1]) * (1.0 + rtol)
        if bad.any():
            return x, int(ys[np.argmax(bad)])
    return -1, -1


def _np_subpoly_sharp_constant(phi):
    n = phi.shape[0]
    best = 0.0
    for x in range(1, n // 2 + 1):
        ys = np.arange(x, n - x + 1)
        num = phi[x + ys - 1]
        den = phi[x - 1] + phi[ys - 1]
        if np.any((den == 0.0) & (num > 0.0)):
            return np.inf
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(den > 0.0, num / np.where(den > 0.0, den, 1.0), 0.0)
        best = max(best, float(r.max()))
    return best


def _np_dirichlet_profile(f):
    n = f.shape[0]
    out = np.zeros(max(n - 1, 0))
    for k in range(1, n):
        d = f[k:] - f[:-k]
        out[k - 1] = d @ d
    return out


def _np_exclusion_rank(occ, binom):
    occ = np.atleast_2d(occ).astype(np.int64)
    n = occ.shape[1]
    ones_from = np.cumsum(occ[:, ::-1], axis=1)[:, ::-1]
    pos = np.arange(n)
    return np.sum(occ * binom[n - 1 - pos, ones_from], axis=1)


def _np_exclusion_transitions(occ, pvals, binom):
    n = occ.shape[1]
    rows, cols, vals = [], [], []
    for x in range(n):
        for y in range(n):
            if x == y or pvals[abs(y - x)] <= 0.0:
                continue
            mask = (occ[:, x] == 1) & (occ[:, y] == 0)
            idx = np.nonzero(mask)[0]
            if idx.size == 0:
                continue
            moved = occ[idx].copy()
            moved[:, x] = 0
            moved[:, y] = 1
            rows.append(idx)
            cols.append(_np_exclusion_rank(moved, binom))
            vals.append(np.full(idx.size, pvals[abs(y - x)]))
    return _concat(rows, cols, vals)


def _np_composition_rank(occ, offsets):
    occ = np.atleast_2d(occ).astype(np.int64)
    n = occ.shape[1]
    rem = np.cumsum(occ[:, ::-1], axis=1)[:, ::-1]
    pos = np.arange(n)
    return np.sum(offsets[pos, rem, occ], axis=1)


def _np_zero_range_transitions(occ, gvals, pvals, offsets):
    n = occ.shape[1]
    rows, cols, vals = [], [], []
    for x in range(n):
        for y in range(n):
            if x == y or pvals[abs(y - x)] <= 0.0:
                continue
            idx = np.nonzero(occ[:, x] > 0)[0]
            if idx.size == 0:
                continue
            moved = occ[idx].copy()
            rate = gvals[moved[:, x]] * pvals[abs(y - x)]
            moved[:, x] -= 1
            moved[:, y] += 1
            keep = rate > 0.0
            rows.append(idx[keep])
            cols.append(_np_composition_rank(moved[keep], offsets))
            vals.append(rate[keep])
    return _concat(rows, cols, vals)


def _concat(rows, cols, vals):
    if not rows:
        return (np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0))
    return (
        np.concatenate(rows).astype(np.int64),
        np.concatenate(cols).astype(np.int64),
        np.concatenate(vals),
    )


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

_NAMES = (
    "alias_lookup",
    "segment_sums",
    "subpoly_first_violation",
    "subpoly_sharp_constant",
    "dirichlet_profile",
    "exclusion_transitions",
    "zero_range_transitions",
)

_NUMPY = SimpleNamespace(
    name="numpy",
    alias_lookup=_np_alias_lookup,
    segment_sums=_np_segment_sums,
    subpoly_first_violation=_np_subpoly_first_violation,
    subpoly_sharp_constant=_np_subpoly_sharp_constant,
    dirichlet_profile=_np_dirichlet_profile,
    exclusion_transitions=_np_exclusion_transitions,
    zero_range_transitions=_np_zero_range_transitions,
)

_NUMBA = None


def _build_numba():
    global _NUMBA
    if _NUMBA is None:
        jit = numba.njit(cache=True)
        rank_ex = jit(_loop_exclusion_rank)
        rank_comp = jit(_loop_composition_rank)
        # the transition loops call the rank helpers; rebind them to the jitted ones
        g = dict(globals(), _loop_exclusion_rank=rank_ex, _loop_composition_rank=rank_comp)
        ex = type(_loop_exclusion_transitions)(_loop_exclusion_transitions.__code__, g)
        zr = type(_loop_zero_range_transitions)(_loop_zero_range_transitions.__code__, g)
        _NUMBA = SimpleNamespace(
            name="numba",
            alias_lookup=jit(_loop_alias_lookup),
            segment_sums=jit(_loop_segment_sums),
            subpoly_first_violation=jit(_loop_subpoly_first_violation),
            subpoly_sharp_constant=jit(_loop_subpoly_sharp_constant),
            dirichlet_profile=jit(_loop_dirichlet_profile),
            exclusion_transitions=jit(ex),
            zero_range_transitions=jit(zr),
        )
    return _NUMBA


def get_kernels(backend: str | None = None) -> SimpleNamespace:
    """Return the kernel table for ``backend`` ("numba", "numpy", or the default)."""
    backend = backend or BACKEND
    if backend == "numpy":
        return _NUMPY
    if backend == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba is not installed")
        return _build_numba()
    raise ValueError(f"unknown kernel backend {backend!r}")


def available_backends() -> list[str]:
    return ["numba", "numpy"] if HAVE_NUMBA else ["numpy"]


_active = get_kernels(BACKEND)
alias_lookup = _active.alias_lookup
segment_sums = _active.segment_sums
subpoly_first_violation = _active.subpoly_first_violation
subpoly_sharp_constant = _active.subpoly_sharp_constant
dirichlet_profile = _active.dirichlet_profile
exclusion_transitions = _active.exclusion_transitions
zero_range_transitions = _active.zero_range_transitions

__all__ = ["BACKEND", "USE_NUMBA", "HAVE_NUMBA", "get_kernels", "available_backends", *_NAMES]
