"""Time each hot kernel under the numba and numpy backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

The first numba call compiles; it is done once before timing. Results from
both backends are compared so a speedup never hides a wrong answer.
"""

from __future__ import annotations

import argparse
import time

import numpy as np
import scipy.sparse as sp

from stablegap import _kernels
from stablegap.kinetics import JumpSampler
from stablegap.particles import enumerate_exclusion, enumerate_zero_range
from stablegap.rates import make_power_law


def _cases():
    rng = np.random.default_rng(0)
    sampler = JumpSampler.build(make_power_law(1.0))
    u, c = rng.random(2_000_000), rng.random(2_000_000)
    counts = rng.poisson(3.0, 400_000).astype(np.int64)
    disp = rng.integers(-1000, 1000, int(counts.sum())).astype(np.int64)
    phi = np.arange(1, 3001, dtype=float) ** 1.7
    f = rng.standard_normal(4001)
    ex = enumerate_exclusion(6, 6)
    zr = enumerate_zero_range(3, 7)
    pv_ex = np.concatenate(([0.0], make_power_law(1.0).values(ex.sites - 1)))
    pv_zr = np.concatenate(([0.0], make_power_law(1.0).values(zr.sites - 1)))
    g = np.arange(zr.ell + 1, dtype=float)
    return {
        "alias_lookup (2e6 draws)": lambda k: k.alias_lookup(u, c, sampler.prob, sampler.alias),
        "segment_sums (1.2e6 jumps)": lambda k: k.segment_sums(counts, disp),
        "subpoly_first_violation (N=3000)": lambda k: k.subpoly_first_violation(phi, 2.0 ** 0.7, 1e-12),
        "subpoly_sharp_constant (N=3000)": lambda k: k.subpoly_sharp_constant(phi),
        "dirichlet_profile (4001 sites)": lambda k: k.dirichlet_profile(f),
        "exclusion_transitions (1716 states)": lambda k: k.exclusion_transitions(ex.states, pv_ex, ex.binom),
        "zero_range_transitions (1716 states)": lambda k: k.zero_range_transitions(zr.states, g, pv_zr, zr.offsets),
    }


def _same(a, b) -> bool:
    if isinstance(a, tuple) and len(a) == 3 and isinstance(a[0], np.ndarray) and a[0].ndim == 1 and a[2].dtype == float:
        n = int(max(a[0].max(), a[1].max())) + 1
        ma = sp.csr_matrix((a[2], (a[0], a[1])), shape=(n, n))
        mb = sp.csr_matrix((b[2], (b[0], b[1])), shape=(n, n))
        return abs(ma - mb).max() <= 1e-12
    return np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), rtol=1e-12)


def _best(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = _kernels.available_backends()
    kernels = {b: _kernels.get_kernels(b) for b in backends}
    print(f"default backend: {_kernels.BACKEND}; available: {', '.join(backends)}")
    head = f"{'kernel':40s}" + "".join(f"{b:>12s}" for b in backends) + ("     speedup" if len(backends) > 1 else "")
    print(head)
    print("-" * len(head))
    for name, fn in _cases().items():
        outs = {b: fn(k) for b, k in kernels.items()}  # also compiles numba
        times = {b: _best(lambda k=k: fn(k), args.repeat) for b, k in kernels.items()}
        line = f"{name:40s}" + "".join(f"{times[b] * 1e3:10.2f}ms" for b in backends)
        if len(backends) > 1:
            agree = _same(outs["numba"], outs["numpy"])
            line += f"  {times['numpy'] / times['numba']:8.1f}x" + ("" if agree else "  MISMATCH")
        print(line)


if __name__ == "__main__":
    main()
