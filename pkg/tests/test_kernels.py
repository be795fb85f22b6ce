"""Every kernel flavour must agree with the numpy one on identical inputs."""

import subprocess
import sys
from types import SimpleNamespace

import numpy as np
import pytest
import scipy.sparse as sp

from stablegap import _kernels
from stablegap.particles import _binomial_table, _composition_offsets, enumerate_exclusion, enumerate_zero_range

# the uncompiled loop versions double as a reference when numba is absent
PYLOOP = SimpleNamespace(**{name: getattr(_kernels, f"_loop_{name}") for name in _kernels._NAMES})
FLAVOURS = [PYLOOP] + ([_kernels.get_kernels("numba")] if _kernels.HAVE_NUMBA else [])
REF = _kernels.get_kernels("numpy")


def _as_matrix(triple, size):
    r, c, v = triple
    m = sp.csr_matrix((v, (r, c)), shape=(size, size))
    m.sum_duplicates()
    return m.toarray()


@pytest.fixture(params=FLAVOURS, ids=lambda k: getattr(k, "name", "pyloop"))
def ker(request):
    return request.param


def test_alias_lookup(ker):
    rng = np.random.default_rng(0)
    prob = rng.random(37)
    alias = rng.integers(0, 37, 37)
    u, c = rng.random(5000), rng.random(5000)
    u[0] = 0.9999999999999999
    np.testing.assert_array_equal(ker.alias_lookup(u, c, prob, alias), REF.alias_lookup(u, c, prob, alias))


def test_segment_sums(ker):
    rng = np.random.default_rng(1)
    counts = rng.poisson(2.0, 300).astype(np.int64)
    disp = rng.integers(-50, 50, int(counts.sum())).astype(np.int64)
    np.testing.assert_array_equal(ker.segment_sums(counts, disp), REF.segment_sums(counts, disp))


def test_subpoly_scan(ker):
    x = np.arange(1, 200, dtype=float)
    for phi, k in ((x**2, 2.0), (x**2, 1.0), (2.0 ** np.minimum(x, 60), 4.0), (np.sqrt(x), 1.0)):
        assert tuple(ker.subpoly_first_violation(phi, k, 1e-12)) == tuple(REF.subpoly_first_violation(phi, k, 1e-12))
        assert ker.subpoly_sharp_constant(phi) == pytest.approx(REF.subpoly_sharp_constant(phi), rel=1e-15)


def test_dirichlet_profile(ker):
    f = np.random.default_rng(2).standard_normal(41)
    np.testing.assert_allclose(ker.dirichlet_profile(f), REF.dirichlet_profile(f), rtol=1e-13)


def test_exclusion_transitions(ker):
    E = enumerate_exclusion(3, 3)
    pv = np.concatenate(([0.0], np.arange(1, 7, dtype=float) ** -2.0))
    binom = _binomial_table(E.sites)
    a = _as_matrix(ker.exclusion_transitions(E.states, pv, binom), E.size)
    b = _as_matrix(REF.exclusion_transitions(E.states, pv, binom), E.size)
    np.testing.assert_allclose(a, b, rtol=1e-15)


def test_zero_range_transitions(ker):
    E = enumerate_zero_range(2, 4)
    pv = np.concatenate(([0.0], np.arange(1, 5, dtype=float) ** -1.5))
    g = np.array([0.0, 1.0, 1.5, 1.7, 3.0])
    off = _composition_offsets(E.sites, E.ell)
    a = _as_matrix(ker.zero_range_transitions(E.states, g, pv, off), E.size)
    b = _as_matrix(REF.zero_range_transitions(E.states, g, pv, off), E.size)
    np.testing.assert_allclose(a, b, rtol=1e-15)


def test_env_flag_forces_numpy():
    code = "from stablegap import _kernels; print(_kernels.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True,
                         env={"STABLEGAP_DISABLE_NUMBA": "1", "PATH": ""})
    assert out.stdout.strip() == "numpy"


def test_unknown_backend():
    with pytest.raises(ValueError):
        _kernels.get_kernels("fortran")
