"""Spectral gaps of random walks and particle systems with alpha-stable jumps."""

__version__ = "0.1.0"

from .errors import StableGapError  # noqa: E402
from .rates import (  # noqa: E402
    SubpolynomialFunction,
    TransitionRate,
    check_subpolynomial,
    lemma1_bound_check,
    make_lacunary,
    make_power_law,
    make_q_zero,
    make_table,
    nearest_neighbor,
    tail_constant,
)
from .spectrum import (  # noqa: E402
    Generator,
    build_walk_generator,
    gap_scaling_sweep,
    rayleigh_quotient,
    spectral_gap,
)
from .comparison import (  # noqa: E402
    certificate_kappa,
    compute_constants,
    dirichlet_profile,
    dirichlet_sum,
    select_b,
    verify_comparison,
)
from .particles import (  # noqa: E402
    build_exclusion_generator,
    build_zero_range_generator,
    enumerate_exclusion,
    enumerate_zero_range,
    indicator_interaction,
    linear_interaction,
    theorem3_check,
    verify_aldous,
    zero_range_measure,
)
from .kinetics import (  # noqa: E402
    decay_exponent_fit,
    evolve_grid,
    evolve_semigroup,
    mc_return_probability,
    psi_functional,
)

__all__ = [
    "StableGapError",
    "SubpolynomialFunction",
    "TransitionRate",
    "check_subpolynomial",
    "lemma1_bound_check",
    "make_lacunary",
    "make_power_law",
    "make_q_zero",
    "make_table",
    "nearest_neighbor",
    "tail_constant",
    "Generator",
    "build_walk_generator",
    "gap_scaling_sweep",
    "rayleigh_quotient",
    "spectral_gap",
    "certificate_kappa",
    "compute_constants",
    "dirichlet_profile",
    "dirichlet_sum",
    "select_b",
    "verify_comparison",
    "build_exclusion_generator",
    "build_zero_range_generator",
    "enumerate_exclusion",
    "enumerate_zero_range",
    "indicator_interaction",
    "linear_interaction",
    "theorem3_check",
    "verify_aldous",
    "zero_range_measure",
    "decay_exponent_fit",
    "evolve_grid",
    "evolve_semigroup",
    "mc_return_probability",
    "psi_functional",
]
