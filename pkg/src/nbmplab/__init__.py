"""Simulation laboratory for branching-selection particle systems and boundary-killed branching processes."""

__version__ = "0.1.0"

from .boundary import Boundary, conditional_law_oracle, solve_boundary_mc, survival_probability
from .coupling import check_dominance, gamma_event_holds, run_coupled
from .drivers import (
    BrownianWithDrift,
    CompoundPoissonDrift,
    ExplicitQuantile,
    OrnsteinUhlenbeck,
    PointMass,
    QsdDriftedBM,
    Uniform,
    coupled_transition,
    sample_initial,
    sample_transition,
)
from .gbmp import chi, empirical_G, many_to_one_check, run_gbmp
from .nbmp import empirical_cdf, min_trajectory, run_nbmp
from .rng import RngStream
from .stats import EmpiricalCDF, GeomParams, bound_formulas, ks_exp1, sup_norm_distance
