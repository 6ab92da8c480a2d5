"""Projection-free online convex optimization with linear optimization oracles."""

from .approx_set import FTAL, EpsBody, gauge_eps, golden_section, weak_loo
from .geometry import Body, EuclideanBall, LpBall, Polytope, cube, parse_body
from .harness import ExperimentConfig, fit_exponent, run, sweep
from .learners import FTL, ComparatorAdaptive, FreeGrad1D, MainAlgorithm, SleepingExperts, ftsl_new
from .oracles import CountingOracle, euclidean_project, project_scaled_polar, separate_polar

__version__ = "0.1.0"
