"""Energy-efficient precoding and STAR-RIS design under finite-blocklength coding."""

from .ao import AOConfig, Method, ProblemInstance, SolveTrace, optimize, run_baseline
from .channel import (Dimensions, LinkSet, RISMode, RISProfile, ScenarioConfig, Side,
                      compose_channel, default_scenario, sample_links, validate_ris)
from .fbl import FBLParams, PowerParams, qfunc_inv, rate_fbl, sum_weighted_ee
from .harness import RunParams, SweepAxis, SweepSpec, run_trial, sweep
from .qcqp import QcqpProblem, SolverOptions, maximize
from .surrogate import ExpansionPoint, build_coeffs, check_minorization

__version__ = "0.1.0"
