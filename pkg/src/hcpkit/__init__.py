"""Hierarchical coalescence processes: simulation, exact epoch laws, limits and ODE checks."""
from .analytic import (c0_estimate, epoch_interval_law, leftmost_laplace, log_sum_h, m_measure,
                       recursion_step_laplace, series_coefficients)
from .config import ConfigError, load_config
from .engine import final_states, run_epoch
from .experiment import run_experiment
from .limits import (LimitLawParams, exp_integral_E1, limit_interval_laplace,
                     limit_leftmost_laplace_case_i, limit_leftmost_laplace_case_ii)
from .measures import GridMeasure, delta, laplace_of_grid
from .model import (CaseTag, Configuration, EpochSchedule, HalfLine, RateSpec, Torus, Window,
                    classify_case, east_schedule, explicit_schedule, geometric_schedule,
                    linear_schedule, make_rate_spec, validate_schedule)
from .ode import evolve_epoch_ode, invariant_drift
from .report import compare_report
from .rng import CounterRNG
from .runner import EmpiricalSummary, empirical_laplace, run_hcp, run_leftmost
from .spp import (IntervalLawPreset, interval_law_preset, sample_ren_delta0, sample_ren_stationary,
                  sample_ren_z)

__version__ = "0.1.0"
