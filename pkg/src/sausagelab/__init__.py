"""Monte Carlo laboratory for Wiener sausages and capacity in R^4."""

from .capacity import (BlockingResult, Estimate, HitOutcome, WosParams,
                       blocking_decomposition, cap_estimate,
                       cap_union_estimate, chi_estimate, decomp_residual,
                       eps_estimate, hit_probability_from_point, wos_hit)
from .experiments import (ConfigError, ExperimentConfig, ResultRow,
                          intersect_sweep, lln_sweep, read_results_csv,
                          run_experiment, write_results)
from .functionals import (FunctionalSample, d0_concentration, d0_functional,
                          d0_functional_batch, dx_delta_functional,
                          pair_functional_expectation,
                          r_pair_conditional_batch, r_pair_functional,
                          r_pair_functional_batch)
from .geometry import (Ball, BallUnion, ball4_capacity, ball4_volume,
                       ball_hit_prob, cond_hit_bound, dist_to_union,
                       green_g, gstar, shared_ball_union, sphere_sample)
from .paths import (ExitTimeTable, PathSkeleton, ShellRecord, build_sausage,
                    dyadic_shell_record, dyadic_shell_records,
                    gauss_step_path, sample_exit_time_unit_ball,
                    sample_skeleton, sausage_volume_estimate)
from .rng import RngStream, mix64

__version__ = "0.1.0"

__all__ = [
    "Ball", "BallUnion", "BlockingResult", "ConfigError", "Estimate",
    "ExitTimeTable", "ExperimentConfig", "FunctionalSample", "HitOutcome",
    "PathSkeleton", "ResultRow", "RngStream", "ShellRecord", "WosParams",
    "ball4_capacity", "ball4_volume", "ball_hit_prob",
    "blocking_decomposition", "build_sausage", "cap_estimate",
    "cap_union_estimate", "chi_estimate", "cond_hit_bound",
    "d0_concentration", "d0_functional", "d0_functional_batch",
    "decomp_residual", "dist_to_union", "dx_delta_functional",
    "dyadic_shell_record", "dyadic_shell_records", "eps_estimate",
    "gauss_step_path", "green_g", "gstar", "hit_probability_from_point",
    "intersect_sweep", "lln_sweep", "mix64", "pair_functional_expectation",
    "r_pair_conditional_batch", "r_pair_functional",
    "r_pair_functional_batch", "read_results_csv", "run_experiment",
    "sample_exit_time_unit_ball", "sample_skeleton",
    "sausage_volume_estimate", "shared_ball_union", "sphere_sample",
    "wos_hit", "write_results",
]
