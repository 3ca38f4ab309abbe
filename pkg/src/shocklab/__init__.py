"""shocklab: exclusion-process shock simulator and limit-law numerics."""

__version__ = "0.1.0"

from .engine import FIRST, HOLE, SECOND, replica_seed
from .errors import (CouplingError, NonConvergenceError, ShockLabError,
                     WindowViolationError)
from .lattice import (ArrowStream, Configuration, Trajectory, couple_evolve,
                      density_profile, discrepancy_position, kmc_evolve,
                      partial_order_leq)
from .shock import (LabeledTracking, ShockParams, build_finite_omega,
                    build_reversed_step, build_shock_ic, build_step_ic,
                    build_variant_ics, c_of_m, compute_PH, second_class_X)
from .blocking import (BlockingParams, mu0_marginal, mu_marginal, sample_mu_Z,
                       v0_pmf, v0_pmf_table)
from .laws import (KernelSpec, QuadratureGrid, ContourSpec, airy_ai,
                   diff_law_cdf, f_gue, f_m1_mc, f_mp_contour, f_mp_residue,
                   fredholm_det, pmf_P, pmf_P_table)
from .stats import ks_distance, tv_distance, wilson_interval
from .experiments import ExperimentSpec, ReportRecord, run_experiment

__all__ = [name for name in dir() if not name.startswith("_")]
