"""lodisc: adaptive linear-optics receiver simulation in a truncated Fock space.

Discriminates two orthogonal single-mode states with N beamsplitter taps,
feedforward displacements, and photon counting, and measures how the error
probability scales with N.
"""

from ._kernel import backend_name
from .config import RunConfig, load_config
from .engine import (BranchNode, Engine, ErrorEstimate, Trajectory, decide,
                     exact_error_probability, mc_error_probability,
                     one_click_statistics, photon_budget, run_step,
                     sample_trajectories, write_trajectory_log)
from .fock import (FockVector, StatePair, TailProfile, basis_pair, cat_pair,
                   certify_tail, inner_product, load_pair,
                   make_orthogonal_pair, normalize, pair_to_json,
                   qubit_plus_minus_pair)
from .operators import (KrausFamily, OperatorMatrix, assoc_laguerre,
                        beamsplitter_tap, displacement_matrix, step_kraus,
                        validate_pk_bound)
from .receiver import (DegeneracyReport, OrthoDecomposition,
                       PerturbationConfig, StepPlan, choose_beta, compute_X,
                       orthogonal_decomposition, perturbed_basis,
                       plan_final_displacement, refine_beta)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
