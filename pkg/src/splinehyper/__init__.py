"""Spline-based hyperelastic energies fitted by alternating constrained least squares.

The energy is a sum of univariate cubic splines in the isochoric invariants
and the volume ratio, plus optional products of two splines that couple them.
Stress is linear in each factor, so fitting alternates between two convex
quadratic programs.
"""

from .calibration import (CalibrationOptions, CalibrationResult, Curve, EnsembleReport,
                          ExperimentDataset, LossSpec, alternate_optimize,
                          assemble_block_system, loss, r_squared, seed_ensemble)
from .constitutive import (AnsatzSpec, EnergyModel, EnergyPartials, assemble_model, energy,
                           energy_partials, model_from_dict, model_to_dict, piola_stress,
                           stress_sensitivities)
from .errors import ConfigError, DatasetError, DomainError, NumericalError
from .io import Config, load_config, load_dataset, save_dataset
from .kinematics import (DeformationProgram, DeformationState, default_programs,
                         invariant_ranges, shear_state, uniaxial_state)
from .qp import ClsProblem, ClsSolution, kkt_check, solve_cls
from .splines import (SplineFunction, SplineSpace, build_spline_space, constraint_rows,
                      eval_sensitivity, interp_to_control)

__version__ = "0.1.0"

__all__ = [
    "AnsatzSpec", "CalibrationOptions", "CalibrationResult", "ClsProblem", "ClsSolution",
    "Config", "ConfigError", "Curve", "DatasetError", "DeformationProgram",
    "DeformationState", "DomainError", "EnergyModel", "EnergyPartials", "EnsembleReport",
    "ExperimentDataset", "LossSpec", "NumericalError", "SplineFunction", "SplineSpace",
    "alternate_optimize", "assemble_block_system", "assemble_model", "build_spline_space",
    "constraint_rows", "default_programs", "energy", "energy_partials", "eval_sensitivity",
    "interp_to_control", "invariant_ranges", "kkt_check", "load_config", "load_dataset",
    "loss", "model_from_dict", "model_to_dict", "piola_stress", "r_squared",
    "save_dataset", "seed_ensemble", "shear_state", "solve_cls", "stress_sensitivities",
    "uniaxial_state",
]
